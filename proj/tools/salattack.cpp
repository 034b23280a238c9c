// salattack: dataset generation, toy training, attacks, plan sweeps and metrics.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "salattack/experiments.hpp"

namespace fs = std::filesystem;
using namespace salattack;

namespace {

std::string indexed(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu.%s", stem, i, ext);
  return buf;
}

struct DatasetArgs {
  std::size_t count = 32, height = 64, width = 48;
  std::uint64_t seed = 1;
  bool pairs = false;
  bool images = false;
  std::string out;
};

void run_dataset(const DatasetArgs& a) {
  const fs::path dir(a.out);
  fs::create_directories(dir);
  auto write = [&](const char* stem, std::size_t i, const Tensor& t, bool rgb) {
    save_sft1((dir / indexed(stem, i, "sft1")).string(), t);
    if (a.images) save_netpbm(dir / indexed(stem, i, rgb ? "ppm" : "pgm"), rgb ? rgb_image(t) : gray_image(t));
  };
  if (a.pairs) {
    const auto pairs = make_attack_pairs(a.count, a.height, a.width, a.seed);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      write("original", i, pairs[i].original.image, true);
      write("guide", i, pairs[i].guide.image, true);
      write("gt", i, pairs[i].original.saliency, false);
    }
  } else {
    const auto data = generate_synthetic_dataset(a.count, a.height, a.width, a.seed);
    for (std::size_t i = 0; i < data.size(); ++i) {
      write("image", i, data[i].image, true);
      write("saliency", i, data[i].saliency, false);
    }
  }
  std::cout << "wrote " << a.count << (a.pairs ? " pairs" : " samples") << " to " << dir.string() << '\n';
}

struct TrainArgs {
  std::string arch = "s";
  std::string data;
  std::size_t count = 64, height = 64, width = 48;
  std::uint64_t data_seed = 1;
  TrainOptions opt;
  std::string out;
};

std::vector<Sample> load_dataset_dir(const fs::path& dir) {
  std::vector<Sample> out;
  for (std::size_t i = 0;; ++i) {
    const auto img = dir / indexed("image", i, "sft1");
    if (!fs::exists(img)) break;
    out.push_back({load_sft1(img.string()), load_sft1((dir / indexed("saliency", i, "sft1")).string())});
  }
  if (out.empty()) throw std::runtime_error("no image_000.sft1 in " + dir.string());
  return out;
}

void run_train(const TrainArgs& a) {
  std::vector<Sample> data;
  std::size_t h = a.height, w = a.width;
  if (!a.data.empty()) {
    data = load_dataset_dir(a.data);
    h = data.front().image.height();
    w = data.front().image.width();
  } else {
    data = generate_synthetic_dataset(a.count, h, w, a.data_seed);
  }
  const ModelSpec spec = a.arch == "m" ? minisal_m(h, w) : minisal_s(h, w);
  auto r = train_toy(spec, data, a.opt, [](std::size_t epoch, double loss) {
    std::cout << "epoch " << epoch << " bce " << loss << '\n';
  });
  save_model(a.out, spec, r.weights);
  std::cout << "initial bce " << r.initial_loss << ", final bce " << r.final_loss() << "; saved " << a.out << '\n';
}

struct AttackArgs {
  std::string model, image, guide, out;
  std::string mode = "targeted", loss = "kl", norm_mode = "literal-minmax", selection = "uniform-stride";
  long layer = -1;
  std::size_t channels = 0;
  AttackConfig cfg;
  bool no_clip = false;
  bool fallback = false;
};

void run_attack_cmd(AttackArgs a) {
  const auto m = load_model(a.model);
  AttackConfig cfg = a.cfg;
  cfg.mode = attack_mode_from_string(a.mode);
  cfg.loss = loss_kind_from_string(a.loss);
  cfg.normalization = normalization_from_string(a.norm_mode);
  cfg.selection = selection_from_string(a.selection);
  cfg.clip_to_image_range = !a.no_clip;
  cfg.attacked_layer = a.layer < 0 ? m.spec.context_layer() : static_cast<std::size_t>(a.layer);
  if (cfg.attacked_layer >= m.spec.size())
    throw std::invalid_argument("--layer " + std::to_string(a.layer) + " out of range (model has " +
                                std::to_string(m.spec.size()) + " layers)");
  const std::size_t width = m.spec.layer_shapes()[cfg.attacked_layer][0];
  cfg.n_channels = a.channels ? a.channels : default_channel_count(width);
  if (cfg.selection == ChannelSelection::All) cfg.n_channels = width;

  const Tensor original = load_sft1(a.image);
  Tensor guide = original;
  if (cfg.mode == AttackMode::Targeted) {
    if (a.guide.empty()) throw std::invalid_argument("targeted attacks need --guide");
    guide = load_sft1(a.guide);
  }
  const AttackResult r =
      a.fallback ? attack_with_fallback(m.spec, m.weights, original, guide, cfg,
                                        [](const std::string& msg) { std::cerr << "note: " << msg << '\n'; })
      : cfg.mode == AttackMode::Targeted ? targeted_attack(m.spec, m.weights, original, guide, cfg)
                                         : nontargeted_attack(m.spec, m.weights, original, cfg);
  save_attack_result(a.out, r);
  const fs::path dir(a.out);
  save_netpbm(dir / "adversarial.ppm", rgb_image(r.adversarial));
  save_netpbm(dir / "perturbation.ppm", rgb_image(r.perturbation, true));
  save_netpbm(dir / "prediction.pgm", gray_image(predict(m.spec, m.weights, r.adversarial)));
  const auto st = perturbation_stats(r);
  std::cout << to_string(cfg.mode) << " attack on layer " << cfg.attacked_layer << " (" << cfg.n_channels
            << " channels): " << to_string(r.termination) << " after " << r.iterations_used
            << " iterations, d1 " << r.log.back().d1 << ", ssim " << st.ssim << ", l2 " << st.l2 << '\n';
}

void run_sweep(const std::string& plan_path, const std::string& output) {
  auto plan = load_plan(plan_path);
  if (!output.empty()) plan.output = output;
  if (plan.output.empty()) throw std::invalid_argument("plan has no output directory; pass --output");
  const auto rep = run_experiment(plan);
  write_outputs(plan.output, rep);
  for (const auto& n : rep.notes) std::cerr << "note: " << n << '\n';
  for (const auto& r : rep.rows)
    if (r.image == "summary")
      std::cout << r.metric << (r.layer >= 0 ? " @L" + std::to_string(r.layer) : "")
                << (r.loss.empty() ? "" : " [" + r.loss + "]") << " = " << r.value << '\n';
  std::cout << rep.rows.size() << " rows written to " << (fs::path(plan.output) / "report.csv").string() << '\n';
}

struct MetricsArgs {
  std::string pred, gt, original, adversarial;
  std::size_t fixations = 20;
  std::uint64_t seed = 1;
};

void run_metrics(const MetricsArgs& a) {
  std::vector<ReportRow> rows;
  auto add = [&](const std::string& metric, double v) { rows.push_back({"metrics", "", "", -1, "", 0, 0, metric, v}); };
  if (!a.pred.empty()) {
    if (a.gt.empty()) throw std::invalid_argument("--pred needs --gt");
    const Tensor pred = load_sft1(a.pred), gt = load_sft1(a.gt);
    const auto fix = metrics::pseudo_fixations(gt, a.fixations, a.seed);
    add("cc", metrics::cc(pred, gt));
    add("sim", metrics::sim(pred, gt));
    add("kl", metrics::kl(gt, pred));
    add("nss", metrics::nss(pred, fix));
    add("auc-borji", metrics::auc_borji(pred, fix, derive_seed(a.seed, 1)));
  }
  if (!a.original.empty()) {
    if (a.adversarial.empty()) throw std::invalid_argument("--original needs --adversarial");
    const auto st = perturbation_stats(load_sft1(a.original), load_sft1(a.adversarial));
    add("ssim", st.ssim);
    add("l2", st.l2);
    add("sparsity", st.sparsity);
    for (std::size_t c = 0; c < st.max_abs_per_channel.size(); ++c)
      add("max-abs-delta-c" + std::to_string(c), st.max_abs_per_channel[c]);
  }
  if (rows.empty()) throw std::invalid_argument("nothing to compute: pass --pred/--gt or --original/--adversarial");
  write_report(std::cout, rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse feature-space attacks on toy saliency models"};
  app.require_subcommand(1);

  DatasetArgs ds;
  auto* dataset = app.add_subcommand("dataset", "Generate synthetic blob images as SFT1 tensors");
  dataset->add_option("--count", ds.count, "Number of samples or pairs")->check(CLI::PositiveNumber);
  dataset->add_option("--height", ds.height)->check(CLI::Range(16, 4096));
  dataset->add_option("--width", ds.width)->check(CLI::Range(16, 4096));
  dataset->add_option("--seed", ds.seed);
  dataset->add_flag("--pairs", ds.pairs, "Write original/guide/gt attack pairs");
  dataset->add_flag("--images", ds.images, "Also write PPM/PGM previews");
  dataset->add_option("--out", ds.out, "Output directory")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a MiniSal model");
  train->add_option("--arch", tr.arch, "s or m")->check(CLI::IsMember({"s", "m"}));
  train->add_option("--data", tr.data, "Dataset directory from `dataset` (default: generate)");
  train->add_option("--count", tr.count, "Generated dataset size")->check(CLI::PositiveNumber);
  train->add_option("--height", tr.height)->check(CLI::Range(16, 4096));
  train->add_option("--width", tr.width)->check(CLI::Range(16, 4096));
  train->add_option("--data-seed", tr.data_seed);
  train->add_option("--epochs", tr.opt.epochs);
  train->add_option("--lr", tr.opt.learning_rate)->check(CLI::PositiveNumber);
  train->add_option("--seed", tr.opt.seed, "Weight initialization seed");
  train->add_option("--out", tr.out, "Model directory")->required();

  AttackArgs at;
  auto* attack = app.add_subcommand("attack", "Attack one image");
  attack->add_option("--model", at.model)->required()->check(CLI::ExistingPath);
  attack->add_option("--image", at.image)->required()->check(CLI::ExistingFile);
  attack->add_option("--guide", at.guide, "Guide image (targeted)")->check(CLI::ExistingFile);
  attack->add_option("--mode", at.mode)->check(CLI::IsMember({"targeted", "nontargeted"}));
  attack->add_option("--layer", at.layer, "Attacked layer index (default: context layer)");
  attack->add_option("--loss", at.loss)->check(CLI::IsMember({"kl", "cc", "nss", "l1", "mix"}));
  attack->add_option("--channels", at.channels, "Number of attacked channels");
  attack->add_option("--selection", at.selection)->check(CLI::IsMember({"uniform-stride", "all"}));
  attack->add_option("--alpha", at.cfg.alpha);
  attack->add_option("--gamma", at.cfg.gamma);
  attack->add_option("--epsilon", at.cfg.epsilon);
  attack->add_option("--tau1", at.cfg.tau1);
  attack->add_option("--tau2", at.cfg.tau2);
  attack->add_option("--max-iters", at.cfg.max_iterations);
  attack->add_option("--norm-mode", at.norm_mode)->check(CLI::IsMember({"literal-minmax", "signed"}));
  attack->add_option("--clip", at.cfg.clip_to_image_range, "Clip to [0, 1] after each step (true/false)");
  attack->add_option("--seed", at.cfg.seed);
  attack->add_flag("--fallback", at.fallback, "Rerun in signed mode if literal mode misses the threshold");
  attack->add_option("--out", at.out, "Output directory")->required();

  std::string plan_path, plan_output;
  auto* sweep = app.add_subcommand("sweep", "Run an experiment plan (JSON)");
  sweep->add_option("plan", plan_path)->required()->check(CLI::ExistingFile);
  sweep->add_option("--output", plan_output, "Override the plan's output directory");

  MetricsArgs me;
  auto* metrics_cmd = app.add_subcommand("metrics", "Score a saliency map or a perturbation");
  metrics_cmd->add_option("--pred", me.pred)->check(CLI::ExistingFile);
  metrics_cmd->add_option("--gt", me.gt)->check(CLI::ExistingFile);
  metrics_cmd->add_option("--fixations", me.fixations, "Pseudo-fixations drawn from --gt")->check(CLI::PositiveNumber);
  metrics_cmd->add_option("--seed", me.seed);
  metrics_cmd->add_option("--original", me.original)->check(CLI::ExistingFile);
  metrics_cmd->add_option("--adversarial", me.adversarial)->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*dataset) run_dataset(ds);
    else if (*train) run_train(tr);
    else if (*attack) run_attack_cmd(at);
    else if (*sweep) run_sweep(plan_path, plan_output);
    else if (*metrics_cmd) run_metrics(me);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
