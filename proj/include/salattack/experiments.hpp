#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "salattack/attack.hpp"
#include "salattack/dataset.hpp"
#include "salattack/report.hpp"
#include "salattack/train.hpp"

namespace salattack {

enum class ExperimentKind {
  Convergence,
  LayerSweep,
  RfPerceptibility,
  ChannelSweep,
  SpoilLayer,
  Transferability,
  Countervail,
  PermutationCheck
};

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Convergence: return "convergence";
    case ExperimentKind::LayerSweep: return "layer-sweep";
    case ExperimentKind::RfPerceptibility: return "rf-perceptibility";
    case ExperimentKind::ChannelSweep: return "channel-sweep";
    case ExperimentKind::SpoilLayer: return "spoil-layer";
    case ExperimentKind::Transferability: return "transferability";
    case ExperimentKind::Countervail: return "countervail";
    case ExperimentKind::PermutationCheck: return "permutation-check";
  }
  return "?";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::Convergence, ExperimentKind::LayerSweep, ExperimentKind::RfPerceptibility,
                 ExperimentKind::ChannelSweep, ExperimentKind::SpoilLayer, ExperimentKind::Transferability,
                 ExperimentKind::Countervail, ExperimentKind::PermutationCheck})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown experiment kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Plan

//! Either synthetic left/right blob pairs or SFT1 files. Ground-truth maps
//! are required by the experiments that score against ground truth.
struct ImageSet {
  std::size_t synthetic_pairs = 10;
  std::vector<std::string> originals;
  std::vector<std::string> guides;
  std::vector<std::string> ground_truth;

  bool from_files() const { return !originals.empty(); }
};

struct ExperimentPlan {
  ExperimentKind kind = ExperimentKind::LayerSweep;
  std::vector<std::string> models;
  ImageSet images;
  nlohmann::json attack = nlohmann::json::object();  // AttackConfig overrides
  std::vector<std::size_t> layers;                    // default: every attack point
  std::vector<std::size_t> channels;                  // channel-sweep N values
  std::vector<std::string> losses;                    // default depends on kind
  std::optional<std::size_t> layer;                   // default: context layer
  double channel_fraction = 0.25;                     // N = round(C * fraction) per layer
  bool fallback = true;                               // signed rerun when literal mode stalls
  bool write_images = true;
  std::string output;
  std::uint64_t seed = 1;

  //! Checks required parameters and that referenced files exist.
  void validate() const {
    if (models.empty()) throw std::invalid_argument("plan: no models listed");
    if (kind == ExperimentKind::Transferability && models.size() < 2)
      throw std::invalid_argument("plan: transferability needs at least two models");
    for (const auto& m : models)
      if (!std::filesystem::exists(m)) throw std::invalid_argument("plan: model '" + m + "' does not exist");
    if (images.from_files()) {
      for (const auto* list : {&images.originals, &images.guides, &images.ground_truth})
        for (const auto& f : *list)
          if (!std::filesystem::exists(f)) throw std::invalid_argument("plan: image '" + f + "' does not exist");
      if (!images.guides.empty() && images.guides.size() != images.originals.size())
        throw std::invalid_argument("plan: guides must pair one-to-one with originals");
      if (!images.ground_truth.empty() && images.ground_truth.size() != images.originals.size())
        throw std::invalid_argument("plan: ground_truth must pair one-to-one with originals");
      const bool need_guides = kind == ExperimentKind::Convergence || kind == ExperimentKind::LayerSweep ||
                               kind == ExperimentKind::RfPerceptibility || kind == ExperimentKind::ChannelSweep ||
                               kind == ExperimentKind::SpoilLayer;
      if (need_guides && images.guides.empty())
        throw std::invalid_argument(std::string("plan: ") + to_string(kind) + " needs guide images");
      const bool need_gt = kind == ExperimentKind::Transferability || kind == ExperimentKind::Countervail ||
                           kind == ExperimentKind::PermutationCheck;
      if (need_gt && images.ground_truth.empty())
        throw std::invalid_argument(std::string("plan: ") + to_string(kind) + " needs ground_truth maps");
    } else if (images.synthetic_pairs < 1) {
      throw std::invalid_argument("plan: synthetic_pairs must be >= 1");
    }
    if (kind == ExperimentKind::LayerSweep && !layers.empty() && layers.size() < 2)
      throw std::invalid_argument("plan: layer-sweep needs at least two layers");
    if (!(channel_fraction > 0 && channel_fraction <= 1))
      throw std::invalid_argument("plan: channel_fraction must be in (0, 1]");
    for (const auto& l : losses) (void)loss_kind_from_string(l);
  }
};

inline ExperimentPlan plan_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).lexically_normal().string();
  };
  auto resolve_all = [&](const nlohmann::json& arr) {
    std::vector<std::string> out;
    for (const auto& e : arr) out.push_back(resolve(e.get<std::string>()));
    return out;
  };
  static const std::set<std::string> known = {"kind",   "models",  "images",  "attack",        "layers",
                                              "channels", "losses", "layer",  "channel_fraction",
                                              "fallback", "write_images", "output", "seed"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw std::invalid_argument("plan: unknown field '" + key + "'");
  if (!j.contains("kind") || !j.contains("models"))
    throw std::invalid_argument("plan: 'kind' and 'models' are required");

  ExperimentPlan p;
  p.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
  p.models = resolve_all(j.at("models"));
  if (j.contains("images")) {
    const auto& im = j.at("images");
    if (im.contains("synthetic_pairs")) p.images.synthetic_pairs = im.at("synthetic_pairs").get<std::size_t>();
    if (im.contains("originals")) p.images.originals = resolve_all(im.at("originals"));
    if (im.contains("guides")) p.images.guides = resolve_all(im.at("guides"));
    if (im.contains("ground_truth")) p.images.ground_truth = resolve_all(im.at("ground_truth"));
  }
  if (j.contains("attack")) p.attack = j.at("attack");
  if (j.contains("layers")) p.layers = j.at("layers").get<std::vector<std::size_t>>();
  if (j.contains("channels")) p.channels = j.at("channels").get<std::vector<std::size_t>>();
  if (j.contains("losses")) p.losses = j.at("losses").get<std::vector<std::string>>();
  if (j.contains("layer")) p.layer = j.at("layer").get<std::size_t>();
  if (j.contains("channel_fraction")) p.channel_fraction = j.at("channel_fraction").get<double>();
  if (j.contains("fallback")) p.fallback = j.at("fallback").get<bool>();
  if (j.contains("write_images")) p.write_images = j.at("write_images").get<bool>();
  if (j.contains("output")) p.output = resolve(j.at("output").get<std::string>());
  if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

inline nlohmann::json plan_to_json(const ExperimentPlan& p) {
  nlohmann::json j;
  j["kind"] = to_string(p.kind);
  j["models"] = p.models;
  nlohmann::json im;
  if (p.images.from_files()) {
    im["originals"] = p.images.originals;
    if (!p.images.guides.empty()) im["guides"] = p.images.guides;
    if (!p.images.ground_truth.empty()) im["ground_truth"] = p.images.ground_truth;
  } else {
    im["synthetic_pairs"] = p.images.synthetic_pairs;
  }
  j["images"] = im;
  j["attack"] = p.attack;
  if (!p.layers.empty()) j["layers"] = p.layers;
  if (!p.channels.empty()) j["channels"] = p.channels;
  if (!p.losses.empty()) j["losses"] = p.losses;
  if (p.layer) j["layer"] = *p.layer;
  j["channel_fraction"] = p.channel_fraction;
  j["fallback"] = p.fallback;
  j["write_images"] = p.write_images;
  j["output"] = p.output;
  j["seed"] = p.seed;
  return j;
}

inline ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open plan " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("plan " + path.string() + ": " + e.what());
  }
  return plan_from_json(j, path.parent_path());
}

//! Applies JSON overrides (field names as on the command line, with
//! underscores) on top of a base configuration.
inline AttackConfig apply_overrides(AttackConfig cfg, const nlohmann::json& o) {
  for (const auto& [key, v] : o.items()) {
    if (key == "mode") cfg.mode = attack_mode_from_string(v.get<std::string>());
    else if (key == "layer") cfg.attacked_layer = v.get<std::size_t>();
    else if (key == "loss") cfg.loss = loss_kind_from_string(v.get<std::string>());
    else if (key == "channels" || key == "n_channels") cfg.n_channels = v.get<std::size_t>();
    else if (key == "selection") cfg.selection = selection_from_string(v.get<std::string>());
    else if (key == "alpha") cfg.alpha = v.get<double>();
    else if (key == "gamma") cfg.gamma = v.get<double>();
    else if (key == "epsilon") cfg.epsilon = v.get<double>();
    else if (key == "tau1") cfg.tau1 = v.get<double>();
    else if (key == "tau2") cfg.tau2 = v.get<double>();
    else if (key == "max_iters" || key == "max_iterations") cfg.max_iterations = v.get<std::size_t>();
    else if (key == "norm_mode" || key == "normalization") cfg.normalization = normalization_from_string(v.get<std::string>());
    else if (key == "clip") cfg.clip_to_image_range = v.get<bool>();
    else if (key == "termination_metric") {
      const auto s = v.get<std::string>();
      if (s == "cc") cfg.termination_metric = TerminationMetric::CC;
      else if (s == "sim") cfg.termination_metric = TerminationMetric::SIM;
      else throw std::invalid_argument("unknown termination metric '" + s + "'");
    } else if (key == "mix") {
      cfg.mix = MixWeights{v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>(), v.at(3).get<double>()};
    } else {
      throw std::invalid_argument("attack override: unknown field '" + key + "'");
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Models and images

struct NamedModel {
  std::string name;  // directory stem, unique within a plan
  LoadedModel model;
};

inline std::string model_name(const std::filesystem::path& path) {
  auto p = path;
  if (p.filename() == "model.json") p = p.parent_path();
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

inline std::vector<NamedModel> load_models(const std::vector<std::string>& paths) {
  std::vector<NamedModel> out;
  for (const auto& p : paths) out.push_back({model_name(p), load_model(p)});
  return out;
}

struct PlanImage {
  std::string id;
  Tensor original;
  Tensor guide;         // empty when the plan has none
  Tensor ground_truth;  // empty when the plan has none
};

inline std::vector<PlanImage> plan_images(const ExperimentPlan& plan, const Shape& input_shape) {
  std::vector<PlanImage> out;
  if (plan.images.from_files()) {
    for (std::size_t i = 0; i < plan.images.originals.size(); ++i) {
      PlanImage im{std::filesystem::path(plan.images.originals[i]).stem().string(),
                   load_sft1(plan.images.originals[i]), {}, {}};
      if (!plan.images.guides.empty()) im.guide = load_sft1(plan.images.guides[i]);
      if (!plan.images.ground_truth.empty()) im.ground_truth = load_sft1(plan.images.ground_truth[i]);
      out.push_back(std::move(im));
    }
  } else {
    const auto pairs = make_attack_pairs(plan.images.synthetic_pairs, input_shape.at(1), input_shape.at(2),
                                         derive_seed(plan.seed, 0xa77ac4));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      char id[16];
      std::snprintf(id, sizeof id, "pair%02zu", i);
      out.push_back({id, pairs[i].original.image, pairs[i].guide.image, pairs[i].original.saliency});
    }
  }
  for (const auto& im : out)
    if (im.original.shape() != input_shape || (!im.guide.empty() && im.guide.shape() != input_shape))
      throw std::invalid_argument("plan: image '" + im.id + "' has shape " + shape_str(im.original.shape()) +
                                  ", model expects " + shape_str(input_shape));
  return out;
}

//! Loads the model at `dir`, or trains it on a fresh synthetic dataset and
//! saves it there.
inline LoadedModel load_or_train(const std::filesystem::path& dir, const ModelSpec& spec, const TrainOptions& opt,
                                 std::size_t dataset_size, std::uint64_t dataset_seed,
                                 const std::function<void(std::size_t, double)>& on_epoch = {}) {
  if (std::filesystem::exists(dir / "model.json")) return load_model(dir);
  const auto data = generate_synthetic_dataset(dataset_size, spec.input_shape[1], spec.input_shape[2], dataset_seed);
  auto r = train_toy(spec, data, opt, on_epoch);
  save_model(dir, spec, r.weights);
  return {spec, std::move(r.weights)};
}

// ---------------------------------------------------------------------------
// Reports

struct ExperimentReport {
  std::vector<ReportRow> rows;
  std::vector<std::pair<std::string, Image8>> images;  // file name -> image
  std::vector<std::string> notes;                      // fallbacks and other events

  //! Value of the first row matching the given fields (empty string matches any).
  std::optional<double> find(const std::string& metric, const std::string& image = "", long layer = -2,
                             const std::string& model = "") const {
    for (const auto& r : rows)
      if (r.metric == metric && (image.empty() || r.image == image) && (layer == -2 || r.layer == layer) &&
          (model.empty() || r.model == model))
        return r.value;
    return std::nullopt;
  }
};

//! Writes report.csv, notes.txt and every image into dir.
inline void write_outputs(const std::filesystem::path& dir, const ExperimentReport& report) {
  std::filesystem::create_directories(dir);
  save_report(dir / "report.csv", report.rows);
  std::ofstream notes(dir / "notes.txt", std::ios::binary);
  for (const auto& n : report.notes) notes << n << '\n';
  for (const auto& [name, img] : report.images) save_netpbm(dir / name, img);
}

namespace detail {

struct RowContext {
  std::string experiment, model, image;
  long layer = -1;
  std::string loss;
  long n = 0;
  long iterations = 0;
};

inline ReportRow row(const RowContext& c, const std::string& metric, double value) {
  return {c.experiment, c.model, c.image, c.layer, c.loss, c.n, c.iterations, metric, value};
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline std::size_t channels_for(const ModelSpec& spec, std::size_t layer, double fraction) {
  const auto c = spec.layer_shapes()[layer][0];
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(static_cast<double>(c) * fraction)), 1, c);
}

// Runs one attack; with plan.fallback, a literal-mode run that misses its
// threshold is repeated in signed mode and the event is noted.
inline AttackResult run_cell(const ExperimentPlan& plan, const LoadedModel& m, const Tensor& original,
                             const Tensor& guide, const AttackConfig& cfg, ExperimentReport& report,
                             const std::string& cell) {
  if (!plan.fallback) {
    return cfg.mode == AttackMode::Targeted ? targeted_attack(m.spec, m.weights, original, guide, cfg)
                                            : nontargeted_attack(m.spec, m.weights, original, cfg);
  }
  return attack_with_fallback(m.spec, m.weights, original, guide, cfg,
                              [&](const std::string& msg) { report.notes.push_back(cell + ": " + msg); });
}

inline AttackConfig base_config(const ExperimentPlan& plan) { return apply_overrides(AttackConfig{}, plan.attack); }

inline std::string layer_tag(std::size_t layer) { return "L" + std::to_string(layer); }

// Natural (similarity-oriented where applicable) reading of a distance value.
inline double natural_loss_value(LossKind kind, double distance, double nss_self) {
  switch (kind) {
    case LossKind::CC: return 1.0 - distance;
    case LossKind::NSS: return nss_self - distance;
    default: return distance;
  }
}

inline Tensor nearest_resize(const Tensor& map, std::size_t h, std::size_t w) {
  Tensor out({map.channels(), h, w});
  for (std::size_t c = 0; c < map.channels(); ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.at(c, y, x) = map.at(c, y * map.height() / h, x * map.width() / w);
  return out;
}

inline Tensor channel_mean(const Tensor& t) {
  Tensor out({1, t.height(), t.width()});
  for (std::size_t c = 0; c < t.channels(); ++c) {
    auto src = t.channel(c);
    for (std::size_t i = 0; i < src.size(); ++i) out[i] += src[i] / static_cast<double>(t.channels());
  }
  return out;
}

inline metrics::FixationSet fixations_for(const Tensor& map, std::uint64_t seed, std::size_t count = 20) {
  return metrics::pseudo_fixations(map, count, seed);
}

inline void add_attack_images(ExperimentReport& report, const ExperimentPlan& plan, const std::string& stem,
                              const AttackResult& r, const Tensor& prediction) {
  if (!plan.write_images) return;
  report.images.emplace_back(stem + "_adv.ppm", rgb_image(r.adversarial));
  report.images.emplace_back(stem + "_delta.ppm", rgb_image(r.perturbation, true));
  report.images.emplace_back(stem + "_pred.pgm", gray_image(prediction));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Drivers

//! Loss curves for each loss in both modes, without early termination.
inline ExperimentReport run_convergence(const ExperimentPlan& plan) {
  if (plan.kind != ExperimentKind::Convergence) throw std::invalid_argument("run_convergence: wrong plan kind");
  plan.validate();
  const auto models = load_models(plan.models);
  const auto& m = models.front().model;
  const auto images = plan_images(plan, m.spec.input_shape);
  const std::size_t layer = plan.layer.value_or(m.spec.context_layer());
  std::vector<std::string> loss_names = plan.losses.empty() ? std::vector<std::string>{"kl", "cc", "nss", "l1"}
                                                            : plan.losses;
  ExperimentReport rep;
  std::size_t cell = 0;
  for (const auto& im : images) {
    for (const auto& ln : loss_names) {
      for (auto mode : {AttackMode::Targeted, AttackMode::Nontargeted}) {
        AttackConfig cfg = detail::base_config(plan);
        cfg.mode = mode;
        cfg.loss = loss_kind_from_string(ln);
        cfg.attacked_layer = layer;
        if (!plan.attack.contains("channels")) cfg.n_channels = detail::channels_for(m.spec, layer, plan.channel_fraction);
        cfg.tau1 = std::numeric_limits<double>::infinity();
        cfg.tau2 = -std::numeric_limits<double>::infinity();
        cfg.seed = derive_seed(plan.seed, cell++);
        const Tensor& reference = mode == AttackMode::Targeted ? im.guide : im.original;
        const AttackResult r = mode == AttackMode::Targeted
                                   ? targeted_attack(m.spec, m.weights, im.original, im.guide, cfg)
                                   : nontargeted_attack(m.spec, m.weights, im.original, cfg);
        double nss_self = 0;
        if (cfg.loss == LossKind::NSS) {
          const auto ref = gather_channels(forward_trace(m.spec, m.weights, reference, layer)[layer], r.channels);
          nss_self = losses::nss_loss(ref, ref).value;
        }
        detail::RowContext ctx{to_string(plan.kind), models.front().name, im.id, static_cast<long>(layer), ln,
                               static_cast<long>(cfg.n_channels), 0};
        const std::string prefix = std::string(to_string(mode)) + "-";
        std::vector<double> curve;
        for (const auto& rec : r.log) {
          ctx.iterations = static_cast<long>(rec.iteration);
          curve.push_back(detail::natural_loss_value(cfg.loss, rec.loss, nss_self));
          rep.rows.push_back(detail::row(ctx, prefix + "loss", curve.back()));
        }
        ctx.iterations = static_cast<long>(r.iterations_used);
        const double l0 = curve.front(), l20 = curve[std::min<std::size_t>(20, curve.size() - 1)], lx = curve.back();
        rep.rows.push_back(detail::row(ctx, prefix + "final-loss", lx));
        rep.rows.push_back(detail::row(ctx, prefix + "rapid-start",
                                       std::abs(l20 - l0) >= 0.5 * std::abs(lx - l0) ? 1.0 : 0.0));
      }
    }
  }
  return rep;
}

namespace detail {

struct LayerCell {
  std::string image;
  std::size_t layer = 0;
  std::size_t n = 0;
  AttackResult result;
  Tensor prediction;
  double cc_guide = 0;
};

// Targeted attacks of every (image, layer) cell, scored against the guide's
// prediction. Shared by the layer sweep and the receptive-field study.
inline ExperimentReport layer_table(const ExperimentPlan& plan, std::vector<std::size_t>* layers_out,
                                    std::vector<std::vector<LayerCell>>* cells_out) {
  plan.validate();
  const auto models = load_models(plan.models);
  const auto& m = models.front().model;
  const auto images = plan_images(plan, m.spec.input_shape);
  const auto layers = plan.layers.empty() ? m.spec.attack_points() : plan.layers;
  for (auto l : layers)
    if (l >= m.spec.size()) throw std::invalid_argument("plan: layer " + std::to_string(l) + " out of range");
  const auto guide_preds = [&] {
    std::vector<Tensor> v;
    for (const auto& im : images) v.push_back(predict(m.spec, m.weights, im.guide));
    return v;
  }();
  const AttackConfig base = base_config(plan);
  const LossKind loss = plan.losses.empty() ? base.loss : loss_kind_from_string(plan.losses.front());

  ExperimentReport rep;
  std::vector<std::vector<LayerCell>> cells(layers.size());
  std::size_t cell_index = 0;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const std::size_t layer = layers[li];
    for (std::size_t k = 0; k < images.size(); ++k) {
      const auto& im = images[k];
      AttackConfig cfg = base;
      cfg.mode = AttackMode::Targeted;
      cfg.loss = loss;
      cfg.attacked_layer = layer;
      cfg.n_channels = plan.attack.contains("channels") ? base.n_channels
                                                        : channels_for(m.spec, layer, plan.channel_fraction);
      cfg.seed = derive_seed(plan.seed, cell_index++);
      const std::string tag = im.id + "_" + layer_tag(layer);
      LayerCell c{im.id, layer, cfg.n_channels, run_cell(plan, m, im.original, im.guide, cfg, rep, tag), {}, 0};
      c.prediction = predict(m.spec, m.weights, c.result.adversarial);
      c.cc_guide = metrics::cc(c.prediction, guide_preds[k]);

      // Fixation-based scores against the guide prediction; sAUC negatives
      // come from the other images' guide fixations.
      const auto fix = fixations_for(guide_preds[k], derive_seed(plan.seed, 1000 + k));
      std::vector<metrics::Fixation> pool;
      for (std::size_t o = 0; o < images.size(); ++o)
        if (o != k) {
          const auto f = fixations_for(guide_preds[o], derive_seed(plan.seed, 1000 + o));
          pool.insert(pool.end(), f.points.begin(), f.points.end());
        }
      const auto stats = perturbation_stats(c.result);
      RowContext ctx{to_string(plan.kind), models.front().name, im.id, static_cast<long>(layer), to_string(loss),
                     static_cast<long>(cfg.n_channels), static_cast<long>(c.result.iterations_used)};
      const auto rf = receptive_field(m.spec, layer);
      rep.rows.push_back(row(ctx, "depth", static_cast<double>(li)));
      rep.rows.push_back(row(ctx, "receptive-field", static_cast<double>(rf.size)));
      rep.rows.push_back(row(ctx, "cc-guide", c.cc_guide));
      rep.rows.push_back(row(ctx, "sim-guide", metrics::sim(c.prediction, guide_preds[k])));
      rep.rows.push_back(row(ctx, "auc-borji-guide", metrics::auc_borji(c.prediction, fix, derive_seed(plan.seed, 2000 + k))));
      if (!pool.empty())
        rep.rows.push_back(row(ctx, "sauc-guide", metrics::sauc(c.prediction, fix, pool, derive_seed(plan.seed, 3000 + k))));
      rep.rows.push_back(row(ctx, "ssim", stats.ssim));
      rep.rows.push_back(row(ctx, "l2", stats.l2));
      rep.rows.push_back(row(ctx, "sparsity", stats.sparsity));
      rep.rows.push_back(row(ctx, "threshold-met", c.result.termination == Termination::ThresholdMet ? 1.0 : 0.0));
      rep.rows.push_back(row(ctx, "signed-normalization",
                             c.result.normalization == NormalizationMode::Signed ? 1.0 : 0.0));
      add_attack_images(rep, plan, tag, c.result, c.prediction);
      cells[li].push_back(std::move(c));
    }
  }
  if (layers_out) *layers_out = layers;
  if (cells_out) *cells_out = std::move(cells);
  return rep;
}

}  // namespace detail

//! Targeted attack at every attack point; summary rows hold per-layer means
//! and the depth/CC rank correlation.
inline ExperimentReport run_layer_sweep(const ExperimentPlan& plan) {
  if (plan.kind != ExperimentKind::LayerSweep) throw std::invalid_argument("run_layer_sweep: wrong plan kind");
  std::vector<std::size_t> layers;
  std::vector<std::vector<detail::LayerCell>> cells;
  auto rep = detail::layer_table(plan, &layers, &cells);
  if (layers.size() < 2) throw std::invalid_argument("layer-sweep: need at least two layers");
  const std::string model = model_name(plan.models.front());
  std::vector<double> depth, mean_cc;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    std::vector<double> v;
    for (const auto& c : cells[li]) v.push_back(c.cc_guide);
    depth.push_back(static_cast<double>(li));
    mean_cc.push_back(detail::mean(v));
    rep.rows.push_back({to_string(plan.kind), model, "summary", static_cast<long>(layers[li]), "", 0, 0,
                        "mean-cc-guide", mean_cc.back()});
  }
  rep.rows.push_back({to_string(plan.kind), model, "summary", -1, "", 0, 0, "spearman-depth-cc",
                      metrics::spearman(depth, mean_cc)});
  rep.rows.push_back({to_string(plan.kind), model, "summary", -1, "", 0, 0, "shallowest-below-deepest",
                      mean_cc.front() < mean_cc.back() ? 1.0 : 0.0});
  return rep;
}

//! Receptive field against perceptibility (SSIM, L2) per attacked layer.
inline ExperimentReport run_rf_perceptibility(const ExperimentPlan& plan) {
  if (plan.kind != ExperimentKind::RfPerceptibility)
    throw std::invalid_argument("run_rf_perceptibility: wrong plan kind");
  std::vector<std::size_t> layers;
  std::vector<std::vector<detail::LayerCell>> cells;
  auto rep = detail::layer_table(plan, &layers, &cells);
  const auto m = load_model(plan.models.front());
  const std::string model = model_name(plan.models.front());
  std::vector<double> rf, ssim, l2;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    std::vector<double> s, n;
    for (const auto& c : cells[li]) {
      const auto st = perturbation_stats(c.result);
      s.push_back(st.ssim);
      n.push_back(st.l2);
    }
    rf.push_back(static_cast<double>(receptive_field(m.spec, layers[li]).size));
    ssim.push_back(detail::mean(s));
    l2.push_back(detail::mean(n));
    for (auto [metric, v] : {std::pair{"mean-ssim", ssim.back()}, {"mean-l2", l2.back()}, {"receptive-field", rf.back()}})
      rep.rows.push_back({to_string(plan.kind), model, "summary", static_cast<long>(layers[li]), "", 0, 0, metric, v});
  }
  const std::size_t context = m.spec.context_layer();
  const auto ctx_it = std::find(layers.begin(), layers.end(), context);
  double context_is_max = 0;
  if (ctx_it != layers.end()) {
    const double c = ssim[static_cast<std::size_t>(ctx_it - layers.begin())];
    context_is_max = std::all_of(ssim.begin(), ssim.end(), [&](double v) { return v <= c; }) ? 1.0 : 0.0;
  }
  rep.rows.push_back({to_string(plan.kind), model, "summary", -1, "", 0, 0, "spearman-rf-ssim", metrics::spearman(rf, ssim)});
  rep.rows.push_back({to_string(plan.kind), model, "summary", -1, "", 0, 0, "spearman-rf-l2", metrics::spearman(rf, l2)});
  rep.rows.push_back({to_string(plan.kind), model, "summary", static_cast<long>(context), "", 0, 0,
                      "context-max-ssim", context_is_max});
  return rep;
}

//! Targeted attacks at one layer with a growing number of channels.
inline ExperimentReport run_channel_sweep(const ExperimentPlan& plan) {
  if (plan.kind != ExperimentKind::ChannelSweep) throw std::invalid_argument("run_channel_sweep: wrong plan kind");
  plan.validate();
  const auto models = load_models(plan.models);
  const auto& m = models.front().model;
  const auto images = plan_images(plan, m.spec.input_shape);
  const std::size_t layer = plan.layer.value_or(m.spec.context_layer());
  const std::size_t total = m.spec.layer_shapes()[layer][0];
  std::vector<std::size_t> ns = plan.channels;
  if (ns.empty()) {
    for (std::size_t n = 1; n < total; n *= 2) ns.push_back(n);
    ns.push_back(total);
  }
  for (auto n : ns)
    if (n < 1 || n > total) throw std::invalid_argument("channel-sweep: N=" + std::to_string(n) + " out of range");
  const AttackConfig base = detail::base_config(plan);
  const LossKind loss = plan.losses.empty() ? base.loss : loss_kind_from_string(plan.losses.front());

  ExperimentReport rep;
  std::size_t cell = 0;
  std::vector<double> means;
  for (auto n : ns) {
    std::vector<double> ccs;
    for (std::size_t k = 0; k < images.size(); ++k) {
      const auto& im = images[k];
      AttackConfig cfg = base;
      cfg.mode = AttackMode::Targeted;
      cfg.loss = loss;
      cfg.attacked_layer = layer;
      cfg.n_channels = n;
      cfg.selection = n == total ? ChannelSelection::All : ChannelSelection::UniformStride;
      cfg.seed = derive_seed(plan.seed, cell++);
      const std::string tag = im.id + "_N" + std::to_string(n);
      const auto r = detail::run_cell(plan, m, im.original, im.guide, cfg, rep, tag);
      const auto pred = predict(m.spec, m.weights, r.adversarial);
      ccs.push_back(metrics::cc(pred, predict(m.spec, m.weights, im.guide)));
      detail::RowContext ctx{to_string(plan.kind), models.front().name, im.id, static_cast<long>(layer),
                             to_string(loss), static_cast<long>(n), static_cast<long>(r.iterations_used)};
      rep.rows.push_back(detail::row(ctx, "cc-guide", ccs.back()));
      rep.rows.push_back(detail::row(ctx, "ssim", perturbation_stats(r).ssim));
      detail::add_attack_images(rep, plan, tag, r, pred);
    }
    means.push_back(detail::mean(ccs));
    rep.rows.push_back({to_string(plan.kind), models.front().name, "summary", static_cast<long>(layer),
                        to_string(loss), static_cast<long>(n), 0, "mean-cc-guide", means.back()});
  }
  // Ratio of the N = total/4 entry (if swept) to the all-channels entry.
  const auto quarter = std::find(ns.begin(), ns.end(), std::max<std::size_t>(1, total / 4));
  if (quarter != ns.end() && ns.back() == total && means.back() != 0)
    rep.rows.push_back({to_string(plan.kind), models.front().name, "summary", static_cast<long>(layer),
                        to_string(loss), static_cast<long>(*quarter), 0, "quarter-over-all",
                        means[static_cast<std::size_t>(quarter - ns.begin())] / means.back()});
  double worst_drop = 0;
  for (std::size_t i = 1; i < means.size(); ++i) worst_drop = std::max(worst_drop, means[i - 1] - means[i]);
  rep.rows.push_back({to_string(plan.kind), models.front().name, "summary", static_cast<long>(layer),
                      to_string(loss), 0, 0, "max-decrease-in-n", worst_drop});
  return rep;
}

//! Per-layer agreement between clean and adversarial activations after a
//! targeted attack; the spoil point is the first layer with CC below 0.5.
inline ExperimentReport run_spoil_layer(const ExperimentPlan& plan) {
  if (plan.kind != ExperimentKind::SpoilLayer) throw std::invalid_argument("run_spoil_layer: wrong plan kind");
  plan.validate();
  const auto models = load_models(plan.models);
  const auto& m = models.front().model;
  const auto images = plan_images(plan, m.spec.input_shape);
  const std::size_t layer = plan.layer.value_or(m.spec.context_layer());
  const auto shapes = m.spec.layer_shapes();
  const auto ctx_shape = shapes[m.spec.context_layer()];
  const std::size_t common_h = ctx_shape[1], common_w = ctx_shape[2];
  const AttackConfig base = detail::base_config(plan);

  ExperimentReport rep;
  for (std::size_t k = 0; k < images.size(); ++k) {
    const auto& im = images[k];
    AttackConfig cfg = base;
    cfg.mode = AttackMode::Targeted;
    cfg.attacked_layer = layer;
    if (!plan.attack.contains("channels")) cfg.n_channels = detail::channels_for(m.spec, layer, plan.channel_fraction);
    cfg.seed = derive_seed(plan.seed, k);
    const auto r = detail::run_cell(plan, m, im.original, im.guide, cfg, rep, im.id);
    const auto clean = forward_trace(m.spec, m.weights, im.original);
    const auto adv = forward_trace(m.spec, m.weights, r.adversarial);
    long spoil = -1;
    for (std::size_t i = 0; i < m.spec.size(); ++i) {
      const auto a = detail::nearest_resize(detail::channel_mean(clean[i]), common_h, common_w);
      const auto b = detail::nearest_resize(detail::channel_mean(adv[i]), common_h, common_w);
      const double cc = metrics::cc(a, b);
      const double ss = metrics::ssim(a, b, std::min<std::size_t>(8, std::min(common_h, common_w)), 4);
      const bool same = a == b;  // exact equality scores 1 even for flat maps
      detail::RowContext ctx{to_string(plan.kind), models.front().name, im.id, static_cast<long>(i),
                             to_string(cfg.loss), static_cast<long>(cfg.n_channels),
                             static_cast<long>(r.iterations_used)};
      rep.rows.push_back(detail::row(ctx, "layer-cc", same ? 1.0 : cc));
      rep.rows.push_back(detail::row(ctx, "layer-ssim", same ? 1.0 : ss));
      if (spoil < 0 && !same && cc < 0.5) spoil = static_cast<long>(i);
    }
    rep.rows.push_back({to_string(plan.kind), models.front().name, im.id, static_cast<long>(layer), to_string(cfg.loss),
                        static_cast<long>(cfg.n_channels), static_cast<long>(r.iterations_used), "spoil-point",
                        static_cast<double>(spoil)});
  }
  return rep;
}

namespace detail {

inline Tensor apply_perturbation(const Tensor& image, const Tensor& delta) {
  Tensor out = image + delta;
  out.clamp(0.0, 1.0);
  return out;
}

// CC(F(I), GT) - CC(F(x), GT).
inline double cc_drop(const LoadedModel& m, const Tensor& clean, const Tensor& x, const Tensor& gt) {
  return metrics::cc(predict(m.spec, m.weights, clean), gt) - metrics::cc(predict(m.spec, m.weights, x), gt);
}

inline void require_ground_truth(const std::vector<PlanImage>& images, const char* who) {
  for (const auto& im : images)
    if (im.ground_truth.empty()) throw std::invalid_argument(std::string(who) + ": image '" + im.id + "' has no ground truth");
}

}  // namespace detail

//! Nontargeted context-layer perturbations from each source model applied to
//! every target model; entries are CC-to-ground-truth drops.
inline ExperimentReport run_transferability(const ExperimentPlan& plan) {
  if (plan.kind != ExperimentKind::Transferability) throw std::invalid_argument("run_transferability: wrong plan kind");
  plan.validate();
  const auto models = load_models(plan.models);
  for (const auto& nm : models)
    if (nm.model.spec.input_shape != models.front().model.spec.input_shape)
      throw std::invalid_argument("transferability: model '" + nm.name + "' expects a different image shape");
  const auto images = plan_images(plan, models.front().model.spec.input_shape);
  detail::require_ground_truth(images, "transferability");
  const AttackConfig base = detail::base_config(plan);

  ExperimentReport rep;
  std::size_t cell = 0;
  for (const auto& src : models) {
    const std::size_t layer = plan.layer.value_or(src.model.spec.context_layer());
    std::vector<std::vector<double>> drops(models.size());
    for (const auto& im : images) {
      AttackConfig cfg = base;
      cfg.mode = AttackMode::Nontargeted;
      cfg.attacked_layer = layer;
      if (!plan.attack.contains("channels"))
        cfg.n_channels = detail::channels_for(src.model.spec, layer, plan.channel_fraction);
      cfg.seed = derive_seed(plan.seed, cell++);
      const auto r = detail::run_cell(plan, src.model, im.original, im.original, cfg, rep, src.name + "/" + im.id);
      for (std::size_t t = 0; t < models.size(); ++t) {
        const auto& tgt = models[t];
        drops[t].push_back(detail::cc_drop(tgt.model, im.original, r.adversarial, im.ground_truth));
        detail::RowContext ctx{to_string(plan.kind), src.name, im.id, static_cast<long>(layer), to_string(cfg.loss),
                               static_cast<long>(cfg.n_channels), static_cast<long>(r.iterations_used)};
        rep.rows.push_back(detail::row(ctx, "drop@" + tgt.name, drops[t].back()));
        rep.rows.push_back(detail::row(ctx, "zero-drop@" + tgt.name,
                                       detail::cc_drop(tgt.model, im.original, im.original, im.ground_truth)));
      }
    }
    for (std::size_t t = 0; t < models.size(); ++t)
      rep.rows.push_back({to_string(plan.kind), src.name, "summary", static_cast<long>(layer), "", 0, 0,
                          "mean-drop@" + models[t].name, detail::mean(drops[t])});
  }
  return rep;
}

//! Subtracts every source perturbation from every target adversarial
//! example (nontargeted, image space and feature space, all losses).
inline ExperimentReport run_countervail(const ExperimentPlan& plan) {
  if (plan.kind != ExperimentKind::Countervail) throw std::invalid_argument("run_countervail: wrong plan kind");
  plan.validate();
  const auto models = load_models(plan.models);
  const auto& m = models.front().model;
  const auto images = plan_images(plan, m.spec.input_shape);
  detail::require_ground_truth(images, "countervail");
  const std::vector<std::string> loss_names =
      plan.losses.empty() ? std::vector<std::string>{"kl", "cc", "nss", "l1", "mix"} : plan.losses;
  const std::size_t feature_layer = plan.layer.value_or(m.spec.context_layer());
  const std::size_t image_layer = m.spec.output_layer;
  const AttackConfig base = detail::base_config(plan);

  struct Source {
    std::string name;
    std::string space;
    LossKind loss;
    std::size_t layer;
    std::size_t n;
  };
  std::vector<Source> sources;
  for (const auto& space : {"image", "feature"})
    for (const auto& ln : loss_names) {
      const bool feat = std::string(space) == "feature";
      const std::size_t layer = feat ? feature_layer : image_layer;
      sources.push_back({std::string(space) + "-" + ln, space, loss_kind_from_string(ln), layer,
                         feat ? (plan.attack.contains("channels") ? base.n_channels
                                                                  : detail::channels_for(m.spec, layer, plan.channel_fraction))
                              : m.spec.layer_shapes()[layer][0]});
    }

  // Mix weights calibrated per space on original/guide (or original/flipped)
  // stacks of the plan's images.
  auto calibrate = [&](std::size_t layer, std::size_t n) {
    const auto idx = select_channels(m.spec.layer_shapes()[layer][0], n, ChannelSelection::UniformStride);
    std::vector<std::pair<Tensor, Tensor>> pairs;
    for (const auto& im : images) {
      Tensor other = im.guide;
      if (other.empty()) {
        other = im.original;
        for (std::size_t c = 0; c < other.channels(); ++c)
          for (std::size_t y = 0; y < other.height(); ++y)
            for (std::size_t x = 0; x < other.width(); ++x) other.at(c, y, x) = im.original.at(c, y, other.width() - 1 - x);
      }
      pairs.emplace_back(gather_channels(forward_trace(m.spec, m.weights, im.original, layer)[layer], idx),
                         gather_channels(forward_trace(m.spec, m.weights, other, layer)[layer], idx));
    }
    return losses::calibrate_mix_weights(pairs);
  };
  std::map<std::string, MixWeights> mix;
  mix["image"] = base.loss == LossKind::Mix && plan.attack.contains("mix") ? base.mix : calibrate(image_layer, 1);
  mix["feature"] = plan.attack.contains("mix") ? base.mix : calibrate(feature_layer, sources.back().n);

  ExperimentReport rep;
  std::size_t cell = 0;
  std::map<std::pair<std::string, std::string>, std::vector<double>> residual;
  std::map<std::string, std::vector<double>> unmitigated;
  for (const auto& im : images) {
    std::vector<AttackResult> results;
    for (const auto& s : sources) {
      AttackConfig cfg = base;
      cfg.mode = AttackMode::Nontargeted;
      cfg.loss = s.loss;
      cfg.mix = mix[s.space];
      cfg.attacked_layer = s.layer;
      cfg.n_channels = s.n;
      cfg.seed = derive_seed(plan.seed, cell++);
      results.push_back(detail::run_cell(plan, m, im.original, im.original, cfg, rep, im.id + "/" + s.name));
    }
    const double clean = metrics::cc(predict(m.spec, m.weights, im.original), im.ground_truth);
    for (std::size_t t = 0; t < sources.size(); ++t) {
      const double drop = clean - metrics::cc(predict(m.spec, m.weights, results[t].adversarial), im.ground_truth);
      unmitigated[sources[t].name].push_back(drop);
      detail::RowContext ctx{to_string(plan.kind), models.front().name, im.id, static_cast<long>(sources[t].layer),
                             sources[t].name, static_cast<long>(sources[t].n),
                             static_cast<long>(results[t].iterations_used)};
      rep.rows.push_back(detail::row(ctx, "drop", drop));
      for (std::size_t s = 0; s < sources.size(); ++s) {
        Tensor modified = results[t].adversarial - results[s].perturbation;
        modified.clamp(0.0, 1.0);
        const double res = clean - metrics::cc(predict(m.spec, m.weights, modified), im.ground_truth);
        residual[{sources[s].name, sources[t].name}].push_back(res);
        rep.rows.push_back(detail::row(ctx, "residual-drop<-" + sources[s].name, res));
      }
    }
  }
  // Block means of mitigation (unmitigated drop minus residual drop).
  double block[2][2] = {{0, 0}, {0, 0}};
  double count[2][2] = {{0, 0}, {0, 0}};
  double self_gap = 0;
  for (const auto& s : sources)
    for (const auto& t : sources) {
      const double res = detail::mean(residual[{s.name, t.name}]);
      const double mit = detail::mean(unmitigated[t.name]) - res;
      rep.rows.push_back({to_string(plan.kind), models.front().name, "summary", -1, t.name, 0, 0,
                          "mean-residual-drop<-" + s.name, res});
      if (s.name == t.name) self_gap = std::max(self_gap, std::abs(res));
      const int si = s.space == "feature", ti = t.space == "feature";
      block[si][ti] += mit;
      count[si][ti] += 1;
    }
  for (const auto& t : sources)
    rep.rows.push_back({to_string(plan.kind), models.front().name, "summary", -1, t.name, 0, 0, "mean-drop",
                        detail::mean(unmitigated[t.name])});
  const char* names[2] = {"image", "feature"};
  for (int si = 0; si < 2; ++si)
    for (int ti = 0; ti < 2; ++ti)
      rep.rows.push_back({to_string(plan.kind), models.front().name, "summary", -1, "", 0, 0,
                          std::string("mitigation:") + names[si] + "->" + names[ti], block[si][ti] / count[si][ti]});
  rep.rows.push_back({to_string(plan.kind), models.front().name, "summary", -1, "", 0, 0, "max-self-residual", self_gap});
  return rep;
}

//! Seeded row and column permutations, applied identically to every channel.
inline Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  if (perm.size() != t.height()) throw std::invalid_argument("permute_rows: permutation length mismatch");
  Tensor out(t.shape());
  for (std::size_t c = 0; c < t.channels(); ++c)
    for (std::size_t y = 0; y < t.height(); ++y)
      for (std::size_t x = 0; x < t.width(); ++x) out.at(c, y, x) = t.at(c, perm[y], x);
  return out;
}

inline Tensor permute_cols(const Tensor& t, const std::vector<std::size_t>& perm) {
  if (perm.size() != t.width()) throw std::invalid_argument("permute_cols: permutation length mismatch");
  Tensor out(t.shape());
  for (std::size_t c = 0; c < t.channels(); ++c)
    for (std::size_t y = 0; y < t.height(); ++y)
      for (std::size_t x = 0; x < t.width(); ++x) out.at(c, y, x) = t.at(c, y, perm[x]);
  return out;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  Rng rng(seed);
  shuffle(p, rng);
  return p;
}

//! Nontargeted context-layer attacks whose perturbations are re-applied after
//! a random row or column permutation.
inline ExperimentReport run_permutation_check(const ExperimentPlan& plan) {
  if (plan.kind != ExperimentKind::PermutationCheck) throw std::invalid_argument("run_permutation_check: wrong plan kind");
  plan.validate();
  const auto models = load_models(plan.models);
  const auto& m = models.front().model;
  const auto images = plan_images(plan, m.spec.input_shape);
  detail::require_ground_truth(images, "permutation-check");
  const std::size_t layer = plan.layer.value_or(m.spec.context_layer());
  const AttackConfig base = detail::base_config(plan);

  ExperimentReport rep;
  std::size_t passed = 0;
  for (std::size_t k = 0; k < images.size(); ++k) {
    const auto& im = images[k];
    AttackConfig cfg = base;
    cfg.mode = AttackMode::Nontargeted;
    cfg.attacked_layer = layer;
    if (!plan.attack.contains("channels")) cfg.n_channels = detail::channels_for(m.spec, layer, plan.channel_fraction);
    cfg.seed = derive_seed(plan.seed, k);
    const auto r = detail::run_cell(plan, m, im.original, im.original, cfg, rep, im.id);
    const auto& delta = r.perturbation;
    const auto rows = permute_rows(delta, random_permutation(delta.height(), derive_seed(plan.seed, 5000 + k)));
    const auto cols = permute_cols(delta, random_permutation(delta.width(), derive_seed(plan.seed, 6000 + k)));
    const double drop = detail::cc_drop(m, im.original, detail::apply_perturbation(im.original, delta), im.ground_truth);
    const double row_drop = detail::cc_drop(m, im.original, detail::apply_perturbation(im.original, rows), im.ground_truth);
    const double col_drop = detail::cc_drop(m, im.original, detail::apply_perturbation(im.original, cols), im.ground_truth);
    const auto pred = predict(m.spec, m.weights, r.adversarial);
    const auto stats = perturbation_stats(r);
    detail::RowContext ctx{to_string(plan.kind), models.front().name, im.id, static_cast<long>(layer),
                           to_string(cfg.loss), static_cast<long>(cfg.n_channels), static_cast<long>(r.iterations_used)};
    rep.rows.push_back(detail::row(ctx, "cc-original", metrics::cc(pred, predict(m.spec, m.weights, im.original))));
    rep.rows.push_back(detail::row(ctx, "ssim", stats.ssim));
    rep.rows.push_back(detail::row(ctx, "threshold-met", r.termination == Termination::ThresholdMet ? 1.0 : 0.0));
    rep.rows.push_back(detail::row(ctx, "drop", drop));
    rep.rows.push_back(detail::row(ctx, "row-permuted-drop", row_drop));
    rep.rows.push_back(detail::row(ctx, "col-permuted-drop", col_drop));
    const bool ok = row_drop < 0.25 * drop && col_drop < 0.25 * drop;
    passed += ok;
    rep.rows.push_back(detail::row(ctx, "permutation-defeats-attack", ok ? 1.0 : 0.0));
    detail::add_attack_images(rep, plan, im.id, r, pred);
  }
  rep.rows.push_back({to_string(plan.kind), models.front().name, "summary", static_cast<long>(layer), "", 0, 0,
                      "cases-defeated", static_cast<double>(passed)});
  return rep;
}

inline ExperimentReport run_experiment(const ExperimentPlan& plan) {
  switch (plan.kind) {
    case ExperimentKind::Convergence: return run_convergence(plan);
    case ExperimentKind::LayerSweep: return run_layer_sweep(plan);
    case ExperimentKind::RfPerceptibility: return run_rf_perceptibility(plan);
    case ExperimentKind::ChannelSweep: return run_channel_sweep(plan);
    case ExperimentKind::SpoilLayer: return run_spoil_layer(plan);
    case ExperimentKind::Transferability: return run_transferability(plan);
    case ExperimentKind::Countervail: return run_countervail(plan);
    case ExperimentKind::PermutationCheck: return run_permutation_check(plan);
  }
  throw std::invalid_argument("unknown experiment kind");
}

}  // namespace salattack
