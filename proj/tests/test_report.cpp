#include <gtest/gtest.h>

#include <filesystem>

#include "salattack/report.hpp"
#include "test_util.hpp"

using namespace salattack;

TEST(Report, RoundTripPreservesEveryField) {
  std::vector<ReportRow> rows{
      {"layer-sweep", "model_s", "pair00", 7, "kl", 16, 123, "cc-guide", 0.1 + 0.2},
      {"countervail", "m,x", "summary", -1, "", 0, 0, "mitigation:\"q\"", -1e-300},
      {"e", "m", "i", 0, "mix", 1, 1, "v", 12345678.901234567},
  };
  const auto text = emit_report(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), kReportHeader);
  EXPECT_EQ(parse_report(text), rows);
}

TEST(Report, RejectsNonFiniteAndMalformed) {
  EXPECT_THROW(emit_report({{"e", "m", "i", 0, "", 0, 0, "v", std::nan("")}}), std::invalid_argument);
  EXPECT_THROW(parse_report("wrong,header\n"), std::runtime_error);
  EXPECT_THROW(parse_report(std::string(kReportHeader) + "\na,b,c\n"), std::runtime_error);
  EXPECT_THROW(parse_report(std::string(kReportHeader) + "\na,b,c,x,l,1,1,m,1\n"), std::runtime_error);
  EXPECT_THROW(parse_report(std::string(kReportHeader) + "\n\"a,b,c,1,l,1,1,m,1\n"), std::runtime_error);
}

TEST(Report, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "salattack_report" / "r.csv";
  std::vector<ReportRow> rows{{"e", "m", "i", 3, "cc", 2, 9, "ssim", 0.987654321}};
  save_report(path, rows);
  EXPECT_EQ(load_report(path), rows);
  std::filesystem::remove_all(path.parent_path());
}

TEST(Netpbm, GrayRoundTripWithComment) {
  Image8 img{3, 2, 1, {0, 10, 20, 30, 40, 255}};
  std::stringstream ss;
  write_netpbm(ss, img);
  std::string text = ss.str();
  text.insert(3, "# comment line\n");
  std::stringstream in(text);
  const auto back = read_netpbm(in);
  EXPECT_EQ(back.width, 3u);
  EXPECT_EQ(back.height, 2u);
  EXPECT_EQ(back.channels, 1u);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Netpbm, RgbFileRoundTrip) {
  const Tensor t = testutil::random_tensor({3, 5, 4}, 1, 0, 1);
  const auto img = rgb_image(t);
  const auto path = std::filesystem::temp_directory_path() / "salattack_netpbm" / "x.ppm";
  save_netpbm(path, img);
  const auto back = load_netpbm(path);
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_EQ(back.channels, 3u);
  EXPECT_EQ(back.pixels[0], to_byte(t.at(0, 0, 0)));
  EXPECT_EQ(back.pixels[1], to_byte(t.at(1, 0, 0)));
  std::filesystem::remove_all(path.parent_path());
}

TEST(Netpbm, DisplayNormalization) {
  Tensor m({1, 1, 3}, std::vector<double>{-2, 0, 2});
  EXPECT_EQ(gray_image(m).pixels, (std::vector<std::uint8_t>{0, 128, 255}));
  EXPECT_EQ(gray_image(Tensor({1, 2, 2}, 0.7)).pixels, (std::vector<std::uint8_t>{0, 0, 0, 0}));
  Tensor d({3, 1, 1}, std::vector<double>{-0.1, 0.0, 0.1});
  EXPECT_EQ(rgb_image(d, true).pixels, (std::vector<std::uint8_t>{0, 128, 255}));
  EXPECT_EQ(rgb_image(d).pixels, (std::vector<std::uint8_t>{0, 0, 26}));
}

TEST(Netpbm, RejectsMalformed) {
  std::stringstream bad("P3\n1 1\n255\n");
  EXPECT_THROW(read_netpbm(bad), std::runtime_error);
  std::stringstream trunc("P5\n2 2\n255\nab");
  EXPECT_THROW(read_netpbm(trunc), std::runtime_error);
  std::stringstream depth("P5\n1 1\n65535\nab");
  EXPECT_THROW(read_netpbm(depth), std::runtime_error);
  std::stringstream out;
  EXPECT_THROW(write_netpbm(out, Image8{2, 2, 1, {1}}), std::invalid_argument);
}
