#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "salattack/tensor.hpp"

namespace salattack {

// ---------------------------------------------------------------------------
// Report rows

struct ReportRow {
  std::string experiment;
  std::string model;
  std::string image;
  long layer = -1;  // -1 when the row is not tied to a layer
  std::string loss;
  long n_channels = 0;
  long iterations = 0;
  std::string metric;
  double value = 0;

  bool operator==(const ReportRow&) const = default;
};

inline const char* kReportHeader = "experiment,model,image,layer,loss,n,iterations,metric,value";

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw std::runtime_error("csv: unterminated quote in '" + line + "'");
  return fields;
}

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

inline double parse_double(const std::string& s) {
  double v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw std::runtime_error("csv: bad number '" + s + "'");
  return v;
}

inline long parse_long(const std::string& s) {
  long v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw std::runtime_error("csv: bad integer '" + s + "'");
  return v;
}

}  // namespace detail

inline void write_report(std::ostream& os, const std::vector<ReportRow>& rows) {
  os << kReportHeader << '\n';
  for (const auto& r : rows) {
    if (!std::isfinite(r.value))
      throw std::invalid_argument("report: non-finite value for metric '" + r.metric + "'");
    using detail::csv_field;
    os << csv_field(r.experiment) << ',' << csv_field(r.model) << ',' << csv_field(r.image) << ',' << r.layer
       << ',' << csv_field(r.loss) << ',' << r.n_channels << ',' << r.iterations << ',' << csv_field(r.metric)
       << ',' << detail::format_double(r.value) << '\n';
  }
}

inline std::string emit_report(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  write_report(os, rows);
  return os.str();
}

inline std::vector<ReportRow> parse_report(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kReportHeader) throw std::runtime_error("report: missing header");
  std::vector<ReportRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 9) throw std::runtime_error("report: expected 9 fields in '" + line + "'");
    rows.push_back({f[0], f[1], f[2], detail::parse_long(f[3]), f[4], detail::parse_long(f[5]),
                    detail::parse_long(f[6]), f[7], detail::parse_double(f[8])});
  }
  return rows;
}

inline std::vector<ReportRow> parse_report(const std::string& text) {
  std::istringstream is(text);
  return parse_report(is);
}

inline void save_report(const std::filesystem::path& path, const std::vector<ReportRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  write_report(os, rows);
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

inline std::vector<ReportRow> load_report(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return parse_report(is);
}

// ---------------------------------------------------------------------------
// Netpbm images (binary P5 / P6, maxval 255)

struct Image8 {
  std::size_t width = 0, height = 0, channels = 1;  // 1 = gray, 3 = RGB
  std::vector<std::uint8_t> pixels;                 // interleaved, row-major
};

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

//! Gray image of one channel, min-max stretched to the full 8-bit range
//! (a constant map becomes black).
inline Image8 gray_image(const Tensor& map, std::size_t channel = 0) {
  if (map.rank() != 3) throw std::invalid_argument("gray_image: expected a (C, H, W) tensor");
  auto plane = map.channel(channel);
  const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
  const double span = *hi - *lo;
  Image8 img{map.width(), map.height(), 1, {}};
  img.pixels.reserve(plane.size());
  for (double v : plane) img.pixels.push_back(to_byte(span > 0 ? (v - *lo) / span : 0.0));
  return img;
}

//! RGB image of a (3, H, W) tensor. Values are clamped to [0, 1] unless
//! `normalize` is set, in which case all channels share one min-max stretch.
inline Image8 rgb_image(const Tensor& t, bool normalize = false) {
  if (t.rank() != 3 || t.channels() != 3) throw std::invalid_argument("rgb_image: expected a (3, H, W) tensor");
  double lo = 0, scale = 1;
  if (normalize) {
    lo = t.min();
    const double span = t.max() - lo;
    scale = span > 0 ? 1.0 / span : 0.0;
  }
  Image8 img{t.width(), t.height(), 3, {}};
  img.pixels.reserve(t.size());
  for (std::size_t y = 0; y < t.height(); ++y)
    for (std::size_t x = 0; x < t.width(); ++x)
      for (std::size_t c = 0; c < 3; ++c) img.pixels.push_back(to_byte((t.at(c, y, x) - lo) * scale));
  return img;
}

inline void write_netpbm(std::ostream& os, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("netpbm: channels must be 1 or 3");
  if (img.pixels.size() != img.width * img.height * img.channels)
    throw std::invalid_argument("netpbm: pixel buffer size mismatch");
  os << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

inline Image8 read_netpbm(std::istream& is) {
  auto token = [&]() {
    std::string tok;
    char c;
    while (is.get(c)) {
      if (c == '#') {
        std::string rest;
        std::getline(is, rest);
      } else if (!std::isspace(static_cast<unsigned char>(c))) {
        tok += c;
        break;
      }
    }
    while (is.get(c) && !std::isspace(static_cast<unsigned char>(c))) tok += c;
    return tok;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P6") throw std::runtime_error("netpbm: unsupported magic '" + magic + "'");
  Image8 img;
  img.channels = magic == "P5" ? 1 : 3;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    if (std::stoul(token()) != 255) throw std::runtime_error("netpbm: only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw std::runtime_error("netpbm: malformed header");
  }
  img.pixels.resize(img.width * img.height * img.channels);
  is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (is.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw std::runtime_error("netpbm: truncated data");
  return img;
}

inline void save_netpbm(const std::filesystem::path& path, const Image8& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  write_netpbm(os, img);
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

inline Image8 load_netpbm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_netpbm(is);
}

}  // namespace salattack
