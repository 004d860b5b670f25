#include "roofkit/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "roofkit/version.hpp"

namespace roofkit::report {

Histogram::Histogram(double lo_, double bin_width_, int bins_)
    : lo(lo_), bin_width(bin_width_), bins(bins_), counts(bins_, 0) {
  if (bins_ <= 0 || bin_width_ <= 0.0) throw InvalidInput("histogram needs positive bins/width");
}

Histogram Histogram::heights() { return Histogram(0.0, 1.0, 120); }
Histogram Histogram::angles() { return Histogram(0.0, 1.0, 90); }
Histogram Histogram::azimuths() { return Histogram(0.0, 5.0, 72); }

int Histogram::bin_of(double value) const {
  const int raw = static_cast<int>(std::floor((value - lo) / bin_width));
  return std::clamp(raw, 0, bins - 1);
}

void Histogram::add(double value) {
  ++counts[bin_of(value)];
  ++total;
}

nlohmann::json histogram_to_json(const Histogram& h) {
  return nlohmann::json{{"lo", h.lo},
                        {"bin_width", h.bin_width},
                        {"bins", h.bins},
                        {"counts", h.counts},
                        {"total", h.total}};
}

Histogram histogram_from_json(const nlohmann::json& j) {
  try {
    Histogram h(j.at("lo").get<double>(), j.at("bin_width").get<double>(),
                j.at("bins").get<int>());
    h.counts = j.at("counts").get<std::vector<std::int64_t>>();
    h.total = j.at("total").get<std::int64_t>();
    if (static_cast<int>(h.counts.size()) != h.bins)
      throw InvalidInput("histogram counts length mismatch");
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed histogram json: " + std::string(e.what()));
  }
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::string histogram_csv(const Histogram& primary, const std::string& primary_name,
                          const Histogram* overlay, const std::string& overlay_name) {
  if (overlay && (overlay->bins != primary.bins || overlay->lo != primary.lo ||
                  overlay->bin_width != primary.bin_width))
    throw InvalidInput("overlay histogram has different bin edges");

  std::ostringstream out;
  out << "bin_start,bin_end," << primary_name;
  if (overlay) out << ',' << overlay_name;
  out << '\n';
  for (int b = 0; b < primary.bins; ++b) {
    out << fmt(primary.lo + b * primary.bin_width) << ','
        << fmt(primary.lo + (b + 1) * primary.bin_width) << ',' << primary.counts[b];
    if (overlay) out << ',' << overlay->counts[b];
    out << '\n';
  }
  return out.str();
}

std::string histogram_svg(const Histogram& primary, const std::string& title,
                          const std::string& x_label, const Histogram* overlay) {
  constexpr int kWidth = 720, kHeight = 400;
  constexpr int kLeft = 56, kRight = 16, kTop = 36, kBottom = 48;
  const int plot_w = kWidth - kLeft - kRight;
  const int plot_h = kHeight - kTop - kBottom;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  out << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";

  std::int64_t max_count = 0;
  for (int b = 0; b < primary.bins; ++b) {
    max_count = std::max(max_count, primary.counts[b]);
    if (overlay) max_count = std::max(max_count, overlay->counts[b]);
  }

  if (max_count == 0) {
    out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        << "fill=\"#a33\">no data (empty histogram)</text>\n</svg>\n";
    return out.str();
  }

  auto draw_series = [&](const Histogram& h, const char* fill, const char* opacity) {
    const double bar_w = static_cast<double>(plot_w) / h.bins;
    for (int b = 0; b < h.bins; ++b) {
      if (h.counts[b] == 0) continue;
      const double frac = static_cast<double>(h.counts[b]) / static_cast<double>(max_count);
      const double bar_h = frac * plot_h;
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\" "
                    "fill-opacity=\"%s\"/>\n",
                    kLeft + b * bar_w, kTop + plot_h - bar_h, bar_w, bar_h, fill, opacity);
      out << buf;
    }
  };
  draw_series(primary, "#4878b0", "0.9");
  if (overlay) draw_series(*overlay, "#e08030", "0.6");

  // Axes and a few x ticks.
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w
      << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double x = kLeft + plot_w * t / 4.0;
    const double value = primary.lo + (primary.bins * primary.bin_width) * t / 4.0;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%d\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                  "font-size=\"11\">%s</text>\n",
                  x, kTop + plot_h + 16, fmt(value).c_str());
    out << buf;
  }
  char ymax[160];
  std::snprintf(ymax, sizeof(ymax),
                "<text x=\"%d\" y=\"%d\" text-anchor=\"end\" font-family=\"sans-serif\" "
                "font-size=\"11\">%lld</text>\n",
                kLeft - 6, kTop + 10, static_cast<long long>(max_count));
  out << ymax;
  out << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label
      << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for hashing: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a(buf.str());
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

nlohmann::json provenance(const nlohmann::json& config,
                          const std::vector<std::filesystem::path>& inputs) {
  nlohmann::json input_hashes = nlohmann::json::object();
  for (const auto& path : inputs) input_hashes[path.string()] = hex64(fnv1a_file(path));
  return nlohmann::json{{"version", kVersion},
                        {"config_hash", hex64(fnv1a(config.dump()))},
                        {"inputs", input_hashes}};
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path.string());
  out << content;
  if (!out) throw IoError("short write: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace roofkit::report
