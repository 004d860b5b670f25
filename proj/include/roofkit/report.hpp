#pragma once

// Report artifacts: fixed-bin histograms, CSV/SVG rendering, file hashing
// and the provenance block stamped into every output bundle.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "roofkit/common.hpp"

#include <nlohmann/json_fwd.hpp>

namespace roofkit::report {

// Fixed-edge histogram; values outside the range land in the edge bins so
// totals always equal the number of added samples.
struct Histogram {
  double lo = 0.0;
  double bin_width = 1.0;
  int bins = 0;
  std::vector<std::int64_t> counts;
  std::int64_t total = 0;

  Histogram() = default;
  Histogram(double lo, double bin_width, int bins);

  static Histogram heights();   // 1 m bins over [0, 120)
  static Histogram angles();    // 1 deg bins over [0, 90)
  static Histogram azimuths();  // 5 deg bins over [0, 360)

  int bin_of(double value) const;
  void add(double value);
};

nlohmann::json histogram_to_json(const Histogram& h);
Histogram histogram_from_json(const nlohmann::json& j);

// CSV with bin edges and one count column per series; row sums over a
// column equal that series' total.
std::string histogram_csv(const Histogram& primary, const std::string& primary_name,
                          const Histogram* overlay = nullptr,
                          const std::string& overlay_name = "");

// Self-contained bar chart; the overlay series renders semi-transparent on
// top of the primary. Empty data produces a placeholder with a warning note.
std::string histogram_svg(const Histogram& primary, const std::string& title,
                          const std::string& x_label, const Histogram* overlay = nullptr);

std::uint64_t fnv1a(std::string_view bytes);
std::uint64_t fnv1a_file(const std::filesystem::path& path);  // throws IoError

// {"version", "config_hash", "inputs": {path: hash}} — every numeric input
// that shaped the run, hashed for reproducibility checks.
nlohmann::json provenance(const nlohmann::json& config,
                          const std::vector<std::filesystem::path>& inputs);

void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace roofkit::report
