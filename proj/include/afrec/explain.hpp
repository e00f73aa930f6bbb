#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "afrec/checkpoint.hpp"
#include "afrec/compatibility.hpp"

namespace afrec {

struct RankedAttributePair {
  std::size_t row = 0;  // top attribute
  std::size_t col = 0;  // bottom attribute
  double value = 0.0;   // scaled

  bool operator==(const RankedAttributePair&) const = default;
};

struct Explanation {
  std::string top_id;
  std::string bottom_id;
  std::vector<std::string> attributes;
  Matrix raw;
  Matrix scaled;
  double score = 0.0;
  Vector alpha_top;
  Vector alpha_bottom;
  std::vector<RankedAttributePair> top_pairs;

  nlohmann::json to_json() const;
};

// (raw - min) / (max - min); a constant matrix maps to 0.5 everywhere.
Matrix min_max_rescale(const Matrix& raw);

// The n largest entries, descending, ties in (row, col) order.
std::vector<RankedAttributePair> rank_pairs(const Matrix& scaled, std::size_t n);

Explanation explain_bundle(const CompatibilityBundle& bundle, std::vector<std::string> attributes,
                           std::string top_id, std::string bottom_id, std::size_t top_n = 3);

// Scores one image pair with the checkpoint's model and variant. Categories
// are given by name. Pair ids are the image file stems.
Explanation explain_pair(const Checkpoint& checkpoint, const std::filesystem::path& top_image,
                         const std::filesystem::path& bottom_image, const std::string& top_category,
                         const std::string& bottom_category, std::size_t top_n = 3);

struct ScaledTable {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  Matrix values;
};

// Header row and first column hold attribute names; values use 12
// significant digits.
std::string explanation_csv(const Explanation& explanation);
ScaledTable parse_explanation_csv(const std::string& text);

// Writes the PNG heatmap to out_path and the CSV next to it (same stem,
// .csv extension).
void render_heatmap(const Explanation& explanation, const std::filesystem::path& out_path);

}  // namespace afrec
