#include "afrec/explain.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "afrec/errors.hpp"
#include "afrec/evaluation.hpp"
#include "afrec/png_io.hpp"

namespace afrec {

using json = nlohmann::json;

json Explanation::to_json() const {
  auto matrix_rows = [](const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(row);
    }
    return rows;
  };
  json pairs = json::array();
  for (const auto& p : top_pairs) pairs.push_back({{"top_attribute", attributes[p.row]}, {"bottom_attribute", attributes[p.col]}, {"value", p.value}});
  return {{"top_id", top_id},
          {"bottom_id", bottom_id},
          {"attributes", attributes},
          {"score", score},
          {"raw", matrix_rows(raw)},
          {"scaled", matrix_rows(scaled)},
          {"alpha_top", std::vector<double>(alpha_top.data(), alpha_top.data() + alpha_top.size())},
          {"alpha_bottom", std::vector<double>(alpha_bottom.data(), alpha_bottom.data() + alpha_bottom.size())},
          {"top_pairs", pairs}};
}

Matrix min_max_rescale(const Matrix& raw) {
  if (raw.size() == 0) return raw;
  const double lo = raw.minCoeff();
  const double hi = raw.maxCoeff();
  if (!(hi > lo)) return Matrix::Constant(raw.rows(), raw.cols(), 0.5);
  return (raw.array() - lo) / (hi - lo);
}

std::vector<RankedAttributePair> rank_pairs(const Matrix& scaled, std::size_t n) {
  std::vector<RankedAttributePair> all;
  all.reserve(static_cast<std::size_t>(scaled.size()));
  for (Eigen::Index r = 0; r < scaled.rows(); ++r) {
    for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
      all.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(c), scaled(r, c)});
    }
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.value > b.value; });
  all.resize(std::min(n, all.size()));
  return all;
}

Explanation explain_bundle(const CompatibilityBundle& bundle, std::vector<std::string> attributes, std::string top_id,
                           std::string bottom_id, std::size_t top_n) {
  const auto k = static_cast<Eigen::Index>(attributes.size());
  if (bundle.weighted.rows() != k || bundle.weighted.cols() != k) {
    throw ShapeMismatch("weighted matrix does not match the attribute list");
  }
  Explanation e;
  e.top_id = std::move(top_id);
  e.bottom_id = std::move(bottom_id);
  e.attributes = std::move(attributes);
  e.raw = bundle.weighted;
  e.scaled = min_max_rescale(e.raw);
  e.score = bundle.score;
  e.alpha_top = bundle.alpha_top;
  e.alpha_bottom = bundle.alpha_bottom;
  e.top_pairs = rank_pairs(e.scaled, top_n);
  return e;
}

Explanation explain_pair(const Checkpoint& checkpoint, const std::filesystem::path& top_image,
                         const std::filesystem::path& bottom_image, const std::string& top_category,
                         const std::string& bottom_category, std::size_t top_n) {
  const Model model = model_from_checkpoint(checkpoint);
  const AblationVariant variant = checkpoint_variant(checkpoint);
  auto category = [&](const std::string& name) {
    const auto index = model.categories().index(name);
    if (!index) throw SchemaViolation("unknown category '" + name + "'");
    return *index;
  };
  const int top_cat = category(top_category);
  const int bottom_cat = category(bottom_category);
  const Image top = read_png(top_image);
  const Image bottom = read_png(bottom_image);
  const CompatibilityBundle bundle =
      score_encoded(model, encode_item(model, top), top_cat, encode_item(model, bottom), bottom_cat, variant);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < model.schema().size(); ++k) names.push_back(model.schema()[k].name);
  return explain_bundle(bundle, std::move(names), top_image.stem().string(), bottom_image.stem().string(), top_n);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
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
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

// 5x7 glyphs, one byte per row, bit 4 is the leftmost column.
using Glyph = std::array<std::uint8_t, 7>;

const Glyph& glyph(char c) {
  static const std::array<Glyph, 26> letters = {{
      {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}, {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},
      {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E},
      {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}, {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},
      {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}, {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},
      {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}, {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},
      {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}, {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},
      {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}, {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11},
      {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},
      {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}, {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},
      {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}, {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},
      {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},
      {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}, {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},
      {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F},
  }};
  static const std::array<Glyph, 10> digits = {{
      {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
      {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}, {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
      {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
      {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
      {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},
  }};
  static const Glyph dash{0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00};
  static const Glyph underscore{0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F};
  static const Glyph dot{0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C};
  static const Glyph space{};
  static const Glyph box{0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F};
  if (c >= 'a' && c <= 'z') return letters[static_cast<std::size_t>(c - 'a')];
  if (c >= 'A' && c <= 'Z') return letters[static_cast<std::size_t>(c - 'A')];
  if (c >= '0' && c <= '9') return digits[static_cast<std::size_t>(c - '0')];
  switch (c) {
    case '-': return dash;
    case '_': return underscore;
    case '.': return dot;
    case ' ': return space;
    default: return box;
  }
}

struct Canvas {
  int width;
  int height;
  std::vector<std::uint8_t> rgb;

  Canvas(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w * h * 3), 255) {}

  void set(int x, int y, std::array<std::uint8_t, 3> colour) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const auto at = static_cast<std::size_t>((y * width + x) * 3);
    std::copy(colour.begin(), colour.end(), rgb.begin() + static_cast<std::ptrdiff_t>(at));
  }
};

constexpr int kCell = 20;
constexpr int kAdvance = 6;

// Horizontal text with its top-left corner at (x, y).
void draw_text(Canvas& canvas, int x, int y, const std::string& text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const Glyph& g = glyph(text[i]);
    for (int gy = 0; gy < 7; ++gy) {
      for (int gx = 0; gx < 5; ++gx) {
        if (g[static_cast<std::size_t>(gy)] & (0x10 >> gx)) canvas.set(x + static_cast<int>(i) * kAdvance + gx, y + gy, {0, 0, 0});
      }
    }
  }
}

// Text rotated a quarter turn anticlockwise, ending just above baseline_y.
void draw_text_up(Canvas& canvas, int x, int baseline_y, const std::string& text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const Glyph& g = glyph(text[i]);
    for (int gy = 0; gy < 7; ++gy) {
      for (int gx = 0; gx < 5; ++gx) {
        if (g[static_cast<std::size_t>(gy)] & (0x10 >> gx)) {
          canvas.set(x + gy, baseline_y - static_cast<int>(i) * kAdvance - gx, {0, 0, 0});
        }
      }
    }
  }
}

std::array<std::uint8_t, 3> colour_map(double v) {
  static const std::array<std::array<double, 3>, 3> stops = {{{68, 1, 84}, {33, 145, 140}, {253, 231, 37}}};
  v = std::clamp(v, 0.0, 1.0);
  const double pos = v * 2.0;
  const std::size_t lo = std::min<std::size_t>(1, static_cast<std::size_t>(pos));
  const double t = pos - static_cast<double>(lo);
  std::array<std::uint8_t, 3> out{};
  for (std::size_t c = 0; c < 3; ++c) {
    out[c] = static_cast<std::uint8_t>(std::lround(stops[lo][c] + t * (stops[lo + 1][c] - stops[lo][c])));
  }
  return out;
}

}  // namespace

std::string explanation_csv(const Explanation& explanation) {
  std::string out;
  for (const auto& name : explanation.attributes) out += "," + csv_field(name);
  out += "\n";
  char buffer[64];
  for (Eigen::Index r = 0; r < explanation.scaled.rows(); ++r) {
    out += csv_field(explanation.attributes[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < explanation.scaled.cols(); ++c) {
      std::snprintf(buffer, sizeof buffer, "%.12g", explanation.scaled(r, c));
      out += ",";
      out += buffer;
    }
    out += "\n";
  }
  return out;
}

ScaledTable parse_explanation_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  ScaledTable table;
  if (!std::getline(in, line)) throw DecodeError("empty explanation CSV");
  auto header = split_csv_line(line);
  table.cols.assign(header.begin() + 1, header.end());
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) throw DecodeError("ragged explanation CSV");
    table.rows.push_back(fields[0]);
    std::vector<double> values;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      try {
        values.push_back(std::stod(fields[i]));
      } catch (const std::exception&) {
        throw DecodeError("bad number '" + fields[i] + "' in explanation CSV");
      }
    }
    rows.push_back(std::move(values));
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return table;
}

void render_heatmap(const Explanation& explanation, const std::filesystem::path& out_path) {
  std::filesystem::path csv_path = out_path;
  csv_path.replace_extension(".csv");
  {
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw IoError("cannot write " + csv_path.string());
    csv << explanation_csv(explanation);
    if (!csv) throw IoError("failed writing " + csv_path.string());
  }

  std::size_t longest = 1;
  for (const auto& name : explanation.attributes) longest = std::max(longest, name.size());
  const int margin = static_cast<int>(longest) * kAdvance + 8;
  const int k = static_cast<int>(explanation.attributes.size());
  Canvas canvas(margin + k * kCell + 4, margin + k * kCell + 4);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      const auto colour = colour_map(explanation.scaled(r, c));
      for (int y = 1; y < kCell; ++y) {
        for (int x = 1; x < kCell; ++x) canvas.set(margin + c * kCell + x, margin + r * kCell + y, colour);
      }
    }
  }
  for (int i = 0; i < k; ++i) {
    const std::string& name = explanation.attributes[static_cast<std::size_t>(i)];
    const int text_width = static_cast<int>(name.size()) * kAdvance;
    draw_text(canvas, margin - 4 - text_width, margin + i * kCell + (kCell - 7) / 2, name);
    draw_text_up(canvas, margin + i * kCell + (kCell - 7) / 2, margin - 4, name);
  }
  write_png_rgb8(out_path, canvas.width, canvas.height, canvas.rgb);
}

}  // namespace afrec
