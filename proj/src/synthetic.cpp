#include "afrec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>

#include "afrec/errors.hpp"

namespace afrec::synthetic {

namespace {

using Rgb = std::array<int, 3>;

constexpr std::array<Rgb, 6> kHues = {{
    {220, 40, 40},    // red
    {235, 140, 30},   // orange
    {225, 210, 40},   // yellow
    {50, 170, 60},    // green
    {40, 90, 210},    // blue
    {140, 50, 180},   // purple
}};
constexpr Rgb kBackground = {0, 0, 0};
constexpr Rgb kInk = {255, 255, 255};

// Layout constants are in a 64x64 virtual canvas.
constexpr double kCanvas = 64.0;
constexpr double kTopEdge = 6.0;
constexpr std::array<double, 3> kBottomEdge = {32.0, 46.0, 60.0};
constexpr std::array<double, 2> kHalfWidth = {9.0, 17.0};
constexpr double kSleeveRows = 10.0;
constexpr double kSleeveReach = 8.0;
constexpr double kSkirtFlare = 6.0;
constexpr double kLegGap = 2.0;

Rgb fill_colour(int hue, int tone) {
  Rgb c = kHues.at(static_cast<std::size_t>(hue));
  for (int& channel : c) {
    channel = tone == 0 ? static_cast<int>(std::lround(channel + (255 - channel) * 0.4))
                        : static_cast<int>(std::lround(channel * 0.6));
  }
  return c;
}

enum class Paint { Background, Fill, Ink };

double positive_mod(double value, double modulus) {
  const double r = std::fmod(value, modulus);
  return r < 0 ? r + modulus : r;
}

Paint paint_at(const Garment& g, double u, double v) {
  const double bottom_edge = kBottomEdge.at(static_cast<std::size_t>(g.labels[kLength]));
  if (v < kTopEdge || v >= bottom_edge) return Paint::Background;
  const double dx = std::abs(u - kCanvas / 2);
  double half = kHalfWidth.at(static_cast<std::size_t>(g.labels[kFit]));
  if (g.category == kTee && v < kTopEdge + kSleeveRows) half += kSleeveReach;
  if (g.category == kSkirt) half += kSkirtFlare * (v - kTopEdge) / (bottom_edge - kTopEdge);
  if (dx >= half) return Paint::Background;
  if (g.category == kTrousers && v >= kTopEdge + (bottom_edge - kTopEdge) / 3 && dx < kLegGap) {
    return Paint::Background;
  }
  const double row = positive_mod(v - kTopEdge, 8.0);
  switch (g.labels[kPattern]) {
    case 1:
      if (row >= 4.0 && row < 7.0) return Paint::Ink;
      break;
    case 2: {
      const double col = positive_mod(u - kCanvas / 2, 8.0);
      if (row >= 3.0 && row < 5.0 && col >= 3.0 && col < 5.0) return Paint::Ink;
      break;
    }
    default:
      break;
  }
  return Paint::Fill;
}

double virtual_coord(int pixel, int image_size) { return (pixel + 0.5) * kCanvas / image_size; }

int pixel_row(double v, int image_size) {
  return std::clamp(static_cast<int>(v * image_size / kCanvas), 0, image_size - 1);
}

Rgb pixel(const Image& image, int y, int x) {
  Rgb c{};
  for (int ch = 0; ch < 3; ++ch) c[ch] = static_cast<int>(std::lround(image.at(ch, y, x) * 255.0));
  return c;
}

int row_width(const Image& image, int y) {
  int width = 0;
  for (int x = 0; x < image.width; ++x) width += pixel(image, y, x) != kBackground;
  return width;
}

void check_garment(const Garment& g) {
  const bool top = g.side == Side::Top;
  if (top != (g.category == kTee || g.category == kTank)) {
    throw ConfigInvalid("category does not belong to the garment side");
  }
  const auto counts = schema().value_counts();
  for (std::size_t k = 0; k < kNumAttributes; ++k) {
    if (g.labels[k] < 0 || g.labels[k] >= counts[k]) throw ConfigInvalid("garment label out of range");
  }
}

}  // namespace

RuleSet rule_set_from_string(const std::string& name) {
  if (name == "planted") return RuleSet::Planted;
  if (name == "always") return RuleSet::AlwaysCompatible;
  throw ConfigInvalid("unknown rule set '" + name + "'");
}

AttributeSchema schema() {
  return AttributeSchema({
      {"colour", {"red", "orange", "yellow", "green", "blue", "purple"}},
      {"tone", {"light", "dark"}},
      {"pattern", {"plain", "stripes", "dots"}},
      {"length", {"short", "medium", "long"}},
      {"fit", {"slim", "wide"}},
  });
}

CategorySet categories() { return CategorySet({"tee", "tank", "skirt", "trousers"}); }

Image render(const Garment& garment, int image_size) {
  check_garment(garment);
  const Rgb fill = fill_colour(garment.labels[kColour], garment.labels[kTone]);
  Image image(3, image_size, image_size);
  for (int y = 0; y < image_size; ++y) {
    const double v = virtual_coord(y, image_size);
    for (int x = 0; x < image_size; ++x) {
      const Paint paint = paint_at(garment, virtual_coord(x, image_size), v);
      const Rgb& c = paint == Paint::Fill ? fill : paint == Paint::Ink ? kInk : kBackground;
      for (int ch = 0; ch < 3; ++ch) image.at(ch, y, x) = c[ch] / 255.0;
    }
  }
  return image;
}

Garment decode(const Image& image, Side side) {
  if (image.channels != 3 || image.height != image.width) throw DecodeError("expected a square RGB image");
  const int size = image.height;
  std::map<Rgb, int> fills;
  int garment_pixels = 0;
  int ink_pixels = 0;
  int last_row = -1;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Rgb c = pixel(image, y, x);
      if (c == kBackground) continue;
      ++garment_pixels;
      last_row = y;
      if (c == kInk) {
        ++ink_pixels;
      } else {
        ++fills[c];
      }
    }
  }
  if (fills.empty()) throw DecodeError("no garment found in image");

  Garment g;
  g.side = side;
  const auto dominant =
      std::max_element(fills.begin(), fills.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  bool matched = false;
  for (int hue = 0; hue < static_cast<int>(kHues.size()) && !matched; ++hue) {
    for (int tone = 0; tone < 2 && !matched; ++tone) {
      if (fill_colour(hue, tone) == dominant->first) {
        g.labels[kColour] = hue;
        g.labels[kTone] = tone;
        matched = true;
      }
    }
  }
  if (!matched) throw DecodeError("garment colour is not in the palette");

  const double ink_ratio = static_cast<double>(ink_pixels) / garment_pixels;
  g.labels[kPattern] = ink_pixels == 0 ? 0 : ink_ratio > 0.2 ? 1 : 2;

  const double bottom_v = virtual_coord(last_row, size) + 0.5;
  std::size_t best = 0;
  for (std::size_t i = 1; i < kBottomEdge.size(); ++i) {
    if (std::abs(kBottomEdge[i] - bottom_v) < std::abs(kBottomEdge[best] - bottom_v)) best = i;
  }
  g.labels[kLength] = static_cast<int>(best);

  const double scale = kCanvas / size;
  const double upper_width = row_width(image, pixel_row(kTopEdge + 1.0, size)) * scale;
  const double fit_threshold = kHalfWidth[0] + kHalfWidth[1];
  if (side == Side::Top) {
    const double body_width = row_width(image, pixel_row(kTopEdge + kSleeveRows + 2.0, size)) * scale;
    g.labels[kFit] = body_width > fit_threshold ? 1 : 0;
    g.category = upper_width > body_width + kSleeveReach ? kTee : kTank;
  } else {
    g.labels[kFit] = upper_width > fit_threshold ? 1 : 0;
    g.category = pixel(image, last_row, size / 2) == kBackground ? kTrousers : kSkirt;
  }
  return g;
}

bool compatible(RuleSet rules, const Garment& top, const Garment& bottom) {
  if (rules == RuleSet::AlwaysCompatible) return true;
  const auto& t = top.labels;
  const auto& b = bottom.labels;
  const int hue_gap = std::abs(t[kColour] - b[kColour]);
  const int n_hues = static_cast<int>(kHues.size());
  if (std::min(hue_gap, n_hues - hue_gap) != 1) return false;
  if (t[kPattern] != 0 && b[kPattern] != 0) return false;
  if (t[kTone] == b[kTone]) return false;
  if (t[kLength] + b[kLength] != 2) return false;
  const bool same_fit = t[kFit] == b[kFit];
  return bottom.category == kSkirt ? !same_fit : same_fit;
}

Corpus generate(const SyntheticConfig& config) {
  if (config.n_tops < 10 || config.n_bottoms < 10) throw ConfigInvalid("need at least 10 tops and 10 bottoms");
  if (config.image_size < 32) throw ConfigInvalid("image_size must be at least 32");
  if (config.label_dropout < 0.0 || config.label_dropout >= 1.0) throw ConfigInvalid("label_dropout must be in [0, 1)");
  if (config.max_positives == 0) throw ConfigInvalid("max_positives must be positive");

  const AttributeSchema attribute_schema = schema();
  const auto counts = attribute_schema.value_counts();
  std::mt19937_64 rng(config.seed);
  std::bernoulli_distribution drop(config.label_dropout);

  std::vector<Garment> garments;
  std::vector<Item> items;
  auto make = [&](Side side, int index) {
    Garment g;
    g.side = side;
    const int first = side == Side::Top ? kTee : kSkirt;
    g.category = first + std::uniform_int_distribution<int>(0, 1)(rng);
    for (std::size_t k = 0; k < kNumAttributes; ++k) g.labels[k] = std::uniform_int_distribution<int>(0, counts[k] - 1)(rng);
    Item item;
    char id[16];
    std::snprintf(id, sizeof id, "%c%04d", side == Side::Top ? 't' : 'b', index);
    item.id = id;
    item.side = side;
    item.image = render(g, config.image_size);
    item.category = g.category;
    for (std::size_t k = 0; k < kNumAttributes; ++k) {
      const bool withheld = config.label_dropout > 0.0 && drop(rng);
      item.attribute_labels.push_back(withheld ? std::nullopt : std::optional<int>(g.labels[k]));
    }
    garments.push_back(g);
    items.push_back(std::move(item));
  };
  for (int i = 0; i < config.n_tops; ++i) make(Side::Top, i);
  for (int i = 0; i < config.n_bottoms; ++i) make(Side::Bottom, i);

  std::vector<OutfitPair> positives;
  for (int t = 0; t < config.n_tops; ++t) {
    for (int b = 0; b < config.n_bottoms; ++b) {
      const std::size_t bi = static_cast<std::size_t>(config.n_tops + b);
      if (compatible(config.rule_set, garments[t], garments[bi])) positives.push_back({items[t].id, items[bi].id});
    }
  }
  if (positives.size() > config.max_positives) {
    std::vector<std::size_t> keep(positives.size());
    std::iota(keep.begin(), keep.end(), 0);
    std::shuffle(keep.begin(), keep.end(), rng);
    keep.resize(config.max_positives);
    std::sort(keep.begin(), keep.end());
    std::vector<OutfitPair> capped;
    capped.reserve(keep.size());
    for (std::size_t i : keep) capped.push_back(positives[i]);
    positives = std::move(capped);
  }
  if (positives.empty()) throw ConfigInvalid("rule set produced no positive pairs");
  Splits splits = random_splits(positives.size(), config.seed + 1);
  return Corpus(attribute_schema, categories(), config.image_size, std::move(items), std::move(positives),
                std::move(splits));
}

}  // namespace afrec::synthetic
