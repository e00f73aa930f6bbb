#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "afrec/data_model.hpp"

namespace afrec::synthetic {

// Attribute order of the synthetic schema.
enum AttributeIndex : std::size_t { kColour = 0, kTone = 1, kPattern = 2, kLength = 3, kFit = 4, kNumAttributes = 5 };

// Category order of the synthetic category set.
enum CategoryIndex : int { kTee = 0, kTank = 1, kSkirt = 2, kTrousers = 3 };

enum class RuleSet {
  // Hue classes adjacent on the colour wheel, at most one patterned item,
  // opposite tones, top and bottom lengths summing to "medium + medium",
  // fits differ for skirts and agree for trousers.
  Planted,
  AlwaysCompatible,
};

RuleSet rule_set_from_string(const std::string& name);

struct SyntheticConfig {
  int n_tops = 300;
  int n_bottoms = 300;
  int image_size = 64;
  std::uint64_t seed = 7;
  RuleSet rule_set = RuleSet::Planted;
  // Upper bound on |positives|; larger rule outputs are subsampled.
  std::size_t max_positives = 20000;
  // Probability that an attribute label is withheld from the manifest.
  double label_dropout = 0.0;
};

struct Garment {
  Side side = Side::Top;
  int category = kTee;
  std::array<int, kNumAttributes> labels{};

  bool operator==(const Garment&) const = default;
};

AttributeSchema schema();
CategorySet categories();

Image render(const Garment& garment, int image_size);

// Inverse of render(). Throws DecodeError for images render() cannot produce.
Garment decode(const Image& image, Side side);

bool compatible(RuleSet rules, const Garment& top, const Garment& bottom);

Corpus generate(const SyntheticConfig& config);

}  // namespace afrec::synthetic

namespace afrec {

using synthetic::SyntheticConfig;

inline Corpus generate_synthetic_corpus(const SyntheticConfig& config) { return synthetic::generate(config); }

}  // namespace afrec
