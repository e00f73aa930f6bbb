#include <array>
#include <set>

#include "afrec/errors.hpp"
#include "afrec/synthetic.hpp"
#include "doctest.h"

using namespace afrec;
namespace syn = afrec::synthetic;

namespace {

// Independent statement of the planted pairing rule, on decoded garments.
bool rule_oracle(const syn::Garment& top, const syn::Garment& bottom) {
  const int colour_gap = (top.labels[0] - bottom.labels[0] + 6) % 6;
  const bool adjacent = colour_gap == 1 || colour_gap == 5;
  const bool one_pattern_at_most = top.labels[2] == 0 || bottom.labels[2] == 0;
  const bool contrast = top.labels[1] != bottom.labels[1];
  const bool lengths = top.labels[3] + bottom.labels[3] == 2;
  const bool fits = (bottom.category == 2) == (top.labels[4] != bottom.labels[4]);
  return adjacent && one_pattern_at_most && contrast && lengths && fits;
}

std::set<std::pair<std::string, std::string>> pair_set(const Corpus& corpus) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& p : corpus.positives()) out.insert({p.top_id, p.bottom_id});
  return out;
}

}  // namespace

TEST_CASE("generation is deterministic under a seed") {
  syn::SyntheticConfig config;
  config.n_tops = 40;
  config.n_bottoms = 30;
  const Corpus a = syn::generate(config);
  const Corpus b = syn::generate(config);
  CHECK(a == b);
  config.seed = 8;
  CHECK_FALSE(syn::generate(config) == a);
}

TEST_CASE("always-compatible rule pairs everything up to the cap") {
  syn::SyntheticConfig config;
  config.n_tops = 12;
  config.n_bottoms = 10;
  config.rule_set = syn::RuleSet::AlwaysCompatible;
  CHECK(syn::generate(config).positives().size() == 120);
  config.max_positives = 50;
  const Corpus capped = syn::generate(config);
  CHECK(capped.positives().size() == 50);
  CHECK(capped == syn::generate(config));
}

TEST_CASE("planted positives equal the rule applied to every decoded label pair") {
  const Corpus corpus = syn::generate(syn::SyntheticConfig{});
  std::vector<syn::Garment> tops, bottoms;
  std::vector<std::string> top_ids, bottom_ids;
  for (const Item& item : corpus.items()) {
    const syn::Garment g = syn::decode(item.image, item.side);
    (item.side == Side::Top ? tops : bottoms).push_back(g);
    (item.side == Side::Top ? top_ids : bottom_ids).push_back(item.id);
  }
  std::set<std::pair<std::string, std::string>> expected;
  for (std::size_t t = 0; t < tops.size(); ++t) {
    for (std::size_t b = 0; b < bottoms.size(); ++b) {
      if (rule_oracle(tops[t], bottoms[b])) expected.insert({top_ids[t], bottom_ids[b]});
    }
  }
  CHECK(pair_set(corpus) == expected);
  const double fraction = static_cast<double>(corpus.positives().size()) / (300.0 * 300.0);

  // Over uniformly drawn labels and categories the rule admits 5/324 of pairs.
  int admitted = 0, total = 0;
  syn::Garment t{Side::Top, 0, {}}, b{Side::Bottom, 2, {}};
  for (int tc = 0; tc < 2; ++tc)
    for (int bc = 2; bc < 4; ++bc)
      for (int i = 0; i < 6 * 2 * 3 * 3 * 2; ++i)
        for (int j = 0; j < 6 * 2 * 3 * 3 * 2; ++j) {
          int x = i, y = j;
          for (int k : {0, 1, 2, 3, 4}) {
            const int n = std::array<int, 5>{6, 2, 3, 3, 2}[static_cast<std::size_t>(k)];
            t.labels[static_cast<std::size_t>(k)] = x % n;
            b.labels[static_cast<std::size_t>(k)] = y % n;
            x /= n;
            y /= n;
          }
          t.category = tc;
          b.category = bc;
          admitted += rule_oracle(t, b);
          ++total;
        }
  CHECK(admitted * 324 == total * 5);
  CHECK(std::abs(fraction - 5.0 / 324.0) < 0.004);
}

TEST_CASE("the inverse renderer recovers every planted label") {
  for (int size : {32, 64, 96}) {
    CAPTURE(size);
    syn::SyntheticConfig config;
    config.image_size = size;
    config.n_tops = 120;
    config.n_bottoms = 120;
    const Corpus corpus = syn::generate(config);
    std::size_t mismatches = 0;
    for (const Item& item : corpus.items()) {
      const syn::Garment g = syn::decode(item.image, item.side);
      mismatches += g.category != item.category;
      for (std::size_t k = 0; k < syn::kNumAttributes; ++k) mismatches += g.labels[k] != *item.attribute_labels[k];
    }
    CHECK(mismatches == 0);
  }
}

TEST_CASE("rendering is injective over label tuples") {
  std::set<std::vector<double>> seen;
  std::size_t rendered = 0;
  for (int category = 0; category < 4; ++category) {
    syn::Garment g;
    g.side = category < 2 ? Side::Top : Side::Bottom;
    g.category = category;
    for (int code = 0; code < 6 * 2 * 3 * 3 * 2; ++code) {
      int x = code;
      for (std::size_t k = 0; k < 5; ++k) {
        const int n = std::array<int, 5>{6, 2, 3, 3, 2}[k];
        g.labels[k] = x % n;
        x /= n;
      }
      const Image image = syn::render(g, 64);
      seen.insert(std::vector<double>(image.data.data(), image.data.data() + image.data.size()));
      ++rendered;
    }
  }
  CHECK(seen.size() == rendered);
}

TEST_CASE("generator configuration checks") {
  syn::SyntheticConfig config;
  config.n_tops = 9;
  CHECK_THROWS_AS(syn::generate(config), ConfigInvalid);
  config = {};
  config.image_size = 31;
  CHECK_THROWS_AS(syn::generate(config), ConfigInvalid);
  config = {};
  config.label_dropout = 1.0;
  CHECK_THROWS_AS(syn::generate(config), ConfigInvalid);
  CHECK_THROWS_AS(syn::rule_set_from_string("sometimes"), ConfigInvalid);
  CHECK_THROWS_AS(syn::render(syn::Garment{Side::Top, syn::kSkirt, {}}, 64), ConfigInvalid);
}

TEST_CASE("label dropout withholds labels but keeps images") {
  syn::SyntheticConfig config;
  config.n_tops = 50;
  config.n_bottoms = 50;
  config.label_dropout = 0.3;
  const Corpus dropped = syn::generate(config);
  std::size_t missing = 0, total = 0;
  for (const Item& item : dropped.items()) {
    for (const auto& label : item.attribute_labels) {
      missing += !label;
      ++total;
    }
  }
  const double rate = static_cast<double>(missing) / total;
  CHECK(rate > 0.25);
  CHECK(rate < 0.35);
}

TEST_CASE("decode rejects images outside the renderer's range") {
  Image blank(3, 64, 64);
  CHECK_THROWS_AS(syn::decode(blank, Side::Top), DecodeError);
  Image odd(3, 64, 64);
  odd.data.setConstant(0.123);
  CHECK_THROWS_AS(syn::decode(odd, Side::Top), DecodeError);
}
