#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "afrec/tensor.hpp"

namespace afrec {

struct Attribute {
  std::string name;
  std::vector<std::string> values;

  bool operator==(const Attribute&) const = default;
};

// Ordered attribute list. Index k of an attribute is fixed for the lifetime
// of the schema.
class AttributeSchema {
 public:
  AttributeSchema() = default;
  explicit AttributeSchema(std::vector<Attribute> attributes);

  std::size_t size() const { return attributes_.size(); }
  const Attribute& operator[](std::size_t k) const { return attributes_.at(k); }
  const std::vector<Attribute>& attributes() const { return attributes_; }
  std::vector<int> value_counts() const;

  std::optional<std::size_t> find(const std::string& name) const;
  std::optional<int> value_index(std::size_t k, const std::string& value) const;

  bool operator==(const AttributeSchema& other) const { return attributes_ == other.attributes_; }

 private:
  std::vector<Attribute> attributes_;
};

class CategorySet {
 public:
  CategorySet() = default;
  explicit CategorySet(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::string& operator[](std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const { return names_; }
  std::optional<int> index(const std::string& name) const;

  bool operator==(const CategorySet& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
};

enum class Side { Top, Bottom };

const char* to_string(Side side);
Side side_from_string(const std::string& text);

using AttributeLabels = std::vector<std::optional<int>>;

struct Item {
  std::string id;
  Side side = Side::Top;
  Image image;
  int category = 0;
  AttributeLabels attribute_labels;

  bool operator==(const Item&) const = default;
};

struct OutfitPair {
  std::string top_id;
  std::string bottom_id;

  bool operator==(const OutfitPair&) const = default;
};

// Index sets over Corpus::positives().
struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;

  bool operator==(const Splits&) const = default;
};

// Seeded random 80/10/10 partition of n positives.
Splits random_splits(std::size_t n, std::uint64_t seed);

struct PairIndex {
  std::size_t top;
  std::size_t bottom;

  bool operator==(const PairIndex&) const = default;
};

// Validated, immutable dataset. Construction checks every invariant and
// throws a DataError subclass on violation.
class Corpus {
 public:
  Corpus(AttributeSchema schema, CategorySet categories, int image_size, std::vector<Item> items,
         std::vector<OutfitPair> positives, Splits splits);

  const AttributeSchema& schema() const { return schema_; }
  const CategorySet& categories() const { return categories_; }
  int image_size() const { return image_size_; }
  const std::vector<Item>& items() const { return items_; }
  const std::vector<OutfitPair>& positives() const { return positives_; }
  const std::vector<PairIndex>& positive_indices() const { return positive_indices_; }
  const Splits& splits() const { return splits_; }

  const Item& item(std::size_t index) const { return items_.at(index); }
  std::optional<std::size_t> find(const std::string& id) const;
  std::size_t index_of(const std::string& id) const;

  const std::vector<std::size_t>& tops() const { return tops_; }
  const std::vector<std::size_t>& bottoms() const { return bottoms_; }

  // Items touched by the positives of one split, ascending.
  std::vector<std::size_t> split_items(const std::vector<std::size_t>& split) const;

  bool is_positive(std::size_t top, std::size_t bottom) const;

  bool operator==(const Corpus& other) const;

 private:
  AttributeSchema schema_;
  CategorySet categories_;
  int image_size_;
  std::vector<Item> items_;
  std::vector<OutfitPair> positives_;
  std::vector<PairIndex> positive_indices_;
  Splits splits_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::size_t> tops_;
  std::vector<std::size_t> bottoms_;
  std::unordered_set<std::uint64_t> positive_keys_;
};

// Reads a JSON manifest. Image paths are resolved relative to the manifest's
// directory. Without explicit splits, positives are split 80/10/10 using
// split_seed.
Corpus load_corpus(const std::filesystem::path& manifest_path, std::uint64_t split_seed = 7);

// Writes manifest.json plus images/<id>.png under dir; returns the manifest path.
std::filesystem::path save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

struct TrainingTriple {
  std::size_t top;
  std::size_t pos_bottom;
  std::size_t neg_bottom;
  std::size_t neg_top;

  bool operator==(const TrainingTriple&) const = default;
};

// Uniform negative sampling against the training positives.
class TripleSampler {
 public:
  explicit TripleSampler(const Corpus& corpus);

  TrainingTriple sample(std::size_t positive, std::mt19937_64& rng) const;
  std::size_t negative_bottom(std::size_t top, std::mt19937_64& rng) const;
  std::size_t negative_top(std::size_t bottom, std::mt19937_64& rng) const;

  // One shuffled pass over the training positives.
  std::vector<TrainingTriple> epoch(std::mt19937_64& rng) const;

 private:
  const Corpus& corpus_;
  std::unordered_map<std::size_t, std::unordered_set<std::size_t>> bottoms_of_top_;
  std::unordered_map<std::size_t, std::unordered_set<std::size_t>> tops_of_bottom_;
};

// batch_size anchors drawn uniformly (with replacement) from the training
// split, each with one corrupted bottom and one corrupted top.
std::vector<TrainingTriple> sample_training_triples(const Corpus& corpus, std::size_t batch_size,
                                                    std::uint64_t rng_seed);

}  // namespace afrec
