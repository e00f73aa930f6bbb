#include "afrec/data_model.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "afrec/errors.hpp"
#include "afrec/png_io.hpp"
#include "json.hpp"

namespace afrec {

namespace fs = std::filesystem;
using json = nlohmann::json;

AttributeSchema::AttributeSchema(std::vector<Attribute> attributes)
    : attributes_(std::move(attributes)) {
  if (attributes_.empty()) throw SchemaViolation("schema needs at least one attribute");
  std::set<std::string> names;
  for (const auto& attribute : attributes_) {
    if (!names.insert(attribute.name).second) {
      throw SchemaViolation("duplicate attribute name '" + attribute.name + "'");
    }
    if (attribute.values.size() < 2) {
      throw SchemaViolation("attribute '" + attribute.name + "' needs at least two values");
    }
    std::set<std::string> values(attribute.values.begin(), attribute.values.end());
    if (values.size() != attribute.values.size()) {
      throw SchemaViolation("duplicate value in attribute '" + attribute.name + "'");
    }
  }
}

std::vector<int> AttributeSchema::value_counts() const {
  std::vector<int> counts;
  counts.reserve(attributes_.size());
  for (const auto& attribute : attributes_) counts.push_back(static_cast<int>(attribute.values.size()));
  return counts;
}

std::optional<std::size_t> AttributeSchema::find(const std::string& name) const {
  for (std::size_t k = 0; k < attributes_.size(); ++k) {
    if (attributes_[k].name == name) return k;
  }
  return std::nullopt;
}

std::optional<int> AttributeSchema::value_index(std::size_t k, const std::string& value) const {
  const auto& values = attributes_.at(k).values;
  auto it = std::find(values.begin(), values.end(), value);
  if (it == values.end()) return std::nullopt;
  return static_cast<int>(it - values.begin());
}

CategorySet::CategorySet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw SchemaViolation("category set is empty");
  std::set<std::string> unique(names_.begin(), names_.end());
  if (unique.size() != names_.size()) throw SchemaViolation("duplicate category name");
}

std::optional<int> CategorySet::index(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<int>(it - names_.begin());
}

const char* to_string(Side side) { return side == Side::Top ? "top" : "bottom"; }

Side side_from_string(const std::string& text) {
  if (text == "top") return Side::Top;
  if (text == "bottom") return Side::Bottom;
  throw SchemaViolation("unknown side '" + text + "'");
}

Splits random_splits(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
  const auto n_valid =
      std::min(n - n_train, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n))));
  Splits splits;
  splits.train.assign(order.begin(), order.begin() + n_train);
  splits.valid.assign(order.begin() + n_train, order.begin() + n_train + n_valid);
  splits.test.assign(order.begin() + n_train + n_valid, order.end());
  for (auto* s : {&splits.train, &splits.valid, &splits.test}) std::sort(s->begin(), s->end());
  return splits;
}

namespace {

std::uint64_t pair_key(std::size_t top, std::size_t bottom) {
  return (static_cast<std::uint64_t>(top) << 32) | static_cast<std::uint64_t>(bottom);
}

}  // namespace

Corpus::Corpus(AttributeSchema schema, CategorySet categories, int image_size, std::vector<Item> items,
               std::vector<OutfitPair> positives, Splits splits)
    : schema_(std::move(schema)),
      categories_(std::move(categories)),
      image_size_(image_size),
      items_(std::move(items)),
      positives_(std::move(positives)),
      splits_(std::move(splits)) {
  if (positives_.empty()) throw EmptyCorpus("corpus has no positive pairs");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const Item& item = items_[i];
    if (!index_.emplace(item.id, i).second) throw SchemaViolation("duplicate item id '" + item.id + "'");
    if (item.image.channels != 3 || item.image.height != image_size_ || item.image.width != image_size_) {
      throw SchemaViolation("item '" + item.id + "' image is not 3x" + std::to_string(image_size_) + "x" +
                            std::to_string(image_size_));
    }
    if (item.category < 0 || static_cast<std::size_t>(item.category) >= categories_.size()) {
      throw SchemaViolation("item '" + item.id + "' category out of range");
    }
    if (item.attribute_labels.size() != schema_.size()) {
      throw SchemaViolation("item '" + item.id + "' has the wrong number of attribute labels");
    }
    for (std::size_t k = 0; k < schema_.size(); ++k) {
      const auto& label = item.attribute_labels[k];
      if (label && (*label < 0 || static_cast<std::size_t>(*label) >= schema_[k].values.size())) {
        throw SchemaViolation("item '" + item.id + "' label for '" + schema_[k].name + "' out of range");
      }
    }
    (item.side == Side::Top ? tops_ : bottoms_).push_back(i);
  }
  for (const auto& pair : positives_) {
    auto top = find(pair.top_id);
    auto bottom = find(pair.bottom_id);
    if (!top) throw DanglingPairReference("pair references unknown item '" + pair.top_id + "'");
    if (!bottom) throw DanglingPairReference("pair references unknown item '" + pair.bottom_id + "'");
    if (items_[*top].side != Side::Top || items_[*bottom].side != Side::Bottom) {
      throw SchemaViolation("pair (" + pair.top_id + ", " + pair.bottom_id + ") is not top-bottom");
    }
    positive_indices_.push_back({*top, *bottom});
    positive_keys_.insert(pair_key(*top, *bottom));
  }
  std::vector<int> seen(positives_.size(), 0);
  for (const auto* split : {&splits_.train, &splits_.valid, &splits_.test}) {
    for (std::size_t index : *split) {
      if (index >= positives_.size()) throw SchemaViolation("split index out of range");
      ++seen[index];
    }
  }
  if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; })) {
    throw SchemaViolation("splits must partition the positives");
  }
}

std::optional<std::size_t> Corpus::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Corpus::index_of(const std::string& id) const {
  auto index = find(id);
  if (!index) throw DanglingPairReference("unknown item '" + id + "'");
  return *index;
}

std::vector<std::size_t> Corpus::split_items(const std::vector<std::size_t>& split) const {
  std::set<std::size_t> members;
  for (std::size_t p : split) {
    members.insert(positive_indices_.at(p).top);
    members.insert(positive_indices_.at(p).bottom);
  }
  return {members.begin(), members.end()};
}

bool Corpus::is_positive(std::size_t top, std::size_t bottom) const {
  return positive_keys_.count(pair_key(top, bottom)) != 0;
}

bool Corpus::operator==(const Corpus& other) const {
  return schema_ == other.schema_ && categories_ == other.categories_ && image_size_ == other.image_size_ &&
         items_ == other.items_ && positives_ == other.positives_ && splits_ == other.splits_;
}

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaViolation("cannot open manifest " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaViolation("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
}

std::vector<std::size_t> index_list(const json& node) {
  std::vector<std::size_t> out;
  for (const auto& v : node) out.push_back(v.get<std::size_t>());
  return out;
}

}  // namespace

Corpus load_corpus(const fs::path& manifest_path, std::uint64_t split_seed) {
  const json doc = read_json(manifest_path);
  const fs::path root = manifest_path.parent_path();
  try {
    std::vector<Attribute> attributes;
    for (const auto& a : doc.at("schema").at("attributes")) {
      attributes.push_back({a.at("name").get<std::string>(), a.at("values").get<std::vector<std::string>>()});
    }
    AttributeSchema schema(std::move(attributes));
    CategorySet categories(doc.at("categories").get<std::vector<std::string>>());

    std::optional<int> image_size;
    if (doc.contains("image_size")) image_size = doc.at("image_size").get<int>();

    std::vector<Item> items;
    for (const auto& node : doc.at("items")) {
      Item item;
      item.id = node.at("id").get<std::string>();
      item.side = side_from_string(node.at("side").get<std::string>());
      const fs::path image_path = root / node.at("image").get<std::string>();
      if (!fs::exists(image_path)) throw MissingImage("image not found: " + image_path.string());
      item.image = read_png(image_path);
      if (!image_size) image_size = item.image.height;
      const auto category_name = node.at("category").get<std::string>();
      auto category = categories.index(category_name);
      if (!category) throw SchemaViolation("unknown category '" + category_name + "' on " + item.id);
      item.category = *category;
      item.attribute_labels.assign(schema.size(), std::nullopt);
      if (node.contains("attributes")) {
        for (const auto& [name, value] : node.at("attributes").items()) {
          auto k = schema.find(name);
          if (!k) throw SchemaViolation("unknown attribute '" + name + "' on " + item.id);
          if (value.is_null()) continue;
          auto v = schema.value_index(*k, value.get<std::string>());
          if (!v) {
            throw SchemaViolation("unknown value '" + value.get<std::string>() + "' for attribute '" + name +
                                  "' on " + item.id);
          }
          item.attribute_labels[*k] = *v;
        }
      }
      items.push_back(std::move(item));
    }

    std::vector<OutfitPair> positives;
    for (const auto& p : doc.at("positives")) {
      positives.push_back({p.at(0).get<std::string>(), p.at(1).get<std::string>()});
    }
    Splits splits;
    if (doc.contains("splits") && !doc.at("splits").is_null()) {
      const auto& s = doc.at("splits");
      splits.train = index_list(s.at("train"));
      splits.valid = index_list(s.at("valid"));
      splits.test = index_list(s.at("test"));
    } else {
      splits = random_splits(positives.size(), split_seed);
    }
    return Corpus(std::move(schema), std::move(categories), image_size.value_or(0), std::move(items),
                  std::move(positives), std::move(splits));
  } catch (const json::exception& e) {
    throw SchemaViolation("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
}

fs::path save_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir / "images");
  json doc;
  json attributes = json::array();
  for (const auto& a : corpus.schema().attributes()) attributes.push_back({{"name", a.name}, {"values", a.values}});
  doc["schema"] = {{"attributes", attributes}};
  doc["categories"] = corpus.categories().names();
  doc["image_size"] = corpus.image_size();
  json items = json::array();
  for (const Item& item : corpus.items()) {
    const std::string relative = "images/" + item.id + ".png";
    write_png(dir / relative, item.image);
    json labels = json::object();
    for (std::size_t k = 0; k < corpus.schema().size(); ++k) {
      if (item.attribute_labels[k]) {
        labels[corpus.schema()[k].name] = corpus.schema()[k].values[*item.attribute_labels[k]];
      }
    }
    items.push_back({{"id", item.id},
                     {"side", to_string(item.side)},
                     {"image", relative},
                     {"category", corpus.categories()[item.category]},
                     {"attributes", labels}});
  }
  doc["items"] = items;
  json positives = json::array();
  for (const auto& p : corpus.positives()) positives.push_back({p.top_id, p.bottom_id});
  doc["positives"] = positives;
  doc["splits"] = {{"train", corpus.splits().train},
                   {"valid", corpus.splits().valid},
                   {"test", corpus.splits().test}};
  const fs::path manifest = dir / "manifest.json";
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write " + manifest.string());
  out << doc.dump(1) << '\n';
  return manifest;
}

TripleSampler::TripleSampler(const Corpus& corpus) : corpus_(corpus) {
  if (corpus.splits().train.empty()) throw EmptyCorpus("training split is empty");
  for (std::size_t p : corpus.splits().train) {
    const auto& pair = corpus.positive_indices()[p];
    bottoms_of_top_[pair.top].insert(pair.bottom);
    tops_of_bottom_[pair.bottom].insert(pair.top);
  }
}

namespace {

// Rejection sampling over the candidate pool is exactly uniform over the
// candidates outside `excluded`.
std::size_t draw_excluding(const std::vector<std::size_t>& pool, const std::unordered_set<std::size_t>* excluded,
                           std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  while (true) {
    const std::size_t candidate = pool[pick(rng)];
    if (!excluded || excluded->count(candidate) == 0) return candidate;
  }
}

}  // namespace

std::size_t TripleSampler::negative_bottom(std::size_t top, std::mt19937_64& rng) const {
  auto it = bottoms_of_top_.find(top);
  const auto* excluded = it == bottoms_of_top_.end() ? nullptr : &it->second;
  if (corpus_.bottoms().empty() || (excluded && excluded->size() >= corpus_.bottoms().size())) {
    throw NoNegativeAvailable("top '" + corpus_.item(top).id + "' matches every bottom");
  }
  return draw_excluding(corpus_.bottoms(), excluded, rng);
}

std::size_t TripleSampler::negative_top(std::size_t bottom, std::mt19937_64& rng) const {
  auto it = tops_of_bottom_.find(bottom);
  const auto* excluded = it == tops_of_bottom_.end() ? nullptr : &it->second;
  if (corpus_.tops().empty() || (excluded && excluded->size() >= corpus_.tops().size())) {
    throw NoNegativeAvailable("bottom '" + corpus_.item(bottom).id + "' matches every top");
  }
  return draw_excluding(corpus_.tops(), excluded, rng);
}

TrainingTriple TripleSampler::sample(std::size_t positive, std::mt19937_64& rng) const {
  const auto& pair = corpus_.positive_indices().at(positive);
  TrainingTriple triple{pair.top, pair.bottom, 0, 0};
  triple.neg_bottom = negative_bottom(pair.top, rng);
  triple.neg_top = negative_top(pair.bottom, rng);
  return triple;
}

std::vector<TrainingTriple> TripleSampler::epoch(std::mt19937_64& rng) const {
  std::vector<std::size_t> order = corpus_.splits().train;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<TrainingTriple> triples;
  triples.reserve(order.size());
  for (std::size_t p : order) triples.push_back(sample(p, rng));
  return triples;
}

std::vector<TrainingTriple> sample_training_triples(const Corpus& corpus, std::size_t batch_size,
                                                    std::uint64_t rng_seed) {
  TripleSampler sampler(corpus);
  std::mt19937_64 rng(rng_seed);
  const auto& train = corpus.splits().train;
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  std::vector<TrainingTriple> triples;
  triples.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) triples.push_back(sampler.sample(train[pick(rng)], rng));
  return triples;
}

}  // namespace afrec
