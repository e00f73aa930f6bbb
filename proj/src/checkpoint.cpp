#include "afrec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "afrec/errors.hpp"

namespace afrec {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'A', 'F', 'R', 'E', 'C', 'K', 'P', '1'};

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
}

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

}  // namespace

json schema_to_json(const AttributeSchema& schema) {
  json attributes = json::array();
  for (const auto& a : schema.attributes()) attributes.push_back({{"name", a.name}, {"values", a.values}});
  return attributes;
}

AttributeSchema schema_from_json(const json& node) {
  std::vector<Attribute> attributes;
  for (const auto& a : node) {
    attributes.push_back({a.at("name").get<std::string>(), a.at("values").get<std::vector<std::string>>()});
  }
  return AttributeSchema(std::move(attributes));
}

void write_checkpoint(const fs::path& path, const Checkpoint& checkpoint) {
  json header = checkpoint.header;
  json entries = json::array();
  for (const auto& array : checkpoint.arrays) {
    if (element_count(array.shape) != static_cast<std::int64_t>(array.values.size())) {
      throw ShapeMismatch("array '" + array.name + "' shape does not match its data");
    }
    entries.push_back({{"name", array.name}, {"shape", array.shape}});
  }
  header["arrays"] = entries;
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t length = to_little_endian(static_cast<std::uint64_t>(text.size()));
  out.write(reinterpret_cast<const char*>(&length), sizeof length);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& array : checkpoint.arrays) {
    for (double v : array.values) {
      const double le = to_little_endian(v);
      out.write(reinterpret_cast<const char*>(&le), sizeof le);
    }
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ModelError("not an afrec checkpoint: " + path.string());
  std::uint64_t length = 0;
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  length = to_little_endian(length);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw ModelError("truncated checkpoint header: " + path.string());
  Checkpoint checkpoint;
  try {
    checkpoint.header = json::parse(text);
    for (const auto& entry : checkpoint.header.at("arrays")) {
      NamedArray array;
      array.name = entry.at("name").get<std::string>();
      array.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      array.values.resize(static_cast<std::size_t>(element_count(array.shape)));
      for (double& v : array.values) {
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        v = to_little_endian(v);
      }
      if (!in) throw ModelError("truncated checkpoint data: " + path.string());
      checkpoint.arrays.push_back(std::move(array));
    }
  } catch (const json::exception& e) {
    throw ModelError("malformed checkpoint header: " + std::string(e.what()));
  }
  checkpoint.header.erase("arrays");
  return checkpoint;
}

Checkpoint make_checkpoint(const Model& model, const json& extra) {
  Checkpoint checkpoint;
  json header = extra;
  const ModelConfig& config = model.config();
  header["format"] = "afrec-checkpoint";
  header["version"] = 1;
  header["model"] = {{"backbone", to_string(config.backbone.kind)},
                     {"image_size", config.backbone.image_size},
                     {"dim", config.backbone.dim},
                     {"grid", config.backbone.grid},
                     {"sae_bias", config.sae_bias},
                     {"untied_attention", config.untied_attention},
                     {"seed", config.seed},
                     {"projection_noise", config.projection_noise}};
  header["schema"] = schema_to_json(model.schema());
  header["categories"] = model.categories().names();
  header["fingerprint"] = model.fingerprint();
  checkpoint.header = std::move(header);
  ModelParams params = model.params();
  for (const ParamRef& ref : model.parameters(params)) {
    NamedArray array;
    array.name = ref.name;
    array.shape = ref.is_vector ? std::vector<std::int64_t>{ref.rows} : std::vector<std::int64_t>{ref.rows, ref.cols};
    // Stored row-major.
    array.values.reserve(static_cast<std::size_t>(ref.size()));
    const Eigen::Map<const Matrix> m(ref.data, ref.rows, ref.cols);
    for (Eigen::Index r = 0; r < ref.rows; ++r) {
      for (Eigen::Index c = 0; c < ref.cols; ++c) array.values.push_back(m(r, c));
    }
    checkpoint.arrays.push_back(std::move(array));
  }
  return checkpoint;
}

Model model_from_checkpoint(const Checkpoint& checkpoint) {
  const json& h = checkpoint.header;
  try {
    const json& m = h.at("model");
    ModelConfig config;
    config.backbone.kind = backbone_kind_from_string(m.at("backbone").get<std::string>());
    config.backbone.image_size = m.at("image_size").get<int>();
    config.backbone.dim = m.at("dim").get<int>();
    config.backbone.grid = m.at("grid").get<int>();
    config.sae_bias = m.at("sae_bias").get<bool>();
    config.untied_attention = m.at("untied_attention").get<bool>();
    config.seed = m.at("seed").get<std::uint64_t>();
    config.projection_noise = m.at("projection_noise").get<double>();
    Model model(config, schema_from_json(h.at("schema")), CategorySet(h.at("categories").get<std::vector<std::string>>()));

    std::map<std::string, const NamedArray*> by_name;
    for (const auto& array : checkpoint.arrays) by_name[array.name] = &array;
    const std::string prefix = "proj.cc.";
    for (const auto& [name, array] : by_name) {
      if (name.rfind(prefix, 0) != 0) continue;
      const std::string pair = name.substr(prefix.size());
      const auto split = pair.find("__");
      if (split == std::string::npos) throw ModelError("malformed projection name '" + name + "'");
      auto top = model.categories().index(pair.substr(0, split));
      auto bottom = model.categories().index(pair.substr(split + 2));
      if (!top || !bottom) throw SchemaMismatch("projection for unknown category pair '" + pair + "'");
      model.ensure_projection(*top, *bottom);
    }
    for (const ParamRef& ref : model.parameters()) {
      auto it = by_name.find(ref.name);
      if (it == by_name.end()) throw ModelError("checkpoint is missing '" + ref.name + "'");
      const NamedArray& array = *it->second;
      const auto expected =
          ref.is_vector ? std::vector<std::int64_t>{ref.rows} : std::vector<std::int64_t>{ref.rows, ref.cols};
      if (array.shape != expected) throw ShapeMismatch("checkpoint array '" + ref.name + "' has the wrong shape");
      Eigen::Map<Matrix> dst(ref.data, ref.rows, ref.cols);
      std::size_t i = 0;
      for (Eigen::Index r = 0; r < ref.rows; ++r) {
        for (Eigen::Index c = 0; c < ref.cols; ++c) dst(r, c) = array.values[i++];
      }
      by_name.erase(it);
    }
    if (!by_name.empty()) throw ModelError("checkpoint has unexpected array '" + by_name.begin()->first + "'");
    return model;
  } catch (const json::exception& e) {
    throw ModelError("malformed checkpoint header: " + std::string(e.what()));
  }
}

void check_schema(const Checkpoint& checkpoint, const AttributeSchema& schema, const CategorySet& categories) {
  const std::string expected = schema_fingerprint(schema, categories);
  const std::string actual = checkpoint.header.value("fingerprint", std::string());
  if (actual != expected) {
    throw SchemaMismatch("checkpoint schema fingerprint " + actual + " does not match data " + expected);
  }
}

}  // namespace afrec
