#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "afrec/model.hpp"
#include "json.hpp"

namespace afrec {

struct NamedArray {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> values;

  bool operator==(const NamedArray&) const = default;
};

// File layout: 8-byte magic "AFRECKP1", u64 little-endian header length, the
// UTF-8 JSON header, then every array as little-endian IEEE-754 doubles in
// header order.
struct Checkpoint {
  nlohmann::json header;
  std::vector<NamedArray> arrays;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// extra is merged into the header (config echo, epoch, RNG state).
Checkpoint make_checkpoint(const Model& model, const nlohmann::json& extra = nlohmann::json::object());

Model model_from_checkpoint(const Checkpoint& checkpoint);

// Throws SchemaMismatch when the checkpoint was trained on another schema.
void check_schema(const Checkpoint& checkpoint, const AttributeSchema& schema, const CategorySet& categories);

nlohmann::json schema_to_json(const AttributeSchema& schema);
AttributeSchema schema_from_json(const nlohmann::json& node);

}  // namespace afrec
