#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "afrec/checkpoint.hpp"
#include "afrec/errors.hpp"
#include "afrec/training.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace afrec;
using afrec::testing::micro_config;
using afrec::testing::micro_corpus;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "afrec_checkpoint";
  fs::create_directories(dir);
  return dir / name;
}

Model trained_micro() {
  const Corpus corpus = micro_corpus();
  TrainConfig config;
  config.profile = Profile::Micro;
  config.epochs = 2;
  config.sae_epochs = 1;
  config.batch_size = 2;
  return train(corpus, config).model;
}

}  // namespace

TEST_CASE("load then save is byte-stable") {
  const Corpus corpus = micro_corpus();
  TrainConfig config;
  config.profile = Profile::Micro;
  config.epochs = 1;
  config.sae_epochs = 1;
  const TrainResult result = train(corpus, config);
  const fs::path first = scratch("first.ckpt"), second = scratch("second.ckpt");
  write_checkpoint(first, result.checkpoint());
  const Checkpoint loaded = read_checkpoint(first);
  write_checkpoint(second, loaded);
  CHECK(slurp(first) == slurp(second));

  const Model model = model_from_checkpoint(loaded);
  write_checkpoint(second, make_checkpoint(model, {{"train", loaded.header["train"]},
                                                   {"epoch", loaded.header["epoch"]},
                                                   {"rng_state", loaded.header["rng_state"]}}));
  CHECK(slurp(first) == slurp(second));
  CHECK(loaded.header["train"]["variant"] == "full");
  CHECK(loaded.header.contains("fingerprint"));
  CHECK(loaded.header.contains("rng_state"));
}

TEST_CASE("restored model scores identically") {
  const Corpus corpus = micro_corpus();
  const Model model = trained_micro();
  const Model restored = model_from_checkpoint(make_checkpoint(model));
  for (std::size_t t : corpus.tops()) {
    for (std::size_t b : corpus.bottoms()) {
      CHECK(score_pair(model, corpus.item(t), corpus.item(b)).score ==
            score_pair(restored, corpus.item(t), corpus.item(b)).score);
    }
  }
  CHECK(restored.params().projections.pairs.size() == model.params().projections.pairs.size());
}

TEST_CASE("file layout") {
  const Model model(micro_config(), afrec::testing::micro_schema(), afrec::testing::micro_categories());
  const fs::path path = scratch("layout.ckpt");
  const Checkpoint checkpoint = make_checkpoint(model);
  write_checkpoint(path, checkpoint);
  const std::string bytes = slurp(path);
  REQUIRE(bytes.size() > 16);
  CHECK(bytes.substr(0, 8) == "AFRECKP1");
  std::uint64_t header_length = 0;
  for (int i = 7; i >= 0; --i) header_length = (header_length << 8) | static_cast<unsigned char>(bytes[8 + static_cast<std::size_t>(i)]);
  const auto header = nlohmann::json::parse(bytes.substr(16, header_length));
  std::size_t values = 0;
  for (const auto& array : header["arrays"]) {
    std::size_t n = 1;
    for (const auto& extent : array["shape"]) n *= extent.get<std::size_t>();
    values += n;
  }
  CHECK(bytes.size() == 16 + header_length + 8 * values);
  CHECK(header["arrays"][0]["name"] == "backbone.conv0.weight");

  // First stored double is the first weight in row-major order.
  double first = 0.0;
  std::memcpy(&first, bytes.data() + 16 + header_length, sizeof first);
  CHECK(first == model.params().backbone.convs[0].weight(0, 0));
}

TEST_CASE("corrupt checkpoints are rejected") {
  const Model model(micro_config(), afrec::testing::micro_schema(), afrec::testing::micro_categories());
  const fs::path path = scratch("corrupt.ckpt");
  write_checkpoint(path, make_checkpoint(model));
  const std::string bytes = slurp(path);

  std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  CHECK_THROWS_AS(read_checkpoint(path), ModelError);
  std::ofstream(path, std::ios::binary) << "NOTACKPT" << bytes.substr(8);
  CHECK_THROWS_AS(read_checkpoint(path), ModelError);
  CHECK_THROWS_AS(read_checkpoint(scratch("absent.ckpt")), ModelError);

  Checkpoint missing = make_checkpoint(model);
  missing.arrays.pop_back();
  CHECK_THROWS_AS(model_from_checkpoint(missing), ModelError);
  Checkpoint extra = make_checkpoint(model);
  extra.arrays.push_back({"attn.extra", {1}, {0.0}});
  CHECK_THROWS_AS(model_from_checkpoint(extra), ModelError);
  Checkpoint reshaped = make_checkpoint(model);
  reshaped.arrays[0].shape = {1, static_cast<std::int64_t>(reshaped.arrays[0].values.size())};
  CHECK_THROWS_AS(model_from_checkpoint(reshaped), ShapeMismatch);
}

TEST_CASE("schema fingerprint must match") {
  const Model model(micro_config(), afrec::testing::micro_schema(), afrec::testing::micro_categories());
  const Checkpoint checkpoint = make_checkpoint(model);
  CHECK_NOTHROW(check_schema(checkpoint, model.schema(), model.categories()));
  CHECK_THROWS_AS(check_schema(checkpoint, model.schema(), CategorySet({"shirt", "skirt"})), SchemaMismatch);
  CHECK_THROWS_AS(check_schema(checkpoint, AttributeSchema({{"hue", {"warm", "cool"}}}), model.categories()),
                  SchemaMismatch);
  CHECK(schema_from_json(schema_to_json(model.schema())) == model.schema());
  CHECK(model.fingerprint() == schema_fingerprint(model.schema(), model.categories()));
  CHECK(model.fingerprint() != schema_fingerprint(model.schema(), CategorySet({"a", "b"})));
}

TEST_CASE("canonical parameter names") {
  ModelConfig config = micro_config();
  config.untied_attention = true;
  Model model(config, afrec::testing::micro_schema(), afrec::testing::micro_categories());
  model.ensure_projection(0, 1);
  std::vector<std::string> names;
  for (const auto& ref : model.parameters()) names.push_back(ref.name);
  const std::vector<std::string> expected{
      "backbone.conv0.weight", "backbone.conv0.bias", "backbone.conv1.weight", "backbone.conv1.bias",
      "category_head.W", "category_head.b",
      "sae.block.0.W", "sae.block.0.b", "sae.block.1.W", "sae.block.1.b", "sae.block.2.W", "sae.block.2.b",
      "sae.head.0.W", "sae.head.0.b", "sae.head.1.W", "sae.head.1.b", "sae.head.2.W", "sae.head.2.b",
      "attn.w", "attn.W1", "attn.W2", "attn.bottom.w", "attn.bottom.W1", "attn.bottom.W2",
      "proj.cc.shirt__jeans", "proj.compat"};
  CHECK(names == expected);
}
