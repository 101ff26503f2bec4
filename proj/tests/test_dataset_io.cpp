#include <filesystem>
#include <fstream>

#include "dmcl/dataset_io.hpp"
#include "support.hpp"

using namespace dmcl;
using namespace dmcl::data;
namespace fs = std::filesystem;

namespace {

DialogueInstance sample_dialogue() {
  return {"d1", "img_7", "a dog on a beach", {{"what color?", "brown"}, {"any people?", "no"}}};
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dmcl_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_raw(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
}

std::string read_raw(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("concat_context") {
  const auto d = sample_dialogue();
  CHECK(concat_context(d, 0) == "a dog on a beach");
  CHECK(concat_context(d, 1) == "a dog on a beach, what color?, brown");
  CHECK(concat_context(d, 2) == "a dog on a beach, what color?, brown, any people?, no");
  CHECK_ERRC(concat_context(d, 3), Errc::RoundOutOfRange);
  for (std::size_t n = 1; n <= 2; ++n) CHECK(concat_context(d, n).starts_with(concat_context(d, n - 1)));
}

TEST_CASE("build_triples") {
  auto d2 = sample_dialogue();
  d2.instance_id = "d2";
  d2.rounds.pop_back();
  const Generator gen = [](const std::string& s) { return Embedding{static_cast<double>(s.size()), 1.0}; };
  const auto triples = build_triples({sample_dialogue(), d2}, identity_reformulator, gen);
  REQUIRE(triples.size() == 5);
  CHECK(triples[0].instance_id == "d1");
  CHECK(triples[2].round == 2);
  CHECK(triples[3].instance_id == "d2");
  CHECK(triples[3].round == 0);
  CHECK(triples[1].context_text == "a dog on a beach, what color?, brown");
  CHECK(triples[1].proxy_feature[0] == static_cast<double>(triples[1].context_text.size()));
  CHECK(triples[4].target_id == "img_7");
  CHECK(build_triples({}, identity_reformulator, gen).empty());

  const Reformulator bad_reform = [](const std::string&) -> std::string { throw std::runtime_error("quota"); };
  CHECK_ERRC(build_triples({sample_dialogue()}, bad_reform, gen), Errc::StageFailure);
  const Generator bad_gen = [](const std::string&) -> Embedding { throw Error(Errc::ZeroVector, "x"); };
  CHECK_ERRC(build_triples({sample_dialogue()}, identity_reformulator, bad_gen), Errc::StageFailure);
}

TEST_CASE("embedding store") {
  CHECK_ERRC(EmbeddingStore({"a", "a"}, Matrix(2, 3)), Errc::DuplicateId);
  CHECK_ERRC(EmbeddingStore({"a"}, Matrix(2, 3)), Errc::DimensionMismatch);
  const EmbeddingStore s({"x", "y"}, Matrix::from_rows({{1, 2}, {3, 4}}));
  CHECK(s.find("y") == std::optional<std::size_t>(1));
  CHECK_FALSE(s.find("z").has_value());
}

TEST_CASE("store round-trip") {
  const auto dir = scratch_dir("store");
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = rng.below(6), d = 1 + rng.below(9);
    std::vector<std::string> ids;
    Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i) ids.push_back("id-" + std::to_string(trial) + "-" + std::to_string(i));
    for (double& v : m.data()) v = static_cast<double>(static_cast<float>(rng.normal()));
    const EmbeddingStore s(ids, m);
    write_store(dir / "s", s);
    const auto back = read_store(dir / "s");
    CHECK(back.ids() == ids);
    CHECK(back.matrix().data() == m.data());
  }

  write_store(dir / "t", EmbeddingStore({"a", "b"}, Matrix::from_rows({{1, 2, 3}, {4, 5, 6}})));
  const std::string bytes = read_raw(vectors_path(dir / "t"));
  CHECK(bytes.size() == 16 + 24);
  CHECK(bytes.substr(0, 8) == "DMCLEMB1");

  write_raw(vectors_path(dir / "t"), bytes.substr(0, bytes.size() - 4));
  CHECK_ERRC(read_store(dir / "t"), Errc::MalformedHeader);
  write_raw(vectors_path(dir / "t"), "DMCLEMB2" + bytes.substr(8));
  CHECK_ERRC(read_store(dir / "t"), Errc::MalformedHeader);
  write_raw(vectors_path(dir / "t"), bytes);
  write_raw(ids_path(dir / "t"), "a\na\n");
  CHECK_ERRC(read_store(dir / "t"), Errc::DuplicateId);
  write_raw(ids_path(dir / "t"), "a\n");
  CHECK_ERRC(read_store(dir / "t"), Errc::DimensionMismatch);
  CHECK_ERRC(read_store(dir / "missing"), Errc::IoFailure);
  fs::remove_all(dir);
}

TEST_CASE("dialogue parsing") {
  const std::string text =
      R"({"instance_id":"d1","target_id":"img_7","caption":"a dog","dialog":[{"question":"q","answer":"a"}]})"
      "\n\n   \n"
      R"({"instance_id":"d2","target_id":"img_8","caption":"","dialog":[]})"
      "\n";
  const auto ds = parse_dialogues(text);
  REQUIRE(ds.size() == 2);
  CHECK(ds[0].rounds.size() == 1);
  CHECK(ds[0].rounds[0].answer == "a");
  CHECK(ds[1].caption.empty());

  CHECK_ERRC(parse_dialogues(R"({"instance_id":"d1","caption":"x","dialog":[]})"), Errc::SchemaViolation);
  CHECK_ERRC(parse_dialogues(R"({"instance_id":"d1","target_id":3,"caption":"x","dialog":[]})"), Errc::SchemaViolation);
  CHECK_ERRC(parse_dialogues("{not json"), Errc::SchemaViolation);
  CHECK_ERRC(parse_dialogues("[1,2]"), Errc::SchemaViolation);

  const auto dir = scratch_dir("dialogues");
  write_dialogues(dir / "d.jsonl", ds);
  CHECK(read_dialogues(dir / "d.jsonl") == ds);
  fs::remove_all(dir);
}

TEST_CASE("dataset round-trip") {
  const auto dir = scratch_dir("dataset");
  Dataset ds;
  ds.train = {sample_dialogue()};
  auto t = sample_dialogue();
  t.instance_id = "d9";
  ds.test = {t};
  const Generator gen = [](const std::string& s) { return Embedding{0.5, static_cast<double>(s.size() % 7)}; };
  ds.triples = build_triples({ds.train[0], t}, identity_reformulator, gen);
  ds.corpus = EmbeddingStore({"img_7", "img_8"}, Matrix::from_rows({{1, 0}, {0, 1}}));
  std::vector<std::string> keys;
  for (const auto& tr : ds.triples) keys.push_back(text_key(tr.instance_id, tr.round));
  ds.text_features = EmbeddingStore(keys, Matrix(keys.size(), 2, 0.25));
  save_dataset(dir, ds);
  const Dataset back = load_dataset(dir);
  CHECK(back.train == ds.train);
  CHECK(back.test == ds.test);
  REQUIRE(back.triples.size() == ds.triples.size());
  for (std::size_t i = 0; i < ds.triples.size(); ++i) {
    CHECK(back.triples[i].context_text == ds.triples[i].context_text);
    CHECK(back.triples[i].proxy_feature == ds.triples[i].proxy_feature);
    CHECK(back.triples[i].round == ds.triples[i].round);
  }
  CHECK_FALSE(back.intents.has_value());
  CHECK(text_key("d1", 3) == "d1:3");

  fs::remove(vectors_path(dir / "corpus"));
  try {
    load_dataset(dir);
    FAIL("expected IoFailure");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IoFailure);
    CHECK(std::string(e.what()).find("corpus") != std::string::npos);
  }
  fs::remove_all(dir);
}
