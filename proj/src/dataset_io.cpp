#include "dmcl/dataset_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <json.hpp>
#include <sstream>

#include "dmcl/checkpoint.hpp"

namespace dmcl::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kStoreMagic[8] = {'D', 'M', 'C', 'L', 'E', 'M', 'B', '1'};
constexpr std::size_t kStoreHeader = 16;

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return v;
}

const json& require_field(const json& obj, const char* key, json::value_t type, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(Errc::SchemaViolation, "line " + std::to_string(line) + ": missing field '" + key + "'");
  }
  if (it->type() != type) {
    throw Error(Errc::SchemaViolation, "line " + std::to_string(line) + ": field '" + key + "' has wrong type");
  }
  return *it;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

}  // namespace

std::string concat_context(const DialogueInstance& inst, std::size_t n) {
  if (n > inst.rounds.size()) {
    throw Error(Errc::RoundOutOfRange, "round " + std::to_string(n) + " of " + inst.instance_id + " (has " +
                                           std::to_string(inst.rounds.size()) + ")");
  }
  std::string out = inst.caption;
  for (std::size_t r = 0; r < n; ++r) {
    out += ", ";
    out += inst.rounds[r].question;
    out += ", ";
    out += inst.rounds[r].answer;
  }
  return out;
}

std::string identity_reformulator(const std::string& context) { return context; }

std::vector<TripleRecord> build_triples(const std::vector<DialogueInstance>& dialogues, const Reformulator& reformulate,
                                        const Generator& generate) {
  std::vector<TripleRecord> out;
  for (const auto& inst : dialogues) {
    for (std::size_t n = 0; n <= inst.rounds.size(); ++n) {
      TripleRecord rec{inst.instance_id, n, concat_context(inst, n), {}, inst.target_id};
      std::string prompt;
      try {
        prompt = reformulate(rec.context_text);
      } catch (const std::exception& e) {
        throw Error(Errc::StageFailure, "reformulator on " + inst.instance_id + " round " + std::to_string(n) + ": " + e.what());
      }
      try {
        rec.proxy_feature = generate(prompt);
      } catch (const std::exception& e) {
        throw Error(Errc::StageFailure, "generator on " + inst.instance_id + " round " + std::to_string(n) + ": " + e.what());
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

EmbeddingStore::EmbeddingStore(std::vector<std::string> ids, Matrix matrix)
    : ids_(std::move(ids)), matrix_(std::move(matrix)) {
  if (ids_.size() != matrix_.rows()) {
    throw Error(Errc::DimensionMismatch, std::to_string(ids_.size()) + " ids for " + std::to_string(matrix_.rows()) + " rows");
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) throw Error(Errc::DuplicateId, "'" + ids_[i] + "'");
  }
}

std::optional<std::size_t> EmbeddingStore::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

fs::path ids_path(const fs::path& prefix) {
  auto p = prefix;
  p += ".ids";
  return p;
}

fs::path vectors_path(const fs::path& prefix) {
  auto p = prefix;
  p += ".f32";
  return p;
}

void write_store(const fs::path& prefix, const EmbeddingStore& store) {
  std::string ids;
  for (const auto& id : store.ids()) {
    if (id.empty() || id.find('\n') != std::string::npos) throw Error(Errc::InvalidArgument, "store ids must be non-empty single lines");
    ids += id;
    ids += '\n';
  }
  std::string vec(kStoreMagic, sizeof kStoreMagic);
  put_u32(vec, static_cast<std::uint32_t>(store.size()));
  put_u32(vec, static_cast<std::uint32_t>(store.dim()));
  vec.reserve(kStoreHeader + 4 * store.matrix().data().size());
  for (double x : store.matrix().data()) put_u32(vec, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  write_text(ids_path(prefix), ids);
  write_text(vectors_path(prefix), vec);
}

EmbeddingStore read_store(const fs::path& prefix) {
  const auto vpath = vectors_path(prefix);
  const std::string vec = read_all(vpath);
  if (vec.size() < kStoreHeader || std::memcmp(vec.data(), kStoreMagic, sizeof kStoreMagic) != 0) {
    throw Error(Errc::MalformedHeader, vpath.string() + ": missing DMCLEMB1 header");
  }
  const std::size_t count = get_u32(vec, 8);
  const std::size_t dim = get_u32(vec, 12);
  if (vec.size() != kStoreHeader + 4 * count * dim) {
    throw Error(Errc::MalformedHeader, vpath.string() + ": expected " + std::to_string(count) + "x" + std::to_string(dim) +
                                           " values, file has " + std::to_string(vec.size()) + " bytes");
  }

  const auto ipath = ids_path(prefix);
  const std::string text = read_all(ipath);
  std::vector<std::string> ids;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    if (end == start) throw Error(Errc::MalformedHeader, ipath.string() + ": empty id line");
    ids.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  if (ids.size() != count) {
    throw Error(Errc::DimensionMismatch, ipath.string() + ": " + std::to_string(ids.size()) + " ids for " +
                                             std::to_string(count) + " vectors");
  }

  Matrix m(count, dim);
  for (std::size_t i = 0; i < count * dim; ++i) {
    m.data()[i] = static_cast<double>(std::bit_cast<float>(get_u32(vec, kStoreHeader + 4 * i)));
  }
  return EmbeddingStore(std::move(ids), std::move(m));
}

std::vector<DialogueInstance> parse_dialogues(const std::string& text) {
  std::vector<DialogueInstance> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::SchemaViolation, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) throw Error(Errc::SchemaViolation, "line " + std::to_string(line_no) + ": not an object");
    DialogueInstance inst;
    inst.instance_id = require_field(obj, "instance_id", json::value_t::string, line_no).get<std::string>();
    inst.target_id = require_field(obj, "target_id", json::value_t::string, line_no).get<std::string>();
    inst.caption = require_field(obj, "caption", json::value_t::string, line_no).get<std::string>();
    if (inst.instance_id.empty() || inst.target_id.empty()) {
      throw Error(Errc::SchemaViolation, "line " + std::to_string(line_no) + ": empty instance_id or target_id");
    }
    for (const auto& turn : require_field(obj, "dialog", json::value_t::array, line_no)) {
      if (!turn.is_object()) throw Error(Errc::SchemaViolation, "line " + std::to_string(line_no) + ": dialog entry not an object");
      inst.rounds.push_back({require_field(turn, "question", json::value_t::string, line_no).get<std::string>(),
                             require_field(turn, "answer", json::value_t::string, line_no).get<std::string>()});
    }
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<DialogueInstance> read_dialogues(const fs::path& path) { return parse_dialogues(read_all(path)); }

void write_dialogues(const fs::path& path, const std::vector<DialogueInstance>& dialogues) {
  std::string out;
  for (const auto& d : dialogues) {
    json turns = json::array();
    for (const auto& t : d.rounds) turns.push_back({{"question", t.question}, {"answer", t.answer}});
    json obj = {{"instance_id", d.instance_id}, {"target_id", d.target_id}, {"caption", d.caption}, {"dialog", turns}};
    out += obj.dump();
    out += '\n';
  }
  write_text(path, out);
}

std::string text_key(const std::string& instance_id, std::size_t round) {
  return instance_id + ":" + std::to_string(round);
}

void write_triples(const fs::path& prefix, const std::vector<TripleRecord>& triples) {
  std::string out;
  std::vector<std::string> ids;
  std::vector<Embedding> rows;
  std::map<std::string, std::size_t> per_round;
  for (const auto& t : triples) {
    const std::string key = text_key(t.instance_id, t.round);
    const std::size_t k = per_round[key]++;
    const std::string proxy_id = key + ":" + std::to_string(k);
    json obj = {{"instance_id", t.instance_id},
                {"round", t.round},
                {"context_text", t.context_text},
                {"target_id", t.target_id},
                {"proxy_id", proxy_id}};
    out += obj.dump();
    out += '\n';
    ids.push_back(proxy_id);
    rows.push_back(t.proxy_feature);
  }
  auto jsonl = prefix;
  jsonl += ".jsonl";
  auto proxies = prefix;
  proxies += "_proxies";
  write_text(jsonl, out);
  write_store(proxies, EmbeddingStore(std::move(ids), Matrix::from_rows(rows)));
}

std::vector<TripleRecord> read_triples(const fs::path& prefix) {
  auto jsonl = prefix;
  jsonl += ".jsonl";
  auto proxies_prefix = prefix;
  proxies_prefix += "_proxies";
  const EmbeddingStore proxies = read_store(proxies_prefix);

  std::vector<TripleRecord> out;
  std::istringstream in(read_all(jsonl));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::SchemaViolation, jsonl.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    TripleRecord rec;
    rec.instance_id = require_field(obj, "instance_id", json::value_t::string, line_no).get<std::string>();
    const auto& round = obj.value("round", json());
    if (!round.is_number_unsigned()) throw Error(Errc::SchemaViolation, "line " + std::to_string(line_no) + ": bad round");
    rec.round = round.get<std::size_t>();
    rec.context_text = require_field(obj, "context_text", json::value_t::string, line_no).get<std::string>();
    rec.target_id = require_field(obj, "target_id", json::value_t::string, line_no).get<std::string>();
    const auto proxy_id = require_field(obj, "proxy_id", json::value_t::string, line_no).get<std::string>();
    const auto row = proxies.find(proxy_id);
    if (!row) throw Error(Errc::SchemaViolation, "line " + std::to_string(line_no) + ": unknown proxy_id " + proxy_id);
    const auto feature = proxies.row(*row);
    rec.proxy_feature.assign(feature.begin(), feature.end());
    out.push_back(std::move(rec));
  }
  return out;
}

void save_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir);
  write_dialogues(dir / "train.jsonl", ds.train);
  write_dialogues(dir / "test.jsonl", ds.test);
  write_triples(dir / "triples", ds.triples);
  write_store(dir / "corpus", ds.corpus);
  write_store(dir / "text", ds.text_features);
  if (ds.intents) write_store(dir / "intents", *ds.intents);
}

Dataset load_dataset(const fs::path& dir) {
  for (const char* name : {"train.jsonl", "test.jsonl", "triples.jsonl", "triples_proxies.ids", "triples_proxies.f32",
                           "corpus.ids", "corpus.f32", "text.ids", "text.f32"}) {
    if (!fs::exists(dir / name)) throw Error(Errc::IoFailure, "missing dataset file " + (dir / name).string());
  }
  Dataset ds;
  ds.train = read_dialogues(dir / "train.jsonl");
  ds.test = read_dialogues(dir / "test.jsonl");
  ds.triples = read_triples(dir / "triples");
  ds.corpus = read_store(dir / "corpus");
  ds.text_features = read_store(dir / "text");
  if (fs::exists(vectors_path(dir / "intents"))) ds.intents = read_store(dir / "intents");
  return ds;
}

}  // namespace dmcl::data
