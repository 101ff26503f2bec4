#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dmcl/numkit.hpp"

namespace dmcl::data {

struct DialogueTurn {
  std::string question;
  std::string answer;

  bool operator==(const DialogueTurn&) const = default;
};

struct DialogueInstance {
  std::string instance_id;
  std::string target_id;
  std::string caption;  // initial description
  std::vector<DialogueTurn> rounds;

  bool operator==(const DialogueInstance&) const = default;
};

/// Caption, then Q1, A1, ..., Qn, An joined with ", ". Throws RoundOutOfRange when n > rounds.
std::string concat_context(const DialogueInstance& inst, std::size_t n);

struct TripleRecord {
  std::string instance_id;
  std::size_t round = 0;
  std::string context_text;
  Embedding proxy_feature;
  std::string target_id;
};

using Reformulator = std::function<std::string(const std::string&)>;
using Generator = std::function<Embedding(const std::string&)>;

std::string identity_reformulator(const std::string& context);

/// One record per (instance, round), rounds 0..N, in instance-then-round order.
/// Exceptions thrown by a stage are rethrown as StageFailure.
std::vector<TripleRecord> build_triples(const std::vector<DialogueInstance>& dialogues, const Reformulator& reformulate,
                                        const Generator& generate);

/// Ordered ids with one embedding row each.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  /// Throws DuplicateId or DimensionMismatch.
  EmbeddingStore(std::vector<std::string> ids, Matrix matrix);

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const Matrix& matrix() const noexcept { return matrix_; }
  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return matrix_.cols(); }

  std::optional<std::size_t> find(const std::string& id) const;
  std::span<const double> row(std::size_t i) const { return matrix_.row(i); }

 private:
  std::vector<std::string> ids_;
  Matrix matrix_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Store files: <prefix>.ids (one id per line, LF) and <prefix>.f32
// ("DMCLEMB1", u32 count, u32 dim, count*dim float32, all little-endian, row-major).
std::filesystem::path ids_path(const std::filesystem::path& prefix);
std::filesystem::path vectors_path(const std::filesystem::path& prefix);
void write_store(const std::filesystem::path& prefix, const EmbeddingStore& store);
EmbeddingStore read_store(const std::filesystem::path& prefix);

/// One JSON object per line: instance_id, target_id, caption, dialog[{question, answer}].
std::vector<DialogueInstance> read_dialogues(const std::filesystem::path& path);
std::vector<DialogueInstance> parse_dialogues(const std::string& text);
void write_dialogues(const std::filesystem::path& path, const std::vector<DialogueInstance>& dialogues);

// Triples: <prefix>.jsonl (instance_id, round, context_text, target_id, proxy_id) plus a
// store <prefix>_proxies holding the proxy features.
void write_triples(const std::filesystem::path& prefix, const std::vector<TripleRecord>& triples);
std::vector<TripleRecord> read_triples(const std::filesystem::path& prefix);

/// Key of the text-view feature for one round, "<instance_id>:<round>".
std::string text_key(const std::string& instance_id, std::size_t round);

/// Everything one benchmark run needs. The intents store (keyed by instance id) is only
/// present for synthetic worlds.
struct Dataset {
  std::vector<DialogueInstance> train;
  std::vector<DialogueInstance> test;
  std::vector<TripleRecord> triples;
  EmbeddingStore corpus;
  EmbeddingStore text_features;
  std::optional<EmbeddingStore> intents;
};

// Directory layout: train.jsonl, test.jsonl, triples.jsonl, triples_proxies.{ids,f32},
// corpus.{ids,f32}, text.{ids,f32}, optional intents.{ids,f32}.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
/// Throws IoFailure naming the first missing file.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace dmcl::data
