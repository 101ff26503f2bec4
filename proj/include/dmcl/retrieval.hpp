#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dmcl/dataset_io.hpp"
#include "dmcl/encoders.hpp"

namespace dmcl::retrieval {

/// Corpus row indices ordered by (similarity desc, id asc). k = 0 returns the full order.
std::vector<std::size_t> rank_indices(std::span<const double> query, const data::EmbeddingStore& store,
                                      std::size_t k = 0);
std::vector<std::string> rank_corpus(std::span<const double> query, const data::EmbeddingStore& store,
                                     std::size_t k = 0);

/// 1-based position of row `target` under the rank_corpus ordering, without sorting.
std::size_t target_rank(std::span<const double> scores, const data::EmbeddingStore& store, std::size_t target);

struct RoundResult {
  std::string instance_id;
  std::size_t round = 0;
  std::size_t target_rank = 0;
  std::vector<std::string> top_ids;
};

struct RetrievalReport {
  std::size_t k = 10;
  /// Cumulative Hits@k for rounds 0..R.
  std::vector<double> hits;
  std::size_t n_instances = 0;
  std::vector<std::string> instance_ids;
  /// First round with target_rank <= k, or -1.
  std::vector<int> first_hit_round;
  std::vector<RoundResult> results;
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// ranks[i][n] is instance i's target rank at round n. Instances with fewer rounds keep
/// their best-so-far state for later rounds.
std::vector<double> cumulative_hits(const std::vector<std::vector<std::size_t>>& ranks, std::size_t k);

struct QueryEncoders {
  const encoders::Encoder& text;
  const encoders::Encoder& diffusion;
  const encoders::Encoder& target;
  encoders::FusionParams fusion;
};

/// Normalized target-side embeddings of every corpus item.
data::EmbeddingStore encode_corpus(const encoders::Encoder& target, const data::EmbeddingStore& corpus);

/// Fused query for one round: text feature and all proxy features of that round.
Embedding build_query(const QueryEncoders& enc, std::span<const double> text_feature,
                      const std::vector<Embedding>& proxy_features);

/// Ranks every (instance, round) against the full corpus and accumulates Hits@k.
RetrievalReport evaluate_run(std::span<const data::DialogueInstance> dialogues,
                             std::span<const data::TripleRecord> triples, const data::EmbeddingStore& corpus,
                             const data::EmbeddingStore& text_features, const QueryEncoders& enc, std::size_t k);

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges over [-1, 1]
  std::vector<std::size_t> counts;
  double mean = 0.0;
  double variance = 0.0;
};

Histogram similarity_density(std::span<const std::pair<Embedding, Embedding>> pairs, std::size_t bins);

/// CSV "round,hits_at_k,n_instances" plus a JSON sidecar at <path>.meta.json.
void emit_report(const RetrievalReport& report, const std::filesystem::path& path);
/// CSV "bin_left,bin_right,count".
void emit_histogram(const Histogram& h, const std::filesystem::path& path);

/// 16 hex digits of FNV-1a over the bytes.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace dmcl::retrieval
