#include "dmcl/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <json.hpp>
#include <numeric>

#include "dmcl/checkpoint.hpp"
#include "dmcl/kernels.hpp"

namespace dmcl::retrieval {

namespace {

void require_query(std::span<const double> query, const data::EmbeddingStore& store) {
  if (store.size() == 0) throw Error(Errc::EmptyCorpus, "corpus has no items");
  if (query.size() != store.dim()) {
    throw Error(Errc::DimensionMismatch, "query dim " + std::to_string(query.size()) + " vs corpus dim " +
                                             std::to_string(store.dim()));
  }
}

// Ordering shared by ranking and target_rank.
struct Before {
  const std::vector<double>& scores;
  const std::vector<std::string>& ids;
  bool operator()(std::size_t a, std::size_t b) const {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  }
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

}  // namespace

std::vector<std::size_t> rank_indices(std::span<const double> query, const data::EmbeddingStore& store, std::size_t k) {
  require_query(query, store);
  const std::vector<double> scores = kernels::score_corpus(store.matrix(), query);
  std::vector<std::size_t> order(store.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = (k == 0 || k > order.size()) ? order.size() : k;
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    Before{scores, store.ids()});
  order.resize(take);
  return order;
}

std::vector<std::string> rank_corpus(std::span<const double> query, const data::EmbeddingStore& store, std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t i : rank_indices(query, store, k)) out.push_back(store.ids()[i]);
  return out;
}

std::size_t target_rank(std::span<const double> scores, const data::EmbeddingStore& store, std::size_t target) {
  if (scores.size() != store.size()) throw Error(Errc::DimensionMismatch, "target_rank scores vs corpus");
  const auto& ids = store.ids();
  std::size_t ahead = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == target) continue;
    if (scores[i] > scores[target] || (scores[i] == scores[target] && ids[i] < ids[target])) ++ahead;
  }
  return ahead + 1;
}

std::vector<double> cumulative_hits(const std::vector<std::vector<std::size_t>>& ranks, std::size_t k) {
  if (ranks.empty()) return {};
  std::size_t rounds = 0;
  for (const auto& r : ranks) rounds = std::max(rounds, r.size());
  std::vector<double> hits(rounds, 0.0);
  for (const auto& r : ranks) {
    bool hit = false;
    for (std::size_t n = 0; n < rounds; ++n) {
      if (n < r.size() && r[n] <= k) hit = true;
      if (hit) hits[n] += 1.0;
    }
  }
  for (double& h : hits) h /= static_cast<double>(ranks.size());
  return hits;
}

data::EmbeddingStore encode_corpus(const encoders::Encoder& target, const data::EmbeddingStore& corpus) {
  Matrix m(corpus.size(), encoders::output_dim(target));
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Embedding z = l2_normalize(encoders::encode(target, corpus.row(i)));
    std::copy(z.begin(), z.end(), m.row(i).begin());
  }
  return data::EmbeddingStore(corpus.ids(), std::move(m));
}

Embedding build_query(const QueryEncoders& enc, std::span<const double> text_feature,
                      const std::vector<Embedding>& proxy_features) {
  const Embedding zt = l2_normalize(encoders::encode(enc.text, text_feature));
  std::vector<Embedding> zd;
  zd.reserve(proxy_features.size());
  for (const auto& p : proxy_features) zd.push_back(l2_normalize(encoders::encode(enc.diffusion, p)));
  if (zd.size() <= 1) return encoders::fuse(zt, zd, enc.fusion);
  return encoders::fuse(zt, {encoders::mean_embedding(zd)}, enc.fusion);
}

RetrievalReport evaluate_run(std::span<const data::DialogueInstance> dialogues,
                             std::span<const data::TripleRecord> triples, const data::EmbeddingStore& corpus,
                             const data::EmbeddingStore& text_features, const QueryEncoders& enc, std::size_t k) {
  if (k == 0) throw Error(Errc::InvalidArgument, "k must be >= 1");
  const data::EmbeddingStore encoded = encode_corpus(enc.target, corpus);

  std::map<std::pair<std::string, std::size_t>, std::vector<Embedding>> proxies;
  for (const auto& t : triples) proxies[{t.instance_id, t.round}].push_back(t.proxy_feature);

  struct Job {
    std::size_t instance;
    std::size_t round;
    std::size_t target_row;
    std::span<const double> text;
    const std::vector<Embedding>* proxies;
  };
  static const std::vector<Embedding> kNoProxies;
  std::vector<Job> jobs;
  std::vector<std::size_t> first_job(dialogues.size());
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    const auto& d = dialogues[i];
    const auto target = encoded.find(d.target_id);
    if (!target) throw Error(Errc::MissingTarget, "target " + d.target_id + " of " + d.instance_id + " not in corpus");
    first_job[i] = jobs.size();
    for (std::size_t n = 0; n <= d.rounds.size(); ++n) {
      const auto row = text_features.find(data::text_key(d.instance_id, n));
      if (!row) throw Error(Errc::SchemaViolation, "no text feature for " + data::text_key(d.instance_id, n));
      auto it = proxies.find({d.instance_id, n});
      jobs.push_back({i, n, *target, text_features.row(*row), it == proxies.end() ? &kNoProxies : &it->second});
    }
  }

  std::vector<RoundResult> results(jobs.size());
  const auto n_jobs = static_cast<long>(jobs.size());
  // Scoring inside each job is serial; jobs write disjoint slots.
#pragma omp parallel for num_threads(kernels::threads()) schedule(dynamic)
  for (long j = 0; j < n_jobs; ++j) {
    const Job& job = jobs[static_cast<std::size_t>(j)];
    const Embedding q = build_query(enc, job.text, *job.proxies);
    const std::vector<double> scores = kernels::ref::score_corpus(encoded.matrix(), q);
    RoundResult& r = results[static_cast<std::size_t>(j)];
    r.instance_id = dialogues[job.instance].instance_id;
    r.round = job.round;
    r.target_rank = target_rank(scores, encoded, job.target_row);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t take = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      Before{scores, encoded.ids()});
    for (std::size_t t = 0; t < take; ++t) r.top_ids.push_back(encoded.ids()[order[t]]);
  }

  RetrievalReport report;
  report.k = k;
  report.n_instances = dialogues.size();
  std::vector<std::vector<std::size_t>> ranks(dialogues.size());
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    report.instance_ids.push_back(dialogues[i].instance_id);
    int first = -1;
    for (std::size_t n = 0; n <= dialogues[i].rounds.size(); ++n) {
      const std::size_t rank = results[first_job[i] + n].target_rank;
      ranks[i].push_back(rank);
      if (first < 0 && rank <= k) first = static_cast<int>(n);
    }
    report.first_hit_round.push_back(first);
  }
  report.hits = cumulative_hits(ranks, k);
  report.results = std::move(results);
  return report;
}

Histogram similarity_density(std::span<const std::pair<Embedding, Embedding>> pairs, std::size_t bins) {
  if (bins < 2) throw Error(Errc::InvalidArgument, "bins must be >= 2");
  if (pairs.empty()) throw Error(Errc::InvalidArgument, "no pairs");
  Histogram h;
  h.counts.assign(bins, 0);
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(-1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(bins));
  std::vector<double> values;
  values.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    const double c = cosine(a, b);
    values.push_back(c);
    auto bin = static_cast<std::size_t>(std::floor((c + 1.0) / 2.0 * static_cast<double>(bins)));
    ++h.counts[std::min(bin, bins - 1)];
  }
  const double n = static_cast<double>(values.size());
  h.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - h.mean) * (v - h.mean);
  h.variance = ss / n;
  return h;
}

void emit_report(const RetrievalReport& report, const std::filesystem::path& path) {
  if (report.n_instances == 0) throw Error(Errc::EmptyReport, "report has no instances");
  std::string csv = "round,hits_at_k,n_instances\n";
  for (std::size_t n = 0; n < report.hits.size(); ++n) {
    csv += std::to_string(n) + "," + fmt(report.hits[n]) + "," + std::to_string(report.n_instances) + "\n";
  }
  nlohmann::ordered_json meta;
  meta["k"] = report.k;
  meta["seed"] = report.seed;
  meta["config_hash"] = report.config_hash;
  meta["n_instances"] = report.n_instances;
  nlohmann::ordered_json first = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < report.instance_ids.size(); ++i) first[report.instance_ids[i]] = report.first_hit_round[i];
  meta["first_hit_round"] = first;
  auto meta_path = path;
  meta_path += ".meta.json";
  write_file_atomic(path, csv);
  write_file_atomic(meta_path, meta.dump(2) + "\n");
}

void emit_histogram(const Histogram& h, const std::filesystem::path& path) {
  std::string csv = "bin_left,bin_right,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    csv += fmt(h.edges[b]) + "," + fmt(h.edges[b + 1]) + "," + std::to_string(h.counts[b]) + "\n";
  }
  write_file_atomic(path, csv);
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dmcl::retrieval
