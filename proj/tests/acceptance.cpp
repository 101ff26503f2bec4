// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <functional>
#include <string>
#include <vector>

#include "cli.hpp"
#include "dmcl/gradcheck_suite.hpp"
#include "dmcl/kernels.hpp"
#include "dmcl/losses.hpp"
#include "dmcl/retrieval.hpp"
#include "dmcl/synthetic_world.hpp"
#include "dmcl/trainer.hpp"
#include "oracles.hpp"

using namespace dmcl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dmcl_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dmcl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::fprintf(stderr, "dmcl %s exited %d: %s", args[1].c_str(), code, err.str().c_str());
  return code;
}

// 1. Gradient suite.
void gradient_suite() {
  const auto t0 = Clock::now();
  const auto entries = run_gradcheck_suite(0, 20);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& e : entries) {
    if (e.max_error >= worst) {
      worst = e.max_error;
      worst_name = e.name;
    }
  }
  report(1, worst < 1e-4 && elapsed < 120.0,
         std::to_string(entries.size()) + " checks x 20 seeds, max rel error " + fmt("%.3g", worst) + " (" + worst_name +
             "), " + fmt("%.1f s", elapsed));
}

Matrix unit_rows(std::size_t n, std::size_t d, Rng& rng) {
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = l2_normalize(gaussian_vector(rng, d));
    std::copy(z.begin(), z.end(), m.row(i).begin());
  }
  return m;
}

Matrix prob_rows(std::size_t n, Rng& rng) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = softmax_tau(gaussian_vector(rng, n), 1.0);
    std::copy(p.begin(), p.end(), m.row(i).begin());
  }
  return m;
}

// 2. Brute-force loss oracles.
void loss_oracles() {
  Rng rng(2024);
  double worst = 0.0;
  std::size_t multi = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(3), d = 2 + rng.below(7);
    std::vector<std::string> ids;
    // Every other batch forces a shared target.
    for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(trial % 2 ? rng.below(n - 1) : rng.below(n)));
    const auto q = losses::PositiveTable::from_target_ids(ids);
    bool has_multi = false;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) has_multi |= i != j && q(i, j);
    multi += has_multi;

    losses::ViewBatch b{unit_rows(n, d, rng), unit_rows(n, d, rng), unit_rows(n, d, rng), unit_rows(n, d, rng), q};
    losses::LossHyperParams hp;
    hp.K = 1 + static_cast<int>(rng.below(3));
    hp.lambda_h = 0.5;
    hp.beta_cons = 0.3;
    hp.beta_dist = 0.7;
    losses::ViewWeights w;
    for (double& r : w.raw) r = rng.normal();
    const double tau = 0.05 + 0.5 * rng.uniform();
    const double eps = 0.2 * rng.uniform();

    auto track = [&](double a, double b2) { worst = std::max(worst, std::abs(a - b2)); };
    track(losses::info_nce_single(b.text, b.target, tau).value, oracle::info_nce_single(b.text, b.target, tau));
    track(losses::symmetric_info_nce(b.text, b.target, q, tau, eps).value,
          oracle::symmetric_info_nce(b.text, b.target, q, tau, eps));
    track(losses::hnm_loss(b.diffusion, b.target, q, static_cast<std::size_t>(hp.K), hp.margin_m, hp.tau_h).value,
          oracle::hnm(b.diffusion, b.target, q, static_cast<std::size_t>(hp.K), hp.margin_m, hp.tau_h));
    const Matrix p1 = prob_rows(n, rng), p2 = prob_rows(n, rng);
    track(losses::js_agreement(p1, p2).value, oracle::js(p1, p2));
    track(losses::alignment_loss(b, hp, w).value, oracle::alignment(b, hp, w.raw));
    track(losses::consistency_loss(b, hp).value,
          oracle::symmetric_info_nce(b.text, b.diffusion, losses::PositiveTable::identity(n), hp.tau_TD, hp.eps_smooth));
    track(losses::distribution_loss(b, hp).value, oracle::distribution(b, hp));
    track(losses::total_loss(b, hp, w).value, oracle::total(b, hp, w.raw));
  }
  report(2, worst < 1e-10 && multi > 0,
         "50 batches (" + std::to_string(multi) + " with multi-positive rows), max abs diff " + fmt("%.3g", worst));
}

// 3. Expected cosine under additive isotropic noise.
void theory() {
  const std::size_t d = 512;
  Rng srng(3);
  const Embedding s = gaussian_vector(srng, d);
  const encoders::LinearEncoder id{Matrix::identity(d)};
  bool ok = true;
  std::string detail;
  double worst_residual = 0.0;
  for (double rho : {0.0, 0.25, 1.0, 4.0}) {
    Rng rng(Rng(33).split(static_cast<std::uint64_t>(rho * 100)).next_u64());
    const auto est = synth::empirical_cosine(id, s, rho, 10000, rng);
    const double want = synth::expected_cosine(rho);
    const double gap = std::abs(est.mean - want);
    ok = ok && gap < (rho == 0.0 ? 1e-9 : 0.02);
    worst_residual = std::max(worst_residual, est.max_identity_residual);
    detail += fmt("rho=%g %.4f vs %.4f; ", rho, est.mean, want);
  }
  ok = ok && worst_residual < 1e-9;
  report(3, ok, detail + fmt("max identity residual %.3g", worst_residual));
}

// 4 and 5. Training on the reference world.
void training_experiment() {
  const synth::WorldConfig wc;  // d 64, 200 intents, corpus 2000, rho 2, seed 42
  const data::Dataset ds = synth::to_dataset(synth::generate_world(wc));
  const train::TrainConfig cfg;  // linear encoder, 2000 steps

  const auto t0 = Clock::now();
  const auto rows = train::compare_modes(cfg, {train::Objective::DmclTotal}, ds);
  const double elapsed = seconds_since(t0);
  const auto& dm = rows[0];
  const double init = dm.noise_ratio_init.value_or(NAN), fin = dm.noise_ratio_final.value_or(NAN);
  const double reduction = 1.0 - fin / init;
  report(4, reduction >= 0.5 && elapsed < 600.0,
         fmt("noise ratio %.4f -> %.4f (%.1f%% reduction), %.1f s", init, fin, 100.0 * reduction, elapsed));

  const auto base = train::compare_modes(cfg, {train::Objective::DiffusionOnlyNce, train::Objective::TextOnlyNce}, ds);
  const double h_dm = dm.hits_final, h_diff = base[0].hits_final, h_text = base[1].hits_final;
  report(5, h_dm >= h_diff + 0.05 && h_dm >= h_text,
         fmt("final Hits@10 dmcl_total %.4f, diffusion_only_nce %.4f, text_only_nce %.4f", h_dm, h_diff, h_text));
}

// 6. Retrieval harness on a hand-built corpus, then monotonicity on random runs.
void metric_harness() {
  const data::EmbeddingStore corpus({"a", "b", "c", "d", "e"},
                                    Matrix::from_rows({{1, 0}, {0, 1}, {0.8, 0.6}, {0, 1}, {-0.6, -0.8}}));
  const encoders::Encoder id = encoders::IdentityEncoder{2};
  const retrieval::QueryEncoders enc{id, id, id, {0.5}};
  const std::vector<data::DialogueInstance> dialogues = {
      {"u1", "a", "cap", {{"q1", "a1"}, {"q2", "a2"}, {"q3", "a3"}}},
      {"u2", "d", "cap", {{"q1", "a1"}, {"q2", "a2"}, {"q3", "a3"}}}};
  // Text and proxy agree each round, so the fused query is the shared direction.
  const std::vector<std::vector<Embedding>> queries = {{{0, 1}, {0.8, 0.6}, {1, 0}, {1, 0}},
                                                       {{0, 1}, {-1, 0}, {0, -1}, {0.6, 0.8}}};
  // Hand-computed scores against a..e:
  //   u1: [0 1 .6 1 -.8] [.8 .6 1 .6 -.96] [1 0 .8 0 -.6] [1 0 .8 0 -.6]
  //   u2: [0 1 .6 1 -.8] [-1 0 -.8 0 .6] [0 -1 -.6 -1 .8] [.6 .8 .96 .8 -1]
  const std::vector<std::vector<std::size_t>> want_ranks = {{4, 2, 1, 1}, {2, 3, 5, 3}};
  const std::vector<double> want_hits = {0.5, 1.0, 1.0, 1.0};

  std::vector<data::TripleRecord> triples;
  std::vector<std::string> keys;
  std::vector<Embedding> text_rows;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t n = 0; n < 4; ++n) {
      triples.push_back({dialogues[i].instance_id, n, "", queries[i][n], dialogues[i].target_id});
      keys.push_back(data::text_key(dialogues[i].instance_id, n));
      text_rows.push_back(queries[i][n]);
    }
  }
  const data::EmbeddingStore text(keys, Matrix::from_rows(text_rows));
  const auto r = retrieval::evaluate_run(dialogues, triples, corpus, text, enc, 2);
  bool hand_ok = r.hits == want_hits;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t n = 0; n < 4; ++n) hand_ok = hand_ok && r.results[i * 4 + n].target_rank == want_ranks[i][n];

  Rng rng(606);
  std::size_t violations = 0;
  for (int run = 0; run < 1000; ++run) {
    const std::size_t items = 3 + rng.below(10), d = 2 + rng.below(3), insts = 1 + rng.below(4), rounds = rng.below(4);
    std::vector<std::string> ids;
    Matrix m(items, d);
    for (std::size_t j = 0; j < items; ++j) ids.push_back("x" + std::to_string(j));
    for (double& v : m.data()) v = rng.normal();
    const data::EmbeddingStore store(ids, m);
    std::vector<data::DialogueInstance> dl;
    std::vector<data::TripleRecord> tr;
    std::vector<std::string> tk;
    std::vector<Embedding> tv;
    for (std::size_t i = 0; i < insts; ++i) {
      data::DialogueInstance di{"i" + std::to_string(i), ids[rng.below(items)], "c", {}};
      for (std::size_t n = 0; n < rounds; ++n) di.rounds.push_back({"q", "a"});
      for (std::size_t n = 0; n <= rounds; ++n) {
        tr.push_back({di.instance_id, n, "", gaussian_vector(rng, d), di.target_id});
        tk.push_back(data::text_key(di.instance_id, n));
        tv.push_back(gaussian_vector(rng, d));
      }
      dl.push_back(std::move(di));
    }
    const data::EmbeddingStore ts(tk, Matrix::from_rows(tv));
    const encoders::Encoder id_d = encoders::IdentityEncoder{d};
    const retrieval::QueryEncoders enc_d{id_d, id_d, id_d, {0.5}};
    std::vector<double> prev;
    for (std::size_t k = 1; k <= items; ++k) {
      const auto h = retrieval::evaluate_run(dl, tr, store, ts, enc_d, k).hits;
      for (std::size_t n = 1; n < h.size(); ++n) violations += h[n] < h[n - 1];
      for (std::size_t n = 0; n < h.size() && !prev.empty(); ++n) violations += h[n] < prev[n];
      prev = h;
    }
  }
  report(6, hand_ok && violations == 0,
         std::string("hand corpus ranks and Hits@2 ") + (hand_ok ? "match" : "differ") + ", " +
             std::to_string(violations) + " monotonicity violations in 1000 random runs");
}

// 7. End-to-end determinism through the command-line tool.
void determinism() {
  const auto dir = scratch("determinism");
  const auto data = (dir / "data").string();
  bool ok = cli({"synth", "--seed", "42", "--out-dir", data}) == 0;
  for (const char* run : {"run1", "run2"}) {
    const auto out = (dir / run).string();
    ok = ok && cli({"train", "--data", data, "--steps", "200", "--seed", "42", "--out-dir", out}) == 0;
    ok = ok && cli({"eval", "--data", data, "--seed", "42", "--out-dir", out}) == 0;
  }
  std::string detail;
  for (const char* f : {"trace.csv", "report.csv", "model.ckpt"}) {
    const std::string a = slurp(dir / "run1" / f), b = slurp(dir / "run2" / f);
    const bool same = !a.empty() && a == b;
    ok = ok && same;
    detail += std::string(f) + (same ? " identical (" + std::to_string(a.size()) + " B); " : " DIFFERS; ");
  }
  fs::remove_all(dir);
  report(7, ok, detail + "train 200 steps + eval, two runs");
}

// 8. Store format round-trip and error surface.
void store_format() {
  const auto dir = scratch("store");
  Rng rng(808);
  std::size_t mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = rng.below(20), d = 1 + rng.below(32);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("id_" + std::to_string(rng.next_u64()));
    Matrix m(n, d);
    for (double& v : m.data()) v = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(9)) - 4.0);
    data::write_store(dir / "a", data::EmbeddingStore(ids, m));
    data::write_store(dir / "b", data::read_store(dir / "a"));
    for (auto path : {&data::ids_path, &data::vectors_path})
      mismatches += slurp((*path)(dir / "a")) != slurp((*path)(dir / "b"));
  }

  auto code_of = [](const std::function<void()>& f) -> std::string {
    try {
      f();
    } catch (const Error& e) {
      return std::string(errc_name(e.code()));
    }
    return "none";
  };
  const std::string good = slurp(data::vectors_path(dir / "a"));
  std::ofstream(data::vectors_path(dir / "bad"), std::ios::binary) << "DMCLEMB0" << good.substr(8);
  std::ofstream(data::ids_path(dir / "bad"), std::ios::binary) << slurp(data::ids_path(dir / "a"));
  const std::string bad_magic = code_of([&] { data::read_store(dir / "bad"); });
  std::ofstream(data::vectors_path(dir / "short"), std::ios::binary) << "DMCL";
  std::ofstream(data::ids_path(dir / "short"), std::ios::binary) << "";
  const std::string short_header = code_of([&] { data::read_store(dir / "short"); });
  data::write_store(dir / "dup", data::EmbeddingStore({"p", "q"}, Matrix(2, 3, 1.0)));
  std::ofstream(data::ids_path(dir / "dup"), std::ios::binary) << "p\np\n";
  const std::string dup = code_of([&] { data::read_store(dir / "dup"); });
  fs::remove_all(dir);

  report(8, mismatches == 0 && bad_magic == "MalformedHeader" && short_header == "MalformedHeader" && dup == "DuplicateId",
         std::to_string(mismatches) + " byte mismatches over 100 stores; bad magic -> " + bad_magic +
             ", short header -> " + short_header + ", duplicate id -> " + dup);
}

}  // namespace

int main() {
  kernels::set_threads(1);
  const std::vector<std::function<void()>> criteria = {gradient_suite, loss_oracles, theory, training_experiment,
                                                       metric_harness, determinism, store_format};
  for (const auto& c : criteria) {
    try {
      c();
    } catch (const std::exception& e) {
      std::printf("FAIL criterion (exception): %s\n", e.what());
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}
