#include "dmcl/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>

#include "dmcl/encoders.hpp"
#include "dmcl/losses.hpp"
#include "dmcl/trainer.hpp"

namespace dmcl {

namespace {

using losses::LossOutput;
using losses::PositiveTable;

struct Problem {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<Matrix> blocks;
  PositiveTable q;
};

Matrix unit_rows(std::size_t n, std::size_t d, Rng& rng) {
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const Embedding z = l2_normalize(gaussian_vector(rng, d));
    std::copy(z.begin(), z.end(), m.row(i).begin());
  }
  return m;
}

Matrix prob_rows(std::size_t n, std::size_t d, Rng& rng) {
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = softmax_tau(gaussian_vector(rng, d), 1.0);
    std::copy(p.begin(), p.end(), m.row(i).begin());
  }
  return m;
}

// Random target ids drawn with replacement so some rows get several positives.
PositiveTable random_table(std::size_t n, Rng& rng) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(rng.below(n)));
  return PositiveTable::from_target_ids(ids);
}

Problem make_problem(std::uint64_t seed, std::size_t blocks, bool probabilities = false) {
  Rng rng(seed);
  Problem p;
  p.n = 2 + rng.below(4);
  p.d = 2 + rng.below(15);
  for (std::size_t b = 0; b < blocks; ++b)
    p.blocks.push_back(probabilities ? prob_rows(p.n, p.n, rng) : unit_rows(p.n, p.d, rng));
  p.q = random_table(p.n, rng);
  return p;
}

std::vector<double> flatten(const std::vector<Matrix>& blocks) {
  std::vector<double> out;
  for (const auto& b : blocks) out.insert(out.end(), b.data().begin(), b.data().end());
  return out;
}

std::vector<Matrix> unflatten(std::span<const double> x, const std::vector<Matrix>& shapes) {
  std::vector<Matrix> out;
  std::size_t off = 0;
  for (const auto& s : shapes) {
    Matrix m(s.rows(), s.cols());
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(off),
              x.begin() + static_cast<std::ptrdiff_t>(off + m.data().size()), m.data().begin());
    off += m.data().size();
    out.push_back(std::move(m));
  }
  return out;
}

void append(std::vector<double>& g, const Matrix& m) { g.insert(g.end(), m.data().begin(), m.data().end()); }

// Pairwise loss on two blocks.
double check_pair(const Problem& p, const std::function<LossOutput(const Matrix&, const Matrix&)>& loss) {
  DiffFn f = [&](std::span<const double> x, std::vector<double>* grad) {
    const auto m = unflatten(x, p.blocks);
    const LossOutput out = loss(m[0], m[1]);
    if (grad) {
      grad->clear();
      append(*grad, out.grad_u);
      append(*grad, out.grad_v);
    }
    return out.value;
  };
  return grad_check(f, flatten(p.blocks));
}

losses::LossHyperParams suite_hyperparams() {
  losses::LossHyperParams hp;
  hp.K = 2;
  return hp;
}

// Batch objective over the four view blocks plus the raw view weights.
double check_batch(const Problem& p, std::uint64_t seed,
                   const std::function<losses::BatchLoss(const losses::ViewBatch&, const losses::ViewWeights&)>& loss) {
  Rng rng(seed ^ 0x5bd1e995ULL);
  std::vector<double> point = flatten(p.blocks);
  for (int v = 0; v < 3; ++v) point.push_back(0.5 * rng.normal());
  DiffFn f = [&](std::span<const double> x, std::vector<double>* grad) {
    const auto m = unflatten(x, p.blocks);
    losses::ViewBatch b{m[0], m[1], m[2], m[3], p.q};
    losses::ViewWeights w;
    std::copy(x.end() - 3, x.end(), w.raw.begin());
    const losses::BatchLoss out = loss(b, w);
    if (grad) {
      grad->clear();
      append(*grad, out.grads.text);
      append(*grad, out.grads.diffusion);
      append(*grad, out.grads.fused);
      append(*grad, out.grads.target);
      grad->insert(grad->end(), out.grad_alpha_raw.begin(), out.grad_alpha_raw.end());
    }
    return out.value;
  };
  return grad_check(f, point);
}

double check_encoder(std::uint64_t seed, bool mlp) {
  Rng rng(seed);
  const std::size_t d_in = 2 + rng.below(15);
  const std::size_t d_out = 2 + rng.below(15);
  encoders::Encoder enc = mlp ? encoders::Encoder(encoders::make_mlp(d_in, 2 + rng.below(7), d_out, rng))
                              : encoders::Encoder(encoders::make_linear(d_in, d_out, rng));
  if (mlp) {
    // Nonzero biases so their gradients are exercised away from the init point.
    auto& m = std::get<encoders::MlpEncoder>(enc);
    for (double& b : m.b1) b = 0.3 * rng.normal();
    for (double& b : m.b2) b = 0.3 * rng.normal();
  }
  const Embedding upstream = gaussian_vector(rng, d_out);
  const Embedding input = gaussian_vector(rng, d_in);

  std::vector<double> point;
  for (const auto& pv : encoders::parameters(enc, "e")) point.insert(point.end(), pv.values.begin(), pv.values.end());
  point.insert(point.end(), input.begin(), input.end());

  DiffFn f = [&](std::span<const double> x, std::vector<double>* grad) {
    encoders::Encoder e = enc;
    std::size_t off = 0;
    for (auto& pv : encoders::parameters(e, "e")) {
      std::copy(x.begin() + static_cast<std::ptrdiff_t>(off),
                x.begin() + static_cast<std::ptrdiff_t>(off + pv.values.size()), pv.values.begin());
      off += pv.values.size();
    }
    const auto in = x.subspan(off);
    const Embedding y = encoders::encode(e, in);
    if (grad) {
      const auto g = encoders::encode_backward(e, in, upstream);
      grad->clear();
      for (const auto& t : g.params) grad->insert(grad->end(), t.begin(), t.end());
      grad->insert(grad->end(), g.input.begin(), g.input.end());
    }
    return dot(y, upstream);
  };
  return grad_check(f, point);
}

// Whole training step: encoders, normalization, fusion, total objective, view and fusion weights.
double check_train_step(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 2 + rng.below(4);
  const std::size_t d = 2 + rng.below(7);
  train::TrainConfig cfg;
  cfg.batch_size = n;
  cfg.hyperparams = suite_hyperparams();
  cfg.learn_fusion = true;
  cfg.w_text = 0.3 + 0.4 * rng.uniform();
  cfg.target_encoder = train::EncoderKind::Linear;
  cfg.seed = seed;
  train::Model model = train::init_model(cfg, d, d);

  train::TrainingSet set;
  for (std::size_t i = 0; i < n; ++i) {
    set.text.push_back(gaussian_vector(rng, d));
    set.proxy.push_back(gaussian_vector(rng, d));
    set.target.push_back(gaussian_vector(rng, d));
    set.target_id.push_back(std::to_string(rng.below(n)));
  }
  train::Batch batch;
  for (std::size_t i = 0; i < n; ++i) batch.indices.push_back(i);
  batch.positives = PositiveTable::from_target_ids(set.target_id);

  double fusion_raw = std::log(cfg.w_text / (1.0 - cfg.w_text));
  std::vector<double> point;
  for (auto s : train::trainable(model, cfg, fusion_raw).params) point.insert(point.end(), s.begin(), s.end());

  DiffFn f = [&](std::span<const double> x, std::vector<double>* grad) {
    train::Model m = model;
    double raw = 0.0;
    std::size_t off = 0;
    for (auto s : train::trainable(m, cfg, raw).params) {
      std::copy(x.begin() + static_cast<std::ptrdiff_t>(off), x.begin() + static_cast<std::ptrdiff_t>(off + s.size()),
                s.begin());
      off += s.size();
    }
    m.fusion.w_text = sigmoid(raw);
    const auto step = train::compute_step(m, cfg, set, batch);
    if (grad) {
      grad->clear();
      for (const auto& g : step.grads) grad->insert(grad->end(), g.begin(), g.end());
    }
    return step.value;
  };
  return grad_check(f, point);
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t first_seed, std::size_t instances) {
  const auto hp = suite_hyperparams();
  struct Check {
    const char* name;
    std::function<double(std::uint64_t)> run;
  };
  const std::vector<Check> checks = {
      {"cosine_align_loss",
       [](std::uint64_t s) {
         Rng rng(s);
         const std::size_t d = 2 + rng.below(15);
         Problem p;
         p.blocks = {Matrix::from_rows({gaussian_vector(rng, d)}), Matrix::from_rows({gaussian_vector(rng, d)})};
         return check_pair(p, [](const Matrix& a, const Matrix& b) { return losses::cosine_align_loss(a.row(0), b.row(0)); });
       }},
      {"info_nce_single",
       [](std::uint64_t s) {
         return check_pair(make_problem(s, 2), [](const Matrix& a, const Matrix& b) { return losses::info_nce_single(a, b, 0.1); });
       }},
      {"symmetric_info_nce",
       [](std::uint64_t s) {
         const Problem p = make_problem(s, 2);
         return check_pair(p, [&](const Matrix& a, const Matrix& b) { return losses::symmetric_info_nce(a, b, p.q, 0.1, 0.1); });
       }},
      {"hnm_loss",
       [&](std::uint64_t s) {
         const Problem p = make_problem(s, 2);
         return check_pair(p, [&](const Matrix& a, const Matrix& b) {
           return losses::hnm_loss(a, b, p.q, static_cast<std::size_t>(hp.K), hp.margin_m, hp.tau_h);
         });
       }},
      {"js_agreement",
       [](std::uint64_t s) { return check_pair(make_problem(s, 2, true), losses::js_agreement); }},
      {"alignment_loss",
       [&](std::uint64_t s) {
         return check_batch(make_problem(s, 4), s, [&](const auto& b, const auto& w) { return losses::alignment_loss(b, hp, w); });
       }},
      {"consistency_loss",
       [&](std::uint64_t s) {
         return check_batch(make_problem(s, 4), s, [&](const auto& b, const auto&) { return losses::consistency_loss(b, hp); });
       }},
      {"distribution_loss",
       [&](std::uint64_t s) {
         return check_batch(make_problem(s, 4), s, [&](const auto& b, const auto&) { return losses::distribution_loss(b, hp); });
       }},
      {"total_loss",
       [&](std::uint64_t s) {
         return check_batch(make_problem(s, 4), s, [&](const auto& b, const auto& w) { return losses::total_loss(b, hp, w); });
       }},
      {"linear_encoder_backward", [](std::uint64_t s) { return check_encoder(s, false); }},
      {"mlp_encoder_backward", [](std::uint64_t s) { return check_encoder(s, true); }},
      {"train_step", [](std::uint64_t s) { return check_train_step(s); }},
  };

  std::vector<GradCheckEntry> out;
  for (const auto& c : checks) {
    GradCheckEntry e{c.name, instances, 0.0};
    for (std::size_t i = 0; i < instances; ++i) e.max_error = std::max(e.max_error, c.run(first_seed + i));
    out.push_back(e);
  }
  return out;
}

}  // namespace dmcl
