#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "wag/errors.hpp"
#include "wag/loss.hpp"
#include "wag/rng.hpp"

namespace wag {

/// Shape of the synthetic ground/satellite training set.
struct ToyDatasetSpec {
  std::size_t tiles = 200;
  std::size_t latent_dim = 8;
  std::size_t feature_dim = 48;
  double feature_noise = 0.45;
  /// How much of the tile code a semi-positive (off-center) ground view keeps
  /// in the positive-view subspace; the rest arrives through a separate
  /// off-center mixing.
  double semi_center_share = 0.5;
  std::uint64_t seed = 1;
};

/// Raw feature vectors for every tile: one satellite view plus positive and
/// semi-positive ground views, each with a training draw and an evaluation
/// draw. Every semi-positive view belongs to exactly one tile, whose positive
/// view is its anchor.
struct ToyDataset {
  ToyDatasetSpec spec;
  std::vector<std::vector<double>> satellite;
  std::vector<std::vector<double>> ground_pos;
  std::vector<std::vector<double>> ground_semi;
  std::vector<std::vector<double>> eval_pos;
  std::vector<std::vector<double>> eval_semi;

  std::size_t tiles() const noexcept { return satellite.size(); }
  std::size_t feature_dim() const noexcept { return spec.feature_dim; }
};

inline ToyDataset make_toy_dataset(const ToyDatasetSpec& spec) {
  if (spec.tiles < 2 || spec.latent_dim == 0 || spec.feature_dim == 0)
    throw InvalidArgument("toy dataset needs >= 2 tiles and positive dimensions");
  std::mt19937_64 gen(derive_seed(spec.seed, "toy-dataset"));
  std::normal_distribution<double> n01;
  const std::size_t L = spec.latent_dim, F = spec.feature_dim;
  auto random_matrix = [&] {
    std::vector<double> m(F * L);
    for (auto& v : m) v = n01(gen) / std::sqrt(static_cast<double>(L));
    return m;
  };
  const auto mix_sat = random_matrix();
  const auto mix_center = random_matrix();
  const auto mix_offset = random_matrix();
  auto project = [&](const std::vector<double>& m, const std::vector<double>& c, double scale,
                     std::vector<double>& out) {
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t l = 0; l < L; ++l) out[f] += scale * m[f * L + l] * c[l];
  };
  auto noisy = [&](std::vector<double> v) {
    for (auto& x : v) x += spec.feature_noise * n01(gen);
    return v;
  };

  ToyDataset d;
  d.spec = spec;
  const double a = spec.semi_center_share;
  const double b = std::sqrt(std::max(0.0, 1.0 - a * a));
  for (std::size_t t = 0; t < spec.tiles; ++t) {
    std::vector<double> code(L);
    for (auto& v : code) v = n01(gen);
    std::vector<double> sat(F, 0.0), pos(F, 0.0), semi(F, 0.0);
    project(mix_sat, code, 1.0, sat);
    project(mix_center, code, 1.0, pos);
    project(mix_center, code, a, semi);
    project(mix_offset, code, b, semi);
    d.satellite.push_back(noisy(sat));
    d.ground_pos.push_back(noisy(pos));
    d.ground_semi.push_back(noisy(semi));
    d.eval_pos.push_back(noisy(pos));
    d.eval_semi.push_back(noisy(semi));
  }
  return d;
}

enum class LossKind { Binomial, Trinomial };

inline const char* to_string(LossKind k) { return k == LossKind::Binomial ? "binomial" : "trinomial"; }

struct TrainOptions {
  /// Binomial-only epochs run before `epochs` epochs of the chosen loss.
  int warmup_epochs = 30;
  int epochs = 15;
  double lr = 0.5;
  std::size_t embedding_dim = 16;
  std::size_t negatives = 8;
  std::uint64_t seed = 1;
};

/// Linear map from raw features to unit embeddings: one branch per view.
struct LinearEmbedder {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> ground;     // out x in
  std::vector<double> satellite;  // out x in
};

struct RecallReport {
  double recall_pos_at_1 = 0.0;
  double recall_semi_at_1 = 0.0;
};

struct TrainReport {
  LossKind loss = LossKind::Trinomial;
  std::uint64_t seed = 0;
  std::vector<double> loss_curve;  // mean per-anchor loss for each epoch
  RecallReport initial;
  RecallReport final;
  LinearEmbedder model;
};

namespace detail {

struct Projected {
  std::vector<double> unit;
  double norm = 0.0;
};

inline Projected project(const std::vector<double>& w, std::size_t out, const std::vector<double>& x) {
  Projected p;
  p.unit.assign(out, 0.0);
  const std::size_t in = x.size();
  for (std::size_t r = 0; r < out; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < in; ++c) acc += w[r * in + c] * x[c];
    p.unit[r] = acc;
  }
  double sq = 0.0;
  for (double v : p.unit) sq += v * v;
  p.norm = std::sqrt(sq);
  if (p.norm > 0.0)
    for (auto& v : p.unit) v /= p.norm;
  return p;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Accumulate coeff * dS/dW for S = <u_a, u_b>, with respect to the weights
// that produced u_a from x_a.
inline void accumulate_grad(std::vector<double>& grad, const Projected& a, const Projected& b,
                            double s, double coeff, const std::vector<double>& x) {
  if (a.norm <= 0.0) return;
  const std::size_t in = x.size();
  for (std::size_t r = 0; r < a.unit.size(); ++r) {
    const double de = coeff * (b.unit[r] - s * a.unit[r]) / a.norm;
    if (de == 0.0) continue;
    for (std::size_t c = 0; c < in; ++c) grad[r * in + c] += de * x[c];
  }
}

inline double recall_at_1(const LinearEmbedder& m, const std::vector<std::vector<double>>& queries,
                          const std::vector<Projected>& sats) {
  std::size_t hits = 0;
  for (std::size_t t = 0; t < queries.size(); ++t) {
    const Projected q = project(m.ground, m.out, queries[t]);
    std::size_t best = 0;
    double best_s = -2.0;
    for (std::size_t j = 0; j < sats.size(); ++j) {
      const double s = dot(q.unit, sats[j].unit);
      if (s > best_s) {
        best_s = s;
        best = j;
      }
    }
    if (best == t) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

}  // namespace detail

/// Recall@1 of the evaluation queries against all satellite views.
inline RecallReport evaluate_recall(const LinearEmbedder& m, const ToyDataset& data) {
  std::vector<detail::Projected> sats;
  sats.reserve(data.tiles());
  for (const auto& s : data.satellite) sats.push_back(detail::project(m.satellite, m.out, s));
  return {detail::recall_at_1(m, data.eval_pos, sats), detail::recall_at_1(m, data.eval_semi, sats)};
}

inline LinearEmbedder init_embedder(std::size_t in, std::size_t out, std::uint64_t seed) {
  LinearEmbedder m{in, out, std::vector<double>(in * out), std::vector<double>(in * out)};
  std::mt19937_64 gen(derive_seed(seed, "toy-init"));
  std::normal_distribution<double> n01;
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : m.ground) v = scale * n01(gen);
  for (auto& v : m.satellite) v = scale * n01(gen);
  return m;
}

/// Per-anchor SGD on the chosen loss. Each anchor tile contributes one
/// positive pair, one semi-positive pair (trinomial only) and
/// `negatives` negative pairs formed from its positive view and other tiles.
inline TrainReport train_toy_embedding(const ToyDataset& data, LossKind kind,
                                       const LossParams& params, const TrainOptions& opt) {
  params.validate();
  if (opt.epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (opt.warmup_epochs < 0) throw InvalidArgument("warmup_epochs must be >= 0");
  if (data.tiles() < 2) throw InvalidArgument("dataset must contain at least two tiles");
  if (opt.embedding_dim == 0) throw InvalidArgument("embedding_dim must be positive");

  TrainReport report;
  report.loss = kind;
  report.seed = opt.seed;
  report.model = init_embedder(data.feature_dim(), opt.embedding_dim, opt.seed);
  LinearEmbedder& m = report.model;
  report.initial = evaluate_recall(m, data);

  std::mt19937_64 gen(derive_seed(opt.seed, "toy-train"));
  std::vector<std::size_t> order(data.tiles());
  std::iota(order.begin(), order.end(), 0);
  std::uniform_int_distribution<std::size_t> pick(0, data.tiles() - 2);
  std::vector<double> grad_g(m.ground.size()), grad_s(m.satellite.size());

  const int total_epochs = opt.warmup_epochs + opt.epochs;
  for (int epoch = 1; epoch <= total_epochs; ++epoch) {
    const bool use_semi = kind == LossKind::Trinomial && epoch > opt.warmup_epochs;
    std::shuffle(order.begin(), order.end(), gen);
    double epoch_loss = 0.0;
    for (std::size_t t : order) {
      const auto gp = detail::project(m.ground, m.out, data.ground_pos[t]);
      const auto gs = detail::project(m.ground, m.out, data.ground_semi[t]);
      const auto st = detail::project(m.satellite, m.out, data.satellite[t]);
      std::vector<std::size_t> neg_ids(opt.negatives);
      std::vector<detail::Projected> negs;
      negs.reserve(opt.negatives);
      for (auto& j : neg_ids) {
        j = pick(gen);
        if (j >= t) ++j;
        negs.push_back(detail::project(m.satellite, m.out, data.satellite[j]));
      }

      bool finite = std::isfinite(gp.norm) && std::isfinite(gs.norm) && std::isfinite(st.norm);
      for (const auto& n : negs) finite = finite && std::isfinite(n.norm);
      if (!finite) throw Divergence("embedding weights overflowed", epoch);

      PairBatch batch;
      batch.s_pos.push_back(detail::dot(gp.unit, st.unit));
      if (use_semi) batch.s_semi.push_back(detail::dot(gs.unit, st.unit));
      for (const auto& n : negs) batch.s_neg.push_back(detail::dot(gp.unit, n.unit));

      const double loss = trinomial_loss(batch, params);
      if (!std::isfinite(loss)) throw Divergence("training loss became non-finite", epoch);
      epoch_loss += loss;
      if (opt.lr == 0.0) continue;

      const LossGradient g = loss_gradient(batch, params);
      std::fill(grad_g.begin(), grad_g.end(), 0.0);
      std::fill(grad_s.begin(), grad_s.end(), 0.0);
      detail::accumulate_grad(grad_g, gp, st, batch.s_pos[0], g.d_pos[0], data.ground_pos[t]);
      detail::accumulate_grad(grad_s, st, gp, batch.s_pos[0], g.d_pos[0], data.satellite[t]);
      if (use_semi) {
        detail::accumulate_grad(grad_g, gs, st, batch.s_semi[0], g.d_semi[0], data.ground_semi[t]);
        detail::accumulate_grad(grad_s, st, gs, batch.s_semi[0], g.d_semi[0], data.satellite[t]);
      }
      for (std::size_t i = 0; i < negs.size(); ++i) {
        detail::accumulate_grad(grad_g, gp, negs[i], batch.s_neg[i], g.d_neg[i], data.ground_pos[t]);
        detail::accumulate_grad(grad_s, negs[i], gp, batch.s_neg[i], g.d_neg[i],
                                data.satellite[neg_ids[i]]);
      }
      for (std::size_t i = 0; i < grad_g.size(); ++i) m.ground[i] -= opt.lr * grad_g[i];
      for (std::size_t i = 0; i < grad_s.size(); ++i) m.satellite[i] -= opt.lr * grad_s[i];
    }
    epoch_loss /= static_cast<double>(data.tiles());
    if (!std::isfinite(epoch_loss)) throw Divergence("training loss became non-finite", epoch);
    report.loss_curve.push_back(epoch_loss);
  }
  report.final = evaluate_recall(m, data);
  return report;
}

}  // namespace wag
