#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "wag/errors.hpp"

namespace wag {

/// Weights and offsets of the binomial/trinomial losses. Defaults are the
/// published fine-tuning values.
struct LossParams {
  double alpha_p = 5.0;
  double alpha_s = 6.0;
  double alpha_n = 20.0;
  double m_p = 0.0;
  double m_s = 0.3;
  double m_n = 0.7;

  void validate() const {
    if (!(alpha_p > 0.0) || !(alpha_s > 0.0) || !(alpha_n > 0.0))
      throw InvalidArgument("loss weights alpha_p, alpha_s, alpha_n must be positive");
  }
};

/// Similarities of one batch, split by pair class.
struct PairBatch {
  std::vector<double> s_pos;
  std::vector<double> s_semi;
  std::vector<double> s_neg;
};

/// d loss / d similarity, laid out like PairBatch.
struct LossGradient {
  std::vector<double> d_pos;
  std::vector<double> d_semi;
  std::vector<double> d_neg;
};

/// log(1 + e^x) without overflow for large |x|.
inline double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// 1 / (1 + e^-x), stable on both tails.
inline double logistic(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {

// mean over S of softplus(sign * alpha * (S - m)) / alpha
inline double soft_margin_term(std::span<const double> s, double alpha, double m, double sign) {
  if (s.empty()) return 0.0;
  double acc = 0.0;
  for (double v : s) acc += softplus(sign * alpha * (v - m));
  return acc / (static_cast<double>(s.size()) * alpha);
}

inline std::vector<double> soft_margin_grad(std::span<const double> s, double alpha, double m,
                                            double sign) {
  std::vector<double> g(s.size());
  const double n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) g[i] = sign * logistic(sign * alpha * (s[i] - m)) / n;
  return g;
}

}  // namespace detail

inline double semi_loss(std::span<const double> s_semi, const LossParams& p) {
  p.validate();
  return detail::soft_margin_term(s_semi, p.alpha_s, p.m_s, -1.0);
}

/// Positive term pulls positives above m_p; negative term pushes negatives
/// below m_n. Each term is averaged over its own pair count.
inline double binomial_loss(std::span<const double> s_pos, std::span<const double> s_neg,
                            const LossParams& p) {
  p.validate();
  return detail::soft_margin_term(s_pos, p.alpha_p, p.m_p, -1.0) +
         detail::soft_margin_term(s_neg, p.alpha_n, p.m_n, +1.0);
}

inline double trinomial_loss(const PairBatch& b, const LossParams& p) {
  return binomial_loss(b.s_pos, b.s_neg, p) + semi_loss(b.s_semi, p);
}

/// Analytic gradient of trinomial_loss (binomial_loss when s_semi is empty).
inline LossGradient loss_gradient(const PairBatch& b, const LossParams& p) {
  p.validate();
  return {detail::soft_margin_grad(b.s_pos, p.alpha_p, p.m_p, -1.0),
          detail::soft_margin_grad(b.s_semi, p.alpha_s, p.m_s, -1.0),
          detail::soft_margin_grad(b.s_neg, p.alpha_n, p.m_n, +1.0)};
}

}  // namespace wag
