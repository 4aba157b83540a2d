#ifndef TTLM_TESTS_ORACLES_HPP
#define TTLM_TESTS_ORACLES_HPP

// Test-only reference implementations. Nothing here calls into the model's
// forward or backward code except the finite-difference objective, which
// only reads total_nll.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ttlm/corpus.hpp"
#include "ttlm/model.hpp"

namespace ttlm::testing {

// Plain-loop LSTM over one lane; returns -log p(target) for each position
// t where ids[t + 1] is scored. Inputs are ids[0..n-2].
inline std::vector<double> reference_nll(const Params& p, const std::vector<TokenId>& ids,
                                         TokenId skip_target = -1) {
  const auto H = static_cast<std::size_t>(p.dims.hidden);
  const auto E = static_cast<std::size_t>(p.dims.embed);
  const auto Vn = static_cast<std::size_t>(p.dims.vocab);
  const auto& wo = p.dims.tied ? p.embedding : p.w_out;
  std::vector<double> h(H, 0.0), c(H, 0.0), out;
  const auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
    std::vector<double> pre(4 * H);
    for (std::size_t r = 0; r < 4 * H; ++r) {
      double v = p.bias_gates(static_cast<Eigen::Index>(r));
      for (std::size_t k = 0; k < E; ++k) v += p.w_input(r, k) * p.embedding(ids[t], k);
      for (std::size_t k = 0; k < H; ++k) v += p.w_hidden(r, k) * h[k];
      pre[r] = v;
    }
    for (std::size_t j = 0; j < H; ++j) {
      const double i = sig(pre[j]), f = sig(pre[H + j]), g = std::tanh(pre[2 * H + j]),
                   o = sig(pre[3 * H + j]);
      c[j] = f * c[j] + i * g;
      h[j] = o * std::tanh(c[j]);
    }
    const TokenId target = ids[t + 1];
    if (target == skip_target) continue;
    std::vector<double> z(Vn);
    for (std::size_t v = 0; v < Vn; ++v) {
      z[v] = p.bias_out(static_cast<Eigen::Index>(v));
      for (std::size_t k = 0; k < H; ++k) z[v] += wo(v, k) * h[k];
    }
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    out.push_back(-(z[static_cast<std::size_t>(target)] - m - std::log(s)));
  }
  return out;
}

inline double exp_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return std::exp(s / static_cast<double>(v.size()));
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_tensor;
  std::size_t checked = 0;
};

// Central differences of total_nll w.r.t. every parameter entry.
// Relative error is |a - n| / max(|a|, |n|, floor).
template <typename In, typename Tg, typename Mk>
GradCheckResult finite_difference_check(const Params& params, const In& inputs, const Tg& targets,
                                        const Mk& mask, const State& init, double eps = 1e-5,
                                        double floor = 1e-7) {
  const auto analytic = loss_and_grad(params, inputs, targets, mask, init).grads;
  Params probe = params;
  GradCheckResult res;
  const auto objective = [&] { return loss_and_grad(probe, inputs, targets, mask, init).total_nll; };

  const auto visit = [&](std::string_view name, auto Params::*member) {
    auto& tensor = probe.*member;
    const auto& grad = analytic.*member;
    for (Eigen::Index i = 0; i < tensor.size(); ++i) {
      const double saved = tensor.data()[i];
      tensor.data()[i] = saved + eps;
      const double up = objective();
      tensor.data()[i] = saved - eps;
      const double down = objective();
      tensor.data()[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double a = grad.data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++res.checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_tensor = std::string(name) + "[" + std::to_string(i) + "]";
      }
    }
  };
  visit("embedding", &Params::embedding);
  visit("w_input", &Params::w_input);
  visit("w_hidden", &Params::w_hidden);
  visit("bias_gates", &Params::bias_gates);
  visit("w_out", &Params::w_out);
  visit("bias_out", &Params::bias_out);
  return res;
}

inline Params random_params(const ModelDims& dims, std::mt19937_64& rng, double scale = 0.5) {
  auto p = Params::zeros(dims);
  std::uniform_real_distribution<double> u(-scale, scale);
  p.for_each([&](std::string_view, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  });
  if (dims.tied) p.w_out = p.embedding;
  return p;
}

inline TokenStream random_stream(std::mt19937_64& rng, std::size_t len, TokenId lo, TokenId hi) {
  std::uniform_int_distribution<TokenId> d(lo, hi);
  TokenStream s;
  s.ids.resize(len);
  for (auto& id : s.ids) id = d(rng);
  return s;
}

// Lines of "a b c d e f g h": a deterministic corpus with zero entropy.
inline std::string cyclic_text(std::size_t lines) {
  std::string out;
  for (std::size_t i = 0; i < lines; ++i) out += "a b c d e f g h\n";
  return out;
}

}  // namespace ttlm::testing

#endif  // TTLM_TESTS_ORACLES_HPP
