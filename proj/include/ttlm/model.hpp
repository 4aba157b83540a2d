#ifndef TTLM_MODEL_HPP
#define TTLM_MODEL_HPP

// Single-layer LSTM language model with hand-written reverse mode.
//
// Batched tensors are laid out one row per lane: hidden and cell states are
// B x H, logits are B x V. The packed gate matrices stack the four gates
// along rows in the order (input, forget, cell candidate, output), so
// w_input is 4H x E, w_hidden is 4H x H and bias_gates has 4H entries.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "ttlm/corpus.hpp"
#include "ttlm/errors.hpp"

namespace ttlm {

using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelDims {
  Eigen::Index vocab = 0;
  Eigen::Index embed = 0;
  Eigen::Index hidden = 0;
  bool tied = false;  // output projection shares the embedding matrix; needs embed == hidden

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

inline void validate_dims(const ModelDims& dims) {
  if (dims.vocab <= 0 || dims.embed <= 0 || dims.hidden <= 0) {
    throw ConfigError("model dimensions must be positive (V=" + std::to_string(dims.vocab) +
                      ", E=" + std::to_string(dims.embed) + ", H=" + std::to_string(dims.hidden) + ")");
  }
  if (dims.tied && dims.embed != dims.hidden) {
    throw ConfigError("weight tying requires embed size == hidden size");
  }
}

template <typename Scalar>
struct ModelParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  ModelDims dims;
  Matrix embedding;   // V x E
  Matrix w_input;     // 4H x E
  Matrix w_hidden;    // 4H x H
  Vector bias_gates;  // 4H
  Matrix w_out;       // V x H, unused when tied
  Vector bias_out;    // V

  static ModelParams zeros(const ModelDims& d) {
    validate_dims(d);
    ModelParams p;
    p.dims = d;
    p.embedding = Matrix::Zero(d.vocab, d.embed);
    p.w_input = Matrix::Zero(4 * d.hidden, d.embed);
    p.w_hidden = Matrix::Zero(4 * d.hidden, d.hidden);
    p.bias_gates = Vector::Zero(4 * d.hidden);
    p.w_out = Matrix::Zero(d.vocab, d.hidden);
    p.bias_out = Vector::Zero(d.vocab);
    return p;
  }

  ModelParams zeros_like() const { return zeros(dims); }

  const Matrix& output_weights() const { return dims.tied ? embedding : w_out; }

  // Visits every tensor in checkpoint order as f(name, tensor).
  template <typename F>
  void for_each(F&& f) {
    f(std::string_view("embedding"), embedding);
    f(std::string_view("w_input"), w_input);
    f(std::string_view("w_hidden"), w_hidden);
    f(std::string_view("bias_gates"), bias_gates);
    f(std::string_view("w_out"), w_out);
    f(std::string_view("bias_out"), bias_out);
  }

  template <typename F>
  void for_each(F&& f) const {
    f(std::string_view("embedding"), embedding);
    f(std::string_view("w_input"), w_input);
    f(std::string_view("w_hidden"), w_hidden);
    f(std::string_view("bias_gates"), bias_gates);
    f(std::string_view("w_out"), w_out);
    f(std::string_view("bias_out"), bias_out);
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for_each([&](std::string_view, const auto& t) { n += t.size(); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](std::string_view, const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }
};

template <typename Scalar>
bool operator==(const ModelParams<Scalar>& a, const ModelParams<Scalar>& b) {
  return a.dims == b.dims && a.embedding == b.embedding && a.w_input == b.w_input &&
         a.w_hidden == b.w_hidden && a.bias_gates == b.bias_gates && a.w_out == b.w_out &&
         a.bias_out == b.bias_out;
}

template <typename Scalar>
struct HiddenState {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix h;  // B x H
  Matrix c;  // B x H

  static HiddenState zeros(Eigen::Index lanes, Eigen::Index hidden) {
    return {Matrix::Zero(lanes, hidden), Matrix::Zero(lanes, hidden)};
  }
  Eigen::Index lanes() const { return h.rows(); }
};

// Activations of one forward step, enough for the exact backward pass.
template <typename Scalar>
struct StepCache {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  std::vector<TokenId> inputs;
  Matrix x;       // B x E embedded inputs
  Matrix h_prev;  // B x H
  Matrix c_prev;  // B x H
  Matrix gates;   // B x 4H post-activation values (i, f, g, o)
  Matrix c;       // B x H
  Matrix tanh_c;  // B x H
  Matrix h;       // B x H
};

template <typename Scalar>
using ForwardTrace = std::vector<StepCache<Scalar>>;

template <typename Scalar>
struct StepResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> logits;  // B x V
  HiddenState<Scalar> state;
  StepCache<Scalar> cache;
};

template <typename Scalar>
struct LossGrad {
  Scalar total_nll = 0;  // nats, summed over unmasked positions
  std::size_t token_count = 0;
  ModelParams<Scalar> grads;
  HiddenState<Scalar> final_state;
};

template <typename Scalar>
struct Distribution {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> probabilities;
  HiddenState<Scalar> state;
};

using Params = ModelParams<double>;
using State = HiddenState<double>;

namespace detail {

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) + (-x).exp()).inverse();
}

}  // namespace detail

// Row-wise log-softmax with max subtraction.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> log_softmax_rows(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix out = logits;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const Scalar m = out.row(r).maxCoeff();
    out.row(r).array() -= m;
    const Scalar lse = std::log(out.row(r).array().exp().sum());
    out.row(r).array() -= lse;
  }
  return out;
}

template <typename Scalar>
ModelParams<Scalar> init_params(const ModelDims& dims, std::uint64_t seed) {
  auto p = ModelParams<Scalar>::zeros(dims);
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
  std::uniform_real_distribution<double> dist(-bound, bound);
  const auto fill = [&](auto& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<Scalar>(dist(rng));
    }
  };
  fill(p.embedding);
  fill(p.w_input);
  fill(p.w_hidden);
  fill(p.w_out);
  if (dims.tied) p.w_out = p.embedding;
  p.bias_gates.segment(dims.hidden, dims.hidden).setOnes();
  return p;
}

template <typename Scalar>
StepResult<Scalar> forward_step(const ModelParams<Scalar>& params, const HiddenState<Scalar>& state,
                                std::span<const TokenId> input_ids) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index lanes = static_cast<Eigen::Index>(input_ids.size());
  const Eigen::Index H = params.dims.hidden;
  if (state.h.rows() != lanes || state.h.cols() != H || state.c.rows() != lanes ||
      state.c.cols() != H) {
    throw std::invalid_argument("hidden state shape does not match batch size and hidden size");
  }

  StepResult<Scalar> out;
  auto& cache = out.cache;
  cache.inputs.assign(input_ids.begin(), input_ids.end());
  cache.x.resize(lanes, params.dims.embed);
  for (Eigen::Index b = 0; b < lanes; ++b) {
    const TokenId id = input_ids[static_cast<std::size_t>(b)];
    if (id < 0 || id >= params.dims.vocab) {
      throw std::out_of_range("input id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(params.dims.vocab));
    }
    cache.x.row(b) = params.embedding.row(id);
  }
  cache.h_prev = state.h;
  cache.c_prev = state.c;

  Matrix pre(lanes, 4 * H);
  pre.noalias() = cache.x * params.w_input.transpose();
  pre.noalias() += state.h * params.w_hidden.transpose();
  pre.rowwise() += params.bias_gates.transpose();

  cache.gates.resize(lanes, 4 * H);
  cache.gates.leftCols(H) = detail::sigmoid(pre.leftCols(H).array()).matrix();
  cache.gates.middleCols(H, H) = detail::sigmoid(pre.middleCols(H, H).array()).matrix();
  cache.gates.middleCols(2 * H, H) = pre.middleCols(2 * H, H).array().tanh().matrix();
  cache.gates.rightCols(H) = detail::sigmoid(pre.rightCols(H).array()).matrix();

  const auto i = cache.gates.leftCols(H).array();
  const auto f = cache.gates.middleCols(H, H).array();
  const auto g = cache.gates.middleCols(2 * H, H).array();
  const auto o = cache.gates.rightCols(H).array();
  cache.c = (f * state.c.array() + i * g).matrix();
  cache.tanh_c = cache.c.array().tanh().matrix();
  cache.h = (o * cache.tanh_c.array()).matrix();

  out.logits.resize(lanes, params.dims.vocab);
  out.logits.noalias() = cache.h * params.output_weights().transpose();
  out.logits.rowwise() += params.bias_out.transpose();

  out.state.h = cache.h;
  out.state.c = cache.c;
  return out;
}

// Sum of -log p(target) over positions where mask is true, with exact
// gradients of that sum. Gradients do not flow into the initial state.
template <typename Scalar, typename InDerived, typename TgtDerived, typename MaskDerived>
LossGrad<Scalar> loss_and_grad(const ModelParams<Scalar>& params,
                               const Eigen::MatrixBase<InDerived>& inputs,
                               const Eigen::MatrixBase<TgtDerived>& targets,
                               const Eigen::DenseBase<MaskDerived>& mask,
                               const HiddenState<Scalar>& initial) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index lanes = inputs.rows();
  const Eigen::Index steps = inputs.cols();
  const Eigen::Index H = params.dims.hidden;
  const Eigen::Index V = params.dims.vocab;
  if (targets.rows() != lanes || targets.cols() != steps || mask.rows() != lanes ||
      mask.cols() != steps) {
    throw std::invalid_argument("inputs, targets and mask must share one B x T shape");
  }

  LossGrad<Scalar> result;
  result.grads = params.zeros_like();

  ForwardTrace<Scalar> trace;
  trace.reserve(static_cast<std::size_t>(steps));
  std::vector<Matrix> dlogits(static_cast<std::size_t>(steps));
  std::vector<bool> any_counted(static_cast<std::size_t>(steps), false);

  HiddenState<Scalar> state = initial;
  std::vector<TokenId> column(static_cast<std::size_t>(lanes));
  for (Eigen::Index t = 0; t < steps; ++t) {
    for (Eigen::Index b = 0; b < lanes; ++b) column[static_cast<std::size_t>(b)] = inputs(b, t);
    auto step = forward_step(params, state, column);

    Matrix& dl = dlogits[static_cast<std::size_t>(t)];
    for (Eigen::Index b = 0; b < lanes; ++b) {
      if (!mask(b, t)) continue;
      const TokenId target = targets(b, t);
      if (target < 0 || target >= V) {
        throw std::out_of_range("target id " + std::to_string(target) + " outside vocabulary");
      }
      if (!any_counted[static_cast<std::size_t>(t)]) {
        dl = Matrix::Zero(lanes, V);
        any_counted[static_cast<std::size_t>(t)] = true;
      }
      auto logp = log_softmax_rows(step.logits.row(b));
      result.total_nll -= logp(0, target);
      ++result.token_count;
      dl.row(b) = logp.array().exp().matrix();
      dl(b, target) -= Scalar(1);
    }
    state = std::move(step.state);
    trace.push_back(std::move(step.cache));
  }
  result.final_state = state;

  auto& grads = result.grads;
  Matrix& d_out_weights = params.dims.tied ? grads.embedding : grads.w_out;
  const Matrix& out_weights = params.output_weights();
  Matrix dh_next = Matrix::Zero(lanes, H);
  Matrix dc_next = Matrix::Zero(lanes, H);
  Matrix dh(lanes, H), dc(lanes, H), d_pre(lanes, 4 * H), dx(lanes, params.dims.embed);

  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const auto& cache = trace[static_cast<std::size_t>(t)];
    dh = dh_next;
    if (any_counted[static_cast<std::size_t>(t)]) {
      const Matrix& dl = dlogits[static_cast<std::size_t>(t)];
      d_out_weights.noalias() += dl.transpose() * cache.h;
      grads.bias_out += dl.colwise().sum().transpose();
      dh.noalias() += dl * out_weights;
    }

    const auto i = cache.gates.leftCols(H).array();
    const auto f = cache.gates.middleCols(H, H).array();
    const auto g = cache.gates.middleCols(2 * H, H).array();
    const auto o = cache.gates.rightCols(H).array();
    const auto tc = cache.tanh_c.array();

    dc = (dh.array() * o * (Scalar(1) - tc.square()) + dc_next.array()).matrix();
    d_pre.leftCols(H) = (dc.array() * g * i * (Scalar(1) - i)).matrix();
    d_pre.middleCols(H, H) = (dc.array() * cache.c_prev.array() * f * (Scalar(1) - f)).matrix();
    d_pre.middleCols(2 * H, H) = (dc.array() * i * (Scalar(1) - g.square())).matrix();
    d_pre.rightCols(H) = (dh.array() * tc * o * (Scalar(1) - o)).matrix();
    dc_next = (dc.array() * f).matrix();

    grads.w_input.noalias() += d_pre.transpose() * cache.x;
    grads.w_hidden.noalias() += d_pre.transpose() * cache.h_prev;
    grads.bias_gates += d_pre.colwise().sum().transpose();
    dh_next.noalias() = d_pre * params.w_hidden;
    dx.noalias() = d_pre * params.w_input;
    for (Eigen::Index b = 0; b < lanes; ++b) {
      grads.embedding.row(cache.inputs[static_cast<std::size_t>(b)]) += dx.row(b);
    }
  }
  return result;
}

// Next-token distribution for a single lane.
template <typename Scalar>
Distribution<Scalar> predict_distribution(const ModelParams<Scalar>& params,
                                          const HiddenState<Scalar>& state, TokenId input_id) {
  const TokenId ids[1] = {input_id};
  auto step = forward_step(params, state, std::span<const TokenId>(ids));
  Distribution<Scalar> out;
  out.probabilities = log_softmax_rows(step.logits).row(0).transpose().array().exp().matrix();
  out.state = std::move(step.state);
  return out;
}

}  // namespace ttlm

#endif  // TTLM_MODEL_HPP
