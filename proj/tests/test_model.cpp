#include <cmath>
#include <random>

#include "doctest.h"
#include "support/oracles.hpp"
#include "ttlm/model.hpp"

using namespace ttlm;

namespace {

IdMatrix random_ids(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, TokenId vocab) {
  std::uniform_int_distribution<TokenId> d(0, vocab - 1);
  IdMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

MaskMatrix random_mask(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::bernoulli_distribution d(0.7);
  MaskMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// Hand-set V=2, E=1, H=1 model; expected values from tests/oracles/lstm_reference.py.
Params single_step_model() {
  auto p = Params::zeros({2, 1, 1, false});
  p.embedding << 0.5, -0.3;
  p.w_input << 0.1, 0.2, 0.3, 0.4;
  p.w_hidden << 0.5, -0.6, 0.7, -0.8;
  p.bias_gates << 0.01, 1.0, -0.02, 0.03;
  p.w_out << 1.5, -2.0;
  p.bias_out << 0.1, -0.1;
  return p;
}

}  // namespace

TEST_CASE("init_params is deterministic, bounded and shaped") {
  const ModelDims dims{5, 4, 3, false};
  const auto a = init_params<double>(dims, 42);
  const auto b = init_params<double>(dims, 42);
  CHECK(a == b);
  CHECK_FALSE(a == init_params<double>(dims, 43));
  CHECK(a.parameter_count() == 136);

  const double bound = 1.0 / std::sqrt(3.0);
  for (const auto* m : {&a.embedding, &a.w_input, &a.w_hidden, &a.w_out}) {
    CHECK(m->cwiseAbs().maxCoeff() <= bound);
  }
  CHECK(a.bias_gates.segment(3, 3) == Eigen::VectorXd::Ones(3));
  CHECK(a.bias_gates.head(3).isZero());
  CHECK(a.bias_gates.tail(6).isZero());
  CHECK(a.bias_out.isZero());

  CHECK_THROWS_AS(init_params<double>({0, 4, 3, false}, 1), ConfigError);
  CHECK_THROWS_AS(init_params<double>({5, 4, 3, true}, 1), ConfigError);
  const auto tied = init_params<double>({5, 3, 3, true}, 1);
  CHECK(tied.w_out == tied.embedding);

  const auto f = init_params<float>(dims, 42);
  CHECK(f.embedding.cast<double>().isApprox(a.embedding, 1e-6));
}

TEST_CASE("forward_step with zero parameters is uniform") {
  const auto p = Params::zeros({6, 3, 4, false});
  auto state = State::zeros(2, 4);
  const std::vector<TokenId> in{1, 5};
  const auto step = forward_step(p, state, in);
  CHECK(step.logits.isZero());
  CHECK(step.state.h.isZero());
  CHECK(step.state.c.isZero());
  CHECK(step.cache.gates.leftCols(4).isConstant(0.5));
}

TEST_CASE("forward_step matches the hand evaluated cell") {
  const auto p = single_step_model();
  State s{Eigen::MatrixXd::Constant(1, 1, 0.2), Eigen::MatrixXd::Constant(1, 1, -0.1)};
  const std::vector<TokenId> in{0};
  const auto step = forward_step(p, s, in);
  CHECK(step.state.h(0, 0) == doctest::Approx(0.035971894771305074916).epsilon(1e-12));
  CHECK(std::abs(step.state.h(0, 0) - 0.035971894771305074916) < 1e-12);
  CHECK(std::abs(step.state.c(0, 0) - 0.069624150975841689089) < 1e-12);
  CHECK(std::abs(step.logits(0, 0) - 0.15395784215695761237) < 1e-12);
  CHECK(std::abs(step.logits(0, 1) - -0.17194378954261014983) < 1e-12);

  const std::vector<TokenId> bad{2};
  CHECK_THROWS_AS(forward_step(p, s, bad), std::out_of_range);
  CHECK_THROWS_AS(forward_step(p, State::zeros(2, 1), in), std::invalid_argument);
}

TEST_CASE("hidden activations stay inside (-1, 1) under repeated input") {
  std::mt19937_64 rng(5);
  auto p = testing::random_params({4, 3, 5, false}, rng, 3.0);
  auto s = State::zeros(1, 5);
  const std::vector<TokenId> in{2};
  for (int t = 0; t < 500; ++t) {
    s = forward_step(p, s, in).state;
    REQUIRE(s.h.cwiseAbs().maxCoeff() < 1.0);
    REQUIRE(s.h.allFinite());
  }
}

TEST_CASE("loss_and_grad with zero parameters") {
  const auto p = Params::zeros({10, 3, 2, false});
  IdMatrix in(2, 3), tg(2, 3);
  in << 1, 2, 3, 4, 5, 6;
  tg << 7, 7, 0, 9, 1, 7;
  const MaskMatrix all = MaskMatrix::Constant(2, 3, true);
  const auto lg = loss_and_grad(p, in, tg, all, State::zeros(2, 2));
  CHECK(lg.token_count == 6);
  CHECK(std::abs(lg.total_nll - 6 * std::log(10.0)) < 1e-12);
  for (Eigen::Index v = 0; v < 10; ++v) {
    const auto hits = static_cast<double>((tg.array() == v).count());
    CHECK(std::abs(lg.grads.bias_out(v) - (6 * 0.1 - hits)) < 1e-12);
  }

  const MaskMatrix none = MaskMatrix::Constant(2, 3, false);
  const auto zero = loss_and_grad(p, in, tg, none, State::zeros(2, 2));
  CHECK(zero.total_nll == 0.0);
  CHECK(zero.token_count == 0);
  zero.grads.for_each([](std::string_view, const auto& t) { CHECK(t.isZero(0.0)); });
}

TEST_CASE("analytic gradients match central finite differences") {
  std::mt19937_64 rng(1234);
  SUBCASE("V=7 E=5 H=4 B=2 T=3") {
    const ModelDims dims{7, 5, 4, false};
    const auto p = testing::random_params(dims, rng);
    const auto in = random_ids(rng, 2, 3, 7);
    const auto tg = random_ids(rng, 2, 3, 7);
    const MaskMatrix mask = MaskMatrix::Constant(2, 3, true);
    const auto res = testing::finite_difference_check(p, in, tg, mask, State::zeros(2, 4));
    CHECK(res.checked == static_cast<std::size_t>(p.parameter_count()));
    INFO("worst: " << res.worst_tensor);
    CHECK(res.max_rel_err <= 1e-4);
  }
  SUBCASE("partial mask, carried state, thinking-token row") {
    const ModelDims dims{6, 3, 3, false};
    const auto p = testing::random_params(dims, rng);
    IdMatrix in(2, 4), tg(2, 4);
    in << 3, 2, 4, 2, 5, 2, 1, 2;
    tg << 2, 4, 2, 5, 2, 1, 2, 3;
    const MaskMatrix mask = tg.array() != kThinkingId;
    State init{Eigen::MatrixXd::Random(2, 3) * 0.5, Eigen::MatrixXd::Random(2, 3) * 0.5};
    const auto res = testing::finite_difference_check(p, in, tg, mask, init);
    INFO("worst: " << res.worst_tensor);
    CHECK(res.max_rel_err <= 1e-4);
    const auto lg = loss_and_grad(p, in, tg, mask, init);
    CHECK(lg.grads.embedding.row(kThinkingId).norm() > 0.0);
  }
  SUBCASE("tied weights") {
    const ModelDims dims{5, 3, 3, true};
    const auto p = testing::random_params(dims, rng);
    const auto in = random_ids(rng, 3, 2, 5);
    const auto tg = random_ids(rng, 3, 2, 5);
    const auto mask = random_mask(rng, 3, 2);
    const auto res = testing::finite_difference_check(p, in, tg, mask, State::zeros(3, 3));
    INFO("worst: " << res.worst_tensor);
    CHECK(res.max_rel_err <= 1e-4);
  }
}

TEST_CASE("masked loss is additive over disjoint masks") {
  std::mt19937_64 rng(99);
  const auto p = testing::random_params({8, 4, 3, false}, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = random_ids(rng, 3, 5, 8);
    const auto tg = random_ids(rng, 3, 5, 8);
    const auto m1 = random_mask(rng, 3, 5);
    const MaskMatrix m2 = !m1;
    const MaskMatrix all = m1 || m2;
    const auto init = State::zeros(3, 3);
    const double a = loss_and_grad(p, in, tg, m1, init).total_nll;
    const double b = loss_and_grad(p, in, tg, m2, init).total_nll;
    const auto both = loss_and_grad(p, in, tg, all, init);
    CHECK(std::abs(both.total_nll - (a + b)) < 1e-10);
    CHECK(both.token_count == 15);
  }
}

TEST_CASE("splitting a sequence with carried state preserves the loss") {
  std::mt19937_64 rng(21);
  const auto p = testing::random_params({9, 4, 5, false}, rng);
  const auto in = random_ids(rng, 2, 10, 9);
  const auto tg = random_ids(rng, 2, 10, 9);
  const MaskMatrix mask = MaskMatrix::Constant(2, 10, true);
  const auto whole = loss_and_grad(p, in, tg, mask, State::zeros(2, 5));
  const auto first = loss_and_grad(p, in.leftCols(4), tg.leftCols(4), mask.leftCols(4), State::zeros(2, 5));
  const auto second = loss_and_grad(p, in.rightCols(6), tg.rightCols(6), mask.rightCols(6), first.final_state);
  CHECK(std::abs(whole.total_nll - (first.total_nll + second.total_nll)) < 1e-10);
  CHECK((whole.final_state.h - second.final_state.h).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("loss_and_grad agrees with an independent per-position reference") {
  std::mt19937_64 rng(8);
  const auto p = testing::random_params({6, 3, 4, false}, rng);
  const std::vector<TokenId> ids{1, 4, 5, 3, 1, 0, 2, 4};
  IdMatrix in(1, 7), tg(1, 7);
  for (int t = 0; t < 7; ++t) {
    in(0, t) = ids[static_cast<std::size_t>(t)];
    tg(0, t) = ids[static_cast<std::size_t>(t) + 1];
  }
  const auto lg = loss_and_grad(p, in, tg, MaskMatrix::Constant(1, 7, true), State::zeros(1, 4));
  double ref = 0.0;
  for (double v : testing::reference_nll(p, ids)) ref += v;
  CHECK(std::abs(lg.total_nll - ref) < 1e-12);
}

TEST_CASE("predict_distribution is normalized and stable") {
  const auto zero = Params::zeros({7, 2, 3, false});
  const auto d = predict_distribution(zero, State::zeros(1, 3), 4);
  for (Eigen::Index v = 0; v < 7; ++v) CHECK(std::abs(d.probabilities(v) - 1.0 / 7.0) < 1e-15);

  Eigen::MatrixXd logits(1, 2);
  logits << 1000.0, 0.0;
  const auto ls = log_softmax_rows(logits);
  CHECK(ls.allFinite());
  CHECK(std::exp(ls(0, 0)) == 1.0);
  CHECK(std::exp(ls(0, 1)) == 0.0);
  CHECK(ls(0, 1) == doctest::Approx(-1000.0));

  std::mt19937_64 rng(77);
  const auto p = testing::random_params({11, 4, 6, false}, rng, 2.0);
  State s = State::zeros(1, 6);
  for (TokenId id : {3, 1, 9, 10, 0, 2, 2, 5}) {
    const auto dist = predict_distribution(p, s, id);
    CHECK(std::abs(dist.probabilities.sum() - 1.0) <= 1e-9);
    CHECK((dist.probabilities.array() > 0.0).all());
    s = dist.state;
  }
}

TEST_CASE("predict_distribution agrees with exp(-NLL) from loss_and_grad") {
  std::mt19937_64 rng(31);
  const auto p = testing::random_params({9, 3, 4, false}, rng);
  const std::vector<TokenId> ids{1, 6, 2, 8, 3, 0};
  State s = State::zeros(1, 4);
  for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
    const auto dist = predict_distribution(p, s, ids[t]);
    IdMatrix in(1, 1), tg(1, 1);
    in(0, 0) = ids[t];
    tg(0, 0) = ids[t + 1];
    const auto lg = loss_and_grad(p, in, tg, MaskMatrix::Constant(1, 1, true), s);
    CHECK(std::abs(dist.probabilities(ids[t + 1]) - std::exp(-lg.total_nll)) < 1e-12);
    s = dist.state;
  }
}
