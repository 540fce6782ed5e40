#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "drl4route/agent.hpp"
#include "fixtures.hpp"

using namespace drl4route;
using namespace drl4route::agent;

namespace {

ModelConfig small_model(std::uint64_t seed = 3) {
  ModelConfig cfg;
  cfg.d_h = 16;
  cfg.n_head = 4;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.d_h = 30;
  EXPECT_THROW(c.validate(), InputError);
  c = ModelConfig{};
  c.n_max = 26;
  EXPECT_THROW(c.validate(), InputError);
  EXPECT_EQ(ModelConfig{}.to_kv(), "d_h=32\nn_head=4\nK=2\nN_max=25\nd_feature=8\nseed=1\n");
}

TEST(Params, NamespacesAndDeterminism) {
  const auto cfg = small_model();
  auto a = init_params(cfg), b = init_params(cfg);
  EXPECT_TRUE(a == b);
  std::size_t critic = 0;
  for (const auto& p : a) critic += is_critic_param(p.name);
  EXPECT_EQ(critic, 4u);
  EXPECT_TRUE(a.contains("decoder.h0"));
  EXPECT_TRUE(a.contains("decoder.c0"));
  EXPECT_EQ(a.at("critic.fc1.w").value.rows(), 25);
  EXPECT_FALSE(a == init_params(small_model(4)));
}

TEST(Encode, SingleTask) {
  std::mt19937_64 rng(1);
  auto cfg = small_model();
  auto params = init_params(cfg);
  const auto s = fixtures::random_sample(rng, 1, 1);
  Tape t(false);
  const Matrix e = encode(t, params, cfg, s).value();
  EXPECT_EQ(e.rows(), 1);
  EXPECT_EQ(e.cols(), 16);
  EXPECT_TRUE(e.allFinite());
}

TEST(Encode, EmptyThrows) {
  auto cfg = small_model();
  auto params = init_params(cfg);
  Tape t(false);
  EXPECT_THROW(encode(t, params, cfg, Sample{}), InputError);
}

TEST(Encode, PermutationEquivariant) {
  std::mt19937_64 rng(2);
  auto cfg = small_model();
  auto params = init_params(cfg);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = fixtures::random_sample(rng, 7, 4);
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Sample p = s;
    for (std::size_t i = 0; i < 7; ++i) {
      p.tasks[i] = s.tasks[perm[i]];
      p.tasks[i].id = static_cast<TaskId>(i + 1);
    }
    Tape t(false);
    const Matrix a = encode(t, params, cfg, s).value();
    const Matrix b = encode(t, params, cfg, p).value();
    for (std::size_t i = 0; i < 7; ++i)
      EXPECT_TRUE(b.row(static_cast<Eigen::Index>(i)).isApprox(a.row(static_cast<Eigen::Index>(perm[i])), 1e-12));
  }
}

TEST(Encode, DuplicateTasksShareEmbedding) {
  std::mt19937_64 rng(3);
  auto cfg = small_model();
  auto params = init_params(cfg);
  auto s = fixtures::random_sample(rng, 5, 3);
  s.tasks[3] = s.tasks[1];
  s.tasks[3].id = 4;
  Tape t(false);
  const Matrix e = encode(t, params, cfg, s).value();
  EXPECT_LT((e.row(1) - e.row(3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DecodeStep, DistributionsAndMask) {
  std::mt19937_64 rng(4);
  auto cfg = small_model();
  auto params = init_params(cfg);
  const auto s = fixtures::random_sample(rng, 6, 4);
  Tape t(false);
  auto ctx = make_context(t, params, encode(t, params, cfg, s));
  auto state = initial_state(t, params, ctx);
  const std::vector<TaskId> route{3, 1, 6, 2, 5, 4};
  for (TaskId id : route) {
    EXPECT_EQ(state.step, state.emitted.size() + 1);
    EXPECT_EQ(state.feasible, NoDuplication::feasible(6, state.emitted));
    auto r = decode_step(t, params, ctx, state);
    const auto p = probabilities(r.log_probs);
    double total = 0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (!state.feasible[j]) EXPECT_EQ(p[j], 0.0);
      total += p[j];
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
    if (state.emitted.size() == 5) EXPECT_EQ(p[static_cast<std::size_t>(id) - 1], 1.0);
    advance(state, ctx, r, id);
  }
  EXPECT_THROW(decode_step(t, params, ctx, state), NoFeasibleAction);
}

TEST(DecodeStep, AdvanceRejectsInfeasible) {
  std::mt19937_64 rng(5);
  auto cfg = small_model();
  auto params = init_params(cfg);
  const auto s = fixtures::random_sample(rng, 3, 2);
  Tape t(false);
  auto ctx = make_context(t, params, encode(t, params, cfg, s));
  auto state = initial_state(t, params, ctx);
  auto r = decode_step(t, params, ctx, state);
  advance(state, ctx, r, 2);
  r = decode_step(t, params, ctx, state);
  EXPECT_THROW(advance(state, ctx, r, 2), InputError);
  EXPECT_THROW(advance(state, ctx, r, 4), InputError);
}

TEST(Choice, GreedyTieBreaksByLowestId) {
  EXPECT_EQ(greedy_choice({0.2, 0.4, 0.4}, {true, true, true}), 2);
  EXPECT_EQ(greedy_choice({0.2, 0.4, 0.4}, {true, false, true}), 3);
  EXPECT_THROW(greedy_choice({1.0}, {false}), NoFeasibleAction);
}

TEST(Rollout, SingleTask) {
  std::mt19937_64 rng(6);
  auto cfg = small_model();
  auto params = init_params(cfg);
  const auto s = fixtures::random_sample(rng, 1, 1);
  for (auto mode : {DecodeMode::kGreedy, DecodeMode::kSample}) {
    const auto tr = rollout(s, params, cfg, mode, 9);
    EXPECT_EQ(tr.actions, (std::vector<TaskId>{1}));
    EXPECT_EQ(tr.log_probs, (std::vector<double>{0.0}));
  }
  EXPECT_EQ(route_log_prob(s, std::vector<TaskId>{1}, params, cfg), 0.0);
}

TEST(Rollout, DeterminismAndMaskSoundness) {
  std::mt19937_64 rng(7);
  auto cfg = small_model();
  auto params = init_params(cfg);
  bool any_differs = false;
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = fixtures::random_sample(rng, 2 + rng() % 15, 1);
    const auto g1 = rollout(s, params, cfg, DecodeMode::kGreedy);
    const auto g2 = rollout(s, params, cfg, DecodeMode::kGreedy);
    EXPECT_EQ(g1.actions, g2.actions);
    EXPECT_EQ(g1.log_probs, g2.log_probs);
    const auto a = rollout(s, params, cfg, DecodeMode::kSample, 100 + trial);
    const auto b = rollout(s, params, cfg, DecodeMode::kSample, 100 + trial);
    const auto c = rollout(s, params, cfg, DecodeMode::kSample, 900 + trial);
    EXPECT_EQ(a.actions, b.actions);
    EXPECT_EQ(a.log_probs, b.log_probs);
    EXPECT_EQ(a.distributions, b.distributions);
    any_differs = any_differs || a.actions != c.actions;
    for (const auto* tr : {&g1, &a, &c}) {
      EXPECT_TRUE(is_permutation_of_n(tr->actions, s.n()));
      EXPECT_EQ(tr->log_probs.size(), s.n());
      EXPECT_EQ(tr->distributions.size(), s.n());
    }
  }
  EXPECT_TRUE(any_differs);
}

TEST(Rollout, ReplayMatchesRecordedLogProbs) {
  std::mt19937_64 rng(8);
  auto cfg = small_model();
  auto params = init_params(cfg);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = fixtures::random_sample(rng, 3 + rng() % 8, 2);
    const auto tr = rollout(s, params, cfg, DecodeMode::kSample, static_cast<std::uint64_t>(trial));
    const double sum = std::accumulate(tr.log_probs.begin(), tr.log_probs.end(), 0.0);
    EXPECT_NEAR(route_log_prob(s, tr.actions, params, cfg), sum, 1e-12);
  }
}

TEST(RouteLogProb, ChainRuleNormalization) {
  std::mt19937_64 rng(9);
  for (std::size_t n = 1; n <= 5; ++n) {
    auto cfg = small_model(10 + n);
    auto params = init_params(cfg);
    const auto s = fixtures::random_sample(rng, n, 1);
    double total = 0;
    for (const auto& route : fixtures::all_permutations(n)) total += std::exp(route_log_prob(s, route, params, cfg));
    EXPECT_NEAR(total, 1.0, 1e-6) << "n=" << n;
  }
}

TEST(RouteLogProb, InvalidRouteThrows) {
  std::mt19937_64 rng(10);
  auto cfg = small_model();
  auto params = init_params(cfg);
  const auto s = fixtures::random_sample(rng, 3, 2);
  EXPECT_THROW(route_log_prob(s, std::vector<TaskId>{1, 1, 2}, params, cfg), InputError);
  EXPECT_THROW(route_log_prob(s, std::vector<TaskId>{1, 2}, params, cfg), InputError);
}

TEST(Critic, ZeroWeightsGiveZero) {
  auto cfg = small_model();
  auto params = init_params(cfg);
  for (auto& p : params)
    if (is_critic_param(p.name)) p.value.setZero();
  const auto v = critic_values({{0.5, 0.5}, {0.0, 1.0}}, params, cfg);
  EXPECT_EQ(v, (std::vector<double>{0.0, 0.0}));
}

TEST(Critic, FiniteDeterministicAndBounded) {
  std::mt19937_64 rng(11);
  auto cfg = small_model();
  auto params = init_params(cfg);
  const auto s = fixtures::random_sample(rng, 25, 10);
  const auto tr = rollout(s, params, cfg, DecodeMode::kSample, 1);
  const auto a = critic_values(tr.distributions, params, cfg);
  EXPECT_EQ(a, critic_values(tr.distributions, params, cfg));
  for (double v : a) EXPECT_TRUE(std::isfinite(v));
  EXPECT_THROW(critic_values({std::vector<double>(26, 0.0)}, params, cfg), InputError);
}

TEST(Critic, TapedMatchesPlain) {
  std::mt19937_64 rng(12);
  auto cfg = small_model();
  auto params = init_params(cfg);
  const auto s = fixtures::random_sample(rng, 6, 4);
  Tape t(false);
  auto ctx = make_context(t, params, encode(t, params, cfg, s));
  std::mt19937_64 r2(3);
  auto roll = rollout_on_tape(t, params, ctx, DecodeMode::kSample, r2);
  const Matrix v = critic_on_tape(t, params, cfg, roll.step_log_probs).value();
  const auto plain = critic_values(roll.trajectory.distributions, params, cfg);
  for (std::size_t i = 0; i < plain.size(); ++i) EXPECT_NEAR(v(static_cast<Eigen::Index>(i), 0), plain[i], 1e-12);
}
