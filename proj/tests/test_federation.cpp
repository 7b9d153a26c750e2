#include <doctest.h>

#include "fedld/federation.hpp"
#include "support.hpp"

using namespace fedld;
using namespace fedld::testing;

namespace {

PotentialSet small_set(std::uint64_t seed, std::size_t b = 3, Index d = 2, std::size_t terms = 4) {
  std::mt19937_64 rng(seed);
  std::vector<std::shared_ptr<const PotentialModel>> c;
  for (std::size_t i = 0; i < b; ++i) c.push_back(random_gaussian(d, terms, rng, 1.5));
  return PotentialSet(c);
}

bool same_trace(const SampleTrace& a, const SampleTrace& b) {
  if (a.samples.size() != b.samples.size() || a.iterations != b.iterations) return false;
  for (std::size_t k = 0; k < a.samples.size(); ++k)
    if (a.samples[k] != b.samples[k]) return false;
  return a.n_comm_rounds == b.n_comm_rounds && a.n_cv_rounds == b.n_cv_rounds && a.n_grad_evals == b.n_grad_evals;
}

double max_spread(const FederationState& s) {
  double m = 0;
  for (const auto& x : s.client_params) m = std::max(m, (x - s.server_param).norm());
  return m;
}

}  // namespace

TEST_CASE("config validation") {
  SamplerConfig c;
  CHECK(c.validate().empty());
  auto bad = c;
  bad.gamma = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.p_comm = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.tau = 1.2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.burn_in = bad.total_iters;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.thinning = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  auto warn = c;
  warn.rule = LocalGradientRule::parse("vr_fald");
  warn.p_comm = 0.2;
  warn.q_cv = 0.5;
  CHECK(warn.validate().size() == 1);

  const auto set = small_set(1);
  auto n = c;
  n.batch_sizes = {1, 2};
  CHECK_THROWS_AS(n.validate(set), ConfigError);
  n.batch_sizes = {5};
  CHECK_THROWS_AS(n.validate(set), ConfigError);
  n.batch_sizes = {2};
  CHECK(n.resolved_batch_sizes(set) == std::vector<std::size_t>{2, 2, 2});
  n.batch_sizes.clear();
  CHECK(n.resolved_batch_sizes(set) == std::vector<std::size_t>{4, 4, 4});
}

TEST_CASE("full communication leaves every client at the average") {
  const auto set = small_set(2);
  SamplerConfig c;
  c.gamma = 0.05;
  c.batch_sizes = {1};
  Federation f(c, set, Vector::Zero(2));
  for (int k = 0; k < 20; ++k) {
    CHECK(f.step().communicated);
    CHECK(max_spread(f.state()) == 0.0);
  }
}

TEST_CASE("without communication a client ignores the others") {
  const auto set = small_set(3);
  SamplerConfig c;
  c.gamma = 0.05;
  c.batch_sizes = {2};
  c.schedule = ScheduleKind::fixed_period;
  c.period = 1000;
  auto s = initial_state(c, set, Vector::Zero(2));
  auto t = s;
  t.client_params[1] = Vector::Constant(2, 7.0);
  t.client_params[2] = Vector::Constant(2, -3.0);
  SamplerRngs r1(c.seeds, 3), r2(c.seeds, 3);
  RoundOutcome o;
  const auto a = round(s, c, set, r1, &o);
  const auto b = round(t, c, set, r2);
  CHECK_FALSE(o.communicated);
  CHECK(a.client_params[0] == b.client_params[0]);
  CHECK(a.client_params[1] != b.client_params[1]);
}

TEST_CASE("averaging preserves the client mean") {
  const auto set = small_set(4);
  SamplerConfig c;
  c.gamma = 0.05;
  c.batch_sizes = {1};
  c.tau = 0.4;
  c.schedule = ScheduleKind::fixed_period;
  auto quiet = c;
  quiet.period = 1000;
  auto s = initial_state(c, set, Vector::Ones(2));
  SamplerRngs r1(c.seeds, 3), r2(c.seeds, 3);
  const auto comm = round(s, c, set, r1);
  const auto none = round(s, quiet, set, r2);
  Vector mean = Vector::Zero(2);
  for (const auto& x : none.client_params) mean += x;
  mean /= 3.0;
  CHECK((comm.server_param - mean).norm() < 1e-15);
  CHECK((none.server_param - mean).norm() < 1e-15);
  CHECK(max_spread(comm) == 0.0);
}

TEST_CASE("functional round matches the engine") {
  const auto set = small_set(5);
  for (const char* rule : {"fald", "vr_fald"}) {
    SamplerConfig c;
    c.rule = LocalGradientRule::parse(rule);
    c.gamma = 0.03;
    c.p_comm = 0.3;
    c.q_cv = 0.2;
    c.tau = 0.5;
    c.batch_sizes = {2};
    Federation f(c, set, Vector::Zero(2));
    auto s = initial_state(c, set, Vector::Zero(2));
    SamplerRngs rngs(c.seeds, set.size());
    for (int k = 0; k < 200; ++k) {
      f.step();
      s = round(s, c, set, rngs);
    }
    CHECK(s.iter == f.state().iter);
    CHECK(s.server_param == f.state().server_param);
    for (std::size_t i = 0; i < set.size(); ++i) CHECK(s.client_params[i] == f.state().client_params[i]);
  }
}

TEST_CASE("sample count, thinning and determinism") {
  const auto set = small_set(6);
  SamplerConfig c;
  c.total_iters = 100;
  c.burn_in = 10;
  c.thinning = 3;
  c.gamma = 0.02;
  c.p_comm = 0.5;
  c.batch_sizes = {1};
  const auto t = run(c, set, Vector::Zero(2));
  CHECK(t.samples.size() == 30);
  CHECK(t.iterations.front() == 13);
  CHECK(t.iterations.back() == 100);
  CHECK(t.wall_iters == 100);
  CHECK(same_trace(t, run(c, set, Vector::Zero(2))));
  auto c2 = c;
  c2.seeds.client_noise = 99;
  CHECK_FALSE(same_trace(t, run(c2, set, Vector::Zero(2))));
}

TEST_CASE("serial and parallel execution agree bitwise") {
  const auto set = small_set(7, 8, 3, 5);
  for (const char* rule : {"fald", "vr_fald"}) {
    SamplerConfig c;
    c.rule = LocalGradientRule::parse(rule);
    c.total_iters = 500;
    c.gamma = 0.02;
    c.p_comm = 0.25;
    c.q_cv = 0.1;
    c.tau = 0.3;
    c.batch_sizes = {2};
    CHECK(same_trace(run(c, set, Vector::Zero(3), Execution::serial),
                     run(c, set, Vector::Zero(3), Execution::parallel)));
  }
}

TEST_CASE("communication frequency concentrates at p_c") {
  const auto set = small_set(8, 2, 1, 1);
  SamplerConfig c;
  c.p_comm = 0.2;
  c.total_iters = 100000;
  c.gamma = 0.01;
  const auto t = run(c, set, Vector::Zero(1));
  const double rate = static_cast<double>(t.n_comm_rounds) / 1e5;
  CHECK(std::abs(rate - 0.2) <= 3 * std::sqrt(0.2 * 0.8 / 1e5));
}

TEST_CASE("gradient evaluation counts") {
  const auto set = small_set(9, 2, 2, 3);
  SamplerConfig c;
  c.total_iters = 10;
  c.batch_sizes = {1};
  CHECK(grad_eval_count(run(c, set, Vector::Zero(2))) == 20);

  c.rule = LocalGradientRule::parse("vr_fald");
  c.q_cv = 1e-300;
  const auto none = run(c, set, Vector::Zero(2));
  CHECK(none.n_cv_rounds == 0);
  CHECK(grad_eval_count(none) == 40);

  c.q_cv = 1.0;
  const auto every = run(c, set, Vector::Zero(2));
  CHECK(every.n_cv_rounds == 10);
  CHECK(grad_eval_count(every) == 40 + 10 * 2 * 3);

  c.rule = LocalGradientRule::parse("fald", "exact");
  CHECK(grad_eval_count(run(c, set, Vector::Zero(2))) == 10 * 2 * 3);
}

TEST_CASE("period one matches full communication") {
  const auto set = small_set(10);
  SamplerConfig a;
  a.total_iters = 300;
  a.gamma = 0.03;
  a.batch_sizes = {2};
  a.tau = 0.5;
  auto b = a;
  b.schedule = ScheduleKind::fixed_period;
  b.period = 1;
  CHECK(same_trace(run(a, set, Vector::Zero(2)), run(b, set, Vector::Zero(2))));

  b.period = 4;
  const auto t = run(b, set, Vector::Zero(2));
  CHECK(t.n_comm_rounds == 75);
}

TEST_CASE("comm-only recording keeps communicated iterates") {
  const auto set = small_set(11);
  SamplerConfig c;
  c.total_iters = 100;
  c.burn_in = 20;
  c.schedule = ScheduleKind::fixed_period;
  c.period = 5;
  c.record = RecordMode::comm_only;
  const auto t = run(c, set, Vector::Zero(2));
  CHECK(t.samples.size() == 16);
  for (auto it : t.iterations) CHECK(it % 5 == 0);
}

TEST_CASE("fald with one client reproduces ula") {
  std::mt19937_64 rng(12);
  PotentialSet set({random_gaussian(3, 1, rng)});
  SamplerConfig c;
  c.total_iters = 10000;
  c.tau = 1.0;
  c.gamma = 0.05;
  c.rule = LocalGradientRule::parse("fald", "exact");
  const auto f = run(c, set, Vector::Zero(3));
  const auto u = run_ula(c, set, Vector::Zero(3));
  REQUIRE(f.samples.size() == u.samples.size());
  CHECK(f.iterations == u.iterations);
  bool equal = true;
  for (std::size_t k = 0; k < f.samples.size(); ++k) equal = equal && f.samples[k] == u.samples[k];
  CHECK(equal);
}

TEST_CASE("exact variance reduction ignores the batch seed") {
  const auto set = small_set(13, 4, 2, 5);
  SamplerConfig c;
  c.rule = LocalGradientRule::parse("vr_fald", "exact");
  c.total_iters = 500;
  c.gamma = 0.02;
  c.p_comm = 0.3;
  c.q_cv = 0.2;
  c.batch_sizes = {2};
  auto d = c;
  d.seeds.client_batch = 12345;
  CHECK(same_trace(run(c, set, Vector::Zero(2)), run(d, set, Vector::Zero(2))));
  // the stochastic mode does depend on it
  c.rule = d.rule = LocalGradientRule::parse("vr_fald");
  CHECK_FALSE(same_trace(run(c, set, Vector::Zero(2)), run(d, set, Vector::Zero(2))));
}

TEST_CASE("divergence is reported with its iteration") {
  const auto set = small_set(14);
  SamplerConfig c;
  c.gamma = 50.0;
  c.total_iters = 1000;
  try {
    run(c, set, Vector::Ones(2));
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.iteration() > 0);
    CHECK(e.iteration() < 1000);
  }
}
