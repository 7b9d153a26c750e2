#include "fedld/federation.hpp"

#include <cmath>
#include <exception>
#include <sstream>

#ifdef FEDLD_HAVE_OPENMP
#include <omp.h>
#endif

namespace fedld {

namespace {

void fill_normal(std::mt19937_64& rng, Vector& v) {
  std::normal_distribution<double> normal;
  for (Index k = 0; k < v.size(); ++k) v[k] = normal(rng);
}

std::uint64_t evals_per_step(const LocalGradientRule& rule, std::size_t n, std::size_t N) {
  const std::uint64_t per = rule.mode == GradientMode::exact ? N : n;
  return rule.uses_control_variate() ? 2 * per : per;
}

bool is_valid_probability(double p) { return p > 0.0 && p <= 1.0; }

// One round in place. Shared by the engine and the functional form.
RoundOutcome advance(FederationState& st, const SamplerConfig& cfg, const PotentialSet& set,
                     const std::vector<std::size_t>& batch_sizes, SamplerRngs& rngs, RoundWorkspace& ws,
                     Execution exec) {
  const std::size_t b = set.size();
  const double gamma = cfg.gamma;
  const double noise_scale = std::sqrt(2.0 * gamma);
  const NoiseSpec noise{cfg.tau, set.dim(), b};
  const double a = noise.shared_coef();
  const double c = noise.local_coef();

  std::uniform_real_distribution<double> unif;
  const double u_comm = unif(rngs.schedule);
  const double u_cv = unif(rngs.schedule);
  RoundOutcome out;
  out.communicated = cfg.schedule == ScheduleKind::bernoulli ? u_comm < cfg.p_comm
                                                             : (st.iter + 1) % cfg.period == 0;
  out.cv_refreshed = cfg.rule.uses_control_variate() && u_cv < cfg.q_cv;

  Vector new_reference;
  if (out.cv_refreshed) {
    new_reference = Vector::Zero(set.dim());
    for (const auto& x : st.client_params) new_reference += x;
    new_reference /= static_cast<double>(b);
  }

  fill_normal(rngs.shared, ws.shared_draw);

  std::exception_ptr failure;
  const bool parallel = exec == Execution::parallel;
  const auto nb = static_cast<std::ptrdiff_t>(b);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t ii = 0; ii < nb; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      const ClientPotential client = set.client(i);
      std::span<const std::size_t> batch;
      if (cfg.rule.mode == GradientMode::stochastic) batch = ws.batchers[i].draw(rngs.client_batch[i]);
      fill_normal(rngs.client_noise[i], ws.local_draw[i]);
      local_gradient_into(cfg.rule, client, st.client_params[i], st.cv, batch, ws.grad[i]);
      ws.noise[i] = a * ws.shared_draw + c * ws.local_draw[i];
      ws.tilde[i] = st.client_params[i] - gamma * ws.grad[i] + noise_scale * ws.noise[i];
      if (out.cv_refreshed) {
        ws.cv_grad[i].setZero();
        client.add_grad(new_reference, ws.cv_grad[i]);
      }
    } catch (...) {
#pragma omp critical(fedld_round_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  // serial reduction in client order keeps the result independent of threads
  st.server_param.setZero();
  for (std::size_t i = 0; i < b; ++i) st.server_param += ws.tilde[i];
  st.server_param /= static_cast<double>(b);
  if (out.communicated) {
    for (auto& x : st.client_params) x = st.server_param;
  } else {
    for (std::size_t i = 0; i < b; ++i) st.client_params[i].swap(ws.tilde[i]);
  }

  for (std::size_t i = 0; i < b; ++i) {
    out.grad_evals += evals_per_step(cfg.rule, batch_sizes[i], set.model(i).num_terms());
  }
  if (out.cv_refreshed) {
    Vector shift = Vector::Zero(set.dim());
    for (std::size_t i = 0; i < b; ++i) {
      shift += ws.cv_grad[i];
      out.grad_evals += set.model(i).num_terms();
    }
    st.cv.reference = std::move(new_reference);
    st.cv.shift = shift / static_cast<double>(b);
  }
  ++st.iter;
  return out;
}

void check_divergence(const Vector& x, std::uint64_t iter) {
  if (!x.allFinite() || x.norm() > kDivergenceRadius) {
    std::ostringstream msg;
    msg << "chain diverged at iteration " << iter << " (|X| = " << x.norm() << ")";
    throw DivergenceError(msg.str(), iter);
  }
}

}  // namespace

std::vector<std::string> SamplerConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("must be positive and finite", "gamma");
  if (!is_valid_probability(p_comm)) throw ConfigError("must lie in (0, 1]", "p_comm");
  if (!is_valid_probability(q_cv)) throw ConfigError("must lie in (0, 1]", "q_cv");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("must lie in [0, 1]", "tau");
  if (total_iters == 0) throw ConfigError("must be positive", "total_iters");
  if (burn_in >= total_iters) throw ConfigError("must be smaller than total_iters", "burn_in");
  if (thinning == 0) throw ConfigError("must be positive", "thinning");
  if (schedule == ScheduleKind::fixed_period && period == 0) throw ConfigError("must be positive", "period");
  for (auto n : batch_sizes) {
    if (n == 0) throw ConfigError("must be positive", "batch_sizes");
  }
  std::vector<std::string> warnings;
  if (rule.uses_control_variate() && schedule == ScheduleKind::bernoulli && q_cv > p_comm) {
    warnings.push_back("q_cv > p_comm: the convergence guarantee assumes q_cv <= p_comm");
  }
  return warnings;
}

std::vector<std::string> SamplerConfig::validate(const PotentialSet& set) const {
  auto warnings = validate();
  resolved_batch_sizes(set);
  return warnings;
}

std::vector<std::size_t> SamplerConfig::resolved_batch_sizes(const PotentialSet& set) const {
  const std::size_t b = set.size();
  std::vector<std::size_t> n(b);
  if (!batch_sizes.empty() && batch_sizes.size() != 1 && batch_sizes.size() != b) {
    throw ConfigError("needs 0, 1 or b entries", "batch_sizes");
  }
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t N = set.model(i).num_terms();
    n[i] = batch_sizes.empty() ? N : batch_sizes.size() == 1 ? batch_sizes[0] : batch_sizes[i];
    if (n[i] == 0 || n[i] > N) {
      throw ConfigError("client " + std::to_string(i) + " has batch size " + std::to_string(n[i]) +
                            " outside [1, " + std::to_string(N) + "]",
                        "batch_sizes");
    }
  }
  return n;
}

FederationState initial_state(const SamplerConfig& cfg, const PotentialSet& set, const Vector& init) {
  if (init.size() != set.dim()) throw InputError("initial point has the wrong dimension");
  if (!init.allFinite()) throw InputError("initial point is not finite");
  FederationState st;
  st.client_params.assign(set.size(), init);
  st.server_param = init;
  if (cfg.rule.uses_control_variate()) {
    st.cv = init_control_variate(set, st.client_params);
  } else {
    st.cv = {Vector::Zero(set.dim()), Vector::Zero(set.dim())};
  }
  return st;
}

SamplerRngs::SamplerRngs(const SeedSet& seeds, std::size_t num_clients)
    : shared(seeds.shared), schedule(seeds.schedule) {
  client_noise.reserve(num_clients);
  client_batch.reserve(num_clients);
  auto derive = [](std::uint64_t base, std::size_t i, std::uint32_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                      static_cast<std::uint32_t>(i), tag};
    return std::mt19937_64(seq);
  };
  for (std::size_t i = 0; i < num_clients; ++i) {
    client_noise.push_back(derive(seeds.client_noise, i, 0u));
    client_batch.push_back(derive(seeds.client_batch, i, 1u));
  }
}

RoundWorkspace::RoundWorkspace(const PotentialSet& set, const std::vector<std::size_t>& batch_sizes)
    : shared_draw(set.dim()) {
  const std::size_t b = set.size();
  for (std::size_t i = 0; i < b; ++i) batchers.emplace_back(set.model(i).num_terms(), batch_sizes.at(i));
  for (auto* v : {&grad, &local_draw, &noise, &tilde, &cv_grad}) v->assign(b, Vector::Zero(set.dim()));
}

Federation::Federation(const SamplerConfig& cfg, const PotentialSet& set, const Vector& init, Execution exec)
    : cfg_(cfg),
      set_(set),
      exec_(exec),
      state_(initial_state(cfg, set, init)),
      rngs_(cfg.seeds, set.size()),
      batch_sizes_((cfg.validate(), cfg.resolved_batch_sizes(set))),
      ws_(set, batch_sizes_) {}

RoundOutcome Federation::step() { return advance(state_, cfg_, set_, batch_sizes_, rngs_, ws_, exec_); }

FederationState round(const FederationState& state, const SamplerConfig& cfg, const PotentialSet& set,
                      SamplerRngs& rngs, RoundOutcome* outcome) {
  const auto n = cfg.resolved_batch_sizes(set);
  RoundWorkspace ws(set, n);
  FederationState next = state;
  const auto o = advance(next, cfg, set, n, rngs, ws, Execution::serial);
  if (outcome) *outcome = o;
  return next;
}

SampleTrace run(const SamplerConfig& cfg, const PotentialSet& set, const Vector& init, Execution exec) {
  Federation fed(cfg, set, init, exec);
  SampleTrace trace;
  trace.wall_iters = cfg.total_iters;
  if (cfg.record == RecordMode::every_iteration) {
    const auto kept = (cfg.total_iters - cfg.burn_in) / cfg.thinning;
    trace.samples.reserve(kept);
    trace.iterations.reserve(kept);
  }
  std::uint64_t comm_after_burn_in = 0;
  for (std::uint64_t k = 0; k < cfg.total_iters; ++k) {
    const auto o = fed.step();
    const auto& st = fed.state();
    check_divergence(st.server_param, st.iter);
    trace.n_comm_rounds += o.communicated;
    trace.n_cv_rounds += o.cv_refreshed;
    trace.n_grad_evals += o.grad_evals;
    if (st.iter <= cfg.burn_in) continue;
    bool keep = false;
    if (cfg.record == RecordMode::every_iteration) {
      keep = (st.iter - cfg.burn_in) % cfg.thinning == 0;
    } else if (o.communicated) {
      keep = comm_after_burn_in++ % cfg.thinning == 0;
    }
    if (keep) {
      trace.iterations.push_back(st.iter);
      trace.samples.push_back(st.server_param);
    }
  }
  return trace;
}

std::uint64_t grad_eval_count(const SampleTrace& trace) { return trace.n_grad_evals; }

SampleTrace run_ula(const SamplerConfig& cfg, const PotentialSet& set, const Vector& init) {
  if (!(cfg.gamma > 0.0)) throw ConfigError("must be positive", "gamma");
  if (cfg.total_iters == 0) throw ConfigError("must be positive", "total_iters");
  if (cfg.burn_in >= cfg.total_iters) throw ConfigError("must be smaller than total_iters", "burn_in");
  if (cfg.thinning == 0) throw ConfigError("must be positive", "thinning");
  if (init.size() != set.dim()) throw InputError("initial point has the wrong dimension");

  std::mt19937_64 rng(cfg.seeds.shared);
  SampleTrace trace;
  trace.wall_iters = cfg.total_iters;
  Vector x = init;
  Vector z(set.dim());
  std::uint64_t full = 0;
  for (std::size_t i = 0; i < set.size(); ++i) full += set.model(i).num_terms();
  for (std::uint64_t k = 1; k <= cfg.total_iters; ++k) {
    fill_normal(rng, z);
    x = ula_step(set, x, cfg.gamma, z);
    check_divergence(x, k);
    trace.n_grad_evals += full;
    if (k > cfg.burn_in && (k - cfg.burn_in) % cfg.thinning == 0) {
      trace.iterations.push_back(k);
      trace.samples.push_back(x);
    }
  }
  return trace;
}

}  // namespace fedld
