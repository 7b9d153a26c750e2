#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fedld/core.hpp"
#include "fedld/potentials.hpp"
#include "fedld/samplers.hpp"

namespace fedld {

enum class ScheduleKind { bernoulli, fixed_period };
enum class RecordMode { every_iteration, comm_only };
enum class Execution { serial, parallel };

struct SeedSet {
  std::uint64_t shared = 1;
  std::uint64_t client_noise = 2;  // base seed; client i derives its stream from (base, i)
  std::uint64_t client_batch = 3;
  std::uint64_t schedule = 4;
};

struct SamplerConfig {
  double gamma = 0.01;
  double p_comm = 1.0;
  double q_cv = 1.0;
  double tau = 0.0;
  // empty: full batches; one entry: the same n for every client; else one per client
  std::vector<std::size_t> batch_sizes;
  std::uint64_t total_iters = 1000;
  std::uint64_t burn_in = 0;
  std::uint64_t thinning = 1;
  ScheduleKind schedule = ScheduleKind::bernoulli;
  std::uint64_t period = 1;  // E, fixed_period only
  LocalGradientRule rule;
  SeedSet seeds;
  RecordMode record = RecordMode::every_iteration;

  /// Throws ConfigError; returns non-fatal warnings.
  std::vector<std::string> validate() const;
  std::vector<std::string> validate(const PotentialSet& set) const;
  /// n_i resolved against the set.
  std::vector<std::size_t> resolved_batch_sizes(const PotentialSet& set) const;
};

struct FederationState {
  std::vector<Vector> client_params;  // X_k^i
  Vector server_param;                // X_k, the client average
  ControlVariateState cv;             // (Y_k, C_k), empty for the plain rule
  std::uint64_t iter = 0;
};

/// Every client starts at `init`; the control variate starts at (init, C(init))
/// when the rule needs it.
FederationState initial_state(const SamplerConfig& cfg, const PotentialSet& set, const Vector& init);

/// Independent streams: shared noise, schedule, and per client one for noise
/// and one for minibatches, seeded from (client_noise, i) and (client_batch, i).
struct SamplerRngs {
  std::mt19937_64 shared;
  std::mt19937_64 schedule;
  std::vector<std::mt19937_64> client_noise;
  std::vector<std::mt19937_64> client_batch;

  SamplerRngs(const SeedSet& seeds, std::size_t num_clients);
};

/// Scratch buffers and batch samplers for one chain.
struct RoundWorkspace {
  RoundWorkspace(const PotentialSet& set, const std::vector<std::size_t>& batch_sizes);

  std::vector<BatchSampler> batchers;
  Vector shared_draw;
  std::vector<Vector> grad, local_draw, noise, tilde, cv_grad;
};

struct RoundOutcome {
  bool communicated = false;
  bool cv_refreshed = false;
  std::uint64_t grad_evals = 0;
};

/// Stateful engine for one chain; `step` performs iteration k -> k+1 in place.
/// Per round: both schedule uniforms are drawn, then the shared draw, then each
/// client draws its batch and local noise from its own streams, so the result
/// does not depend on the execution mode.
class Federation {
 public:
  Federation(const SamplerConfig& cfg, const PotentialSet& set, const Vector& init,
             Execution exec = Execution::serial);

  RoundOutcome step();
  const FederationState& state() const { return state_; }
  const SamplerConfig& config() const { return cfg_; }

 private:
  SamplerConfig cfg_;
  const PotentialSet& set_;
  Execution exec_;
  FederationState state_;
  SamplerRngs rngs_;
  std::vector<std::size_t> batch_sizes_;
  RoundWorkspace ws_;
};

/// Functional form of one round.
FederationState round(const FederationState& state, const SamplerConfig& cfg, const PotentialSet& set,
                      SamplerRngs& rngs, RoundOutcome* outcome = nullptr);

struct SampleTrace {
  std::vector<std::uint64_t> iterations;
  std::vector<Vector> samples;
  std::uint64_t n_comm_rounds = 0;
  std::uint64_t n_cv_rounds = 0;
  std::uint64_t n_grad_evals = 0;
  std::uint64_t wall_iters = 0;
};

/// Runs K rounds from `init`. Throws DivergenceError when the server parameter
/// leaves the ball of radius 1e8 or stops being finite.
SampleTrace run(const SamplerConfig& cfg, const PotentialSet& set, const Vector& init,
                Execution exec = Execution::serial);

std::uint64_t grad_eval_count(const SampleTrace& trace);

/// Centralised Langevin chain on sum_i U^i driven by the shared stream. Uses
/// gamma, total_iters, burn_in, thinning and seeds.shared from `cfg`.
SampleTrace run_ula(const SamplerConfig& cfg, const PotentialSet& set, const Vector& init);

inline constexpr double kDivergenceRadius = 1e8;

}  // namespace fedld
