#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedld/analytics.hpp"
#include "fedld/federation.hpp"
#include "fedld/potentials.hpp"

namespace fedld::cli {

/// gamma = factor * p_c * gamma_bar when relative, else the value itself.
struct GammaRule {
  bool relative = true;
  double value = 0.5;
  std::string label() const;
};

struct RuleEntry {
  std::string rule;                        // fald | vr_fald
  std::optional<std::vector<double>> tau;  // overrides the sweep-wide list
};

struct ExperimentSpec {
  // potentials: exactly one of the two
  std::optional<std::string> potentials_path;
  std::optional<GaussianSetParams> generate;

  std::vector<RuleEntry> rules;
  std::vector<std::string> gradients{"stochastic"};
  std::vector<double> p_comm;
  std::optional<std::vector<double>> q_cv;  // absent: q_c = p_c per cell
  std::vector<GammaRule> gammas;
  std::vector<double> taus{0.0};
  std::vector<std::optional<std::size_t>> batch_sizes{std::nullopt};  // nullopt = full batch

  std::uint64_t total_iters = 10000;
  std::optional<std::uint64_t> burn_in;  // default 10% of total_iters
  std::uint64_t thinning = 1;
  ScheduleKind schedule = ScheduleKind::bernoulli;
  std::uint64_t period = 1;
  RecordMode record = RecordMode::every_iteration;
  std::string init = "minimizer";  // minimizer | zeros
  std::optional<std::vector<double>> init_point;

  std::size_t chains = 1;
  std::uint64_t seed = 1;

  std::optional<std::string> out_dir;
  bool write_traces = false;

  nlohmann::json source;  // the document as given, echoed in summary.json

  std::uint64_t resolved_burn_in() const { return burn_in ? *burn_in : total_iters / 10; }
};

/// Field paths in ConfigError look like "sweep.p_comm[1]".
ExperimentSpec parse_experiment_spec(const nlohmann::json& doc, const std::string& base_dir = ".");
ExperimentSpec load_experiment_spec(const std::string& path);

struct Cell {
  std::size_t index = 0;
  SamplerConfig config;  // seeds filled per replicate
  GammaRule gamma_rule;
  bool q_cv_default = true;
  std::optional<std::size_t> batch_size;
  std::string config_hash;
};

struct ReplicateResult {
  std::size_t cell = 0;
  std::size_t replicate = 0;
  std::size_t n_samples = 0;
  std::optional<double> mse;
  std::optional<double> w2_fit;
  bool w2_regularized = false;
  std::uint64_t n_comm_rounds = 0;
  std::uint64_t n_cv_rounds = 0;
  std::uint64_t n_grad_evals = 0;
  std::string error;  // divergence message, empty on success
};

struct ExperimentResult {
  std::vector<Cell> cells;
  std::vector<ReplicateResult> rows;  // cell-major, replicate-minor
  std::optional<GaussianLaw> posterior;
  double gamma_bar = 0.0;
  Vector init;
  ConstantsReport constants;
  std::vector<std::string> warnings;
};

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

SeedSet replicate_seeds(std::uint64_t base_seed, std::size_t replicate);

/// Reference step for relative gamma rules: from the Gaussian posterior when
/// available, else 2 / (m + L) of the summed potential at its minimiser.
double reference_gamma(const PotentialSet& set, const std::optional<GaussianLaw>& posterior);

std::vector<Cell> expand_cells(const ExperimentSpec& spec, const PotentialSet& set, double gamma_bar);

/// Runs every (cell, replicate) on `workers` threads. With a trace directory
/// each trace is also written there as <hash>_r<replicate>.csv; file writes are
/// serialised.
ExperimentResult run_experiment(const ExperimentSpec& spec, const PotentialSet& set, std::size_t workers,
                                const std::optional<std::string>& trace_dir = std::nullopt);

/// results.csv, metrics.csv, table.csv, summary.json (+ traces/ when asked).
void write_outputs(const ExperimentSpec& spec, const PotentialSet& set, const ExperimentResult& result,
                   const std::string& dir, const std::string& timestamp);

PotentialSet resolve_potentials(const ExperimentSpec& spec);

/// FEDLD_WORKERS, defaulting to the hardware concurrency.
std::size_t worker_count_from_env();

}  // namespace fedld::cli
