#include "commands.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "experiment.hpp"
#include "fedld/budget.hpp"
#include "fedld/metrics.hpp"
#include "fedld/trace_io.hpp"
#include "schema.hpp"

namespace fedld::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void emit(const json& doc, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << doc.dump(2) << '\n';
    return;
  }
  std::ofstream f(out_path);
  if (!f) throw InputError("cannot write " + out_path);
  f << doc.dump(2) << '\n';
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

GaussianLaw load_posterior(const std::string& path) {
  const json doc = read_json(path);
  if (doc.contains("clients")) {
    const auto set = PotentialSet::from_json(doc);
    return gaussian_product_posterior(set);
  }
  if (!doc.contains("mean") || !doc.contains("covariance")) {
    throw ParseError(path + ": posterior needs mean and covariance, or a Gaussian potential set");
  }
  try {
    const auto mean = doc["mean"].get<std::vector<double>>();
    const auto rows = doc["covariance"].get<std::vector<std::vector<double>>>();
    const auto d = static_cast<Index>(mean.size());
    Matrix cov(d, d);
    if (static_cast<Index>(rows.size()) != d) throw ParseError(path + ": covariance has the wrong size");
    for (Index r = 0; r < d; ++r) {
      if (static_cast<Index>(rows[static_cast<std::size_t>(r)].size()) != d) {
        throw ParseError(path + ": covariance has the wrong size");
      }
      for (Index c = 0; c < d; ++c) cov(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    return GaussianLaw(Eigen::Map<const Vector>(mean.data(), d), cov);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

int cmd_run(const std::string& spec_path, std::string out_dir, std::ostream& out) {
  const auto spec = load_experiment_spec(spec_path);
  if (out_dir.empty()) {
    if (!spec.out_dir) throw ConfigError("no output directory (use --out or outputs.directory)", "outputs.directory");
    out_dir = *spec.out_dir;
  }
  const auto set = resolve_potentials(spec);
  const std::size_t workers = worker_count_from_env();
  std::optional<std::string> trace_dir;
  if (spec.write_traces) trace_dir = (fs::path(out_dir) / "traces").string();
  const auto result = run_experiment(spec, set, workers, trace_dir);
  write_outputs(spec, set, result, out_dir, utc_timestamp());
  validate_run_directory(out_dir);
  json report{{"status", "ok"},
              {"out", out_dir},
              {"cells", result.cells.size()},
              {"rows", result.rows.size()},
              {"warnings", result.warnings}};
  out << report.dump() << '\n';
  return 0;
}

int cmd_analyze(const std::vector<std::string>& traces, const std::string& posterior_path,
                const std::string& reference_path, const std::string& potentials_path, double alpha,
                const std::string& out_path, std::ostream& out) {
  const auto posterior = load_posterior(posterior_path);
  std::optional<PotentialSet> set;
  if (!potentials_path.empty()) set = load_potential_set(potentials_path);

  auto hpd_values = [&](const SampleTrace& t) {
    std::vector<double> v;
    v.reserve(t.samples.size());
    for (const auto& x : t.samples) v.push_back(set->total_value(x));
    return v;
  };

  std::vector<SampleTrace> loaded;
  for (const auto& path : traces) {
    auto t = read_trace_csv(path);
    if (t.samples.size() < 2) throw InputError(path + ": a trace needs at least two samples");
    if (t.samples.front().size() != posterior.dim()) throw InputError(path + ": dimension does not match the posterior");
    loaded.push_back(std::move(t));
  }
  std::optional<SampleTrace> reference;
  if (!reference_path.empty()) {
    reference = read_trace_csv(reference_path);
    if (reference->samples.size() < 2) throw InputError(reference_path + ": a trace needs at least two samples");
  }
  const SampleTrace& ref = reference ? *reference : loaded.front();
  std::optional<double> ref_eta;
  if (set && reference) ref_eta = hpd_threshold(hpd_values(ref), alpha).threshold;

  json report;
  report["posterior"] = {{"mean", to_std(posterior.mean())}, {"total_variance", posterior.total_variance()}};
  report["reference"] = reference ? reference_path : traces.front();
  json arr = json::array();
  for (std::size_t k = 0; k < loaded.size(); ++k) {
    const auto& t = loaded[k];
    const auto m = moments(t);
    const auto fit = gaussian_fit_w2(t, posterior);
    std::vector<double> w2;
    for (Index c = 0; c < posterior.dim(); ++c) {
      w2.push_back(empirical_w2_1d(coordinate(t.samples, c), coordinate(ref.samples, c)));
    }
    json entry{{"file", traces[k]},
               {"n_samples", t.samples.size()},
               {"mean", to_std(m.mean)},
               {"variance_mse", variance_mse(t, posterior)},
               {"gaussian_fit_w2", {{"distance", fit.distance}, {"regularized", fit.regularized}}},
               {"empirical_w2_1d", w2}};
    if (set) {
      const auto h = hpd_threshold(hpd_values(t), alpha);
      entry["hpd"] = {{"alpha", h.alpha}, {"threshold", h.threshold}};
      if (ref_eta) entry["hpd"]["relative_error"] = std::abs(h.threshold / *ref_eta - 1.0);
    }
    arr.push_back(std::move(entry));
  }
  report["traces"] = std::move(arr);
  validate_analyze_json(report);
  emit(report, out_path, out);
  return 0;
}

int cmd_budget(const std::string& problem_path, const std::string& out_path, std::ostream& out) {
  const auto problem = budget_problem_from_json(read_json(problem_path));
  const auto sol = budget_optimize(problem);
  json doc{{"problem", to_json(problem)}, {"solution", to_json(sol)}};
  validate_budget_json(doc);
  emit(doc, out_path, out);
  return 0;
}

int error_code(const Error& e) {
  const std::string k = e.kind();
  if (k == "config") return 2;
  if (k == "input") return 3;
  if (k == "parse") return 4;
  if (k == "infeasible") return 5;
  if (k == "numerical") return 6;
  if (k == "divergence") return 7;
  return 1;
}

void report_error(std::ostream& err, const std::string& kind, const std::string& message, json extra = json::object()) {
  json e{{"kind", kind}, {"message", message}};
  for (auto& [k, v] : extra.items()) e[k] = v;
  err << json{{"error", e}}.dump() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated averaging Langevin samplers: sweeps, analysis and budget planning", "fedld"};
  app.require_subcommand(1);

  std::string spec_path, out_dir;
  auto* run = app.add_subcommand("run", "Run a sampler sweep described by a JSON spec");
  run->add_option("--spec", spec_path, "Experiment spec (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory (overrides outputs.directory)");

  std::vector<std::string> traces;
  std::string posterior_path, reference_path, potentials_path, analyze_out;
  double alpha = 0.1;
  auto* analyze = app.add_subcommand("analyze", "Metrics for recorded traces against a Gaussian posterior");
  analyze->add_option("--trace", traces, "Trace CSV files")->required();
  analyze->add_option("--posterior", posterior_path, "Posterior JSON: {mean, covariance} or a Gaussian potential set")
      ->required();
  analyze->add_option("--reference", reference_path, "Reference trace for 1-d Wasserstein and HPD comparisons");
  analyze->add_option("--potentials", potentials_path, "Potential set, enables HPD thresholds");
  analyze->add_option("--alpha", alpha, "HPD level")->check(CLI::Range(0.0, 1.0));
  analyze->add_option("--out", analyze_out, "Write the report here instead of stdout");

  std::string problem_path, budget_out;
  auto* budget = app.add_subcommand("budget", "Optimal (gamma, K) for a target accuracy");
  budget->add_option("--problem", problem_path, "Budget problem (JSON)")->required();
  budget->add_option("--out", budget_out, "Write the solution here instead of stdout");

  std::string params_path, gen_out;
  GaussianSetParams gp;
  auto* generate = app.add_subcommand("generate", "Emit a heterogeneous Gaussian potential set");
  generate->add_option("--params", params_path, "Generator parameters (JSON); flags override");
  generate->add_option("--clients", gp.num_clients);
  generate->add_option("--dim", gp.dim);
  generate->add_option("--seed", gp.seed);
  generate->add_option("--mean-spread", gp.mean_spread);
  generate->add_option("--condition-number", gp.condition_number);
  generate->add_option("--precision-scale", gp.precision_scale);
  generate->add_option("--terms", gp.terms_per_client);
  generate->add_option("--term-spread", gp.term_spread);
  generate->add_option("--out", gen_out, "Write the set here instead of stdout");

  std::vector<std::string> argv_store{"fedld"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    return 2;
  }

  try {
    if (*run) return cmd_run(spec_path, out_dir, out);
    if (*analyze) {
      return cmd_analyze(traces, posterior_path, reference_path, potentials_path, alpha, analyze_out, out);
    }
    if (*budget) return cmd_budget(problem_path, budget_out, out);
    if (*generate) {
      GaussianSetParams p;
      if (!params_path.empty()) p = gaussian_set_params_from_json(read_json(params_path));
      for (auto* opt : generate->get_options()) {
        if (opt->count() == 0) continue;
        const auto& n = opt->get_name();
        if (n == "--clients") p.num_clients = gp.num_clients;
        if (n == "--dim") p.dim = gp.dim;
        if (n == "--seed") p.seed = gp.seed;
        if (n == "--mean-spread") p.mean_spread = gp.mean_spread;
        if (n == "--condition-number") p.condition_number = gp.condition_number;
        if (n == "--precision-scale") p.precision_scale = gp.precision_scale;
        if (n == "--terms") p.terms_per_client = gp.terms_per_client;
        if (n == "--term-spread") p.term_spread = gp.term_spread;
      }
      const auto set = generate_gaussian_set(p);
      emit(set.to_json(), gen_out, out);
      return 0;
    }
  } catch (const ConfigError& e) {
    report_error(err, e.kind(), e.what(), {{"field", e.field()}});
    return error_code(e);
  } catch (const ParseError& e) {
    report_error(err, e.kind(), e.what(), {{"line", e.line()}});
    return error_code(e);
  } catch (const DivergenceError& e) {
    report_error(err, e.kind(), e.what(), {{"iteration", e.iteration()}});
    return error_code(e);
  } catch (const Error& e) {
    report_error(err, e.kind(), e.what());
    return error_code(e);
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return 1;
  }
  return 2;
}

}  // namespace fedld::cli
