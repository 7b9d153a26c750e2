#include "experiment.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

#include "fedld/metrics.hpp"
#include "fedld/trace_io.hpp"

namespace fedld::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// shortest text that reads back to the same double
std::string short_num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string GammaRule::label() const {
  return relative ? short_num(value) + "*p_c*gamma_bar" : short_num(value);
}

namespace {

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("must be an object", path);
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown field", path.empty() ? key : path + "." + key);
  }
}

template <class T>
T get_as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("has the wrong type", path);
  }
}

std::uint64_t get_count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) throw ConfigError("must be a nonnegative integer", path);
  return j.get<std::uint64_t>();
}

std::vector<double> number_list(const json& j, const std::string& path) {
  std::vector<double> out;
  if (j.is_number()) {
    out.push_back(j.get<double>());
  } else if (j.is_array() && !j.empty()) {
    for (std::size_t k = 0; k < j.size(); ++k) {
      const auto p = path + "[" + std::to_string(k) + "]";
      if (!j[k].is_number()) throw ConfigError("must be a number", p);
      out.push_back(j[k].get<double>());
    }
  } else {
    throw ConfigError("must be a number or a nonempty array of numbers", path);
  }
  return out;
}

void check_range(const std::vector<double>& v, const std::string& path, double lo, bool lo_open, double hi) {
  for (std::size_t k = 0; k < v.size(); ++k) {
    const bool ok = (lo_open ? v[k] > lo : v[k] >= lo) && v[k] <= hi && std::isfinite(v[k]);
    if (!ok) {
      std::ostringstream msg;
      msg << "must lie in " << (lo_open ? "(" : "[") << lo << ", " << hi << "]";
      throw ConfigError(msg.str(), path + "[" + std::to_string(k) + "]");
    }
  }
}

std::vector<std::string> string_list(const json& j, const std::string& path) {
  std::vector<std::string> out;
  if (j.is_string()) return {j.get<std::string>()};
  if (!j.is_array() || j.empty()) throw ConfigError("must be a string or a nonempty array", path);
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(get_as<std::string>(j[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3E", v);
  return buf;
}

std::string batch_label(const std::optional<std::size_t>& n) { return n ? std::to_string(*n) : "full"; }

struct MeanSe {
  std::size_t n = 0;
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe r;
  r.n = v.size();
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return r;
}

}  // namespace

ExperimentSpec parse_experiment_spec(const json& doc, const std::string& base_dir) {
  check_keys(doc, "", {"potentials", "sweep", "run", "replication", "outputs"});
  ExperimentSpec spec;
  spec.source = doc;

  if (!doc.contains("potentials")) throw ConfigError("is required", "potentials");
  const auto& pot = doc["potentials"];
  check_keys(pot, "potentials", {"path", "generate"});
  if (pot.contains("path") == pot.contains("generate")) {
    throw ConfigError("needs exactly one of path or generate", "potentials");
  }
  if (pot.contains("path")) {
    fs::path p = get_as<std::string>(pot["path"], "potentials.path");
    if (p.is_relative()) p = fs::path(base_dir) / p;
    spec.potentials_path = p.string();
  } else {
    check_keys(pot["generate"], "potentials.generate",
               {"clients", "dim", "seed", "mean_spread", "condition_number", "precision_scale", "terms_per_client",
                "term_spread"});
    try {
      spec.generate = gaussian_set_params_from_json(pot["generate"]);
    } catch (const ConfigError& e) {
      throw ConfigError(e.detail(), "potentials." + e.field());
    }
  }

  if (!doc.contains("sweep")) throw ConfigError("is required", "sweep");
  const auto& sw = doc["sweep"];
  check_keys(sw, "sweep", {"rules", "gradient", "p_comm", "q_cv", "gamma", "tau", "batch_size"});
  if (!sw.contains("rules") || !sw["rules"].is_array() || sw["rules"].empty()) {
    throw ConfigError("must be a nonempty array", "sweep.rules");
  }
  for (std::size_t k = 0; k < sw["rules"].size(); ++k) {
    const auto path = "sweep.rules[" + std::to_string(k) + "]";
    const auto& r = sw["rules"][k];
    RuleEntry e;
    if (r.is_string()) {
      e.rule = r.get<std::string>();
    } else {
      check_keys(r, path, {"rule", "tau"});
      if (!r.contains("rule")) throw ConfigError("is required", path + ".rule");
      e.rule = get_as<std::string>(r["rule"], path + ".rule");
      if (r.contains("tau")) {
        e.tau = number_list(r["tau"], path + ".tau");
        check_range(*e.tau, path + ".tau", 0.0, false, 1.0);
      }
    }
    if (e.rule != "fald" && e.rule != "vr_fald") throw ConfigError("must be fald or vr_fald", path);
    spec.rules.push_back(std::move(e));
  }
  if (sw.contains("gradient")) {
    spec.gradients = string_list(sw["gradient"], "sweep.gradient");
    for (std::size_t k = 0; k < spec.gradients.size(); ++k) {
      if (spec.gradients[k] != "stochastic" && spec.gradients[k] != "exact") {
        throw ConfigError("must be stochastic or exact", "sweep.gradient[" + std::to_string(k) + "]");
      }
    }
  }
  if (!sw.contains("p_comm")) throw ConfigError("is required", "sweep.p_comm");
  spec.p_comm = number_list(sw["p_comm"], "sweep.p_comm");
  check_range(spec.p_comm, "sweep.p_comm", 0.0, true, 1.0);
  if (sw.contains("q_cv")) {
    spec.q_cv = number_list(sw["q_cv"], "sweep.q_cv");
    check_range(*spec.q_cv, "sweep.q_cv", 0.0, true, 1.0);
  }
  if (!sw.contains("gamma")) throw ConfigError("is required", "sweep.gamma");
  {
    const auto& g = sw["gamma"];
    check_keys(g, "sweep.gamma", {"relative", "absolute"});
    if (g.contains("relative") == g.contains("absolute")) {
      throw ConfigError("needs exactly one of relative or absolute", "sweep.gamma");
    }
    const bool rel = g.contains("relative");
    const auto path = rel ? "sweep.gamma.relative" : "sweep.gamma.absolute";
    const auto vals = number_list(rel ? g["relative"] : g["absolute"], path);
    check_range(vals, path, 0.0, true, HUGE_VAL);
    for (double v : vals) spec.gammas.push_back({rel, v});
  }
  if (sw.contains("tau")) {
    spec.taus = number_list(sw["tau"], "sweep.tau");
    check_range(spec.taus, "sweep.tau", 0.0, false, 1.0);
  }
  if (sw.contains("batch_size")) {
    const auto& bs = sw["batch_size"];
    const json arr = bs.is_array() ? bs : json::array({bs});
    if (arr.empty()) throw ConfigError("must be nonempty", "sweep.batch_size");
    spec.batch_sizes.clear();
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const auto path = "sweep.batch_size[" + std::to_string(k) + "]";
      if (arr[k].is_string() && arr[k].get<std::string>() == "full") {
        spec.batch_sizes.push_back(std::nullopt);
      } else {
        const auto n = get_count(arr[k], path);
        if (n == 0) throw ConfigError("must be positive", path);
        spec.batch_sizes.push_back(static_cast<std::size_t>(n));
      }
    }
  }

  if (doc.contains("run")) {
    const auto& r = doc["run"];
    check_keys(r, "run", {"total_iters", "burn_in", "thinning", "schedule", "period", "record", "init"});
    if (r.contains("total_iters")) spec.total_iters = get_count(r["total_iters"], "run.total_iters");
    if (spec.total_iters == 0) throw ConfigError("must be positive", "run.total_iters");
    if (r.contains("burn_in")) spec.burn_in = get_count(r["burn_in"], "run.burn_in");
    if (r.contains("thinning")) spec.thinning = get_count(r["thinning"], "run.thinning");
    if (spec.thinning == 0) throw ConfigError("must be positive", "run.thinning");
    if (r.contains("schedule")) {
      const auto s = get_as<std::string>(r["schedule"], "run.schedule");
      if (s == "bernoulli") {
        spec.schedule = ScheduleKind::bernoulli;
      } else if (s == "fixed_period") {
        spec.schedule = ScheduleKind::fixed_period;
      } else {
        throw ConfigError("must be bernoulli or fixed_period", "run.schedule");
      }
    }
    if (r.contains("period")) spec.period = get_count(r["period"], "run.period");
    if (spec.period == 0) throw ConfigError("must be positive", "run.period");
    if (r.contains("record")) {
      const auto s = get_as<std::string>(r["record"], "run.record");
      if (s == "every_iteration") {
        spec.record = RecordMode::every_iteration;
      } else if (s == "comm_only") {
        spec.record = RecordMode::comm_only;
      } else {
        throw ConfigError("must be every_iteration or comm_only", "run.record");
      }
    }
    if (r.contains("init")) {
      if (r["init"].is_string()) {
        spec.init = r["init"].get<std::string>();
        if (spec.init != "minimizer" && spec.init != "zeros") throw ConfigError("must be minimizer, zeros or a vector", "run.init");
      } else {
        spec.init_point = number_list(r["init"], "run.init");
        spec.init = "point";
      }
    }
  }
  if (spec.resolved_burn_in() >= spec.total_iters) throw ConfigError("must be smaller than total_iters", "run.burn_in");

  if (doc.contains("replication")) {
    const auto& r = doc["replication"];
    check_keys(r, "replication", {"chains", "seed"});
    if (r.contains("chains")) spec.chains = get_count(r["chains"], "replication.chains");
    if (spec.chains == 0) throw ConfigError("must be positive", "replication.chains");
    if (r.contains("seed")) spec.seed = get_count(r["seed"], "replication.seed");
  }
  if (doc.contains("outputs")) {
    const auto& o = doc["outputs"];
    check_keys(o, "outputs", {"directory", "traces"});
    if (o.contains("directory")) {
      fs::path p = get_as<std::string>(o["directory"], "outputs.directory");
      if (p.is_relative()) p = fs::path(base_dir) / p;
      spec.out_dir = p.string();
    }
    if (o.contains("traces")) spec.write_traces = get_as<bool>(o["traces"], "outputs.traces");
  }
  return spec;
}

ExperimentSpec load_experiment_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open spec file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return parse_experiment_spec(doc, fs::path(path).parent_path().string().empty() ? "." : fs::path(path).parent_path().string());
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SeedSet replicate_seeds(std::uint64_t base_seed, std::size_t replicate) {
  std::seed_seq seq{static_cast<std::uint32_t>(base_seed), static_cast<std::uint32_t>(base_seed >> 32),
                    static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32)};
  std::uint64_t words[4];
  std::uint32_t raw[8];
  seq.generate(std::begin(raw), std::end(raw));
  for (int k = 0; k < 4; ++k) words[k] = (std::uint64_t{raw[2 * k]} << 32) | raw[2 * k + 1];
  return {words[0], words[1], words[2], words[3]};
}

double reference_gamma(const PotentialSet& set, const std::optional<GaussianLaw>& posterior) {
  if (posterior) return reference_step_size(*posterior);
  const Vector x = minimizer(set);
  Eigen::SelfAdjointEigenSolver<Matrix> es(set.total_hessian(x), Eigen::EigenvaluesOnly);
  return 2.0 / (es.eigenvalues().minCoeff() + es.eigenvalues().maxCoeff());
}

PotentialSet resolve_potentials(const ExperimentSpec& spec) {
  if (spec.potentials_path) return load_potential_set(*spec.potentials_path);
  return generate_gaussian_set(*spec.generate);
}

std::vector<Cell> expand_cells(const ExperimentSpec& spec, const PotentialSet& set, double gamma_bar) {
  const std::string set_hash = fnv1a_hex(set.to_json().dump());
  std::vector<Cell> cells;
  for (const auto& entry : spec.rules) {
    for (const auto& gradient : spec.gradients) {
      for (const auto& batch : spec.batch_sizes) {
        for (double p : spec.p_comm) {
          const std::vector<double> qs = spec.q_cv ? *spec.q_cv : std::vector<double>{p};
          for (double q : qs) {
            for (const auto& g : spec.gammas) {
              for (double tau : entry.tau ? *entry.tau : spec.taus) {
                Cell c;
                c.index = cells.size();
                c.gamma_rule = g;
                c.q_cv_default = !spec.q_cv.has_value();
                c.batch_size = batch;
                auto& cfg = c.config;
                cfg.rule = LocalGradientRule::parse(entry.rule, gradient);
                cfg.gamma = g.relative ? g.value * p * gamma_bar : g.value;
                cfg.p_comm = p;
                cfg.q_cv = q;
                cfg.tau = tau;
                if (batch) cfg.batch_sizes = {*batch};
                cfg.total_iters = spec.total_iters;
                cfg.burn_in = spec.resolved_burn_in();
                cfg.thinning = spec.thinning;
                cfg.schedule = spec.schedule;
                cfg.period = spec.period;
                cfg.record = spec.record;
                try {
                  cfg.validate(set);
                } catch (const ConfigError& e) {
                  throw ConfigError(e.detail(), "sweep." + e.field());
                }
                json key = to_json(cfg);
                key.erase("seeds");
                key["base_seed"] = spec.seed;
                key["potentials"] = set_hash;
                key["init"] = spec.init_point ? json(*spec.init_point) : json(spec.init);
                c.config_hash = fnv1a_hex(key.dump());
                cells.push_back(std::move(c));
              }
            }
          }
        }
      }
    }
  }
  return cells;
}

namespace {
Vector resolve_init(const ExperimentSpec& spec, const PotentialSet& set, const std::optional<GaussianLaw>& posterior) {
  if (spec.init_point) {
    if (static_cast<Index>(spec.init_point->size()) != set.dim()) throw ConfigError("has the wrong dimension", "run.init");
    return Eigen::Map<const Vector>(spec.init_point->data(), set.dim());
  }
  if (spec.init == "zeros") return Vector::Zero(set.dim());
  return posterior ? posterior->mean() : minimizer(set);
}
}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const PotentialSet& set, std::size_t workers,
                                const std::optional<std::string>& trace_dir) {
  ExperimentResult res;
  if (set.all_gaussian()) res.posterior = gaussian_product_posterior(set);
  res.gamma_bar = reference_gamma(set, res.posterior);
  res.init = resolve_init(spec, set, res.posterior);
  res.constants = constants(set, {});
  res.cells = expand_cells(spec, set, res.gamma_bar);
  std::set<std::string> seen;
  for (const auto& c : res.cells) {
    for (auto& w : c.config.validate()) {
      if (seen.insert(w).second) res.warnings.push_back(w);
    }
  }

  const std::size_t jobs = res.cells.size() * spec.chains;
  res.rows.resize(jobs);
  std::atomic<std::size_t> next{0};
  std::mutex io_mutex;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  if (trace_dir) fs::create_directories(*trace_dir);

  auto worker = [&] {
    for (std::size_t job = next++; job < jobs; job = next++) {
      const std::size_t ci = job / spec.chains, r = job % spec.chains;
      const Cell& cell = res.cells[ci];
      ReplicateResult& row = res.rows[job];
      row.cell = ci;
      row.replicate = r;
      try {
        SamplerConfig cfg = cell.config;
        cfg.seeds = replicate_seeds(spec.seed, r);
        const SampleTrace trace = run(cfg, set, res.init);
        row.n_samples = trace.samples.size();
        row.n_comm_rounds = trace.n_comm_rounds;
        row.n_cv_rounds = trace.n_cv_rounds;
        row.n_grad_evals = trace.n_grad_evals;
        if (res.posterior && !trace.samples.empty()) {
          row.mse = variance_mse(trace, *res.posterior);
          if (trace.samples.size() >= 2) {
            const auto fit = gaussian_fit_w2(trace, *res.posterior);
            row.w2_fit = fit.distance;
            row.w2_regularized = fit.regularized;
          }
        }
        if (trace_dir) {
          std::lock_guard lock(io_mutex);
          const auto stem = (fs::path(*trace_dir) / (cell.config_hash + "_r" + std::to_string(r))).string();
          write_trace_csv(stem + ".csv", trace);
          std::ofstream(stem + ".json") << trace_summary(trace, cfg).dump(2) << '\n';
        }
      } catch (const DivergenceError& e) {
        row.error = e.what();
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs;
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, jobs));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return res;
}

void write_outputs(const ExperimentSpec& spec, const PotentialSet& set, const ExperimentResult& result,
                   const std::string& dir, const std::string& timestamp) {
  fs::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream out(fs::path(dir) / name);
    if (!out) throw InputError("cannot write " + (fs::path(dir) / name).string());
    return out;
  };

  {
    auto out = open("results.csv");
    out << "config_hash,cell,replicate,rule,gradient,tau,p_comm,q_cv,gamma_rule,gamma,batch_size,total_iters,"
           "burn_in,thinning,n_samples,mse,w2_fit,w2_fit_regularized,n_comm_rounds,n_cv_rounds,n_grad_evals,status\n";
    for (const auto& row : result.rows) {
      const Cell& c = result.cells[row.cell];
      const auto& cfg = c.config;
      out << c.config_hash << ',' << c.index << ',' << row.replicate << ','
          << (cfg.rule.kind == RuleKind::plain ? "fald" : "vr_fald") << ','
          << (cfg.rule.mode == GradientMode::exact ? "exact" : "stochastic") << ',' << fmt(cfg.tau) << ','
          << fmt(cfg.p_comm) << ',' << fmt(cfg.q_cv) << ',' << c.gamma_rule.label() << ',' << fmt(cfg.gamma) << ','
          << batch_label(c.batch_size) << ',' << cfg.total_iters << ',' << cfg.burn_in << ',' << cfg.thinning << ','
          << row.n_samples << ',' << (row.mse ? fmt(*row.mse) : "") << ',' << (row.w2_fit ? fmt(*row.w2_fit) : "")
          << ',' << (row.w2_regularized ? 1 : 0) << ',' << row.n_comm_rounds << ',' << row.n_cv_rounds << ','
          << row.n_grad_evals << ',' << (row.error.empty() ? "ok" : "diverged") << '\n';
    }
  }

  // per-cell aggregates, shared by metrics.csv, table.csv and summary.json
  struct Agg {
    MeanSe mse, w2, comm, grads;
    std::size_t failed = 0;
  };
  std::vector<Agg> aggs(result.cells.size());
  {
    std::vector<std::vector<double>> mse(result.cells.size()), w2(mse), comm(mse), grads(mse);
    for (const auto& row : result.rows) {
      if (!row.error.empty()) {
        ++aggs[row.cell].failed;
        continue;
      }
      if (row.mse) mse[row.cell].push_back(*row.mse);
      if (row.w2_fit) w2[row.cell].push_back(*row.w2_fit);
      comm[row.cell].push_back(static_cast<double>(row.n_comm_rounds) /
                               static_cast<double>(result.cells[row.cell].config.total_iters));
      grads[row.cell].push_back(static_cast<double>(row.n_grad_evals));
    }
    for (std::size_t c = 0; c < aggs.size(); ++c) {
      aggs[c].mse = mean_se(mse[c]);
      aggs[c].w2 = mean_se(w2[c]);
      aggs[c].comm = mean_se(comm[c]);
      aggs[c].grads = mean_se(grads[c]);
    }
  }

  {
    auto out = open("metrics.csv");
    out << "config_hash,metric,value\n";
    for (std::size_t c = 0; c < aggs.size(); ++c) {
      const auto& h = result.cells[c].config_hash;
      const auto& a = aggs[c];
      auto emit = [&](const char* name, double v) { out << h << ',' << name << ',' << fmt(v) << '\n'; };
      if (a.mse.n) {
        emit("mse_mean", a.mse.mean);
        if (a.mse.n >= 2) emit("mse_se", a.mse.se);
      }
      if (a.w2.n) {
        emit("w2_fit_mean", a.w2.mean);
        if (a.w2.n >= 2) emit("w2_fit_se", a.w2.se);
      }
      if (a.comm.n) emit("comm_rate_mean", a.comm.mean);
      if (a.grads.n) emit("grad_evals_mean", a.grads.mean);
      emit("replicates_ok", static_cast<double>(a.mse.n ? a.mse.n : a.comm.n));
      emit("replicates_diverged", static_cast<double>(a.failed));
    }
  }

  {
    // rows: (method, gradient, batch, tau, q_cv); columns: (p_c, gamma rule)
    std::vector<std::string> col_keys, row_keys;
    std::map<std::pair<std::string, std::string>, std::string> value;
    auto add_unique = [](std::vector<std::string>& v, const std::string& k) {
      if (std::find(v.begin(), v.end(), k) == v.end()) v.push_back(k);
    };
    for (const auto& c : result.cells) {
      const auto& cfg = c.config;
      const std::string method = cfg.rule.kind == RuleKind::plain ? "FALD" : "VR-FALD*";
      const std::string row = method + ',' + (cfg.rule.mode == GradientMode::exact ? "exact" : "stochastic") + ',' +
                              batch_label(c.batch_size) + ',' + fmt(cfg.tau) + ',' +
                              (c.q_cv_default ? std::string("p_c") : fmt(cfg.q_cv));
      const std::string col = "p_c=" + short_num(cfg.p_comm) + " gamma=" + c.gamma_rule.label();
      add_unique(row_keys, row);
      add_unique(col_keys, col);
      const auto& a = aggs[c.index];
      value[{row, col}] = a.mse.n ? fmt_sci(a.mse.mean) : "NA";
    }
    auto out = open("table.csv");
    out << "method,gradient,batch_size,tau,q_cv";
    for (const auto& k : col_keys) out << ',' << k;
    out << '\n';
    for (const auto& r : row_keys) {
      out << r;
      for (const auto& k : col_keys) {
        auto it = value.find({r, k});
        out << ',' << (it == value.end() ? "" : it->second);
      }
      out << '\n';
    }
  }

  {
    json s;
    s["timestamp"] = timestamp;
    s["spec"] = spec.source;
    s["spec_hash"] = fnv1a_hex(spec.source.dump());
    s["potentials"] = {{"hash", fnv1a_hex(set.to_json().dump())},
                       {"clients", set.size()},
                       {"dim", set.dim()},
                       {"all_gaussian", set.all_gaussian()}};
    s["gamma_bar"] = result.gamma_bar;
    s["init"] = std::vector<double>(result.init.data(), result.init.data() + result.init.size());
    const auto& k = result.constants;
    s["constants"] = {{"minimizer", std::vector<double>(k.minimizer.data(), k.minimizer.data() + k.minimizer.size())},
                      {"heterogeneity", k.heterogeneity},
                      {"strong_convexity", k.strong_convexity},
                      {"smoothness", k.smoothness}};
    if (result.posterior) {
      s["posterior"] = {{"mean", std::vector<double>(result.posterior->mean().data(),
                                                     result.posterior->mean().data() + set.dim())},
                        {"total_variance", result.posterior->total_variance()}};
    }
    json cells = json::array();
    for (std::size_t c = 0; c < aggs.size(); ++c) {
      const auto& a = aggs[c];
      json cfg = to_json(result.cells[c].config);
      cfg.erase("seeds");
      json cell{{"config_hash", result.cells[c].config_hash},
                {"config", cfg},
                {"gamma_rule", result.cells[c].gamma_rule.label()},
                {"replicates", spec.chains},
                {"diverged", a.failed}};
      if (a.mse.n) cell["mse"] = {{"mean", a.mse.mean}, {"se", a.mse.se}, {"n", a.mse.n}};
      if (a.w2.n) cell["w2_fit"] = {{"mean", a.w2.mean}, {"se", a.w2.se}, {"n", a.w2.n}};
      if (a.comm.n) cell["comm_rate"] = a.comm.mean;
      cells.push_back(std::move(cell));
    }
    s["cells"] = std::move(cells);
    s["warnings"] = result.warnings;
    auto out = open("summary.json");
    out << s.dump(2) << '\n';
  }
}

std::size_t worker_count_from_env() {
  if (const char* env = std::getenv("FEDLD_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v <= 0) throw ConfigError("must be a positive integer", "FEDLD_WORKERS");
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace fedld::cli
