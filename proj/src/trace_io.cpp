#include "fedld/trace_io.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fedld/metrics.hpp"

namespace fedld {

void write_trace_csv(std::ostream& out, const SampleTrace& trace) {
  const Index d = trace.samples.empty() ? 0 : trace.samples.front().size();
  out << "iteration";
  for (Index k = 0; k < d; ++k) out << ",x" << k;
  out << '\n';
  out << std::setprecision(17);
  for (std::size_t r = 0; r < trace.samples.size(); ++r) {
    out << (r < trace.iterations.size() ? trace.iterations[r] : r);
    for (Index k = 0; k < d; ++k) out << ',' << trace.samples[r][k];
    out << '\n';
  }
}

void write_trace_csv(const std::string& path, const SampleTrace& trace) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  write_trace_csv(out, trace);
}

namespace {
std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

template <class T>
bool parse_number(std::string_view s, T& v) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}
}  // namespace

SampleTrace read_trace_csv(std::istream& in, const std::string& name) {
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) { throw ParseError(name + ": " + what, lineno); };

  if (!std::getline(in, line)) {
    lineno = 1;
    fail("missing header");
  }
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.empty() || header[0] != "iteration") fail("header must start with 'iteration'");
  const auto d = static_cast<Index>(header.size() - 1);
  if (d == 0) fail("header has no coordinate columns");
  for (Index k = 0; k < d; ++k) {
    if (header[static_cast<std::size_t>(k + 1)] != "x" + std::to_string(k)) fail("unexpected column name");
  }

  SampleTrace trace;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (static_cast<Index>(cells.size()) != d + 1) {
      fail("expected " + std::to_string(d + 1) + " fields, found " + std::to_string(cells.size()));
    }
    std::uint64_t it = 0;
    if (!parse_number(cells[0], it)) fail("iteration is not a nonnegative integer");
    Vector x(d);
    for (Index k = 0; k < d; ++k) {
      if (!parse_number(cells[static_cast<std::size_t>(k + 1)], x[k]) || !std::isfinite(x[k])) {
        fail("coordinate " + std::to_string(k) + " is not a finite number");
      }
    }
    if (!trace.iterations.empty() && it <= trace.iterations.back()) fail("iterations must increase");
    trace.iterations.push_back(it);
    trace.samples.push_back(std::move(x));
  }
  return trace;
}

SampleTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open trace file: " + path);
  return read_trace_csv(in, path);
}

nlohmann::json to_json(const SamplerConfig& cfg) {
  nlohmann::json j;
  j["rule"] = cfg.rule.kind == RuleKind::plain ? "fald" : "vr_fald";
  j["gradient"] = cfg.rule.mode == GradientMode::exact ? "exact" : "stochastic";
  j["gamma"] = cfg.gamma;
  j["p_comm"] = cfg.p_comm;
  j["q_cv"] = cfg.q_cv;
  j["tau"] = cfg.tau;
  j["batch_sizes"] = cfg.batch_sizes;
  j["total_iters"] = cfg.total_iters;
  j["burn_in"] = cfg.burn_in;
  j["thinning"] = cfg.thinning;
  if (cfg.schedule == ScheduleKind::bernoulli) {
    j["schedule"] = "bernoulli";
  } else {
    j["schedule"] = "fixed_period";
    j["period"] = cfg.period;
  }
  j["record"] = cfg.record == RecordMode::every_iteration ? "every_iteration" : "comm_only";
  j["seeds"] = {{"shared", cfg.seeds.shared},
                {"client_noise", cfg.seeds.client_noise},
                {"client_batch", cfg.seeds.client_batch},
                {"schedule", cfg.seeds.schedule}};
  return j;
}

SamplerConfig sampler_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("sampler config must be an object", "config");
  SamplerConfig cfg;
  auto get = [&](const char* key, auto& field) {
    if (!doc.contains(key)) return;
    try {
      field = doc[key].get<std::decay_t<decltype(field)>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("has the wrong type", key);
    }
  };
  std::string rule = "fald", gradient = "stochastic", schedule = "bernoulli", record = "every_iteration";
  get("rule", rule);
  get("gradient", gradient);
  cfg.rule = LocalGradientRule::parse(rule, gradient);
  get("gamma", cfg.gamma);
  get("p_comm", cfg.p_comm);
  cfg.q_cv = cfg.p_comm;
  get("q_cv", cfg.q_cv);
  get("tau", cfg.tau);
  get("batch_sizes", cfg.batch_sizes);
  get("total_iters", cfg.total_iters);
  get("burn_in", cfg.burn_in);
  get("thinning", cfg.thinning);
  get("schedule", schedule);
  if (schedule == "bernoulli") {
    cfg.schedule = ScheduleKind::bernoulli;
  } else if (schedule == "fixed_period") {
    cfg.schedule = ScheduleKind::fixed_period;
    get("period", cfg.period);
  } else {
    throw ConfigError("must be bernoulli or fixed_period", "schedule");
  }
  get("record", record);
  if (record == "every_iteration") {
    cfg.record = RecordMode::every_iteration;
  } else if (record == "comm_only") {
    cfg.record = RecordMode::comm_only;
  } else {
    throw ConfigError("must be every_iteration or comm_only", "record");
  }
  if (doc.contains("seeds")) {
    const auto& s = doc["seeds"];
    try {
      cfg.seeds.shared = s.value("shared", cfg.seeds.shared);
      cfg.seeds.client_noise = s.value("client_noise", cfg.seeds.client_noise);
      cfg.seeds.client_batch = s.value("client_batch", cfg.seeds.client_batch);
      cfg.seeds.schedule = s.value("schedule", cfg.seeds.schedule);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("must hold unsigned integers", "seeds");
    }
  }
  cfg.validate();
  return cfg;
}

nlohmann::json trace_summary(const SampleTrace& trace, const SamplerConfig& cfg) {
  nlohmann::json j;
  j["config"] = to_json(cfg);
  j["counters"] = {{"wall_iters", trace.wall_iters},
                   {"n_samples", trace.samples.size()},
                   {"n_comm_rounds", trace.n_comm_rounds},
                   {"n_cv_rounds", trace.n_cv_rounds},
                   {"n_grad_evals", trace.n_grad_evals}};
  if (trace.samples.size() >= 2) {
    const auto m = moments(trace);
    nlohmann::json cov = nlohmann::json::array();
    for (Index r = 0; r < m.covariance.rows(); ++r) {
      std::vector<double> row;
      for (Index c = 0; c < m.covariance.cols(); ++c) row.push_back(m.covariance(r, c));
      cov.push_back(row);
    }
    j["moments"] = {{"mean", std::vector<double>(m.mean.data(), m.mean.data() + m.mean.size())},
                    {"covariance", cov}};
  }
  return j;
}

}  // namespace fedld
