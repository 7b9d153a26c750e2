#include "schema.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <vector>

#include "fedld/core.hpp"

namespace fedld::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) return cells;
    start = comma + 1;
  }
}

bool is_real(const std::string& s) {
  if (s.empty()) return false;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(v);
}

bool is_count(const std::string& s) {
  if (s.empty()) return false;
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool is_hash(const std::string& s) {
  return s.size() == 16 && s.find_first_not_of("0123456789abcdef") == std::string::npos;
}

using Check = std::function<bool(const std::string&)>;

const Check real = is_real;
const Check count = is_count;
const Check hash = is_hash;
const Check optional_real = [](const std::string& s) { return s.empty() || is_real(s); };
const Check any_text = [](const std::string& s) { return !s.empty(); };
Check one_of(std::set<std::string> allowed) {
  return [allowed = std::move(allowed)](const std::string& s) { return allowed.count(s) > 0; };
}
const Check probability = [](const std::string& s) {
  return is_real(s) && std::stod(s) >= 0.0 && std::stod(s) <= 1.0;
};

struct Column {
  std::string name;
  Check check;
};

void validate_csv(const std::string& path, const std::vector<Column>& columns, bool allow_empty = true) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError(path + ":1: missing header", 1);
  const auto header = split_csv(line);
  if (header.size() != columns.size()) throw ParseError(path + ":1: wrong number of columns", 1);
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (header[k] != columns[k].name) throw ParseError(path + ":1: expected column " + columns[k].name, 1);
  }
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto cells = split_csv(line);
    if (cells.size() != columns.size()) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": wrong number of fields", lineno);
    }
    for (std::size_t k = 0; k < columns.size(); ++k) {
      if (!columns[k].check(cells[k])) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": bad value '" + cells[k] + "' in column " +
                             columns[k].name,
                         lineno);
      }
    }
    ++rows;
  }
  if (!allow_empty && rows == 0) throw ParseError(path + ": no data rows");
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ParseError(what);
}

bool is_number_array(const json& j) {
  if (!j.is_array()) return false;
  for (const auto& v : j) {
    if (!v.is_number()) return false;
  }
  return true;
}

void require_number(const json& doc, const std::string& key, const std::string& where) {
  require(doc.contains(key) && doc[key].is_number(), where + "." + key + " must be a number");
}

void require_count(const json& doc, const std::string& key, const std::string& where) {
  require(doc.contains(key) && doc[key].is_number_unsigned(), where + "." + key + " must be a nonnegative integer");
}

}  // namespace

void validate_results_csv(const std::string& path) {
  validate_csv(path, {{"config_hash", hash},
                      {"cell", count},
                      {"replicate", count},
                      {"rule", one_of({"fald", "vr_fald"})},
                      {"gradient", one_of({"stochastic", "exact"})},
                      {"tau", probability},
                      {"p_comm", probability},
                      {"q_cv", probability},
                      {"gamma_rule", any_text},
                      {"gamma", real},
                      {"batch_size", [](const std::string& s) { return s == "full" || is_count(s); }},
                      {"total_iters", count},
                      {"burn_in", count},
                      {"thinning", count},
                      {"n_samples", count},
                      {"mse", optional_real},
                      {"w2_fit", optional_real},
                      {"w2_fit_regularized", one_of({"0", "1"})},
                      {"n_comm_rounds", count},
                      {"n_cv_rounds", count},
                      {"n_grad_evals", count},
                      {"status", one_of({"ok", "diverged"})}},
               false);
}

void validate_metrics_csv(const std::string& path) {
  validate_csv(path, {{"config_hash", hash},
                      {"metric", one_of({"mse_mean", "mse_se", "w2_fit_mean", "w2_fit_se", "comm_rate_mean",
                                         "grad_evals_mean", "replicates_ok", "replicates_diverged"})},
                      {"value", real}},
               false);
}

void validate_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ":1: missing header", 1);
  const auto header = split_csv(line);
  const std::vector<std::string> fixed{"method", "gradient", "batch_size", "tau", "q_cv"};
  if (header.size() <= fixed.size()) throw ParseError(path + ":1: no value columns", 1);
  for (std::size_t k = 0; k < fixed.size(); ++k) {
    if (header[k] != fixed[k]) throw ParseError(path + ":1: expected column " + fixed[k], 1);
  }
  for (std::size_t k = fixed.size(); k < header.size(); ++k) {
    if (header[k].rfind("p_c=", 0) != 0 || header[k].find(" gamma=") == std::string::npos) {
      throw ParseError(path + ":1: value columns must read 'p_c=<p> gamma=<rule>'", 1);
    }
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto cells = split_csv(line);
    auto bad = [&](const std::string& what) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + what, lineno);
    };
    if (cells.size() != header.size()) bad("wrong number of fields");
    if (cells[0] != "FALD" && cells[0] != "VR-FALD*") bad("unknown method");
    if (cells[1] != "stochastic" && cells[1] != "exact") bad("unknown gradient mode");
    if (cells[2] != "full" && !is_count(cells[2])) bad("bad batch size");
    if (!probability(cells[3])) bad("bad tau");
    if (cells[4] != "p_c" && !probability(cells[4])) bad("bad q_cv");
    for (std::size_t k = fixed.size(); k < cells.size(); ++k) {
      if (!cells[k].empty() && cells[k] != "NA" && !is_real(cells[k])) bad("bad value in " + header[k]);
    }
  }
  if (lineno == 1) throw ParseError(path + ": no data rows");
}

void validate_summary_json(const json& doc) {
  require(doc.is_object(), "summary must be an object");
  require(doc.contains("timestamp") && doc["timestamp"].is_string(), "summary.timestamp must be a string");
  require(doc.contains("spec") && doc["spec"].is_object(), "summary.spec must be an object");
  require(doc.contains("spec_hash") && doc["spec_hash"].is_string() && is_hash(doc["spec_hash"]),
          "summary.spec_hash must be a 16-digit hex string");
  require(doc.contains("potentials") && doc["potentials"].is_object(), "summary.potentials must be an object");
  require_count(doc["potentials"], "clients", "summary.potentials");
  require_count(doc["potentials"], "dim", "summary.potentials");
  require_number(doc, "gamma_bar", "summary");
  require(doc.contains("init") && is_number_array(doc["init"]), "summary.init must be a number array");
  require(doc.contains("constants") && doc["constants"].is_object(), "summary.constants must be an object");
  require_number(doc["constants"], "heterogeneity", "summary.constants");
  require(doc.contains("cells") && doc["cells"].is_array() && !doc["cells"].empty(), "summary.cells must be a nonempty array");
  for (std::size_t k = 0; k < doc["cells"].size(); ++k) {
    const auto& c = doc["cells"][k];
    const auto where = "summary.cells[" + std::to_string(k) + "]";
    require(c.is_object(), where + " must be an object");
    require(c.contains("config_hash") && c["config_hash"].is_string() && is_hash(c["config_hash"]),
            where + ".config_hash must be a 16-digit hex string");
    require(c.contains("config") && c["config"].is_object(), where + ".config must be an object");
    require_number(c["config"], "gamma", where + ".config");
    require_count(c, "replicates", where);
    require_count(c, "diverged", where);
    for (const char* m : {"mse", "w2_fit"}) {
      if (!c.contains(m)) continue;
      require_number(c[m], "mean", where + "." + m);
      require_number(c[m], "se", where + "." + m);
    }
  }
  require(doc.contains("warnings") && doc["warnings"].is_array(), "summary.warnings must be an array");
}

void validate_budget_json(const json& doc) {
  require(doc.is_object(), "budget output must be an object");
  require(doc.contains("problem") && doc["problem"].is_object(), "budget.problem must be an object");
  for (const char* k : {"c0", "c1", "c2", "m", "epsilon"}) require_number(doc["problem"], k, "budget.problem");
  require(doc.contains("solution") && doc["solution"].is_object(), "budget.solution must be an object");
  const auto& s = doc["solution"];
  for (const char* k : {"gamma", "iterations_real", "c2_tilde", "constraint_value"}) require_number(s, k, "budget.solution");
  require_count(s, "iterations", "budget.solution");
  for (const char* k : {"z", "mu", "sigma"}) {
    require(s.contains(k) && (s[k].is_null() || s[k].is_number()), std::string("budget.solution.") + k + " must be a number or null");
  }
}

void validate_trace_summary_json(const json& doc) {
  require(doc.is_object(), "trace summary must be an object");
  require(doc.contains("config") && doc["config"].is_object(), "trace summary config must be an object");
  require(doc.contains("counters") && doc["counters"].is_object(), "trace summary counters must be an object");
  for (const char* k : {"wall_iters", "n_samples", "n_comm_rounds", "n_cv_rounds", "n_grad_evals"}) {
    require_count(doc["counters"], k, "counters");
  }
  if (doc.contains("moments")) {
    require(is_number_array(doc["moments"]["mean"]), "moments.mean must be a number array");
    require(doc["moments"]["covariance"].is_array(), "moments.covariance must be an array");
  }
}

void validate_analyze_json(const json& doc) {
  require(doc.is_object(), "analysis must be an object");
  require(doc.contains("posterior") && doc["posterior"].is_object(), "analysis.posterior must be an object");
  require(is_number_array(doc["posterior"]["mean"]), "analysis.posterior.mean must be a number array");
  require_number(doc["posterior"], "total_variance", "analysis.posterior");
  require(doc.contains("traces") && doc["traces"].is_array() && !doc["traces"].empty(),
          "analysis.traces must be a nonempty array");
  for (std::size_t k = 0; k < doc["traces"].size(); ++k) {
    const auto& t = doc["traces"][k];
    const auto where = "analysis.traces[" + std::to_string(k) + "]";
    require(t.contains("file") && t["file"].is_string(), where + ".file must be a string");
    require_count(t, "n_samples", where);
    require(is_number_array(t["mean"]), where + ".mean must be a number array");
    require_number(t, "variance_mse", where);
    require(t.contains("gaussian_fit_w2") && t["gaussian_fit_w2"].is_object(), where + ".gaussian_fit_w2 must be an object");
    require_number(t["gaussian_fit_w2"], "distance", where + ".gaussian_fit_w2");
    require(t["gaussian_fit_w2"].contains("regularized") && t["gaussian_fit_w2"]["regularized"].is_boolean(),
            where + ".gaussian_fit_w2.regularized must be a boolean");
    require(t.contains("empirical_w2_1d") && is_number_array(t["empirical_w2_1d"]),
            where + ".empirical_w2_1d must be a number array");
    if (t.contains("hpd")) {
      require_number(t["hpd"], "alpha", where + ".hpd");
      require_number(t["hpd"], "threshold", where + ".hpd");
    }
  }
}

void validate_error_json(const json& doc) {
  require(doc.is_object() && doc.contains("error") && doc["error"].is_object(), "error output must hold an error object");
  const auto& e = doc["error"];
  require(e.contains("kind") && e["kind"].is_string(), "error.kind must be a string");
  require(e.contains("message") && e["message"].is_string(), "error.message must be a string");
}

void validate_run_directory(const std::string& dir) {
  const fs::path d(dir);
  validate_results_csv((d / "results.csv").string());
  validate_metrics_csv((d / "metrics.csv").string());
  validate_table_csv((d / "table.csv").string());
  std::ifstream in(d / "summary.json");
  if (!in) throw ParseError("cannot open " + (d / "summary.json").string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("summary.json: ") + e.what());
  }
  validate_summary_json(doc);
  if (fs::exists(d / "traces")) {
    for (const auto& entry : fs::directory_iterator(d / "traces")) {
      if (entry.path().extension() != ".json") continue;
      std::ifstream tin(entry.path());
      json t;
      try {
        tin >> t;
      } catch (const json::parse_error& e) {
        throw ParseError(entry.path().string() + ": " + e.what());
      }
      validate_trace_summary_json(t);
    }
  }
}

}  // namespace fedld::cli
