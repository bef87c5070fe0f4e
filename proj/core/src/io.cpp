#include "nmargof/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "nmargof/error.hpp"

namespace nmargof {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::kNone: return "none";
    case Method::kPlugin: return "plugin";
    case Method::kBootstrap: return "bootstrap";
    case Method::kBoth: return "both";
  }
  return "none";
}

Method parse_method(const std::string& s) {
  if (s == "plugin") return Method::kPlugin;
  if (s == "bootstrap") return Method::kBootstrap;
  if (s == "both") return Method::kBoth;
  if (s == "none") return Method::kNone;
  throw Error(ErrorCode::kUsage, "unknown method '" + s + "'");
}

void RunConfig::validate() const {
  if (outcome_col.empty()) {
    throw Error(ErrorCode::kUsage, "an outcome column is required");
  }
  if (outcome_cols.empty() && propensity_cols.empty()) {
    throw Error(ErrorCode::kUsage, "no covariate columns given");
  }
  auto contains = [](const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };
  if (contains(propensity_cols, outcome_col) ||
      contains(outcome_cols, outcome_col)) {
    throw Error(ErrorCode::kUsage,
                "the outcome column cannot also be a covariate");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorCode::kUsage, "alpha must lie in (0, 1)");
  }
  if ((method == Method::kBootstrap || method == Method::kBoth) && B == 0) {
    throw Error(ErrorCode::kUsage, "--boot-reps must be at least 1");
  }
}

Dataset parse_csv(std::istream& in, const RunConfig& config) {
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::kParse, "empty file: header row missing");
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    line.erase(0, 3);
  }
  const std::vector<std::string> header = split(line);
  auto find_col = [&header](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw Error(ErrorCode::kParse, "column '" + name + "' not in header");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t y_col = find_col(config.outcome_col);

  // Keep the used covariates in header order.
  std::vector<std::size_t> used;
  for (const auto& name : config.propensity_cols) used.push_back(find_col(name));
  for (const auto& name : config.outcome_cols) used.push_back(find_col(name));
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());

  Dataset data;
  for (std::size_t c : used) data.names.push_back(header[c]);
  auto position = [&used](std::size_t header_col) {
    return static_cast<std::size_t>(
        std::find(used.begin(), used.end(), header_col) - used.begin());
  };
  for (const auto& name : config.propensity_cols)
    data.prop_cols.push_back(position(find_col(name)));
  for (const auto& name : config.outcome_cols)
    data.out_cols.push_back(position(find_col(name)));

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kParse,
                  "line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    Observation obs;
    obs.x.reserve(used.size());
    for (std::size_t c : used) {
      const auto& cell = cells[c];
      if (cell.empty() || cell == "NA") {
        throw Error(ErrorCode::kParse,
                    "missing covariate at line " + std::to_string(line_no) +
                        ", column '" + header[c] +
                        "'; covariates must be fully observed");
      }
      const auto v = parse_number(cell);
      if (!v) {
        throw Error(ErrorCode::kParse,
                    "cannot parse '" + cell + "' at line " +
                        std::to_string(line_no) + ", column '" + header[c] +
                        "'");
      }
      obs.x.push_back(*v);
    }
    const auto& ycell = cells[y_col];
    if (!(ycell.empty() || ycell == "NA")) {
      const auto v = parse_number(ycell);
      if (!v) {
        throw Error(ErrorCode::kParse,
                    "cannot parse outcome '" + ycell + "' at line " +
                        std::to_string(line_no));
      }
      obs.y = *v;
    }
    data.rows.push_back(std::move(obs));
  }
  return data;
}

Dataset load_csv(const std::string& path, const RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParse, "cannot open '" + path + "'");
  return parse_csv(in, config);
}

void write_csv(std::ostream& out, const Dataset& data,
               const std::string& outcome_name) {
  for (std::size_t j = 0; j < data.dim(); ++j) {
    out << (j < data.names.size() ? data.names[j] : "x" + std::to_string(j + 1))
        << ',';
  }
  out << outcome_name << '\n';
  for (const auto& row : data.rows) {
    for (double v : row.x) out << format_number(v) << ',';
    out << (row.y ? format_number(*row.y) : "NA") << '\n';
  }
}

std::vector<CoefficientRow> coefficient_table(const Dataset& data,
                                              const OutcomeFamily& fam,
                                              const FitResult& fit) {
  const auto names = parameter_names(data, fam);
  const Eigen::VectorXd est = fit.theta_hat.pack();
  std::vector<CoefficientRow> rows;
  for (Eigen::Index j = 0; j < est.size(); ++j) {
    CoefficientRow r;
    r.name = names[static_cast<std::size_t>(j)];
    r.estimate = est[j];
    r.se = j < fit.se.size() ? fit.se[j] : std::nan("");
    r.wald_z = r.estimate / r.se;
    r.p = two_sided_p(r.wald_z);
    rows.push_back(std::move(r));
  }
  return rows;
}

nlohmann::json make_report(const RunConfig& config, const Dataset& data,
                           const GofReport& report,
                           const std::optional<BootstrapResult>& boot) {
  std::vector<std::string> warnings = report.warnings;
  auto num = [&warnings](double v, const std::string& field) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    warnings.push_back(field + " is not available");
    return nullptr;
  };
  const OutcomeFamily fam =
      OutcomeFamily::make(config.family, data.out_cols.size());
  const bool want_plugin =
      config.method == Method::kPlugin || config.method == Method::kBoth;

  nlohmann::json j;
  j["schema"] = kSchemaVersion;
  j["kind"] = "gof_report";
  j["config"] = {{"data", config.data_path},
                 {"outcome", config.outcome_col},
                 {"propensity_cols", config.propensity_cols},
                 {"outcome_cols", config.outcome_cols},
                 {"family", family_name(config.family)},
                 {"method", method_name(config.method)},
                 {"alpha", config.level},
                 {"boot_reps", config.B},
                 {"seed", config.seed}};
  j["n"] = data.size();
  j["n_missing"] = data.n_missing();
  j["missing_rate"] = data.missing_rate();

  nlohmann::json table = nlohmann::json::array();
  for (const auto& row : coefficient_table(data, fam, report.fit)) {
    table.push_back({{"name", row.name},
                     {"estimate", num(row.estimate, row.name + " estimate")},
                     {"se", num(row.se, row.name + " se")},
                     {"wald_z", num(row.wald_z, row.name + " wald_z")},
                     {"p", num(row.p, row.name + " p")}});
  }
  j["fit"] = {{"converged", report.fit.converged},
              {"iterations", report.fit.iterations},
              {"loglik", num(report.fit.loglik, "loglik")},
              {"score_inf_norm",
               num(report.fit.score_inf_norm, "score_inf_norm")},
              {"table", table}};
  j["t_n"] = num(report.t_n, "t_n");
  j["delta_hat"] = num(report.delta_hat, "delta_hat");
  if (want_plugin) {
    j["sigma_hat"] = num(report.sigma_hat, "sigma_hat");
    j["plugin_p"] = num(report.plugin_p, "plugin_p");
    j["plugin_reject"] = report.plugin_available()
                             ? nlohmann::json(report.plugin_reject)
                             : nlohmann::json(nullptr);
  } else {
    j["sigma_hat"] = nullptr;
    j["plugin_p"] = nullptr;
    j["plugin_reject"] = nullptr;
  }
  if (boot) {
    j["boot_p"] = num(boot->boot_p, "boot_p");
    j["q_star"] = num(boot->q_star, "q_star");
    j["boot_reject"] = boot->reject;
    j["n_boot_failed"] = boot->n_failed;
    j["sigma2_boot_diag"] = num(boot->sigma2_boot_diag, "sigma2_boot_diag");
  } else {
    j["boot_p"] = nullptr;
    j["q_star"] = nullptr;
    j["boot_reject"] = nullptr;
    j["n_boot_failed"] = nullptr;
    j["sigma2_boot_diag"] = nullptr;
  }
  if (auto w = data.instrument_warning()) warnings.push_back(*w);
  j["warnings"] = warnings;
  return j;
}

std::string format_report(const nlohmann::json& j) {
  std::ostringstream out;
  auto show = [](const nlohmann::json& v, int prec = 4) {
    if (v.is_null()) return std::string("NA");
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v.get<double>();
    return s.str();
  };
  out << "n = " << j["n"] << ", missing = " << j["n_missing"] << " ("
      << show(j["missing_rate"], 3) << ")\n";
  out << "fit converged: " << (j["fit"]["converged"].get<bool>() ? "yes" : "no")
      << " after " << j["fit"]["iterations"] << " iterations\n\n";
  out << std::left << std::setw(22) << "Variable" << std::right
      << std::setw(11) << "Coef." << std::setw(11) << "S.E." << std::setw(11)
      << "Wald Z" << std::setw(11) << "p-value" << '\n';
  for (const auto& row : j["fit"]["table"]) {
    out << std::left << std::setw(22) << row["name"].get<std::string>()
        << std::right << std::setw(11) << show(row["estimate"], 3)
        << std::setw(11) << show(row["se"], 3) << std::setw(11)
        << show(row["wald_z"], 3) << std::setw(11) << show(row["p"], 4)
        << '\n';
  }
  out << "\nT_n = " << show(j["t_n"]) << '\n';
  if (!j["plugin_p"].is_null() || !j["sigma_hat"].is_null()) {
    out << "plug-in:   sigma_hat = " << show(j["sigma_hat"])
        << ", p = " << show(j["plugin_p"]) << '\n';
  }
  if (!j["boot_p"].is_null()) {
    out << "bootstrap: q* = " << show(j["q_star"]) << ", p = "
        << show(j["boot_p"]) << '\n';
  }
  for (const auto& w : j["warnings"]) {
    out << "warning: " << w.get<std::string>() << '\n';
  }
  return out.str();
}

CommandResult cmd_test(const RunConfig& config) {
  config.validate();
  const Dataset data = load_csv(config.data_path, config);
  const OutcomeFamily fam =
      OutcomeFamily::make(config.family, data.out_cols.size());

  FitResult fit = fit_mle(data, fam);
  if (!fit.converged) {
    throw Error(ErrorCode::kNotConverged,
                "maximum likelihood fit did not converge: " + fit.message);
  }
  GofReport report = plugin_test_at(data, fam, config.level, std::move(fit));
  std::optional<BootstrapResult> boot;
  if (config.method == Method::kBootstrap || config.method == Method::kBoth) {
    BootstrapOptions bo;
    bo.B = config.B;
    bo.seed = child_seed(config.seed, Stream::kBootstrap, 0);
    bo.threads = config.threads;
    boot = bootstrap_test_at(data, fam, report, bo);
  }

  CommandResult res;
  res.report = make_report(config, data, report, boot);
  res.text = format_report(res.report);
  const bool plugin_rej =
      (config.method == Method::kPlugin || config.method == Method::kBoth) &&
      report.plugin_available() && report.plugin_reject;
  const bool boot_rej = boot && boot->reject;
  res.exit_code = plugin_rej || boot_rej ? 2 : 0;
  if (!config.output_path.empty()) {
    std::ofstream out(config.output_path);
    if (!out) {
      throw Error(ErrorCode::kInvalidInput,
                  "cannot write '" + config.output_path + "'");
    }
    out << res.report.dump(2) << '\n';
  }
  return res;
}

RejectionSummary cmd_simulate(const SimulateConfig& config) {
  const ScenarioSpec spec = make_scenario(config.example, config.scenario);
  if (config.study.B == 0 || config.study.reps == 0) {
    throw Error(ErrorCode::kUsage, "--reps and --boot-reps must be positive");
  }
  RejectionSummary sum = run_study(spec, config.study);
  if (!config.output_path.empty()) {
    std::ofstream json(config.output_path);
    std::ofstream text(config.output_path + ".txt");
    if (!json || !text) {
      throw Error(ErrorCode::kInvalidInput,
                  "cannot write '" + config.output_path + "'");
    }
    json << to_json(sum).dump(2) << '\n';
    text << format_table(std::span<const RejectionSummary>(&sum, 1));
  }
  return sum;
}

}  // namespace nmargof
