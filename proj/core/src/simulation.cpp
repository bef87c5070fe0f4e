#include "nmargof/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "nmargof/bootstrap.hpp"
#include "nmargof/error.hpp"
#include "nmargof/model.hpp"
#include "nmargof/parallel.hpp"

namespace nmargof {
namespace {

double sq(double v) { return v * v; }

struct Row {
  double alpha, beta1, beta2, gamma;
  int e_kind, g_kind;
};

// e(x): 0 none, 1 0.5 x1^2, 2 0.5 x1^2 + 0.5 x1^2 x2.
CovariateFn make_e(int kind, std::string& label) {
  switch (kind) {
    case 1:
      label = "0.5*x1^2";
      return [](std::span<const double> x) { return 0.5 * sq(x[0]); };
    case 2:
      label = "0.5*x1^2 + 0.5*x1^2*x2";
      return [](std::span<const double> x) {
        return 0.5 * sq(x[0]) + 0.5 * sq(x[0]) * x[1];
      };
    default:
      label = "0";
      return [](std::span<const double>) { return 0.0; };
  }
}

// g(x): 0 none, 1 0.5 x1^2, 2 0.5 x1^2 + x1^2 x2,
// 3 0.5 - 0.1 exp(-0.5 x1^2), 4 0.5 - 0.1 exp(-x1^2 + x2).
CovariateFn make_g(int kind, std::string& label) {
  switch (kind) {
    case 1:
      label = "0.5*x1^2";
      return [](std::span<const double> x) { return 0.5 * sq(x[0]); };
    case 2:
      label = "0.5*x1^2 + x1^2*x2";
      return [](std::span<const double> x) {
        return 0.5 * sq(x[0]) + sq(x[0]) * x[1];
      };
    case 3:
      label = "0.5 - 0.1*exp(-0.5*x1^2)";
      return [](std::span<const double> x) {
        return 0.5 - 0.1 * std::exp(-0.5 * sq(x[0]));
      };
    case 4:
      label = "0.5 - 0.1*exp(-x1^2 + x2)";
      return [](std::span<const double> x) {
        return 0.5 - 0.1 * std::exp(-sq(x[0]) + x[1]);
      };
    default:
      label = "0";
      return [](std::span<const double>) { return 0.0; };
  }
}

// Parameter table, rows I..V per example.
constexpr Row kTable[3][5] = {
    {{-1.1, -1.5, -1.5, -0.5, 0, 0},
     {-1.6, -2.0, -2.0, -0.5, 1, 0},
     {-1.6, -1.5, -2.0, -0.5, 2, 0},
     {-1.0, 1.0, -2.5, -0.5, 0, 1},
     {-1.0, -1.0, -2.5, -0.5, 0, 2}},
    {{-1.0, 2.0, -1.0, -0.5, 0, 0},
     {-1.0, 1.2, -1.0, -0.5, 1, 0},
     {-1.0, 1.3, -1.5, -0.5, 2, 0},
     {-5.0, 1.0, 1.0, -0.5, 0, 1},
     {-3.5, 3.0, -2.0, -0.5, 0, 2}},
    {{1.0, -1.5, -1.5, -0.5, 0, 0},
     {1.0, -1.5, -2.8, -0.5, 1, 0},
     {1.0, -1.1, -3.5, -0.5, 2, 0},
     {1.0, -1.0, -2.0, -0.5, 0, 3},
     {1.0, -1.0, -2.0, -0.5, 0, 4}},
};

}  // namespace

std::string roman(int scenario) {
  static const char* kNames[] = {"I", "II", "III", "IV", "V"};
  if (scenario < 1 || scenario > 5) return std::to_string(scenario);
  return kNames[scenario - 1];
}

int parse_roman(const std::string& s) {
  for (int k = 1; k <= 5; ++k)
    if (s == roman(k) || s == std::to_string(k)) return k;
  throw Error(ErrorCode::kUsage, "unknown scenario '" + s + "'");
}

std::string ScenarioSpec::name() const {
  return "Example " + std::to_string(example) + " Scenario " + roman(scenario);
}

ScenarioSpec make_scenario(int example, int scenario) {
  if (example < 1 || example > 3 || scenario < 1 || scenario > 5) {
    throw Error(ErrorCode::kUsage,
                "no registered scenario for example " +
                    std::to_string(example) + ", scenario " +
                    std::to_string(scenario));
  }
  const Row& row = kTable[example - 1][scenario - 1];
  ScenarioSpec spec;
  spec.example = example;
  spec.scenario = scenario;
  spec.alpha = row.alpha;
  spec.beta1 = row.beta1;
  spec.beta2 = row.beta2;
  spec.gamma = row.gamma;
  spec.e_fn = make_e(row.e_kind, spec.e_label);
  spec.g_fn = make_g(row.g_kind, spec.g_label);
  switch (example) {
    case 1:
      spec.outcome = OutcomeFamily::make(FamilyKind::kBernoulli, 3);
      spec.xi = Eigen::Vector4d(1.0, -1.0, -1.0, 2.0);
      break;
    case 2:
      spec.outcome = OutcomeFamily::make(FamilyKind::kNormal, 3);
      spec.xi.resize(5);
      spec.xi << 1.0, -1.5, -1.5, 3.0, 0.0;
      break;
    default:
      spec.outcome = OutcomeFamily::make(FamilyKind::kGamma, 3);
      spec.kappa = scenario <= 3 ? 1.0 : std::exp(1.0);
      spec.xi.resize(5);
      spec.xi << 1.0, -1.5, -1.5, 2.0, std::log(spec.kappa);
      break;
  }
  return spec;
}

Eigen::MatrixXd draw_covariates(std::size_t n, Rng& rng) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 3);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = normal(rng);
    x(i, 1) = coin(rng) ? 1.0 : 0.0;
    x(i, 2) = 1.0 + normal(rng);
  }
  return x;
}

Unit draw_unit(const ScenarioSpec& spec, std::span<const double> x, Rng& rng) {
  const FamilyKind kind = spec.outcome.kind;
  const double s = kernel::aux(spec.outcome, spec.xi);
  const double a = spec.alpha + spec.beta1 * x[0] + spec.beta2 * x[1] +
                   (spec.e_fn ? spec.e_fn(x) : 0.0);
  const double t = spec.gamma + (spec.g_fn ? spec.g_fn(x) : 0.0);
  const double nu = kernel::linear_index(spec.outcome, x, spec.xi);
  if (!kernel::tilt_feasible(kind, t, nu)) {
    throw Error(ErrorCode::kScenarioInfeasible,
                spec.name() + ": tilt diverges at t = " + std::to_string(t));
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  // Y | x = f(. | x, R = 1) w.p. 1 / Z(x), tilted law otherwise, with
  // Z(x) = 1 + exp(a + log M(t)).
  const double p_plain = 1.0 / (1.0 + std::exp(a + kernel::tilt(kind, t, nu, s)));
  const double nu_draw =
      unif(rng) < p_plain ? nu : kernel::tilted_index(kind, t, nu, s);
  Unit u;
  u.y = kernel::draw(kind, nu_draw, s, rng);
  const double pi_true = 1.0 / (1.0 + std::exp(a + t * u.y));
  u.r = unif(rng) < pi_true ? 1 : 0;
  return u;
}

Dataset draw_joint(const ScenarioSpec& spec, std::size_t n, Rng& rng) {
  const Eigen::MatrixXd x = draw_covariates(n, rng);
  Dataset data;
  data.prop_cols = {0, 1};
  data.out_cols = {0, 1, 2};
  data.names = {"x1", "x2", "x3"};
  data.rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    std::vector<double> row{x(ii, 0), x(ii, 1), x(ii, 2)};
    Unit u;
    try {
      u = draw_unit(spec, row, rng);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " (row " +
                                std::to_string(i) + ")");
    }
    auto& obs = data.rows[i];
    obs.x = std::move(row);
    if (u.r == 1) obs.y = u.y;
  }
  return data;
}

RejectionSummary run_study(const ScenarioSpec& spec, const StudyOptions& opts) {
  if (opts.reps == 0) {
    throw Error(ErrorCode::kInvalidInput, "reps must be at least 1");
  }
  if (opts.B == 0) {
    throw Error(ErrorCode::kInvalidInput, "B must be at least 1");
  }
  const auto started = std::chrono::steady_clock::now();

  auto replicate = [&](std::size_t rep) {
    ReplicateRecord rec;
    try {
      Rng rng = make_rng(opts.seed, Stream::kSimulation, rep);
      const Dataset data = draw_joint(spec, opts.n, rng);
      BootstrapOptions bo;
      bo.B = opts.B;
      bo.seed = child_seed(opts.seed, Stream::kBootstrap, rep);
      bo.threads = 1;
      bo.fit = opts.fit;
      const auto [report, boot] = bootstrap_test(data, spec.outcome,
                                                 opts.level, bo);
      rec.ok = true;
      rec.t_n = report.t_n;
      rec.sigma_hat = report.sigma_hat;
      rec.plugin_p = report.plugin_p;
      rec.plugin_reject = report.plugin_reject;
      rec.boot_p = boot.boot_p;
      rec.q_star = boot.q_star;
      rec.sigma2_boot = boot.sigma2_boot_diag;
      rec.boot_reject = boot.reject;
      rec.n_boot_failed = boot.n_failed;
    } catch (const Error& e) {
      rec.ok = false;
      rec.error = std::string(error_code_name(e.code())) + ": " + e.what();
    }
    return rec;
  };

  RejectionSummary sum;
  sum.scenario = spec;
  sum.options = opts;
  sum.records = parallel_map(opts.reps, opts.threads, replicate);

  std::size_t boot_hits = 0;
  std::size_t plugin_hits = 0;
  std::size_t plugin_ok = 0;
  for (const auto& r : sum.records) {
    if (!r.ok) {
      ++sum.failed;
      continue;
    }
    ++sum.completed;
    boot_hits += r.boot_reject ? 1 : 0;
    if (std::isnan(r.sigma_hat)) {
      ++sum.plugin_unavailable;
    } else {
      ++plugin_ok;
      plugin_hits += r.plugin_reject ? 1 : 0;
    }
  }
  sum.runtime = std::chrono::steady_clock::now() - started;
  if (static_cast<double>(sum.failed) > 0.1 * static_cast<double>(opts.reps)) {
    std::string first;
    for (const auto& r : sum.records)
      if (!r.ok) {
        first = r.error;
        break;
      }
    throw Error(ErrorCode::kStudyFailure,
                spec.name() + ": " + std::to_string(sum.failed) + " of " +
                    std::to_string(opts.reps) +
                    " replications failed (first: " + first + ")");
  }
  auto rate = [](std::size_t hits, std::size_t total) {
    return total == 0 ? std::nan("")
                      : static_cast<double>(hits) / static_cast<double>(total);
  };
  sum.boot_rate = rate(boot_hits, sum.completed);
  sum.plugin_rate = rate(plugin_hits, plugin_ok);
  sum.mc_se = std::sqrt(sum.boot_rate * (1.0 - sum.boot_rate) /
                        static_cast<double>(sum.completed));
  sum.plugin_mc_se = std::sqrt(sum.plugin_rate * (1.0 - sum.plugin_rate) /
                               static_cast<double>(plugin_ok));
  return sum;
}

nlohmann::json to_json(const RejectionSummary& s) {
  auto num = [](double v) -> nlohmann::json {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  };
  const auto& sc = s.scenario;
  nlohmann::json j;
  j["schema"] = "nmar-gof/1";
  j["kind"] = "rejection_summary";
  j["example"] = sc.example;
  j["scenario"] = roman(sc.scenario);
  j["family"] = family_name(sc.outcome.kind);
  j["parameters"] = {{"alpha", sc.alpha},   {"beta1", sc.beta1},
                     {"beta2", sc.beta2},   {"gamma", sc.gamma},
                     {"e", sc.e_label},     {"g", sc.g_label},
                     {"kappa", sc.kappa}};
  j["n"] = s.options.n;
  j["reps"] = s.options.reps;
  j["B"] = s.options.B;
  j["level"] = s.options.level;
  j["seed"] = s.options.seed;
  j["completed"] = s.completed;
  j["failed"] = s.failed;
  j["plugin_unavailable"] = s.plugin_unavailable;
  j["boot_rate"] = num(s.boot_rate);
  j["plugin_rate"] = num(s.plugin_rate);
  j["mc_se"] = num(s.mc_se);
  j["plugin_mc_se"] = num(s.plugin_mc_se);
  return j;
}

std::string format_table(std::span<const RejectionSummary> summaries) {
  std::map<std::pair<int, std::size_t>, std::map<int, const RejectionSummary*>>
      blocks;
  std::set<int> scenarios;
  for (const auto& s : summaries) {
    blocks[{s.scenario.example, s.options.n}][s.scenario.scenario] = &s;
    scenarios.insert(s.scenario.scenario);
  }
  std::ostringstream out;
  out << std::left << std::setw(10) << "Example" << std::setw(7) << "n"
      << std::setw(11) << "Method";
  for (int sc : scenarios) out << std::right << std::setw(8) << roman(sc);
  out << '\n';
  for (const auto& [key, row] : blocks) {
    for (int method = 0; method < 2; ++method) {
      out << std::left << std::setw(10)
          << (method == 0 ? std::to_string(key.first) : "")
          << std::setw(7) << (method == 0 ? std::to_string(key.second) : "")
          << std::setw(11) << (method == 0 ? "Bootstrap" : "Plug-in");
      for (int sc : scenarios) {
        auto it = row.find(sc);
        out << std::right << std::setw(8);
        if (it == row.end()) {
          out << "-";
          continue;
        }
        const double v = method == 0 ? it->second->boot_rate
                                     : it->second->plugin_rate;
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(3) << v;
        out << (std::isfinite(v) ? cell.str() : "NA");
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace nmargof
