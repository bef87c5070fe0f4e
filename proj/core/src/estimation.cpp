#include "nmargof/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "nmargof/design.hpp"
#include "nmargof/error.hpp"
#include "nmargof/model.hpp"

namespace nmargof {
namespace {

// Objective for the maximizer: value and derivatives return false outside
// the feasible region.
struct Objective {
  std::function<bool(const Eigen::VectorXd&, double&)> value;
  std::function<bool(const Eigen::VectorXd&, double&, Eigen::VectorXd&,
                     Eigen::MatrixXd&)>
      derivs;
};

struct NewtonResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd g;
  Eigen::MatrixXd hess;
  bool converged = false;
  bool ill_conditioned = false;
  int iterations = 0;
  std::string message;
};

NewtonResult maximize(const Objective& obj, Eigen::VectorXd x,
                      const FitOptions& opts) {
  NewtonResult res;
  double f = 0.0;
  Eigen::VectorXd g;
  Eigen::MatrixXd hess;
  if (!obj.derivs(x, f, g, hess)) {
    res.x = std::move(x);
    res.message = "objective not finite at the starting point";
    return res;
  }
  int stalls = 0;
  for (int iter = 0;; ++iter) {
    res.iterations = iter;
    if (g.lpNorm<Eigen::Infinity>() <= opts.tol_grad) {
      res.converged = true;
      break;
    }
    if (iter >= opts.max_iter) {
      res.message = "iteration cap reached";
      break;
    }

    Eigen::VectorXd dir;
    bool newton = false;
    const Eigen::MatrixXd neg = -hess;
    Eigen::LLT<Eigen::MatrixXd> llt(neg);
    if (llt.info() == Eigen::Success && llt.rcond() >= opts.min_rcond) {
      dir = llt.solve(g);
      newton = dir.allFinite() && g.dot(dir) > 0.0;
    }
    if (!newton) {
      res.ill_conditioned = true;
      dir = g / std::max(1.0, g.lpNorm<Eigen::Infinity>());
    }

    // Halve until feasible and not worse (Newton) or Armijo (gradient).
    const double slope = g.dot(dir);
    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial;
    double f_trial = 0.0;
    // Changes below summation roundoff count as no decrease.
    const double slack =
        64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
    for (int h = 0; h <= opts.max_halvings; ++h, step *= 0.5) {
      trial = x + step * dir;
      if (!obj.value(trial, f_trial)) continue;
      const bool ok = newton ? f_trial >= f - slack
                             : f_trial >= f + 1e-4 * step * slope - slack;
      if (ok) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      res.message = "line search failed";
      break;
    }
    const double delta = f_trial - f;
    x = std::move(trial);
    if (!obj.derivs(x, f, g, hess)) {
      res.message = "derivatives not finite after step";
      break;
    }
    if (std::abs(delta) <= opts.tol_loglik) {
      if (g.lpNorm<Eigen::Infinity>() <= opts.tol_grad) {
        res.iterations = iter + 1;
        res.converged = true;
        break;
      }
      if (++stalls >= 3) {
        res.iterations = iter + 1;
        res.message = "log-likelihood stalled above the score tolerance";
        break;
      }
    } else {
      stalls = 0;
    }
  }
  res.x = std::move(x);
  res.f = f;
  res.g = std::move(g);
  res.hess = std::move(hess);
  return res;
}

// Complete-case outcome fit: maximizes sum_{r=1} log f(y | x; xi).
Eigen::VectorXd fit_outcome(const Design& d, const FitOptions& opts) {
  const Eigen::Index q = d.out.cols();
  const Eigen::Index p = q + (d.has_aux ? 1 : 0);
  std::vector<Eigen::Index> obs;
  for (Eigen::Index i = 0; i < d.n(); ++i)
    if (d.r[i] != 0.0) obs.push_back(i);
  const auto n_obs = static_cast<Eigen::Index>(obs.size());
  Eigen::MatrixXd Z(n_obs, q);
  Eigen::VectorXd y(n_obs);
  for (Eigen::Index i = 0; i < n_obs; ++i) {
    Z.row(i) = d.out.row(obs[static_cast<std::size_t>(i)]);
    y[i] = d.y[obs[static_cast<std::size_t>(i)]];
  }

  Eigen::VectorXd xi = Eigen::VectorXd::Zero(p);
  const double ybar = y.mean();
  switch (d.kind) {
    case FamilyKind::kNormal: {
      // Least squares is the exact MLE; no iterations needed.
      xi.head(q) = Z.colPivHouseholderQr().solve(y);
      const double rss = (y - Z * xi.head(q)).squaredNorm();
      xi[q] = std::log(std::max(rss / static_cast<double>(n_obs), 1e-300));
      return xi;
    }
    case FamilyKind::kBernoulli: {
      const double pbar = std::clamp(ybar, 1e-3, 1.0 - 1e-3);
      xi[0] = std::log(pbar / (1.0 - pbar));
      break;
    }
    case FamilyKind::kGamma: {
      const double var = (y.array() - ybar).square().sum() /
                         std::max<double>(1.0, static_cast<double>(n_obs - 1));
      const double shape = var > 0.0 ? std::clamp(ybar * ybar / var, 1e-2, 1e4)
                                     : 1.0;
      xi[0] = std::log(ybar / shape);
      xi[q] = std::log(shape);
      break;
    }
  }

  const FamilyKind kind = d.kind;
  const bool aux = d.has_aux;
  Objective obj;
  obj.value = [&](const Eigen::VectorXd& v, double& f) {
    const Eigen::VectorXd nu = Z * v.head(q);
    const double s = aux ? v[q] : 0.0;
    f = 0.0;
    for (Eigen::Index i = 0; i < n_obs; ++i)
      f += kernel::log_density(kind, y[i], nu[i], s);
    return std::isfinite(f);
  };
  obj.derivs = [&](const Eigen::VectorXd& v, double& f, Eigen::VectorXd& g,
                   Eigen::MatrixXd& hess) {
    const Eigen::VectorXd nu = Z * v.head(q);
    const double s = aux ? v[q] : 0.0;
    Eigen::VectorXd g_nu(n_obs), g_s(n_obs), h_nn(n_obs), h_ns(n_obs),
        h_ss(n_obs);
    f = 0.0;
    for (Eigen::Index i = 0; i < n_obs; ++i) {
      const LocalDerivs ld = kernel::log_density_derivs(kind, y[i], nu[i], s);
      f += ld.value;
      g_nu[i] = ld.grad[1];
      g_s[i] = ld.grad[2];
      h_nn[i] = ld.hess[1][1];
      h_ns[i] = ld.hess[1][2];
      h_ss[i] = ld.hess[2][2];
    }
    g.resize(p);
    hess.setZero(p, p);
    g.head(q) = Z.transpose() * g_nu;
    hess.topLeftCorner(q, q) = Z.transpose() * (h_nn.asDiagonal() * Z);
    if (aux) {
      g[q] = g_s.sum();
      hess.block(0, q, q, 1) = Z.transpose() * h_ns;
      hess.block(q, 0, 1, q) = hess.block(0, q, q, 1).transpose();
      hess(q, q) = h_ss.sum();
    }
    return std::isfinite(f) && hess.allFinite();
  };
  NewtonResult nr = maximize(obj, xi, opts);
  return nr.x;
}

// Logistic regression of R on r(x) in the 1 / (1 + exp(alpha + beta r))
// orientation.
Eigen::VectorXd fit_response(const Design& d, const FitOptions& opts) {
  const auto& P = d.prop;
  const auto& r = d.r;
  Objective obj;
  obj.value = [&](const Eigen::VectorXd& v, double& f) {
    const Eigen::VectorXd eta = P * v;
    f = 0.0;
    for (Eigen::Index i = 0; i < d.n(); ++i)
      f -= kernel::softplus(r[i] != 0.0 ? eta[i] : -eta[i]);
    return std::isfinite(f);
  };
  obj.derivs = [&](const Eigen::VectorXd& v, double& f, Eigen::VectorXd& g,
                   Eigen::MatrixXd& hess) {
    const Eigen::VectorXd eta = P * v;
    Eigen::VectorXd resid(d.n()), w(d.n());
    f = 0.0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      f -= kernel::softplus(r[i] != 0.0 ? eta[i] : -eta[i]);
      const double pi = 1.0 / (1.0 + std::exp(eta[i]));
      resid[i] = pi - r[i];
      w[i] = -pi * (1.0 - pi);
    }
    g = P.transpose() * resid;
    hess = P.transpose() * (w.asDiagonal() * P);
    return std::isfinite(f);
  };
  Eigen::VectorXd start = Eigen::VectorXd::Zero(P.cols());
  const double rbar = std::clamp(r.mean(), 1e-3, 1.0 - 1e-3);
  start[0] = std::log((1.0 - rbar) / rbar);
  return maximize(obj, start, opts).x;
}

Eigen::VectorXd staged_start(const Design& d, const FitOptions& opts) {
  const Eigen::VectorXd xi = fit_outcome(d, opts);
  const Eigen::VectorXd ab = fit_response(d, opts);
  Eigen::VectorXd theta(d.n_params());
  theta.head(ab.size()) = ab;
  theta[ab.size()] = 0.0;
  theta.tail(xi.size()) = xi;
  return theta;
}

// Pulls gamma inside 0.9 x the feasible range of the current xi.
void pull_gamma_inside(const Design& d, Eigen::VectorXd& theta) {
  if (d.kind != FamilyKind::kGamma) return;
  const Eigen::Index m1 = d.prop.cols();
  const Eigen::VectorXd nu = d.out * theta.segment(m1 + 1, d.out.cols());
  const double hi = std::exp(-nu.maxCoeff());
  if (theta[m1] >= hi) theta[m1] = 0.9 * hi;
}

void throw_if_infeasible(const Likelihood& lik, const Eigen::VectorXd& theta) {
  const long row = lik.infeasible_row(theta);
  if (row >= 0) {
    throw Error(ErrorCode::kTiltDivergence,
                "moment-generating function diverges at row " +
                    std::to_string(row) + " (gamma = " +
                    std::to_string(theta[lik.design().prop.cols()]) + ")");
  }
}

}  // namespace

double log_likelihood(const Dataset& data, const Theta& theta,
                      const OutcomeFamily& fam) {
  const Design d = Design::build(data, fam);
  const Likelihood lik(d);
  const Eigen::VectorXd v = theta.pack();
  throw_if_infeasible(lik, v);
  double f = 0.0;
  lik.value(v, f);
  return f;
}

Eigen::VectorXd score(const Dataset& data, const Theta& theta,
                      const OutcomeFamily& fam) {
  const Design d = Design::build(data, fam);
  const Likelihood lik(d);
  const Eigen::VectorXd v = theta.pack();
  throw_if_infeasible(lik, v);
  double f = 0.0;
  Eigen::VectorXd g;
  lik.gradient(v, f, g);
  return g;
}

Eigen::MatrixXd hessian(const Dataset& data, const Theta& theta,
                        const OutcomeFamily& fam, HessianMethod method) {
  const Design d = Design::build(data, fam);
  const Likelihood lik(d);
  const Eigen::VectorXd v = theta.pack();
  throw_if_infeasible(lik, v);
  Eigen::MatrixXd hess;
  if (method == HessianMethod::kFiniteDifference) {
    lik.fd_hessian(v, hess);
  } else {
    double f = 0.0;
    Eigen::VectorXd g;
    lik.hessian(v, f, g, hess);
  }
  return hess;
}

FitResult fit_mle(const Dataset& data, const OutcomeFamily& fam,
                  const FitOptions& opts) {
  const Design d = Design::build(data, fam);
  const Eigen::Index k = d.n_params();
  const Eigen::Index n_obs = d.n_observed();
  if (n_obs == 0 || n_obs == d.n()) {
    throw Error(ErrorCode::kDegenerateDesign,
                n_obs == 0 ? "no outcome is observed"
                           : "every outcome is observed; the response model "
                             "is not identified");
  }
  if (d.n() < k) {
    throw Error(ErrorCode::kDegenerateDesign,
                "n = " + std::to_string(d.n()) + " is smaller than the " +
                    std::to_string(k) + " parameters");
  }
  const Likelihood lik(d);

  Eigen::VectorXd start;
  double f0 = 0.0;
  bool have_start = false;
  if (opts.start) {
    if (opts.start->size() != k) {
      throw Error(ErrorCode::kInvalidInput, "warm start has the wrong length");
    }
    start = opts.start->pack();
    pull_gamma_inside(d, start);
    have_start = start.allFinite() && lik.value(start, f0);
  }
  if (!have_start) {
    start = staged_start(d, opts);
    pull_gamma_inside(d, start);
    if (!start.allFinite() || !lik.value(start, f0)) {
      throw Error(ErrorCode::kInitialization,
                  "log-likelihood is not finite at the initial value");
    }
  }

  const Eigen::Index gi = d.prop.cols();
  if (opts.fixed_gamma) {
    start[gi] = *opts.fixed_gamma;
    if (!lik.value(start, f0)) {
      throw Error(ErrorCode::kInitialization,
                  "log-likelihood is not finite at the fixed gamma");
    }
  }

  Objective obj;
  obj.value = [&lik](const Eigen::VectorXd& v, double& f) {
    return lik.value(v, f);
  };
  if (opts.hessian == HessianMethod::kFiniteDifference) {
    obj.derivs = [&lik](const Eigen::VectorXd& v, double& f,
                        Eigen::VectorXd& g, Eigen::MatrixXd& hess) {
      return lik.gradient(v, f, g) && lik.fd_hessian(v, hess);
    };
  } else {
    obj.derivs = [&lik](const Eigen::VectorXd& v, double& f,
                        Eigen::VectorXd& g, Eigen::MatrixXd& hess) {
      return lik.hessian(v, f, g, hess);
    };
  }

  NewtonResult nr;
  if (opts.fixed_gamma) {
    // Optimize over the coordinates other than gamma.
    const double g0 = *opts.fixed_gamma;
    auto expand = [gi, g0, k](const Eigen::VectorXd& u) {
      Eigen::VectorXd v(k);
      v.head(gi) = u.head(gi);
      v[gi] = g0;
      v.tail(k - gi - 1) = u.tail(k - gi - 1);
      return v;
    };
    auto reduce = [gi, k](const Eigen::VectorXd& v) {
      Eigen::VectorXd u(k - 1);
      u.head(gi) = v.head(gi);
      u.tail(k - gi - 1) = v.tail(k - gi - 1);
      return u;
    };
    Objective sub;
    sub.value = [&](const Eigen::VectorXd& u, double& f) {
      return obj.value(expand(u), f);
    };
    sub.derivs = [&](const Eigen::VectorXd& u, double& f, Eigen::VectorXd& g,
                     Eigen::MatrixXd& hess) {
      Eigen::VectorXd gf;
      Eigen::MatrixXd hf;
      if (!obj.derivs(expand(u), f, gf, hf)) return false;
      g = reduce(gf);
      hess.resize(k - 1, k - 1);
      for (Eigen::Index j = 0; j < k - 1; ++j) {
        const Eigen::Index jj = j < gi ? j : j + 1;
        hess.col(j) = reduce(hf.col(jj));
      }
      return true;
    };
    nr = maximize(sub, reduce(start), opts);
    nr.x = expand(nr.x);
  } else {
    nr = maximize(obj, start, opts);
  }

  FitResult fit;
  fit.n = static_cast<std::size_t>(d.n());
  fit.theta_hat = Theta::unpack(nr.x, d.m());
  fit.loglik = nr.f;
  fit.loglik_init = f0;
  fit.iterations = nr.iterations;
  fit.ill_conditioned = nr.ill_conditioned;
  fit.message = nr.message;
  fit.score_inf_norm =
      nr.g.size() > 0 ? nr.g.lpNorm<Eigen::Infinity>()
                      : std::numeric_limits<double>::infinity();
  fit.converged = nr.converged && fit.score_inf_norm <= opts.tol_grad;

  const auto nd = static_cast<double>(d.n());
  const Eigen::Index kf = k - (opts.fixed_gamma ? 1 : 0);
  if (nr.hess.rows() == kf) {
    Eigen::MatrixXd info = -nr.hess / nd;
    info = 0.5 * (info + info.transpose()).eval();
    Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(kf, kf, std::nan(""));
    Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
    if (lu.isInvertible() && lu.rcond() >= opts.min_rcond) {
      cov = lu.inverse() / nd;
      cov = 0.5 * (cov + cov.transpose()).eval();
    } else {
      fit.ill_conditioned = true;
    }
    if (opts.fixed_gamma) {
      // Re-insert the held coordinate.
      fit.info_matrix = Eigen::MatrixXd::Zero(k, k);
      fit.cov = Eigen::MatrixXd::Zero(k, k);
      for (Eigen::Index a = 0; a < kf; ++a) {
        for (Eigen::Index b = 0; b < kf; ++b) {
          const Eigen::Index aa = a < gi ? a : a + 1;
          const Eigen::Index bb = b < gi ? b : b + 1;
          fit.info_matrix(aa, bb) = info(a, b);
          fit.cov(aa, bb) = cov(a, b);
        }
      }
    } else {
      fit.info_matrix = std::move(info);
      fit.cov = std::move(cov);
    }
    fit.se = fit.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    if (!fit.cov.allFinite())
      fit.se = Eigen::VectorXd::Constant(k, std::nan(""));
  } else {
    fit.info_matrix = Eigen::MatrixXd::Constant(k, k, std::nan(""));
    fit.cov = fit.info_matrix;
    fit.se = Eigen::VectorXd::Constant(k, std::nan(""));
  }
  return fit;
}

}  // namespace nmargof
