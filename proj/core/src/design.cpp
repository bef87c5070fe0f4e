#include "nmargof/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nmargof/error.hpp"
#include "nmargof/model.hpp"

namespace nmargof {
namespace {

bool row_less(const Observation& a, const Observation& b) {
  if (a.r() != b.r()) return a.r() < b.r();
  if (a.y && b.y && *a.y != *b.y) return *a.y < *b.y;
  return std::lexicographical_compare(a.x.begin(), a.x.end(), b.x.begin(),
                                      b.x.end());
}

void check_outcome(FamilyKind kind, double y, std::size_t row) {
  const bool ok = kind == FamilyKind::kBernoulli ? (y == 0.0 || y == 1.0)
                  : kind == FamilyKind::kGamma   ? y > 0.0
                                                 : true;
  if (!ok) {
    std::ostringstream msg;
    msg << "outcome " << y << " at row " << row << " is outside the support of "
        << family_name(kind);
    throw Error(ErrorCode::kInvalidInput, msg.str());
  }
}

// Packed index of (j, k), j <= k, in the 4 x 4 local Hessian.
constexpr int tri(int j, int k) {
  constexpr int offset[4] = {0, 4, 7, 9};
  return offset[j] + (k - j);
}

}  // namespace

Eigen::Index Design::n_observed() const {
  return static_cast<Eigen::Index>(r.sum());
}

Design Design::build(const Dataset& data, const OutcomeFamily& fam) {
  data.validate();
  if (fam.n_coef != data.out_cols.size() + 1) {
    throw Error(ErrorCode::kInvalidInput,
                "outcome family was built for " +
                    std::to_string(fam.n_coef - 1) +
                    " covariates but the dataset declares " +
                    std::to_string(data.out_cols.size()));
  }
  const auto n = data.rows.size();
  Design d;
  d.kind = fam.kind;
  d.has_aux = fam.has_aux();
  d.source_row.resize(n);
  std::iota(d.source_row.begin(), d.source_row.end(), std::size_t{0});
  std::sort(d.source_row.begin(), d.source_row.end(),
            [&data](std::size_t i, std::size_t j) {
              return row_less(data.rows[i], data.rows[j]);
            });

  const auto ni = static_cast<Eigen::Index>(n);
  d.prop.resize(ni, static_cast<Eigen::Index>(data.prop_cols.size()) + 1);
  d.out.resize(ni, static_cast<Eigen::Index>(fam.n_coef));
  d.y.setZero(ni);
  d.r.setZero(ni);
  for (Eigen::Index i = 0; i < ni; ++i) {
    const auto src = d.source_row[static_cast<std::size_t>(i)];
    const auto& row = data.rows[src];
    d.prop(i, 0) = 1.0;
    for (std::size_t j = 0; j < data.prop_cols.size(); ++j) {
      d.prop(i, static_cast<Eigen::Index>(j) + 1) = row.x[data.prop_cols[j]];
    }
    d.out(i, 0) = 1.0;
    for (std::size_t j = 0; j < data.out_cols.size(); ++j) {
      d.out(i, static_cast<Eigen::Index>(j) + 1) = row.x[data.out_cols[j]];
    }
    if (row.y) {
      check_outcome(fam.kind, *row.y, src);
      d.y[i] = *row.y;
      d.r[i] = 1.0;
    }
  }
  return d;
}

struct Likelihood::Local {
  double f = 0.0;
  Eigen::VectorXd eta;
  Eigen::MatrixXd grad;  // n x 4 in (a, gamma, nu, s)
  Eigen::MatrixXd hess;  // n x 10, upper triangle of the local Hessian
  Eigen::MatrixXd deta;  // n x 4
};

bool Likelihood::evaluate(const Eigen::VectorXd& theta, int order,
                          Local& loc) const {
  const Eigen::Index n = d_.n();
  const Eigen::Index m1 = d_.prop.cols();
  const Eigen::Index q = d_.out.cols();
  const double gamma = theta[m1];
  const double s = d_.has_aux ? theta[theta.size() - 1] : 0.0;
  const Eigen::VectorXd a = d_.prop * theta.head(m1);
  const Eigen::VectorXd nu = d_.out * theta.segment(m1 + 1, q);

  loc.f = 0.0;
  loc.eta.resize(n);
  if (order >= 1) {
    loc.grad.resize(n, 4);
    loc.deta.resize(n, 4);
  }
  if (order >= 2) loc.hess.resize(n, 10);

  for (Eigen::Index i = 0; i < n; ++i) {
    if (!kernel::tilt_feasible(d_.kind, gamma, nu[i])) return false;
    const bool observed = d_.r[i] != 0.0;
    if (order == 0) {
      const double eta = a[i] + kernel::tilt(d_.kind, gamma, nu[i], s);
      loc.eta[i] = eta;
      loc.f += observed ? kernel::log_density(d_.kind, d_.y[i], nu[i], s) -
                              kernel::softplus(eta)
                        : -kernel::softplus(-eta);
      continue;
    }
    const LocalDerivs tilt = kernel::tilt_derivs(d_.kind, gamma, nu[i], s);
    const double eta = a[i] + tilt.value;
    loc.eta[i] = eta;
    const double pi = 1.0 / (1.0 + std::exp(eta));
    const double resid = pi - d_.r[i];
    const double deta[4] = {1.0, tilt.grad[0], tilt.grad[1], tilt.grad[2]};
    double lf_grad[4] = {0.0, 0.0, 0.0, 0.0};
    double lf_hess[4][4] = {};
    if (observed) {
      const LocalDerivs lf =
          kernel::log_density_derivs(d_.kind, d_.y[i], nu[i], s);
      loc.f += lf.value - kernel::softplus(eta);
      for (int j = 1; j < 4; ++j) {
        lf_grad[j] = lf.grad[j - 1];
        for (int k = 1; k < 4; ++k) lf_hess[j][k] = lf.hess[j - 1][k - 1];
      }
    } else {
      loc.f += -kernel::softplus(-eta);
    }
    for (int j = 0; j < 4; ++j) {
      loc.deta(i, j) = deta[j];
      loc.grad(i, j) = resid * deta[j] + lf_grad[j];
    }
    if (order >= 2) {
      const double curv = -pi * (1.0 - pi);
      for (int j = 0; j < 4; ++j) {
        for (int k = j; k < 4; ++k) {
          double v = curv * deta[j] * deta[k] + lf_hess[j][k];
          if (j > 0) v += resid * tilt.hess[j - 1][k - 1];
          loc.hess(i, tri(j, k)) = v;
        }
      }
    }
  }
  return true;
}

bool Likelihood::value(const Eigen::VectorXd& theta, double& f) const {
  Local loc;
  if (!evaluate(theta, 0, loc)) return false;
  f = loc.f;
  return std::isfinite(f);
}

namespace {

void assemble_gradient(const Design& d, const Eigen::MatrixXd& grad,
                       Eigen::VectorXd& g) {
  const Eigen::Index m1 = d.prop.cols();
  const Eigen::Index q = d.out.cols();
  g.resize(d.n_params());
  g.head(m1) = d.prop.transpose() * grad.col(0);
  g[m1] = grad.col(1).sum();
  g.segment(m1 + 1, q) = d.out.transpose() * grad.col(2);
  if (d.has_aux) g[g.size() - 1] = grad.col(3).sum();
}

}  // namespace

bool Likelihood::gradient(const Eigen::VectorXd& theta, double& f,
                          Eigen::VectorXd& g) const {
  Local loc;
  if (!evaluate(theta, 1, loc)) return false;
  f = loc.f;
  assemble_gradient(d_, loc.grad, g);
  return std::isfinite(f) && g.allFinite();
}

bool Likelihood::hessian(const Eigen::VectorXd& theta, double& f,
                         Eigen::VectorXd& g, Eigen::MatrixXd& hess) const {
  Local loc;
  if (!evaluate(theta, 2, loc)) return false;
  f = loc.f;
  assemble_gradient(d_, loc.grad, g);

  const Eigen::Index m1 = d_.prop.cols();
  const Eigen::Index q = d_.out.cols();
  const Eigen::Index k = d_.n_params();
  const Eigen::Index ig = m1;
  const Eigen::Index iz = m1 + 1;
  const Eigen::Index is = k - 1;
  const auto& P = d_.prop;
  const auto& Z = d_.out;
  const auto w = [&loc](int j, int l) { return loc.hess.col(tri(j, l)); };

  hess.setZero(k, k);
  hess.block(0, 0, m1, m1) = P.transpose() * (w(0, 0).asDiagonal() * P);
  hess.block(0, ig, m1, 1) = P.transpose() * w(0, 1);
  hess.block(0, iz, m1, q) = P.transpose() * (w(0, 2).asDiagonal() * Z);
  hess(ig, ig) = w(1, 1).sum();
  hess.block(iz, ig, q, 1) = Z.transpose() * w(1, 2);
  hess.block(iz, iz, q, q) = Z.transpose() * (w(2, 2).asDiagonal() * Z);
  if (d_.has_aux) {
    hess.block(0, is, m1, 1) = P.transpose() * w(0, 3);
    hess(ig, is) = w(1, 3).sum();
    hess.block(iz, is, q, 1) = Z.transpose() * w(2, 3);
    hess(is, is) = w(3, 3).sum();
  }
  hess.block(ig, 0, 1, m1) = hess.block(0, ig, m1, 1).transpose();
  hess.block(iz, 0, q, m1) = hess.block(0, iz, m1, q).transpose();
  hess.block(ig, iz, 1, q) = hess.block(iz, ig, q, 1).transpose();
  if (d_.has_aux) {
    hess.block(is, 0, 1, is) = hess.block(0, is, is, 1).transpose();
  }
  return std::isfinite(f) && hess.allFinite();
}

bool Likelihood::fd_hessian(const Eigen::VectorXd& theta,
                            Eigen::MatrixXd& hess) const {
  const Eigen::Index k = theta.size();
  hess.resize(k, k);
  double f0 = 0.0;
  Eigen::VectorXd g0;
  if (!gradient(theta, f0, g0)) return false;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double h = 1e-5 * (1.0 + std::abs(theta[j]));
    Eigen::VectorXd up = theta;
    Eigen::VectorXd down = theta;
    up[j] += h;
    down[j] -= h;
    double f = 0.0;
    Eigen::VectorXd gu;
    Eigen::VectorXd gd;
    const bool ok_up = gradient(up, f, gu);
    const bool ok_down = gradient(down, f, gd);
    if (ok_up && ok_down) {
      hess.col(j) = (gu - gd) / (2.0 * h);
    } else if (ok_down) {
      hess.col(j) = (g0 - gd) / h;
    } else if (ok_up) {
      hess.col(j) = (gu - g0) / h;
    } else {
      return false;
    }
  }
  hess = 0.5 * (hess + hess.transpose()).eval();
  return hess.allFinite();
}

long Likelihood::infeasible_row(const Eigen::VectorXd& theta) const {
  const Eigen::Index m1 = d_.prop.cols();
  const double gamma = theta[m1];
  const Eigen::VectorXd nu = d_.out * theta.segment(m1 + 1, d_.out.cols());
  long first = -1;
  for (Eigen::Index i = 0; i < d_.n(); ++i) {
    if (!kernel::tilt_feasible(d_.kind, gamma, nu[i])) {
      const auto src = static_cast<long>(d_.source_row[static_cast<std::size_t>(i)]);
      if (first < 0 || src < first) first = src;
    }
  }
  return first;
}

RowPieces Likelihood::pieces(const Eigen::VectorXd& theta) const {
  Local loc;
  if (!evaluate(theta, 1, loc)) {
    throw Error(ErrorCode::kTiltDivergence,
                "moment-generating function diverges at row " +
                    std::to_string(infeasible_row(theta)));
  }
  const Eigen::Index n = d_.n();
  const Eigen::Index m1 = d_.prop.cols();
  const Eigen::Index q = d_.out.cols();
  const Eigen::Index k = d_.n_params();
  RowPieces out;
  out.pi.resize(n);
  out.h.resize(n);
  out.psi.resize(n, k);
  out.dh.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = kernel::logistic_complement(loc.eta[i]);
    const int r = d_.r[i] != 0.0 ? 1 : 0;
    out.pi[i] = pi;
    out.h[i] = residual_h(pi, r);
    const double dh_dpi = 2.0 * (pi - r) - (1.0 - 2.0 * pi);
    const double scale = dh_dpi * (-pi * (1.0 - pi));
    out.psi.block(i, 0, 1, m1) = loc.grad(i, 0) * d_.prop.row(i);
    out.psi(i, m1) = loc.grad(i, 1);
    out.psi.block(i, m1 + 1, 1, q) = loc.grad(i, 2) * d_.out.row(i);
    out.dh.block(i, 0, 1, m1) = scale * d_.prop.row(i);
    out.dh(i, m1) = scale * loc.deta(i, 1);
    out.dh.block(i, m1 + 1, 1, q) = scale * loc.deta(i, 2) * d_.out.row(i);
    if (d_.has_aux) {
      out.psi(i, k - 1) = loc.grad(i, 3);
      out.dh(i, k - 1) = scale * loc.deta(i, 3);
    }
  }
  return out;
}

}  // namespace nmargof
