#include "evnet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "evnet/error.hpp"

namespace evnet::optim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Factorization of the active set for the Goldfarb-Idnani iteration. Recomputed from scratch on
// every change; the problems here are small enough that incremental Givens updates buy nothing.
struct ActiveFactor {
  Eigen::MatrixXd j;  // L^{-T} Q
  Eigen::MatrixXd r;  // q x q upper triangular
  int q = 0;
};

class GoldfarbIdnani {
 public:
  explicit GoldfarbIdnani(const DenseQp& qp) : qp_(qp) {
    n_ = static_cast<int>(qp.hessian.rows());
    me_ = static_cast<int>(qp.eq_normals.cols());
    mi_ = static_cast<int>(qp.ineq_normals.cols());
    if (qp.hessian.cols() != n_ || qp.linear.size() != n_ ||
        (me_ > 0 && qp.eq_normals.rows() != n_) || qp.eq_rhs.size() != me_ ||
        (mi_ > 0 && qp.ineq_normals.rows() != n_) || qp.ineq_rhs.size() != mi_) {
      throw ValidationError("dense QP: inconsistent dimensions");
    }
    llt_.compute(qp.hessian);
    if (llt_.info() != Eigen::Success) {
      throw ValidationError("dense QP: Hessian is not positive definite");
    }
    lower_ = llt_.matrixL();
  }

  QpSolution run() {
    QpSolution out;
    x_ = -llt_.solve(qp_.linear);
    active_.clear();
    u_.resize(0);
    refactor();

    for (int e = 0; e < me_; ++e) {
      if (!add_equality(e)) {
        out.feasible = false;
        out.x = x_;
        out.blocking_constraint = -1 - e;
        out.max_violation = max_violation(qp_, x_);
        return out;
      }
    }

    const int cap = 50 * (n_ + me_ + mi_) + 100;
    int iter = 0;
    while (true) {
      if (++iter > cap) throw ConvergenceError("dense QP: iteration cap reached");
      int p = most_violated();
      if (p < 0) break;
      if (!add_inequality(p, cap, iter)) {
        out.feasible = false;
        out.x = x_;
        out.blocking_constraint = p;
        out.max_violation = max_violation(qp_, x_);
        out.iterations = iter;
        return out;
      }
    }

    out.feasible = true;
    out.x = x_;
    out.eq_mult = Eigen::VectorXd::Zero(me_);
    out.ineq_mult = Eigen::VectorXd::Zero(mi_);
    for (std::size_t k = 0; k < active_.size(); ++k) {
      int c = active_[k];
      if (c < me_) {
        out.eq_mult(c) = u_(static_cast<Eigen::Index>(k));
      } else {
        out.ineq_mult(c - me_) = std::max(0.0, u_(static_cast<Eigen::Index>(k)));
      }
    }
    out.objective = 0.5 * x_.dot(qp_.hessian * x_) + qp_.linear.dot(x_);
    out.iterations = iter;
    out.max_violation = max_violation(qp_, x_);
    return out;
  }

 private:
  Eigen::VectorXd normal(int c) const {
    return c < me_ ? Eigen::VectorXd(qp_.eq_normals.col(c))
                   : Eigen::VectorXd(qp_.ineq_normals.col(c - me_));
  }
  double rhs(int c) const { return c < me_ ? qp_.eq_rhs(c) : qp_.ineq_rhs(c - me_); }
  double slack(int c) const { return normal(c).dot(x_) - rhs(c); }

  double feas_tol(int c) const {
    return 1e-10 * (1.0 + std::abs(rhs(c)) + normal(c).cwiseAbs().maxCoeff() * x_.cwiseAbs().maxCoeff());
  }

  void refactor() {
    factor_.q = static_cast<int>(active_.size());
    const int q = factor_.q;
    Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n_, n_);
    if (q == 0) {
      factor_.j = lower_.transpose().triangularView<Eigen::Upper>().solve(identity);
      factor_.r.resize(0, 0);
      return;
    }
    Eigen::MatrixXd nmat(n_, q);
    for (int k = 0; k < q; ++k) nmat.col(k) = normal(active_[static_cast<std::size_t>(k)]);
    Eigen::MatrixXd m = lower_.triangularView<Eigen::Lower>().solve(nmat);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    Eigen::MatrixXd qfull = qr.householderQ() * identity;
    factor_.r = qr.matrixQR().topRows(q).triangularView<Eigen::Upper>();
    factor_.j = lower_.transpose().triangularView<Eigen::Upper>().solve(qfull);
  }

  // z = J2 J2' n (primal direction), r = R^{-1} J1' n (change of active multipliers).
  // Returns false when n is (numerically) in the span of the active normals.
  bool directions(const Eigen::VectorXd& np, Eigen::VectorXd& z, Eigen::VectorXd& r) const {
    const int q = factor_.q;
    Eigen::VectorXd d = factor_.j.transpose() * np;
    Eigen::VectorXd d2 = d.tail(n_ - q);
    z = factor_.j.rightCols(n_ - q) * d2;
    if (q > 0) {
      r = factor_.r.triangularView<Eigen::Upper>().solve(d.head(q));
    } else {
      r.resize(0);
    }
    return d2.squaredNorm() > 1e-20 * std::max(d.squaredNorm(), 1e-300);
  }

  bool add_equality(int e) {
    Eigen::VectorXd np = normal(e);
    Eigen::VectorXd z, r;
    bool independent = directions(np, z, r);
    double s = slack(e);
    if (!independent) {
      return std::abs(s) <= feas_tol(e);  // redundant row, consistent or not
    }
    double t = -s / z.dot(np);
    x_ += t * z;
    Eigen::VectorXd u(u_.size() + 1);
    u.head(u_.size()) = u_ - t * r;
    u(u_.size()) = t;
    u_ = u;
    active_.push_back(e);
    refactor();
    return true;
  }

  int most_violated() const {
    int best = -1;
    double worst = 0.0;
    for (int i = 0; i < mi_; ++i) {
      int c = me_ + i;
      if (std::find(active_.begin(), active_.end(), c) != active_.end()) continue;
      double s = slack(c);
      double scale = feas_tol(c);
      if (s < -scale && s / scale < worst) {
        worst = s / scale;
        best = c;
      }
    }
    return best;
  }

  bool add_inequality(int p, int cap, int& iter) {
    Eigen::VectorXd np = normal(p);
    Eigen::VectorXd u_plus(u_.size() + 1);
    u_plus.head(u_.size()) = u_;
    u_plus(u_.size()) = 0.0;

    while (true) {
      if (++iter > cap) throw ConvergenceError("dense QP: iteration cap reached");
      Eigen::VectorXd z, r;
      bool independent = directions(np, z, r);

      // Partial step: largest t keeping active inequality multipliers non-negative.
      double t1 = kInf;
      int drop = -1;
      double rmax = r.size() > 0 ? r.cwiseAbs().maxCoeff() : 0.0;
      for (int k = 0; k < factor_.q; ++k) {
        if (active_[static_cast<std::size_t>(k)] < me_) continue;
        if (r(k) > 1e-12 * rmax) {
          double ratio = u_plus(k) / r(k);
          if (ratio < t1) {
            t1 = ratio;
            drop = k;
          }
        }
      }
      // Full step: makes constraint p active.
      double t2 = kInf;
      if (independent) t2 = -slack(p) / z.dot(np);

      double t = std::min(t1, t2);
      if (!std::isfinite(t)) return false;

      if (!std::isfinite(t2)) {
        u_plus.head(factor_.q) -= t * r;
        u_plus(factor_.q) += t;
        remove_active(drop, u_plus);
        continue;
      }

      x_ += t * z;
      u_plus.head(factor_.q) -= t * r;
      u_plus(factor_.q) += t;

      if (t2 <= t1) {
        active_.push_back(p);
        u_ = u_plus;
        refactor();
        return true;
      }
      remove_active(drop, u_plus);
    }
  }

  void remove_active(int k, Eigen::VectorXd& u_plus) {
    active_.erase(active_.begin() + k);
    Eigen::VectorXd shrunk(u_plus.size() - 1);
    for (Eigen::Index i = 0, o = 0; i < u_plus.size(); ++i) {
      if (i == k) continue;
      shrunk(o++) = u_plus(i);
    }
    u_plus = shrunk;
    refactor();
  }

  const DenseQp& qp_;
  int n_ = 0, me_ = 0, mi_ = 0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd lower_;
  Eigen::VectorXd x_;
  Eigen::VectorXd u_;
  std::vector<int> active_;
  ActiveFactor factor_;
};

double step_to_boundary(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
  }
  return alpha;
}

}  // namespace

QpSolution solve_strictly_convex_qp(const DenseQp& qp) { return GoldfarbIdnani(qp).run(); }

double max_violation(const DenseQp& qp, const Eigen::VectorXd& x) {
  double worst = 0.0;
  for (Eigen::Index e = 0; e < qp.eq_normals.cols(); ++e) {
    worst = std::max(worst, std::abs(qp.eq_normals.col(e).dot(x) - qp.eq_rhs(e)));
  }
  for (Eigen::Index i = 0; i < qp.ineq_normals.cols(); ++i) {
    worst = std::max(worst, qp.ineq_rhs(i) - qp.ineq_normals.col(i).dot(x));
  }
  return worst;
}

IpmSolution solve_convex_qp(const ConvexQp& qp, const IpmOptions& options) {
  const Eigen::Index n = qp.p.rows();
  const Eigen::Index me = qp.a.rows();
  const Eigen::Index mi = qp.g.rows();
  if (qp.p.cols() != n || qp.q.size() != n || (me > 0 && qp.a.cols() != n) || qp.b.size() != me ||
      (mi > 0 && qp.g.cols() != n) || qp.h.size() != mi) {
    throw ValidationError("convex QP: inconsistent dimensions");
  }

  IpmSolution sol;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(me);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(mi);
  Eigen::VectorXd s = (qp.h - qp.g * x).cwiseMax(1.0);

  const double q_scale = 1.0 + qp.q.cwiseAbs().maxCoeff();
  const double b_scale = 1.0 + (me > 0 ? qp.b.cwiseAbs().maxCoeff() : 0.0);
  const double h_scale = 1.0 + (mi > 0 ? qp.h.cwiseAbs().maxCoeff() : 0.0);
  const double reg = 1e-13;

  Eigen::MatrixXd kkt(n + me, n + me);
  for (int it = 0; it < options.max_iterations; ++it) {
    Eigen::VectorXd rd = qp.p * x + qp.q + qp.a.transpose() * y + qp.g.transpose() * z;
    Eigen::VectorXd rp = qp.a * x - qp.b;
    Eigen::VectorXd ri = qp.g * x + s - qp.h;
    double mu = mi > 0 ? s.dot(z) / static_cast<double>(mi) : 0.0;

    sol.dual_residual = rd.size() ? rd.cwiseAbs().maxCoeff() / q_scale : 0.0;
    double prim_eq = rp.size() ? rp.cwiseAbs().maxCoeff() / b_scale : 0.0;
    double prim_in = ri.size() ? ri.cwiseAbs().maxCoeff() / h_scale : 0.0;
    sol.primal_residual = std::max(prim_eq, prim_in);
    double obj = 0.5 * x.dot(qp.p * x) + qp.q.dot(x);
    sol.complementarity = mu / (1.0 + std::abs(obj));
    sol.iterations = it;
    if (sol.dual_residual <= options.tolerance && sol.primal_residual <= options.tolerance &&
        sol.complementarity <= options.tolerance) {
      sol.converged = true;
      break;
    }

    Eigen::VectorXd w = z.cwiseQuotient(s);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = qp.p + qp.g.transpose() * w.asDiagonal() * qp.g;
    kkt.topLeftCorner(n, n).diagonal().array() += reg;
    if (me > 0) {
      kkt.topRightCorner(n, me) = qp.a.transpose();
      kkt.bottomLeftCorner(me, n) = qp.a;
      kkt.bottomRightCorner(me, me).diagonal().array() -= reg;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu;
    Eigen::VectorXd dx, dy, dz, ds;
    auto solve = [&](const Eigen::VectorXd& rc) {
      Eigen::VectorXd tmp = (rc + z.cwiseProduct(ri)).cwiseQuotient(s);
      Eigen::VectorXd rhs(n + me);
      rhs.head(n) = -rd - qp.g.transpose() * tmp;
      if (me > 0) rhs.tail(me) = -rp;
      Eigen::VectorXd sol_vec = lu.solve(rhs);
      dx = sol_vec.head(n);
      dy = sol_vec.tail(me);
      dz = tmp + w.cwiseProduct(qp.g * dx);
      ds = -ri - qp.g * dx;
    };
    // Mehrotra predictor-corrector; returns the damped step length.
    auto step = [&]() {
      lu.compute(kkt);
      Eigen::VectorXd rc = -s.cwiseProduct(z);
      solve(rc);
      double alpha_aff = std::min(step_to_boundary(s, ds), step_to_boundary(z, dz));
      double mu_aff =
          mi > 0 ? (s + alpha_aff * ds).dot(z + alpha_aff * dz) / static_cast<double>(mi) : 0.0;
      double sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3.0) : 0.0;
      rc = -s.cwiseProduct(z) - ds.cwiseProduct(dz) + Eigen::VectorXd::Constant(mi, sigma * mu);
      solve(rc);
      double alpha = std::min(step_to_boundary(s, ds), step_to_boundary(z, dz));
      return std::min(1.0, 0.99 * alpha);
    };
    auto finite = [&](double alpha) {
      return std::isfinite(alpha) && dx.allFinite() && dz.allFinite() && ds.allFinite() &&
             (me == 0 || dy.allFinite());
    };

    double alpha = step();
    if (!finite(alpha)) {
      // When the optimal set is a face, the weights of every inactive row vanish together and
      // the system goes singular along it. Retry with a relative shift.
      kkt.topLeftCorner(n, n).diagonal().array() +=
          1e-12 * (n > 0 ? kkt.topLeftCorner(n, n).diagonal().maxCoeff() : 0.0);
      alpha = step();
      if (!finite(alpha)) break;
    }
    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
  }

  sol.x = x;
  sol.y = y;
  sol.z = z;
  sol.s = s;
  sol.objective = 0.5 * x.dot(qp.p * x) + qp.q.dot(x);
  return sol;
}

LpSolution maximize_lp(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                       const Eigen::VectorXd& c) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  if (b.size() != m || c.size() != n) throw ValidationError("LP: inconsistent dimensions");
  if (m > 0 && b.minCoeff() < 0.0) throw ValidationError("LP: right-hand side must be >= 0");

  // Tableau over [A I]; basis starts at the slacks.
  const Eigen::Index cols = n + m;
  Eigen::MatrixXd tab(m, cols);
  tab.leftCols(n) = a;
  tab.rightCols(m).setIdentity();
  Eigen::VectorXd rhs = b;
  Eigen::VectorXd cost = Eigen::VectorXd::Zero(cols);
  cost.head(n) = c;
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) basis[static_cast<std::size_t>(i)] = n + i;

  const double ctol = 1e-12 * (1.0 + (n > 0 ? c.cwiseAbs().maxCoeff() : 0.0));
  const double ptol = 1e-12 * (1.0 + (m > 0 && n > 0 ? a.cwiseAbs().maxCoeff() : 0.0));
  LpSolution out;
  const int cap = 100000;
  while (true) {
    if (out.pivots > cap) throw ConvergenceError("LP: pivot cap reached");
    // Reduced costs c_j - c_B' B^{-1} A_j, read off the tableau.
    Eigen::VectorXd cb(m);
    for (Eigen::Index i = 0; i < m; ++i) cb(i) = cost(basis[static_cast<std::size_t>(i)]);
    Eigen::VectorXd reduced = cost - tab.transpose() * cb;
    Eigen::Index enter = -1;
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (reduced(j) > ctol) {
        enter = j;  // Bland: lowest index
        break;
      }
    }
    if (enter < 0) break;

    Eigen::Index leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m; ++i) {
      if (tab(i, enter) > ptol) {
        double ratio = rhs(i) / tab(i, enter);
        if (ratio < best - 1e-15 ||
            (ratio <= best + 1e-15 && leave >= 0 &&
             basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
          best = ratio;
          leave = i;
        }
      }
    }
    if (leave < 0) {
      out.status = LpStatus::kUnbounded;
      return out;
    }
    double piv = tab(leave, enter);
    tab.row(leave) /= piv;
    rhs(leave) /= piv;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (i == leave) continue;
      double f = tab(i, enter);
      if (f == 0.0) continue;
      tab.row(i) -= f * tab.row(leave);
      rhs(i) -= f * rhs(leave);
    }
    basis[static_cast<std::size_t>(leave)] = enter;
    ++out.pivots;
  }

  // Re-solve from the final basis for clean primal and dual values.
  Eigen::MatrixXd full(m, cols);
  full.leftCols(n) = a;
  full.rightCols(m).setIdentity();
  Eigen::MatrixXd bmat(m, m);
  Eigen::VectorXd cb(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    bmat.col(i) = full.col(basis[static_cast<std::size_t>(i)]);
    cb(i) = cost(basis[static_cast<std::size_t>(i)]);
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(bmat);
  Eigen::VectorXd xb = m > 0 ? Eigen::VectorXd(lu.solve(b)) : Eigen::VectorXd();
  Eigen::VectorXd y = m > 0 ? Eigen::VectorXd(lu.transpose().solve(cb)) : Eigen::VectorXd();

  out.z = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::Index j = basis[static_cast<std::size_t>(i)];
    if (j < n) out.z(j) = std::max(0.0, xb(i));
  }
  out.dual = y.cwiseMax(0.0);
  out.objective = c.dot(out.z);
  out.status = LpStatus::kOptimal;
  return out;
}

}  // namespace evnet::optim
