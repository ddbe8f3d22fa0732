#pragma once

// Primal-dual interior-point solver for small conic programs
//
//   minimize    c'x
//   subject to  A x = b
//               G x + s = h,   s in K
//
// where K is a product of a nonnegative orthant and second-order cones
// {(u0, u1) : u0 >= |u1|}. Mehrotra predictor-corrector steps with
// Nesterov-Todd scaling; the Newton system is reduced to the normal
// equations G' W^-2 G and a dense Schur complement on the equality rows.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "jmest/errors.hpp"

namespace jmest::conic {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct ConeDims {
  Index nonneg = 0;
  std::vector<Index> soc;

  Index total() const {
    Index t = nonneg;
    for (Index q : soc) t += q;
    return t;
  }
  /// Degree of the cone: one per orthant coordinate and one per SOC block.
  Index degree() const { return nonneg + static_cast<Index>(soc.size()); }
};

struct Problem {
  VectorXd c;
  SparseRows A;
  VectorXd b;
  SparseRows G;
  VectorXd h;
  ConeDims cones;
};

enum class Status { Optimal, MaxIterations, NumericalFailure };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::MaxIterations: return "max-iterations";
    case Status::NumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

struct Settings {
  int max_iterations = 100;
  double feastol = 1e-8;
  double abstol = 1e-10;
  double reltol = 1e-10;
  double step_fraction = 0.99;
  int refinement_steps = 3;
};

struct Solution {
  Status status = Status::NumericalFailure;
  VectorXd x, y, z, s;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
};

namespace detail {

/// Cone-wise operations on vectors laid out as [orthant | soc_1 | soc_2 ...].
class ConeOps {
 public:
  explicit ConeOps(const ConeDims& d) : dims_(d) {
    Index off = d.nonneg;
    for (Index q : d.soc) {
      if (q < 1) throw DomainError("second-order cone of dimension zero");
      offsets_.push_back(off);
      off += q;
    }
  }

  const ConeDims& dims() const { return dims_; }
  const std::vector<Index>& offsets() const { return offsets_; }

  VectorXd identity() const {
    VectorXd e = VectorXd::Zero(dims_.total());
    e.head(dims_.nonneg).setOnes();
    for (Index off : offsets_) e[off] = 1.0;
    return e;
  }

  /// Smallest "eigenvalue": min_i u_i on the orthant, u0 - |u1| on each SOC.
  double min_eig(const VectorXd& u) const {
    double m = std::numeric_limits<double>::infinity();
    if (dims_.nonneg > 0) m = u.head(dims_.nonneg).minCoeff();
    for (std::size_t k = 0; k < offsets_.size(); ++k) {
      const Index q = dims_.soc[k];
      const double v = u[offsets_[k]] - u.segment(offsets_[k] + 1, q - 1).norm();
      m = std::min(m, v);
    }
    return m;
  }

  VectorXd jordan(const VectorXd& u, const VectorXd& v) const {
    VectorXd w(u.size());
    const Index l = dims_.nonneg;
    w.head(l) = u.head(l).cwiseProduct(v.head(l));
    for (std::size_t k = 0; k < offsets_.size(); ++k) {
      const Index o = offsets_[k], q = dims_.soc[k];
      w[o] = u.segment(o, q).dot(v.segment(o, q));
      w.segment(o + 1, q - 1) = u[o] * v.segment(o + 1, q - 1) + v[o] * u.segment(o + 1, q - 1);
    }
    return w;
  }

  /// Solves lambda o x = d.
  VectorXd jordan_solve(const VectorXd& lambda, const VectorXd& d) const {
    VectorXd x(d.size());
    const Index l = dims_.nonneg;
    x.head(l) = d.head(l).cwiseQuotient(lambda.head(l));
    for (std::size_t k = 0; k < offsets_.size(); ++k) {
      const Index o = offsets_[k], q = dims_.soc[k];
      const double l0 = lambda[o];
      const auto l1 = lambda.segment(o + 1, q - 1);
      const double det = l0 * l0 - l1.squaredNorm();
      const double x0 = (l0 * d[o] - l1.dot(d.segment(o + 1, q - 1))) / det;
      x[o] = x0;
      x.segment(o + 1, q - 1) = (d.segment(o + 1, q - 1) - x0 * l1) / l0;
    }
    return x;
  }

  /// Largest alpha with u + alpha du in K (infinity if unbounded).
  double max_step(const VectorXd& u, const VectorXd& du) const {
    double alpha = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < dims_.nonneg; ++i)
      if (du[i] < 0.0) alpha = std::min(alpha, -u[i] / du[i]);
    for (std::size_t k = 0; k < offsets_.size(); ++k) {
      const Index o = offsets_[k], q = dims_.soc[k];
      if (q == 1) {
        if (du[o] < 0.0) alpha = std::min(alpha, -u[o] / du[o]);
        continue;
      }
      const auto u1 = u.segment(o + 1, q - 1);
      const auto d1 = du.segment(o + 1, q - 1);
      const double a = du[o] * du[o] - d1.squaredNorm();
      const double b = u[o] * du[o] - u1.dot(d1);
      const double c = std::max(u[o] * u[o] - u1.squaredNorm(), 0.0);
      const double disc = b * b - a * c;
      if (disc < 0.0) continue;
      const double denom = -b + std::sqrt(disc);
      if (denom > 0.0) alpha = std::min(alpha, c / denom);
    }
    return alpha;
  }

 private:
  ConeDims dims_;
  std::vector<Index> offsets_;
};

/// Nesterov-Todd scaling W with W z = W^-1 s = lambda.
class Scaling {
 public:
  Scaling(const ConeOps& ops, const VectorXd& s, const VectorXd& z) : ops_(&ops) {
    const auto& d = ops.dims();
    const Index l = d.nonneg;
    w_lp_ = (s.head(l).cwiseQuotient(z.head(l))).cwiseSqrt();
    for (std::size_t k = 0; k < ops.offsets().size(); ++k) {
      const Index o = ops.offsets()[k], q = d.soc[k];
      const VectorXd sk = s.segment(o, q), zk = z.segment(o, q);
      const double sn = std::sqrt(std::max(sk[0] * sk[0] - sk.tail(q - 1).squaredNorm(), 0.0));
      const double zn = std::sqrt(std::max(zk[0] * zk[0] - zk.tail(q - 1).squaredNorm(), 0.0));
      if (!(sn > 0.0) || !(zn > 0.0)) throw SolverIndeterminate("iterate left the cone interior");
      const VectorXd sb = sk / sn, zb = zk / zn;
      const double gamma = std::sqrt(std::max((1.0 + sb.dot(zb)) / 2.0, 0.0));
      VectorXd wb(q);
      wb[0] = (sb[0] + zb[0]) / (2.0 * gamma);
      wb.tail(q - 1) = (sb.tail(q - 1) - zb.tail(q - 1)) / (2.0 * gamma);
      soc_w_.push_back(wb);
      soc_eta_.push_back(std::sqrt(sn / zn));
    }
  }

  /// W v (inverse = false) or W^-1 v (inverse = true).
  VectorXd apply(const VectorXd& v, bool inverse = false) const {
    VectorXd out(v.size());
    const auto& d = ops_->dims();
    const Index l = d.nonneg;
    if (inverse) out.head(l) = v.head(l).cwiseQuotient(w_lp_);
    else out.head(l) = v.head(l).cwiseProduct(w_lp_);
    for (std::size_t k = 0; k < soc_w_.size(); ++k) {
      const Index o = ops_->offsets()[k], q = d.soc[k];
      const VectorXd& w = soc_w_[k];
      const double sgn = inverse ? -1.0 : 1.0;
      const double eta = inverse ? 1.0 / soc_eta_[k] : soc_eta_[k];
      const double v0 = v[o];
      const auto v1 = v.segment(o + 1, q - 1);
      const auto w1 = w.tail(q - 1);
      const double w1v1 = w1.dot(v1);
      out[o] = eta * (w[0] * v0 + sgn * w1v1);
      out.segment(o + 1, q - 1) = eta * (v1 + sgn * (v0 + sgn * w1v1 / (1.0 + w[0])) * w1);
    }
    return out;
  }

  /// Dense W^-2 block of SOC k.
  MatrixXd soc_inv_square(std::size_t k) const {
    const VectorXd& w = soc_w_[k];
    const Index q = w.size();
    VectorXd jw = -w;
    jw[0] = w[0];
    MatrixXd m = 2.0 * jw * jw.transpose();
    m(0, 0) -= 1.0;
    for (Index i = 1; i < q; ++i) m(i, i) += 1.0;
    return m / (soc_eta_[k] * soc_eta_[k]);
  }

  const VectorXd& lp_weights() const { return w_lp_; }

 private:
  const ConeOps* ops_;
  VectorXd w_lp_;
  std::vector<VectorXd> soc_w_;
  std::vector<double> soc_eta_;
};

/// Reduced KKT solver for
///   [0  A'  G'  ] [ux]   [bx]
///   [A  0   0   ] [uy] = [by]
///   [G  0  -W'W ] [uz]   [bz]
class KktSolver {
 public:
  KktSolver(const Problem& p, const ConeOps& ops) : p_(&p), ops_(&ops) {
    // Columns touched by each cone block, with the dense block of G.
    const auto& d = ops.dims();
    auto block_of = [&](Index row0, Index rows) {
      Block blk;
      blk.row0 = row0;
      std::vector<Index> cols;
      for (Index r = row0; r < row0 + rows; ++r)
        for (SparseRows::InnerIterator it(p.G, r); it; ++it) cols.push_back(it.col());
      std::sort(cols.begin(), cols.end());
      cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
      blk.cols = cols;
      blk.g = MatrixXd::Zero(rows, static_cast<Index>(cols.size()));
      for (Index r = row0; r < row0 + rows; ++r)
        for (SparseRows::InnerIterator it(p.G, r); it; ++it) {
          const auto pos = std::lower_bound(cols.begin(), cols.end(), it.col()) - cols.begin();
          blk.g(r - row0, pos) = it.value();
        }
      return blk;
    };
    for (Index r = 0; r < d.nonneg; ++r) lp_blocks_.push_back(block_of(r, 1));
    for (std::size_t k = 0; k < ops.offsets().size(); ++k) soc_blocks_.push_back(block_of(ops.offsets()[k], d.soc[k]));
    a_dense_ = MatrixXd(p.A);
  }

  void factor(const Scaling& w) {
    w_ = &w;
    const Index n = p_->c.size();
    MatrixXd h = MatrixXd::Zero(n, n);
    const VectorXd& wl = w.lp_weights();
    for (std::size_t r = 0; r < lp_blocks_.size(); ++r) {
      const auto& blk = lp_blocks_[r];
      const double dinv = 1.0 / (wl[static_cast<Index>(r)] * wl[static_cast<Index>(r)]);
      accumulate(h, blk, blk.g.transpose() * dinv * blk.g);
    }
    for (std::size_t k = 0; k < soc_blocks_.size(); ++k) {
      const auto& blk = soc_blocks_[k];
      accumulate(h, blk, blk.g.transpose() * w.soc_inv_square(k) * blk.g);
    }
    h.diagonal().array() += 1e-13 * h.diagonal().array().abs() + 1e-300;
    llt_.compute(h);
    if (llt_.info() != Eigen::Success) throw SolverIndeterminate("normal equations are not positive definite");
    if (a_dense_.rows() > 0) {
      hinv_at_ = llt_.solve(a_dense_.transpose());
      MatrixXd s = a_dense_ * hinv_at_;
      schur_.compute(s);
      if (schur_.info() != Eigen::Success) throw SolverIndeterminate("Schur complement is not positive definite");
    }
  }

  void solve(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& ux, VectorXd& uy, VectorXd& uz) const {
    solve_once(bx, by, bz, ux, uy, uz);
    for (int it = 0; it < refinement_; ++it) {
      // Residual of the unregularized system.
      const VectorXd rx = bx - (p_->A.transpose() * uy + p_->G.transpose() * uz);
      const VectorXd ry = by - p_->A * ux;
      const VectorXd rz = bz - (p_->G * ux - w_->apply(w_->apply(uz)));
      VectorXd cx, cy, cz;
      solve_once(rx, ry, rz, cx, cy, cz);
      ux += cx;
      uy += cy;
      uz += cz;
    }
  }

  void set_refinement(int r) { refinement_ = r; }

  /// W^-2 v, used to recover uz from ux.
  VectorXd inv_square(const VectorXd& v) const { return w_->apply(w_->apply(v, true), true); }

 private:
  struct Block {
    Index row0 = 0;
    std::vector<Index> cols;
    MatrixXd g;
  };

  static void accumulate(MatrixXd& h, const Block& blk, const MatrixXd& local) {
    for (std::size_t i = 0; i < blk.cols.size(); ++i)
      for (std::size_t j = 0; j < blk.cols.size(); ++j)
        h(blk.cols[i], blk.cols[j]) += local(static_cast<Index>(i), static_cast<Index>(j));
  }

  void solve_once(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& ux, VectorXd& uy, VectorXd& uz) const {
    const VectorXd r = bx + p_->G.transpose() * inv_square(bz);
    const VectorXd hr = llt_.solve(r);
    if (a_dense_.rows() > 0) {
      uy = schur_.solve(a_dense_ * hr - by);
      ux = hr - hinv_at_ * uy;
    } else {
      uy = VectorXd::Zero(0);
      ux = hr;
    }
    uz = inv_square(p_->G * ux - bz);
  }

  const Problem* p_;
  const ConeOps* ops_;
  const Scaling* w_ = nullptr;
  std::vector<Block> lp_blocks_, soc_blocks_;
  MatrixXd a_dense_, hinv_at_;
  Eigen::LLT<MatrixXd> llt_;
  Eigen::LDLT<MatrixXd> schur_;
  int refinement_ = 3;
};

/// Drops linearly dependent equality rows (rank-revealing QR on A').
inline void remove_dependent_rows(Problem& p) {
  if (p.A.rows() == 0) return;
  const MatrixXd at = MatrixXd(p.A).transpose();
  Eigen::ColPivHouseholderQR<MatrixXd> qr(at);
  qr.setThreshold(1e-12);
  const Index rank = qr.rank();
  if (rank == p.A.rows()) return;
  std::vector<Index> keep;
  for (Index k = 0; k < rank; ++k) keep.push_back(qr.colsPermutation().indices()[k]);
  std::sort(keep.begin(), keep.end());
  SparseRows a(static_cast<Index>(keep.size()), p.A.cols());
  std::vector<Eigen::Triplet<double>> trip;
  VectorXd b(static_cast<Index>(keep.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    for (SparseRows::InnerIterator it(p.A, keep[r]); it; ++it) trip.emplace_back(static_cast<Index>(r), it.col(), it.value());
    b[static_cast<Index>(r)] = p.b[keep[r]];
  }
  a.setFromTriplets(trip.begin(), trip.end());
  p.A = a;
  p.b = b;
}

}  // namespace detail

inline Solution solve(const Problem& input, const Settings& settings = {}) {
  const Index n = input.c.size();
  if (input.G.cols() != n || input.A.cols() != n) throw DimensionError("constraint matrices and objective differ in column count");
  if (input.G.rows() != input.h.size() || input.A.rows() != input.b.size()) throw DimensionError("right-hand side sizes do not match");
  if (input.cones.total() != input.G.rows()) throw DimensionError("cone dimensions do not cover the rows of G");

  Problem p = input;
  detail::remove_dependent_rows(p);
  const detail::ConeOps ops(p.cones);
  const double degree = static_cast<double>(p.cones.degree());
  const VectorXd e = ops.identity();

  Solution sol;
  const double resx0 = std::max(1.0, p.c.norm());
  const double resy0 = std::max(1.0, input.b.norm());
  const double resz0 = std::max(1.0, p.h.norm());

  detail::KktSolver kkt(p, ops);
  kkt.set_refinement(settings.refinement_steps);

  VectorXd x, y, z, s;
  // Iterate with the smallest max(pres, dres, gap), returned when the method fails.
  Solution best;
  double best_merit = std::numeric_limits<double>::infinity();
  auto fall_back = [&](Status st) {
    if (best_merit < std::numeric_limits<double>::infinity()) {
      const int iters = sol.iterations;
      sol = best;
      sol.iterations = iters;
    }
    sol.status = st;
  };
  try {
    // Least-squares starting points with W = I, shifted into the cone interior.
    detail::Scaling unit(ops, e, e);
    kkt.factor(unit);
    VectorXd ux, uy, uz;
    kkt.solve(VectorXd::Zero(n), p.b, p.h, ux, uy, uz);
    x = ux;
    s = -uz;
    kkt.solve(-p.c, VectorXd::Zero(p.b.size()), VectorXd::Zero(p.h.size()), ux, uy, uz);
    y = uy;
    z = uz;
    const double ts = -ops.min_eig(s), tz = -ops.min_eig(z);
    if (ts >= -1e-8 * std::max(1.0, s.norm())) s += (1.0 + std::max(ts, 0.0)) * e;
    if (tz >= -1e-8 * std::max(1.0, z.norm())) z += (1.0 + std::max(tz, 0.0)) * e;

    for (int iter = 0; iter <= settings.max_iterations; ++iter) {
      const VectorXd rx = p.A.transpose() * y + p.G.transpose() * z + p.c;
      const VectorXd ry = p.A * x - p.b;
      const VectorXd rz = p.G * x + s - p.h;
      const double gap = s.dot(z);
      const double pcost = p.c.dot(x);
      const double dcost = -p.b.dot(y) - p.h.dot(z);
      const double pres = std::max(ry.size() ? ry.norm() / resy0 : 0.0, rz.norm() / resz0);
      const double dres = rx.norm() / resx0;
      double relgap = std::numeric_limits<double>::infinity();
      if (pcost < 0.0) relgap = gap / -pcost;
      else if (dcost > 0.0) relgap = gap / dcost;

      sol.x = x;
      sol.y = y;
      sol.z = z;
      sol.s = s;
      sol.primal_objective = pcost;
      sol.dual_objective = dcost;
      sol.gap = gap;
      sol.primal_residual = pres;
      sol.dual_residual = dres;
      sol.iterations = iter;
      if (!std::isfinite(gap) || !std::isfinite(pres) || !std::isfinite(dres)) {
        fall_back(Status::NumericalFailure);
        break;
      }
      if (const double merit = std::max({pres, dres, gap}); merit < best_merit) {
        best_merit = merit;
        best = sol;
      }
      if (pres <= settings.feastol && dres <= settings.feastol && (gap <= settings.abstol || relgap <= settings.reltol)) {
        sol.status = Status::Optimal;
        break;
      }
      if (iter == settings.max_iterations) {
        fall_back(Status::MaxIterations);
        break;
      }

      detail::Scaling w(ops, s, z);
      const VectorXd lambda = w.apply(z);
      kkt.factor(w);
      const double mu = gap / degree;

      // Predictor.
      VectorXd dx, dy, dz;
      kkt.solve(-rx, -ry, -rz + s, dx, dy, dz);
      VectorXd ds = -s - w.apply(w.apply(dz));
      double alpha = std::min(1.0, std::min(ops.max_step(s, ds), ops.max_step(z, dz)));
      const double mu_aff = (s + alpha * ds).dot(z + alpha * dz) / degree;
      const double sigma = std::clamp(std::pow(std::max(mu_aff, 0.0) / mu, 3.0), 0.0, 1.0);

      // Corrector.
      VectorXd d = -ops.jordan(lambda, lambda) - ops.jordan(w.apply(ds, true), w.apply(dz)) + sigma * mu * e;
      const VectorXd ld = ops.jordan_solve(lambda, d);
      const VectorXd wld = w.apply(ld);
      kkt.solve(-rx, -ry, -rz - wld, dx, dy, dz);
      ds = wld - w.apply(w.apply(dz));
      alpha = std::min(ops.max_step(s, ds), ops.max_step(z, dz));
      alpha = std::min(1.0, settings.step_fraction * alpha);

      x += alpha * dx;
      y += alpha * dy;
      z += alpha * dz;
      s += alpha * ds;
    }
  } catch (const SolverIndeterminate&) {
    fall_back(Status::NumericalFailure);
  }
  return sol;
}

/// Incremental construction of a Problem from affine expressions.
class Builder {
 public:
  using Term = std::pair<Index, double>;

  /// An affine expression sum_k coeff_k x_{var_k} + constant.
  struct Affine {
    std::vector<Term> terms;
    double constant = 0.0;

    Affine& add(Index var, double coeff) {
      terms.emplace_back(var, coeff);
      return *this;
    }
    Affine& offset(double v) {
      constant += v;
      return *this;
    }
  };

  Index add_variable(double cost = 0.0) {
    cost_.push_back(cost);
    return static_cast<Index>(cost_.size()) - 1;
  }

  Index variables() const { return static_cast<Index>(cost_.size()); }

  void set_cost(Index var, double cost) { cost_[static_cast<std::size_t>(var)] = cost; }

  /// expr == 0
  void add_equality(const Affine& expr) {
    for (const auto& [v, c] : expr.terms) eq_.emplace_back(eq_rows_, v, c);
    eq_rhs_.push_back(-expr.constant);
    ++eq_rows_;
  }

  /// expr >= 0
  void add_nonnegative(const Affine& expr) { lp_.push_back(expr); }

  /// (expr_0, expr_1, ...) in the second-order cone.
  void add_soc(const std::vector<Affine>& exprs) { soc_.push_back(exprs); }

  Problem build() const {
    Problem p;
    const Index n = variables();
    p.c = Eigen::Map<const VectorXd>(cost_.data(), n);
    p.A.resize(eq_rows_, n);
    p.A.setFromTriplets(eq_.begin(), eq_.end());
    p.b = Eigen::Map<const VectorXd>(eq_rhs_.data(), static_cast<Index>(eq_rhs_.size()));
    std::vector<Eigen::Triplet<double>> g;
    std::vector<double> h;
    Index row = 0;
    auto emit = [&](const Affine& a) {
      // s = h - G x = constant + sum coeff x
      for (const auto& [v, c] : a.terms) g.emplace_back(row, v, -c);
      h.push_back(a.constant);
      ++row;
    };
    for (const auto& a : lp_) emit(a);
    p.cones.nonneg = static_cast<Index>(lp_.size());
    for (const auto& block : soc_) {
      for (const auto& a : block) emit(a);
      p.cones.soc.push_back(static_cast<Index>(block.size()));
    }
    p.G.resize(row, n);
    p.G.setFromTriplets(g.begin(), g.end());
    p.h = Eigen::Map<const VectorXd>(h.data(), row);
    return p;
  }

  /// Value of an affine expression at x.
  static double evaluate(const Affine& a, const VectorXd& x) {
    double v = a.constant;
    for (const auto& [var, c] : a.terms) v += c * x[var];
    return v;
  }

 private:
  std::vector<double> cost_;
  Index eq_rows_ = 0;
  std::vector<Eigen::Triplet<double>> eq_;
  std::vector<double> eq_rhs_;
  std::vector<Affine> lp_;
  std::vector<std::vector<Affine>> soc_;
};

}  // namespace jmest::conic
