#include "tsm/lp.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <fmt/format.h>

#include "tsm/error.hpp"

namespace tsm {

int LpProblem::add_var(double cost, double lo, double hi) {
  objective.push_back(cost);
  lower.push_back(lo);
  upper.push_back(hi);
  return num_vars++;
}

int LpProblem::add_row(LpRow row) {
  constraints.push_back(std::move(row));
  return static_cast<int>(constraints.size()) - 1;
}

std::string_view to_string(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal: return "Optimal";
    case LpStatus::Infeasible: return "Infeasible";
    case LpStatus::Unbounded: return "Unbounded";
  }
  return "Unknown";
}

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class VarState : unsigned char { Basic, AtLower, AtUpper, Free, Fixed };

// Column layout: [structural | one slack per row | artificials]. Row i reads
// a_i x + s_i (+ sign * art) = b_i, with the slack bounds encoding the sense.
class Simplex {
 public:
  Simplex(const LpProblem& problem, const LpOptions& options)
      : p_(problem), o_(options), m_(static_cast<int>(problem.constraints.size())),
        n_(problem.num_vars) {}

  LpSolution run();

 private:
  enum class Outcome { Optimal, Unbounded };

  void setup();
  void refactor();
  void compute_reduced_costs(const std::vector<double>& cost);
  Outcome iterate(const std::vector<double>& cost, int phase);
  int choose_entering() const;
  void pivot(int row, int col);
  void drive_out_artificials();
  double value(int j) const { return x_[static_cast<std::size_t>(j)]; }
  void sync_basic_values();
  Vector duals_for(const std::vector<double>& cost) const;
  void fill_solution(LpSolution& sol, const std::vector<double>& cost) const;

  const LpProblem& p_;
  LpOptions o_;
  int m_;
  int n_;
  int total_ = 0;
  int iterations_ = 0;
  int unbounded_col_ = -1;
  double unbounded_sign_ = 1.0;

  Matrix a_;  // original constraint matrix over all columns
  Eigen::SparseMatrix<double> a_sparse_;
  std::vector<int> pivot_nz_;  // scratch: nonzero columns of the pivot row
  std::vector<double> b_;
  std::vector<double> lo_;
  std::vector<double> hi_;
  std::vector<double> cost2_;  // phase-two costs
  std::vector<double> cost1_;  // phase-one costs
  std::vector<bool> artificial_;

  Matrix t_;  // B^{-1} A
  std::vector<double> beta_;
  std::vector<double> d_;
  std::vector<double> x_;  // nonbasic values (basic entries refreshed on demand)
  std::vector<int> head_;
  std::vector<VarState> state_;
  mutable Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
  bool bland_ = false;
  bool fresh_ = false;  // factorization matches the current basis
};

void Simplex::setup() {
  // Initial nonbasic point: every structural variable at a finite bound.
  std::vector<double> x0(static_cast<std::size_t>(n_), 0.0);
  std::vector<VarState> s0(static_cast<std::size_t>(n_), VarState::Free);
  for (int j = 0; j < n_; ++j) {
    const double lo = p_.lower[j], hi = p_.upper[j];
    if (lo > hi) {
      throw Error(ErrorCode::InvalidBounds, fmt::format("variable {} has lower > upper", j));
    }
    if (lo == hi) {
      x0[j] = lo;
      s0[j] = VarState::Fixed;
    } else if (std::isfinite(lo)) {
      x0[j] = lo;
      s0[j] = VarState::AtLower;
    } else if (std::isfinite(hi)) {
      x0[j] = hi;
      s0[j] = VarState::AtUpper;
    }
  }

  std::vector<double> residual(static_cast<std::size_t>(m_));
  std::vector<double> slo(static_cast<std::size_t>(m_)), shi(static_cast<std::size_t>(m_));
  for (int i = 0; i < m_; ++i) {
    const auto& row = p_.constraints[i];
    double r = row.rhs;
    for (auto [j, a] : row.terms) {
      if (j < 0 || j >= n_) {
        throw Error(ErrorCode::InvalidBounds, fmt::format("row {} references variable {}", i, j));
      }
      r -= a * x0[j];
    }
    residual[i] = r;
    switch (row.sense) {
      case Sense::LessEqual: slo[i] = 0.0; shi[i] = kInf; break;
      case Sense::GreaterEqual: slo[i] = -kInf; shi[i] = 0.0; break;
      case Sense::Equal: slo[i] = 0.0; shi[i] = 0.0; break;
    }
  }

  std::vector<int> art_row;
  std::vector<double> art_sign;
  std::vector<double> slack_value(static_cast<std::size_t>(m_));
  std::vector<bool> slack_basic(static_cast<std::size_t>(m_));
  for (int i = 0; i < m_; ++i) {
    const double r = residual[i];
    if (r >= slo[i] - o_.feasibility_tol && r <= shi[i] + o_.feasibility_tol) {
      slack_basic[i] = true;
      slack_value[i] = r;
    } else {
      const double sv = std::clamp(r, slo[i], shi[i]);
      slack_value[i] = sv;
      art_row.push_back(i);
      art_sign.push_back(r > sv ? 1.0 : -1.0);
    }
  }

  const int nart = static_cast<int>(art_row.size());
  total_ = n_ + m_ + nart;
  a_ = Matrix::Zero(m_, total_);
  b_.assign(static_cast<std::size_t>(m_), 0.0);
  for (int i = 0; i < m_; ++i) {
    for (auto [j, a] : p_.constraints[i].terms) a_(i, j) += a;
    a_(i, n_ + i) = 1.0;
    b_[i] = p_.constraints[i].rhs;
  }
  for (int k = 0; k < nart; ++k) a_(art_row[k], n_ + m_ + k) = art_sign[k];
  a_sparse_ = a_.sparseView();

  lo_.assign(static_cast<std::size_t>(total_), 0.0);
  hi_.assign(static_cast<std::size_t>(total_), kInf);
  cost2_.assign(static_cast<std::size_t>(total_), 0.0);
  cost1_.assign(static_cast<std::size_t>(total_), 0.0);
  artificial_.assign(static_cast<std::size_t>(total_), false);
  x_.assign(static_cast<std::size_t>(total_), 0.0);
  state_.assign(static_cast<std::size_t>(total_), VarState::AtLower);
  for (int j = 0; j < n_; ++j) {
    lo_[j] = p_.lower[j];
    hi_[j] = p_.upper[j];
    cost2_[j] = p_.objective[j];
    x_[j] = x0[j];
    state_[j] = s0[j];
  }
  for (int i = 0; i < m_; ++i) {
    const int j = n_ + i;
    lo_[j] = slo[i];
    hi_[j] = shi[i];
    x_[j] = slack_value[i];
    if (slo[i] == shi[i]) {
      state_[j] = VarState::Fixed;
    } else {
      state_[j] = slack_value[i] == slo[i] ? VarState::AtLower : VarState::AtUpper;
    }
  }
  for (int k = 0; k < nart; ++k) {
    const int j = n_ + m_ + k;
    artificial_[j] = true;
    cost1_[j] = 1.0;
  }

  head_.assign(static_cast<std::size_t>(m_), -1);
  beta_.assign(static_cast<std::size_t>(m_), 0.0);
  t_ = a_;
  for (int i = 0; i < m_; ++i) {
    if (slack_basic[i]) {
      head_[i] = n_ + i;
      state_[n_ + i] = VarState::Basic;
      beta_[i] = slack_value[i];
    }
  }
  for (int k = 0; k < nart; ++k) {
    const int i = art_row[k];
    const int j = n_ + m_ + k;
    head_[i] = j;
    state_[j] = VarState::Basic;
    beta_[i] = std::abs(residual[i] - slack_value[i]);
    if (art_sign[k] < 0) t_.row(i) *= -1.0;
  }
}

void Simplex::refactor() {
  if (m_ == 0 || fresh_) return;
  // Bases are mostly slack columns, so a sparse factorization is far cheaper
  // than a dense one at the sizes the clearing LPs reach.
  std::vector<Eigen::Triplet<double>> entries;
  for (int i = 0; i < m_; ++i) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(a_sparse_, head_[i]); it; ++it) {
      entries.emplace_back(static_cast<int>(it.row()), i, it.value());
    }
  }
  Eigen::SparseMatrix<double> basis(m_, m_);
  basis.setFromTriplets(entries.begin(), entries.end());
  lu_.compute(basis);
  if (lu_.info() != Eigen::Success) {
    throw Error(ErrorCode::NumericalFailure, "basis matrix became singular");
  }
  const Eigen::MatrixXd binv = lu_.solve(Eigen::MatrixXd::Identity(m_, m_));
  t_ = binv * a_sparse_;
  Vector rhs = Eigen::Map<const Vector>(b_.data(), m_);
  for (int j = 0; j < total_; ++j) {
    if (state_[j] == VarState::Basic || x_[j] == 0.0) continue;
    rhs -= a_.col(j) * x_[j];
  }
  Vector xb = lu_.solve(rhs);
  for (int i = 0; i < m_; ++i) {
    double v = xb(i);
    const int j = head_[i];
    const double snap = 1e-12 * (1.0 + std::abs(v));
    if (std::isfinite(lo_[j]) && std::abs(v - lo_[j]) <= snap) v = lo_[j];
    if (std::isfinite(hi_[j]) && std::abs(v - hi_[j]) <= snap) v = hi_[j];
    beta_[i] = v;
  }
  fresh_ = true;
}

void Simplex::compute_reduced_costs(const std::vector<double>& cost) {
  d_ = cost;
  for (int i = 0; i < m_; ++i) {
    const double cb = cost[head_[i]];
    if (cb == 0.0) continue;
    for (int j = 0; j < total_; ++j) d_[j] -= cb * t_(i, j);
  }
  for (int i = 0; i < m_; ++i) d_[head_[i]] = 0.0;
}

int Simplex::choose_entering() const {
  int best = -1;
  double best_score = 0.0;
  for (int j = 0; j < total_; ++j) {
    const double dj = d_[j];
    bool eligible = false;
    switch (state_[j]) {
      case VarState::AtLower: eligible = dj < -o_.optimality_tol; break;
      case VarState::AtUpper: eligible = dj > o_.optimality_tol; break;
      case VarState::Free: eligible = std::abs(dj) > o_.optimality_tol; break;
      default: break;
    }
    if (!eligible) continue;
    if (bland_) return j;
    if (std::abs(dj) > best_score) {
      best_score = std::abs(dj);
      best = j;
    }
  }
  return best;
}

void Simplex::pivot(int row, int col) {
  // Tableau rows are sparse in practice, so eliminate over the pivot row's
  // nonzeros only.
  const double piv = t_(row, col);
  double* prow = t_.row(row).data();
  pivot_nz_.clear();
  for (int j = 0; j < total_; ++j) {
    if (prow[j] != 0.0) {
      prow[j] /= piv;
      pivot_nz_.push_back(j);
    }
  }
  for (int i = 0; i < m_; ++i) {
    if (i == row) continue;
    double* r = t_.row(i).data();
    const double f = r[col];
    if (f == 0.0) continue;
    for (int j : pivot_nz_) r[j] -= f * prow[j];
    r[col] = 0.0;
  }
  const double dq = d_[col];
  if (dq != 0.0) {
    for (int j : pivot_nz_) d_[j] -= dq * prow[j];
  }
  d_[col] = 0.0;
  prow[col] = 1.0;
  fresh_ = false;
}

Simplex::Outcome Simplex::iterate(const std::vector<double>& cost, int phase) {
  int max_iter = o_.max_iterations > 0 ? o_.max_iterations : 200 * (m_ + n_) + 5000;
  const int refactor_interval = o_.refactor_every > 0 ? std::max(o_.refactor_every, m_) : m_;
  int degenerate_run = 0;
  int since_refactor = 0;
  int clean_checks = 0;
  bland_ = false;
  compute_reduced_costs(cost);

  for (;;) {
    int q = choose_entering();
    if (q < 0) {
      // Confirm optimality on a fresh factorization before declaring it.
      if (since_refactor == 0 || clean_checks > 3) return Outcome::Optimal;
      refactor();
      compute_reduced_costs(cost);
      since_refactor = 0;
      ++clean_checks;
      continue;
    }
    if (++iterations_ > max_iter) {
      throw Error(ErrorCode::NumericalFailure,
                  fmt::format("simplex exceeded {} iterations", max_iter));
    }

    const double sigma = (state_[q] == VarState::AtUpper || (state_[q] == VarState::Free && d_[q] > 0))
                             ? -1.0
                             : 1.0;
    // Ratio test, two passes: smallest step, then the largest pivot among ties.
    double step = kInf;
    if (std::isfinite(lo_[q]) && std::isfinite(hi_[q])) step = hi_[q] - lo_[q];
    bool flip = std::isfinite(step);
    for (int i = 0; i < m_; ++i) {
      const double alpha = sigma * t_(i, q);
      const int j = head_[i];
      double ratio = kInf;
      if (alpha > o_.pivot_tol && std::isfinite(lo_[j])) {
        ratio = std::max(0.0, beta_[i] - lo_[j]) / alpha;
      } else if (alpha < -o_.pivot_tol && std::isfinite(hi_[j])) {
        ratio = std::max(0.0, hi_[j] - beta_[i]) / -alpha;
      }
      if (ratio < step) {
        step = ratio;
        flip = false;
      }
    }
    if (!std::isfinite(step)) {
      unbounded_col_ = q;
      unbounded_sign_ = sigma;
      return Outcome::Unbounded;
    }
    int leave = -1;
    if (!flip) {
      const double slack = 1e-12 * (1.0 + step);
      double best_alpha = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double alpha = sigma * t_(i, q);
        const int j = head_[i];
        double ratio = kInf;
        if (alpha > o_.pivot_tol && std::isfinite(lo_[j])) {
          ratio = std::max(0.0, beta_[i] - lo_[j]) / alpha;
        } else if (alpha < -o_.pivot_tol && std::isfinite(hi_[j])) {
          ratio = std::max(0.0, hi_[j] - beta_[i]) / -alpha;
        }
        if (ratio > step + slack) continue;
        if (bland_) {
          if (leave < 0 || head_[i] < head_[leave]) leave = i;
        } else if (std::abs(alpha) > best_alpha) {
          best_alpha = std::abs(alpha);
          leave = i;
        }
      }
      step = std::max(0.0, step);
    }

    if (o_.trace) {
      *o_.trace << fmt::format("phase {} iter {:5d} enter {:5d} d={:+.6e} step={:.6e} {}\n", phase,
                               iterations_, q, d_[q], step,
                               flip ? std::string("bound-flip")
                                    : fmt::format("leave row {} (col {})", leave, head_[leave]));
    }

    for (int i = 0; i < m_; ++i) beta_[i] -= sigma * step * t_(i, q);
    if (flip) {
      x_[q] = sigma > 0 ? hi_[q] : lo_[q];
      fresh_ = false;
      state_[q] = sigma > 0 ? VarState::AtUpper : VarState::AtLower;
    } else {
      const int out = head_[leave];
      const double alpha = sigma * t_(leave, q);
      const bool to_lower = alpha > 0;
      x_[out] = to_lower ? lo_[out] : hi_[out];
      if (lo_[out] == hi_[out]) {
        state_[out] = VarState::Fixed;
      } else {
        state_[out] = to_lower ? VarState::AtLower : VarState::AtUpper;
      }
      const double entering_value = x_[q] + sigma * step;
      pivot(leave, q);
      head_[leave] = q;
      state_[q] = VarState::Basic;
      beta_[leave] = entering_value;
      ++since_refactor;
    }

    if (step <= 1e-12) {
      if (++degenerate_run > o_.degenerate_limit) bland_ = true;
    } else {
      degenerate_run = 0;
      bland_ = false;
    }
    if (since_refactor >= refactor_interval) {
      refactor();
      compute_reduced_costs(cost);
      since_refactor = 0;
    }
  }
}

void Simplex::drive_out_artificials() {
  for (int r = 0; r < m_; ++r) {
    if (!artificial_[head_[r]]) continue;
    int best = -1;
    double best_abs = o_.pivot_tol;
    for (int j = 0; j < n_ + m_; ++j) {
      if (state_[j] == VarState::Basic) continue;
      const double v = std::abs(t_(r, j));
      if (v > best_abs) {
        best_abs = v;
        best = j;
      }
    }
    if (best < 0) continue;  // redundant row: the artificial stays basic at zero
    const int out = head_[r];
    x_[out] = 0.0;
    state_[out] = VarState::Fixed;
    pivot(r, best);
    head_[r] = best;
    state_[best] = VarState::Basic;
    beta_[r] = x_[best];
  }
  for (int j = n_ + m_; j < total_; ++j) {
    hi_[j] = 0.0;
    if (state_[j] != VarState::Basic) {
      state_[j] = VarState::Fixed;
      x_[j] = 0.0;
    }
  }
}

void Simplex::sync_basic_values() {
  for (int i = 0; i < m_; ++i) x_[head_[i]] = beta_[i];
}

Vector Simplex::duals_for(const std::vector<double>& cost) const {
  if (m_ == 0) return Vector();
  Vector cb(m_);
  for (int i = 0; i < m_; ++i) cb(i) = cost[head_[i]];
  return lu_.transpose().solve(cb);
}

void Simplex::fill_solution(LpSolution& sol, const std::vector<double>& cost) const {
  sol.primal.assign(x_.begin(), x_.begin() + n_);
  const Vector y = duals_for(cost);
  sol.duals.assign(y.data(), y.data() + m_);
  sol.mu_lower.assign(static_cast<std::size_t>(n_), 0.0);
  sol.mu_upper.assign(static_cast<std::size_t>(n_), 0.0);
  sol.objective_value = 0.0;
  for (int j = 0; j < n_; ++j) {
    double dj = p_.objective[j];
    sol.objective_value += p_.objective[j] * x_[j];
    if (state_[j] == VarState::Basic) continue;
    for (int i = 0; i < m_; ++i) {
      const double a = a_(i, j);
      if (a != 0.0) dj -= y(i) * a;
    }
    if (dj > 0.0 && std::isfinite(lo_[j])) sol.mu_lower[j] = dj;
    if (dj < 0.0 && std::isfinite(hi_[j])) sol.mu_upper[j] = -dj;
  }
  sol.basis_degenerate = false;
  for (int i = 0; i < m_; ++i) {
    const int j = head_[i];
    const double tol = o_.feasibility_tol;
    if ((std::isfinite(lo_[j]) && std::abs(beta_[i] - lo_[j]) <= tol) ||
        (std::isfinite(hi_[j]) && std::abs(beta_[i] - hi_[j]) <= tol)) {
      sol.basis_degenerate = true;
    }
  }
}

LpSolution Simplex::run() {
  setup();
  LpSolution sol;

  const bool need_phase_one = total_ > n_ + m_;
  if (need_phase_one) {
    iterate(cost1_, 1);
    refactor();
    double infeasibility = 0.0;
    for (int i = 0; i < m_; ++i) {
      if (artificial_[head_[i]]) infeasibility += std::abs(beta_[i]);
    }
    if (infeasibility > o_.feasibility_tol) {
      sol.status = LpStatus::Infeasible;
      const Vector y = duals_for(cost1_);
      sol.farkas.assign(y.data(), y.data() + m_);
      sol.iterations = iterations_;
      sync_basic_values();
      sol.primal.assign(x_.begin(), x_.begin() + n_);
      return sol;
    }
    drive_out_artificials();
  }

  if (m_ > 0) refactor();
  if (iterate(cost2_, 2) == Outcome::Unbounded) {
    sol.status = LpStatus::Unbounded;
    sol.iterations = iterations_;
    sol.ray.assign(static_cast<std::size_t>(n_), 0.0);
    if (unbounded_col_ < n_) sol.ray[unbounded_col_] = unbounded_sign_;
    for (int i = 0; i < m_; ++i) {
      if (head_[i] < n_) sol.ray[head_[i]] = -unbounded_sign_ * t_(i, unbounded_col_);
    }
    sync_basic_values();
    sol.primal.assign(x_.begin(), x_.begin() + n_);
    return sol;
  }
  if (m_ > 0) refactor();
  sync_basic_values();
  sol.status = LpStatus::Optimal;
  sol.iterations = iterations_;
  fill_solution(sol, cost2_);
  return sol;
}

}  // namespace

LpSolution solve_lp(const LpProblem& problem, const LpOptions& options) {
  if (static_cast<int>(problem.objective.size()) != problem.num_vars ||
      static_cast<int>(problem.lower.size()) != problem.num_vars ||
      static_cast<int>(problem.upper.size()) != problem.num_vars) {
    throw Error(ErrorCode::InvalidBounds, "objective/bounds size does not match num_vars");
  }
  Simplex simplex(problem, options);
  return simplex.run();
}

}  // namespace tsm
