#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <tuple>
#include <utility>
#include <vector>

#include "loadrec/errors.hpp"
#include "loadrec/model.hpp"
#include "loadrec/prox.hpp"
#include "loadrec/transforms.hpp"

namespace loadrec {

struct SolverConfig {
  double lambda = 0.05;
  int max_iters = 30000;
  double eps_abs = 1e-6;
  double eps_rel = 1e-5;
  double rho = 1.0;
  double step_scale = 0.9;
  double support_abs = 0.01;  // kW
  double support_rel = 1e-3;
  // Feasibility acceptance tolerance. Negative means automatic:
  // 1e-6 times the largest measurement-bound entry.
  double feas_tol = -1.0;

  void validate() const {
    if (!(lambda > 0.0)) throw ValidationError("SolverConfig: lambda must be > 0");
    if (max_iters < 1) throw ValidationError("SolverConfig: max_iters must be >= 1");
    if (!(eps_abs > 0.0) || !(eps_rel > 0.0))
      throw ValidationError("SolverConfig: tolerances must be > 0");
    if (!(rho > 0.0)) throw ValidationError("SolverConfig: rho must be > 0");
    if (!(step_scale > 0.0) || step_scale > 1.0)
      throw ValidationError("SolverConfig: step_scale must lie in (0, 1]");
    if (support_abs < 0.0 || support_rel < 0.0)
      throw ValidationError("SolverConfig: support thresholds must be >= 0");
  }

  double resolved_feas_tol(const MeasurementSet& ms) const {
    if (feas_tol >= 0.0) return feas_tol;
    double scale = 0.0;
    if (ms.Xi_y.size() > 0) scale = ms.Xi_y.maxCoeff();
    if (ms.xi_z.size() > 0) scale = std::max(scale, ms.xi_z.maxCoeff());
    return 1e-6 * scale;
  }
};

// Sparsity weight scaled to the horizon, anchored so the 7-hour case
// (T = 420) gets 0.05.
inline double default_lambda(int T) {
  if (T < 1) throw ValidationError("default_lambda: T must be >= 1");
  return 0.05 * std::sqrt(420.0 / static_cast<double>(T));
}

// Index set where the switching component D may be nonzero.
struct SupportSet {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;

  int nodes() const { return static_cast<int>(mask.rows()); }
  int horizon() const { return static_cast<int>(mask.cols()); }
  int count() const { return static_cast<int>(mask.count()); }
  bool contains(int n, int t) const {
    return n >= 0 && t >= 0 && n < mask.rows() && t < mask.cols() && mask(n, t);
  }

  std::vector<std::pair<int, int>> entries() const {
    std::vector<std::pair<int, int>> out;
    for (int n = 0; n < mask.rows(); ++n)
      for (int t = 0; t < mask.cols(); ++t)
        if (mask(n, t)) out.emplace_back(n, t);
    return out;
  }

  static SupportSet empty(int N, int T) {
    if (N < 1 || T < 1) throw ValidationError("SupportSet: shape must be positive");
    SupportSet s;
    s.mask.setConstant(N, T, false);
    return s;
  }

  static SupportSet from_entries(int N, int T,
                                 const std::vector<std::pair<int, int>>& entries) {
    SupportSet s = empty(N, T);
    for (const auto& [n, t] : entries) {
      if (n < 0 || t < 0 || n >= N || t >= T)
        throw ValidationError("SupportSet: entry (" + std::to_string(n) + ", " +
                              std::to_string(t) + ") outside " + std::to_string(N) +
                              " x " + std::to_string(T));
      s.mask(n, t) = true;
    }
    return s;
  }
};

struct SolveReport {
  int iterations = 0;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  double objective = 0.0;
  double feasibility_violation = 0.0;
  bool converged = false;
  double wall_time = 0.0;  // seconds
  // Set by run_pipeline when the refinement stage failed to converge and
  // the Step-1 result was returned instead.
  bool used_step1_fallback = false;
  // Per-iteration merit diagnostic (expected non-increasing after burn-in).
  std::vector<double> merit_history;
};

// One row of the convergence trace stream.
struct IterationTrace {
  int iteration = 0;
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double feasibility_violation = 0.0;
};

inline SupportSet extract_support(const Matrix& D_hat, const SolverConfig& cfg) {
  const double peak = D_hat.size() > 0 ? D_hat.array().abs().maxCoeff() : 0.0;
  const double th = std::max(cfg.support_abs, cfg.support_rel * peak);
  SupportSet s;
  s.mask = D_hat.array().abs() > th;
  return s;
}

namespace detail {

// Constraint-block balance: the scaled measurement map has spectral norm
// equal to this constant. Chosen so the dual variables and primal iterates
// live at comparable magnitudes on desk-scale problems, which is where both
// residual families settle fastest.
inline constexpr double kBlockBalance = 10.0;

// Solver working frame. Data and primal variables are normalized by the
// largest measured magnitude, and the two constraint families are rescaled
// to a common operator norm; both transformations are undone on output.
struct Frame {
  AveragingOperator avg;
  Matrix C;        // aggregation row(s)
  double s_data;   // data magnitude scale
  double c1, c2;   // per-family operator scales
  Matrix Y1, R1;   // meter-box center/radius, frame units
  Matrix Y2, R2;   // aggregate-box center/radius, frame units
  double sigma;    // norm of the scaled per-family map

  Matrix fwd1(const Matrix& X) const {
    return apply_averaging(apply_cumsum(X), avg) / c1;
  }
  Matrix fwd2(const Matrix& X) const { return (C * X) / c2; }
  Matrix adj(const Matrix& W1, const Matrix& W2) const {
    return adjoint_cumsum(adjoint_averaging(W1, avg)) / c1 +
           C.transpose() * W2 / c2;
  }
};

inline Frame make_frame(const MeasurementSet& ms) {
  const int N = ms.nodes();
  const int T = ms.horizon();
  Frame f{AveragingOperator(T, ms.factor_r), ms.C, 1.0, 1.0, 1.0,
          Matrix(), Matrix(), Matrix(), Matrix(), 0.0};

  const Matrix z_row = ms.z.transpose();
  const Matrix ZW = apply_diff(z_row);
  double s = std::max(ms.Y.size() > 0 ? ms.Y.array().abs().maxCoeff() : 0.0,
                      ZW.size() > 0 ? ZW.array().abs().maxCoeff() : 0.0);
  f.s_data = s > 0.0 ? s : 1.0;

  const AveragingOperator& avg = f.avg;
  const double n1 = power_iteration_norm(
      [&avg](const Matrix& m) { return apply_averaging(apply_cumsum(m), avg); },
      [&avg](const Matrix& m) { return adjoint_cumsum(adjoint_averaging(m, avg)); },
      N, T);
  Eigen::JacobiSVD<Matrix> csvd(ms.C);
  const double n2 = csvd.singularValues().size() > 0 ? csvd.singularValues()(0) : 0.0;
  f.c1 = n1 / kBlockBalance;
  f.c2 = (n2 > 0.0 ? n2 : 1.0) / kBlockBalance;

  f.Y1 = ms.Y / (f.c1 * f.s_data);
  f.R1 = ms.Xi_y / (f.c1 * f.s_data);
  f.Y2 = ZW / (f.c2 * f.s_data);
  f.R2 = ms.xi_z.transpose() / (f.c2 * f.s_data);

  // Norm of the stacked map (K, D) -> (images of K + D), by power iteration
  // on the joint variable with a fixed-seed start.
  Rng rng(0x9e3779b97f4a7c15ULL);
  Matrix K(N, T), D(N, T);
  for (int j = 0; j < T; ++j)
    for (int i = 0; i < N; ++i) {
      K(i, j) = 2.0 * rng.uniform() - 1.0;
      D(i, j) = 2.0 * rng.uniform() - 1.0;
    }
  double nx = std::sqrt(K.squaredNorm() + D.squaredNorm());
  if (nx == 0.0) nx = 1.0;
  K /= nx;
  D /= nx;
  double value = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Matrix X = K + D;
    const Matrix g = f.adj(f.fwd1(X), f.fwd2(X));
    value = std::sqrt(2.0) * g.norm();  // image (g, g) of the joint adjoint
    if (value == 0.0) break;
    K = g / value;
    D = g / value;
  }
  f.sigma = std::sqrt(value);
  return f;
}

// Move X the short way back into the measurement boxes. Alternates an
// aggregate-family correction (per-minute shifts along the aggregation
// weights) with a meter-family correction (per-window per-house level
// shifts whose weighted house-sums are matched across windows so the
// aggregate family is disturbed as little as possible). Exact at points
// close to the boxes; returns the best achieved correction and its
// remaining violation, never a worse point than the input.
inline std::pair<Matrix, double> restore_feasibility(const Matrix& X0,
                                                     const MeasurementSet& ms,
                                                     int passes = 10) {
  const int N = static_cast<int>(X0.rows());
  const int T = static_cast<int>(X0.cols());
  const int r = ms.factor_r;
  const int Ts = T / r;
  const AveragingOperator avg(T, r);
  const Matrix z_row = ms.z.transpose();
  const Eigen::RowVectorXd ZW = apply_diff(z_row).row(0);
  const Eigen::RowVectorXd xi = ms.xi_z.transpose();
  const Matrix lo = ms.Y - ms.Xi_y;
  const Matrix hi = ms.Y + ms.Xi_y;
  const Eigen::RowVectorXd w = ms.C.row(0);
  const double wss = std::max(w.squaredNorm(), 1e-300);

  auto violation = [&](const Matrix& X) {
    const Matrix m = apply_averaging(apply_cumsum(X), avg);
    double v1 = ((ms.Y - m).array().abs() - ms.Xi_y.array()).maxCoeff();
    const Eigen::RowVectorXd s = w * X;
    double v2 = ((ZW - s).array().abs() - xi.array()).maxCoeff();
    return std::max(0.0, std::max(v1, v2));
  };

  Matrix X = X0;
  Matrix best_dX = Matrix::Zero(N, T);
  double best_viol = violation(X);

  for (int pass = 0; pass < passes; ++pass) {
    // Aggregate family: clamp each per-minute residual by shifting the
    // column along the aggregation weights.
    const Eigen::RowVectorXd s = w * X;
    for (int t = 0; t < T; ++t) {
      const double resid = ZW(t) - s(t);
      const double excess = resid - project_box_scalar(resid, -xi(t), xi(t));
      if (excess != 0.0) X.col(t) += w.transpose() * (excess / wss);
    }

    // Meter family: per-window level shifts c within [a, b], weighted
    // house-sums steered to a common value so the aggregate family only
    // moves at window boundaries (and not at all when the sums agree).
    const Matrix m = apply_averaging(apply_cumsum(X), avg);
    const Matrix a = lo - m;
    const Matrix b = hi - m;
    const Eigen::RowVectorXd Aj = w * a;  // weighted sum lower bound (w >= 0)
    const Eigen::RowVectorXd Bj = w * b;
    const double glo = Aj.maxCoeff();
    const double ghi = Bj.minCoeff();
    const double sg = glo <= ghi ? project_box_scalar(0.0, glo, ghi) : 0.0;

    Matrix c = Matrix::Zero(N, Ts).cwiseMax(a).cwiseMin(b);
    for (int j = 0; j < Ts; ++j) {
      const double sj = project_box_scalar(sg, Aj(j), Bj(j));
      double need = sj - w.dot(c.col(j));
      for (int fill = 0; fill < 2 && std::abs(need) > 1e-18; ++fill) {
        Vector room = need > 0.0 ? Vector(b.col(j) - c.col(j))
                                 : Vector(c.col(j) - a.col(j));
        const double tot = w.dot(room);
        if (tot <= 0.0) break;
        const double sign = need > 0.0 ? 1.0 : -1.0;
        for (int n = 0; n < N; ++n)
          c(n, j) += sign * std::min(room(n), std::abs(need) * room(n) / tot);
        need = sj - w.dot(c.col(j));
      }
    }
    // Realize the window levels as spikes at window starts.
    for (int j = 0; j < Ts; ++j)
      X.col(j * r) += (j == 0 ? c.col(0) : Vector(c.col(j) - c.col(j - 1)));

    const double v = violation(X);
    if (v < best_viol) {
      best_viol = v;
      best_dX = X - X0;
    }
    if (v <= 0.0) break;
  }
  return {std::move(best_dX), best_viol};
}

inline Vector gram_singular_values(const Matrix& M) { return singular_values(M); }

struct EngineOutput {
  Decomposition dec;   // raw kW, feasibility-restored
  Matrix Lam1, Lam2;   // duals in the solver frame (for warm reuse)
  SolveReport report;
};

// Linearized ADMM over (K, D) with auxiliary box variables for the two
// measurement families. Recovery mode (support == nullptr) soft-thresholds
// D; refinement mode projects D onto the support. The dual residual is the
// exact distance from -M^T Lambda to the objective's subdifferential, so a
// reported crossing is a genuine KKT certificate in any scaling of the
// constraints. Terminal feasibility restoration routes into D during
// recovery (K carries the structured part) and into K during refinement
// (D off the support must stay exactly zero).
inline EngineOutput run_splitting(const MeasurementSet& ms, const SolverConfig& cfg,
                                  const SupportSet* support,
                                  const Decomposition* warm,
                                  const Matrix* warm_Lam1, const Matrix* warm_Lam2,
                                  std::vector<IterationTrace>* trace) {
  const auto t_start = std::chrono::steady_clock::now();
  ms.validate();
  cfg.validate();
  const int N = ms.nodes();
  const int T = ms.horizon();
  if (support != nullptr &&
      (support->mask.rows() != N || support->mask.cols() != T))
    throw ShapeError("solver: support shape must match the measurement set");
  if (warm != nullptr && (warm->K.rows() != N || warm->K.cols() != T ||
                          warm->D.rows() != N || warm->D.cols() != T))
    throw ShapeError("solver: warm-start shape must match the measurement set");

  const Frame f = make_frame(ms);
  const double rho = cfg.rho;
  const double lip = 2.0 * f.sigma * f.sigma * 1.01;
  const double tau = cfg.step_scale / (rho * std::max(lip, 1e-300));
  const double feas_tol = cfg.resolved_feas_tol(ms);
  const double lam = cfg.lambda;

  Matrix K, D, Lam1, Lam2;
  if (warm != nullptr) {
    K = warm->K / f.s_data;
    D = warm->D / f.s_data;
    if (support != nullptr)
      D = support->mask.select(D, Matrix::Zero(N, T));
  } else {
    K = Matrix::Zero(N, T);
    D = Matrix::Zero(N, T);
  }
  if (warm_Lam1 != nullptr && warm_Lam2 != nullptr) {
    Lam1 = *warm_Lam1;
    Lam2 = *warm_Lam2;
  } else {
    Lam1 = Matrix::Zero(N, T / ms.factor_r);
    Lam2 = Matrix::Zero(f.Y2.rows(), T);
  }

  Matrix M1 = f.fwd1(K + D);
  Matrix M2 = f.fwd2(K + D);
  Matrix V1 = project_box(M1 + Lam1 / rho, f.Y1 - f.R1, f.Y1 + f.R1);
  Matrix V2 = project_box(M2 + Lam2 / rho, f.Y2 - f.R2, f.Y2 + f.R2);

  const double n_x = 2.0 * N * T;
  const double n_v = static_cast<double>(V1.size() + V2.size());
  const double floor = cfg.eps_abs * std::sqrt(n_x + n_v);

  SolveReport report;
  bool crossed = false;
  Matrix bestK = K, bestD = D;
  double best_score = std::numeric_limits<double>::infinity();
  double best_rn = report.primal_residual, best_dn = report.dual_residual;
  Matrix pdL1, pdL2;
  int it = 0;

  for (it = 1; it <= cfg.max_iters; ++it) {
    const Matrix G = f.adj(rho * (M1 - V1) + Lam1, rho * (M2 - V2) + Lam2);
    NuclearProxResult pk = prox_nuclear(K - tau * G, tau);
    Matrix Dn;
    if (support == nullptr)
      Dn = prox_l1(D - tau * G, tau * lam);
    else
      Dn = support->mask.select(D - tau * G, Matrix::Zero(N, T));

    const Matrix X = pk.value + Dn;
    Matrix M1n = f.fwd1(X);
    Matrix M2n = f.fwd2(X);
    Matrix V1n = project_box(M1n + Lam1 / rho, f.Y1 - f.R1, f.Y1 + f.R1);
    Matrix V2n = project_box(M2n + Lam2 / rho, f.Y2 - f.R2, f.Y2 + f.R2);
    Matrix Lam1n = Lam1 + rho * (M1n - V1n);
    Matrix Lam2n = Lam2 + rho * (M2n - V2n);

    // Merit: proximal-point step length of the regrouped iteration, pairing
    // the previous dual step with the current primal step.
    const Matrix dK = pk.value - K;
    const Matrix dD = Dn - D;
    const Matrix dM1 = M1n - M1;
    const Matrix dM2 = M2n - M2;
    if (pdL1.size() > 0) {
      const double merit2 =
          (dK.squaredNorm() + dD.squaredNorm()) / tau +
          2.0 * (dM1.cwiseProduct(pdL1).sum() + dM2.cwiseProduct(pdL2).sum()) +
          (pdL1.squaredNorm() + pdL2.squaredNorm()) / rho;
      report.merit_history.push_back(std::sqrt(std::max(merit2, 0.0)));
    }
    pdL1 = Lam1n - Lam1;
    pdL2 = Lam2n - Lam2;

    K = pk.value;
    D = std::move(Dn);
    M1 = std::move(M1n);
    M2 = std::move(M2n);
    V1 = std::move(V1n);
    V2 = std::move(V2n);
    Lam1 = std::move(Lam1n);
    Lam2 = std::move(Lam2n);

    // Primal residual and threshold.
    const double rn = std::sqrt((M1 - V1).squaredNorm() + (M2 - V2).squaredNorm());
    const double scale_p = std::max(std::sqrt(M1.squaredNorm() + M2.squaredNorm()),
                                    std::sqrt(V1.squaredNorm() + V2.squaredNorm()));
    const double eps_pri = floor + cfg.eps_rel * scale_p;

    // Dual residual: exact distance from the stationarity condition.
    const Matrix gK = f.adj(Lam1, Lam2);
    double dist2 = 0.0;
    if (support == nullptr) {
      for (int j = 0; j < T; ++j)
        for (int i = 0; i < N; ++i) {
          const double g = gK(i, j);
          const double d = D(i, j);
          const double e = d != 0.0 ? std::abs(g + lam * (d > 0.0 ? 1.0 : -1.0))
                                    : std::max(0.0, std::abs(g) - lam);
          dist2 += e * e;
        }
    } else {
      for (int j = 0; j < T; ++j)
        for (int i = 0; i < N; ++i)
          if (support->mask(i, j)) dist2 += gK(i, j) * gK(i, j);
    }
    if (pk.rank == 0) {
      const Vector sv = gram_singular_values(gK);
      for (int i = 0; i < sv.size(); ++i)
        dist2 += std::pow(std::max(0.0, sv(i) - 1.0), 2);
    } else {
      const Matrix H = gK + pk.left * pk.right.transpose();
      Matrix Hperp = H - pk.left * (pk.left.transpose() * H);
      Hperp -= (Hperp * pk.right) * pk.right.transpose();
      dist2 += (H - Hperp).squaredNorm();
      const Vector sv = gram_singular_values(Hperp);
      for (int i = 0; i < sv.size(); ++i)
        dist2 += std::pow(std::max(0.0, sv(i) - 1.0), 2);
    }
    const double dn = std::sqrt(dist2);
    const double eps_dua = floor + cfg.eps_rel * std::sqrt(2.0) * gK.norm();

    if (trace != nullptr) {
      const double viol_now =
          std::max(0.0,
                   std::max(((M1 - f.Y1).array().abs() - f.R1.array()).maxCoeff() *
                                f.c1,
                            ((M2 - f.Y2).array().abs() - f.R2.array()).maxCoeff() *
                                f.c2)) *
          f.s_data;
      trace->push_back({it, f.s_data * (pk.nuclear_norm + lam * D.array().abs().sum()),
                        rn, dn, viol_now});
    }

    if (rn + dn < best_score) {
      best_score = rn + dn;
      bestK = K;
      bestD = D;
      best_rn = rn;
      best_dn = dn;
    }
    if (rn <= eps_pri && dn <= eps_dua) {
      crossed = true;
      best_rn = rn;
      best_dn = dn;
      break;
    }
  }
  if (it > cfg.max_iters) it = cfg.max_iters;

  EngineOutput out;
  out.Lam1 = std::move(Lam1);
  out.Lam2 = std::move(Lam2);
  Matrix Kr = (crossed ? K : bestK) * f.s_data;
  Matrix Dr = (crossed ? D : bestD) * f.s_data;

  auto [dX, viol_after] = restore_feasibility(Kr + Dr, ms);
  (void)viol_after;
  if (support == nullptr)
    Dr += dX;
  else
    Kr += dX;

  out.dec.K = std::move(Kr);
  out.dec.D = std::move(Dr);
  report.iterations = it;
  report.primal_residual = best_rn;
  report.dual_residual = best_dn;
  report.feasibility_violation = feasibility_violation(out.dec, ms);
  report.converged = crossed && report.feasibility_violation <= feas_tol;
  report.objective = gram_singular_values(out.dec.K).sum() +
                     lam * out.dec.D.array().abs().sum();
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  out.report = std::move(report);
  return out;
}

}  // namespace detail

// Step 1: full recovery with the nuclear + weighted-L1 objective under the
// measurement boxes.
inline std::pair<Decomposition, SolveReport> solve_recovery(
    const MeasurementSet& ms, const SolverConfig& cfg,
    std::vector<IterationTrace>* trace = nullptr) {
  auto out = detail::run_splitting(ms, cfg, nullptr, nullptr, nullptr, nullptr, trace);
  return {std::move(out.dec), std::move(out.report)};
}

// Step 3: nuclear objective only, with D constrained to the given support
// (exactly zero elsewhere). `warm` seeds the primal iterates.
inline std::pair<Decomposition, SolveReport> solve_refinement(
    const MeasurementSet& ms, const SupportSet& support, const SolverConfig& cfg,
    const Decomposition* warm = nullptr,
    std::vector<IterationTrace>* trace = nullptr) {
  auto out = detail::run_splitting(ms, cfg, &support, warm, nullptr, nullptr, trace);
  return {std::move(out.dec), std::move(out.report)};
}

// Full pipeline: recover, read off the support of the switching component,
// re-solve with the support pinned, warm-starting the refinement from the
// Step-1 primal and dual iterates. If the refinement fails to converge the
// Step-1 result is returned with the fallback flag set.
inline std::tuple<Decomposition, SolveReport, SupportSet> run_pipeline(
    const MeasurementSet& ms, const SolverConfig& cfg,
    std::vector<IterationTrace>* trace = nullptr) {
  auto step1 = detail::run_splitting(ms, cfg, nullptr, nullptr, nullptr, nullptr, trace);
  SupportSet supp = extract_support(step1.dec.D, cfg);

  std::vector<IterationTrace> refine_trace;
  auto step3 = detail::run_splitting(ms, cfg, &supp, &step1.dec, &step1.Lam1,
                                     &step1.Lam2,
                                     trace != nullptr ? &refine_trace : nullptr);
  if (trace != nullptr) {
    const int offset = step1.report.iterations;
    for (auto rec : refine_trace) {
      rec.iteration += offset;
      trace->push_back(rec);
    }
  }

  if (step3.report.converged)
    return {std::move(step3.dec), std::move(step3.report), std::move(supp)};

  SolveReport rep = std::move(step1.report);
  rep.used_step1_fallback = true;
  return {std::move(step1.dec), std::move(rep), std::move(supp)};
}

}  // namespace loadrec
