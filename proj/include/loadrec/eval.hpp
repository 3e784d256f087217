#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>
#include <utility>
#include <vector>

#include "loadrec/errors.hpp"
#include "loadrec/synth.hpp"
#include "loadrec/transforms.hpp"

namespace loadrec {

struct RocPoint {
  double threshold_fraction = 0.0;
  double tp_rate = 0.0;
  double fp_rate = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // ordered by threshold, ascending
  double auc = 0.0;
};

struct MatrixMetrics {
  double p_rel_err = 0.0;
  double l_rel_err = 0.0;
  double d_rel_err = 0.0;
  double support_precision = 1.0;
  double support_recall = 1.0;
  int l_rank = 0;
};

// Advisory recoverability indicators: incoherence of the smooth component's
// singular subspaces, periodicity of the switching support, rank of the
// switching matrix. High coherence, periodic support, or low-rank switching
// all work against the decomposition.
struct ConditionDiagnostics {
  double left_coherence = 0.0;        // N * max squared entry, in [1, N]
  double right_coherence = 0.0;       // T * max squared entry, in [1, T]
  double support_autocorr_peak = 0.0; // |r(lag)|/r(0), lags >= 5
  int support_autocorr_lag = 0;
  int d_rank = 0;
};

// Threshold a recovered switching matrix into discrete events. An entry
// counts when its magnitude exceeds threshold_frac of the appliance rating;
// the sign gives the direction. Detections in the same house and direction
// closer than min_gap_min minutes collapse onto the largest-magnitude minute.
// Column 0 holds initial levels rather than in-window changes and is skipped.
inline EventSet detect_events(const Matrix& D_hat, double rating_kw,
                              double threshold_frac, int min_gap_min = 5) {
  if (rating_kw <= 0.0) throw ValidationError("detect_events: rating_kw must be > 0");
  if (threshold_frac <= 0.0 || threshold_frac > 2.0)
    throw ValidationError("detect_events: threshold_frac must lie in (0, 2]");
  if (min_gap_min < 0) throw ValidationError("detect_events: min_gap_min must be >= 0");
  const int N = static_cast<int>(D_hat.rows());
  const int T = static_cast<int>(D_hat.cols());
  const double cut = threshold_frac * rating_kw;
  EventSet out;
  for (int n = 0; n < N; ++n) {
    for (int dir : {+1, -1}) {
      // kept detections for this house/direction: (minute, magnitude)
      std::vector<std::pair<int, double>> kept;
      for (int t = 1; t < T; ++t) {
        const double v = D_hat(n, t);
        if (dir * v <= cut) continue;
        const double mag = std::abs(v);
        if (!kept.empty() && t - kept.back().first <= min_gap_min) {
          if (mag > kept.back().second) kept.back() = {t, mag};
        } else {
          kept.push_back({t, mag});
        }
      }
      for (const auto& [t, mag] : kept)
        out.push_back({n, t, mag, dir, EventKind::Other});
    }
  }
  std::sort(out.begin(), out.end(), [](const Event& a, const Event& b) {
    return std::tie(a.house, a.minute, a.direction) <
           std::tie(b.house, b.minute, b.direction);
  });
  return out;
}

namespace detail {

// Greedy nearest-time one-to-one matching between detections and truth,
// same house and direction, |dt| <= window. Returns the number of matches.
inline int match_events(const EventSet& detections, const EventSet& truth,
                        int match_window_min) {
  struct Cand {
    int dt, di, ti;
  };
  std::vector<Cand> cands;
  for (int i = 0; i < static_cast<int>(detections.size()); ++i) {
    const Event& d = detections[i];
    for (int j = 0; j < static_cast<int>(truth.size()); ++j) {
      const Event& g = truth[j];
      if (d.house != g.house || d.direction != g.direction) continue;
      const int dt = std::abs(d.minute - g.minute);
      if (dt <= match_window_min) cands.push_back({dt, i, j});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return std::tie(a.dt, a.di, a.ti) < std::tie(b.dt, b.di, b.ti);
  });
  std::vector<char> dused(detections.size(), 0), tused(truth.size(), 0);
  int matched = 0;
  for (const Cand& c : cands) {
    if (dused[c.di] || tused[c.ti]) continue;
    dused[c.di] = tused[c.ti] = 1;
    ++matched;
  }
  return matched;
}

}  // namespace detail

// Detection sweep -> ROC. Each sweep entry pairs a threshold fraction with
// the events detected at that threshold; thresholds must be strictly
// increasing. tp_rate = matched truth / |truth|. fp_rate divides unmatched
// detections by fp_denominator, which defaults (pass a non-positive value)
// to the non-event slot count N*T - |truth|. AUC is the trapezoid area of
// the (fp, tp) staircase with endpoints (0,0) and (1,1) appended.
inline RocCurve roc(const std::vector<std::pair<double, EventSet>>& detected_by_threshold,
                    const EventSet& truth, int match_window_min, int n_nodes,
                    int horizon_T, double fp_denominator = -1.0) {
  if (truth.empty())
    throw ValidationError("roc: empty truth set leaves tp_rate undefined");
  if (match_window_min < 0)
    throw ValidationError("roc: match_window_min must be >= 0");
  if (n_nodes < 1 || horizon_T < 1)
    throw ValidationError("roc: need n_nodes >= 1 and horizon_T >= 1");
  const double denom = fp_denominator > 0.0
                           ? fp_denominator
                           : static_cast<double>(n_nodes) * horizon_T -
                                 static_cast<double>(truth.size());
  if (denom <= 0.0) throw ValidationError("roc: fp denominator must be positive");
  RocCurve curve;
  double prev = -std::numeric_limits<double>::infinity();
  for (const auto& [frac, dets] : detected_by_threshold) {
    if (frac <= prev)
      throw ValidationError("roc: thresholds must be strictly increasing");
    prev = frac;
    const int matched = detail::match_events(dets, truth, match_window_min);
    RocPoint pt;
    pt.threshold_fraction = frac;
    pt.tp_rate = static_cast<double>(matched) / static_cast<double>(truth.size());
    pt.fp_rate = static_cast<double>(static_cast<int>(dets.size()) - matched) / denom;
    pt.fp_rate = std::clamp(pt.fp_rate, 0.0, 1.0);
    curve.points.push_back(pt);
  }
  std::vector<std::pair<double, double>> xy;
  xy.reserve(curve.points.size() + 2);
  xy.push_back({0.0, 0.0});
  for (const RocPoint& p : curve.points) xy.push_back({p.fp_rate, p.tp_rate});
  xy.push_back({1.0, 1.0});
  std::stable_sort(xy.begin(), xy.end());
  double auc = 0.0;
  for (std::size_t i = 1; i < xy.size(); ++i)
    auc += 0.5 * (xy[i].first - xy[i - 1].first) * (xy[i].second + xy[i - 1].second);
  curve.auc = auc;
  return curve;
}

// Runs detect_events over a threshold grid and reduces to a ROC curve.
inline RocCurve roc_sweep(const Matrix& D_hat, const EventSet& truth,
                          double rating_kw, const std::vector<double>& fractions,
                          int match_window_min = 2, int min_gap_min = 5,
                          double fp_denominator = -1.0) {
  std::vector<std::pair<double, EventSet>> sweep;
  sweep.reserve(fractions.size());
  for (double f : fractions)
    sweep.push_back({f, detect_events(D_hat, rating_kw, f, min_gap_min)});
  return roc(sweep, truth, match_window_min, static_cast<int>(D_hat.rows()),
             static_cast<int>(D_hat.cols()), fp_denominator);
}

// Default detection grid: 5% to 150% of the rating in 5% steps.
inline std::vector<double> default_threshold_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 30; ++i) g.push_back(0.05 * i);
  return g;
}

// |cosine| between the dominant temporal pattern of a load-domain matrix and
// a reference profile. The first right singular vector is computed on the
// short-side Gram problem, so the cost stays cubic in the house count.
// Invariant to sign and scale of both arguments.
inline double pattern_recovery_score(const Matrix& L_hat, const Vector& pv_truth) {
  if (L_hat.rows() == 0 || L_hat.cols() == 0)
    throw ValidationError("pattern_recovery_score: empty matrix");
  if (pv_truth.size() != L_hat.cols())
    throw ValidationError("pattern_recovery_score: profile length must match columns");
  const double mn = L_hat.norm();
  const double pn = pv_truth.norm();
  if (mn <= 0.0) throw ValidationError("pattern_recovery_score: zero matrix");
  if (pn <= 0.0) throw ValidationError("pattern_recovery_score: zero profile");
  const Matrix G = L_hat * L_hat.transpose();  // N x N
  Eigen::SelfAdjointEigenSolver<Matrix> eig(G);
  const Eigen::Index top = G.rows() - 1;
  const double ev = eig.eigenvalues()(top);
  if (ev <= 0.0) throw ValidationError("pattern_recovery_score: zero matrix");
  const Vector u1 = eig.eigenvectors().col(top);
  Vector v1 = L_hat.transpose() * u1;  // sigma_1 * right vector
  const double vn = v1.norm();
  if (vn <= 0.0) return 0.0;
  return std::abs(v1.dot(pv_truth)) / (vn * pn);
}

// Relative Frobenius errors plus switching-support agreement. Entries of
// magnitude above support_threshold_kw count as support. A zero-norm truth
// matrix switches the corresponding error to an absolute norm.
inline MatrixMetrics matrix_metrics(const Matrix& P_hat, const Matrix& P_true,
                                    const Matrix& L_hat, const Matrix& L_true,
                                    const Matrix& D_hat, const Matrix& D_true,
                                    double support_threshold_kw = 0.01) {
  const auto same = [](const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols();
  };
  if (!same(P_hat, P_true) || !same(L_hat, L_true) || !same(D_hat, D_true) ||
      !same(P_hat, L_hat) || !same(P_hat, D_hat))
    throw ValidationError("matrix_metrics: shape mismatch");
  const auto rel = [](const Matrix& est, const Matrix& tru) {
    const double tn = tru.norm();
    return tn > 0.0 ? (est - tru).norm() / tn : est.norm();
  };
  MatrixMetrics m;
  m.p_rel_err = rel(P_hat, P_true);
  m.l_rel_err = rel(L_hat, L_true);
  m.d_rel_err = rel(D_hat, D_true);
  int est_n = 0, tru_n = 0, both = 0;
  for (Eigen::Index j = 0; j < D_hat.cols(); ++j)
    for (Eigen::Index i = 0; i < D_hat.rows(); ++i) {
      const bool e = std::abs(D_hat(i, j)) > support_threshold_kw;
      const bool t = std::abs(D_true(i, j)) > support_threshold_kw;
      est_n += e;
      tru_n += t;
      both += e && t;
    }
  m.support_precision = est_n > 0 ? static_cast<double>(both) / est_n : 1.0;
  m.support_recall = tru_n > 0 ? static_cast<double>(both) / tru_n : 1.0;
  m.l_rank = numerical_rank(L_hat);
  return m;
}

// Sum of squared adjacent column differences: the energy a minute-level
// matrix carries above the sampling-average scale.
inline double high_frequency_energy(const Matrix& M) {
  double e = 0.0;
  for (Eigen::Index t = 1; t < M.cols(); ++t)
    e += (M.col(t) - M.col(t - 1)).squaredNorm();
  return e;
}

inline ConditionDiagnostics condition_diagnostics(const GroundTruth& gt) {
  ConditionDiagnostics d;
  const int N = static_cast<int>(gt.L_true.rows());
  const int T = static_cast<int>(gt.L_true.cols());
  const Matrix K_true = apply_diff(gt.L_true);
  // Coherence of the thin singular subspaces with the standard basis:
  // dimension times the largest squared singular-vector entry. The floor 1
  // is reached by flat vectors, the cap by a single spike.
  Eigen::BDCSVD<Matrix> svd(K_true, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector sv = svd.singularValues();
  int q = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-6 * sv(0)) ++q;
  q = std::max(q, 1);
  const double mu_u = svd.matrixU().leftCols(q).array().square().maxCoeff();
  const double mu_v = svd.matrixV().leftCols(q).array().square().maxCoeff();
  d.left_coherence = N * mu_u;
  d.right_coherence = T * mu_v;
  // Periodicity of the switching support: autocorrelation of the per-minute
  // count of active entries, searched over lags >= 5.
  const Matrix D_true = apply_diff(gt.S_true);
  Vector indicator = Vector::Zero(T);
  for (int t = 0; t < T; ++t)
    for (int n = 0; n < N; ++n)
      if (D_true(n, t) != 0.0) indicator(t) += 1.0;
  const Vector x = indicator.array() - indicator.mean();
  const double denom = x.squaredNorm();
  if (denom > 0.0) {
    for (int lag = 5; lag <= T / 2; ++lag) {
      double v = 0.0;
      for (int t = 0; t + lag < T; ++t) v += x(t) * x(t + lag);
      const double r = std::abs(v / denom);
      if (r > d.support_autocorr_peak) {
        d.support_autocorr_peak = r;
        d.support_autocorr_lag = lag;
      }
    }
  }
  d.d_rank = numerical_rank(D_true);
  return d;
}

}  // namespace loadrec
