#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "loadrec/rng.hpp"
#include "loadrec/transforms.hpp"

namespace loadrec {

// Minute-resolution active-power matrix: one row per node, one column per
// minute. Entries are kW; negative values are legal (PV export).
struct LoadMatrix {
  Matrix values;
  std::vector<std::string> node_ids;
  std::string start_time = "2016-01-01T00:00";
  int slot_minutes = 1;

  int nodes() const { return static_cast<int>(values.rows()); }
  int horizon() const { return static_cast<int>(values.cols()); }

  void validate() const {
    if (values.rows() < 1 || values.cols() < 1)
      throw ValidationError("LoadMatrix: need at least one node and one slot");
    if (!values.allFinite())
      throw ValidationError("LoadMatrix: entries must be finite");
    if (!node_ids.empty() &&
        node_ids.size() != static_cast<std::size_t>(values.rows()))
      throw ShapeError("LoadMatrix: node_ids length must match row count");
  }
};

// One observation window: per-node interval averages plus the minute-rate
// feeder aggregate, with entrywise error bounds for both.
struct MeasurementSet {
  Matrix Y;        // N x T_s meter averages (kW)
  Vector z;        // length-T aggregate (kW)
  Matrix Xi_y;     // N x T_s nonnegative bounds
  Vector xi_z;     // length-T nonnegative bounds
  int factor_r = 1;
  Matrix C;        // 1 x N aggregation row (all ones by default)

  int nodes() const { return static_cast<int>(Y.rows()); }
  int horizon() const { return static_cast<int>(z.size()); }

  void validate() const {
    const auto N = Y.rows();
    const auto T = z.size();
    if (factor_r < 1 || T % factor_r != 0)
      throw ValidationError("MeasurementSet: horizon must be divisible by factor_r");
    if (Y.cols() != T / factor_r)
      throw ShapeError("MeasurementSet: meter matrix must have T/r columns");
    if (Xi_y.rows() != N || Xi_y.cols() != Y.cols() || xi_z.size() != T)
      throw ShapeError("MeasurementSet: bound shapes must match measurements");
    if (C.rows() != 1 || C.cols() != N)
      throw ShapeError("MeasurementSet: aggregation map must be 1 x N");
    if (Xi_y.minCoeff() < 0.0 || xi_z.minCoeff() < 0.0)
      throw ValidationError("MeasurementSet: bounds must be nonnegative");
  }
};

// Instrument accuracy fractions (uniform error supports).
struct NoiseSpec {
  double meter_accuracy = 0.002;   // +-0.2%
  double pmu_accuracy = 0.0002;    // +-0.02%
  std::uint64_t seed = 0;

  void validate() const {
    if (meter_accuracy < 0.0 || meter_accuracy > 0.1 ||
        pmu_accuracy < 0.0 || pmu_accuracy > 0.1)
      throw ValidationError("NoiseSpec: accuracies must lie in [0, 0.1]");
  }
};

// The two recovered unknowns. Everything else (L, S, X, P) is derived.
struct Decomposition {
  Matrix K;  // differenced low-rank part
  Matrix D;  // sparse switching part

  Matrix X() const { return K + D; }
  Matrix P() const { return apply_cumsum(K + D); }
  Matrix L() const { return apply_cumsum(K); }
  Matrix S() const { return apply_cumsum(D); }
};

// Entrywise bounds from measured magnitudes: meter bounds proportional to
// |Y|; aggregate bounds transported through the differencing operator,
// |z|^T |W|, which for adjacent differences is |z_t| + |z_{t-1}|.
inline std::pair<Matrix, Vector> calibrate_bounds(const Matrix& Y, const Vector& z,
                                                  const NoiseSpec& noise,
                                                  double slack = 1.01) {
  if (slack < 1.0) throw ValidationError("calibrate_bounds: slack must be >= 1");
  noise.validate();
  Matrix Xi_y = slack * noise.meter_accuracy * Y.array().abs().matrix();
  Vector xi_z(z.size());
  for (Eigen::Index t = 0; t < z.size(); ++t) {
    double mag = std::abs(z(t)) + (t > 0 ? std::abs(z(t - 1)) : 0.0);
    xi_z(t) = slack * noise.pmu_accuracy * mag;
  }
  return {std::move(Xi_y), std::move(xi_z)};
}

// Noisy observations of a true load matrix: interval averages with uniform
// multiplicative meter error, minute aggregate with uniform PMU error.
// The noise is proportional to the clean value (instrument semantics); the
// bounds are proportional to the measured value, covered by `slack`.
inline MeasurementSet simulate_measurements(const LoadMatrix& P, int r,
                                            const NoiseSpec& noise,
                                            double slack = 1.01) {
  P.validate();
  noise.validate();
  const int T = P.horizon();
  if (r < 1 || T % r != 0)
    throw ValidationError("simulate_measurements: horizon must be divisible by r");

  MeasurementSet ms;
  ms.factor_r = r;
  ms.C = Matrix::Ones(1, P.nodes());

  const Matrix clean_y = apply_averaging(P.values, AveragingOperator(T, r));
  Rng rng_y(noise.seed, 11);
  ms.Y = clean_y;
  for (Eigen::Index j = 0; j < clean_y.cols(); ++j)
    for (Eigen::Index n = 0; n < clean_y.rows(); ++n)
      ms.Y(n, j) += rng_y.uniform(-1.0, 1.0) * noise.meter_accuracy *
                    std::abs(clean_y(n, j));

  const Matrix clean_z = ms.C * P.values;  // 1 x T
  Rng rng_z(noise.seed, 12);
  ms.z = clean_z.row(0).transpose();
  for (Eigen::Index t = 0; t < ms.z.size(); ++t)
    ms.z(t) += rng_z.uniform(-1.0, 1.0) * noise.pmu_accuracy *
               std::abs(clean_z(0, t));

  auto bounds = calibrate_bounds(ms.Y, ms.z, noise, slack);
  ms.Xi_y = std::move(bounds.first);
  ms.xi_z = std::move(bounds.second);
  ms.validate();
  return ms;
}

// Recovered minute-resolution load: (K + D) U with metadata supplied by the
// caller's context.
inline LoadMatrix compose_estimate(const Decomposition& dec) {
  if (dec.K.rows() != dec.D.rows() || dec.K.cols() != dec.D.cols())
    throw ShapeError("compose_estimate: K and D shapes must match");
  LoadMatrix out;
  out.values = dec.P();
  return out;
}

// Constraint residuals: meter family Y - (K+D)UA, aggregate family
// z^T W - 1^T (K+D). Feasibility means entrywise |residual| <= bound.
inline std::pair<Matrix, Vector> residuals(const Decomposition& dec,
                                           const MeasurementSet& ms) {
  ms.validate();
  const Matrix X = dec.X();
  if (X.rows() != ms.Y.rows() || X.cols() != ms.z.size())
    throw ShapeError("residuals: decomposition shape must match measurements");
  Matrix meter = ms.Y - apply_averaging(apply_cumsum(X),
                                        AveragingOperator(ms.horizon(), ms.factor_r));
  Matrix zrow = ms.z.transpose();  // 1 x T
  Matrix agg_row = apply_diff(zrow) - ms.C * X;
  Vector agg = agg_row.row(0).transpose();
  return {std::move(meter), std::move(agg)};
}

// Largest excess of |residual| over its bound across both families; zero for
// a feasible point.
inline double feasibility_violation(const Decomposition& dec,
                                    const MeasurementSet& ms) {
  auto [meter, agg] = residuals(dec, ms);
  double v1 = (meter.array().abs() - ms.Xi_y.array()).maxCoeff();
  double v2 = (agg.array().abs() - ms.xi_z.array()).maxCoeff();
  return std::max(0.0, std::max(v1, v2));
}

}  // namespace loadrec
