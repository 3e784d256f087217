#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "loadrec/errors.hpp"
#include "loadrec/model.hpp"
#include "loadrec/rng.hpp"
#include "loadrec/transforms.hpp"

namespace loadrec {

enum class EventKind { EV, HVAC, Other };

inline const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::EV: return "EV";
    case EventKind::HVAC: return "HVAC";
    default: return "OTHER";
  }
}

inline EventKind event_kind_from_name(const std::string& s) {
  if (s == "EV") return EventKind::EV;
  if (s == "HVAC") return EventKind::HVAC;
  if (s == "OTHER") return EventKind::Other;
  throw ValidationError("unknown event kind: " + s);
}

// A single appliance transition. `minute` is the column of the change matrix
// at which the jump occurs; a stop recorded at minute == horizon marks an
// event truncated by the end of the window (no in-matrix jump).
struct Event {
  int house = 0;
  int minute = 0;
  double magnitude = 0.0;
  int direction = +1;  // +1 turn-on, -1 turn-off
  EventKind kind = EventKind::Other;
};

using EventSet = std::vector<Event>;

struct ScenarioSpec {
  int n_houses = 30;
  int n_pv = 15;
  int n_ev = 6;
  int horizon_T = 420;
  std::pair<double, double> base_load_kw{0.3, 1.2};
  std::pair<double, double> pv_peak_kw{3.0, 7.0};
  std::pair<double, double> ev_power_kw{3.3, 6.6};
  std::pair<int, int> ev_duration_min{30, 180};
  std::pair<double, double> hvac_power_kw{2.0, 4.0};
  std::pair<int, int> hvac_period_min{20, 40};
  double hvac_duty = 0.5;
  bool hvac_enabled = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_houses < 1) throw ValidationError("ScenarioSpec: n_houses must be >= 1");
    if (n_pv < 0 || n_pv > n_houses)
      throw ValidationError("ScenarioSpec: need 0 <= n_pv <= n_houses");
    if (n_ev < 0 || n_ev > n_houses)
      throw ValidationError("ScenarioSpec: need 0 <= n_ev <= n_houses");
    if (horizon_T < 2) throw ValidationError("ScenarioSpec: horizon_T must be >= 2");
    auto check_range = [](double lo, double hi, const char* name) {
      if (lo < 0.0 || hi < lo)
        throw ValidationError(std::string("ScenarioSpec: bad range for ") + name);
    };
    check_range(base_load_kw.first, base_load_kw.second, "base_load_kw");
    check_range(pv_peak_kw.first, pv_peak_kw.second, "pv_peak_kw");
    check_range(ev_power_kw.first, ev_power_kw.second, "ev_power_kw");
    check_range(hvac_power_kw.first, hvac_power_kw.second, "hvac_power_kw");
    if (ev_duration_min.first < 1 || ev_duration_min.second < ev_duration_min.first)
      throw ValidationError("ScenarioSpec: bad range for ev_duration_min");
    if (hvac_period_min.first < 2 || hvac_period_min.second < hvac_period_min.first)
      throw ValidationError("ScenarioSpec: bad range for hvac_period_min");
    if (hvac_duty < 0.0 || hvac_duty > 1.0)
      throw ValidationError("ScenarioSpec: hvac_duty must lie in [0, 1]");
  }
};

struct GroundTruth {
  LoadMatrix P;
  Matrix L_true;
  Matrix S_true;
  EventSet events;
  // Normalized irradiance curve the PV component was built from (zero when
  // the scenario has no PV); kept for pattern-recovery scoring.
  Vector pv_profile;
};

// Snap to a 1/1024 kW grid so magnitudes survive text round trips exactly.
inline double quantize_kw(double x) { return std::round(x * 1024.0) / 1024.0; }

namespace detail {

inline Vector smooth_profile(Rng& rng, int T, double lo = 0.7, double hi = 1.3,
                             int n_bumps = 4) {
  Vector y(T);
  const double c0 = rng.uniform(-0.3, 0.3);
  const double c1 = rng.uniform(-0.3, 0.3);
  const double c2 = rng.uniform(-0.3, 0.3);
  for (int i = 0; i < T; ++i) {
    const double t = T > 1 ? static_cast<double>(i) / (T - 1) : 0.0;
    const double u = t - 0.5;
    y(i) = 1.0 + c0 * u + c1 * u * u + c2 * u * u * u;
  }
  for (int b = 0; b < n_bumps; ++b) {
    const double ctr = rng.uniform(0.0, 1.0);
    const double w = rng.uniform(0.05, 0.25);
    const double a = rng.uniform(-0.15, 0.15);
    for (int i = 0; i < T; ++i) {
      const double t = T > 1 ? static_cast<double>(i) / (T - 1) : 0.0;
      if (std::abs(t - ctr) < w) {
        const double c = std::cos(std::numbers::pi * (t - ctr) / (2.0 * w));
        y(i) += a * c * c;
      }
    }
  }
  const double ymin = y.minCoeff();
  const double ymax = y.maxCoeff();
  if (ymax > ymin)
    y = lo + (hi - lo) * (y.array() - ymin) / (ymax - ymin);
  else
    y.setConstant(lo);
  return y;
}

// Concave midday irradiance bell with small smooth wobble, normalized to
// peak 1.
inline Vector pv_curve(Rng& rng, int T) {
  Vector g(T);
  const double peak = rng.uniform(0.45, 0.6);
  const double width = rng.uniform(0.55, 0.7);
  for (int i = 0; i < T; ++i) {
    const double t = T > 1 ? static_cast<double>(i) / (T - 1) : 0.0;
    const double c = std::max(0.0, std::cos((t - peak) * std::numbers::pi / width));
    g(i) = std::pow(c, 1.5);
  }
  for (int b = 0; b < 3; ++b) {
    const double ctr = rng.uniform(0.2, 0.8);
    const double w = rng.uniform(0.04, 0.1);
    const double a = rng.uniform(-0.06, 0.06);
    for (int i = 0; i < T; ++i) {
      const double t = T > 1 ? static_cast<double>(i) / (T - 1) : 0.0;
      if (std::abs(t - ctr) < w) {
        const double c = std::cos(std::numbers::pi * (t - ctr) / (2.0 * w));
        g(i) += a * c * c;
      }
    }
  }
  g = g.cwiseMax(0.0);
  const double m = g.maxCoeff();
  if (m > 0.0) g /= m;
  return g;
}

// Largest absolute autocorrelation of a per-minute indicator at lags >= min_lag.
inline double autocorr_peak(const Vector& indicator, int min_lag = 5) {
  const int T = static_cast<int>(indicator.size());
  const Vector x = indicator.array() - indicator.mean();
  const double denom = x.squaredNorm();
  if (denom <= 0.0) return 0.0;
  double best = 0.0;
  for (int lag = min_lag; lag <= T / 2; ++lag) {
    double v = 0.0;
    for (int t = 0; t + lag < T; ++t) v += x(t) * x(t + lag);
    best = std::max(best, std::abs(v / denom));
  }
  return best;
}

// One rectangular EV charging session: start jump inside the horizon, stop
// jump at start+duration or a truncation marker at the horizon.
inline void place_ev(Rng& rng, Matrix& D, EventSet& events, int house, int T,
                     const ScenarioSpec& spec) {
  const double power = quantize_kw(
      rng.uniform(spec.ev_power_kw.first, spec.ev_power_kw.second));
  const int dur = static_cast<int>(rng.uniform_int(spec.ev_duration_min.first,
                                                   spec.ev_duration_min.second));
  const int start = static_cast<int>(rng.uniform_int(1, T - 2));
  const int stop = start + dur;
  D(house, start) += power;
  events.push_back({house, start, power, +1, EventKind::EV});
  if (stop < T) {
    D(house, stop) -= power;
    events.push_back({house, stop, power, -1, EventKind::EV});
  } else {
    // Session runs past the end of the window; record the stop at the
    // horizon so the pair stays visible to consumers.
    events.push_back({house, T, power, -1, EventKind::EV});
  }
}

// Draw EV placements until the per-minute event indicator has no
// autocorrelation structure at lags >= 5 (aperiodic by construction).
inline void place_evs_aperiodic(Rng& rng, Matrix& D, EventSet& events,
                                const ScenarioSpec& spec) {
  const int N = spec.n_houses;
  const int T = spec.horizon_T;
  for (int attempt = 0; attempt < 200; ++attempt) {
    Matrix D_try = Matrix::Zero(N, T);
    EventSet ev_try;
    const auto houses = rng.sample_without_replacement(N, spec.n_ev);
    for (int h : houses) place_ev(rng, D_try, ev_try, h, T, spec);
    Vector indicator = Vector::Zero(T);
    for (int t = 0; t < T; ++t)
      for (int n = 0; n < N; ++n)
        if (D_try(n, t) != 0.0) indicator(t) += 1.0;
    if (autocorr_peak(indicator) < 0.2 || spec.n_ev == 0) {
      D = std::move(D_try);
      events = std::move(ev_try);
      return;
    }
  }
  throw ValidationError(
      "generate: could not draw an aperiodic event placement in 200 attempts");
}

inline GroundTruth assemble(const ScenarioSpec& spec, Matrix L, Matrix D,
                            EventSet events, Vector pv) {
  GroundTruth gt;
  gt.S_true = apply_cumsum(D);
  gt.L_true = std::move(L);
  gt.P.values = gt.L_true + gt.S_true;
  gt.P.node_ids.reserve(spec.n_houses);
  for (int n = 0; n < spec.n_houses; ++n)
    gt.P.node_ids.push_back("h" + std::to_string(n));
  gt.events = std::move(events);
  gt.pv_profile = std::move(pv);
  return gt;
}

inline GroundTruth generate_winter(const ScenarioSpec& spec, bool with_pv,
                                   bool with_hvac) {
  spec.validate();
  const int N = spec.n_houses;
  const int T = spec.horizon_T;
  Rng rng_base(spec.seed, 1);
  Rng rng_pv(spec.seed, 2);
  Rng rng_ev(spec.seed, 3);
  Rng rng_hvac(spec.seed, 4);

  const Vector b = smooth_profile(rng_base, T);
  Vector bs(N);
  for (int n = 0; n < N; ++n)
    bs(n) = rng_base.uniform(spec.base_load_kw.first, spec.base_load_kw.second);
  Matrix L = bs * b.transpose();

  Vector g = Vector::Zero(T);
  if (with_pv && spec.n_pv > 0) {
    g = pv_curve(rng_pv, T);
    Vector ps = Vector::Zero(N);
    const auto idx = rng_pv.sample_without_replacement(N, spec.n_pv);
    for (int i : idx)
      ps(i) = rng_pv.uniform(spec.pv_peak_kw.first, spec.pv_peak_kw.second);
    L -= ps * g.transpose();
  }

  Matrix D = Matrix::Zero(N, T);
  EventSet events;
  if (spec.n_ev > 0) place_evs_aperiodic(rng_ev, D, events, spec);

  if (with_hvac) {
    // One compressor period for the whole neighborhood, phase and power per
    // house. Shared cadence is what puts the strong autocorrelation peak in
    // the aggregate; independent periods wash it out.
    const int p = static_cast<int>(rng_hvac.uniform_int(
        spec.hvac_period_min.first, spec.hvac_period_min.second));
    const int on_len = static_cast<int>(std::lround(spec.hvac_duty * p));
    if (on_len > 0 && on_len < p) {  // otherwise always-off/always-on: no cycling
      for (int h = 0; h < N; ++h) {
        const int phase = static_cast<int>(rng_hvac.uniform_int(0, p - 1));
        const double pw = quantize_kw(rng_hvac.uniform(spec.hvac_power_kw.first,
                                                       spec.hvac_power_kw.second));
        bool prev = false;
        for (int t = 0; t < T; ++t) {
          const bool on = ((t + phase) % p) < on_len;
          if (on != prev) {
            D(h, t) += on ? pw : -pw;
            // A switch-on at t = 0 is the house's initial level, not a change
            // inside the window, so it carries no event record.
            if (t > 0) events.push_back({h, t, pw, on ? +1 : -1, EventKind::HVAC});
          }
          prev = on;
        }
      }
    }
  }
  return assemble(spec, std::move(L), std::move(D), std::move(events),
                  std::move(g));
}

}  // namespace detail

// Daytime window with PV: rank-2 smooth component (shared base profile +
// shared irradiance bell with negative per-house scales) plus aperiodic
// rectangular charging sessions.
inline GroundTruth generate_winter_day(const ScenarioSpec& spec) {
  if (spec.hvac_enabled)
    throw ValidationError("generate_winter_day: hvac_enabled must be false");
  return detail::generate_winter(spec, true, false);
}

// Evening window: no PV; each EV house gets one rectangular charging
// session with uniform start, truncated at the horizon when it runs over.
inline GroundTruth generate_winter_night(const ScenarioSpec& spec) {
  if (spec.hvac_enabled)
    throw ValidationError("generate_winter_night: hvac_enabled must be false");
  return detail::generate_winter(spec, false, false);
}

// Daytime window with PV plus periodic HVAC cycling (shared period,
// house-specific phase and power), the intentionally hard case.
inline GroundTruth generate_summer_day(const ScenarioSpec& spec) {
  if (!spec.hvac_enabled)
    throw ValidationError("generate_summer_day: hvac_enabled must be true");
  return detail::generate_winter(spec, true, true);
}

// Property-test scenario: random rank-r smooth component plus Bernoulli(p)
// sparse changes with bounded magnitudes.
inline GroundTruth generate_random(const ScenarioSpec& spec, int rank,
                                   double sparsity) {
  spec.validate();
  const int N = spec.n_houses;
  const int T = spec.horizon_T;
  if (rank < 1 || rank > std::min(N, T))
    throw ValidationError("generate_random: need 1 <= rank <= min(N, T)");
  if (sparsity < 0.0 || sparsity > 1.0)
    throw ValidationError("generate_random: sparsity must lie in [0, 1]");
  Rng rng(spec.seed, 7);
  Matrix L = Matrix::Zero(N, T);
  for (int k = 0; k < rank; ++k) {
    const Vector f = detail::smooth_profile(rng, T, 0.5, 1.5);
    Vector u(N);
    for (int n = 0; n < N; ++n) u(n) = rng.uniform(0.2, 2.0);
    for (int n = 0; n < N; ++n)
      if (rng.uniform() < 0.5) u(n) = -u(n);
    L += u * f.transpose();
  }
  Matrix D = Matrix::Zero(N, T);
  EventSet events;
  // Column 0 stays empty: it holds initial levels, not step changes, so all
  // planted events live at minutes 1..T-1.
  for (int t = 1; t < T; ++t)
    for (int n = 0; n < N; ++n) {
      const bool hit = rng.uniform() < sparsity;
      const double mag = quantize_kw(rng.uniform(0.5, 5.0));
      const bool neg = rng.uniform() < 0.5;
      if (hit) {
        D(n, t) = neg ? -mag : mag;
        events.push_back({n, t, mag, neg ? -1 : +1, EventKind::Other});
      }
    }
  return detail::assemble(spec, std::move(L), std::move(D), std::move(events),
                          Vector::Zero(T));
}

}  // namespace loadrec
