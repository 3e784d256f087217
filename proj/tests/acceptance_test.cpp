// End-to-end acceptance gate. Each numbered check prints exactly one
// PASS/FAIL line with the measured values; the process exit code is the
// number of failed checks. Progress notes stream to stderr because the
// heavier checks run for minutes.
#include <cinttypes>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "loadrec/loadrec.hpp"

using namespace loadrec;
namespace fs = std::filesystem;

namespace {

struct Result {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

void note(const std::string& s) {
  std::fprintf(stderr, "[progress] %s\n", s.c_str());
  std::fflush(stderr);
}

Matrix random_matrix(int n, int t, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(n, t);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < t; ++j) m(i, j) = u(rng);
  return m;
}

double inner(const Matrix& a, const Matrix& b) {
  return (a.array() * b.array()).sum();
}

double truth_objective(const GroundTruth& gt, double lambda) {
  const Matrix K = apply_diff(gt.L_true);
  const Matrix D = apply_diff(gt.S_true);
  return singular_values(K).sum() + lambda * D.array().abs().sum();
}

MeasurementSet measure(const GroundTruth& gt, std::uint64_t noise_seed) {
  NoiseSpec noise;
  noise.seed = noise_seed;
  return simulate_measurements(gt.P, 15, noise);
}

// ------------------------------------------------------------ check 1

Result check_operators() {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> di(-5, 5);
  Matrix M(8, 30);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 30; ++j) M(i, j) = di(rng);
  const bool inverse_exact =
      apply_diff(apply_cumsum(M)) == M && apply_cumsum(apply_diff(M)) == M;

  const int N = 30, T = 420, r = 15;
  const AveragingOperator A(T, r);
  const Matrix P = random_matrix(N, T, rng, -1.0, 1.0);
  const Matrix Wy = random_matrix(N, T / r, rng, -1.0, 1.0);
  const Matrix V = random_matrix(N, T, rng, -1.0, 1.0);
  double adj = std::abs(inner(apply_averaging(P, A), Wy) -
                        inner(P, adjoint_averaging(Wy, A)));
  adj = std::max(adj, std::abs(inner(apply_cumsum(P), V) -
                               inner(P, adjoint_cumsum(V))));
  adj = std::max(adj,
                 std::abs(inner(apply_diff(P), V) - inner(P, adjoint_diff(V))));

  const double closed = averaging_norm(A);
  const double powered = power_iteration_norm(
      [&](const Matrix& X) { return apply_averaging(X, A); },
      [&](const Matrix& X) { return adjoint_averaging(X, A); }, N, T);
  const double norm_gap = std::abs(closed - powered);

  Result res;
  res.pass = inverse_exact && adj <= 1e-10 && norm_gap <= 1e-6 &&
             closed == 1.0 / std::sqrt(static_cast<double>(r));
  res.detail = fmt(
      "cumsum/diff inverse exact=%s, max adjoint defect=%.2e (tol 1e-10), "
      "|1/sqrt(r) - power iteration|=%.2e (tol 1e-6)",
      inverse_exact ? "yes" : "no", adj, norm_gap);
  return res;
}

// ------------------------------------------------------------ check 2

double entry_grid_argmin(double v, double tau) {
  auto f = [&](double x) { return 0.5 * (x - v) * (x - v) + tau * std::abs(x); };
  double best_x = -5.0, best_f = f(-5.0);
  for (double x = -5.0; x <= 5.0; x += 1e-3)
    if (f(x) < best_f) best_f = f(x), best_x = x;
  double lo = best_x - 2e-3, fine_x = lo, fine_f = f(lo);
  for (double x = lo; x <= best_x + 2e-3; x += 1e-7)
    if (f(x) < fine_f) fine_f = f(x), fine_x = x;
  return fine_x;
}

Result check_prox() {
  const double tau = 0.8;
  Matrix V(1, 5);
  V << -3.2, -0.5, 0.0, 0.7, 2.4;
  const Matrix P1 = prox_l1(V, tau);
  double l1_gap = 0.0;
  for (int j = 0; j < 5; ++j)
    l1_gap = std::max(l1_gap, std::abs(P1(0, j) - entry_grid_argmin(V(0, j), tau)));

  // Diagonal spectra have a closed-form shrink.
  Matrix Dg = Matrix::Zero(3, 5);
  Dg(0, 0) = 5.0;
  Dg(1, 1) = 3.0;
  Dg(2, 2) = 1.0;
  Matrix want = Matrix::Zero(3, 5);
  want(0, 0) = 3.5;
  want(1, 1) = 1.5;
  const double diag_gap =
      (prox_nuclear(Dg, 1.5).value - want).array().abs().maxCoeff();

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> scale(1e-4, 1e-1);
  int wins = 0;
  const int trials = 100;
  for (int k = 0; k < trials; ++k) {
    const Matrix M = random_matrix(6, 9, rng, -2.0, 2.0);
    const double t2 = 0.7;
    const Matrix P = prox_nuclear(M, t2).value;
    auto objective = [&](const Matrix& X) {
      return 0.5 * (X - M).squaredNorm() + t2 * singular_values(X).sum();
    };
    Matrix step = random_matrix(6, 9, rng, -1.0, 1.0);
    step *= scale(rng) / step.norm();
    if (objective(P) <= objective(P + step) + 1e-12) ++wins;
  }

  Result res;
  res.pass = l1_gap <= 1e-6 && diag_gap <= 1e-10 && wins == trials;
  res.detail = fmt(
      "soft-threshold vs grid=%.2e (tol 1e-6), diagonal shrink defect=%.2e, "
      "prox objective wins %d/%d perturbations",
      l1_gap, diag_gap, wins, trials);
  return res;
}

// ------------------------------------------------------------ check 3

Result check_random_scenarios() {
  SolverConfig cfg;
  // The converged-run clauses are checked as stated, but feasibility and
  // objective dominance are measured on every returned iterate so the line
  // stays informative when these unstructured instances stop short of the
  // stationarity threshold.
  int converged = 0, dominated = 0, feasible = 0, conv_ok = 0;
  double max_wall = 0.0, worst_viol = 0.0, worst_excess = -1.0;
  const int n_runs = 20;
  for (int s = 0; s < n_runs; ++s) {
    ScenarioSpec spec;
    spec.seed = 100 + s;
    const GroundTruth gt = generate_random(spec, 2, 0.01);
    const MeasurementSet ms = measure(gt, spec.seed);
    auto [dec, rep] = solve_recovery(ms, cfg);
    max_wall = std::max(max_wall, rep.wall_time);
    const bool feas = rep.feasibility_violation <= cfg.resolved_feas_tol(ms);
    const double bound = truth_objective(gt, cfg.lambda) * (1.0 + 1e-4);
    const bool dom = rep.objective <= bound;
    if (feas) ++feasible;
    if (dom) ++dominated;
    worst_viol = std::max(worst_viol, rep.feasibility_violation);
    worst_excess = std::max(worst_excess, rep.objective / bound - 1.0);
    if (rep.converged) {
      ++converged;
      if (feas && dom) ++conv_ok;
    }
    note(fmt("random scenario %d/%d: converged=%d iters=%d obj=%.4f "
             "truth-bound=%.4f viol=%.2e wall=%.1fs",
             s + 1, n_runs, rep.converged ? 1 : 0, rep.iterations,
             rep.objective, bound, rep.feasibility_violation, rep.wall_time));
  }
  Result res;
  res.pass = converged == conv_ok && max_wall < 120.0;
  res.detail = fmt(
      "%d/%d converged, all of those feasible and objective-dominant; across "
      "ALL returned iterates: %d/%d within feas_tol (worst viol %.1e) and "
      "%d/%d at or below the ground-truth objective (worst margin %+.3f); "
      "max wall %.1fs (limit 120)",
      converged, n_runs, feasible, n_runs, worst_viol, dominated, n_runs,
      worst_excess, max_wall);
  return res;
}

// ------------------------------------------------------- checks 4 and 7a

struct WinterDayOutcome {
  Result crit4;
  std::vector<double> patterns;  // seeds 0..9
  int converged = 0;
};

WinterDayOutcome run_winter_day_suite() {
  WinterDayOutcome out;
  SolverConfig cfg;  // lambda 0.05
  for (std::uint64_t s = 0; s < 10; ++s) {
    ScenarioSpec spec;
    spec.seed = s;
    const GroundTruth gt = generate_winter_day(spec);
    const MeasurementSet ms = measure(gt, s);
    auto [dec, rep] = solve_recovery(ms, cfg);
    if (rep.converged) ++out.converged;
    const Matrix L_hat = dec.L();
    const double pattern = pattern_recovery_score(L_hat, gt.pv_profile);
    out.patterns.push_back(pattern);
    note(fmt("winter-day seed %" PRIu64 ": converged=%d iters=%d pattern=%.4f",
             s, rep.converged ? 1 : 0, rep.iterations, pattern));
    if (s == 3) {
      const double p_err =
          (dec.P() - gt.P.values).norm() / gt.P.values.norm();
      const int rank = numerical_rank(L_hat);
      const Vector sv = singular_values(L_hat);
      // The rank tail is the measurement-noise floor, not solver noise: the
      // sigma_3/sigma_1 ratio printed here tracks the meter accuracy class
      // and drops below the 1e-6 rank cut only when the noise does.
      out.crit4.pass = rep.converged && pattern >= 0.95 && rank <= 3 &&
                       p_err <= 0.05;
      out.crit4.detail = fmt(
          "seed 3, weight 0.05: converged=%s, pattern score=%.4f (need >= "
          "0.95), rank(L_hat)=%d (need <= 3, sigma3/sigma1=%.1e vs 1e-6 "
          "cut), rel err(P_hat)=%.4f (need <= 0.05)",
          rep.converged ? "yes" : "no", pattern, rank,
          sv.size() > 2 ? sv(2) / sv(0) : 0.0, p_err);
    }
  }
  return out;
}

// ------------------------------------------------------------ check 5

Result check_night_roc() {
  const std::vector<double> lambdas = {0.01, 0.05, 0.25};
  SolverConfig base;
  double auc[3][10];
  int conv_count = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    ScenarioSpec spec;
    spec.seed = s;
    const GroundTruth gt = generate_winter_night(spec);
    const MeasurementSet ms = measure(gt, s);
    EventSet truth;
    for (const Event& e : gt.events)
      if (e.minute < spec.horizon_T) truth.push_back(e);
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
      SolverConfig cfg = base;
      cfg.lambda = lambdas[li];
      auto [dec, rep] = solve_recovery(ms, cfg);
      if (rep.converged) ++conv_count;
      auc[li][s] =
          roc_sweep(dec.D, truth, 6.6, default_threshold_grid()).auc;
      note(fmt("winter-night seed %" PRIu64 " lambda=%.2f: converged=%d "
               "iters=%d auc=%.3f",
               s, lambdas[li], rep.converged ? 1 : 0, rep.iterations,
               auc[li][s]));
    }
  }
  double min_auc[3], mean_auc[3];
  for (int li = 0; li < 3; ++li) {
    min_auc[li] = 1.0;
    mean_auc[li] = 0.0;
    for (int s = 0; s < 10; ++s) {
      min_auc[li] = std::min(min_auc[li], auc[li][s]);
      mean_auc[li] += auc[li][s] / 10.0;
    }
  }
  int competitive = 0;
  for (int s = 0; s < 10; ++s) {
    const double best = std::max({auc[0][s], auc[1][s], auc[2][s]});
    if (auc[1][s] >= best - 0.02) ++competitive;
  }
  const bool all_high =
      min_auc[0] >= 0.9 && min_auc[1] >= 0.9 && min_auc[2] >= 0.9;
  Result res;
  res.pass = all_high && competitive == 10;
  res.detail = fmt(
      "min/mean AUC: weight 0.01 %.3f/%.3f, 0.05 %.3f/%.3f, 0.25 %.3f/%.3f "
      "(each min must reach 0.9); weight 0.05 within 0.02 of best in %d/10 "
      "seeds; %d/30 solves converged",
      min_auc[0], mean_auc[0], min_auc[1], mean_auc[1], min_auc[2], mean_auc[2],
      competitive, conv_count);
  return res;
}

// ------------------------------------------------------- checks 6 and 7b

struct SummerOutcome {
  Result crit6;
  std::vector<double> patterns;
};

SummerOutcome run_summer_suite() {
  SummerOutcome out;
  SolverConfig cfg;
  cfg.max_iters = 150000;  // step 1 needs 50-90k; refinement 40-130k when it lands
  int derr_ok = 0, hf_drop = 0, fallbacks = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    ScenarioSpec spec;
    spec.seed = s;
    spec.hvac_enabled = true;
    const GroundTruth gt = generate_summer_day(spec);
    const MeasurementSet ms = measure(gt, s);
    const Matrix D_star = apply_diff(gt.S_true);
    auto [dec, rep, supp] = run_pipeline(ms, cfg);

    Matrix D_step1, L_step1;
    if (rep.used_step1_fallback) {
      ++fallbacks;
      D_step1 = dec.D;  // the pipeline returned the step-1 result
      L_step1 = dec.L();
    } else {
      auto [dec1, rep1] = solve_recovery(ms, cfg);
      D_step1 = dec1.D;
      L_step1 = dec1.L();
    }
    const double derr_post = (dec.D - D_star).norm();
    const double derr_step1 = (D_step1 - D_star).norm();
    const double hf_post = high_frequency_energy(dec.L());
    const double hf_step1 = high_frequency_energy(L_step1);
    if (derr_post <= derr_step1) ++derr_ok;
    if (hf_post < hf_step1) ++hf_drop;
    out.patterns.push_back(pattern_recovery_score(dec.L(), gt.pv_profile));
    note(fmt("summer seed %" PRIu64 ": fallback=%d iters=%d derr %.2f -> %.2f "
             "hf %.1f -> %.1f pattern=%.4f",
             s, rep.used_step1_fallback ? 1 : 0, rep.iterations, derr_step1,
             derr_post, hf_step1, hf_post, out.patterns.back()));
  }
  // The two clauses pull against each other on this formulation: a converged
  // refinement strips high-frequency energy from the smooth component but,
  // with no L1 term left on the pinned support, inflates the switching
  // component's error; a fallback ties the first clause and fails the strict
  // second. The per-seed numbers above are the evidence either way.
  out.crit6.pass = derr_ok >= 8 && hf_drop >= 8;
  out.crit6.detail = fmt(
      "refined d-error <= step-1 d-error in %d/10 seeds (need >= 8); "
      "high-frequency energy strictly drops in %d/10 (need >= 8); refinement "
      "fell back to step 1 in %d/10 seeds",
      derr_ok, hf_drop, fallbacks);
  return out;
}

// ------------------------------------------------------------ check 8

Result check_scale_equivariance() {
  ScenarioSpec spec;
  spec.seed = 9;
  spec.n_houses = 8;
  spec.n_pv = 0;
  spec.n_ev = 2;
  spec.horizon_T = 60;
  const GroundTruth gt = generate_winter_night(spec);
  const MeasurementSet ms = measure(gt, 9);
  MeasurementSet scaled = ms;
  const double c = 3.7;
  scaled.Y *= c;
  scaled.z *= c;
  scaled.Xi_y *= c;
  scaled.xi_z *= c;
  SolverConfig cfg;
  cfg.max_iters = 60000;
  auto [da, ra] = solve_recovery(ms, cfg);
  auto [db, rb] = solve_recovery(scaled, cfg);
  const double num = std::sqrt((db.K - c * da.K).squaredNorm() +
                               (db.D - c * da.D).squaredNorm());
  const double den =
      c * std::sqrt(da.K.squaredNorm() + da.D.squaredNorm());
  const double rel = num / den;
  Result res;
  res.pass = ra.converged && rb.converged && rel <= 1e-3;
  res.detail = fmt(
      "scaling measurements by 3.7: joint (K_hat, D_hat) relative deviation "
      "%.2e (tol 1e-3); converged=%s/%s",
      rel, ra.converged ? "yes" : "no", rb.converged ? "yes" : "no");
  return res;
}

// ------------------------------------------------------------ check 9

Result check_determinism_and_round_trips() {
  std::string fail;

  // Scenario bundles: same seed, twice, byte-identical on disk.
  ScenarioSpec spec;
  spec.seed = 21;
  spec.n_houses = 6;
  spec.n_pv = 3;
  spec.n_ev = 2;
  spec.horizon_T = 60;
  ScenarioBundle b1{spec, "winter-day", generate_winter_day(spec)};
  ScenarioBundle b2{spec, "winter-day", generate_winter_day(spec)};
  const fs::path root =
      fs::temp_directory_path() / "loadrec_acceptance_roundtrip";
  fs::remove_all(root);
  write_scenario(root / "a", b1);
  write_scenario(root / "b", b2);
  for (const char* f : {"P.csv", "L_true.csv", "S_true.csv", "events.csv",
                        "pv_profile.csv", "spec.json"})
    if (read_text(root / "a" / f) != read_text(root / "b" / f))
      fail += fmt("bundle file %s differs between identical runs; ", f);

  // Bundle read-back equality.
  const ScenarioBundle rb = read_scenario(root / "a");
  if (!(rb.gt.P.values == b1.gt.P.values) || !(rb.gt.L_true == b1.gt.L_true) ||
      !(rb.gt.S_true == b1.gt.S_true) ||
      !(rb.gt.pv_profile == b1.gt.pv_profile) ||
      rb.gt.events.size() != b1.gt.events.size())
    fail += "bundle read-back is not lossless; ";

  // Matrix CSV round trip on awkward doubles.
  std::mt19937_64 rng(5);
  LoadMatrix lm;
  lm.values = random_matrix(4, 7, rng, -3.0, 3.0);
  lm.values(0, 0) = 1.0 / 3.0;
  lm.values(1, 2) = 1e-17;
  if (!(parse_load_csv(serialize_load_csv(lm), "rt").values == lm.values))
    fail += "matrix CSV round trip is lossy; ";

  // Solver determinism on one scenario.
  ScenarioSpec sp2;
  sp2.seed = 3;
  sp2.n_houses = 8;
  sp2.n_pv = 0;
  sp2.n_ev = 2;
  sp2.horizon_T = 60;
  const GroundTruth g2 = generate_winter_night(sp2);
  const MeasurementSet ms = measure(g2, 3);
  SolverConfig cfg;
  auto [x1, r1] = solve_recovery(ms, cfg);
  auto [x2, r2] = solve_recovery(ms, cfg);
  if (!(x1.K == x2.K) || !(x1.D == x2.D) || r1.iterations != r2.iterations ||
      r1.objective != r2.objective)
    fail += "identical solves disagree; ";

  fs::remove_all(root);
  Result res;
  res.pass = fail.empty();
  res.detail = res.pass
                   ? "bundles byte-identical across reruns; CSV and bundle "
                     "round trips lossless; identical solves bit-identical"
                   : fail;
  return res;
}

}  // namespace

int main() {
  std::vector<Result> results(9);
  note("check 1: transform identities");
  results[0] = check_operators();
  note("check 2: proximal operators");
  results[1] = check_prox();
  note("check 3: random-scenario feasibility and objective dominance");
  results[2] = check_random_scenarios();
  note("checks 4 and 7: daytime suite");
  const WinterDayOutcome wd = run_winter_day_suite();
  results[3] = wd.crit4;
  note("check 5: evening detection sweep");
  results[4] = check_night_roc();
  note("checks 6 and 7: compressor-season suite");
  const SummerOutcome su = run_summer_suite();
  results[5] = su.crit6;
  {
    double mean_s = 0.0, mean_w = 0.0;
    for (double p : su.patterns) mean_s += p / su.patterns.size();
    for (double p : wd.patterns) mean_w += p / wd.patterns.size();
    results[6].pass = mean_s < mean_w;
    results[6].detail = fmt(
        "mean pattern score: compressor scenarios %.4f vs daytime %.4f over "
        "paired seeds (must be strictly lower)",
        mean_s, mean_w);
  }
  note("check 8: scale equivariance");
  results[7] = check_scale_equivariance();
  note("check 9: determinism and round trips");
  results[8] = check_determinism_and_round_trips();

  int failures = 0;
  for (int i = 0; i < 9; ++i) {
    std::printf("criterion %d: %s - %s\n", i + 1,
                results[i].pass ? "PASS" : "FAIL", results[i].detail.c_str());
    if (!results[i].pass) ++failures;
  }
  std::printf("acceptance: %d/9 criteria passed\n", 9 - failures);
  return failures;
}
