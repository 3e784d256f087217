// Batch front-end for the load-disaggregation pipeline. One stage per
// invocation; stages talk only through files, so every experiment is
// resumable and auditable from its output directory.
//
// Exit codes: 0 success, 2 usage or bad parameter, 3 solver did not
// converge (outputs are still written), 4 file-system or file-format error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "loadrec/loadrec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace loadrec;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNoConverge = 3;
constexpr int kExitIo = 4;

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// Flags override config-file values; config values override defaults.
template <class T>
void merge_cfg(const json& j, const char* key, const CLI::Option* opt, T& value) {
  if (opt != nullptr && opt->count() > 0) return;
  if (!j.contains(key)) return;
  try {
    value = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config key '") + key + "': " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------- figures

struct Series {
  std::string name;
  std::vector<double> x, y;
};

std::string render_series_csv(const std::vector<Series>& series) {
  std::string out = "series,x,y\n";
  for (const Series& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i)
      out += s.name + "," + format_double(s.x[i]) + "," + format_double(s.y[i]) + "\n";
  return out;
}

// Minimal self-contained vector rendering: frame, min/max tick labels,
// legend, one polyline per series.
std::string render_svg(const std::string& title, const std::vector<Series>& series) {
  const double W = 900, H = 460, ml = 70, mr = 20, mt = 40, mb = 45;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const Series& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        first = false;
      }
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  const double pw = W - ml - mr, ph = H - mt - mb;
  auto X = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * pw; };
  auto Y = [&](double v) { return mt + ph - (v - ymin) / (ymax - ymin) * ph; };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#8c564b", "#e377c2"};
  char buf[160];
  std::string svg;
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" "
                "height=\"%g\" viewBox=\"0 0 %g %g\">\n",
                W, H, W, H);
  svg += buf;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf),
                "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" "
                "stroke=\"#333\"/>\n",
                ml, mt, pw, ph);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%g\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\""
                ">%s</text>\n",
                ml, title.c_str());
  svg += buf;
  auto label = [&](double px, double py, const char* anchor, double v) {
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" "
                  "font-size=\"12\" text-anchor=\"%s\">%.6g</text>\n",
                  px, py, anchor, v);
    svg += buf;
  };
  label(ml, H - mb + 18, "middle", xmin);
  label(ml + pw, H - mb + 18, "middle", xmax);
  label(ml - 8, mt + ph, "end", ymin);
  label(ml - 8, mt + 12, "end", ymax);
  int ci = 0;
  for (const Series& s : series) {
    const char* color = palette[ci % 6];
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", X(s.x[i]), Y(s.y[i]));
      svg += buf;
    }
    svg += "\"/>\n";
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" "
                  "font-size=\"13\" fill=\"%s\">%s</text>\n",
                  W - mr - 180.0, mt + 18.0 + 18.0 * ci, color, s.name.c_str());
    svg += buf;
    ++ci;
  }
  svg += "</svg>\n";
  return svg;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string case_name = "winter-day";
  std::string out;
  std::string config_path;
  std::uint64_t seed = 0;
  int houses = -1, pv = -1, ev = -1, horizon = -1;
  int rank = 2;
  double sparsity = 0.01;
};

int cmd_synth(const SynthArgs& a, const json& cfg_json, const CLI::App* sub) {
  ScenarioSpec spec;
  if (cfg_json.contains("spec")) spec = spec_from_json(cfg_json.at("spec"));
  SynthArgs r = a;
  merge_cfg(cfg_json, "case", sub->get_option("--case"), r.case_name);
  merge_cfg(cfg_json, "seed", sub->get_option("--seed"), r.seed);
  merge_cfg(cfg_json, "houses", sub->get_option("--houses"), r.houses);
  merge_cfg(cfg_json, "pv", sub->get_option("--pv"), r.pv);
  merge_cfg(cfg_json, "ev", sub->get_option("--ev"), r.ev);
  merge_cfg(cfg_json, "horizon", sub->get_option("--horizon"), r.horizon);
  merge_cfg(cfg_json, "rank", sub->get_option("--rank"), r.rank);
  merge_cfg(cfg_json, "sparsity", sub->get_option("--sparsity"), r.sparsity);
  spec.seed = r.seed;
  if (r.houses >= 0) spec.n_houses = r.houses;
  if (r.pv >= 0) spec.n_pv = r.pv;
  if (r.ev >= 0) spec.n_ev = r.ev;
  if (r.horizon >= 0) spec.horizon_T = r.horizon;
  spec.hvac_enabled = (r.case_name == "summer-day");

  ScenarioBundle bundle;
  bundle.spec = spec;
  bundle.case_name = r.case_name;
  if (r.case_name == "winter-day")
    bundle.gt = generate_winter_day(spec);
  else if (r.case_name == "winter-night")
    bundle.gt = generate_winter_night(spec);
  else if (r.case_name == "summer-day")
    bundle.gt = generate_summer_day(spec);
  else if (r.case_name == "random")
    bundle.gt = generate_random(spec, r.rank, r.sparsity);
  else
    throw ValidationError(
        "unknown case '" + r.case_name +
        "'; valid: winter-day, winter-night, summer-day, random");

  write_scenario(r.out, bundle);
  json echo;
  echo["tool_version"] = kVersionString;
  echo["command"] = "synth";
  echo["case"] = r.case_name;
  echo["out"] = r.out;
  echo["spec"] = spec_to_json(spec);
  if (r.case_name == "random") {
    echo["rank"] = r.rank;
    echo["sparsity"] = r.sparsity;
  }
  write_json_file(fs::path(r.out) / "config.json", echo);
  std::printf("wrote %s: case=%s seed=%llu houses=%d horizon=%d events=%zu\n",
              r.out.c_str(), r.case_name.c_str(),
              static_cast<unsigned long long>(spec.seed), spec.n_houses,
              spec.horizon_T, bundle.gt.events.size());
  return kExitOk;
}

// ---------------------------------------------------------------- recover

struct RecoverArgs {
  std::string bundle, load, out, config_path;
  int factor = 15;
  double meter_acc = 0.002, pmu_acc = 0.0002;
  std::uint64_t noise_seed = 0;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  int max_iters = 30000;
  double eps_abs = 1e-6, eps_rel = 1e-5, rho = 1.0, step_scale = 0.9;
  double support_abs = 0.01, support_rel = 1e-3, feas_tol = -1.0;
  bool skip_postprocess = false;
};

int cmd_recover(const RecoverArgs& a, const json& j, const CLI::App* sub) {
  RecoverArgs r = a;
  merge_cfg(j, "bundle", sub->get_option("--bundle"), r.bundle);
  merge_cfg(j, "load", sub->get_option("--load"), r.load);
  merge_cfg(j, "factor", sub->get_option("--factor"), r.factor);
  merge_cfg(j, "meter_acc", sub->get_option("--meter-acc"), r.meter_acc);
  merge_cfg(j, "pmu_acc", sub->get_option("--pmu-acc"), r.pmu_acc);
  merge_cfg(j, "noise_seed", sub->get_option("--noise-seed"), r.noise_seed);
  merge_cfg(j, "lambda", sub->get_option("--lambda"), r.lambda);
  merge_cfg(j, "max_iters", sub->get_option("--max-iters"), r.max_iters);
  merge_cfg(j, "eps_abs", sub->get_option("--eps-abs"), r.eps_abs);
  merge_cfg(j, "eps_rel", sub->get_option("--eps-rel"), r.eps_rel);
  merge_cfg(j, "rho", sub->get_option("--rho"), r.rho);
  merge_cfg(j, "step_scale", sub->get_option("--step-scale"), r.step_scale);
  merge_cfg(j, "support_abs", sub->get_option("--support-abs"), r.support_abs);
  merge_cfg(j, "support_rel", sub->get_option("--support-rel"), r.support_rel);
  merge_cfg(j, "feas_tol", sub->get_option("--feas-tol"), r.feas_tol);
  merge_cfg(j, "skip_postprocess", sub->get_option("--skip-postprocess"),
            r.skip_postprocess);
  if (r.bundle.empty() && r.load.empty())
    throw ValidationError("recover needs --bundle or --load");

  LoadMatrix P;
  if (!r.bundle.empty()) {
    P = read_scenario(r.bundle).gt.P;
  } else {
    P = read_load_csv(r.load);
  }
  NoiseSpec noise;
  noise.meter_accuracy = r.meter_acc;
  noise.pmu_accuracy = r.pmu_acc;
  noise.seed = r.noise_seed;
  MeasurementSet ms = simulate_measurements(P, r.factor, noise);

  SolverConfig cfg;
  cfg.lambda = std::isnan(r.lambda) ? default_lambda(P.horizon()) : r.lambda;
  cfg.max_iters = r.max_iters;
  cfg.eps_abs = r.eps_abs;
  cfg.eps_rel = r.eps_rel;
  cfg.rho = r.rho;
  cfg.step_scale = r.step_scale;
  cfg.support_abs = r.support_abs;
  cfg.support_rel = r.support_rel;
  cfg.feas_tol = r.feas_tol;
  cfg.validate();

  std::vector<IterationTrace> trace;
  Decomposition dec;
  SolveReport rep;
  SupportSet supp = SupportSet::empty(P.nodes(), P.horizon());
  if (r.skip_postprocess) {
    std::tie(dec, rep) = solve_recovery(ms, cfg, &trace);
  } else {
    std::tie(dec, rep, supp) = run_pipeline(ms, cfg, &trace);
  }

  const fs::path out(r.out);
  json echo;
  echo["tool_version"] = kVersionString;
  echo["command"] = "recover";
  echo["bundle"] = r.bundle;
  echo["load"] = r.load;
  echo["factor"] = r.factor;
  echo["meter_acc"] = r.meter_acc;
  echo["pmu_acc"] = r.pmu_acc;
  echo["noise_seed"] = r.noise_seed;
  echo["lambda"] = cfg.lambda;
  echo["max_iters"] = cfg.max_iters;
  echo["eps_abs"] = cfg.eps_abs;
  echo["eps_rel"] = cfg.eps_rel;
  echo["rho"] = cfg.rho;
  echo["step_scale"] = cfg.step_scale;
  echo["support_abs"] = cfg.support_abs;
  echo["support_rel"] = cfg.support_rel;
  echo["feas_tol"] = cfg.feas_tol;
  echo["skip_postprocess"] = r.skip_postprocess;
  write_json_file(out / "config.json", echo);

  LoadMatrix m;
  m.node_ids = P.node_ids;
  m.start_time = P.start_time;
  m.slot_minutes = P.slot_minutes;
  m.values = dec.K;
  write_load_csv(out / "K_hat.csv", m);
  m.values = dec.D;
  write_load_csv(out / "D_hat.csv", m);
  m.values = dec.P();
  write_load_csv(out / "P_hat.csv", m);
  m.values = dec.L();
  write_load_csv(out / "L_hat.csv", m);
  m.values = ms.Y;
  m.slot_minutes = P.slot_minutes * r.factor;
  write_load_csv(out / "Y.csv", m);
  write_text_atomic(out / "z.csv", serialize_series_csv("aggregate_kw", ms.z));
  if (!r.skip_postprocess) {
    std::string sc = "house,minute\n";
    for (const auto& [n, t] : supp.entries())
      sc += std::to_string(n) + "," + std::to_string(t) + "\n";
    write_text_atomic(out / "support.csv", sc);
  }

  json report;
  report["converged"] = rep.converged;
  report["iterations"] = rep.iterations;
  report["primal_residual"] = rep.primal_residual;
  report["dual_residual"] = rep.dual_residual;
  report["objective"] = rep.objective;
  report["feasibility_violation"] = rep.feasibility_violation;
  report["feas_tol_resolved"] = cfg.resolved_feas_tol(ms);
  report["lambda"] = cfg.lambda;
  report["postprocessed"] = !r.skip_postprocess;
  report["used_step1_fallback"] = rep.used_step1_fallback;
  report["support_count"] = r.skip_postprocess ? 0 : supp.count();
  report["tool_version"] = kVersionString;
  write_json_file(out / "report.json", report);

  std::string tc = "iteration,objective,primal_residual,dual_residual,feasibility_violation\n";
  for (const IterationTrace& it : trace)
    tc += std::to_string(it.iteration) + "," + format_double(it.objective) + "," +
          format_double(it.primal_residual) + "," + format_double(it.dual_residual) +
          "," + format_double(it.feasibility_violation) + "\n";
  write_text_atomic(out / "trace.csv", tc);

  std::printf(
      "recover: converged=%s iterations=%d objective=%.6f violation=%.3e "
      "fallback=%s [%.1fs]\n",
      rep.converged ? "true" : "false", rep.iterations, rep.objective,
      rep.feasibility_violation, rep.used_step1_fallback ? "true" : "false",
      rep.wall_time);
  return rep.converged ? kExitOk : kExitNoConverge;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string run, bundle, out, config_path;
  double rating = 6.6;
  int match_window = 2, min_gap = 5;
  double grid_step = 0.05, grid_max = 1.5;
  double fp_denominator = -1.0;
  bool do_roc = true;
};

int cmd_eval(const EvalArgs& a, const json& j, const CLI::App* sub) {
  EvalArgs r = a;
  merge_cfg(j, "run", sub->get_option("--run"), r.run);
  merge_cfg(j, "bundle", sub->get_option("--bundle"), r.bundle);
  merge_cfg(j, "rating", sub->get_option("--rating"), r.rating);
  merge_cfg(j, "match_window", sub->get_option("--match-window"), r.match_window);
  merge_cfg(j, "min_gap", sub->get_option("--min-gap"), r.min_gap);
  merge_cfg(j, "grid_step", sub->get_option("--grid-step"), r.grid_step);
  merge_cfg(j, "grid_max", sub->get_option("--grid-max"), r.grid_max);
  merge_cfg(j, "fp_denominator", sub->get_option("--fp-denominator"),
            r.fp_denominator);
  merge_cfg(j, "roc", sub->get_option("--roc"), r.do_roc);
  if (r.run.empty() || r.bundle.empty())
    throw ValidationError("eval needs --run and --bundle");
  if (r.grid_step <= 0.0 || r.grid_max < r.grid_step)
    throw ValidationError("eval: need grid_step > 0 and grid_max >= grid_step");

  ScenarioBundle truth = read_scenario(r.bundle);
  const fs::path run(r.run);
  const Matrix D_hat = read_load_csv(run / "D_hat.csv").values;
  const Matrix L_hat = read_load_csv(run / "L_hat.csv").values;
  const Matrix P_hat = read_load_csv(run / "P_hat.csv").values;
  const Matrix D_true = apply_diff(truth.gt.S_true);
  const int T = truth.gt.P.horizon();

  MatrixMetrics mm = matrix_metrics(P_hat, truth.gt.P.values, L_hat,
                                    truth.gt.L_true, D_hat, D_true);
  ConditionDiagnostics diag = condition_diagnostics(truth.gt);
  double pattern = std::numeric_limits<double>::quiet_NaN();
  if (truth.gt.pv_profile.norm() > 0.0)
    pattern = pattern_recovery_score(L_hat, truth.gt.pv_profile);

  const fs::path out(r.out);
  json echo;
  echo["tool_version"] = kVersionString;
  echo["command"] = "eval";
  echo["run"] = r.run;
  echo["bundle"] = r.bundle;
  echo["rating"] = r.rating;
  echo["match_window"] = r.match_window;
  echo["min_gap"] = r.min_gap;
  echo["grid_step"] = r.grid_step;
  echo["grid_max"] = r.grid_max;
  echo["fp_denominator"] = r.fp_denominator;
  echo["roc"] = r.do_roc;
  write_json_file(out / "config.json", echo);

  // Metrics land before the ROC so an empty truth set still leaves a
  // complete metrics file behind when the ROC errors out.
  EventSet in_window;
  for (const Event& e : truth.gt.events)
    if (e.minute < T) in_window.push_back(e);
  RocCurve rc;
  bool have_roc = false;
  std::string roc_err;
  if (r.do_roc) {
    std::vector<double> grid;
    for (double f = r.grid_step; f <= r.grid_max + 1e-12; f += r.grid_step)
      grid.push_back(f);
    try {
      rc = roc_sweep(D_hat, in_window, r.rating, grid, r.match_window, r.min_gap,
                     r.fp_denominator);
      have_roc = true;
    } catch (const ValidationError& e) {
      roc_err = e.what();
    }
  }

  std::string mc =
      "p_rel_err,l_rel_err,d_rel_err,support_precision,support_recall,l_rank,"
      "pattern_score,auc,hf_energy_hat,hf_energy_true,left_coherence,"
      "right_coherence,support_autocorr_peak,support_autocorr_lag,d_true_rank\n";
  mc += format_double(mm.p_rel_err) + "," + format_double(mm.l_rel_err) + "," +
        format_double(mm.d_rel_err) + "," + format_double(mm.support_precision) +
        "," + format_double(mm.support_recall) + "," + std::to_string(mm.l_rank) +
        "," + format_double(pattern) + "," +
        (have_roc ? format_double(rc.auc) : "nan") + "," +
        format_double(high_frequency_energy(L_hat)) + "," +
        format_double(high_frequency_energy(truth.gt.L_true)) + "," +
        format_double(diag.left_coherence) + "," +
        format_double(diag.right_coherence) + "," +
        format_double(diag.support_autocorr_peak) + "," +
        std::to_string(diag.support_autocorr_lag) + "," +
        std::to_string(diag.d_rank) + "\n";
  write_text_atomic(out / "metrics.csv", mc);

  if (have_roc) {
    std::string rcsv = "threshold_fraction,tp_rate,fp_rate\n";
    for (const RocPoint& p : rc.points)
      rcsv += format_double(p.threshold_fraction) + "," + format_double(p.tp_rate) +
              "," + format_double(p.fp_rate) + "\n";
    write_text_atomic(out / "roc.csv", rcsv);
  }

  std::printf("eval: p_err=%.4f auc=%s pattern=%s rank(L_hat)=%d\n", mm.p_rel_err,
              have_roc ? format_double(rc.auc).c_str() : "n/a",
              std::isnan(pattern) ? "n/a" : format_double(pattern).c_str(),
              mm.l_rank);
  if (r.do_roc && !have_roc)
    throw ValidationError("roc requested but not computable: " + roc_err);
  return kExitOk;
}

// ---------------------------------------------------------------- plot

struct PlotArgs {
  std::string run, bundle, out, figure, config_path;
  int house = 0;
};

int cmd_plot(const PlotArgs& a, const json& j, const CLI::App* sub) {
  PlotArgs r = a;
  merge_cfg(j, "run", sub->get_option("--run"), r.run);
  merge_cfg(j, "bundle", sub->get_option("--bundle"), r.bundle);
  merge_cfg(j, "figure", sub->get_option("--figure"), r.figure);
  merge_cfg(j, "house", sub->get_option("--house"), r.house);
  if (r.run.empty() || r.bundle.empty())
    throw ValidationError("plot needs --run and --bundle");

  const std::vector<std::string> valid = {"ev-profile", "irradiance"};
  if (std::find(valid.begin(), valid.end(), r.figure) == valid.end()) {
    std::string msg = "unknown figure id '" + r.figure + "'; valid ids:";
    for (const auto& v : valid) msg += " " + v;
    throw ValidationError(msg);
  }

  ScenarioBundle truth = read_scenario(r.bundle);
  const fs::path run(r.run);
  const int T = truth.gt.P.horizon();
  std::vector<Series> series;
  std::string title, description;

  if (r.figure == "ev-profile") {
    const Matrix P_hat = read_load_csv(run / "P_hat.csv").values;
    const Matrix Y = read_load_csv(run / "Y.csv").values;
    if (r.house < 0 || r.house >= truth.gt.P.nodes())
      throw ValidationError("house index out of range");
    if (Y.cols() < 1 || T % Y.cols() != 0)
      throw ValidationError("meter matrix width does not divide the horizon");
    const int rr = T / static_cast<int>(Y.cols());
    Series s_truth{"truth", {}, {}}, s_meter{"meter staircase", {}, {}},
        s_rec{"recovered", {}, {}};
    for (int t = 0; t < T; ++t) {
      s_truth.x.push_back(t);
      s_truth.y.push_back(truth.gt.P.values(r.house, t));
      s_meter.x.push_back(t);
      s_meter.y.push_back(Y(r.house, t / rr));
      s_rec.x.push_back(t);
      s_rec.y.push_back(P_hat(r.house, t));
    }
    series = {s_truth, s_meter, s_rec};
    title = "house " + std::to_string(r.house) + ": minute profile";
    description =
        "single-house minute-level profile: ground truth, interval-meter "
        "staircase (each average repeated per minute), and recovery";
  } else {  // irradiance
    const Matrix L_hat = read_load_csv(run / "L_hat.csv").values;
    if (truth.gt.pv_profile.norm() <= 0.0)
      throw ValidationError("bundle has no PV profile to compare against");
    const Matrix G = L_hat * L_hat.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(G);
    Vector v1 = L_hat.transpose() * eig.eigenvectors().col(G.rows() - 1);
    if (v1.norm() <= 0.0) throw ValidationError("smooth estimate is zero");
    v1 /= v1.norm();
    Vector pv = truth.gt.pv_profile / truth.gt.pv_profile.norm();
    if (v1.dot(pv) < 0.0) v1 = -v1;
    Series s_est{"dominant pattern of L_hat", {}, {}}, s_pv{"irradiance truth", {}, {}};
    for (int t = 0; t < T; ++t) {
      s_est.x.push_back(t);
      s_est.y.push_back(v1(t));
      s_pv.x.push_back(t);
      s_pv.y.push_back(pv(t));
    }
    series = {s_est, s_pv};
    title = "dominant temporal pattern vs irradiance";
    description =
        "first right singular vector of the recovered smooth component "
        "(load domain, sign-aligned, unit norm) against the normalized "
        "irradiance profile";
  }

  const fs::path out(r.out);
  write_text_atomic(out / (r.figure + ".csv"), render_series_csv(series));
  write_text_atomic(out / (r.figure + ".svg"), render_svg(title, series));

  json manifest;
  const fs::path manifest_path = out / "manifest.json";
  if (fs::exists(manifest_path)) {
    try {
      manifest = json::parse(read_text(manifest_path));
    } catch (...) {
      manifest = json::object();
    }
  }
  json entry;
  entry["files"] = {r.figure + ".csv", r.figure + ".svg"};
  entry["description"] = description;
  json snames = json::array();
  for (const Series& s : series) snames.push_back(s.name);
  entry["series"] = snames;
  if (r.figure == "ev-profile") entry["house"] = r.house;
  manifest["figures"][r.figure] = entry;
  manifest["tool_version"] = kVersionString;
  write_json_file(manifest_path, manifest);

  json echo;
  echo["tool_version"] = kVersionString;
  echo["command"] = "plot";
  echo["run"] = r.run;
  echo["bundle"] = r.bundle;
  echo["figure"] = r.figure;
  echo["house"] = r.house;
  write_json_file(out / "config.json", echo);

  std::printf("plot: wrote %s and %s\n", (out / (r.figure + ".csv")).c_str(),
              (out / (r.figure + ".svg")).c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minute-resolution load recovery from interval meter averages "
               "and a feeder-rate aggregate"};
  app.set_version_flag("--version", kVersionString);
  app.require_subcommand(1);

  SynthArgs sa;
  CLI::App* synth = app.add_subcommand("synth", "Generate a scenario bundle");
  synth->add_option("--case", sa.case_name,
                    "winter-day | winter-night | summer-day | random");
  synth->add_option("--seed", sa.seed, "Scenario seed");
  synth->add_option("--out", sa.out, "Output bundle directory")->required();
  synth->add_option("--config", sa.config_path, "JSON config file");
  synth->add_option("--houses", sa.houses, "Number of houses");
  synth->add_option("--pv", sa.pv, "Number of PV houses");
  synth->add_option("--ev", sa.ev, "Number of EV houses");
  synth->add_option("--horizon", sa.horizon, "Window length in minutes");
  synth->add_option("--rank", sa.rank, "Smooth rank (random case)");
  synth->add_option("--sparsity", sa.sparsity, "Change density (random case)");

  RecoverArgs ra;
  CLI::App* recover = app.add_subcommand("recover", "Run the recovery pipeline");
  recover->add_option("--bundle", ra.bundle, "Scenario bundle directory");
  recover->add_option("--load", ra.load, "Minute-level load CSV (alternative input)");
  recover->add_option("--out", ra.out, "Output run directory")->required();
  recover->add_option("--config", ra.config_path, "JSON config file");
  recover->add_option("--factor", ra.factor, "Averaging factor r");
  recover->add_option("--meter-acc", ra.meter_acc, "Meter accuracy class");
  recover->add_option("--pmu-acc", ra.pmu_acc, "Aggregate accuracy class");
  recover->add_option("--noise-seed", ra.noise_seed, "Measurement noise seed");
  recover->add_option("--lambda", ra.lambda,
                      "Sparsity weight (default: horizon-scaled)");
  recover->add_option("--max-iters", ra.max_iters, "Iteration cap per stage");
  recover->add_option("--eps-abs", ra.eps_abs, "Absolute tolerance");
  recover->add_option("--eps-rel", ra.eps_rel, "Relative tolerance");
  recover->add_option("--rho", ra.rho, "Augmented-Lagrangian weight");
  recover->add_option("--step-scale", ra.step_scale, "Primal step safety factor");
  recover->add_option("--support-abs", ra.support_abs,
                      "Support threshold, kW");
  recover->add_option("--support-rel", ra.support_rel,
                      "Support threshold, fraction of max |D|");
  recover->add_option("--feas-tol", ra.feas_tol,
                      "Feasibility acceptance tolerance (negative: automatic)");
  recover->add_flag("--skip-postprocess", ra.skip_postprocess,
                    "Stop after the first solve; no support refinement");

  EvalArgs ea;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score a run against its bundle");
  eval_cmd->add_option("--run", ea.run, "Run directory from `recover`");
  eval_cmd->add_option("--bundle", ea.bundle, "Truth bundle directory");
  eval_cmd->add_option("--out", ea.out, "Output directory")->required();
  eval_cmd->add_option("--config", ea.config_path, "JSON config file");
  eval_cmd->add_option("--rating", ea.rating, "Appliance rating for thresholds, kW");
  eval_cmd->add_option("--match-window", ea.match_window, "Match window, minutes");
  eval_cmd->add_option("--min-gap", ea.min_gap, "Detection merge gap, minutes");
  eval_cmd->add_option("--grid-step", ea.grid_step, "Threshold grid step");
  eval_cmd->add_option("--grid-max", ea.grid_max, "Threshold grid maximum");
  eval_cmd->add_option("--fp-denominator", ea.fp_denominator,
                       "False-positive rate denominator (non-positive: N*T - truth)");
  eval_cmd->add_flag("--roc,!--no-roc", ea.do_roc, "Compute the detection ROC");

  PlotArgs pa;
  CLI::App* plot = app.add_subcommand("plot", "Emit plot-ready figure data");
  plot->add_option("--run", pa.run, "Run directory from `recover`");
  plot->add_option("--bundle", pa.bundle, "Truth bundle directory");
  plot->add_option("--out", pa.out, "Output directory")->required();
  plot->add_option("--config", pa.config_path, "JSON config file");
  plot->add_option("--figure", pa.figure, "Figure id: ev-profile | irradiance")
      ->required();
  plot->add_option("--house", pa.house, "House index for ev-profile");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      return cmd_synth(sa, load_config_file(sa.config_path), synth);
    } else if (recover->parsed()) {
      return cmd_recover(ra, load_config_file(ra.config_path), recover);
    } else if (eval_cmd->parsed()) {
      return cmd_eval(ea, load_config_file(ea.config_path), eval_cmd);
    } else if (plot->parsed()) {
      return cmd_plot(pa, load_config_file(pa.config_path), plot);
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitIo;
  }
  return kExitUsage;
}
