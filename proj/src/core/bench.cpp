#include "core/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "core/error.hpp"
#include "core/metrics.hpp"
#include "core/network.hpp"
#include "core/solvers.hpp"

namespace esi::bench {

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

mesh::SphereBase base_from_name(const std::string& name) {
  if (name == "tetra") return mesh::SphereBase::Tetrahedron;
  if (name == "octa") return mesh::SphereBase::Octahedron;
  if (name == "icosa") return mesh::SphereBase::Icosahedron;
  raise(ErrorCode::ConfigError, "unknown mesh base: " + name);
}

}  // namespace

Problem build_problem(const config::Config& cfg) {
  Problem p;
  if (cfg.has("problem.mesh")) {
    p.m = mesh::load_mesh(cfg.get_string("problem.mesh"));
  } else {
    p.m = mesh::make_sphere_mesh(base_from_name(cfg.get_string("problem.mesh_base", "octa")),
                                 cfg.get_int("problem.mesh_subdiv", 3),
                                 cfg.get_double("problem.mesh_radius_cm", 8.0));
  }
  if (cfg.has("problem.electrodes")) {
    p.electrodes = mesh::load_electrodes(cfg.get_string("problem.electrodes"));
  } else {
    p.electrodes = mesh::fibonacci_electrodes(cfg.get_int("problem.electrode_count", 32),
                                              cfg.get_double("problem.electrode_radius_cm", 10.0));
  }
  if (cfg.has("problem.leadfield")) {
    p.lead = forward::load_leadfield(cfg.get_string("problem.leadfield"));
    if (p.lead.sources() != p.m.element_count())
      raise(ErrorCode::ConfigError, "lead field sources do not match the mesh element count");
  } else {
    p.lead = forward::synth_leadfield(p.m, p.electrodes);
  }
  // Gain calibration: rescale so a unit source produces an O(1) scalp
  // signal, keeping source and scalp amplitudes commensurate. "auto" divides
  // by the mean column norm; any positive number divides by that value.
  const std::string gain = cfg.get_string("problem.gain_scale", "auto");
  if (gain == "auto") {
    double acc = 0.0;
    for (int j = 0; j < p.lead.sources(); ++j) acc += p.lead.m.col(j).norm();
    p.lead.m /= acc / double(p.lead.sources());
  } else {
    const double g = cfg.get_double("problem.gain_scale");
    if (!(g > 0.0)) raise(ErrorCode::ConfigError, "problem.gain_scale must be positive or 'auto'");
    p.lead.m /= g;
  }
  p.time_samples = cfg.get_int("problem.time_samples", 40);
  p.epoch_seconds = cfg.get_double("problem.epoch_seconds", 1.0);
  p.tbf = synth::make_default_tbf(p.time_samples, p.epoch_seconds);
  return p;
}

ScenarioKind scenario_from_name(const std::string& name) {
  if (name == "snr") return ScenarioKind::SnrSweep;
  if (name == "extent") return ScenarioKind::ExtentSweep;
  if (name == "pattern") return ScenarioKind::PatternSweep;
  if (name == "correlation") return ScenarioKind::CorrelationSweep;
  raise(ErrorCode::ConfigError, "unknown scenario: " + name + " (expected snr|extent|pattern|correlation)");
}

ScenarioConfig scenario_config(const config::Config& cfg, const std::string& scenario_name) {
  ScenarioConfig sc;
  sc.kind = scenario_from_name(scenario_name);
  sc.trials = cfg.get_int("bench.trials", 25);
  if (sc.trials < 1) raise(ErrorCode::ConfigError, "bench.trials must be >= 1");
  if (cfg.has("bench.methods")) sc.methods = cfg.get_string_list("bench.methods");
  if (sc.methods.empty()) sc.methods = {"dstdae", "wmne", "loreta", "focuss"};
  sc.checkpoint = cfg.get_string("bench.checkpoint", "");
  sc.master_seed = cfg.get_u64("bench.seed", 0);
  if (cfg.has("bench.snr_list")) sc.snr_list = cfg.get_double_list("bench.snr_list");
  sc.snr_area_cm2 = cfg.get_double("bench.snr_area_cm2", 5.0);
  if (cfg.has("bench.extent_list")) sc.extent_list = cfg.get_double_list("bench.extent_list");
  sc.extent_snr_db = cfg.get_double("bench.extent_snr_db", -5.0);
  if (cfg.has("bench.pattern_list")) {
    sc.pattern_list.clear();
    for (const std::string& item : cfg.get_string_list("bench.pattern_list")) {
      const auto colon = item.find(':');
      if (colon == std::string::npos)
        raise(ErrorCode::ConfigError, "pattern entries use a1:a2, got: " + item);
      sc.pattern_list.emplace_back(std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
    }
  }
  sc.pattern_snr_db = cfg.get_double("bench.pattern_snr_db", -5.0);
  if (cfg.has("bench.correlation_list"))
    sc.correlation_list = cfg.get_double_list("bench.correlation_list");
  sc.correlation_area_cm2 = cfg.get_double("bench.correlation_area_cm2", 7.0);
  sc.correlation_snr_db = cfg.get_double("bench.correlation_snr_db", -5.0);
  if (cfg.has("bench.lambda")) {
    const std::string v = cfg.get_string("bench.lambda");
    if (v != "auto") sc.fixed_lambda = cfg.get_double("bench.lambda");
  }
  sc.focuss_max_iter = cfg.get_int("bench.focuss_max_iter", 20);
  sc.focuss_tol = cfg.get_double("bench.focuss_tol", 1e-6);
  return sc;
}

namespace {

struct Condition {
  std::string label;
  double snr_db = 0.0;
  std::vector<double> areas;
  std::optional<double> rho;
};

std::vector<Condition> make_conditions(const ScenarioConfig& sc) {
  std::vector<Condition> out;
  char label[64];
  switch (sc.kind) {
    case ScenarioKind::SnrSweep:
      for (double snr : sc.snr_list) {
        std::snprintf(label, sizeof label, "%gdB", snr);
        out.push_back({label, snr, {sc.snr_area_cm2}, std::nullopt});
      }
      break;
    case ScenarioKind::ExtentSweep:
      for (double area : sc.extent_list) {
        std::snprintf(label, sizeof label, "%gcm2", area);
        out.push_back({label, sc.extent_snr_db, {area}, std::nullopt});
      }
      break;
    case ScenarioKind::PatternSweep:
      for (const auto& [a1, a2] : sc.pattern_list) {
        std::snprintf(label, sizeof label, "%gx%g", a1, a2);
        out.push_back({label, sc.pattern_snr_db, {a1, a2}, std::nullopt});
      }
      break;
    case ScenarioKind::CorrelationSweep:
      for (double rho : sc.correlation_list) {
        std::snprintf(label, sizeof label, "rho%g", rho);
        out.push_back({label, sc.correlation_snr_db,
                       {sc.correlation_area_cm2, sc.correlation_area_cm2}, rho});
      }
      break;
  }
  if (out.empty()) raise(ErrorCode::ConfigError, "scenario has no conditions");
  return out;
}

struct Truth {
  std::vector<mesh::Patch> patches;
  Eigen::MatrixXd s;        // Ns x T
  Eigen::MatrixXd x_clean;  // Nc x T
  Eigen::MatrixXd x_noisy;
  std::vector<int> labels;  // per element, 1 inside any patch
  std::vector<int> support;
};

Truth make_truth(const Problem& p, const Condition& cond, Rng& rng) {
  Truth t;
  t.patches = synth::place_patches_fixed(p.m, cond.areas, rng);
  const int ns = p.m.element_count();
  const int ts = p.tbf.samples();

  Eigen::MatrixXd phi(int(t.patches.size()), ts);
  if (cond.rho.has_value()) {
    const auto [a, b] = synth::correlated_pair(p.tbf, *cond.rho, rng);
    phi.row(0) = a.transpose();
    phi.row(1) = b.transpose();
  } else {
    for (int k = 0; k < int(t.patches.size()); ++k)
      phi.row(k) = synth::sample_temporal_state(p.tbf, rng, -1.0, 1.0).transpose();
  }

  t.s = Eigen::MatrixXd::Zero(ns, ts);
  for (int k = 0; k < int(t.patches.size()); ++k)
    for (int e : t.patches[std::size_t(k)].indices) t.s.row(e) = phi.row(k);

  t.x_clean = p.lead.m * t.s;
  const double norm = t.x_clean.norm();
  if (norm > 0.0) {
    // Unit-RMS scalp signal, matching the training-set normalization.
    const double c = std::sqrt(double(p.lead.channels()) * double(ts)) / norm;
    t.s *= c;
    t.x_clean *= c;
  }
  t.x_noisy = forward::add_noise(t.x_clean, cond.snr_db, rng.next());

  t.labels.assign(std::size_t(ns), 0);
  for (const auto& patch : t.patches)
    for (int e : patch.indices) {
      t.labels[std::size_t(e)] = 1;
      t.support.push_back(e);
    }
  std::sort(t.support.begin(), t.support.end());
  return t;
}

struct Row {
  std::string condition;
  std::string method;
  int trial = 0;
  bool ok = false;
  double auc = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double dle = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  double detection_rate = std::numeric_limits<double>::quiet_NaN();
  double wall_s = 0.0;
};

const char* scenario_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::SnrSweep: return "snr";
    case ScenarioKind::ExtentSweep: return "extent";
    case ScenarioKind::PatternSweep: return "pattern";
    case ScenarioKind::CorrelationSweep: return "correlation";
  }
  return "?";
}

struct Summary {
  int n = 0;
  double mean = 0.0, sem = 0.0;
};

Summary summarize(const std::vector<double>& values) {
  Summary s;
  std::vector<double> v;
  for (double x : values)
    if (std::isfinite(x)) v.push_back(x);
  s.n = int(v.size());
  if (v.empty()) {
    s.mean = s.sem = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double acc = 0.0;
  for (double x : v) acc += x;
  s.mean = acc / double(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sem = std::sqrt(ss / double(v.size() - 1)) / std::sqrt(double(v.size()));
  }
  return s;
}

}  // namespace

void run_scenario(const Problem& problem, const ScenarioConfig& sc, const std::string& out_csv) {
  const auto run_start = std::chrono::steady_clock::now();
  const std::vector<Condition> conditions = make_conditions(sc);

  const bool wants_net =
      std::find(sc.methods.begin(), sc.methods.end(), "dstdae") != sc.methods.end();
  std::optional<dae::DstDae<float>> net;
  if (wants_net) {
    if (sc.checkpoint.empty())
      raise(ErrorCode::ConfigError, "bench.checkpoint is required when dstdae is benchmarked");
    try {
      net = dae::DstDae<float>::load(sc.checkpoint);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Io)
        raise(ErrorCode::ConfigError, "cannot open checkpoint: " + sc.checkpoint);
      throw;
    }
    if (net->arch().nc != problem.lead.channels() || net->arch().ns != problem.lead.sources() ||
        net->arch().t != problem.time_samples)
      raise(ErrorCode::ConfigError, "checkpoint dims do not match the configured problem");
  }
  for (const std::string& m : sc.methods) {
    if (m != "dstdae") solvers::method_from_name(m);  // validates names early
  }

  const solvers::PushThroughOp wmne_op = solvers::prepare_wmne(problem.lead);
  const solvers::PushThroughOp loreta_op = solvers::prepare_loreta(problem.lead, problem.m);
  const std::vector<double> grid = solvers::default_lambda_grid(problem.lead);

  auto pick_lambda = [&](const solvers::PushThroughOp& op, const Eigen::MatrixXd& x,
                         double noise_power) {
    for (double lambda : grid) {
      const double residual = (x - problem.lead.m * op.solve(x, lambda)).squaredNorm();
      if (residual >= noise_power) return lambda;
    }
    return grid[grid.size() / 2];
  };

  std::vector<Row> rows(conditions.size() * std::size_t(sc.trials) * sc.methods.size());

  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    const Condition& cond = conditions[ci];
    for (int trial = 0; trial < sc.trials; ++trial) {
      Rng rng = Rng::derive(sc.master_seed, {std::uint64_t(ci), std::uint64_t(trial)});
      const Truth truth = make_truth(problem, cond, rng);
      const double noise_power = solvers::noise_power_from_snr(truth.x_noisy, cond.snr_db);

      for (std::size_t mi = 0; mi < sc.methods.size(); ++mi) {
        const std::string& method = sc.methods[mi];
        Row& row = rows[(ci * std::size_t(sc.trials) + std::size_t(trial)) * sc.methods.size() + mi];
        row.condition = cond.label;
        row.method = method;
        row.trial = trial;
        const auto t0 = std::chrono::steady_clock::now();
        try {
          Eigen::MatrixXd s_hat;
          if (method == "dstdae") {
            s_hat = net->estimate(truth.x_noisy);
          } else if (method == "wmne") {
            const double lambda =
                sc.fixed_lambda ? *sc.fixed_lambda : pick_lambda(wmne_op, truth.x_noisy, noise_power);
            s_hat = wmne_op.solve(truth.x_noisy, lambda);
          } else if (method == "loreta") {
            const double lambda = sc.fixed_lambda
                                      ? *sc.fixed_lambda
                                      : pick_lambda(loreta_op, truth.x_noisy, noise_power);
            s_hat = loreta_op.solve(truth.x_noisy, lambda);
          } else {
            const double lambda =
                sc.fixed_lambda ? *sc.fixed_lambda : pick_lambda(wmne_op, truth.x_noisy, noise_power);
            s_hat = solvers::focuss(problem.lead, truth.x_noisy, lambda, sc.focuss_max_iter,
                                    sc.focuss_tol)
                        .s;
          }
          row.auc = metrics::auc(metrics::source_energy(s_hat), truth.labels);
          row.rmse = metrics::rmse_rel(truth.s, s_hat);
          const metrics::DleResult d = metrics::dle(problem.m, truth.s, s_hat, truth.patches);
          row.dle = d.mean_cm;
          row.detection_rate = d.patch_count > 0 ? double(d.detected) / double(d.patch_count) : 0.0;
          row.sd = metrics::sd(problem.m, truth.support, s_hat);
          row.ok = true;
        } catch (const Error&) {
          row.ok = false;  // failed row: metrics stay nan, the run continues
        }
        row.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
    }
  }

  const char* sname = scenario_name(sc.kind);

  {
    std::ofstream out(out_csv);
    if (!out) raise(ErrorCode::Io, "cannot open report file: " + out_csv);
    out << "scenario,condition,method,trial,auc,rmse,dle_cm,sd_cm,detection_rate\n";
    for (const Row& r : rows)
      out << sname << ',' << r.condition << ',' << r.method << ',' << r.trial << ',' << fmt(r.auc)
          << ',' << fmt(r.rmse) << ',' << fmt(r.dle) << ',' << fmt(r.sd) << ','
          << fmt(r.detection_rate) << '\n';
    if (!out) raise(ErrorCode::Io, "write failed: " + out_csv);
  }

  {
    // Wall-clock data lives beside the deterministic detail CSV.
    std::ofstream out(out_csv + ".timing.csv");
    if (!out) raise(ErrorCode::Io, "cannot open timing file");
    out << "scenario,condition,method,trial,wall_time_s\n";
    for (const Row& r : rows)
      out << sname << ',' << r.condition << ',' << r.method << ',' << r.trial << ','
          << fmt(r.wall_s) << '\n';
    const double total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count();
    out << sname << ",total,,," << fmt(total) << '\n';
  }

  {
    std::ofstream out(out_csv + ".summary.csv");
    if (!out) raise(ErrorCode::Io, "cannot open summary file");
    out << "scenario,condition,method,trials,auc_mean,auc_sem,rmse_mean,rmse_sem,dle_mean,dle_sem,"
           "dle_detections,sd_mean,sd_sem,detection_rate,wall_time_mean_s\n";
    for (const Condition& cond : conditions) {
      for (const std::string& method : sc.methods) {
        std::vector<double> aucs, rmses, dles, sds, dets, walls;
        for (const Row& r : rows) {
          if (r.condition != cond.label || r.method != method) continue;
          aucs.push_back(r.auc);
          rmses.push_back(r.rmse);
          dles.push_back(r.dle);
          sds.push_back(r.sd);
          dets.push_back(r.detection_rate);
          walls.push_back(r.wall_s);
        }
        const Summary sa = summarize(aucs), sr = summarize(rmses), sd_ = summarize(dles),
                      ss = summarize(sds), sdet = summarize(dets), sw = summarize(walls);
        out << sname << ',' << cond.label << ',' << method << ',' << sc.trials << ','
            << fmt(sa.mean) << ',' << fmt(sa.sem) << ',' << fmt(sr.mean) << ',' << fmt(sr.sem)
            << ',' << fmt(sd_.mean) << ',' << fmt(sd_.sem) << ',' << sd_.n << ',' << fmt(ss.mean)
            << ',' << fmt(ss.sem) << ',' << fmt(sdet.mean) << ',' << fmt(sw.mean) << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_synth(const std::string& config_path, const std::string& out_override) {
  const config::Config cfg = config::Config::load(config_path);
  const Problem problem = build_problem(cfg);

  synth::SynthesisConfig sy;
  sy.sample_count = cfg.get_int("synthesis.samples", 1000);
  sy.k_max = cfg.get_int("synthesis.k_max", 1);
  sy.a_max_cm2 = cfg.get_double("synthesis.a_max_cm2", 20.0);
  sy.zeta_lo = cfg.get_double("synthesis.zeta_low", -1.0);
  sy.zeta_hi = cfg.get_double("synthesis.zeta_high", 1.0);
  sy.master_seed = cfg.get_u64("synthesis.seed", 0);
  sy.normalize = cfg.get_bool("synthesis.normalize", true);
  sy.snr_db = cfg.get_double("synthesis.snr_db", 0.0);
  sy.epoch_seconds = problem.epoch_seconds;

  const std::string out =
      out_override.empty() ? cfg.get_string("synthesis.out") : out_override;
  synth::generate_dataset(problem.m, problem.lead, problem.tbf, sy, out);

  if (cfg.has("synthesis.recording_out")) {
    // One held-out noisy recording for smoke-testing the estimate path.
    Rng rng = Rng::derive(sy.master_seed, {0xEC});
    const synth::GeneratedSample sample =
        synth::generate_sample(problem.m, problem.lead, problem.tbf, sy, rng);
    const Eigen::MatrixXd noisy = forward::add_noise(sample.X, sy.snr_db, rng.next());
    forward::save_recording(noisy, cfg.get_string("synthesis.recording_out"));
  }

  if (cfg.has("problem.mesh_out")) mesh::save_mesh(problem.m, cfg.get_string("problem.mesh_out"));
  if (cfg.has("problem.electrodes_out"))
    mesh::save_electrodes(problem.electrodes, cfg.get_string("problem.electrodes_out"));
  if (cfg.has("problem.leadfield_out"))
    forward::save_leadfield(problem.lead, cfg.get_string("problem.leadfield_out"));
}

namespace {

dae::TrainConfig train_config(const config::Config& cfg) {
  dae::TrainConfig tc;
  tc.lambda1 = cfg.get_double("training.lambda1", 10.0);
  tc.lambda2 = cfg.get_double("training.lambda2", 150.0);
  tc.delta = cfg.get_double("training.delta", 0.1);
  tc.l1 = cfg.get_double("training.l1", 1e-5);
  tc.l2 = cfg.get_double("training.l2", 1e-5);
  tc.snr_db = cfg.get_double("training.snr_db", 0.0);
  tc.lr_max = cfg.get_double("training.lr_max", 1e-4);
  tc.lr_min = cfg.get_double("training.lr_min", tc.lr_max * 0.1);
  tc.epochs = cfg.get_int("training.epochs", 300);
  tc.batch_size = cfg.get_int("training.batch_size", 32);
  tc.warmup_epochs = cfg.get_int("training.warmup_epochs", 20);
  tc.cooldown_epochs = cfg.get_int("training.cooldown_epochs", 20);
  tc.validation_fraction = cfg.get_double("training.validation_fraction", 0.1);
  tc.master_seed = cfg.get_u64("training.seed", 0);
  return tc;
}

}  // namespace

void cmd_train(const std::string& config_path, const std::string& dataset_path,
               const std::string& out_path, const std::string& resume_path) {
  const config::Config cfg = config::Config::load(config_path);
  const synth::Dataset data = synth::load_dataset(dataset_path);
  const dae::TrainConfig tc = train_config(cfg);

  dae::DstDae<float> net = [&] {
    if (!resume_path.empty()) return dae::DstDae<float>::load(resume_path);
    const Problem problem = build_problem(cfg);
    if (problem.lead.channels() != data.channels || problem.lead.sources() != data.sources)
      raise(ErrorCode::ConfigError, "configured lead field does not match the dataset dims");
    Rng rng = Rng::derive(tc.master_seed, {0xF00D});
    return dae::DstDae<float>::build(data.channels, data.sources, data.samples,
                                     cfg.get_int("training.f1", 16), cfg.get_int("training.f2", 16),
                                     cfg.get_int("training.kt", 5), cfg.get_int("training.ks", 64),
                                     problem.lead, rng);
  }();

  const std::string history =
      cfg.get_string("training.history_out", out_path + ".history.csv");
  dae::train(net, data, tc, out_path, history);
}

void cmd_estimate(const std::string& checkpoint_path, const std::string& input_path,
                  const std::string& out_path) {
  const dae::DstDae<float> net = dae::DstDae<float>::load(checkpoint_path);
  const Eigen::MatrixXd x = forward::load_recording(input_path);
  const Eigen::MatrixXd s = net.estimate(x);
  forward::save_recording(s, out_path);

  // Per-time activation maps: |S(j, t)| per element plus total energy.
  std::ofstream out(out_path + ".activation.csv");
  if (!out) raise(ErrorCode::Io, "cannot open activation file");
  out << "element,energy";
  for (int t = 0; t < int(s.cols()); ++t) out << ",t" << t;
  out << '\n';
  for (int j = 0; j < int(s.rows()); ++j) {
    out << j << ',' << fmt(s.row(j).squaredNorm());
    for (int t = 0; t < int(s.cols()); ++t) out << ',' << fmt(std::abs(s(j, t)));
    out << '\n';
  }
  if (!out) raise(ErrorCode::Io, "write failed: " + out_path + ".activation.csv");
}

void cmd_bench(const std::string& config_path, const std::string& scenario_name,
               const std::string& out_path) {
  const config::Config cfg = config::Config::load(config_path);
  const Problem problem = build_problem(cfg);
  const ScenarioConfig sc = scenario_config(cfg, scenario_name);
  run_scenario(problem, sc, out_path);
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

namespace {

struct DetailRow {
  std::string scenario, condition, method;
  double auc, rmse, dle, sd, det;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    const auto comma = line.find(',', pos);
    if (comma == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

double parse_field(const std::string& s) {
  if (s.empty() || s == "nan") return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

void write_bar_svg(const std::string& path, const std::string& title,
                   const std::vector<std::string>& conditions,
                   const std::vector<std::string>& methods,
                   const std::vector<std::vector<Summary>>& cells) {
  static const char* palette[] = {"#4878cf", "#ee854a", "#6acc64", "#d65f5f",
                                  "#956cb4", "#8c613c", "#dc7ec0"};
  const int bar_w = 18, group_gap = 24;
  const int plot_h = 220, margin_l = 60, margin_t = 40, margin_b = 60;
  const int group_w = int(methods.size()) * bar_w + group_gap;
  const int width = margin_l + int(conditions.size()) * group_w + 150;
  const int height = margin_t + plot_h + margin_b;

  double vmax = 0.0;
  for (const auto& row : cells)
    for (const auto& s : row)
      if (std::isfinite(s.mean)) vmax = std::max(vmax, s.mean + (std::isfinite(s.sem) ? s.sem : 0.0));
  if (vmax <= 0.0) vmax = 1.0;

  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot open plot file: " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n";
  out << "<text x='" << margin_l << "' y='20' font-family='sans-serif' font-size='14'>" << title
      << "</text>\n";
  out << "<line x1='" << margin_l << "' y1='" << margin_t + plot_h << "' x2='" << width - 130
      << "' y2='" << margin_t + plot_h << "' stroke='black'/>\n";
  out << "<line x1='" << margin_l << "' y1='" << margin_t << "' x2='" << margin_l << "' y2='"
      << margin_t + plot_h << "' stroke='black'/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = vmax * tick / 4.0;
    const int y = margin_t + plot_h - int(plot_h * tick / 4.0);
    out << "<text x='" << margin_l - 8 << "' y='" << y + 4
        << "' text-anchor='end' font-family='sans-serif' font-size='10'>" << fmt(v) << "</text>\n";
  }
  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    const int gx = margin_l + int(ci) * group_w + group_gap / 2;
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      const Summary& s = cells[ci][mi];
      if (!std::isfinite(s.mean)) continue;
      const int h = int(plot_h * std::max(0.0, s.mean) / vmax);
      const int x = gx + int(mi) * bar_w;
      const int y = margin_t + plot_h - h;
      out << "<rect x='" << x << "' y='" << y << "' width='" << bar_w - 3 << "' height='" << h
          << "' fill='" << palette[mi % 7] << "'/>\n";
      if (std::isfinite(s.sem) && s.sem > 0.0) {
        const int eh = int(plot_h * s.sem / vmax);
        const int cx = x + (bar_w - 3) / 2;
        out << "<line x1='" << cx << "' y1='" << y - eh << "' x2='" << cx << "' y2='" << y + eh
            << "' stroke='black'/>\n";
      }
    }
    out << "<text x='" << gx + int(methods.size()) * bar_w / 2 << "' y='" << margin_t + plot_h + 16
        << "' text-anchor='middle' font-family='sans-serif' font-size='11'>" << conditions[ci]
        << "</text>\n";
  }
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    const int y = margin_t + int(mi) * 18;
    out << "<rect x='" << width - 120 << "' y='" << y << "' width='12' height='12' fill='"
        << palette[mi % 7] << "'/>\n";
    out << "<text x='" << width - 102 << "' y='" << y + 10
        << "' font-family='sans-serif' font-size='11'>" << methods[mi] << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace

void cmd_report(const std::string& report_path, const std::string& out_dir, bool plots,
                const std::vector<std::string>& history_paths) {
  std::ifstream in(report_path);
  if (!in) raise(ErrorCode::Io, "cannot open report: " + report_path);
  std::string line;
  if (!std::getline(in, line)) raise(ErrorCode::EmptyReport, "report has no header");

  std::vector<DetailRow> rows;
  std::vector<std::string> conditions, methods;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 9) raise(ErrorCode::FormatError, "bad report row: " + line);
    DetailRow r{f[0], f[1], f[2], parse_field(f[4]), parse_field(f[5]), parse_field(f[6]),
                parse_field(f[7]), parse_field(f[8])};
    if (std::find(conditions.begin(), conditions.end(), r.condition) == conditions.end())
      conditions.push_back(r.condition);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
      methods.push_back(r.method);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) raise(ErrorCode::EmptyReport, "report holds no data rows");

  struct MetricDef {
    const char* name;
    double DetailRow::* field;
  };
  const MetricDef defs[] = {{"auc", &DetailRow::auc},
                            {"rmse", &DetailRow::rmse},
                            {"dle", &DetailRow::dle},
                            {"sd", &DetailRow::sd},
                            {"detection_rate", &DetailRow::det}};

  for (const auto& def : defs) {
    std::vector<std::vector<Summary>> cells(conditions.size(),
                                            std::vector<Summary>(methods.size()));
    for (std::size_t ci = 0; ci < conditions.size(); ++ci)
      for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        std::vector<double> v;
        for (const auto& r : rows)
          if (r.condition == conditions[ci] && r.method == methods[mi]) v.push_back(r.*def.field);
        cells[ci][mi] = summarize(v);
      }

    std::ofstream out(out_dir + "/" + def.name + ".csv");
    if (!out) raise(ErrorCode::Io, "cannot write report tables into " + out_dir);
    out << "condition";
    for (const auto& m : methods) out << ',' << m << "_mean," << m << "_sem," << m << "_n";
    out << '\n';
    for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
      out << conditions[ci];
      for (std::size_t mi = 0; mi < methods.size(); ++mi)
        out << ',' << fmt(cells[ci][mi].mean) << ',' << fmt(cells[ci][mi].sem) << ','
            << cells[ci][mi].n;
      out << '\n';
    }
    if (plots)
      write_bar_svg(out_dir + "/" + def.name + ".svg", std::string(def.name) + " (mean ± SEM)",
                    conditions, methods, cells);
  }

  if (!history_paths.empty()) {
    // Timing table: mean epoch time per training size plus a linear fit.
    std::vector<std::pair<double, double>> points;  // (train_samples, mean_epoch_time)
    for (const std::string& hp : history_paths) {
      std::ifstream hin(hp);
      if (!hin) raise(ErrorCode::Io, "cannot open history: " + hp);
      std::string hline;
      if (!std::getline(hin, hline)) raise(ErrorCode::FormatError, "empty history: " + hp);
      double time_acc = 0.0, samples = 0.0;
      int count = 0;
      while (std::getline(hin, hline)) {
        if (hline.empty()) continue;
        const auto f = split_csv_line(hline);
        if (f.size() < 8) raise(ErrorCode::FormatError, "bad history row in " + hp);
        time_acc += parse_field(f[6]);
        samples = parse_field(f[7]);
        ++count;
      }
      if (count == 0) raise(ErrorCode::FormatError, "history has no epochs: " + hp);
      points.emplace_back(samples, time_acc / double(count));
    }
    std::sort(points.begin(), points.end());

    std::ofstream out(out_dir + "/timing_table.csv");
    out << "train_samples,mean_epoch_time_s\n";
    for (const auto& [n, t] : points) out << fmt(n) << ',' << fmt(t) << '\n';

    if (points.size() >= 2) {
      double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
      const double n = double(points.size());
      for (const auto& [x, y] : points) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
      }
      const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
      const double intercept = (sy - slope * sx) / n;
      double ss_res = 0, ss_tot = 0;
      for (const auto& [x, y] : points) {
        const double e = y - (slope * x + intercept);
        ss_res += e * e;
        ss_tot += (y - sy / n) * (y - sy / n);
      }
      const double r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
      std::ofstream fit(out_dir + "/timing_fit.csv");
      fit << "slope_s_per_sample,intercept_s,r2\n";
      fit << fmt(slope) << ',' << fmt(intercept) << ',' << fmt(r2) << '\n';
    }
  }
}

}  // namespace esi::bench
