#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/forward.hpp"
#include "core/mesh.hpp"
#include "core/synthesis.hpp"

namespace esi::bench {

// Shared experiment fixture assembled from the [problem] config section:
// mesh and electrodes are loaded from files or generated, the lead field is
// loaded or synthesized, and the temporal basis is the default damped
// sinusoid bank.
struct Problem {
  mesh::CorticalMesh m;
  std::vector<mesh::Vec3> electrodes;
  forward::LeadField lead;
  synth::TemporalBasis tbf;
  int time_samples = 40;
  double epoch_seconds = 1.0;
};

Problem build_problem(const config::Config& cfg);

enum class ScenarioKind { SnrSweep, ExtentSweep, PatternSweep, CorrelationSweep };

ScenarioKind scenario_from_name(const std::string& name);

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::SnrSweep;
  int trials = 25;
  std::vector<std::string> methods;  // dstdae | wmne | loreta | focuss
  std::string checkpoint;            // required when dstdae is listed
  std::uint64_t master_seed = 0;
  // per-kind condition parameters
  std::vector<double> snr_list = {-5, 0, 5, 10};
  double snr_area_cm2 = 5.0;
  std::vector<double> extent_list = {3, 6, 10, 15};
  double extent_snr_db = -5.0;
  std::vector<std::pair<double, double>> pattern_list = {{4, 4}, {4, 10}, {10, 4}, {10, 10}};
  double pattern_snr_db = -5.0;
  std::vector<double> correlation_list = {0, 0.3, 0.6, 0.9};
  double correlation_area_cm2 = 7.0;
  double correlation_snr_db = -5.0;
  std::optional<double> fixed_lambda;  // discrepancy-principle selection when unset
  int focuss_max_iter = 20;
  double focuss_tol = 1e-6;
};

ScenarioConfig scenario_config(const config::Config& cfg, const std::string& scenario_name);

// Runs every condition x trial x method, writing the detail CSV to out_csv,
// per-row wall times to <out_csv>.timing.csv and the mean +/- SEM summary to
// <out_csv>.summary.csv. The detail CSV depends only on the config and
// master seed.
void run_scenario(const Problem& problem, const ScenarioConfig& sc, const std::string& out_csv);

// Command-level entry points shared by the C API and the CLI. All throw
// esi::Error on failure.
void cmd_synth(const std::string& config_path, const std::string& out_override);
void cmd_train(const std::string& config_path, const std::string& dataset_path,
               const std::string& out_path, const std::string& resume_path);
void cmd_estimate(const std::string& checkpoint_path, const std::string& input_path,
                  const std::string& out_path);
void cmd_bench(const std::string& config_path, const std::string& scenario_name,
               const std::string& out_path);
void cmd_report(const std::string& report_path, const std::string& out_dir, bool plots,
                const std::vector<std::string>& history_paths);

}  // namespace esi::bench
