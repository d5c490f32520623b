// esidae command-line front end. Links only the C API.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "esidae/esidae.h"

namespace {

int finish(esi_status status) {
  if (status == ESI_OK) return 0;
  std::fprintf(stderr, "error [%s]: %s\n", esi_status_name(status), esi_last_error());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"esidae - electromagnetic source imaging workbench"};
  app.require_subcommand(1);

  std::string config, out, dataset, resume, checkpoint, input, scenario, report_in, report_dir;
  std::vector<std::string> histories;
  bool plots = false;

  auto* synth = app.add_subcommand("synth", "generate a training dataset (ESID)");
  synth->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out, "dataset output path (overrides synthesis.out)");

  auto* train = app.add_subcommand("train", "train the network on a dataset");
  train->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
  train->add_option("--dataset", dataset, "ESID dataset")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "checkpoint output path (ESIW)")->required();
  train->add_option("--resume", resume, "continue from an existing checkpoint")
      ->check(CLI::ExistingFile);

  auto* estimate = app.add_subcommand("estimate", "reconstruct sources from a recording");
  estimate->add_option("--checkpoint", checkpoint, "trained checkpoint (ESIW)")
      ->required()
      ->check(CLI::ExistingFile);
  estimate->add_option("--input", input, "scalp recording (ESIR)")
      ->required()
      ->check(CLI::ExistingFile);
  estimate->add_option("--out", out, "source estimate output path")->required();

  auto* bench = app.add_subcommand("bench", "run a Monte Carlo scenario suite");
  bench->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
  bench->add_option("--scenario", scenario, "snr | extent | pattern | correlation")->required();
  bench->add_option("--out", out, "detail CSV output path")->required();

  auto* report = app.add_subcommand("report", "summarize a bench detail CSV");
  report->add_option("--in", report_in, "detail CSV")->required()->check(CLI::ExistingFile);
  report->add_option("--out", report_dir, "output directory")->required();
  report->add_flag("--plots", plots, "emit SVG bar charts");
  report->add_option("--history", histories,
                     "training history CSV(s) for the epoch-time table (repeatable)");

  CLI11_PARSE(app, argc, argv);

  if (synth->parsed()) return finish(esi_cmd_synth(config.c_str(), out.empty() ? nullptr : out.c_str()));
  if (train->parsed())
    return finish(esi_cmd_train(config.c_str(), dataset.c_str(), out.c_str(),
                                resume.empty() ? nullptr : resume.c_str()));
  if (estimate->parsed())
    return finish(esi_cmd_estimate(checkpoint.c_str(), input.c_str(), out.c_str()));
  if (bench->parsed())
    return finish(esi_cmd_bench(config.c_str(), scenario.c_str(), out.c_str()));
  if (report->parsed()) {
    std::string joined;
    for (const auto& h : histories) {
      if (!joined.empty()) joined += ',';
      joined += h;
    }
    return finish(esi_cmd_report(report_in.c_str(), report_dir.c_str(), plots ? 1 : 0,
                                 joined.empty() ? nullptr : joined.c_str()));
  }
  return 1;
}
