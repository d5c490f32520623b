#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "esidae/esidae.h"

namespace {

const char* kConfig = R"(
[problem]
mesh_base = tetra
mesh_subdiv = 1
mesh_radius_cm = 8
electrode_count = 8
electrode_radius_cm = 10
time_samples = 40

[synthesis]
samples = 150
k_max = 1
a_max_cm2 = 20
seed = 5
out = capi_ds.esid
recording_out = capi_rec.esir
snr_db = 0

[training]
epochs = 8
warmup_epochs = 2
cooldown_epochs = 2
batch_size = 25
lr_max = 1e-3
f1 = 4
f2 = 4
kt = 5
ks = 8
seed = 6
snr_db = 0

[bench]
trials = 2
methods = dstdae, wmne
checkpoint = capi_net.esiw
seed = 7
snr_list = -5, 0
)";

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(bool(in));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    rows.push_back(fields);
  }
  return rows;
}

}  // namespace

TEST_CASE("version and status names") {
  CHECK(esi_version() != nullptr);
  CHECK(std::strcmp(esi_status_name(ESI_OK), "Ok") == 0);
  CHECK(std::strcmp(esi_status_name(ESI_ERR_SHAPE), "ShapeError") == 0);
}

TEST_CASE("mesh handles: generate, info, patch growth, save/load") {
  esi_mesh* mesh = nullptr;
  REQUIRE(esi_mesh_generate("tetra", 2, 8.0, &mesh) == ESI_OK);
  uint32_t nv = 0, ne = 0;
  double area = 0.0;
  REQUIRE(esi_mesh_info(mesh, &nv, &ne, &area) == ESI_OK);
  CHECK(ne == 64);
  CHECK(area > 0.0);

  uint32_t elems[64];
  uint32_t count = 0;
  double patch_area = 0.0;
  REQUIRE(esi_mesh_grow_patch(mesh, 3, area / 7.0, elems, 64, &count, &patch_area) == ESI_OK);
  CHECK(count >= 1);
  CHECK(patch_area >= area / 7.0);

  REQUIRE(esi_mesh_save(mesh, "capi_mesh.txt") == ESI_OK);
  esi_mesh* back = nullptr;
  REQUIRE(esi_mesh_load("capi_mesh.txt", &back) == ESI_OK);
  uint32_t ne2 = 0;
  esi_mesh_info(back, nullptr, &ne2, nullptr);
  CHECK(ne2 == ne);
  esi_mesh_free(back);
  esi_mesh_free(mesh);
  std::remove("capi_mesh.txt");

  CHECK(esi_mesh_generate("dodeca", 1, 8.0, &back) == ESI_ERR_INVALID_ARGUMENT);
  CHECK(esi_mesh_load("does_not_exist.txt", &back) == ESI_ERR_IO);
  CHECK(std::string(esi_last_error()).size() > 0);
}

TEST_CASE("lead field, projection, noise, solvers through the C surface") {
  esi_mesh* mesh = nullptr;
  REQUIRE(esi_mesh_generate("tetra", 1, 8.0, &mesh) == ESI_OK);

  std::vector<double> electrodes;
  for (int i = 0; i < 8; ++i) {
    const double a = 2.0 * M_PI * i / 8.0;
    electrodes.push_back(12.0 * std::cos(a));
    electrodes.push_back(12.0 * std::sin(a));
    electrodes.push_back(i % 2 ? 3.0 : -3.0);
  }
  esi_leadfield* lf = nullptr;
  REQUIRE(esi_leadfield_synth(mesh, electrodes.data(), 8, &lf) == ESI_OK);
  uint32_t nc = 0, ns = 0;
  REQUIRE(esi_leadfield_dims(lf, &nc, &ns) == ESI_OK);
  CHECK(nc == 8);
  CHECK(ns == 16);

  REQUIRE(esi_leadfield_save(lf, "capi_lf.esil") == ESI_OK);
  esi_leadfield* lf2 = nullptr;
  REQUIRE(esi_leadfield_load("capi_lf.esil", &lf2) == ESI_OK);
  esi_leadfield_free(lf2);
  std::remove("capi_lf.esil");

  // S with a single active source row
  std::vector<double> s_data(16 * 40, 0.0);
  for (int t = 0; t < 40; ++t) s_data[std::size_t(5 * 40 + t)] = std::sin(0.2 * t) + 1.5;
  esi_matrix* s = nullptr;
  REQUIRE(esi_matrix_create(16, 40, s_data.data(), &s) == ESI_OK);
  esi_matrix* x = nullptr;
  REQUIRE(esi_forward_project(lf, s, &x) == ESI_OK);
  uint32_t xr = 0, xc = 0;
  esi_matrix_dims(x, &xr, &xc);
  CHECK(xr == 8);
  CHECK(xc == 40);

  esi_matrix* noisy = nullptr;
  REQUIRE(esi_add_noise(x, 0.0, 99, &noisy) == ESI_OK);
  std::vector<double> xv(8 * 40), nv(8 * 40);
  esi_matrix_copy_data(x, xv.data());
  esi_matrix_copy_data(noisy, nv.data());
  double sig = 0.0, eps = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    sig += xv[i] * xv[i];
    const double d = nv[i] - xv[i];
    eps += d * d;
  }
  CHECK(std::abs(10.0 * std::log10(sig / eps)) < 1e-10);

  esi_matrix* s_wmne = nullptr;
  REQUIRE(esi_solve_wmne(lf, noisy, 0.1, &s_wmne) == ESI_OK);
  esi_matrix* s_loreta = nullptr;
  REQUIRE(esi_solve_loreta(lf, mesh, noisy, 0.1, &s_loreta) == ESI_OK);
  esi_matrix* s_focuss = nullptr;
  uint32_t iters = 0;
  int converged = 0;
  REQUIRE(esi_solve_focuss(lf, noisy, 0.1, 20, 1e-6, &s_focuss, &iters, &converged) == ESI_OK);
  CHECK(iters >= 1);

  uint32_t rows = 0;
  esi_matrix_dims(s_wmne, &rows, nullptr);
  CHECK(rows == 16);

  esi_matrix_free(s_wmne);
  esi_matrix_free(s_loreta);
  esi_matrix_free(s_focuss);
  esi_matrix_free(noisy);
  esi_matrix_free(x);
  esi_matrix_free(s);
  esi_leadfield_free(lf);
  esi_mesh_free(mesh);
}

TEST_CASE("metrics through the C surface") {
  const double scores[4] = {0.9, 0.8, 0.2, 0.1};
  const int32_t labels[4] = {1, 1, 0, 0};
  double auc = 0.0;
  REQUIRE(esi_metric_auc(scores, labels, 4, &auc) == ESI_OK);
  CHECK(auc == 1.0);

  const int32_t ones[4] = {1, 1, 1, 1};
  CHECK(esi_metric_auc(scores, ones, 4, &auc) == ESI_ERR_UNDEFINED_METRIC);

  double thr = 0.0;
  const double bimodal[6] = {0, 0, 0, 10, 10, 10};
  REQUIRE(esi_metric_otsu_threshold(bimodal, 6, &thr) == ESI_OK);
  CHECK(thr > 0.0);
  CHECK(thr < 10.0);

  const double t_data[4] = {1, 2, 3, 4};
  const double e_data[4] = {1, 2, 3, 4};
  esi_matrix *truth = nullptr, *est = nullptr;
  REQUIRE(esi_matrix_create(2, 2, t_data, &truth) == ESI_OK);
  REQUIRE(esi_matrix_create(2, 2, e_data, &est) == ESI_OK);
  double rmse = -1.0;
  REQUIRE(esi_metric_rmse_rel(truth, est, &rmse) == ESI_OK);
  CHECK(rmse == 0.0);
  esi_matrix_free(truth);
  esi_matrix_free(est);

  CHECK(esi_metric_auc(nullptr, labels, 4, &auc) == ESI_ERR_INVALID_ARGUMENT);
}

TEST_CASE("config-driven synth, train, resume, estimate, bench, report") {
  std::ofstream("capi_config.ini") << kConfig;

  REQUIRE(esi_cmd_synth("capi_config.ini", nullptr) == ESI_OK);
  CHECK(std::filesystem::exists("capi_ds.esid"));
  CHECK(std::filesystem::exists("capi_rec.esir"));

  REQUIRE(esi_cmd_train("capi_config.ini", "capi_ds.esid", "capi_net.esiw", nullptr) == ESI_OK);
  CHECK(std::filesystem::exists("capi_net.esiw"));
  const auto history = read_csv("capi_net.esiw.history.csv");
  REQUIRE(history.size() == 9);  // header + 8 epochs
  CHECK(history[1][0] == "1");
  CHECK(history[8][0] == "8");

  // resume continues the epoch counter monotonically
  REQUIRE(esi_cmd_train("capi_config.ini", "capi_ds.esid", "capi_net2.esiw", "capi_net.esiw") ==
          ESI_OK);
  const auto resumed = read_csv("capi_net2.esiw.history.csv");
  REQUIRE(resumed.size() == 9);
  CHECK(std::stoi(resumed[1][0]) > std::stoi(history[8][0]));

  esi_network* net = nullptr;
  REQUIRE(esi_network_load("capi_net.esiw", &net) == ESI_OK);
  uint32_t nc = 0, ns = 0, ts = 0;
  REQUIRE(esi_network_dims(net, &nc, &ns, &ts) == ESI_OK);
  CHECK(nc == 8);
  CHECK(ns == 16);
  CHECK(ts == 40);

  esi_matrix* rec = nullptr;
  REQUIRE(esi_matrix_load_recording("capi_rec.esir", &rec) == ESI_OK);
  esi_matrix* s_hat = nullptr;
  REQUIRE(esi_network_estimate(net, rec, &s_hat) == ESI_OK);
  uint32_t sr = 0, sc = 0;
  esi_matrix_dims(s_hat, &sr, &sc);
  CHECK(sr == 16);
  CHECK(sc == 40);
  esi_matrix* x_re = nullptr;
  REQUIRE(esi_network_denoise(net, rec, &x_re) == ESI_OK);
  esi_matrix_free(x_re);
  esi_matrix_free(s_hat);

  // shape errors carry the expected/found dims in the message
  std::vector<double> wrong(9 * 40, 0.25);
  esi_matrix* bad = nullptr;
  REQUIRE(esi_matrix_create(9, 40, wrong.data(), &bad) == ESI_OK);
  esi_matrix* out = nullptr;
  CHECK(esi_network_estimate(net, bad, &out) == ESI_ERR_SHAPE);
  const std::string msg = esi_last_error();
  CHECK(msg.find("(8, 40)") != std::string::npos);
  CHECK(msg.find("(9, 40)") != std::string::npos);
  esi_matrix_free(bad);
  esi_network_free(net);

  REQUIRE(esi_cmd_estimate("capi_net.esiw", "capi_rec.esir", "capi_shat.esir") == ESI_OK);
  CHECK(std::filesystem::exists("capi_shat.esir"));
  CHECK(std::filesystem::exists("capi_shat.esir.activation.csv"));

  REQUIRE(esi_cmd_bench("capi_config.ini", "snr", "capi_bench.csv") == ESI_OK);
  const auto detail = read_csv("capi_bench.csv");
  CHECK(detail.size() == 1 + 2 * 2 * 2);  // header + conditions x trials x methods

  std::filesystem::create_directories("capi_report");
  REQUIRE(esi_cmd_report("capi_bench.csv", "capi_report", 0,
                         "capi_net.esiw.history.csv,capi_net2.esiw.history.csv") == ESI_OK);
  CHECK(std::filesystem::exists("capi_report/auc.csv"));
  CHECK(std::filesystem::exists("capi_report/timing_table.csv"));

  CHECK(esi_cmd_bench("capi_config.ini", "bogus", "x.csv") == ESI_ERR_CONFIG);
  CHECK(esi_network_load("capi_ds.esid", &net) == ESI_ERR_FORMAT);  // wrong magic

  std::filesystem::remove_all("capi_report");
  for (const char* f : {"capi_config.ini", "capi_ds.esid", "capi_rec.esir", "capi_net.esiw",
                        "capi_net.esiw.history.csv", "capi_net2.esiw", "capi_net2.esiw.history.csv",
                        "capi_shat.esir", "capi_shat.esir.activation.csv", "capi_bench.csv",
                        "capi_bench.csv.summary.csv", "capi_bench.csv.timing.csv"})
    std::remove(f);
}
