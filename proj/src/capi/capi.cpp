#include "esidae/esidae.h"

#include <cstring>
#include <string>

#include <Eigen/Core>

#include "core/bench.hpp"
#include "core/error.hpp"
#include "core/forward.hpp"
#include "core/mesh.hpp"
#include "core/metrics.hpp"
#include "core/network.hpp"
#include "core/solvers.hpp"

using esi::Error;
using esi::ErrorCode;

struct esi_mesh {
  esi::mesh::CorticalMesh m;
};
struct esi_leadfield {
  esi::forward::LeadField lf;
};
struct esi_matrix {
  Eigen::MatrixXd m;
};
struct esi_network {
  esi::dae::DstDae<float> net;
};

namespace {

thread_local std::string t_last_error;

esi_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return ESI_ERR_INVALID_ARGUMENT;
    case ErrorCode::Io: return ESI_ERR_IO;
    case ErrorCode::FormatError: return ESI_ERR_FORMAT;
    case ErrorCode::ShapeError: return ESI_ERR_SHAPE;
    case ErrorCode::MeshDisconnected: return ESI_ERR_MESH_DISCONNECTED;
    case ErrorCode::DegenerateElement: return ESI_ERR_DEGENERATE_ELEMENT;
    case ErrorCode::AreaUnreachable: return ESI_ERR_AREA_UNREACHABLE;
    case ErrorCode::SingularGeometry: return ESI_ERR_SINGULAR_GEOMETRY;
    case ErrorCode::InvalidLeadField: return ESI_ERR_INVALID_LEADFIELD;
    case ErrorCode::ZeroSignal: return ESI_ERR_ZERO_SIGNAL;
    case ErrorCode::RankDeficient: return ESI_ERR_RANK_DEFICIENT;
    case ErrorCode::PlacementFailure: return ESI_ERR_PLACEMENT_FAILURE;
    case ErrorCode::BatchTooSmall: return ESI_ERR_BATCH_TOO_SMALL;
    case ErrorCode::NonFiniteGradient: return ESI_ERR_NON_FINITE_GRADIENT;
    case ErrorCode::ArchitectureError: return ESI_ERR_ARCHITECTURE;
    case ErrorCode::DivergenceError: return ESI_ERR_DIVERGENCE;
    case ErrorCode::NumericalFailure: return ESI_ERR_NUMERICAL_FAILURE;
    case ErrorCode::UndefinedMetric: return ESI_ERR_UNDEFINED_METRIC;
    case ErrorCode::DegenerateInput: return ESI_ERR_DEGENERATE_INPUT;
    case ErrorCode::ZeroReference: return ESI_ERR_ZERO_REFERENCE;
    case ErrorCode::ZeroEstimate: return ESI_ERR_ZERO_ESTIMATE;
    case ErrorCode::NoDetection: return ESI_ERR_NO_DETECTION;
    case ErrorCode::ConfigError: return ESI_ERR_CONFIG;
    case ErrorCode::EmptyReport: return ESI_ERR_EMPTY_REPORT;
  }
  return ESI_ERR_UNKNOWN;
}

template <typename Fn>
esi_status guarded(Fn&& fn) {
  try {
    fn();
    t_last_error.clear();
    return ESI_OK;
  } catch (const Error& e) {
    t_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return ESI_ERR_UNKNOWN;
  } catch (...) {
    t_last_error = "unknown failure";
    return ESI_ERR_UNKNOWN;
  }
}

esi_status require(bool ok, const char* what) {
  if (ok) return ESI_OK;
  t_last_error = std::string("null argument: ") + what;
  return ESI_ERR_INVALID_ARGUMENT;
}

}  // namespace

const char* esi_status_name(esi_status status) {
  switch (status) {
    case ESI_OK: return "Ok";
    case ESI_ERR_INVALID_ARGUMENT: return "InvalidArgument";
    case ESI_ERR_IO: return "Io";
    case ESI_ERR_FORMAT: return "FormatError";
    case ESI_ERR_SHAPE: return "ShapeError";
    case ESI_ERR_MESH_DISCONNECTED: return "MeshDisconnected";
    case ESI_ERR_DEGENERATE_ELEMENT: return "DegenerateElement";
    case ESI_ERR_AREA_UNREACHABLE: return "AreaUnreachable";
    case ESI_ERR_SINGULAR_GEOMETRY: return "SingularGeometry";
    case ESI_ERR_INVALID_LEADFIELD: return "InvalidLeadField";
    case ESI_ERR_ZERO_SIGNAL: return "ZeroSignal";
    case ESI_ERR_RANK_DEFICIENT: return "RankDeficient";
    case ESI_ERR_PLACEMENT_FAILURE: return "PlacementFailure";
    case ESI_ERR_BATCH_TOO_SMALL: return "BatchTooSmall";
    case ESI_ERR_NON_FINITE_GRADIENT: return "NonFiniteGradient";
    case ESI_ERR_ARCHITECTURE: return "ArchitectureError";
    case ESI_ERR_DIVERGENCE: return "DivergenceError";
    case ESI_ERR_NUMERICAL_FAILURE: return "NumericalFailure";
    case ESI_ERR_UNDEFINED_METRIC: return "UndefinedMetric";
    case ESI_ERR_DEGENERATE_INPUT: return "DegenerateInput";
    case ESI_ERR_ZERO_REFERENCE: return "ZeroReference";
    case ESI_ERR_ZERO_ESTIMATE: return "ZeroEstimate";
    case ESI_ERR_NO_DETECTION: return "NoDetection";
    case ESI_ERR_CONFIG: return "ConfigError";
    case ESI_ERR_EMPTY_REPORT: return "EmptyReport";
    case ESI_ERR_UNKNOWN: return "Unknown";
  }
  return "Unknown";
}

const char* esi_last_error(void) { return t_last_error.c_str(); }

const char* esi_version(void) { return "1.0.0"; }

/* ---- mesh ----------------------------------------------------------- */

esi_status esi_mesh_load(const char* path, esi_mesh** out) {
  if (esi_status s = require(path && out, "path/out"); s != ESI_OK) return s;
  return guarded([&] { *out = new esi_mesh{esi::mesh::load_mesh(path)}; });
}

esi_status esi_mesh_generate(const char* kind, int subdivisions, double radius_cm, esi_mesh** out) {
  if (esi_status s = require(kind && out, "kind/out"); s != ESI_OK) return s;
  return guarded([&] {
    esi::mesh::SphereBase base;
    const std::string k = kind;
    if (k == "tetra")
      base = esi::mesh::SphereBase::Tetrahedron;
    else if (k == "octa")
      base = esi::mesh::SphereBase::Octahedron;
    else if (k == "icosa")
      base = esi::mesh::SphereBase::Icosahedron;
    else
      esi::raise(ErrorCode::InvalidArgument, "unknown mesh kind: " + k);
    *out = new esi_mesh{esi::mesh::make_sphere_mesh(base, subdivisions, radius_cm)};
  });
}

esi_status esi_mesh_save(const esi_mesh* mesh, const char* path) {
  if (esi_status s = require(mesh && path, "mesh/path"); s != ESI_OK) return s;
  return guarded([&] { esi::mesh::save_mesh(mesh->m, path); });
}

void esi_mesh_free(esi_mesh* mesh) { delete mesh; }

esi_status esi_mesh_info(const esi_mesh* mesh, uint32_t* vertex_count, uint32_t* element_count,
                         double* total_area_cm2) {
  if (esi_status s = require(mesh != nullptr, "mesh"); s != ESI_OK) return s;
  if (vertex_count) *vertex_count = uint32_t(mesh->m.vertex_count());
  if (element_count) *element_count = uint32_t(mesh->m.element_count());
  if (total_area_cm2) *total_area_cm2 = mesh->m.total_area;
  return ESI_OK;
}

esi_status esi_mesh_grow_patch(const esi_mesh* mesh, uint32_t seed, double target_area_cm2,
                               uint32_t* elements, uint32_t capacity, uint32_t* element_count,
                               double* area_cm2) {
  if (esi_status s = require(mesh && element_count, "mesh/element_count"); s != ESI_OK) return s;
  return guarded([&] {
    const esi::mesh::Patch p = esi::mesh::grow_patch(mesh->m, int(seed), target_area_cm2);
    *element_count = uint32_t(p.indices.size());
    if (area_cm2) *area_cm2 = p.area;
    if (elements) {
      const uint32_t n = std::min(capacity, uint32_t(p.indices.size()));
      for (uint32_t i = 0; i < n; ++i) elements[i] = uint32_t(p.indices[i]);
    }
  });
}

/* ---- matrices -------------------------------------------------------- */

esi_status esi_matrix_create(uint32_t rows, uint32_t cols, const double* row_major,
                             esi_matrix** out) {
  if (esi_status s = require(row_major && out, "data/out"); s != ESI_OK) return s;
  return guarded([&] {
    if (rows == 0 || cols == 0) esi::raise(ErrorCode::InvalidArgument, "empty matrix");
    Eigen::MatrixXd m(rows, cols);
    for (uint32_t r = 0; r < rows; ++r)
      for (uint32_t c = 0; c < cols; ++c) m(r, c) = row_major[std::size_t(r) * cols + c];
    *out = new esi_matrix{std::move(m)};
  });
}

esi_status esi_matrix_dims(const esi_matrix* m, uint32_t* rows, uint32_t* cols) {
  if (esi_status s = require(m != nullptr, "matrix"); s != ESI_OK) return s;
  if (rows) *rows = uint32_t(m->m.rows());
  if (cols) *cols = uint32_t(m->m.cols());
  return ESI_OK;
}

esi_status esi_matrix_copy_data(const esi_matrix* m, double* out) {
  if (esi_status s = require(m && out, "matrix/out"); s != ESI_OK) return s;
  const auto rows = m->m.rows(), cols = m->m.cols();
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) out[std::size_t(r) * std::size_t(cols) + std::size_t(c)] = m->m(r, c);
  return ESI_OK;
}

void esi_matrix_free(esi_matrix* m) { delete m; }

esi_status esi_matrix_load_recording(const char* path, esi_matrix** out) {
  if (esi_status s = require(path && out, "path/out"); s != ESI_OK) return s;
  return guarded([&] { *out = new esi_matrix{esi::forward::load_recording(path)}; });
}

esi_status esi_matrix_save_recording(const esi_matrix* m, const char* path) {
  if (esi_status s = require(m && path, "matrix/path"); s != ESI_OK) return s;
  return guarded([&] { esi::forward::save_recording(m->m, path); });
}

/* ---- forward model --------------------------------------------------- */

esi_status esi_leadfield_synth(const esi_mesh* mesh, const double* electrodes_xyz,
                               uint32_t electrode_count, esi_leadfield** out) {
  if (esi_status s = require(mesh && electrodes_xyz && out, "mesh/electrodes/out"); s != ESI_OK)
    return s;
  return guarded([&] {
    std::vector<esi::mesh::Vec3> electrodes;
    electrodes.reserve(electrode_count);
    for (uint32_t i = 0; i < electrode_count; ++i)
      electrodes.emplace_back(electrodes_xyz[3 * i], electrodes_xyz[3 * i + 1],
                              electrodes_xyz[3 * i + 2]);
    *out = new esi_leadfield{esi::forward::synth_leadfield(mesh->m, electrodes)};
  });
}

esi_status esi_leadfield_load(const char* path, esi_leadfield** out) {
  if (esi_status s = require(path && out, "path/out"); s != ESI_OK) return s;
  return guarded([&] { *out = new esi_leadfield{esi::forward::load_leadfield(path)}; });
}

esi_status esi_leadfield_save(const esi_leadfield* lf, const char* path) {
  if (esi_status s = require(lf && path, "leadfield/path"); s != ESI_OK) return s;
  return guarded([&] { esi::forward::save_leadfield(lf->lf, path); });
}

esi_status esi_leadfield_dims(const esi_leadfield* lf, uint32_t* channels, uint32_t* sources) {
  if (esi_status s = require(lf != nullptr, "leadfield"); s != ESI_OK) return s;
  if (channels) *channels = uint32_t(lf->lf.channels());
  if (sources) *sources = uint32_t(lf->lf.sources());
  return ESI_OK;
}

void esi_leadfield_free(esi_leadfield* lf) { delete lf; }

esi_status esi_forward_project(const esi_leadfield* lf, const esi_matrix* s, esi_matrix** x_out) {
  if (esi_status st = require(lf && s && x_out, "leadfield/s/out"); st != ESI_OK) return st;
  return guarded([&] { *x_out = new esi_matrix{esi::forward::forward_project(lf->lf, s->m)}; });
}

esi_status esi_add_noise(const esi_matrix* x, double snr_db, uint64_t seed, esi_matrix** out) {
  if (esi_status s = require(x && out, "x/out"); s != ESI_OK) return s;
  return guarded([&] { *out = new esi_matrix{esi::forward::add_noise(x->m, snr_db, seed)}; });
}

/* ---- solvers ---------------------------------------------------------- */

esi_status esi_solve_wmne(const esi_leadfield* lf, const esi_matrix* x, double lambda,
                          esi_matrix** s_out) {
  if (esi_status s = require(lf && x && s_out, "leadfield/x/out"); s != ESI_OK) return s;
  return guarded([&] { *s_out = new esi_matrix{esi::solvers::wmne(lf->lf, x->m, lambda).s}; });
}

esi_status esi_solve_loreta(const esi_leadfield* lf, const esi_mesh* mesh, const esi_matrix* x,
                            double lambda, esi_matrix** s_out) {
  if (esi_status s = require(lf && mesh && x && s_out, "leadfield/mesh/x/out"); s != ESI_OK)
    return s;
  return guarded(
      [&] { *s_out = new esi_matrix{esi::solvers::loreta(lf->lf, x->m, lambda, mesh->m).s}; });
}

esi_status esi_solve_focuss(const esi_leadfield* lf, const esi_matrix* x, double lambda,
                            uint32_t max_iter, double tol, esi_matrix** s_out,
                            uint32_t* iterations, int* converged) {
  if (esi_status s = require(lf && x && s_out, "leadfield/x/out"); s != ESI_OK) return s;
  return guarded([&] {
    esi::solvers::Solution sol = esi::solvers::focuss(lf->lf, x->m, lambda, int(max_iter), tol);
    if (iterations) *iterations = uint32_t(sol.iterations);
    if (converged) *converged = sol.converged ? 1 : 0;
    *s_out = new esi_matrix{std::move(sol.s)};
  });
}

/* ---- network ----------------------------------------------------------- */

esi_status esi_network_load(const char* path, esi_network** out) {
  if (esi_status s = require(path && out, "path/out"); s != ESI_OK) return s;
  return guarded([&] { *out = new esi_network{esi::dae::DstDae<float>::load(path)}; });
}

void esi_network_free(esi_network* net) { delete net; }

esi_status esi_network_dims(const esi_network* net, uint32_t* channels, uint32_t* sources,
                            uint32_t* time_samples) {
  if (esi_status s = require(net != nullptr, "network"); s != ESI_OK) return s;
  if (channels) *channels = uint32_t(net->net.arch().nc);
  if (sources) *sources = uint32_t(net->net.arch().ns);
  if (time_samples) *time_samples = uint32_t(net->net.arch().t);
  return ESI_OK;
}

esi_status esi_network_estimate(const esi_network* net, const esi_matrix* x, esi_matrix** s_out) {
  if (esi_status s = require(net && x && s_out, "network/x/out"); s != ESI_OK) return s;
  return guarded([&] { *s_out = new esi_matrix{net->net.estimate(x->m)}; });
}

esi_status esi_network_denoise(const esi_network* net, const esi_matrix* x_noisy,
                               esi_matrix** x_out) {
  if (esi_status s = require(net && x_noisy && x_out, "network/x/out"); s != ESI_OK) return s;
  return guarded([&] { *x_out = new esi_matrix{net->net.denoise_scalp(x_noisy->m)}; });
}

/* ---- metrics ------------------------------------------------------------ */

esi_status esi_metric_auc(const double* scores, const int32_t* labels, uint32_t count,
                          double* out) {
  if (esi_status s = require(scores && labels && out, "scores/labels/out"); s != ESI_OK) return s;
  return guarded([&] {
    Eigen::VectorXd sv(count);
    std::vector<int> lv(count);
    for (uint32_t i = 0; i < count; ++i) {
      sv(i) = scores[i];
      lv[i] = labels[i];
    }
    *out = esi::metrics::auc(sv, lv);
  });
}

esi_status esi_metric_rmse_rel(const esi_matrix* truth, const esi_matrix* estimate, double* out) {
  if (esi_status s = require(truth && estimate && out, "truth/estimate/out"); s != ESI_OK) return s;
  return guarded([&] { *out = esi::metrics::rmse_rel(truth->m, estimate->m); });
}

esi_status esi_metric_otsu_threshold(const double* scores, uint32_t count, double* out) {
  if (esi_status s = require(scores && out, "scores/out"); s != ESI_OK) return s;
  return guarded([&] {
    Eigen::VectorXd sv(count);
    for (uint32_t i = 0; i < count; ++i) sv(i) = scores[i];
    *out = esi::metrics::otsu_threshold(sv);
  });
}

/* ---- commands ------------------------------------------------------------ */

esi_status esi_cmd_synth(const char* config_path, const char* out_path) {
  if (esi_status s = require(config_path != nullptr, "config_path"); s != ESI_OK) return s;
  return guarded([&] { esi::bench::cmd_synth(config_path, out_path ? out_path : ""); });
}

esi_status esi_cmd_train(const char* config_path, const char* dataset_path, const char* out_path,
                         const char* resume_path) {
  if (esi_status s = require(config_path && dataset_path && out_path, "config/dataset/out");
      s != ESI_OK)
    return s;
  return guarded(
      [&] { esi::bench::cmd_train(config_path, dataset_path, out_path, resume_path ? resume_path : ""); });
}

esi_status esi_cmd_estimate(const char* checkpoint_path, const char* input_path,
                            const char* out_path) {
  if (esi_status s = require(checkpoint_path && input_path && out_path, "checkpoint/input/out");
      s != ESI_OK)
    return s;
  return guarded([&] { esi::bench::cmd_estimate(checkpoint_path, input_path, out_path); });
}

esi_status esi_cmd_bench(const char* config_path, const char* scenario, const char* out_path) {
  if (esi_status s = require(config_path && scenario && out_path, "config/scenario/out");
      s != ESI_OK)
    return s;
  return guarded([&] { esi::bench::cmd_bench(config_path, scenario, out_path); });
}

esi_status esi_cmd_report(const char* report_path, const char* out_dir, int emit_plots,
                          const char* history_paths) {
  if (esi_status s = require(report_path && out_dir, "report/out_dir"); s != ESI_OK) return s;
  return guarded([&] {
    std::vector<std::string> histories;
    if (history_paths && history_paths[0] != '\0') {
      std::string hp = history_paths;
      std::size_t pos = 0;
      while (pos <= hp.size()) {
        const auto comma = hp.find(',', pos);
        const std::string item =
            comma == std::string::npos ? hp.substr(pos) : hp.substr(pos, comma - pos);
        if (!item.empty()) histories.push_back(item);
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    }
    esi::bench::cmd_report(report_path, out_dir, emit_plots != 0, histories);
  });
}
