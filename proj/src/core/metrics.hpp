#pragma once

#include <vector>

#include <Eigen/Core>

#include "core/mesh.hpp"

namespace esi::metrics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Per-source time-integrated energy: score_j = sum_t S(j, t)^2.
Vector source_energy(const Matrix& S);

// Mann-Whitney AUC: probability a random positive outscores a random
// negative, ties counted 1/2. Labels are 0/1; both classes must be present.
double auc(const Vector& scores, const std::vector<int>& labels);

// |est - truth|_F / |truth|_F
double rmse_rel(const Matrix& truth, const Matrix& est);

// Otsu threshold over a 256-bin histogram spanning [min, max]; maximizes
// between-class variance, ties broken toward the lower cut. Returns the
// value of the first bin edge above the chosen cut.
double otsu_threshold(const Vector& scores);

struct DleResult {
  double mean_cm = 0.0;    // mean over detected true patches; NaN if none detected
  int detected = 0;        // true patches with at least one estimated component
  int patch_count = 0;
};

// Localization error: Otsu-threshold the estimate's energy map, cluster the
// supra-threshold elements into mesh-connected components, then per true
// patch take the distance from its energy peak to the nearest component
// peak. An empty supra-threshold set yields no detection (mean_cm = NaN).
DleResult dle(const mesh::CorticalMesh& m, const Matrix& s_true, const Matrix& s_est,
              const std::vector<mesh::Patch>& true_patches);

// Spatial dispersion: sqrt( sum_j d_j^2 score_j / sum_j score_j ), d_j the
// distance from element j to the nearest true-support element.
double sd(const mesh::CorticalMesh& m, const std::vector<int>& true_support, const Matrix& s_est);

// 1 - SS_res / SS_tot over all flattened entries.
double r2(const std::vector<Matrix>& truth, const std::vector<Matrix>& est);
double r2(const Matrix& truth, const Matrix& est);

}  // namespace esi::metrics
