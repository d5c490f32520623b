#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "core/mesh.hpp"

namespace esi::forward {

using Matrix = Eigen::MatrixXd;

// Nc x Ns transfer matrix: scalp amplitude per unit source amplitude.
struct LeadField {
  Matrix m;

  int channels() const { return int(m.rows()); }
  int sources() const { return int(m.cols()); }

  // Validates finiteness and that every source is visible to at least one
  // electrode (no all-zero column).
  static LeadField from_matrix(Matrix matrix);
};

// X = L * S, noise-free.
Matrix forward_project(const LeadField& L, const Matrix& S);

// Analytic lead field: unit dipole at each element centroid, oriented along
// the outward normal, evaluated in an infinite homogeneous medium:
// entry(c, s) = (d_s . r_hat) / |r|^2 with r = electrode_c - centroid_s.
// Electrodes must lie strictly outside the bounding sphere of the sources.
LeadField synth_leadfield(const mesh::CorticalMesh& m, const std::vector<mesh::Vec3>& electrodes);

// "ESIL" binary format: magic, u32 version=1, u32 Nc, u32 Ns, then
// Nc*Ns little-endian float64, row-major.
LeadField load_leadfield(const std::string& path);
void save_leadfield(const LeadField& L, const std::string& path);

// Returns X + eps with eps white Gaussian, rescaled so that
// 10*log10(|X|_F^2 / |eps|_F^2) equals snr_db exactly.
Matrix add_noise(const Matrix& X, double snr_db, std::uint64_t seed);

// "ESIR" recording format: magic, u32 Nc, u32 T, Nc*T float64 row-major.
Matrix load_recording(const std::string& path);
void save_recording(const Matrix& X, const std::string& path);

}  // namespace esi::forward
