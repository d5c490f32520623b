#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "core/forward.hpp"
#include "core/mesh.hpp"
#include "core/rng.hpp"

namespace esi::synth {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// m x T matrix of orthonormal temporal basis rows spanning the admissible
// source waveforms.
struct TemporalBasis {
  Matrix rows;

  int components() const { return int(rows.rows()); }
  int samples() const { return int(rows.cols()); }

  // Validates row orthonormality (Theta * Theta^T = I to 1e-8) and m <= T.
  static TemporalBasis from_rows(Matrix rows);
};

// s(t) = sin(2*pi*f*t) * exp(-((t - tau) / omega)^2)
Vector damped_sinusoid(double f_hz, double tau_s, double omega_s, const std::vector<double>& t_grid);

// t_i = i / (samples - 1) * epoch_seconds
std::vector<double> time_grid(int samples, double epoch_seconds);

// Orthonormalized bank of damped sinusoids (f = 5, 8, 11, 14 Hz, tau spread
// over the epoch, omega = epoch / 6), used when no real recording is
// available to build the basis from.
TemporalBasis make_default_tbf(int samples, double epoch_seconds);

// Rows = top-m right singular vectors of X in descending singular-value
// order; the first nonzero entry of each row is made positive.
TemporalBasis tbf_from_svd(const Matrix& X, int m);

Vector sample_zeta(Rng& rng, int m, double lo, double hi);

// phi = sum_m zeta_m Theta(m), rescaled to unit peak amplitude.
Vector sample_temporal_state(const TemporalBasis& theta, Rng& rng, double lo, double hi);

// Draws two waveforms in span(Theta) whose sample Pearson correlation equals
// rho exactly (both returned z-normalized over time).
std::pair<Vector, Vector> correlated_pair(const TemporalBasis& theta, double rho, Rng& rng);

struct SynthesisConfig {
  int k_max = 1;              // max activation patches per sample
  double a_max_cm2 = 20.0;    // patch areas drawn uniform on (0, a_max]
  int tbf_components = 4;
  double snr_db = 0.0;        // training noise level (applied by the noise block, not stored)
  int sample_count = 1;
  double zeta_lo = -1.0, zeta_hi = 1.0;
  double epoch_seconds = 1.0;
  std::uint64_t master_seed = 0;
  bool normalize = true;      // rescale each sample so X has unit RMS
};

// K disjoint patches with areas drawn uniform on (0, a_max]; patches that
// overlap an earlier one are redrawn (bounded retries).
std::vector<mesh::Patch> place_patches(const mesh::CorticalMesh& m, int k, double a_max, Rng& rng,
                                       std::vector<double>* drawn_areas = nullptr);

// Disjoint patches grown to the given fixed target areas, seeds uniform.
std::vector<mesh::Patch> place_patches_fixed(const mesh::CorticalMesh& m,
                                             const std::vector<double>& target_areas, Rng& rng);

// K ~ Uniform{1..k_max}, seeds uniform over elements, areas uniform on
// (0, a_max].
std::vector<mesh::Patch> sample_patch_set(const mesh::CorticalMesh& m, const SynthesisConfig& cfg,
                                          Rng& rng);

struct GeneratedSample {
  Matrix W;    // Ns x K, patch indicator columns
  Matrix Phi;  // K x T temporal states
  Matrix S;    // Ns x T = W * Phi
  Matrix X;    // Nc x T = L * S
  std::vector<mesh::Patch> patches;
  std::uint64_t seed = 0;
};

GeneratedSample generate_sample(const mesh::CorticalMesh& m, const forward::LeadField& L,
                                const TemporalBasis& theta, const SynthesisConfig& cfg, Rng& rng);

// "ESID" dataset format: magic, u32 version=1, u32 N, Nc, Ns, T, then per
// sample X (Nc*T float32 row-major) followed by S (Ns*T float32 row-major).
// Sample i derives its generator from (master_seed, i), so the file is
// reproducible regardless of worker scheduling. Noise is not stored; the
// training noise block injects it.
void generate_dataset(const mesh::CorticalMesh& m, const forward::LeadField& L,
                      const TemporalBasis& theta, const SynthesisConfig& cfg,
                      const std::string& path);

struct Dataset {
  int count = 0, channels = 0, sources = 0, samples = 0;
  std::vector<float> x;  // count * channels * samples
  std::vector<float> s;  // count * sources * samples

  const float* x_at(int i) const { return x.data() + std::size_t(i) * channels * samples; }
  const float* s_at(int i) const { return s.data() + std::size_t(i) * sources * samples; }
};

Dataset load_dataset(const std::string& path);

// Header-predicted total byte count for an ESID file.
std::uint64_t dataset_file_size(int n, int nc, int ns, int t);

}  // namespace esi::synth
