#include "core/synthesis.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "core/binio.hpp"
#include "core/error.hpp"
#include "core/parallel.hpp"

namespace esi::synth {

TemporalBasis TemporalBasis::from_rows(Matrix rows) {
  if (rows.rows() < 1 || rows.rows() > rows.cols())
    raise(ErrorCode::InvalidArgument, "basis needs 1 <= m <= T");
  const Matrix gram = rows * rows.transpose();
  const double err = (gram - Matrix::Identity(rows.rows(), rows.rows())).cwiseAbs().maxCoeff();
  if (err > 1e-8)
    raise(ErrorCode::InvalidArgument, "basis rows not orthonormal, deviation " + std::to_string(err));
  return TemporalBasis{std::move(rows)};
}

Vector damped_sinusoid(double f_hz, double tau_s, double omega_s, const std::vector<double>& t_grid) {
  if (!(omega_s > 0.0)) raise(ErrorCode::InvalidArgument, "omega must be positive");
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    if (!(t_grid[i] > t_grid[i - 1])) raise(ErrorCode::InvalidArgument, "t_grid must be ascending");
  Vector s(Eigen::Index(t_grid.size()));
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    const double t = t_grid[i];
    const double z = (t - tau_s) / omega_s;
    s(Eigen::Index(i)) = std::sin(2.0 * M_PI * f_hz * t) * std::exp(-z * z);
  }
  return s;
}

std::vector<double> time_grid(int samples, double epoch_seconds) {
  if (samples < 2) raise(ErrorCode::InvalidArgument, "need at least 2 time samples");
  std::vector<double> t(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) t[std::size_t(i)] = double(i) / double(samples - 1) * epoch_seconds;
  return t;
}

TemporalBasis make_default_tbf(int samples, double epoch_seconds) {
  const std::vector<double> freqs = {5.0, 8.0, 11.0, 14.0};
  const auto grid = time_grid(samples, epoch_seconds);
  const double omega = epoch_seconds / 6.0;
  const int m = int(freqs.size());

  Matrix bank(m, samples);
  for (int k = 0; k < m; ++k) {
    const double tau = epoch_seconds * double(k + 1) / double(m + 1);
    bank.row(k) = damped_sinusoid(freqs[std::size_t(k)], tau, omega, grid).transpose();
  }

  // Modified Gram-Schmidt on the rows.
  for (int k = 0; k < m; ++k) {
    for (int j = 0; j < k; ++j) bank.row(k) -= bank.row(j).dot(bank.row(k)) * bank.row(j);
    const double norm = bank.row(k).norm();
    if (norm < 1e-10) raise(ErrorCode::NumericalFailure, "degenerate sinusoid bank");
    bank.row(k) /= norm;
  }
  return TemporalBasis::from_rows(std::move(bank));
}

TemporalBasis tbf_from_svd(const Matrix& X, int m) {
  if (m < 1 || m > std::min(X.rows(), X.cols()))
    raise(ErrorCode::InvalidArgument, "m must satisfy 1 <= m <= min(Nc, T)");
  if (X.squaredNorm() == 0.0) raise(ErrorCode::InvalidArgument, "zero recording");

  Eigen::BDCSVD<Matrix> svd(X, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double tol = sv(0) * 1e-12 * double(std::max(X.rows(), X.cols()));
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;
  if (m > rank)
    raise(ErrorCode::RankDeficient,
          "requested " + std::to_string(m) + " components from rank-" + std::to_string(rank) + " data");

  Matrix rows = svd.matrixV().leftCols(m).transpose();
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      if (rows(r, c) != 0.0) {
        if (rows(r, c) < 0.0) rows.row(r) = -rows.row(r);
        break;
      }
    }
  }
  return TemporalBasis::from_rows(std::move(rows));
}

Vector sample_zeta(Rng& rng, int m, double lo, double hi) {
  if (!(hi > lo)) raise(ErrorCode::InvalidArgument, "empty zeta range");
  Vector z(m);
  for (int i = 0; i < m; ++i) z(i) = rng.uniform(lo, hi);
  return z;
}

Vector sample_temporal_state(const TemporalBasis& theta, Rng& rng, double lo, double hi) {
  for (;;) {
    const Vector zeta = sample_zeta(rng, theta.components(), lo, hi);
    Vector phi = theta.rows.transpose() * zeta;
    const double peak = phi.cwiseAbs().maxCoeff();
    if (peak > 0.0) return phi / peak;
    // all-zero combination (measure zero): resample
  }
}

std::pair<Vector, Vector> correlated_pair(const TemporalBasis& theta, double rho, Rng& rng) {
  if (rho < -1.0 || rho > 1.0) raise(ErrorCode::InvalidArgument, "rho must lie in [-1, 1]");
  const int t = theta.samples();
  for (;;) {
    const Vector a_raw = theta.rows.transpose() * sample_zeta(rng, theta.components(), -1.0, 1.0);
    const Vector b_raw = theta.rows.transpose() * sample_zeta(rng, theta.components(), -1.0, 1.0);

    Vector a = a_raw.array() - a_raw.mean();
    Vector b = b_raw.array() - b_raw.mean();
    const double a_norm = a.norm();
    if (a_norm < 1e-12) continue;
    b -= (b.dot(a) / (a_norm * a_norm)) * a;
    const double b_norm = b.norm();
    if (b_norm < 1e-12) continue;  // parallel draw: resample

    // z-normalize (population variance 1)
    a *= std::sqrt(double(t)) / a_norm;
    b *= std::sqrt(double(t)) / b_norm;
    return {a, rho * a + std::sqrt(1.0 - rho * rho) * b};
  }
}

std::vector<mesh::Patch> place_patches(const mesh::CorticalMesh& m, int k, double a_max, Rng& rng,
                                       std::vector<double>* drawn_areas) {
  if (k < 1) raise(ErrorCode::InvalidArgument, "need at least one patch");
  if (!(a_max > 0.0)) raise(ErrorCode::InvalidArgument, "a_max must be positive");

  const int ne = m.element_count();
  std::vector<mesh::Patch> patches;
  std::vector<char> occupied(std::size_t(ne), 0);
  const int max_retries = 200;

  for (int p = 0; p < k; ++p) {
    bool placed = false;
    for (int attempt = 0; attempt < max_retries && !placed; ++attempt) {
      const int seed = int(rng.uniform_index(std::uint64_t(ne)));
      const double area = (1.0 - rng.uniform01()) * a_max;  // uniform on (0, a_max]
      mesh::Patch patch = grow_patch(m, seed, area);
      bool overlap = false;
      for (int e : patch.indices)
        if (occupied[std::size_t(e)]) {
          overlap = true;
          break;
        }
      if (overlap) continue;
      for (int e : patch.indices) occupied[std::size_t(e)] = 1;
      if (drawn_areas) drawn_areas->push_back(area);
      patches.push_back(std::move(patch));
      placed = true;
    }
    if (!placed)
      raise(ErrorCode::PlacementFailure,
            "could not place " + std::to_string(k) + " disjoint patches after " +
                std::to_string(max_retries) + " retries");
  }
  return patches;
}

std::vector<mesh::Patch> place_patches_fixed(const mesh::CorticalMesh& m,
                                             const std::vector<double>& target_areas, Rng& rng) {
  if (target_areas.empty()) raise(ErrorCode::InvalidArgument, "need at least one patch area");
  const int ne = m.element_count();
  std::vector<mesh::Patch> patches;
  std::vector<char> occupied(std::size_t(ne), 0);
  const int max_retries = 200;

  for (double area : target_areas) {
    bool placed = false;
    for (int attempt = 0; attempt < max_retries && !placed; ++attempt) {
      const int seed = int(rng.uniform_index(std::uint64_t(ne)));
      mesh::Patch patch = grow_patch(m, seed, area);
      bool overlap = false;
      for (int e : patch.indices)
        if (occupied[std::size_t(e)]) {
          overlap = true;
          break;
        }
      if (overlap) continue;
      for (int e : patch.indices) occupied[std::size_t(e)] = 1;
      patches.push_back(std::move(patch));
      placed = true;
    }
    if (!placed)
      raise(ErrorCode::PlacementFailure, "could not place disjoint fixed-area patches");
  }
  return patches;
}

std::vector<mesh::Patch> sample_patch_set(const mesh::CorticalMesh& m, const SynthesisConfig& cfg,
                                          Rng& rng) {
  if (cfg.k_max < 1) raise(ErrorCode::InvalidArgument, "k_max must be >= 1");
  const int k = 1 + int(rng.uniform_index(std::uint64_t(cfg.k_max)));
  return place_patches(m, k, cfg.a_max_cm2, rng);
}

GeneratedSample generate_sample(const mesh::CorticalMesh& m, const forward::LeadField& L,
                                const TemporalBasis& theta, const SynthesisConfig& cfg, Rng& rng) {
  if (L.sources() != m.element_count())
    raise(ErrorCode::ShapeError, "lead field does not match the mesh source count");

  GeneratedSample out;
  out.patches = sample_patch_set(m, cfg, rng);
  const int k = int(out.patches.size());
  const int t = theta.samples();
  const int ns = m.element_count();

  out.W = Matrix::Zero(ns, k);
  out.Phi = Matrix(k, t);
  for (int p = 0; p < k; ++p) {
    for (int e : out.patches[std::size_t(p)].indices) out.W(e, p) = 1.0;
    out.Phi.row(p) = sample_temporal_state(theta, rng, cfg.zeta_lo, cfg.zeta_hi).transpose();
  }
  out.S = out.W * out.Phi;
  out.X = L.m * out.S;

  if (cfg.normalize) {
    const double norm = out.X.norm();
    if (norm > 0.0) {
      // Unit-RMS scalp signal; scaling Phi keeps S = W * Phi exact.
      const double c = std::sqrt(double(L.channels()) * double(t)) / norm;
      out.Phi *= c;
      out.S *= c;
      out.X *= c;
    }
  }
  return out;
}

std::uint64_t dataset_file_size(int n, int nc, int ns, int t) {
  return 4 + 5 * 4 + std::uint64_t(n) * (std::uint64_t(nc) + std::uint64_t(ns)) * std::uint64_t(t) * 4;
}

void generate_dataset(const mesh::CorticalMesh& m, const forward::LeadField& L,
                      const TemporalBasis& theta, const SynthesisConfig& cfg,
                      const std::string& path) {
  if (cfg.sample_count < 1) raise(ErrorCode::InvalidArgument, "sample_count must be >= 1");
  const int n = cfg.sample_count;
  const int nc = L.channels(), ns = L.sources(), t = theta.samples();
  const std::size_t x_len = std::size_t(nc) * std::size_t(t);
  const std::size_t s_len = std::size_t(ns) * std::size_t(t);

  binio::Writer out(path);
  out.magic("ESID");
  out.u32(1);
  out.u32(std::uint32_t(n));
  out.u32(std::uint32_t(nc));
  out.u32(std::uint32_t(ns));
  out.u32(std::uint32_t(t));

  // Generate in blocks: workers fill disjoint slices, writes happen in index
  // order so the file depends only on the master seed.
  const int block = 256;
  std::vector<float> xbuf(std::size_t(block) * x_len), sbuf(std::size_t(block) * s_len);
  for (int base = 0; base < n; base += block) {
    const int count = std::min(block, n - base);
    parallel_chunks(std::size_t(count), [&](int, std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        Rng rng = Rng::derive(cfg.master_seed, {std::uint64_t(base) + i});
        const GeneratedSample sample = generate_sample(m, L, theta, cfg, rng);
        float* xp = xbuf.data() + i * x_len;
        float* sp = sbuf.data() + i * s_len;
        for (int r = 0; r < nc; ++r)
          for (int c = 0; c < t; ++c) *xp++ = float(sample.X(r, c));
        for (int r = 0; r < ns; ++r)
          for (int c = 0; c < t; ++c) *sp++ = float(sample.S(r, c));
      }
    });
    for (int i = 0; i < count; ++i) {
      out.f32(xbuf.data() + std::size_t(i) * x_len, x_len);
      out.f32(sbuf.data() + std::size_t(i) * s_len, s_len);
    }
  }
  out.finish();
}

Dataset load_dataset(const std::string& path) {
  binio::Reader in(path);
  in.expect_magic("ESID");
  const std::uint32_t version = in.u32();
  if (version != 1)
    raise(ErrorCode::FormatError, "unsupported ESID version " + std::to_string(version));
  Dataset d;
  d.count = int(in.u32());
  d.channels = int(in.u32());
  d.sources = int(in.u32());
  d.samples = int(in.u32());
  if (d.count < 1 || d.channels < 1 || d.sources < 1 || d.samples < 2)
    raise(ErrorCode::FormatError, "implausible ESID header in " + path);
  const std::size_t x_len = std::size_t(d.channels) * std::size_t(d.samples);
  const std::size_t s_len = std::size_t(d.sources) * std::size_t(d.samples);
  d.x.resize(std::size_t(d.count) * x_len);
  d.s.resize(std::size_t(d.count) * s_len);
  for (int i = 0; i < d.count; ++i) {
    in.f32(d.x.data() + std::size_t(i) * x_len, x_len);
    in.f32(d.s.data() + std::size_t(i) * s_len, s_len);
  }
  if (!in.at_eof()) raise(ErrorCode::FormatError, "trailing bytes in " + path);
  return d;
}

}  // namespace esi::synth
