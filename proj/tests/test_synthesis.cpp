#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <Eigen/Dense>

#include "core/error.hpp"
#include "core/synthesis.hpp"

using namespace esi;
using synth::Matrix;
using synth::TemporalBasis;
using synth::Vector;

namespace {

double ks_statistic_uniform(std::vector<double> draws, double lo, double hi) {
  std::sort(draws.begin(), draws.end());
  const double n = double(draws.size());
  double d = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double cdf = (draws[i] - lo) / (hi - lo);
    d = std::max(d, std::abs(cdf - double(i) / n));
    d = std::max(d, std::abs(cdf - double(i + 1) / n));
  }
  return d;
}

double pearson(const Vector& a, const Vector& b) {
  const Vector ac = a.array() - a.mean();
  const Vector bc = b.array() - b.mean();
  return ac.dot(bc) / (ac.norm() * bc.norm());
}

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("damped sinusoid: envelope peak, zero frequency, 1/e point") {
  const auto grid = synth::time_grid(41, 2.0);
  const double tau = 1.0, omega = 0.25;

  const Vector s = synth::damped_sinusoid(7.3, tau, omega, grid);
  // t = tau lies on the grid (index 20); the envelope there is exactly 1
  CHECK(std::abs(s(20)) == doctest::Approx(std::abs(std::sin(2 * M_PI * 7.3 * tau))).epsilon(1e-12));

  const Vector zero = synth::damped_sinusoid(0.0, tau, omega, grid);
  CHECK(zero.cwiseAbs().maxCoeff() == 0.0);

  // |t - tau| = omega: envelope = exp(-1)
  const double t_probe = tau + omega;
  const Vector probe = synth::damped_sinusoid(4.0, tau, omega, {t_probe});
  CHECK(std::abs(probe(0)) ==
        doctest::Approx(std::abs(std::sin(2 * M_PI * 4.0 * t_probe)) * std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("default TBF bank is orthonormal") {
  const TemporalBasis theta = synth::make_default_tbf(40, 1.0);
  CHECK(theta.components() == 4);
  CHECK(theta.samples() == 40);
  const Matrix gram = theta.rows * theta.rows.transpose();
  CHECK((gram - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("tbf_from_svd: rank-1 input recovers the temporal factor") {
  Rng rng(1);
  Vector u = random_matrix(6, 1, rng);
  Vector v = random_matrix(40, 1, rng);
  const Matrix x = u * v.transpose();
  const TemporalBasis theta = synth::tbf_from_svd(x, 1);
  Vector row = theta.rows.row(0).transpose();
  CHECK(row.norm() == doctest::Approx(1.0).epsilon(1e-10));
  Vector vn = v / v.norm();
  if (row.dot(vn) < 0) vn = -vn;
  CHECK((row - vn).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(row(0) >= 0.0);  // sign convention: first nonzero entry positive
}

TEST_CASE("tbf_from_svd rows are orthonormal") {
  Rng rng(2);
  const Matrix x = random_matrix(6, 40, rng);
  const TemporalBasis theta = synth::tbf_from_svd(x, 4);
  const Matrix gram = theta.rows * theta.rows.transpose();
  CHECK((gram - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("tbf_from_svd satisfies the Eckart-Young residual identity") {
  Rng rng(3);
  const Matrix x = random_matrix(6, 40, rng);
  const int m = 4;
  const TemporalBasis theta = synth::tbf_from_svd(x, m);
  const double residual = (x - x * theta.rows.transpose() * theta.rows).squaredNorm();

  // independent spectrum: eigenvalues of the Gram matrix X X^T
  Eigen::SelfAdjointEigenSolver<Matrix> eig(x * x.transpose());
  Vector evals = eig.eigenvalues();  // ascending
  double discarded = 0.0;
  for (int i = 0; i < int(evals.size()) - m; ++i) discarded += std::max(0.0, evals(i));
  CHECK(residual == doctest::Approx(discarded).epsilon(1e-8));
}

TEST_CASE("tbf_from_svd rejects requests beyond the rank") {
  Rng rng(4);
  Vector u = random_matrix(6, 1, rng), v = random_matrix(40, 1, rng);
  const Matrix x = u * v.transpose();  // rank 1
  try {
    synth::tbf_from_svd(x, 3);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RankDeficient);
  }
}

TEST_CASE("sample_temporal_state: unit peak and row-space membership") {
  const TemporalBasis theta = synth::make_default_tbf(40, 1.0);
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const Vector phi = synth::sample_temporal_state(theta, rng, -1.0, 1.0);
    CHECK(phi.cwiseAbs().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
    const Vector residual = phi - theta.rows.transpose() * (theta.rows * phi);
    CHECK(residual.cwiseAbs().maxCoeff() < 1e-10);
  }

  // single-component basis: phi is the row rescaled to unit peak
  const TemporalBasis single = TemporalBasis::from_rows(theta.rows.topRows(1));
  const Vector phi = synth::sample_temporal_state(single, rng, 0.5, 1.0);
  Vector expected = single.rows.row(0).transpose();
  expected /= expected.cwiseAbs().maxCoeff();
  if (phi.dot(expected) < 0) expected = -expected;
  CHECK((phi - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zeta draws pass a Kolmogorov-Smirnov uniformity check") {
  Rng rng(6);
  std::vector<double> draws;
  for (int i = 0; i < 2500; ++i) {
    const Vector z = synth::sample_zeta(rng, 4, -1.0, 1.0);
    for (int j = 0; j < 4; ++j) draws.push_back(z(j));
  }
  const double d = ks_statistic_uniform(draws, -1.0, 1.0);
  CHECK(d < 1.63 / std::sqrt(double(draws.size())));  // alpha = 0.01
}

TEST_CASE("sample_patch_set: k_max = 1 and single-element degenerate areas") {
  const mesh::CorticalMesh m = mesh::make_sphere_mesh(mesh::SphereBase::Icosahedron, 1, 8.0);
  synth::SynthesisConfig cfg;
  cfg.k_max = 1;
  cfg.a_max_cm2 = 10.0;
  Rng rng(7);
  for (int i = 0; i < 10; ++i) CHECK(synth::sample_patch_set(m, cfg, rng).size() == 1);

  cfg.a_max_cm2 = *std::min_element(m.element_areas.begin(), m.element_areas.end());
  for (int i = 0; i < 10; ++i) {
    const auto patches = synth::sample_patch_set(m, cfg, rng);
    CHECK(patches[0].indices.size() == 1);
  }
}

TEST_CASE("patch seeds are uniform over a uniform mesh (chi-square)") {
  const mesh::CorticalMesh m = mesh::make_sphere_mesh(mesh::SphereBase::Icosahedron, 1, 8.0);
  const int ne = m.element_count();  // 80
  synth::SynthesisConfig cfg;
  cfg.k_max = 1;
  cfg.a_max_cm2 = 5.0;
  Rng rng(8);
  std::vector<int> counts(std::size_t(ne), 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[std::size_t(synth::sample_patch_set(m, cfg, rng)[0].seed)];
  const double expected = double(n) / ne;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 111.14);  // chi-square 99th percentile, 79 dof
}

TEST_CASE("drawn target areas are uniform on (0, a_max] and overshoot is bounded") {
  const mesh::CorticalMesh m = mesh::make_sphere_mesh(mesh::SphereBase::Octahedron, 3, 8.0);
  const double a_max = 20.0;
  const double max_elem = *std::max_element(m.element_areas.begin(), m.element_areas.end());
  Rng rng(9);
  std::vector<double> targets;
  for (int i = 0; i < 800; ++i) {
    std::vector<double> drawn;
    const auto patches = synth::place_patches(m, 1, a_max, rng, &drawn);
    REQUIRE(drawn.size() == 1);
    CHECK(drawn[0] > 0.0);
    CHECK(drawn[0] <= a_max);
    CHECK(patches[0].area >= drawn[0]);
    CHECK(patches[0].area - drawn[0] < max_elem);
    targets.push_back(drawn[0]);
  }
  CHECK(ks_statistic_uniform(targets, 0.0, a_max) < 1.63 / std::sqrt(double(targets.size())));
}

TEST_CASE("disjoint placement fails when the mesh cannot host the patches") {
  const mesh::CorticalMesh m = mesh::make_sphere_mesh(mesh::SphereBase::Tetrahedron, 0, 2.0);
  Rng rng(10);
  try {
    synth::place_patches_fixed(m, {m.total_area, m.total_area}, rng);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PlacementFailure);
  }
}

TEST_CASE("generate_sample invariants and the per-patch accumulation oracle") {
  const mesh::CorticalMesh m = mesh::make_sphere_mesh(mesh::SphereBase::Octahedron, 2, 8.0);
  const forward::LeadField L = forward::synth_leadfield(m, mesh::fibonacci_electrodes(16, 10.0));
  const TemporalBasis theta = synth::make_default_tbf(40, 1.0);
  synth::SynthesisConfig cfg;
  cfg.k_max = 2;
  cfg.a_max_cm2 = 15.0;

  Rng rng(11);
  for (int i = 0; i < 8; ++i) {
    const synth::GeneratedSample g = synth::generate_sample(m, L, theta, cfg, rng);
    const int k = int(g.patches.size());

    for (int p = 0; p < k; ++p)
      for (int e = 0; e < m.element_count(); ++e) {
        const bool inside = g.patches[std::size_t(p)].contains(e);
        CHECK(g.W(e, p) == (inside ? 1.0 : 0.0));
      }

    // S = W * Phi exactly, checked by per-patch accumulation
    Matrix acc = Matrix::Zero(m.element_count(), theta.samples());
    for (int p = 0; p < k; ++p)
      for (int e : g.patches[std::size_t(p)].indices) acc.row(e) += g.Phi.row(p);
    CHECK((g.S - acc).cwiseAbs().maxCoeff() == 0.0);

    for (int e = 0; e < m.element_count(); ++e) {
      bool inside = false;
      for (const auto& patch : g.patches) inside = inside || patch.contains(e);
      if (!inside) CHECK(g.S.row(e).cwiseAbs().maxCoeff() == 0.0);
    }

    CHECK((g.X - L.m * g.S).cwiseAbs().maxCoeff() < 1e-12 * g.X.cwiseAbs().maxCoeff());

    Eigen::BDCSVD<Matrix> svd(g.S);
    int rank = 0;
    for (int j = 0; j < int(svd.singularValues().size()); ++j)
      if (svd.singularValues()(j) > 1e-9 * svd.singularValues()(0)) ++rank;
    CHECK(rank <= k);

    const Matrix coeffs = L.m.colPivHouseholderQr().solve(g.X);
    CHECK((L.m * coeffs - g.X).norm() < 1e-9 * g.X.norm());
  }
}

TEST_CASE("generate_dataset: dims, determinism, and predicted byte size") {
  const mesh::CorticalMesh m = mesh::make_sphere_mesh(mesh::SphereBase::Tetrahedron, 1, 8.0);
  const forward::LeadField L = forward::synth_leadfield(m, mesh::fibonacci_electrodes(8, 10.0));
  const TemporalBasis theta = synth::make_default_tbf(40, 1.0);

  synth::SynthesisConfig cfg;
  cfg.sample_count = 1;
  cfg.master_seed = 99;
  synth::generate_dataset(m, L, theta, cfg, "ds_single.esid");
  const synth::Dataset single = synth::load_dataset("ds_single.esid");
  CHECK(single.count == 1);
  CHECK(single.channels == 8);
  CHECK(single.sources == 16);
  CHECK(single.samples == 40);
  std::remove("ds_single.esid");

  cfg.sample_count = 20;
  synth::generate_dataset(m, L, theta, cfg, "ds_a.esid");
  synth::generate_dataset(m, L, theta, cfg, "ds_b.esid");
  auto slurp = [](const char* path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  const std::string a = slurp("ds_a.esid"), b = slurp("ds_b.esid");
  CHECK(a == b);
  CHECK(a.size() == synth::dataset_file_size(20, 8, 16, 40));
  std::remove("ds_a.esid");
  std::remove("ds_b.esid");
}

TEST_CASE("correlated_pair hits the requested correlation exactly") {
  const TemporalBasis theta = synth::make_default_tbf(40, 1.0);
  Rng rng(12);

  const auto [a0, b0] = synth::correlated_pair(theta, 0.0, rng);
  CHECK(std::abs(pearson(a0, b0)) < 1e-12);

  const auto [a1, b1] = synth::correlated_pair(theta, 1.0, rng);
  CHECK((a1 - b1).cwiseAbs().maxCoeff() < 1e-12);

  const auto [a9, b9] = synth::correlated_pair(theta, 0.9, rng);
  CHECK(pearson(a9, b9) == doctest::Approx(0.9).epsilon(1e-12));
}
