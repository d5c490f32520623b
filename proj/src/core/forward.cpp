#include "core/forward.hpp"

#include <cmath>

#include "core/binio.hpp"
#include "core/error.hpp"
#include "core/rng.hpp"

namespace esi::forward {

LeadField LeadField::from_matrix(Matrix matrix) {
  if (matrix.rows() < 1 || matrix.cols() < 1)
    raise(ErrorCode::InvalidLeadField, "empty lead field");
  if (!matrix.allFinite()) raise(ErrorCode::InvalidLeadField, "non-finite lead field entries");
  for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
    if (matrix.col(j).cwiseAbs().maxCoeff() == 0.0)
      raise(ErrorCode::InvalidLeadField, "all-zero column " + std::to_string(j));
  }
  return LeadField{std::move(matrix)};
}

Matrix forward_project(const LeadField& L, const Matrix& S) {
  if (L.m.cols() != S.rows())
    raise(ErrorCode::ShapeError, "lead field has " + std::to_string(L.m.cols()) +
                                     " sources but S has " + std::to_string(S.rows()) + " rows");
  return L.m * S;
}

LeadField synth_leadfield(const mesh::CorticalMesh& m, const std::vector<mesh::Vec3>& electrodes) {
  if (electrodes.empty()) raise(ErrorCode::InvalidArgument, "no electrodes");
  const int ns = m.element_count();
  const int nc = int(electrodes.size());

  mesh::Vec3 center = mesh::Vec3::Zero();
  for (const auto& c : m.centroids) center += c;
  center /= double(ns);
  double bound = 0.0;
  for (const auto& c : m.centroids) bound = std::max(bound, (c - center).norm());
  for (int c = 0; c < nc; ++c) {
    if ((electrodes[std::size_t(c)] - center).norm() <= bound)
      raise(ErrorCode::SingularGeometry,
            "electrode " + std::to_string(c) + " inside the source bounding sphere");
  }

  Matrix L(nc, ns);
  for (int c = 0; c < nc; ++c) {
    for (int s = 0; s < ns; ++s) {
      const mesh::Vec3 r = electrodes[std::size_t(c)] - m.centroids[std::size_t(s)];
      const double dist = r.norm();
      if (dist <= 0.0)
        raise(ErrorCode::SingularGeometry, "electrode " + std::to_string(c) +
                                               " coincides with source " + std::to_string(s));
      L(c, s) = m.normals[std::size_t(s)].dot(r) / (dist * dist * dist);
    }
  }
  return LeadField::from_matrix(std::move(L));
}

LeadField load_leadfield(const std::string& path) {
  binio::Reader in(path);
  in.expect_magic("ESIL");
  const std::uint32_t version = in.u32();
  if (version != 1)
    raise(ErrorCode::FormatError, "unsupported ESIL version " + std::to_string(version));
  const std::uint32_t nc = in.u32(), ns = in.u32();
  if (nc == 0 || ns == 0 || std::uint64_t(nc) * ns > (1u << 28))
    raise(ErrorCode::FormatError, "implausible ESIL dims " + std::to_string(nc) + "x" + std::to_string(ns));
  Matrix m(nc, ns);
  std::vector<double> row(ns);
  for (std::uint32_t c = 0; c < nc; ++c) {
    in.f64(row.data(), ns);
    for (std::uint32_t s = 0; s < ns; ++s) m(c, s) = row[s];
  }
  if (!in.at_eof()) raise(ErrorCode::FormatError, "trailing bytes in " + path);
  return LeadField::from_matrix(std::move(m));
}

void save_leadfield(const LeadField& L, const std::string& path) {
  binio::Writer out(path);
  out.magic("ESIL");
  out.u32(1);
  out.u32(std::uint32_t(L.channels()));
  out.u32(std::uint32_t(L.sources()));
  std::vector<double> row(static_cast<std::size_t>(L.sources()));
  for (int c = 0; c < L.channels(); ++c) {
    for (int s = 0; s < L.sources(); ++s) row[std::size_t(s)] = L.m(c, s);
    out.f64(row.data(), row.size());
  }
  out.finish();
}

Matrix add_noise(const Matrix& X, double snr_db, std::uint64_t seed) {
  if (!std::isfinite(snr_db)) raise(ErrorCode::InvalidArgument, "snr_db must be finite");
  const double signal_power = X.squaredNorm();
  if (signal_power == 0.0) raise(ErrorCode::ZeroSignal, "cannot set an SNR on a zero recording");

  Rng rng(seed);
  Matrix eps(X.rows(), X.cols());
  for (Eigen::Index r = 0; r < eps.rows(); ++r)
    for (Eigen::Index c = 0; c < eps.cols(); ++c) eps(r, c) = rng.normal();
  const double eps_power = eps.squaredNorm();
  if (eps_power == 0.0) raise(ErrorCode::NumericalFailure, "degenerate noise draw");

  // Exact rescaling: |eps|^2 = |X|^2 * 10^(-snr/10).
  const double scale = std::sqrt(signal_power * std::pow(10.0, -snr_db / 10.0) / eps_power);
  return X + scale * eps;
}

Matrix load_recording(const std::string& path) {
  binio::Reader in(path);
  in.expect_magic("ESIR");
  const std::uint32_t nc = in.u32(), t = in.u32();
  if (nc == 0 || t < 2 || std::uint64_t(nc) * t > (1u << 28))
    raise(ErrorCode::FormatError, "implausible ESIR dims " + std::to_string(nc) + "x" + std::to_string(t));
  Matrix X(nc, t);
  std::vector<double> row(t);
  for (std::uint32_t c = 0; c < nc; ++c) {
    in.f64(row.data(), t);
    for (std::uint32_t s = 0; s < t; ++s) X(c, s) = row[s];
  }
  if (!in.at_eof()) raise(ErrorCode::FormatError, "trailing bytes in " + path);
  if (!X.allFinite()) raise(ErrorCode::FormatError, "non-finite samples in " + path);
  return X;
}

void save_recording(const Matrix& X, const std::string& path) {
  if (X.cols() < 2) raise(ErrorCode::ShapeError, "recording needs at least 2 time samples");
  binio::Writer out(path);
  out.magic("ESIR");
  out.u32(std::uint32_t(X.rows()));
  out.u32(std::uint32_t(X.cols()));
  std::vector<double> row(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index c = 0; c < X.rows(); ++c) {
    for (Eigen::Index s = 0; s < X.cols(); ++s) row[std::size_t(s)] = X(c, s);
    out.f64(row.data(), row.size());
  }
  out.finish();
}

}  // namespace esi::forward
