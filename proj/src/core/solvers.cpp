#include "core/solvers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "core/error.hpp"

namespace esi::solvers {

namespace {

Eigen::VectorXd depth_weights(const forward::LeadField& L) {
  Eigen::VectorXd w(L.sources());
  for (int j = 0; j < L.sources(); ++j) {
    w(j) = L.m.col(j).norm();
    if (w(j) <= 0.0) raise(ErrorCode::InvalidLeadField, "zero-gain source column");
  }
  return w;
}

}  // namespace

Matrix PushThroughOp::solve(const Matrix& X, double lambda) const {
  if (X.rows() != gram.rows()) raise(ErrorCode::ShapeError, "X rows do not match the lead field");
  Matrix g = gram;
  g.diagonal().array() += lambda;
  Eigen::LDLT<Matrix> ldlt(g);
  if (ldlt.info() != Eigen::Success) raise(ErrorCode::NumericalFailure, "LDLT factorization failed");
  Matrix s = p_lt * ldlt.solve(X);
  if (!s.allFinite()) raise(ErrorCode::NumericalFailure, "non-finite solver output");
  return s;
}

PushThroughOp prepare_wmne(const forward::LeadField& L) {
  const Eigen::VectorXd w = depth_weights(L);
  PushThroughOp op;
  op.p_lt = w.array().square().inverse().matrix().asDiagonal() * L.m.transpose();
  op.gram = L.m * op.p_lt;
  return op;
}

PushThroughOp prepare_loreta(const forward::LeadField& L, const mesh::CorticalMesh& m) {
  if (m.element_count() != L.sources())
    raise(ErrorCode::ShapeError, "mesh does not match the lead field source count");
  // eps_floor keeps the penalty Gram invertible: the Laplacian annihilates
  // spatially constant activity.
  constexpr double eps_floor = 1e-6;
  const Eigen::VectorXd w = depth_weights(L);
  const Matrix b = graph_laplacian(m);
  Matrix penalty = b.transpose() * b;
  penalty.diagonal().array() += eps_floor;
  penalty = w.asDiagonal() * penalty * w.asDiagonal();
  Eigen::LDLT<Matrix> pldlt(penalty);
  if (pldlt.info() != Eigen::Success)
    raise(ErrorCode::NumericalFailure, "penalty factorization failed");
  PushThroughOp op;
  op.p_lt = pldlt.solve(L.m.transpose());
  op.gram = L.m * op.p_lt;
  return op;
}

Method method_from_name(const std::string& name) {
  if (name == "wmne") return Method::Wmne;
  if (name == "loreta") return Method::Loreta;
  if (name == "focuss") return Method::Focuss;
  raise(ErrorCode::InvalidArgument, "unknown solver: " + name);
}

const char* method_name(Method m) {
  switch (m) {
    case Method::Wmne: return "wmne";
    case Method::Loreta: return "loreta";
    case Method::Focuss: return "focuss";
  }
  return "?";
}

Solution wmne(const forward::LeadField& L, const Matrix& X, double lambda) {
  if (!(lambda > 0.0)) raise(ErrorCode::InvalidArgument, "lambda must be positive");
  Solution out;
  out.s = prepare_wmne(L).solve(X, lambda);
  out.lambda = lambda;
  out.iterations = 1;
  return out;
}

Matrix graph_laplacian(const mesh::CorticalMesh& m) {
  const int n = m.element_count();
  Matrix b = Matrix::Identity(n, n);
  for (int i = 0; i < n; ++i) {
    const auto& nbrs = m.adjacency[std::size_t(i)];
    if (nbrs.empty()) raise(ErrorCode::MeshDisconnected, "isolated element in adjacency");
    const double inv_deg = 1.0 / double(nbrs.size());
    for (int j : nbrs) b(i, j) -= inv_deg;
  }
  return b;
}

Solution loreta(const forward::LeadField& L, const Matrix& X, double lambda,
                const mesh::CorticalMesh& m) {
  if (!(lambda > 0.0)) raise(ErrorCode::InvalidArgument, "lambda must be positive");
  Solution out;
  out.s = prepare_loreta(L, m).solve(X, lambda);
  out.lambda = lambda;
  out.iterations = 1;
  return out;
}

Solution focuss(const forward::LeadField& L, const Matrix& X, double lambda, int max_iter,
                double tol) {
  if (max_iter < 1) raise(ErrorCode::InvalidArgument, "max_iter must be >= 1");
  if (!(lambda > 0.0)) raise(ErrorCode::InvalidArgument, "lambda must be positive");

  Solution out;
  out.lambda = lambda;
  out.converged = false;
  Matrix prev = wmne(L, X, lambda).s;

  for (int it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd w2(L.sources());
    for (int j = 0; j < L.sources(); ++j) {
      const double r = prev.row(j).norm();
      w2(j) = r * r;
    }
    PushThroughOp op;
    op.p_lt = w2.asDiagonal() * L.m.transpose();
    op.gram = L.m * op.p_lt;
    Matrix cur = op.solve(X, lambda);
    out.iterations = it;
    const double denom = prev.norm();
    const double change = denom > 0.0 ? (cur - prev).norm() / denom : (cur - prev).norm();
    prev = std::move(cur);
    if (change < tol) {
      out.converged = true;
      break;
    }
  }
  out.s = std::move(prev);
  return out;
}

std::vector<double> default_lambda_grid(const forward::LeadField& L) {
  const double scale = L.m.squaredNorm() / double(L.channels());
  std::vector<double> grid;
  const int n = 12;
  for (int i = 0; i < n; ++i) {
    const double e = -6.0 + 8.0 * double(i) / double(n - 1);
    grid.push_back(scale * std::pow(10.0, e));
  }
  return grid;
}

double noise_power_from_snr(const Matrix& X, double snr_db) {
  return X.squaredNorm() / (std::pow(10.0, snr_db / 10.0) + 1.0);
}

double select_lambda(const forward::LeadField& L, const Matrix& X, Method method,
                     const std::vector<double>& grid, double noise_power,
                     const mesh::CorticalMesh* m) {
  if (grid.empty()) raise(ErrorCode::InvalidArgument, "empty lambda grid");
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());

  PushThroughOp op;
  if (method == Method::Wmne) op = prepare_wmne(L);
  if (method == Method::Loreta) {
    if (!m) raise(ErrorCode::InvalidArgument, "loreta lambda selection needs a mesh");
    op = prepare_loreta(L, *m);
  }
  auto solve = [&](double lambda) -> Matrix {
    if (method == Method::Focuss) return focuss(L, X, lambda).s;
    return op.solve(X, lambda);
  };

  for (double lambda : sorted) {
    const double residual = (X - L.m * solve(lambda)).squaredNorm();
    if (residual >= noise_power) return lambda;
  }
  return sorted[sorted.size() / 2];
}

}  // namespace esi::solvers
