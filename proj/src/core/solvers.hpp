#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "core/forward.hpp"
#include "core/mesh.hpp"

namespace esi::solvers {

using Matrix = Eigen::MatrixXd;

struct Solution {
  Matrix s;  // Ns x T estimate
  double lambda = 0.0;
  int iterations = 0;
  bool converged = true;
};

enum class Method { Wmne, Loreta, Focuss };

Method method_from_name(const std::string& name);
const char* method_name(Method m);

// Push-through solver state shared across lambda values: holds P L^T and
// L P L^T for a fixed positive definite P, so each solve is one Nc x Nc
// LDLT. S = P L^T (L P L^T + lambda I)^-1 X.
struct PushThroughOp {
  Matrix p_lt;  // P * L^T, Ns x Nc
  Matrix gram;  // L * P * L^T, Nc x Nc

  Matrix solve(const Matrix& X, double lambda) const;
};

PushThroughOp prepare_wmne(const forward::LeadField& L);
PushThroughOp prepare_loreta(const forward::LeadField& L, const mesh::CorticalMesh& m);

// Depth-weighted minimum norm: S = W^-2 L^T (L W^-2 L^T + lambda I)^-1 X
// with W = diag(column norms of L). Symmetric LDLT solve, no explicit
// inverse.
Solution wmne(const forward::LeadField& L, const Matrix& X, double lambda);

// Laplacian-smoothness solution: argmin |X - LS|_F^2 + lambda(|B W S|_F^2 +
// eps_floor |W S|_F^2) with B the row-normalized graph Laplacian of the mesh
// element adjacency and W the wMNE depth weights. The eps_floor term keeps
// the penalty Gram invertible (B annihilates constants), enabling the same
// push-through solve as wMNE.
Solution loreta(const forward::LeadField& L, const Matrix& X, double lambda,
                const mesh::CorticalMesh& m);

// Iteratively reweighted least squares with W_k = diag(row norms of the
// previous iterate), seeded from wMNE. Stops when the relative change drops
// below tol or after max_iter iterations.
Solution focuss(const forward::LeadField& L, const Matrix& X, double lambda, int max_iter = 20,
                double tol = 1e-6);

// Row-normalized graph Laplacian I - D^-1 A over element adjacency.
Matrix graph_laplacian(const mesh::CorticalMesh& m);

// 12 points log-spaced over [1e-6, 1e2] * trace(L L^T) / Nc.
std::vector<double> default_lambda_grid(const forward::LeadField& L);

// Discrepancy principle: smallest grid lambda whose residual power
// |X - L S|_F^2 reaches the estimated noise power; grid midpoint if none
// qualifies. The mesh is required for Method::Loreta only.
double select_lambda(const forward::LeadField& L, const Matrix& X, Method method,
                     const std::vector<double>& grid, double noise_power,
                     const mesh::CorticalMesh* m = nullptr);

// Noise power implied by an SNR: |eps|^2 = |X|^2 / (10^(snr/10) + 1).
double noise_power_from_snr(const Matrix& X, double snr_db);

}  // namespace esi::solvers
