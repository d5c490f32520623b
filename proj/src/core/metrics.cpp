#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "core/error.hpp"

namespace esi::metrics {

Vector source_energy(const Matrix& S) {
  if (!S.allFinite()) raise(ErrorCode::InvalidArgument, "non-finite source activity");
  return S.array().square().rowwise().sum();
}

double auc(const Vector& scores, const std::vector<int>& labels) {
  if (std::size_t(scores.size()) != labels.size())
    raise(ErrorCode::ShapeError, "scores and labels disagree in length");
  const std::size_t n = labels.size();
  std::size_t pos = 0;
  for (int l : labels) pos += std::size_t(l != 0);
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0)
    raise(ErrorCode::UndefinedMetric, "AUC needs both positive and negative labels");

  // Rank-sum form with average ranks for ties.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores(Eigen::Index(a)) < scores(Eigen::Index(b)); });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores(Eigen::Index(order[j + 1])) == scores(Eigen::Index(order[i]))) ++j;
    const double avg_rank = 0.5 * (double(i + 1) + double(j + 1));
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] != 0) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  return (rank_sum_pos - 0.5 * double(pos) * double(pos + 1)) / (double(pos) * double(neg));
}

double rmse_rel(const Matrix& truth, const Matrix& est) {
  if (truth.rows() != est.rows() || truth.cols() != est.cols())
    raise(ErrorCode::ShapeError, "rmse operands disagree in shape");
  const double denom = truth.norm();
  if (denom == 0.0) raise(ErrorCode::ZeroReference, "zero reference signal");
  return (est - truth).norm() / denom;
}

double otsu_threshold(const Vector& scores) {
  if (scores.size() < 2) raise(ErrorCode::DegenerateInput, "need at least 2 scores");
  const double lo = scores.minCoeff(), hi = scores.maxCoeff();
  if (!(hi > lo)) raise(ErrorCode::DegenerateInput, "constant scores");

  constexpr int bins = 256;
  const double width = (hi - lo) / bins;
  std::vector<double> count(bins, 0.0), mass(bins, 0.0);
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    int b = int((scores(i) - lo) / (hi - lo) * bins);
    b = std::min(b, bins - 1);
    count[std::size_t(b)] += 1.0;
    mass[std::size_t(b)] += scores(i);
  }

  const double total_count = double(scores.size());
  const double total_mass = std::accumulate(mass.begin(), mass.end(), 0.0);
  double best_var = -1.0;
  int best_cut = 0;
  double c0 = 0.0, m0 = 0.0;
  for (int cut = 0; cut < bins - 1; ++cut) {
    c0 += count[std::size_t(cut)];
    m0 += mass[std::size_t(cut)];
    const double c1 = total_count - c0;
    if (c0 == 0.0 || c1 == 0.0) continue;
    const double mu0 = m0 / c0, mu1 = (total_mass - m0) / c1;
    const double var = (c0 / total_count) * (c1 / total_count) * (mu0 - mu1) * (mu0 - mu1);
    if (var > best_var) {  // strict: ties keep the lower cut
      best_var = var;
      best_cut = cut;
    }
  }
  if (best_var < 0.0) raise(ErrorCode::DegenerateInput, "degenerate histogram");
  return lo + width * double(best_cut + 1);
}

namespace {

// Connected components of the supra-threshold element set under mesh
// adjacency; returns the peak (argmax score) element of each component.
std::vector<int> component_peaks(const mesh::CorticalMesh& m, const std::vector<char>& supra,
                                 const Vector& scores) {
  const int n = m.element_count();
  std::vector<char> seen(std::size_t(n), 0);
  std::vector<int> peaks;
  for (int start = 0; start < n; ++start) {
    if (!supra[std::size_t(start)] || seen[std::size_t(start)]) continue;
    int peak = start;
    std::vector<int> stack{start};
    seen[std::size_t(start)] = 1;
    while (!stack.empty()) {
      const int e = stack.back();
      stack.pop_back();
      if (scores(e) > scores(peak)) peak = e;
      for (int nb : m.adjacency[std::size_t(e)])
        if (supra[std::size_t(nb)] && !seen[std::size_t(nb)]) {
          seen[std::size_t(nb)] = 1;
          stack.push_back(nb);
        }
    }
    peaks.push_back(peak);
  }
  return peaks;
}

}  // namespace

DleResult dle(const mesh::CorticalMesh& m, const Matrix& s_true, const Matrix& s_est,
              const std::vector<mesh::Patch>& true_patches) {
  if (s_est.rows() != m.element_count() || s_true.rows() != m.element_count())
    raise(ErrorCode::ShapeError, "activity rows do not match the mesh");
  if (true_patches.empty()) raise(ErrorCode::InvalidArgument, "no true patches");
  const Vector est_energy = source_energy(s_est);
  if (est_energy.maxCoeff() <= 0.0) raise(ErrorCode::ZeroEstimate, "zero estimate");

  DleResult out;
  out.patch_count = int(true_patches.size());
  out.mean_cm = std::numeric_limits<double>::quiet_NaN();

  double thr;
  try {
    thr = otsu_threshold(est_energy);
  } catch (const Error&) {
    return out;  // constant energy map: nothing detected
  }
  std::vector<char> supra(std::size_t(m.element_count()), 0);
  bool any = false;
  for (int j = 0; j < m.element_count(); ++j) {
    supra[std::size_t(j)] = est_energy(j) >= thr;
    any = any || supra[std::size_t(j)];
  }
  if (!any) return out;

  const std::vector<int> peaks = component_peaks(m, supra, est_energy);
  const Vector true_energy = source_energy(s_true);

  double acc = 0.0;
  for (const auto& patch : true_patches) {
    int true_peak = patch.indices.front();
    for (int e : patch.indices)
      if (true_energy(e) > true_energy(true_peak)) true_peak = e;
    double best = std::numeric_limits<double>::infinity();
    for (int p : peaks) best = std::min(best, patch_distance(m, true_peak, p));
    acc += best;
    ++out.detected;
  }
  out.mean_cm = acc / double(out.detected);
  return out;
}

double sd(const mesh::CorticalMesh& m, const std::vector<int>& true_support, const Matrix& s_est) {
  if (true_support.empty()) raise(ErrorCode::InvalidArgument, "empty true support");
  if (s_est.rows() != m.element_count())
    raise(ErrorCode::ShapeError, "activity rows do not match the mesh");
  const Vector energy = source_energy(s_est);
  const double total = energy.sum();
  if (total <= 0.0) raise(ErrorCode::ZeroEstimate, "zero estimate");

  double acc = 0.0;
  for (int j = 0; j < m.element_count(); ++j) {
    if (energy(j) == 0.0) continue;
    double d = std::numeric_limits<double>::infinity();
    for (int s : true_support) d = std::min(d, patch_distance(m, j, s));
    acc += d * d * energy(j);
  }
  return std::sqrt(acc / total);
}

double r2(const std::vector<Matrix>& truth, const std::vector<Matrix>& est) {
  if (truth.size() != est.size() || truth.empty())
    raise(ErrorCode::InvalidArgument, "r2 needs matching non-empty sets");
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : truth) {
    sum += t.sum();
    n += std::size_t(t.size());
  }
  const double mean = sum / double(n);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].rows() != est[i].rows() || truth[i].cols() != est[i].cols())
      raise(ErrorCode::ShapeError, "r2 operands disagree in shape");
    ss_res += (truth[i] - est[i]).squaredNorm();
    ss_tot += (truth[i].array() - mean).square().sum();
  }
  if (ss_tot == 0.0) raise(ErrorCode::UndefinedMetric, "constant truth");
  return 1.0 - ss_res / ss_tot;
}

double r2(const Matrix& truth, const Matrix& est) {
  return r2(std::vector<Matrix>{truth}, std::vector<Matrix>{est});
}

}  // namespace esi::metrics
