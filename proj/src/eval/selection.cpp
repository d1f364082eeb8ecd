#include "molllama/eval/selection.hpp"

#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "molllama/chem/corpus.hpp"
#include "molllama/chem/fingerprint.hpp"
#include "molllama/chem/smiles.hpp"
#include "molllama/rng.hpp"

namespace molllama::eval {

std::vector<chem::MoleculeRecord> select_representatives(const std::vector<chem::MoleculeRecord>& corpus, int k,
                                                         std::uint64_t seed, const SelectionOptions& options) {
  if (corpus.empty()) throw DataError("select_representatives: empty corpus");
  const auto n = static_cast<Eigen::Index>(corpus.size());
  if (k < 1 || k > n) throw std::invalid_argument("select_representatives: need 1 <= k <= corpus size");

  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, options.nbits);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto fp = chem::morgan_fingerprint(chem::parse_smiles(corpus[i].smiles), options.radius, options.nbits);
    for (std::size_t b : fp.on_bits()) x(i, static_cast<Eigen::Index>(b)) = 1.0;
  }

  // k-means++ seeding. When every remaining point coincides with a chosen
  // centre the next centre is drawn uniformly among unchosen points.
  Rng rng(seed);
  std::vector<Eigen::Index> centres{static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)))};
  std::vector<bool> chosen(n, false);
  chosen[centres[0]] = true;
  Eigen::VectorXd d2 = (x.rowwise() - x.row(centres[0])).rowwise().squaredNorm();
  while (static_cast<int>(centres.size()) < k) {
    const double total = d2.sum();
    Eigen::Index pick = -1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        pick = i;
        u -= d2[i];
        if (u < 0.0) break;
      }
    } else {
      std::vector<Eigen::Index> free;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!chosen[i]) free.push_back(i);
      }
      pick = free[rng.below(free.size())];
    }
    centres.push_back(pick);
    chosen[pick] = true;
    d2 = d2.cwiseMin((x.rowwise() - x.row(pick)).rowwise().squaredNorm());
  }

  Eigen::MatrixXd c(k, options.nbits);
  for (int j = 0; j < k; ++j) c.row(j) = x.row(centres[j]);
  // Initial assignment pins each seed point to its own cluster so no cluster
  // starts empty even with duplicate fingerprints.
  std::vector<int> assign(n, -1);
  for (int j = 0; j < k; ++j) assign[centres[j]] = j;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (assign[i] >= 0) continue;
    Eigen::Index best;
    (c.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
    assign[i] = static_cast<int>(best);
  }

  for (int it = 0; it < options.max_iterations; ++it) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, options.nbits);
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[i]) += x.row(i);
      ++counts[assign[i]];
    }
    for (int j = 0; j < k; ++j) {
      if (counts[j] > 0) c.row(j) = sums.row(j) / counts[j];
    }
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      // Keep the last member of a cluster in place so clusters never empty.
      if (counts[assign[i]] == 1) continue;
      const Eigen::VectorXd dist = (c.rowwise() - x.row(i)).rowwise().squaredNorm();
      Eigen::Index best;
      const double best_d = dist.minCoeff(&best);
      if (static_cast<int>(best) != assign[i] && best_d < dist[assign[i]]) {
        --counts[assign[i]];
        ++counts[best];
        assign[i] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) break;
  }

  std::vector<chem::MoleculeRecord> out;
  for (int j = 0; j < k; ++j) {
    Eigen::Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (assign[i] != j) continue;
      const double d = (x.row(i) - c.row(j)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    out.push_back(corpus[best]);
  }
  return out;
}

}  // namespace molllama::eval
