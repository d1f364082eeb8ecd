#include "molllama/chem/fingerprint.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <stdexcept>

#include "molllama/hash.hpp"

namespace molllama::chem {

std::size_t Fingerprint::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), true)); }

std::vector<std::size_t> Fingerprint::on_bits() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < bits.size(); ++k) {
    if (bits[k]) out.push_back(k);
  }
  return out;
}

std::vector<std::uint64_t> morgan_identifiers(const MolGraph& graph, int radius) {
  if (radius < 0) throw std::invalid_argument("morgan_fingerprint: radius must be >= 0");
  const int n = static_cast<int>(graph.atom_count());
  const std::size_t nb = graph.bond_count();

  std::vector<std::uint64_t> ids(n);
  for (int a = 0; a < n; ++a) {
    const Atom& atom = graph.atoms()[a];
    const std::array<std::uint64_t, 4> invariant = {
        static_cast<std::uint64_t>(atomic_number(atom.element)), static_cast<std::uint64_t>(graph.degree(a)),
        static_cast<std::uint64_t>(static_cast<std::int64_t>(atom.formal_charge)),
        static_cast<std::uint64_t>(atom.aromatic)};
    ids[a] = hash_words(invariant);
  }

  // Bond coverage of each atom's current environment, as a sorted bond list.
  std::vector<std::vector<bool>> coverage(n, std::vector<bool>(nb, false));
  std::set<std::uint64_t> kept(ids.begin(), ids.end());
  // Every radius-0 environment covers the empty bond set, so later rounds of
  // isolated atoms are duplicates.
  std::set<std::vector<bool>> seen_coverage = {std::vector<bool>(nb, false)};

  for (int round = 1; round <= radius; ++round) {
    std::vector<std::uint64_t> next(n);
    std::vector<std::vector<bool>> next_coverage(n);
    for (int a = 0; a < n; ++a) {
      std::vector<std::pair<std::uint64_t, std::uint64_t>> env;
      next_coverage[a] = coverage[a];
      for (const auto& nbr : graph.neighbors(a)) {
        env.emplace_back(static_cast<std::uint64_t>(graph.bonds()[nbr.bond].order), ids[nbr.atom]);
        next_coverage[a][nbr.bond] = true;
        for (std::size_t b = 0; b < nb; ++b) {
          if (coverage[nbr.atom][b]) next_coverage[a][b] = true;
        }
      }
      std::sort(env.begin(), env.end());
      std::vector<std::uint64_t> words{static_cast<std::uint64_t>(round), ids[a]};
      for (const auto& [order, id] : env) {
        words.push_back(order);
        words.push_back(id);
      }
      next[a] = hash_words(words);
    }
    // Among environments with the same coverage, keep the smallest id; drop
    // coverages already produced by an earlier round.
    std::map<std::vector<bool>, std::uint64_t> best;
    for (int a = 0; a < n; ++a) {
      if (seen_coverage.count(next_coverage[a])) continue;
      auto [it, inserted] = best.emplace(next_coverage[a], next[a]);
      if (!inserted) it->second = std::min(it->second, next[a]);
    }
    for (const auto& [cov, id] : best) {
      kept.insert(id);
      seen_coverage.insert(cov);
    }
    ids = std::move(next);
    coverage = std::move(next_coverage);
  }
  return {kept.begin(), kept.end()};
}

Fingerprint morgan_fingerprint(const MolGraph& graph, int radius, int nbits) {
  if (nbits <= 0 || (nbits & (nbits - 1)) != 0) {
    throw std::invalid_argument("morgan_fingerprint: nbits must be a positive power of two");
  }
  Fingerprint fp;
  fp.radius = radius;
  fp.bits.assign(static_cast<std::size_t>(nbits), false);
  for (std::uint64_t id : morgan_identifiers(graph, radius)) {
    fp.bits[id & static_cast<std::uint64_t>(nbits - 1)] = true;
  }
  return fp;
}

}  // namespace molllama::chem
