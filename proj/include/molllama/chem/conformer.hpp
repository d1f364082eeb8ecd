#pragma once

#include <cstdint>
#include <vector>

#include "molllama/chem/molecule.hpp"

namespace molllama::chem {

struct Conformer {
  std::vector<Vec3> positions;

  std::size_t size() const { return positions.size(); }
};

struct EmbedOptions {
  int iterations = 400;
  double step = 0.05;
  double bond_length = 1.0;
  double repulsion_cutoff = 1.6;
};

// Spring relaxation: seeded random placement, then a fixed number of
// iterations pulling bonded atoms toward bond_length and pushing non-bonded
// pairs apart below repulsion_cutoff. Output is centered on the origin.
Conformer embed_conformer(const MolGraph& graph, std::uint64_t seed, const EmbedOptions& options = {});

// Uses record coordinates when present (validated against the graph), the
// spring embedder otherwise.
Conformer conformer_for(const MoleculeRecord& record, const MolGraph& graph, std::uint64_t seed);

Conformer permuted(const Conformer& conf, const std::vector<int>& perm);

}  // namespace molllama::chem
