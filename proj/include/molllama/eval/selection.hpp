#pragma once

#include <cstdint>
#include <vector>

#include "molllama/chem/molecule.hpp"

namespace molllama::eval {

struct SelectionOptions {
  int radius = 2;
  int nbits = 2048;
  int max_iterations = 100;
};

// k-means over Morgan fingerprint bit vectors (Euclidean, seeded k-means++
// initialisation, capped Lloyd iterations); returns the member nearest each
// centroid, ordered by cluster. Throws DataError on an empty corpus and
// std::invalid_argument unless 1 <= k <= corpus size.
std::vector<chem::MoleculeRecord> select_representatives(const std::vector<chem::MoleculeRecord>& corpus, int k,
                                                         std::uint64_t seed, const SelectionOptions& options = {});

}  // namespace molllama::eval
