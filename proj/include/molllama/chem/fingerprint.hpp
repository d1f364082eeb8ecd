#pragma once

#include <cstdint>
#include <vector>

#include "molllama/chem/molecule.hpp"

namespace molllama::chem {

struct Fingerprint {
  std::vector<bool> bits;
  int radius = 2;

  std::size_t size() const { return bits.size(); }
  std::size_t count() const;
  std::vector<std::size_t> on_bits() const;

  friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

// ECFP-style circular fingerprint. Atom invariants are (atomic number, degree,
// formal charge, aromatic flag); each round rehashes the atom's identifier with
// its sorted (bond order, neighbor identifier) list. Environments covering a
// bond set already seen are dropped, as in the original Morgan/ECFP scheme.
// Identifiers fold to bit = hash mod nbits.
Fingerprint morgan_fingerprint(const MolGraph& graph, int radius = 2, int nbits = 2048);

// Unfolded identifiers that survive duplicate removal, sorted.
std::vector<std::uint64_t> morgan_identifiers(const MolGraph& graph, int radius);

}  // namespace molllama::chem
