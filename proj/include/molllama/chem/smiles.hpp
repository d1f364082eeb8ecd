#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

#include "molllama/chem/molecule.hpp"

namespace molllama::chem {

class SmilesError : public std::runtime_error {
 public:
  SmilesError(const std::string& message, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct SmilesOptions {
  // Per-element overrides of default_valence_cap(); the cap is raised by
  // |formal charge| for charged atoms.
  std::map<std::string, int, std::less<>> valence_caps;
};

// Parses a SMILES string into a heavy-atom graph. Supports the organic subset,
// bracket atoms (isotope, charge, H count, atom class), bonds - = # : / \,
// ring closures (digits and %nn), branches, aromatic lowercase atoms and '.'
// fragment separators. Stereo markers are accepted and dropped.
MolGraph parse_smiles(std::string_view smiles, const SmilesOptions& options = {});

// Depth-first writer visiting atoms in index order. The output re-parses to a
// graph with identical atom and bond counts.
std::string write_smiles(const MolGraph& graph);

}  // namespace molllama::chem
