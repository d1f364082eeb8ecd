#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace molllama::chem {

enum class BondOrder : std::uint8_t { kSingle = 1, kDouble = 2, kTriple = 3, kAromatic = 4 };

char bond_symbol(BondOrder order);

struct Atom {
  std::string element;  // Capitalized symbol, e.g. "C", "Cl".
  int formal_charge = 0;
  bool aromatic = false;
  int isotope = 0;       // 0 when unspecified; passed through untouched.
  int explicit_h = -1;   // Bracket H count, -1 for organic-subset atoms.
  bool bracket = false;  // Written in brackets in the source SMILES.

  friend bool operator==(const Atom&, const Atom&) = default;
};

// Bonds seen by one atom, enough to recover its Kekule valence.
struct BondTally {
  int aromatic = 0;        // Number of aromatic bonds.
  int localized = 0;       // Sum of orders of the other bonds.
  bool multiple = false;   // Has a non-aromatic double or triple bond.
  int degree = 0;

  void add(BondOrder order);
};

struct Atom;
// Valence the atom would have in a Kekule structure, without hydrogens.
// Aromatic C/B contribute one extra pi bond unless they carry an exocyclic
// multiple bond; two-connected aromatic N/P/As likewise; O/S/Se/Te donate a
// lone pair and add nothing.
int kekule_valence(const Atom& atom, const BondTally& tally);

struct Bond {
  int i = 0;
  int j = 0;
  BondOrder order = BondOrder::kSingle;

  friend bool operator==(const Bond&, const Bond&) = default;
};

// Heavy-atom molecular graph. Hydrogens are implicit.
class MolGraph {
 public:
  MolGraph() = default;
  MolGraph(std::vector<Atom> atoms, std::vector<Bond> bonds);

  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::vector<Bond>& bonds() const { return bonds_; }
  std::size_t atom_count() const { return atoms_.size(); }
  std::size_t bond_count() const { return bonds_.size(); }
  bool empty() const { return atoms_.empty(); }

  struct Neighbor {
    int atom;
    int bond;
  };
  const std::vector<Neighbor>& neighbors(int atom) const { return adjacency_[atom]; }
  int degree(int atom) const { return static_cast<int>(adjacency_[atom].size()); }

  // Connected components, each a sorted list of atom indices.
  std::vector<std::vector<int>> components() const;
  bool connected() const { return components().size() <= 1; }

  // Relabels atoms so that new atom k is old atom perm[k].
  MolGraph permuted(const std::vector<int>& perm) const;

  // Molecular formula in Hill order, including implicit hydrogens.
  std::string formula() const;
  int implicit_hydrogens(int atom) const;

 private:
  void validate() const;

  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

struct MoleculeRecord {
  std::string id;
  std::string smiles;
  std::string iupac;
  std::string description;
  std::optional<std::vector<Vec3>> coords;
};

// Periodic-table lookups used by the parser and the valence check.
bool is_known_element(std::string_view symbol);
int atomic_number(std::string_view symbol);
// Default cap for the sum of bond orders plus explicit hydrogens.
int default_valence_cap(std::string_view symbol);
// Lowest normal valence, used to derive implicit hydrogen counts.
std::vector<int> normal_valences(std::string_view symbol);

}  // namespace molllama::chem
