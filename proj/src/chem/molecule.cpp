#include "molllama/chem/molecule.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace molllama::chem {
namespace {

constexpr std::array<std::string_view, 118> kSymbols = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",  "S",
    "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge",
    "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd",
    "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn",
    "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

}  // namespace

void BondTally::add(BondOrder order) {
  ++degree;
  if (order == BondOrder::kAromatic) {
    ++aromatic;
    return;
  }
  localized += static_cast<int>(order);
  if (order != BondOrder::kSingle) multiple = true;
}

int kekule_valence(const Atom& atom, const BondTally& tally) {
  int v = tally.localized + tally.aromatic;
  if (!atom.aromatic || tally.aromatic == 0) return v;
  const std::string& e = atom.element;
  if (e == "C" || e == "B") {
    if (!tally.multiple) ++v;
  } else if (e == "N" || e == "P" || e == "As") {
    if (!tally.multiple && tally.degree + std::max(atom.explicit_h, 0) == 2) ++v;
  }
  return v;
}

char bond_symbol(BondOrder order) {
  switch (order) {
    case BondOrder::kSingle: return '-';
    case BondOrder::kDouble: return '=';
    case BondOrder::kTriple: return '#';
    case BondOrder::kAromatic: return ':';
  }
  return '-';
}

bool is_known_element(std::string_view symbol) { return atomic_number(symbol) > 0; }

int atomic_number(std::string_view symbol) {
  const auto it = std::find(kSymbols.begin(), kSymbols.end(), symbol);
  return it == kSymbols.end() ? 0 : static_cast<int>(it - kSymbols.begin()) + 1;
}

std::vector<int> normal_valences(std::string_view symbol) {
  static const std::map<std::string_view, std::vector<int>, std::less<>> kValences = {
      {"H", {1}},  {"B", {3}},    {"C", {4}},       {"N", {3, 5}}, {"O", {2}},  {"P", {3, 5}},
      {"S", {2, 4, 6}}, {"F", {1}}, {"Cl", {1}}, {"Br", {1}}, {"I", {1}}, {"Si", {4}},
      {"Se", {2, 4, 6}}};
  const auto it = kValences.find(symbol);
  return it == kValences.end() ? std::vector<int>{} : it->second;
}

int default_valence_cap(std::string_view symbol) {
  static const std::map<std::string_view, int, std::less<>> kCaps = {
      {"H", 1}, {"B", 4}, {"C", 4}, {"N", 5},  {"O", 2}, {"P", 6}, {"S", 6},
      {"F", 1}, {"Cl", 7}, {"Br", 5}, {"I", 7}, {"Si", 6}, {"Se", 6}};
  const auto it = kCaps.find(symbol);
  return it == kCaps.end() ? 8 : it->second;
}

MolGraph::MolGraph(std::vector<Atom> atoms, std::vector<Bond> bonds)
    : atoms_(std::move(atoms)), bonds_(std::move(bonds)), adjacency_(atoms_.size()) {
  validate();
  for (std::size_t b = 0; b < bonds_.size(); ++b) {
    adjacency_[bonds_[b].i].push_back({bonds_[b].j, static_cast<int>(b)});
    adjacency_[bonds_[b].j].push_back({bonds_[b].i, static_cast<int>(b)});
  }
}

void MolGraph::validate() const {
  const int n = static_cast<int>(atoms_.size());
  std::set<std::pair<int, int>> seen;
  for (const Bond& b : bonds_) {
    if (b.i < 0 || b.j < 0 || b.i >= n || b.j >= n) throw std::invalid_argument("bond atom index out of range");
    if (b.i == b.j) throw std::invalid_argument("self bond");
    if (!seen.insert({std::min(b.i, b.j), std::max(b.i, b.j)}).second) {
      throw std::invalid_argument("duplicate bond");
    }
  }
}

std::vector<std::vector<int>> MolGraph::components() const {
  const int n = static_cast<int>(atoms_.size());
  std::vector<int> label(n, -1);
  std::vector<std::vector<int>> out;
  for (int start = 0; start < n; ++start) {
    if (label[start] >= 0) continue;
    std::vector<int> stack{start};
    std::vector<int> members;
    label[start] = static_cast<int>(out.size());
    while (!stack.empty()) {
      const int a = stack.back();
      stack.pop_back();
      members.push_back(a);
      for (const Neighbor& nb : adjacency_[a]) {
        if (label[nb.atom] < 0) {
          label[nb.atom] = label[start];
          stack.push_back(nb.atom);
        }
      }
    }
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  return out;
}

MolGraph MolGraph::permuted(const std::vector<int>& perm) const {
  if (perm.size() != atoms_.size()) throw std::invalid_argument("permutation size mismatch");
  std::vector<int> inverse(perm.size(), -1);
  for (std::size_t k = 0; k < perm.size(); ++k) inverse[perm[k]] = static_cast<int>(k);
  std::vector<Atom> atoms;
  atoms.reserve(atoms_.size());
  for (int old : perm) atoms.push_back(atoms_[old]);
  std::vector<Bond> bonds;
  bonds.reserve(bonds_.size());
  for (const Bond& b : bonds_) bonds.push_back({inverse[b.i], inverse[b.j], b.order});
  return MolGraph(std::move(atoms), std::move(bonds));
}

int MolGraph::implicit_hydrogens(int atom) const {
  const Atom& a = atoms_[atom];
  if (a.explicit_h >= 0) return a.explicit_h;
  BondTally tally;
  for (const Neighbor& nb : adjacency_[atom]) tally.add(bonds_[nb.bond].order);
  const int used = kekule_valence(a, tally);
  for (int v : normal_valences(a.element)) {
    if (v >= used) return v - used;
  }
  return 0;
}

std::string MolGraph::formula() const {
  std::map<std::string, int> counts;
  int hydrogens = 0;
  for (std::size_t k = 0; k < atoms_.size(); ++k) {
    ++counts[atoms_[k].element];
    hydrogens += implicit_hydrogens(static_cast<int>(k));
  }
  counts["H"] += hydrogens;
  std::string out;
  auto emit = [&](const std::string& sym) {
    const auto it = counts.find(sym);
    if (it == counts.end() || it->second == 0) return;
    out += sym;
    if (it->second > 1) out += std::to_string(it->second);
    counts.erase(it);
  };
  if (counts.count("C")) {
    emit("C");
    emit("H");
  }
  std::vector<std::string> rest;
  for (const auto& [sym, c] : counts) {
    if (c > 0) rest.push_back(sym);
  }
  for (const std::string& sym : rest) emit(sym);
  return out;
}

}  // namespace molllama::chem
