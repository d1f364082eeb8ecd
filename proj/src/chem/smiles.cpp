#include "molllama/chem/smiles.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace molllama::chem {

SmilesError::SmilesError(const std::string& message, std::size_t offset)
    : std::runtime_error(message + " at offset " + std::to_string(offset)), offset_(offset) {}

namespace {

bool is_organic(std::string_view sym) {
  static constexpr std::string_view kOrganic[] = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"};
  return std::find(std::begin(kOrganic), std::end(kOrganic), sym) != std::end(kOrganic);
}

bool is_aromatic_organic(std::string_view sym) {
  static constexpr std::string_view kAromatic[] = {"B", "C", "N", "O", "P", "S"};
  return std::find(std::begin(kAromatic), std::end(kAromatic), sym) != std::end(kAromatic);
}

struct PendingBond {
  BondOrder order;
  std::size_t offset;
};

struct OpenRing {
  int atom;
  std::optional<BondOrder> order;
  std::size_t offset;
};

class Parser {
 public:
  Parser(std::string_view text, const SmilesOptions& options) : text_(text), options_(options) {}

  MolGraph parse() {
    if (text_.empty()) throw SmilesError("empty SMILES", 0);
    while (pos_ < text_.size()) step();
    if (!branches_.empty()) throw SmilesError("unbalanced parentheses", branches_.back().second);
    if (!rings_.empty()) {
      std::size_t first = text_.size();
      for (const auto& [num, ring] : rings_) first = std::min(first, ring.offset);
      throw SmilesError("unmatched ring-closure digit", first);
    }
    if (pending_) throw SmilesError("dangling bond", pending_->offset);
    if (atoms_.empty()) throw SmilesError("no atoms", 0);
    return finish();
  }

 private:
  void step() {
    const char c = text_[pos_];
    switch (c) {
      case '(':
        if (prev_ < 0) throw SmilesError("branch without preceding atom", pos_);
        if (pending_) throw SmilesError("bond before branch", pending_->offset);
        branches_.push_back({prev_, pos_});
        ++pos_;
        return;
      case ')':
        if (branches_.empty()) throw SmilesError("unbalanced parentheses", pos_);
        if (pending_) throw SmilesError("dangling bond", pending_->offset);
        prev_ = branches_.back().first;
        branches_.pop_back();
        ++pos_;
        return;
      case '-': case '/': case '\\': set_pending(BondOrder::kSingle); return;
      case '=': set_pending(BondOrder::kDouble); return;
      case '#': set_pending(BondOrder::kTriple); return;
      case ':': set_pending(BondOrder::kAromatic); return;
      case '.':
        if (pending_) throw SmilesError("dangling bond", pending_->offset);
        if (!branches_.empty()) throw SmilesError("fragment separator inside branch", pos_);
        prev_ = -1;
        ++pos_;
        return;
      case '%': {
        const std::size_t start = pos_;
        if (pos_ + 2 >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])) ||
            !std::isdigit(static_cast<unsigned char>(text_[pos_ + 2]))) {
          throw SmilesError("malformed %nn ring closure", start);
        }
        const int num = (text_[pos_ + 1] - '0') * 10 + (text_[pos_ + 2] - '0');
        pos_ += 3;
        ring_closure(num, start);
        return;
      }
      case '[': bracket_atom(); return;
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      ring_closure(c - '0', pos_);
      ++pos_;
      return;
    }
    organic_atom();
  }

  void set_pending(BondOrder order) {
    if (pending_) throw SmilesError("consecutive bond symbols", pos_);
    if (prev_ < 0) throw SmilesError("bond without preceding atom", pos_);
    pending_ = PendingBond{order, pos_};
    ++pos_;
  }

  void organic_atom() {
    const std::size_t start = pos_;
    std::string sym;
    bool aromatic = false;
    const char c = text_[pos_];
    if (c == 'C' && pos_ + 1 < text_.size() && text_[pos_ + 1] == 'l') {
      sym = "Cl";
    } else if (c == 'B' && pos_ + 1 < text_.size() && text_[pos_ + 1] == 'r') {
      sym = "Br";
    } else if (std::isupper(static_cast<unsigned char>(c))) {
      sym = std::string(1, c);
      if (!is_organic(sym)) {
        throw SmilesError("unknown element '" + sym + "' outside brackets", start);
      }
    } else if (std::islower(static_cast<unsigned char>(c))) {
      sym = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      aromatic = true;
      if (!is_aromatic_organic(sym)) {
        throw SmilesError("unknown aromatic element '" + std::string(1, c) + "'", start);
      }
    } else {
      throw SmilesError(std::string("unexpected character '") + c + "'", start);
    }
    pos_ += sym.size();
    Atom atom;
    atom.element = sym;
    atom.aromatic = aromatic;
    add_atom(std::move(atom), start);
  }

  int read_int() {
    int value = 0;
    bool any = false;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      value = value * 10 + (text_[pos_] - '0');
      ++pos_;
      any = true;
    }
    return any ? value : -1;
  }

  void bracket_atom() {
    const std::size_t start = pos_;
    ++pos_;
    Atom atom;
    atom.bracket = true;
    const int isotope = read_int();
    if (isotope > 0) atom.isotope = isotope;
    if (pos_ >= text_.size()) throw SmilesError("unterminated bracket atom", start);

    // Element symbol.
    const std::size_t sym_at = pos_;
    const char c = text_[pos_];
    if (std::isupper(static_cast<unsigned char>(c))) {
      std::string two;
      if (pos_ + 1 < text_.size() && std::islower(static_cast<unsigned char>(text_[pos_ + 1]))) {
        two = std::string{c, text_[pos_ + 1]};
      }
      if (!two.empty() && is_known_element(two)) {
        atom.element = two;
        pos_ += 2;
      } else {
        atom.element = std::string(1, c);
        ++pos_;
        if (!is_known_element(atom.element)) {
          const std::string shown = two.empty() ? atom.element : two;
          throw SmilesError("unknown element symbol '" + shown + "'", sym_at);
        }
      }
    } else if (std::islower(static_cast<unsigned char>(c))) {
      static constexpr std::string_view kAromatic2[] = {"se", "as", "te"};
      std::string two;
      if (pos_ + 1 < text_.size()) two = std::string{c, text_[pos_ + 1]};
      if (std::find(std::begin(kAromatic2), std::end(kAromatic2), two) != std::end(kAromatic2)) {
        atom.element = std::string{static_cast<char>(std::toupper(static_cast<unsigned char>(c))), two[1]};
        pos_ += 2;
      } else {
        atom.element = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        if (!is_aromatic_organic(atom.element)) {
          throw SmilesError("unknown aromatic element '" + std::string(1, c) + "'", sym_at);
        }
        ++pos_;
      }
      atom.aromatic = true;
    } else {
      throw SmilesError("expected element symbol in bracket atom", sym_at);
    }

    // Chirality (dropped).
    if (pos_ < text_.size() && text_[pos_] == '@') {
      ++pos_;
      if (pos_ < text_.size() && text_[pos_] == '@') {
        ++pos_;
      } else if (pos_ + 1 < text_.size()) {
        const std::string_view tag = text_.substr(pos_, 2);
        if (tag == "TH" || tag == "AL" || tag == "SP" || tag == "TB" || tag == "OH") {
          pos_ += 2;
          if (read_int() < 0) throw SmilesError("malformed chirality class", pos_);
        }
      }
    }

    // Hydrogen count.
    atom.explicit_h = 0;
    if (pos_ < text_.size() && text_[pos_] == 'H') {
      ++pos_;
      const int h = read_int();
      atom.explicit_h = h < 0 ? 1 : h;
    }

    // Charge.
    if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) {
      const char sign = text_[pos_];
      const int unit = sign == '+' ? 1 : -1;
      ++pos_;
      const int magnitude = read_int();
      if (magnitude >= 0) {
        atom.formal_charge = unit * magnitude;
      } else {
        int count = 1;
        while (pos_ < text_.size() && text_[pos_] == sign) {
          ++count;
          ++pos_;
        }
        atom.formal_charge = unit * count;
      }
    }

    // Atom class (ignored).
    if (pos_ < text_.size() && text_[pos_] == ':') {
      ++pos_;
      if (read_int() < 0) throw SmilesError("malformed atom class", pos_);
    }

    if (pos_ >= text_.size() || text_[pos_] != ']') throw SmilesError("unterminated bracket atom", start);
    ++pos_;
    add_atom(std::move(atom), start);
  }

  void add_atom(Atom atom, std::size_t offset) {
    const int index = static_cast<int>(atoms_.size());
    tally_.emplace_back();
    offsets_.push_back(offset);
    atoms_.push_back(std::move(atom));
    check_valence(index, offset);
    if (prev_ >= 0) {
      BondOrder order = default_order(prev_, index);
      std::size_t at = offset;
      if (pending_) {
        order = pending_->order;
        at = pending_->offset;
      }
      add_bond(prev_, index, order, at);
    }
    pending_.reset();
    prev_ = index;
  }

  BondOrder default_order(int a, int b) const {
    return atoms_[a].aromatic && atoms_[b].aromatic ? BondOrder::kAromatic : BondOrder::kSingle;
  }

  void ring_closure(int number, std::size_t offset) {
    if (prev_ < 0) throw SmilesError("ring closure without preceding atom", offset);
    const auto it = rings_.find(number);
    if (it == rings_.end()) {
      std::optional<BondOrder> order;
      if (pending_) order = pending_->order;
      rings_[number] = OpenRing{prev_, order, offset};
      pending_.reset();
      return;
    }
    const OpenRing ring = it->second;
    rings_.erase(it);
    if (ring.atom == prev_) throw SmilesError("ring closure to the same atom", offset);
    std::optional<BondOrder> order = ring.order;
    if (pending_) {
      if (order && *order != pending_->order) throw SmilesError("conflicting ring-closure bond orders", offset);
      order = pending_->order;
    }
    pending_.reset();
    add_bond(ring.atom, prev_, order.value_or(default_order(ring.atom, prev_)), offset);
  }

  void add_bond(int a, int b, BondOrder order, std::size_t offset) {
    const auto key = std::make_pair(std::min(a, b), std::max(a, b));
    if (!bond_set_.insert(key).second) throw SmilesError("duplicate bond between atoms", offset);
    bonds_.push_back({a, b, order});
    tally_[a].add(order);
    tally_[b].add(order);
    check_valence(a, offset);
    check_valence(b, offset);
  }

  void check_valence(int index, std::size_t offset) const {
    const Atom& atom = atoms_[index];
    int cap = default_valence_cap(atom.element);
    if (const auto it = options_.valence_caps.find(atom.element); it != options_.valence_caps.end()) {
      cap = it->second;
    }
    cap += std::abs(atom.formal_charge);
    const int used = kekule_valence(atom, tally_[index]) + std::max(atom.explicit_h, 0);
    if (used > cap) {
      throw SmilesError("valence " + std::to_string(used) + " exceeds cap " + std::to_string(cap) + " for " +
                            atom.element,
                        offset);
    }
  }

  // Folds explicit hydrogen atoms into their single heavy neighbor.
  MolGraph finish() {
    const int n = static_cast<int>(atoms_.size());
    std::vector<std::vector<int>> nbrs(n);
    for (const Bond& b : bonds_) {
      nbrs[b.i].push_back(b.j);
      nbrs[b.j].push_back(b.i);
    }
    std::vector<bool> drop(n, false);
    for (int a = 0; a < n; ++a) {
      if (atoms_[a].element != "H" || atoms_[a].isotope != 0 || atoms_[a].formal_charge != 0) continue;
      if (nbrs[a].size() != 1 || atoms_[nbrs[a][0]].element == "H") continue;
      drop[a] = true;
      Atom& heavy = atoms_[nbrs[a][0]];
      if (heavy.explicit_h >= 0) ++heavy.explicit_h;
    }
    std::vector<int> remap(n, -1);
    std::vector<Atom> atoms;
    for (int a = 0; a < n; ++a) {
      if (drop[a]) continue;
      remap[a] = static_cast<int>(atoms.size());
      atoms.push_back(atoms_[a]);
    }
    std::vector<Bond> bonds;
    for (const Bond& b : bonds_) {
      if (drop[b.i] || drop[b.j]) continue;
      bonds.push_back({remap[b.i], remap[b.j], b.order});
    }
    return MolGraph(std::move(atoms), std::move(bonds));
  }

  std::string_view text_;
  const SmilesOptions& options_;
  std::size_t pos_ = 0;
  int prev_ = -1;
  std::optional<PendingBond> pending_;
  std::vector<std::pair<int, std::size_t>> branches_;
  std::unordered_map<int, OpenRing> rings_;
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<BondTally> tally_;
  std::vector<std::size_t> offsets_;
  std::set<std::pair<int, int>> bond_set_;
};

std::string atom_text(const Atom& atom) {
  std::string sym = atom.element;
  if (atom.aromatic) sym[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(sym[0])));
  const bool plain = !atom.bracket && atom.isotope == 0 && atom.formal_charge == 0 && atom.explicit_h < 0 &&
                     is_organic(atom.element) && (!atom.aromatic || is_aromatic_organic(atom.element));
  if (plain) return sym;
  std::string out = "[";
  if (atom.isotope > 0) out += std::to_string(atom.isotope);
  out += sym;
  if (atom.explicit_h > 0) {
    out += 'H';
    if (atom.explicit_h > 1) out += std::to_string(atom.explicit_h);
  }
  if (atom.formal_charge != 0) {
    out += atom.formal_charge > 0 ? '+' : '-';
    if (std::abs(atom.formal_charge) > 1) out += std::to_string(std::abs(atom.formal_charge));
  }
  out += ']';
  return out;
}

}  // namespace

MolGraph parse_smiles(std::string_view smiles, const SmilesOptions& options) {
  return Parser(smiles, options).parse();
}

std::string write_smiles(const MolGraph& graph) {
  const int n = static_cast<int>(graph.atom_count());
  const auto& atoms = graph.atoms();
  const auto& bonds = graph.bonds();

  // Pass 1: DFS order, tree edges and ring-closure edges.
  std::vector<int> order(n, -1);
  std::vector<int> parent_bond(n, -1);
  std::vector<bool> is_tree(bonds.size(), false);
  std::vector<std::vector<int>> children(n);
  std::vector<std::vector<int>> ring_bonds(n);
  std::vector<int> roots;
  int counter = 0;
  auto sorted_neighbors = [&](int a) {
    auto nb = graph.neighbors(a);
    std::sort(nb.begin(), nb.end(), [](const auto& x, const auto& y) { return x.atom < y.atom; });
    return nb;
  };
  std::function<void(int)> visit = [&](int a) {
    order[a] = counter++;
    for (const auto& nb : sorted_neighbors(a)) {
      if (nb.bond == parent_bond[a]) continue;
      if (order[nb.atom] < 0) {
        parent_bond[nb.atom] = nb.bond;
        is_tree[nb.bond] = true;
        children[a].push_back(nb.atom);
        visit(nb.atom);
      }
    }
  };
  for (int a = 0; a < n; ++a) {
    if (order[a] < 0) {
      roots.push_back(a);
      visit(a);
    }
  }
  for (std::size_t b = 0; b < bonds.size(); ++b) {
    if (is_tree[b]) continue;
    ring_bonds[bonds[b].i].push_back(static_cast<int>(b));
    ring_bonds[bonds[b].j].push_back(static_cast<int>(b));
  }

  auto bond_text = [&](int b) -> std::string {
    const Bond& bond = bonds[b];
    const bool both_aromatic = atoms[bond.i].aromatic && atoms[bond.j].aromatic;
    switch (bond.order) {
      case BondOrder::kSingle: return both_aromatic ? "-" : "";
      case BondOrder::kDouble: return "=";
      case BondOrder::kTriple: return "#";
      case BondOrder::kAromatic: return both_aromatic ? "" : ":";
    }
    return "";
  };

  // Pass 2: emit.
  std::string out;
  std::vector<int> ring_number(bonds.size(), -1);
  std::set<int> free_numbers;
  for (int k = 1; k < 100; ++k) free_numbers.insert(k);
  auto ring_label = [](int num) { return num < 10 ? std::to_string(num) : "%" + std::to_string(num); };

  std::function<void(int)> emit = [&](int a) {
    out += atom_text(atoms[a]);
    auto rings = ring_bonds[a];
    std::sort(rings.begin(), rings.end(), [&](int x, int y) {
      const int ox = bonds[x].i == a ? bonds[x].j : bonds[x].i;
      const int oy = bonds[y].i == a ? bonds[y].j : bonds[y].i;
      return order[ox] < order[oy];
    });
    for (int b : rings) {
      const int other = bonds[b].i == a ? bonds[b].j : bonds[b].i;
      if (order[other] > order[a]) {
        const int num = *free_numbers.begin();
        free_numbers.erase(free_numbers.begin());
        ring_number[b] = num;
        out += bond_text(b) + ring_label(num);
      } else {
        out += ring_label(ring_number[b]);
        free_numbers.insert(ring_number[b]);
      }
    }
    const auto& kids = children[a];
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const bool last = k + 1 == kids.size();
      if (!last) out += '(';
      out += bond_text(parent_bond[kids[k]]);
      emit(kids[k]);
      if (!last) out += ')';
    }
  };
  for (std::size_t r = 0; r < roots.size(); ++r) {
    if (r > 0) out += '.';
    emit(roots[r]);
  }
  return out;
}

}  // namespace molllama::chem
