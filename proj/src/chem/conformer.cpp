#include "molllama/chem/conformer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "molllama/chem/corpus.hpp"
#include "molllama/rng.hpp"

namespace molllama::chem {
namespace {

Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }

double norm(const Vec3& v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }

void center(std::vector<Vec3>& pos) {
  Vec3 mean;
  for (const Vec3& p : pos) {
    mean.x += p.x;
    mean.y += p.y;
    mean.z += p.z;
  }
  const double n = static_cast<double>(pos.size());
  mean = {mean.x / n, mean.y / n, mean.z / n};
  for (Vec3& p : pos) p = p - mean;
}

}  // namespace

Conformer embed_conformer(const MolGraph& graph, std::uint64_t seed, const EmbedOptions& options) {
  const std::size_t n = graph.atom_count();
  if (n == 0) throw std::invalid_argument("embed_conformer: empty graph");
  Conformer conf;
  if (n == 1) {
    conf.positions.assign(1, Vec3{});
    return conf;
  }

  Rng rng(seed);
  const double box = std::cbrt(static_cast<double>(n)) * options.bond_length * 1.5;
  conf.positions.resize(n);
  for (Vec3& p : conf.positions) p = {rng.uniform(-box, box), rng.uniform(-box, box), rng.uniform(-box, box)};

  std::vector<std::vector<bool>> bonded(n, std::vector<bool>(n, false));
  for (const Bond& b : graph.bonds()) {
    bonded[b.i][b.j] = true;
    bonded[b.j][b.i] = true;
  }

  std::vector<Vec3> force(n);
  for (int it = 0; it < options.iterations; ++it) {
    for (Vec3& f : force) f = {};
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const Vec3 d = conf.positions[j] - conf.positions[i];
        double r = norm(d);
        Vec3 dir = r > 1e-9 ? Vec3{d.x / r, d.y / r, d.z / r} : Vec3{1.0, 0.0, 0.0};
        r = std::max(r, 1e-9);
        double magnitude = 0.0;  // positive pulls i toward j
        if (bonded[i][j]) {
          magnitude = r - options.bond_length;
        } else if (r < options.repulsion_cutoff) {
          magnitude = -(options.repulsion_cutoff - r);
        }
        force[i] = {force[i].x + magnitude * dir.x, force[i].y + magnitude * dir.y, force[i].z + magnitude * dir.z};
        force[j] = {force[j].x - magnitude * dir.x, force[j].y - magnitude * dir.y, force[j].z - magnitude * dir.z};
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      conf.positions[i].x += options.step * force[i].x;
      conf.positions[i].y += options.step * force[i].y;
      conf.positions[i].z += options.step * force[i].z;
    }
  }
  center(conf.positions);

  // Coincident atoms would break the conformer invariant; separate them
  // deterministically along x.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (conf.positions[i] == conf.positions[j]) conf.positions[j].x += 1e-3 * options.bond_length * (j + 1);
    }
  }
  return conf;
}

Conformer conformer_for(const MoleculeRecord& record, const MolGraph& graph, std::uint64_t seed) {
  if (record.coords) {
    if (record.coords->size() != graph.atom_count()) {
      throw DataError("record " + record.id + ": " + std::to_string(record.coords->size()) +
                                  " coordinates for " + std::to_string(graph.atom_count()) + " heavy atoms");
    }
    return Conformer{*record.coords};
  }
  return embed_conformer(graph, seed);
}

Conformer permuted(const Conformer& conf, const std::vector<int>& perm) {
  Conformer out;
  out.positions.reserve(perm.size());
  for (int old : perm) out.positions.push_back(conf.positions.at(old));
  return out;
}

}  // namespace molllama::chem
