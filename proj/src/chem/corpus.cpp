#include "molllama/chem/corpus.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "molllama/chem/smiles.hpp"

namespace molllama::chem {

using nlohmann::json;

std::string record_to_json_line(const MoleculeRecord& record) {
  json j;
  j["id"] = record.id;
  j["smiles"] = record.smiles;
  j["iupac"] = record.iupac;
  j["description"] = record.description;
  if (record.coords) {
    json coords = json::array();
    for (const Vec3& p : *record.coords) coords.push_back({p.x, p.y, p.z});
    j["coords"] = std::move(coords);
  } else {
    j["coords"] = nullptr;
  }
  return j.dump();
}

MoleculeRecord record_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("corpus: malformed JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j.contains("smiles")) {
    throw DataError("corpus: record needs at least 'id' and 'smiles'");
  }
  MoleculeRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.smiles = j.at("smiles").get<std::string>();
    r.iupac = j.value("iupac", "");
    r.description = j.value("description", "");
    if (j.contains("coords") && !j["coords"].is_null()) {
      std::vector<Vec3> coords;
      for (const auto& p : j["coords"]) {
        if (!p.is_array() || p.size() != 3) throw DataError("corpus: coords entries must be [x, y, z]");
        coords.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
      }
      r.coords = std::move(coords);
    }
  } catch (const json::exception& e) {
    throw DataError("corpus: record " + j.value("id", std::string("?")) + ": " + e.what());
  }
  return r;
}

std::vector<MoleculeRecord> read_corpus(std::istream& in) {
  std::vector<MoleculeRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(record_from_json_line(line));
  }
  return out;
}

std::vector<MoleculeRecord> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path.string());
  return read_corpus(in);
}

void write_corpus(std::ostream& out, const std::vector<MoleculeRecord>& records) {
  for (const MoleculeRecord& r : records) out << record_to_json_line(r) << '\n';
}

void validate_corpus(const std::vector<MoleculeRecord>& records) {
  std::set<std::string> ids;
  for (const MoleculeRecord& r : records) {
    if (!ids.insert(r.id).second) throw DataError("corpus: duplicate id " + r.id);
    if (r.coords) {
      MolGraph g;
      try {
        g = parse_smiles(r.smiles);
      } catch (const SmilesError& e) {
        throw DataError("corpus: record " + r.id + ": " + e.what());
      }
      if (r.coords->size() != g.atom_count()) {
        throw DataError("corpus: record " + r.id + " has " + std::to_string(r.coords->size()) +
                        " coordinates for " + std::to_string(g.atom_count()) + " heavy atoms");
      }
    }
  }
}

}  // namespace molllama::chem
