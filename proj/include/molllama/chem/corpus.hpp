#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "molllama/chem/molecule.hpp"

namespace molllama {

// Bad input data (malformed files, schema violations). Maps to CLI exit 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace molllama

namespace molllama::chem {

// Line-delimited JSON, one record per line with keys
// id, smiles, iupac, description, coords.
std::vector<MoleculeRecord> read_corpus(std::istream& in);
std::vector<MoleculeRecord> read_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, const std::vector<MoleculeRecord>& records);

std::string record_to_json_line(const MoleculeRecord& record);
MoleculeRecord record_from_json_line(const std::string& line);

// Checks id uniqueness and that coords (when present) match the parsed
// heavy-atom count. Throws DataError.
void validate_corpus(const std::vector<MoleculeRecord>& records);

}  // namespace molllama::chem
