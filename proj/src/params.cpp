#include "molllama/params.hpp"

#include <cstring>
#include <stdexcept>

#include "molllama/hash.hpp"

namespace molllama {

ag::Tensor ParameterStore::add(std::string_view group, std::string_view name, ag::Matrix value) {
  if (find(name) != nullptr) throw std::logic_error("duplicate parameter name " + std::string(name));
  params_.push_back(Parameter{std::string(name), std::string(group), ag::Tensor(std::move(value), false)});
  return params_.back().tensor;
}

ag::Tensor ParameterStore::normal(std::string_view group, std::string_view name, Eigen::Index rows,
                                  Eigen::Index cols, double stddev, Rng& rng) {
  ag::Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, stddev);
  }
  return add(group, name, std::move(m));
}

ag::Tensor ParameterStore::zeros(std::string_view group, std::string_view name, Eigen::Index rows,
                                 Eigen::Index cols) {
  return add(group, name, ag::Matrix::Zero(rows, cols));
}

ag::Tensor ParameterStore::ones(std::string_view group, std::string_view name, Eigen::Index rows, Eigen::Index cols) {
  return add(group, name, ag::Matrix::Ones(rows, cols));
}

const Parameter* ParameterStore::find(std::string_view name) const {
  for (const Parameter& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::vector<Parameter*> ParameterStore::in_groups(const std::set<std::string>& groups) {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) {
    if (groups.count(p.group)) out.push_back(&p);
  }
  return out;
}

std::set<std::string> ParameterStore::group_names() const {
  std::set<std::string> out;
  for (const Parameter& p : params_) out.insert(p.group);
  return out;
}

std::size_t ParameterStore::count(std::string_view group) const {
  std::size_t n = 0;
  for (const Parameter& p : params_) {
    if (p.group == group) n += static_cast<std::size_t>(p.tensor.value().size());
  }
  return n;
}

void ParameterStore::set_trainable(const std::set<std::string>& groups) {
  for (Parameter& p : params_) p.tensor.set_requires_grad(groups.count(p.group) > 0);
}

void ParameterStore::zero_grad() {
  for (Parameter& p : params_) p.tensor.zero_grad();
}

std::uint64_t ParameterStore::checksum(const ag::Matrix& m) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(m.rows()) * 1315423911ULL + static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    std::uint64_t bits = 0;
    const double v = m.data()[k];
    std::memcpy(&bits, &v, sizeof bits);
    h = mix64(h ^ bits);
  }
  return h;
}

std::uint64_t ParameterStore::checksum(std::string_view group) const {
  std::uint64_t h = fnv1a(group);
  for (const Parameter& p : params_) {
    if (p.group == group) h = mix64(h ^ fnv1a(p.name) ^ checksum(p.tensor.value()));
  }
  return h;
}

std::map<std::string, std::uint64_t> ParameterStore::checksums() const {
  std::map<std::string, std::uint64_t> out;
  for (const std::string& g : group_names()) out[g] = checksum(g);
  return out;
}

}  // namespace molllama
