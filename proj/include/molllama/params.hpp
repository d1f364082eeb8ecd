#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "molllama/autograd.hpp"
#include "molllama/rng.hpp"

namespace molllama {

// Parameter groups. Training stages declare their trainable set in these terms.
namespace groups {
inline constexpr std::string_view kEncoder2d = "encoder2d";
inline constexpr std::string_view kEncoder3d = "encoder3d";
inline constexpr std::string_view kBlending = "blending";
inline constexpr std::string_view kQFormer = "qformer";
inline constexpr std::string_view kQFormerText = "qformer_text";
inline constexpr std::string_view kStage1Heads = "stage1_heads";
inline constexpr std::string_view kQueryProjection = "query_proj";
inline constexpr std::string_view kLmBase = "lm_base";
inline constexpr std::string_view kLora = "lora";
}  // namespace groups

struct Parameter {
  std::string name;
  std::string group;
  ag::Tensor tensor;
};

class ParameterStore {
 public:
  ag::Tensor normal(std::string_view group, std::string_view name, Eigen::Index rows, Eigen::Index cols,
                    double stddev, Rng& rng);
  ag::Tensor zeros(std::string_view group, std::string_view name, Eigen::Index rows, Eigen::Index cols);
  ag::Tensor ones(std::string_view group, std::string_view name, Eigen::Index rows, Eigen::Index cols);

  const std::vector<Parameter>& params() const { return params_; }
  std::vector<Parameter>& params() { return params_; }
  const Parameter* find(std::string_view name) const;

  std::vector<Parameter*> in_groups(const std::set<std::string>& groups);
  std::set<std::string> group_names() const;
  std::size_t count(std::string_view group) const;

  // requires_grad = true exactly for parameters whose group is listed.
  void set_trainable(const std::set<std::string>& groups);
  void zero_grad();

  std::uint64_t checksum(std::string_view group) const;
  std::map<std::string, std::uint64_t> checksums() const;
  static std::uint64_t checksum(const ag::Matrix& m);

 private:
  ag::Tensor add(std::string_view group, std::string_view name, ag::Matrix value);

  std::vector<Parameter> params_;
};

}  // namespace molllama
