#include "molllama/masks.hpp"

#include <stdexcept>

namespace molllama {

AttentionMask build_attention_mask(MaskMode mode, Eigen::Index n_queries, Eigen::Index n_text) {
  if (n_queries < 0 || n_text < 0 || n_queries + n_text == 0) {
    throw std::invalid_argument("build_attention_mask: need at least one token");
  }
  const Eigen::Index n = n_queries + n_text;
  AttentionMask mask{ag::BoolMatrix::Constant(n, n, false)};
  switch (mode) {
    case MaskMode::kMatching:
      mask.allow.setConstant(true);
      break;
    case MaskMode::kContrastive:
      mask.allow.topLeftCorner(n_queries, n_queries).setConstant(true);
      mask.allow.bottomRightCorner(n_text, n_text).setConstant(true);
      break;
    case MaskMode::kGeneration:
      mask.allow.topLeftCorner(n_queries, n_queries).setConstant(true);
      mask.allow.bottomLeftCorner(n_text, n_queries).setConstant(true);
      for (Eigen::Index t = 0; t < n_text; ++t) {
        for (Eigen::Index s = 0; s <= t; ++s) mask.allow(n_queries + t, n_queries + s) = true;
      }
      break;
  }
  return mask;
}

}  // namespace molllama
