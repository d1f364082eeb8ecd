#pragma once

#include "molllama/attention.hpp"

namespace molllama {

enum class MaskMode { kContrastive, kMatching, kGeneration };

// Joint self-attention mask over [queries; text] for the Q-Former.
//   contrastive: block diagonal, each modality attends only to itself
//   matching:    everything attends to everything
//   generation:  queries attend queries; text attends all queries and
//                causally to text
AttentionMask build_attention_mask(MaskMode mode, Eigen::Index n_queries, Eigen::Index n_text);

}  // namespace molllama
