#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace molllama::tok {

// Byte-level vocabulary: ids 0..255 are raw bytes, followed by specials.
inline constexpr int kBos = 256;
inline constexpr int kEos = 257;
inline constexpr int kCls = 258;  // Q-Former text transformer, contrastive/matching modes.
inline constexpr int kDec = 259;  // Q-Former text transformer, generation mode.
inline constexpr int kMol = 260;  // Placeholder for an injected molecule query embedding.
inline constexpr int kPad = 261;
inline constexpr int kVocabSize = 262;

std::vector<int> tokenize(std::string_view text);
// Special ids are skipped.
std::string detokenize(std::span<const int> ids);

}  // namespace molllama::tok
