#ifndef TTLM_INJECTOR_HPP
#define TTLM_INJECTOR_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "ttlm/corpus.hpp"

namespace ttlm {

struct ThinkingTokenConfig {
  int n = 0;  // thinking tokens after each observed token; 0 is the identity transform
  TokenId thinking_id = kThinkingId;
};

// flags[i] is false exactly where targets[i] is the thinking token.
struct LossMask {
  std::vector<bool> flags;
  std::size_t counted = 0;
};

// Appends cfg.n thinking tokens after every token (including <eos>).
// Throws InjectionError if the stream already contains the thinking token.
TokenStream inject(const TokenStream& stream, const ThinkingTokenConfig& cfg);

TokenStream strip(const TokenStream& stream, TokenId thinking_id);

LossMask derive_loss_mask(std::span<const TokenId> targets, TokenId thinking_id);

}  // namespace ttlm

#endif  // TTLM_INJECTOR_HPP
