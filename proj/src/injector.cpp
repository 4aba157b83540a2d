#include "ttlm/injector.hpp"

#include <algorithm>
#include <string>

#include "ttlm/errors.hpp"

namespace ttlm {

TokenStream inject(const TokenStream& stream, const ThinkingTokenConfig& cfg) {
  if (cfg.n < 0) throw ConfigError("thinking token count must be >= 0");
  auto hit = std::find(stream.ids.begin(), stream.ids.end(), cfg.thinking_id);
  if (hit != stream.ids.end()) {
    throw InjectionError("stream '" + stream.source_name + "' already contains the thinking token at position " +
                         std::to_string(hit - stream.ids.begin()));
  }
  TokenStream out;
  out.source_name = stream.source_name;
  const auto stride = static_cast<std::size_t>(cfg.n) + 1;
  out.ids.assign(stream.ids.size() * stride, cfg.thinking_id);
  for (std::size_t i = 0; i < stream.ids.size(); ++i) out.ids[i * stride] = stream.ids[i];
  return out;
}

TokenStream strip(const TokenStream& stream, TokenId thinking_id) {
  TokenStream out;
  out.source_name = stream.source_name;
  out.ids.reserve(stream.ids.size());
  std::copy_if(stream.ids.begin(), stream.ids.end(), std::back_inserter(out.ids),
               [thinking_id](TokenId id) { return id != thinking_id; });
  return out;
}

LossMask derive_loss_mask(std::span<const TokenId> targets, TokenId thinking_id) {
  LossMask mask;
  mask.flags.reserve(targets.size());
  for (auto t : targets) {
    const bool keep = t != thinking_id;
    mask.flags.push_back(keep);
    mask.counted += keep;
  }
  return mask;
}

}  // namespace ttlm
