#ifndef TTLM_EVAL_HPP
#define TTLM_EVAL_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "ttlm/corpus.hpp"
#include "ttlm/injector.hpp"
#include "ttlm/model.hpp"

namespace ttlm {

struct EvalReport {
  std::string dataset_name;
  std::string model_name;
  double perplexity = 0.0;
  double total_nll = 0.0;
  std::size_t tokens_counted = 0;
  std::size_t tokens_excluded = 0;
};

// Streaming single-lane evaluation. The pass is primed with <eos> followed by
// cfg.n thinking tokens, so every token of the (already injected) stream is
// a prediction target. Targets equal to cfg.thinking_id are excluded unless
// include_thinking is set. Throws std::runtime_error when nothing is scorable.
EvalReport masked_perplexity(const Params& params, const TokenStream& stream,
                             const ThinkingTokenConfig& cfg, bool include_thinking = false);

struct SentenceScore {
  std::vector<std::string> sentence;
  double ppl_base = 0.0;
  double ppl_tt = 0.0;
  double delta = 0.0;  // ppl_base - ppl_tt
  std::vector<double> nll_base;  // per counted target position
  std::vector<double> nll_tt;

  std::string text() const;
};

struct WordProbRecord {
  std::string word;
  double p_base = 0.0;
  double p_tt = 0.0;
  bool oov = false;
};

// Per-sentence scoring with the state reset to zeros. Inputs are positions
// 0..L-1 of [w_0 .. w_{L-1}, <eos>] and targets positions 1..L, so each
// model is scored on L targets. Empty sentences are skipped and counted in
// *skipped when given.
std::vector<SentenceScore> sentence_perplexities(const Params& base, const Params& tt,
                                                 const std::vector<std::vector<std::string>>& sentences,
                                                 const Vocabulary& vocab, const ThinkingTokenConfig& cfg,
                                                 std::size_t* skipped = nullptr);

// Descending delta; ties by ascending sentence text.
std::vector<SentenceScore> rank_by_improvement(std::vector<SentenceScore> scores, std::size_t top_k);

// p(w_t | w_<t) for t >= 1 under both models; the thinking-token model sees
// the injected prefix up to just before w_t.
std::vector<WordProbRecord> word_probabilities(const Params& base, const Params& tt,
                                               const std::vector<std::string>& sentence,
                                               const Vocabulary& vocab, const ThinkingTokenConfig& cfg);

}  // namespace ttlm

#endif  // TTLM_EVAL_HPP
