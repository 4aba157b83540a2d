#include "ttlm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ttlm {

namespace {

// Per-target NLLs of `ids` from a zero state; targets are ids[1..].
// Positions whose target is the thinking token are skipped unless requested.
struct SequenceScore {
  std::vector<double> nll;
  std::size_t excluded = 0;
};

SequenceScore score_sequence(const Params& params, std::span<const TokenId> ids, TokenId thinking_id,
                             bool include_thinking) {
  SequenceScore out;
  State state = State::zeros(1, params.dims.hidden);
  for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
    auto step = forward_step(params, state, ids.subspan(t, 1));
    state = std::move(step.state);
    const TokenId target = ids[t + 1];
    if (target == thinking_id && !include_thinking) {
      ++out.excluded;
      continue;
    }
    if (target < 0 || target >= params.dims.vocab) {
      throw std::out_of_range("target id " + std::to_string(target) + " outside vocabulary");
    }
    out.nll.push_back(-log_softmax_rows(step.logits)(0, target));
  }
  return out;
}

double perplexity_of(const std::vector<double>& nll) {
  double sum = 0.0;
  for (double v : nll) sum += v;
  return std::exp(sum / static_cast<double>(nll.size()));
}

std::vector<TokenId> sentence_ids(const std::vector<std::string>& sentence, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(sentence.size() + 1);
  for (const auto& w : sentence) ids.push_back(vocab.id(w));
  ids.push_back(kEosId);
  return ids;
}

}  // namespace

EvalReport masked_perplexity(const Params& params, const TokenStream& stream,
                             const ThinkingTokenConfig& cfg, bool include_thinking) {
  std::vector<TokenId> ids;
  ids.reserve(stream.ids.size() + 1 + static_cast<std::size_t>(cfg.n));
  ids.push_back(kEosId);
  ids.insert(ids.end(), static_cast<std::size_t>(cfg.n), cfg.thinking_id);
  ids.insert(ids.end(), stream.ids.begin(), stream.ids.end());

  const auto scored = score_sequence(params, ids, cfg.thinking_id, include_thinking);
  if (scored.nll.empty()) {
    throw std::runtime_error("no scorable positions in stream '" + stream.source_name + "'");
  }
  EvalReport report;
  report.dataset_name = stream.source_name;
  for (double v : scored.nll) report.total_nll += v;
  report.tokens_counted = scored.nll.size();
  report.tokens_excluded = scored.excluded;
  report.perplexity = std::exp(report.total_nll / static_cast<double>(report.tokens_counted));
  return report;
}

std::string SentenceScore::text() const {
  std::string out;
  for (const auto& w : sentence) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<SentenceScore> sentence_perplexities(const Params& base, const Params& tt,
                                                 const std::vector<std::vector<std::string>>& sentences,
                                                 const Vocabulary& vocab, const ThinkingTokenConfig& cfg,
                                                 std::size_t* skipped) {
  std::vector<SentenceScore> scores;
  if (skipped) *skipped = 0;
  for (const auto& sentence : sentences) {
    if (sentence.empty()) {
      if (skipped) ++*skipped;
      continue;
    }
    const TokenStream raw{sentence_ids(sentence, vocab), {}};
    const TokenStream injected = inject(raw, cfg);

    SentenceScore s;
    s.sentence = sentence;
    s.nll_base = score_sequence(base, raw.ids, cfg.thinking_id, false).nll;
    s.nll_tt = score_sequence(tt, injected.ids, cfg.thinking_id, false).nll;
    s.ppl_base = perplexity_of(s.nll_base);
    s.ppl_tt = perplexity_of(s.nll_tt);
    s.delta = s.ppl_base - s.ppl_tt;
    scores.push_back(std::move(s));
  }
  return scores;
}

std::vector<SentenceScore> rank_by_improvement(std::vector<SentenceScore> scores, std::size_t top_k) {
  std::vector<std::pair<std::string, std::size_t>> keys;
  keys.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) keys.emplace_back(scores[i].text(), i);
  std::sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
    const double da = scores[a.second].delta;
    const double db = scores[b.second].delta;
    if (da != db) return da > db;
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
  });
  std::vector<SentenceScore> out;
  const std::size_t n = std::min(top_k, keys.size());
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(std::move(scores[keys[i].second]));
  return out;
}

std::vector<WordProbRecord> word_probabilities(const Params& base, const Params& tt,
                                               const std::vector<std::string>& sentence,
                                               const Vocabulary& vocab, const ThinkingTokenConfig& cfg) {
  std::vector<WordProbRecord> records;
  State base_state = State::zeros(1, base.dims.hidden);
  State tt_state = State::zeros(1, tt.dims.hidden);
  for (std::size_t t = 0; t + 1 < sentence.size(); ++t) {
    const TokenId prev = vocab.id(sentence[t]);
    auto base_dist = predict_distribution(base, base_state, prev);
    base_state = std::move(base_dist.state);

    auto tt_dist = predict_distribution(tt, tt_state, prev);
    tt_state = std::move(tt_dist.state);
    for (int k = 0; k < cfg.n; ++k) {
      tt_dist = predict_distribution(tt, tt_state, cfg.thinking_id);
      tt_state = std::move(tt_dist.state);
    }

    const std::string& word = sentence[t + 1];
    const TokenId next = vocab.id(word);
    records.push_back({word, base_dist.probabilities(next), tt_dist.probabilities(next),
                       !vocab.contains(word)});
  }
  return records;
}

}  // namespace ttlm
