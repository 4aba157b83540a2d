#ifndef TTLM_REPORT_HPP
#define TTLM_REPORT_HPP

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ttlm/eval.hpp"

namespace ttlm {

// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view s);

// %.17g; enough digits to round-trip a double.
std::string format_real(double v);

// "LSTM" for n = 0, "LSTM+<T>" for n = 1, "LSTM+2<T>" otherwise.
std::string model_label(int thinking_n);

// dataset,sentence,ppl_orig,ppl_tt,delta
void write_sentence_csv(std::ostream& os, std::string_view dataset,
                        const std::vector<SentenceScore>& scores);
void write_sentence_table(std::ostream& os, std::string_view dataset,
                          const std::vector<SentenceScore>& scores);

// One header line, then three lines per record:
//   Word: <w> / LSTM: <p_base> / LSTM+<T>: <p_tt>
void write_word_probabilities(std::ostream& os, const std::vector<std::string>& sentence,
                              const std::vector<WordProbRecord>& records, int thinking_n);

// dataset,model,perplexity,tokens_counted,tokens_excluded
void write_eval_csv(std::ostream& os, const std::vector<EvalReport>& reports);
void write_eval_table(std::ostream& os, const std::vector<EvalReport>& reports);

struct SweepRow {
  std::string dataset;
  int n = 0;
  double valid_ppl = 0.0;
};

// dataset,n,valid_ppl
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);
void write_sweep_table(std::ostream& os, const std::vector<SweepRow>& rows);

// Minimal CSV reader for the files written above.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

// Renders rows as space-padded columns; the first row is the header.
std::string aligned_table(const std::vector<std::vector<std::string>>& rows);

}  // namespace ttlm

#endif  // TTLM_REPORT_HPP
