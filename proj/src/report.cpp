#include "ttlm/report.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

namespace ttlm {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string model_label(int thinking_n) {
  if (thinking_n == 0) return "LSTM";
  if (thinking_n == 1) return "LSTM+<T>";
  return "LSTM+" + std::to_string(thinking_n) + "<T>";
}

std::string aligned_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (c) line += " | ";
      line += rows[r][c];
      if (c + 1 < rows[r].size()) line.append(width[c] - rows[r][c].size(), ' ');
    }
    out += line;
    out += '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c ? 3 : 0);
      out.append(total, '-');
      out += '\n';
    }
  }
  return out;
}

void write_sentence_csv(std::ostream& os, std::string_view dataset,
                        const std::vector<SentenceScore>& scores) {
  os << "dataset,sentence,ppl_orig,ppl_tt,delta\n";
  for (const auto& s : scores) {
    os << csv_field(dataset) << ',' << csv_field(s.text()) << ',' << format_real(s.ppl_base) << ','
       << format_real(s.ppl_tt) << ',' << format_real(s.delta) << '\n';
  }
}

void write_sentence_table(std::ostream& os, std::string_view dataset,
                          const std::vector<SentenceScore>& scores) {
  std::vector<std::vector<std::string>> rows{{"Dataset", "Sentence", "Ppl. orig.", "Ppl. <T>", "Delta"}};
  for (const auto& s : scores) {
    rows.push_back({std::string(dataset), s.text(), fixed(s.ppl_base, 1), fixed(s.ppl_tt, 1),
                    fixed(s.delta, 1)});
  }
  os << aligned_table(rows);
}

void write_word_probabilities(std::ostream& os, const std::vector<std::string>& sentence,
                              const std::vector<WordProbRecord>& records, int thinking_n) {
  std::string text;
  for (const auto& w : sentence) text += (text.empty() ? "" : " ") + w;
  os << "Sentence: " << text << '\n';
  const std::string base_label = model_label(0);
  const std::string tt_label = model_label(thinking_n);
  for (const auto& r : records) {
    os << "Word: " << r.word << (r.oov ? " (oov)" : "") << '\n';
    os << base_label << ": " << format_real(r.p_base) << '\n';
    os << tt_label << ": " << format_real(r.p_tt) << '\n';
  }
}

void write_eval_csv(std::ostream& os, const std::vector<EvalReport>& reports) {
  os << "dataset,model,perplexity,tokens_counted,tokens_excluded\n";
  for (const auto& r : reports) {
    os << csv_field(r.dataset_name) << ',' << csv_field(r.model_name) << ',' << format_real(r.perplexity)
       << ',' << r.tokens_counted << ',' << r.tokens_excluded << '\n';
  }
}

void write_eval_table(std::ostream& os, const std::vector<EvalReport>& reports) {
  std::vector<std::vector<std::string>> rows{{"Dataset", "Model", "Ppl.", "Counted", "Excluded"}};
  for (const auto& r : reports) {
    rows.push_back({r.dataset_name, r.model_name, fixed(r.perplexity, 2), std::to_string(r.tokens_counted),
                    std::to_string(r.tokens_excluded)});
  }
  os << aligned_table(rows);
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "dataset,n,valid_ppl\n";
  for (const auto& r : rows) os << csv_field(r.dataset) << ',' << r.n << ',' << format_real(r.valid_ppl) << '\n';
}

void write_sweep_table(std::ostream& os, const std::vector<SweepRow>& rows) {
  std::vector<std::vector<std::string>> table{{"Dataset", "Model", "Validation ppl."}};
  for (const auto& r : rows) table.push_back({r.dataset, model_label(r.n), fixed(r.valid_ppl, 1)});
  os << aligned_table(table);
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    any = true;
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ttlm
