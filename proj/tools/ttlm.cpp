// ttlm: thinking-token LSTM language model toolkit.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 training divergence.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ttlm/checkpoint.hpp"
#include "ttlm/corpus.hpp"
#include "ttlm/errors.hpp"
#include "ttlm/eval.hpp"
#include "ttlm/injector.hpp"
#include "ttlm/report.hpp"
#include "ttlm/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

constexpr const char* kVocabFile = "vocab.txt";

// Flat "key = value" config; '#' starts a comment. Keys are long option
// names without the leading dashes.
std::vector<std::string> config_to_args(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ttlm::ConfigError("cannot open config file " + path.string());
  std::vector<std::string> args;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ttlm::ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    args.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  return args;
}

// Expands "--config FILE" into leading --key=value arguments so that explicit
// flags (later on the command line) take precedence over the file.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::optional<std::string> path;
    std::size_t erase = 0;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      erase = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      erase = 1;
    }
    if (!path) continue;
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + erase));
    auto extra = config_to_args(*path);
    // After the subcommand name, ahead of the explicit flags.
    const auto sub = std::find_if(args.begin() + 1, args.end(),
                                  [](const std::string& a) { return a.rfind('-', 0) != 0; });
    args.insert(sub == args.end() ? sub : sub + 1, extra.begin(), extra.end());
    break;
  }
  return args;
}

std::vector<std::vector<std::string>> read_sentences(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ttlm::IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  ttlm::validate_utf8(text, path.string());
  std::vector<std::vector<std::string>> sentences(1);
  for (auto& tok : ttlm::tokenize_text(text)) {
    if (tok == ttlm::kEosToken) {
      sentences.emplace_back();
    } else {
      sentences.back().push_back(std::move(tok));
    }
  }
  sentences.pop_back();
  return sentences;
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

void require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ttlm::IoError("no such file: " + path.string());
}

ttlm::Checkpoint load_matching(const fs::path& path, const ttlm::Vocabulary& vocab) {
  auto ck = ttlm::load_checkpoint(path);
  if (ck.vocab_hash != vocab.hash()) {
    throw ttlm::ConfigError("vocabulary hash mismatch: " + path.string() +
                            " was trained with a different vocabulary");
  }
  if (ck.params.dims.vocab != static_cast<Eigen::Index>(vocab.size())) {
    throw ttlm::ConfigError("checkpoint vocabulary size does not match " + std::string(kVocabFile));
  }
  return ck;
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ttlm::IoError("cannot write " + path.string());
  fn(out);
  if (!out) throw ttlm::IoError("write failed: " + path.string());
}

struct TrainOptions {
  ttlm::TrainConfig cfg;
  std::optional<Eigen::Index> embed;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_train_options(CLI::App* cmd, TrainOptions& o) {
  auto& c = o.cfg;
  cmd->add_option("--bptt", c.bptt_len, "BPTT window length")->capture_default_str();
  cmd->add_option("--batch", c.batch_lanes, "number of parallel lanes")->capture_default_str();
  cmd->add_option("--clip", c.clip_norm, "global gradient norm bound")->capture_default_str();
  cmd->add_option("--hidden", c.hidden, "LSTM hidden units")->capture_default_str();
  cmd->add_option("--embed", o.embed, "embedding size (defaults to --hidden)");
  cmd->add_option("--layers", c.layers, "LSTM layers (only 1 is supported)")->capture_default_str();
  cmd->add_option("--lr", c.learn_rate, "initial learning rate")->capture_default_str();
  cmd->add_option("--lr-patience", c.lr_patience, "epochs without improvement before halving lr")
      ->capture_default_str();
  cmd->add_option("--epochs", c.max_epochs, "training epochs")->capture_default_str();
  cmd->add_option("--seed", o.seed, "random seed (default: $TTLM_SEED, else 0)")->envname("TTLM_SEED");
  cmd->add_option("--asgd-nonmono", c.asgd_nonmono, "non-monotonic ASGD trigger window")
      ->capture_default_str();
  cmd->add_option("--asgd-start-epoch", c.asgd_start_epoch,
                  "start averaging after this epoch instead of the non-monotonic rule (0 = off)")
      ->capture_default_str();
  cmd->add_option("--thinking-n", c.thinking_n, "thinking tokens after each token")->capture_default_str();
  cmd->add_flag("--train-mask-thinking", c.train_mask_thinking, "exclude <T> targets from the training loss");
  cmd->add_flag("--tie-weights", c.tie_weights, "share embedding and output projection (embed == hidden)");
  cmd->add_flag("--quiet", o.quiet, "suppress per-epoch progress");
}

ttlm::TrainConfig resolve(const TrainOptions& o) {
  ttlm::TrainConfig cfg = o.cfg;
  cfg.embed = o.embed.value_or(cfg.hidden);
  cfg.seed = o.seed.value_or(0);
  cfg.validate();
  return cfg;
}

struct PreparedData {
  ttlm::Vocabulary vocab;
  ttlm::TokenStream train;
  ttlm::TokenStream valid;
};

PreparedData load_prepared(const fs::path& dir) {
  for (const char* f : {kVocabFile, "train.ids", "valid.ids"}) require_file(dir / f);
  return {ttlm::Vocabulary::load(dir / kVocabFile), ttlm::load_stream(dir / "train.ids", "train"),
          ttlm::load_stream(dir / "valid.ids", "valid")};
}

void check_ids(const ttlm::TokenStream& s, const ttlm::Vocabulary& vocab) {
  for (auto id : s.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
      throw ttlm::ConfigError("stream '" + s.source_name + "' holds id " + std::to_string(id) +
                              " outside the vocabulary");
    }
  }
}

ttlm::TrainResult run_training(const ttlm::TrainConfig& cfg, const PreparedData& data,
                               const fs::path& ckpt, const fs::path& log, bool quiet) {
  ttlm::TrainIo io;
  io.checkpoint = ckpt;
  io.log_csv = log;
  io.vocab_hash = data.vocab.hash();
  io.progress = quiet ? nullptr : &std::cerr;
  return ttlm::train(cfg, data.train, data.valid, static_cast<Eigen::Index>(data.vocab.size()), io);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thinking-token LSTM language model toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "build the vocabulary and encode corpus splits");
  fs::path prep_train, prep_valid, prep_test, prep_out;
  std::optional<std::size_t> max_size;
  std::size_t min_count = 1;
  prepare->add_option("--train", prep_train, "training text")->required();
  prepare->add_option("--valid", prep_valid, "validation text");
  prepare->add_option("--test", prep_test, "test text");
  prepare->add_option("--out", prep_out, "output directory")->required();
  prepare->add_option("--max-size", max_size, "vocabulary size cap (including specials)");
  prepare->add_option("--min-count", min_count, "minimum token frequency")->capture_default_str();

  // inject
  auto* inject_cmd = app.add_subcommand("inject", "print a text file with thinking tokens injected");
  fs::path inj_data, inj_input;
  int inj_n = 1;
  inject_cmd->add_option("--data", inj_data, "prepared data directory (vocabulary)")->required();
  inject_cmd->add_option("--input", inj_input, "text file")->required();
  inject_cmd->add_option("--thinking-n", inj_n, "thinking tokens after each token")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model; --config FILE reads flat key = value defaults");
  TrainOptions train_opts;
  fs::path train_data, train_out, train_log;
  train_cmd->add_option("--data", train_data, "prepared data directory")->required();
  train_cmd->add_option("--out", train_out, "checkpoint path")->required();
  train_cmd->add_option("--log", train_log, "epoch log CSV (default: <out>.log.csv)");
  add_train_options(train_cmd, train_opts);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "masked perplexity of a checkpoint on a split");
  fs::path eval_ckpt, eval_data, eval_csv;
  std::string eval_split = "valid";
  int eval_n = 0;
  bool eval_unmasked = false;
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint")->required();
  eval_cmd->add_option("--data", eval_data, "prepared data directory")->required();
  eval_cmd->add_option("--split", eval_split, "split name (train, valid, test)")->capture_default_str();
  eval_cmd->add_option("--thinking-n", eval_n, "thinking tokens the model was trained with")->capture_default_str();
  eval_cmd->add_flag("--unmasked", eval_unmasked, "also count positions whose target is <T>");
  eval_cmd->add_option("--csv", eval_csv, "write the report as CSV");

  // compare
  auto* compare = app.add_subcommand("compare", "rank sentences by perplexity improvement");
  fs::path cmp_base, cmp_tt, cmp_data, cmp_sentences, cmp_csv, cmp_txt;
  int cmp_n = 1;
  std::size_t cmp_top_k = 10;
  std::string cmp_dataset = "data";
  compare->add_option("--base", cmp_base, "baseline checkpoint")->required();
  compare->add_option("--tt", cmp_tt, "thinking-token checkpoint")->required();
  compare->add_option("--data", cmp_data, "prepared data directory (vocabulary)")->required();
  compare->add_option("--sentences", cmp_sentences, "one sentence per line")->required();
  compare->add_option("--thinking-n", cmp_n, "thinking tokens of the --tt model")->capture_default_str();
  compare->add_option("--top-k", cmp_top_k, "rows to keep")->capture_default_str();
  compare->add_option("--dataset", cmp_dataset, "dataset label for the report")->capture_default_str();
  compare->add_option("--csv", cmp_csv, "CSV output path");
  compare->add_option("--txt", cmp_txt, "aligned text output path");

  // probe
  auto* probe = app.add_subcommand("probe", "per-word probabilities under both models");
  fs::path probe_base, probe_tt, probe_data, probe_out;
  std::string probe_sentence;
  int probe_n = 1;
  probe->add_option("--base", probe_base, "baseline checkpoint")->required();
  probe->add_option("--tt", probe_tt, "thinking-token checkpoint")->required();
  probe->add_option("--data", probe_data, "prepared data directory (vocabulary)")->required();
  probe->add_option("--sentence", probe_sentence, "whitespace-tokenized sentence")->required();
  probe->add_option("--thinking-n", probe_n, "thinking tokens of the --tt model")->capture_default_str();
  probe->add_option("--out", probe_out, "write to file instead of stdout");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "train one model per thinking-token count");
  TrainOptions sweep_opts;
  fs::path sweep_data, sweep_out;
  std::vector<int> sweep_ns;
  std::string sweep_dataset = "data";
  sweep->add_option("--data", sweep_data, "prepared data directory")->required();
  sweep->add_option("--out-dir", sweep_out, "output directory")->required();
  sweep->add_option("--n-values", sweep_ns, "thinking-token counts")->required()->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  sweep->add_option("--dataset", sweep_dataset, "dataset label")->capture_default_str();
  add_train_options(sweep, sweep_opts);

  try {
    auto args = expand_config(std::vector<std::string>(argv, argv + argc));
    args.erase(args.begin());
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const ttlm::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*prepare) {
      require_file(prep_train);
      const auto train_tokens = ttlm::load_corpus(prep_train);
      const auto vocab = ttlm::build_vocabulary(train_tokens, max_size, min_count);
      fs::create_directories(prep_out);
      vocab.save(prep_out / kVocabFile);
      std::cout << "vocabulary: " << vocab.size() << " types\n";
      const auto emit = [&](const std::vector<std::string>& tokens, const std::string& name) {
        const auto stream = ttlm::encode(tokens, vocab, name);
        const auto unk = std::count(stream.ids.begin(), stream.ids.end(), ttlm::kUnkId);
        ttlm::save_stream(stream, prep_out / (name + ".ids"));
        std::cout << name << ": " << stream.size() << " tokens, " << unk << " unk\n";
      };
      emit(train_tokens, "train");
      for (const auto& [path, name] : {std::pair{prep_valid, "valid"}, std::pair{prep_test, "test"}}) {
        if (path.empty()) continue;
        require_file(path);
        emit(ttlm::load_corpus(path), name);
      }
    } else if (*inject_cmd) {
      require_file(inj_data / kVocabFile);
      require_file(inj_input);
      const auto vocab = ttlm::Vocabulary::load(inj_data / kVocabFile);
      const auto stream = ttlm::encode(ttlm::load_corpus(inj_input), vocab, inj_input.string());
      const auto injected = ttlm::inject(stream, {inj_n, vocab.thinking_id()});
      // Each source token owns a group of n + 1 ids; a line ends after the <eos> group.
      const auto stride = static_cast<std::size_t>(inj_n) + 1;
      std::string line;
      for (std::size_t i = 0; i < injected.ids.size(); i += stride) {
        for (std::size_t k = 0; k < stride; ++k) {
          if (!line.empty()) line += ' ';
          line += vocab.token(injected.ids[i + k]);
        }
        if (injected.ids[i] == vocab.eos_id()) {
          std::cout << line << '\n';
          line.clear();
        }
      }
      if (!line.empty()) std::cout << line << '\n';
    } else if (*train_cmd) {
      const auto cfg = resolve(train_opts);
      const auto data = load_prepared(train_data);
      check_ids(data.train, data.vocab);
      check_ids(data.valid, data.vocab);
      const fs::path log = train_log.empty() ? fs::path(train_out.string() + ".log.csv") : train_log;
      const auto result = run_training(cfg, data, train_out, log, train_opts.quiet);
      std::cout << "best valid ppl " << ttlm::format_real(result.best_valid_ppl) << '\n';
    } else if (*eval_cmd) {
      require_file(eval_data / kVocabFile);
      const auto vocab = ttlm::Vocabulary::load(eval_data / kVocabFile);
      const auto ck = load_matching(eval_ckpt, vocab);
      const fs::path split_path = eval_data / (eval_split + ".ids");
      require_file(split_path);
      const auto raw = ttlm::load_stream(split_path, eval_split);
      check_ids(raw, vocab);
      const ttlm::ThinkingTokenConfig tt{eval_n, vocab.thinking_id()};
      const auto stream = ttlm::inject(raw, tt);
      std::vector<ttlm::EvalReport> reports;
      auto report = ttlm::masked_perplexity(ck.params, stream, tt);
      report.model_name = ttlm::model_label(eval_n);
      reports.push_back(report);
      if (eval_unmasked) {
        auto unmasked = ttlm::masked_perplexity(ck.params, stream, tt, true);
        unmasked.model_name = ttlm::model_label(eval_n) + " (unmasked)";
        reports.push_back(unmasked);
      }
      ttlm::write_eval_table(std::cout, reports);
      if (!eval_csv.empty()) write_file(eval_csv, [&](std::ostream& os) { ttlm::write_eval_csv(os, reports); });
    } else if (*compare) {
      require_file(cmp_data / kVocabFile);
      require_file(cmp_sentences);
      const auto vocab = ttlm::Vocabulary::load(cmp_data / kVocabFile);
      const auto base = load_matching(cmp_base, vocab);
      const auto tt = load_matching(cmp_tt, vocab);
      std::size_t skipped = 0;
      auto scores = ttlm::sentence_perplexities(base.params, tt.params, read_sentences(cmp_sentences), vocab,
                                                {cmp_n, vocab.thinking_id()}, &skipped);
      if (skipped) std::cerr << "warning: skipped " << skipped << " empty sentence(s)\n";
      const auto ranked = ttlm::rank_by_improvement(std::move(scores), cmp_top_k);
      ttlm::write_sentence_table(std::cout, cmp_dataset, ranked);
      if (!cmp_csv.empty()) {
        write_file(cmp_csv, [&](std::ostream& os) { ttlm::write_sentence_csv(os, cmp_dataset, ranked); });
      }
      if (!cmp_txt.empty()) {
        write_file(cmp_txt, [&](std::ostream& os) { ttlm::write_sentence_table(os, cmp_dataset, ranked); });
      }
    } else if (*probe) {
      require_file(probe_data / kVocabFile);
      const auto vocab = ttlm::Vocabulary::load(probe_data / kVocabFile);
      const auto base = load_matching(probe_base, vocab);
      const auto tt = load_matching(probe_tt, vocab);
      const auto words = split_words(probe_sentence);
      const auto records =
          ttlm::word_probabilities(base.params, tt.params, words, vocab, {probe_n, vocab.thinking_id()});
      for (const auto& r : records) {
        if (r.oov) std::cerr << "warning: '" << r.word << "' is out of vocabulary, scored as <unk>\n";
      }
      if (probe_out.empty()) {
        ttlm::write_word_probabilities(std::cout, words, records, probe_n);
      } else {
        write_file(probe_out, [&](std::ostream& os) { ttlm::write_word_probabilities(os, words, records, probe_n); });
      }
    } else if (*sweep) {
      auto cfg = resolve(sweep_opts);
      const auto data = load_prepared(sweep_data);
      check_ids(data.train, data.vocab);
      check_ids(data.valid, data.vocab);
      fs::create_directories(sweep_out);
      std::vector<ttlm::SweepRow> rows;
      for (int n : sweep_ns) {
        cfg.thinking_n = n;
        cfg.validate();
        const std::string stem = "model_n" + std::to_string(n);
        if (!sweep_opts.quiet) std::cerr << "== " << ttlm::model_label(n) << '\n';
        const auto result = run_training(cfg, data, sweep_out / (stem + ".ttlm"),
                                         sweep_out / (stem + ".log.csv"), sweep_opts.quiet);
        rows.push_back({sweep_dataset, n, result.best_valid_ppl});
      }
      ttlm::write_sweep_table(std::cout, rows);
      write_file(sweep_out / "sweep.csv", [&](std::ostream& os) { ttlm::write_sweep_csv(os, rows); });
      write_file(sweep_out / "sweep.txt", [&](std::ostream& os) { ttlm::write_sweep_table(os, rows); });
    }
  } catch (const ttlm::DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const ttlm::NonFiniteError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::exception& e) {
    // Configuration, path, decode, checkpoint and injection errors.
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}
