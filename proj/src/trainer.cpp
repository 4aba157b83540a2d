#include "ttlm/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>

#include "ttlm/checkpoint.hpp"
#include "ttlm/eval.hpp"

namespace ttlm {

void TrainConfig::validate() const {
  if (bptt_len < 1) throw ConfigError("bptt must be positive");
  if (batch_lanes < 1) throw ConfigError("batch size must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("gradient clipping norm must be positive");
  if (hidden < 1 || embed < 1) throw ConfigError("hidden and embed sizes must be positive");
  if (layers != 1) throw ConfigError("only single-layer models are supported (layers = 1)");
  if (!(learn_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (lr_patience < 1) throw ConfigError("lr patience must be positive");
  if (max_epochs < 1) throw ConfigError("epoch count must be positive");
  if (asgd_nonmono < 0) throw ConfigError("asgd nonmono window must be non-negative");
  if (asgd_start_epoch < 0) throw ConfigError("asgd start epoch must be non-negative");
  if (thinking_n < 0) throw ConfigError("thinking token count must be non-negative");
  if (tie_weights && embed != hidden) {
    throw ConfigError("weight tying requires embed size (" + std::to_string(embed) +
                      ") == hidden size (" + std::to_string(hidden) + ")");
  }
}

const char* to_string(OptimizerMode mode) {
  return mode == OptimizerMode::kSgd ? "SGD" : "ASGD";
}

void OptimizerState::start_averaging(const Params& current) {
  mode = OptimizerMode::kAveraging;
  averaged = current.zeros_like();
  steps_averaged = 0;
  asgd_accumulate(*this, current);
}

void asgd_accumulate(OptimizerState& opt, const Params& params) {
  if (opt.mode != OptimizerMode::kAveraging || !opt.averaged) {
    throw std::logic_error("asgd_accumulate called outside averaging mode");
  }
  const double k = 1.0 / static_cast<double>(opt.steps_averaged + 1);
  Params& avg = *opt.averaged;
  avg.embedding += k * (params.embedding - avg.embedding);
  avg.w_input += k * (params.w_input - avg.w_input);
  avg.w_hidden += k * (params.w_hidden - avg.w_hidden);
  avg.bias_gates += k * (params.bias_gates - avg.bias_gates);
  avg.w_out += k * (params.w_out - avg.w_out);
  avg.bias_out += k * (params.bias_out - avg.bias_out);
  ++opt.steps_averaged;
}

bool maybe_trigger_asgd(OptimizerState& opt, double current_val_nll, const Params& current) {
  opt.val_history.push_back(current_val_nll);
  if (opt.mode != OptimizerMode::kSgd) return false;
  const std::size_t window = static_cast<std::size_t>(std::max(opt.nonmono, 1));
  const std::size_t prior = opt.val_history.size() - 1;
  if (prior < window) return false;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = prior - window; k < prior; ++k) best = std::min(best, opt.val_history[k]);
  if (current_val_nll < best) return false;
  opt.start_averaging(current);
  return true;
}

WindowStats train_window(Params& params, OptimizerState& opt, const TrainConfig& cfg,
                         double learn_rate, const Eigen::Ref<const IdMatrix>& inputs,
                         const Eigen::Ref<const IdMatrix>& targets, State& state) {
  MaskMatrix mask = cfg.train_mask_thinking
                        ? MaskMatrix(targets.array() != kThinkingId)
                        : MaskMatrix(MaskMatrix::Constant(targets.rows(), targets.cols(), true));
  auto lg = loss_and_grad(params, inputs, targets, mask, state);
  state = std::move(lg.final_state);

  WindowStats stats;
  stats.total_nll = lg.total_nll;
  stats.counted = lg.token_count;
  if (lg.token_count == 0) return stats;

  const double inv = 1.0 / static_cast<double>(lg.token_count);
  lg.grads.for_each([&](std::string_view, auto& t) { t *= inv; });
  stats.grad_norm = clip_gradients(lg.grads, cfg.clip_norm);
  sgd_step(params, lg.grads, learn_rate);
  if (opt.mode == OptimizerMode::kAveraging) asgd_accumulate(opt, params);
  return stats;
}

std::string to_csv_row(const EpochLog& row) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%s,%.3f", row.epoch, row.train_nll,
                row.valid_ppl, row.learn_rate, to_string(row.mode), row.seconds);
  return buf;
}

TrainResult train(const TrainConfig& cfg, const TokenStream& train_stream,
                  const TokenStream& valid_stream, Eigen::Index vocab_size, const TrainIo& io) {
  cfg.validate();
  const ThinkingTokenConfig tt{cfg.thinking_n, kThinkingId};
  const TokenStream train_ids = inject(train_stream, tt);
  const TokenStream valid_ids = inject(valid_stream, tt);
  const BatchedCorpus batches = make_batches(train_ids, cfg.batch_lanes, cfg.bptt_len);

  const ModelDims dims{vocab_size, cfg.embed, cfg.hidden, cfg.tie_weights};
  Params params = init_params<double>(dims, cfg.seed);
  OptimizerState opt;
  opt.nonmono = cfg.asgd_nonmono;

  std::ofstream log_file;
  if (!io.log_csv.empty()) {
    log_file.open(io.log_csv, std::ios::trunc);
    if (!log_file) throw IoError("cannot write " + io.log_csv.string());
    log_file << kEpochLogHeader << '\n';
  }

  const double initial_val_nll = std::log(masked_perplexity(params, valid_ids, tt).perplexity);
  if (io.progress) *io.progress << "initial valid ppl " << std::exp(initial_val_nll) << '\n';

  TrainResult result;
  result.best_valid_ppl = std::numeric_limits<double>::infinity();
  double lr = cfg.learn_rate;
  int epochs_without_gain = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const OptimizerMode mode = opt.mode;
    State state = State::zeros(batches.lanes(), cfg.hidden);
    double nll_sum = 0.0;
    std::size_t counted = 0;
    for (const auto& w : batches.windows()) {
      const auto stats = train_window(params, opt, cfg, lr, batches.inputs(w), batches.targets(w), state);
      nll_sum += stats.total_nll;
      counted += stats.counted;
    }

    const Params& eval_params = opt.mode == OptimizerMode::kAveraging ? *opt.averaged : params;
    const double valid_ppl = masked_perplexity(eval_params, valid_ids, tt).perplexity;
    const double val_nll = std::log(valid_ppl);
    if (!std::isfinite(val_nll) || val_nll > 3.0 * initial_val_nll) {
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                            ": validation NLL " + std::to_string(val_nll) + " vs initial " +
                            std::to_string(initial_val_nll));
    }

    EpochLog row;
    row.epoch = epoch;
    row.train_nll = counted ? nll_sum / static_cast<double>(counted) : 0.0;
    row.valid_ppl = valid_ppl;
    row.learn_rate = lr;
    row.mode = mode;

    if (valid_ppl < result.best_valid_ppl) {
      result.best_valid_ppl = valid_ppl;
      epochs_without_gain = 0;
      if (!io.checkpoint.empty()) save_checkpoint(eval_params, io.checkpoint, io.vocab_hash);
    } else if (++epochs_without_gain >= cfg.lr_patience) {
      lr *= 0.5;
      epochs_without_gain = 0;
    }

    if (cfg.asgd_start_epoch > 0) {
      opt.val_history.push_back(val_nll);
      if (opt.mode == OptimizerMode::kSgd && epoch >= cfg.asgd_start_epoch) opt.start_averaging(params);
    } else {
      maybe_trigger_asgd(opt, val_nll, params);
    }

    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(row);
    if (log_file.is_open()) log_file << to_csv_row(row) << '\n' << std::flush;
    if (io.progress) {
      *io.progress << "epoch " << row.epoch << " train_nll " << row.train_nll << " valid_ppl "
                   << row.valid_ppl << " lr " << row.learn_rate << ' ' << to_string(row.mode)
                   << ' ' << row.seconds << "s\n";
    }
  }

  result.averaged = opt.mode == OptimizerMode::kAveraging;
  result.params = result.averaged ? *opt.averaged : params;
  return result;
}

}  // namespace ttlm
