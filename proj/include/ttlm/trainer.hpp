#ifndef TTLM_TRAINER_HPP
#define TTLM_TRAINER_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ttlm/corpus.hpp"
#include "ttlm/errors.hpp"
#include "ttlm/injector.hpp"
#include "ttlm/model.hpp"

namespace ttlm {

struct TrainConfig {
  Eigen::Index bptt_len = 70;
  Eigen::Index batch_lanes = 12;
  double clip_norm = 0.25;
  Eigen::Index hidden = 450;
  Eigen::Index embed = 450;
  int layers = 1;
  double learn_rate = 2.0;
  int lr_patience = 2;  // halve the rate after this many epochs without improvement
  int max_epochs = 40;
  std::uint64_t seed = 0;
  int asgd_nonmono = 5;
  int asgd_start_epoch = 0;  // > 0 switches to averaging after this epoch instead of the nonmono rule
  int thinking_n = 0;
  bool train_mask_thinking = false;
  bool tie_weights = false;

  // Throws ConfigError.
  void validate() const;
};

enum class OptimizerMode { kSgd, kAveraging };

const char* to_string(OptimizerMode mode);

struct OptimizerState {
  OptimizerMode mode = OptimizerMode::kSgd;
  std::optional<Params> averaged;
  std::size_t steps_averaged = 0;
  std::vector<double> val_history;
  int nonmono = 5;

  // Averaging starts from `current` as the first iterate.
  void start_averaging(const Params& current);
};

template <typename Scalar>
double global_norm(const ModelParams<Scalar>& grads) {
  double sq = 0.0;
  grads.for_each([&](std::string_view, const auto& t) { sq += static_cast<double>(t.squaredNorm()); });
  return std::sqrt(sq);
}

// Rescales all gradients jointly so their concatenated L2 norm is at most
// clip_norm. Returns the norm before clipping.
template <typename Scalar>
double clip_gradients(ModelParams<Scalar>& grads, double clip_norm) {
  if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
  grads.for_each([](std::string_view name, const auto& t) {
    if (!t.allFinite()) throw NonFiniteError("non-finite gradient in " + std::string(name));
  });
  const double norm = global_norm(grads);
  if (norm > clip_norm) {
    const auto scale = static_cast<Scalar>(clip_norm / norm);
    grads.for_each([&](std::string_view, auto& t) { t *= scale; });
  }
  return norm;
}

template <typename Scalar>
void sgd_step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grads, double learn_rate) {
  const auto lr = static_cast<Scalar>(learn_rate);
  params.embedding -= lr * grads.embedding;
  params.w_input -= lr * grads.w_input;
  params.w_hidden -= lr * grads.w_hidden;
  params.bias_gates -= lr * grads.bias_gates;
  params.w_out -= lr * grads.w_out;
  params.bias_out -= lr * grads.bias_out;
  params.for_each([](std::string_view name, const auto& t) {
    if (!t.allFinite()) throw NonFiniteError("non-finite parameter after update in " + std::string(name));
  });
}

// Running mean update; requires averaging mode.
void asgd_accumulate(OptimizerState& opt, const Params& params);

// Records a validation NLL and switches to averaging when it fails to beat
// the best of the previous max(nonmono, 1) validations, provided at least
// nonmono + 1 validations (and at least two) have been seen. Returns true on
// the call that triggers.
bool maybe_trigger_asgd(OptimizerState& opt, double current_val_nll, const Params& current);

struct WindowStats {
  double total_nll = 0.0;
  std::size_t counted = 0;
  double grad_norm = 0.0;
};

// One truncated-BPTT update on a B x T window. The carried state is replaced
// by the window's final state. Gradients are of the mean NLL per counted token.
WindowStats train_window(Params& params, OptimizerState& opt, const TrainConfig& cfg,
                         double learn_rate, const Eigen::Ref<const IdMatrix>& inputs,
                         const Eigen::Ref<const IdMatrix>& targets, State& state);

struct EpochLog {
  int epoch = 0;
  double train_nll = 0.0;
  double valid_ppl = 0.0;
  double learn_rate = 0.0;
  OptimizerMode mode = OptimizerMode::kSgd;
  double seconds = 0.0;
};

inline constexpr const char* kEpochLogHeader = "epoch,train_nll,valid_ppl,lr,mode,seconds";
std::string to_csv_row(const EpochLog& row);

struct TrainIo {
  std::filesystem::path checkpoint;  // best-validation model; empty to skip
  std::filesystem::path log_csv;     // rewritten per run, one row appended per epoch; empty to skip
  std::uint64_t vocab_hash = 0;
  std::ostream* progress = nullptr;
};

struct TrainResult {
  Params params;
  std::vector<EpochLog> log;
  double best_valid_ppl = 0.0;
  bool averaged = false;
};

// Trains on raw (uninjected) encoded streams; cfg.thinking_n is applied here.
// Throws DivergenceError when validation NLL exceeds three times its
// pre-training value.
TrainResult train(const TrainConfig& cfg, const TokenStream& train_stream,
                  const TokenStream& valid_stream, Eigen::Index vocab_size,
                  const TrainIo& io = {});

}  // namespace ttlm

#endif  // TTLM_TRAINER_HPP
