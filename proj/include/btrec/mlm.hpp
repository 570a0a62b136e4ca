#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "btrec/corpus.hpp"

namespace btrec {

enum class Optimizer { adam, sgd };

/// Hyperparameters of the encoder. All dimensions are overridable; the
/// defaults train from scratch in minutes on a single core.
struct ModelConfig {
  int vocab_size = 0;
  int max_len = 128;
  int d_model = 64;
  int n_heads = 2;
  int n_layers = 2;
  int d_ff = 128;
  double dropout_rate = 0.1;
  double learning_rate = 1e-3;
  int batch_size = 16;
  int epochs = 30;
  std::uint64_t seed = 1;
  Optimizer optimizer = Optimizer::adam;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
  int head_dim() const { return d_model / n_heads; }

  bool operator==(const ModelConfig&) const = default;
};

struct TensorSlot {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
};

struct LayerSlots {
  TensorSlot ln1_gain, ln1_bias;
  TensorSlot wq, bq, wk, bk, wv, bv, wo, bo;
  TensorSlot ln2_gain, ln2_bias;
  TensorSlot w1, b1, w2, b2;
};

/// Where each tensor lives in the flat parameter vector. Matrices are
/// row-major with shape (in, out), so y = x W + b.
struct ParamLayout {
  TensorSlot tok_emb;  // vocab x d_model, also the (transposed) output projection
  TensorSlot pos_emb;  // max_len x d_model
  std::vector<LayerSlots> layers;
  TensorSlot final_gain, final_bias;
  TensorSlot out_bias;  // vocab
  /// Every tensor with its name, in declared (file) order.
  std::vector<std::pair<std::string, TensorSlot>> named;
  std::size_t total = 0;

  static ParamLayout for_config(const ModelConfig& cfg);
};

template <typename Real>
struct BasicModelParams {
  ModelConfig config;
  ParamLayout layout;
  std::vector<Real> values;

  std::span<Real> tensor(const TensorSlot& s) { return {values.data() + s.offset, s.size()}; }
  std::span<const Real> tensor(const TensorSlot& s) const { return {values.data() + s.offset, s.size()}; }
};

using ModelParams = BasicModelParams<float>;
using WideModelParams = BasicModelParams<double>;

template <typename To, typename From>
BasicModelParams<To> convert_params(const BasicModelParams<From>& p) {
  BasicModelParams<To> out{p.config, p.layout, {}};
  out.values.assign(p.values.begin(), p.values.end());
  return out;
}

/// Scaled-normal initialization from cfg.seed: N(0, 0.02) for embeddings and
/// projections (residual outputs further scaled by 1/sqrt(2 n_layers)),
/// unit layer-norm gains, zero biases.
ModelParams init_model(const ModelConfig& cfg);

/// SHA-256 over the raw parameter bytes.
std::string params_digest(const ModelParams& params);

/// Inference-mode forward pass; returns len x vocab_size logits (row-major).
/// [PAD] positions are excluded as attention keys.
template <typename Real>
std::vector<Real> forward(const BasicModelParams<Real>& params, std::span<const TokenId> ids);

/// Log-softmax over the full vocabulary at one position (inference mode).
template <typename Real>
std::vector<double> log_softmax_at(const BasicModelParams<Real>& params, std::span<const TokenId> ids,
                                   std::size_t position);

struct GradOptions {
  bool training = false;  // enables dropout
  std::uint64_t dropout_seed = 0;
  int threads = 1;
};

template <typename Real>
struct LossAndGrads {
  double loss = 0.0;  // mean cross-entropy over labeled positions
  std::size_t n_labels = 0;
  std::vector<Real> grads;  // same layout as params.values
};

/// Mean masked-token cross-entropy over the batch and its exact gradient.
/// Instance gradients are reduced in batch order regardless of `threads`.
template <typename Real>
LossAndGrads<Real> mlm_loss_and_grads(const BasicModelParams<Real>& params,
                                      std::span<const MaskedInstance> batch,
                                      const GradOptions& options = {});

struct TrainOptions {
  MaskOptions masking{};
  int threads = 1;
};

/// Mini-batch trainer whose state (parameters, optimizer moments, epoch
/// counter) persists between calls, so training can be continued.
/// Epoch e's shuffle, masks and dropout depend only on (seed, e), so
/// continuing from epoch k is identical to training k+n epochs at once.
class Trainer {
 public:
  Trainer(ModelParams params, std::vector<Sentence> corpus, Vocab vocab, TrainOptions options = {});

  /// Runs `n` more epochs; throws DivergedLoss on a non-finite loss.
  void run_epochs(int n);

  int epochs_done() const { return epoch_; }
  const ModelParams& params() const { return params_; }
  const std::vector<double>& loss_trace() const { return trace_; }

 private:
  void step(std::span<const MaskedInstance> batch, std::uint64_t dropout_seed);

  ModelParams params_;
  std::vector<Sentence> corpus_;
  Vocab vocab_;
  TrainOptions options_;
  std::vector<double> adam_m_, adam_v_;
  std::int64_t steps_ = 0;
  int epoch_ = 0;
  std::vector<double> trace_;
  double last_loss_ = 0.0;
  std::size_t last_labels_ = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_trace;  // one mean loss per epoch
};

/// Trains for params.config.epochs epochs.
TrainResult train(ModelParams params, const std::vector<Sentence>& corpus, const Vocab& vocab,
                  const TrainOptions& options = {});

struct ScoredToken {
  TokenId token = 0;
  double score = 0.0;  // log-probability over the full vocabulary

  bool operator==(const ScoredToken&) const = default;
};

/// Candidates ranked by descending log-softmax score at the single [MASK]
/// position (ties by ascending token id).
using UnmaskResult = std::vector<ScoredToken>;

template <typename Real>
UnmaskResult unmask(const BasicModelParams<Real>& params, std::span<const TokenId> sentence,
                    std::span<const TokenId> candidates);

/// Ranks candidates given a full-vocabulary log-softmax row.
UnmaskResult rank_candidates(std::span<const double> log_probs, std::span<const TokenId> candidates);

/// Top-1 accuracy over the labeled positions of one masking pass (drawn
/// from `seed`) of every sentence, in inference mode.
double masked_accuracy(const ModelParams& params, const std::vector<Sentence>& corpus, const Vocab& vocab,
                       std::uint64_t seed, const MaskOptions& masking = {});

extern template std::vector<float> forward(const BasicModelParams<float>&, std::span<const TokenId>);
extern template std::vector<double> forward(const BasicModelParams<double>&, std::span<const TokenId>);
extern template std::vector<double> log_softmax_at(const BasicModelParams<float>&, std::span<const TokenId>, std::size_t);
extern template std::vector<double> log_softmax_at(const BasicModelParams<double>&, std::span<const TokenId>, std::size_t);
extern template LossAndGrads<float> mlm_loss_and_grads(const BasicModelParams<float>&,
                                                       std::span<const MaskedInstance>, const GradOptions&);
extern template LossAndGrads<double> mlm_loss_and_grads(const BasicModelParams<double>&,
                                                        std::span<const MaskedInstance>, const GradOptions&);
extern template UnmaskResult unmask(const BasicModelParams<float>&, std::span<const TokenId>, std::span<const TokenId>);
extern template UnmaskResult unmask(const BasicModelParams<double>&, std::span<const TokenId>, std::span<const TokenId>);

}  // namespace btrec
