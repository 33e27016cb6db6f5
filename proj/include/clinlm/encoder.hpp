#pragma once

// Bidirectional transformer encoder with masked-LM and task heads. Forward
// passes keep the activations needed by the hand-written backward pass, so
// every loss comes with exact gradients for all parameters.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "clinlm/random.hpp"
#include "clinlm/wordpiece.hpp"

namespace clinlm {

using Matrix = Eigen::MatrixXd;

struct EncoderConfig {
  int vocab_size = 0;
  int hidden_dim = 32;
  int n_layers = 2;
  int n_heads = 2;
  int ff_dim = 64;
  int max_positions = 512;
  int type_vocab_size = 2;
  double dropout_rate = 0.1;
  double layernorm_epsilon = 1e-12;

  void validate() const;
  int head_dim() const { return hidden_dim / n_heads; }

  /// BERT-base shape (768 hidden, 12 layers, 12 heads). The shape is inferred
  /// from the "base" scale label; it is not a published configuration.
  static EncoderConfig base_preset(int vocab_size);
};

/// weight is [in x out], bias is [1 x out].
struct Linear {
  Matrix weight;
  Matrix bias;
};

struct LayerNormParams {
  Matrix gamma;  // [1 x dim]
  Matrix beta;   // [1 x dim]
};

struct EncoderLayer {
  Linear query;
  Linear key;
  Linear value;
  Linear attention_output;
  LayerNormParams attention_norm;
  Linear ff_in;
  Linear ff_out;
  LayerNormParams ff_norm;
};

enum class HeadKind { Token, Pair, MultiLabel };
std::string_view to_string(HeadKind kind);
HeadKind parse_head_kind(std::string_view text);

struct TaskHead {
  HeadKind kind = HeadKind::Token;
  Linear projection;  // [hidden x n_labels]

  int n_labels() const { return static_cast<int>(projection.weight.cols()); }
};

struct Parameters {
  EncoderConfig config;
  Matrix token_embedding;     // [vocab x hidden]
  Matrix position_embedding;  // [max_positions x hidden]
  Matrix segment_embedding;   // [type_vocab x hidden]
  LayerNormParams embedding_norm;
  std::vector<EncoderLayer> layers;
  Linear mlm_transform;
  LayerNormParams mlm_norm;
  Linear mlm_output;  // [hidden x vocab]
  std::map<std::string, TaskHead> heads;

  /// Zero biases, unit layer-norm scales, other weights uniform with std 0.02.
  static Parameters initialize(const EncoderConfig& config, Rng& rng);
  /// Same shapes as `like`, all zeros.
  static Parameters zeros_like(const Parameters& like);

  /// Adds a task head initialized from rng. Throws when n_labels <= 0.
  TaskHead& add_head(const std::string& name, HeadKind kind, int n_labels, Rng& rng);
  const TaskHead& head(const std::string& name) const;

  /// Every tensor in a fixed order with a stable dotted name.
  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;
  std::size_t parameter_count() const;
};

/// Throws when shapes differ.
void add_scaled(Parameters& dst, const Parameters& src, double scale);
void scale(Parameters& params, double factor);
bool bit_identical(const Parameters& a, const Parameters& b);

struct Batch {
  int rows = 0;
  int length = 0;
  std::vector<TokenId> ids;    // row-major [rows x length]
  std::vector<int> mask;       // 1 = real token
  std::vector<int> segments;

  TokenId id(int b, int t) const { return ids[static_cast<std::size_t>(b * length + t)]; }
  int mask_at(int b, int t) const { return mask[static_cast<std::size_t>(b * length + t)]; }
  int segment(int b, int t) const { return segments[static_cast<std::size_t>(b * length + t)]; }

  /// Right-pads variable-length rows with [PAD] / mask 0.
  static Batch from_rows(std::span<const std::vector<TokenId>> rows,
                         std::span<const std::vector<int>> segments = {});
  void validate(const EncoderConfig& config) const;
};

struct LayerNormCache {
  Matrix normalized;            // x_hat
  Eigen::VectorXd inverse_std;  // per row
};

struct LayerCache {
  Matrix input;
  Matrix query, key, value;
  std::vector<Matrix> attention;  // per head [T x T]
  Matrix context;
  Matrix attention_dropout;
  LayerNormCache attention_norm;
  Matrix attention_block;  // post-norm output of the attention sub-block
  Matrix ff_pre;
  Matrix ff_act;
  Matrix ff_dropout;
  LayerNormCache ff_norm;
};

struct RowCache {
  LayerNormCache embedding_norm;
  Matrix embedding_dropout;
  std::vector<LayerCache> layers;
};

struct ForwardResult {
  std::vector<Matrix> hidden;  // per row [T x hidden]
  std::vector<RowCache> cache;
};

/// Throws when the batch is longer than max_positions or holds invalid ids.
/// Dropout is applied only when train_mode is set.
ForwardResult forward(const Parameters& params, const Batch& batch, bool train_mode, Rng& rng);

/// Accumulates into grads the parameter gradients for d(loss)/d(hidden).
void backward(const Parameters& params, const Batch& batch, const ForwardResult& fwd,
              std::span<const Matrix> d_hidden, Parameters& grads);

struct LossResult {
  double loss = 0.0;
  Parameters grads;
  std::size_t count = 0;  // examples (or targets) averaged over
};

struct MlmTarget {
  int row = 0;
  int position = 0;
  TokenId id = 0;
};

/// Logits [n_targets x vocab] of the masked-LM head at the given positions.
Matrix mlm_logits(const Parameters& params, std::span<const Matrix> hidden,
                  std::span<const MlmTarget> targets);

/// Mean cross-entropy over targets plus exact gradients.
LossResult mlm_loss(const Parameters& params, const Batch& batch, std::span<const MlmTarget> targets,
                    bool train_mode, Rng& rng);
double mlm_loss_value(const Parameters& params, const Batch& batch, std::span<const MlmTarget> targets);

inline constexpr int kIgnoreLabel = -1;

/// [T x n_labels] per row.
std::vector<Matrix> head_token_classify(const TaskHead& head, std::span<const Matrix> hidden);
/// [B x n_labels] from the first-position vector.
Matrix head_pair_classify(const TaskHead& head, std::span<const Matrix> hidden);
/// [B x n_labels] logistic probabilities.
Matrix head_multilabel(const TaskHead& head, std::span<const Matrix> hidden);

/// labels is row-major [rows x length]; kIgnoreLabel entries carry no loss.
LossResult token_classification_loss(const Parameters& params, const std::string& head_name,
                                      const Batch& batch, std::span<const int> labels,
                                      bool train_mode, Rng& rng);
LossResult pair_classification_loss(const Parameters& params, const std::string& head_name,
                                    const Batch& batch, std::span<const int> labels, bool train_mode,
                                    Rng& rng);
/// targets is [rows x n_labels] of 0/1; loss is mean binary cross-entropy.
LossResult multilabel_loss(const Parameters& params, const std::string& head_name, const Batch& batch,
                           const Matrix& targets, bool train_mode, Rng& rng);

// Checkpoint container: a text header with config fields and head layout,
// then each tensor as `name rows cols` and little-endian float64 payload.
void save_checkpoint(std::ostream& out, const Parameters& params);
Parameters load_checkpoint(std::istream& in);
void save_checkpoint_file(const std::string& path, const Parameters& params);
Parameters load_checkpoint_file(const std::string& path);

}  // namespace clinlm
