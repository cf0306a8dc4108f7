#pragma once

#include <filesystem>
#include <utility>

#include "egoact/featurize.hpp"
#include "egoact/tensor.hpp"

namespace egoact {

// Width/depth defaults are deliberate desk-scale choices, not values
// from any reference; seq_len and input_dim are fixed by the feature
// pipeline.
struct ModelConfig {
  int d_model = 128;
  int n_heads = 4;
  int n_layers = 4;
  int d_mlp = 512;
  double dropout = 0.1;
  int seq_len = kSequenceLength;
  int input_dim = kFeatureDim;
  int num_classes = 36;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Pre-norm encoder block: x += attn(LN1(x)); x += mlp(LN2(x)).
struct EncoderBlock {
  nn::TensorPtr ln1_gain, ln1_bias;
  nn::TensorPtr wq, wk, wv, wo;
  nn::TensorPtr ln2_gain, ln2_bias;
  nn::TensorPtr mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct Model {
  ModelConfig cfg;
  nn::TensorPtr token_w;    // input_dim x d_model
  nn::TensorPtr token_b;    // d_model
  nn::TensorPtr cls_token;  // 1 x d_model
  nn::TensorPtr pos_embed;  // (seq_len + 1) x d_model
  std::vector<EncoderBlock> blocks;
  nn::TensorPtr final_gain, final_bias;
  nn::TensorPtr head_w;  // d_model x num_classes
  nn::TensorPtr head_b;  // num_classes

  // Stable (name, tensor) listing; fixes checkpoint manifest order and
  // init order.
  std::vector<std::pair<std::string, nn::TensorPtr>> parameters() const;
  std::vector<nn::TensorPtr> parameter_tensors() const;
  std::int64_t parameter_count() const;
};

// Weights ~ N(0, 0.02), biases 0, LN gains 1; deterministic per seed.
Model init_model(const ModelConfig& cfg, Rng& rng);

Model clone_model(const Model& m);

// Multi-head self-attention on an already-normalized token matrix:
// softmax(Q K^T / sqrt(d_head)) V per head, heads concatenated, output
// projection. Dropout hits the attention weights and the projected
// output at train time.
nn::TensorPtr attention(nn::Tape& tape, const EncoderBlock& block, const nn::TensorPtr& x,
                        const ModelConfig& cfg, bool train_flag, Rng* rng);

// Token projection, CLS prepend, positional embeddings, encoder stack,
// final LN, classification head read from the CLS position. Returns
// 1 x num_classes logits.
nn::TensorPtr forward_logits(nn::Tape& tape, const Model& m, const nn::TensorPtr& input,
                             bool train_flag, Rng* rng);

// Inference-mode convenience: builds a throwaway tape.
std::vector<double> forward(const Model& m, const SequenceTensor& seq);

struct Prediction {
  int class_id = 0;
  std::vector<double> probabilities;
};

// Softmax probabilities and argmax with lowest-index tie-break.
Prediction predict(const Model& m, const SequenceTensor& seq);

nn::TensorPtr sequence_input(const SequenceTensor& seq);

// `.ckpt` layout: magic "EAR1", u64 little-endian header length, JSON
// header {config, num_object_classes, manifest: [[name, shape], ...]},
// then raw little-endian f64 parameter data in manifest order.
// Round-trips bitwise.
void save_checkpoint(const Model& m, int num_object_classes, const std::filesystem::path& path);

struct LoadedCheckpoint {
  Model model;
  int num_object_classes = 0;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace egoact
