#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "egoact/common.hpp"

namespace egoact::nn {

// Dense row-major 64-bit tensor. Gradient storage is lazy: `grad` stays
// empty until backward first touches the tensor.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;

  size_t size() const { return data.size(); }
  bool is_scalar() const { return data.size() == 1; }
  int rows() const { return shape.size() == 2 ? shape[0] : 1; }
  int cols() const { return shape.empty() ? 1 : shape.back(); }

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
  void zero_grad() { grad.assign(data.size(), 0.0); }
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false);
TensorPtr make_tensor(std::vector<int> shape, std::vector<double> data,
                      bool requires_grad = false);

std::string shape_string(const Tensor& t);

// Records one forward pass; backward replays it in reverse. A tape and
// its intermediate tensors are a single-threaded unit of work. Gradients
// of tensors used multiple times accumulate (sum over uses), including
// across tapes, until explicitly zeroed.
class Tape {
 public:
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
  // Elementwise when shapes match; otherwise b's shape must be a suffix
  // of a's and b broadcasts over the leading dimensions.
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr scale(const TensorPtr& a, double c);
  TensorPtr layer_norm(const TensorPtr& a, const TensorPtr& gain, const TensorPtr& bias,
                       double eps);
  TensorPtr softmax_lastdim(const TensorPtr& a);
  TensorPtr gelu(const TensorPtr& a);
  TensorPtr relu(const TensorPtr& a);
  TensorPtr embedding_select(const TensorPtr& table, std::vector<int> indices);
  TensorPtr concat_rows(const std::vector<TensorPtr>& parts);
  TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
  TensorPtr slice_rows(const TensorPtr& a, int begin, int end);
  TensorPtr slice_cols(const TensorPtr& a, int begin, int end);
  TensorPtr transpose_last2(const TensorPtr& a);
  // Inverted dropout: survivors are scaled by 1/(1-p) at train time so
  // inference needs no rescaling. Identity when p == 0 or not training.
  TensorPtr dropout(const TensorPtr& a, double p, Rng& rng, bool train_flag);
  // -log softmax(logits)[target], numerically stabilized.
  TensorPtr cross_entropy(const TensorPtr& logits, int target);
  TensorPtr sum(const TensorPtr& a);

  // Reverse pass from a scalar loss recorded on this tape. `seed` is the
  // initial dL/dloss, useful for averaging per-sample losses.
  void backward(const TensorPtr& loss, double seed = 1.0);

  size_t num_ops() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    TensorPtr out;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;

  TensorPtr record(const char* op, TensorPtr out, std::function<void()> back);
};

// Max over coordinates of |analytic - numeric| / max(1e-8, |a| + |n|),
// with central differences of step h. `f` must rebuild the same scalar
// loss on any fresh tape (no dropout, no rng consumption).
using LossFn = std::function<TensorPtr(Tape&)>;
double gradcheck(const LossFn& f, std::span<const TensorPtr> params, double h = 1e-5);

void zero_grads(std::span<const TensorPtr> params);

}  // namespace egoact::nn
