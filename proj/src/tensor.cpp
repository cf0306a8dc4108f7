#include "egoact/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace egoact::nn {

namespace {

// C (+)= A*B with A[M,K], B[K,N]. i-k-j order keeps the inner loop
// contiguous and free of reductions so it vectorizes at -O3.
void mm(double* __restrict c, const double* __restrict a, const double* __restrict b, int m, int k,
        int n, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A^T * B with A[M,K], B[M,N], C[K,N].
void mm_at_acc(double* __restrict c, const double* __restrict a, const double* __restrict b, int m,
               int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    const double* brow = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void transpose_into(double* __restrict dst, const double* __restrict src, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      dst[static_cast<size_t>(j) * rows + i] = src[static_cast<size_t>(i) * cols + j];
    }
  }
}

void require_2d(const TensorPtr& t, const char* what) {
  if (t->shape.size() != 2) {
    throw ShapeError(std::string(what) + ": expected a 2-D tensor, got " + shape_string(*t));
  }
}

bool is_suffix(const std::vector<int>& shape, const std::vector<int>& suffix) {
  if (suffix.size() > shape.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), shape.rbegin());
}

bool any_grad(std::initializer_list<TensorPtr> ts) {
  for (const auto& t : ts) {
    if (t->requires_grad) return true;
  }
  return false;
}

double stable_lse(const double* v, int n, double& max_out) {
  double mx = v[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, v[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  max_out = mx;
  return mx + std::log(s);
}

}  // namespace

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad) {
  size_t total = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive");
    total *= static_cast<size_t>(d);
  }
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data.assign(total, 0.0);
  t->requires_grad = requires_grad;
  return t;
}

TensorPtr make_tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  auto t = make_tensor(std::move(shape), requires_grad);
  if (data.size() != t->data.size()) {
    throw ShapeError("tensor data size " + std::to_string(data.size()) +
                     " does not match shape " + shape_string(*t));
  }
  t->data = std::move(data);
  return t;
}

std::string shape_string(const Tensor& t) {
  std::string s = "[";
  for (size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(t.shape[i]);
  }
  return s + "]";
}

TensorPtr Tape::record(const char* op, TensorPtr out, std::function<void()> back) {
  for (double v : out->data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite value in output");
    }
  }
  nodes_.push_back({out, std::move(back)});
  return out;
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b) {
  require_2d(a, "matmul lhs");
  require_2d(b, "matmul rhs");
  const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
  if (b->shape[0] != k) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(*a) + " and " +
                     shape_string(*b));
  }
  auto out = make_tensor({m, n}, any_grad({a, b}));
  mm(out->data.data(), a->data.data(), b->data.data(), m, k, n, false);
  std::function<void()> back;
  if (out->requires_grad) {
    back = [a, b, out, m, k, n]() {
      if (out->grad.empty()) return;
      if (a->requires_grad) {
        a->ensure_grad();
        std::vector<double> bt(static_cast<size_t>(k) * n);
        transpose_into(bt.data(), b->data.data(), k, n);
        mm(a->grad.data(), out->grad.data(), bt.data(), m, n, k, true);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        mm_at_acc(b->grad.data(), a->data.data(), out->grad.data(), m, k, n);
      }
    };
  }
  return record("matmul", std::move(out), std::move(back));
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
  if (!is_suffix(a->shape, b->shape)) {
    throw ShapeError("add: shape " + shape_string(*b) + " does not broadcast into " +
                     shape_string(*a));
  }
  const size_t chunk = b->size();
  const size_t lead = a->size() / chunk;
  auto out = make_tensor(a->shape, any_grad({a, b}));
  for (size_t l = 0; l < lead; ++l) {
    const double* ap = a->data.data() + l * chunk;
    double* op = out->data.data() + l * chunk;
    const double* bp = b->data.data();
    for (size_t i = 0; i < chunk; ++i) op[i] = ap[i] + bp[i];
  }
  std::function<void()> back;
  if (out->requires_grad) {
    back = [a, b, out, lead, chunk]() {
      if (out->grad.empty()) return;
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t l = 0; l < lead; ++l) {
          const double* gp = out->grad.data() + l * chunk;
          for (size_t i = 0; i < chunk; ++i) b->grad[i] += gp[i];
        }
      }
    };
  }
  return record("add", std::move(out), std::move(back));
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape) {
    throw ShapeError("mul: shapes " + shape_string(*a) + " and " + shape_string(*b) +
                     " must match");
  }
  auto out = make_tensor(a->shape, any_grad({a, b}));
  for (size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * b->data[i];
  std::function<void()> back;
  if (out->requires_grad) {
    back = [a, b, out]() {
      if (out->grad.empty()) return;
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
      }
    };
  }
  return record("mul", std::move(out), std::move(back));
}

TensorPtr Tape::scale(const TensorPtr& a, double c) {
  auto out = make_tensor(a->shape, a->requires_grad);
  for (size_t i = 0; i < a->size(); ++i) out->data[i] = c * a->data[i];
  std::function<void()> back;
  if (out->requires_grad) {
    back = [a, out, c]() {
      if (out->grad.empty()) return;
      a->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += c * out->grad[i];
    };
  }
  return record("scale", std::move(out), std::move(back));
}

TensorPtr Tape::layer_norm(const TensorPtr& a, const TensorPtr& gain, const TensorPtr& bias,
                           double eps) {
  if (!(eps > 0.0)) throw ShapeError("layer_norm: eps must be positive");
  const int cols = a->cols();
  const int rows = static_cast<int>(a->size()) / cols;
  if (gain->size() != static_cast<size_t>(cols) || bias->size() != static_cast<size_t>(cols)) {
    throw ShapeError("layer_norm: gain " + shape_string(*gain) + " / bias " + shape_string(*bias) +
                     " must match last dim of " + shape_string(*a));
  }
  auto out = make_tensor(a->shape, any_grad({a, gain, bias}));
  auto xhat = std::make_shared<std::vector<double>>(a->size());
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    const double* x = a->data.data() + static_cast<size_t>(r) * cols;
    double* y = out->data.data() + static_cast<size_t>(r) * cols;
    double* xh = xhat->data() + static_cast<size_t>(r) * cols;
    double mean = 0.0;
    for (int j = 0; j < cols; ++j) mean += x[j];
    mean /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(r)] = inv;
    for (int j = 0; j < cols; ++j) {
      xh[j] = (x[j] - mean) * inv;
      y[j] = xh[j] * gain->data[static_cast<size_t>(j)] + bias->data[static_cast<size_t>(j)];
    }
  }
  std::function<void()> back;
  if (out->requires_grad) {
    back = [a, gain, bias, out, xhat, inv_std, rows, cols]() {
      if (out->grad.empty()) return;
      std::vector<double> gy(static_cast<size_t>(cols));
      for (int r = 0; r < rows; ++r) {
        const double* g = out->grad.data() + static_cast<size_t>(r) * cols;
        const double* xh = xhat->data() + static_cast<size_t>(r) * cols;
        if (gain->requires_grad) {
          gain->ensure_grad();
          for (int j = 0; j < cols; ++j) gain->grad[static_cast<size_t>(j)] += g[j] * xh[j];
        }
        if (bias->requires_grad) {
          bias->ensure_grad();
          for (int j = 0; j < cols; ++j) bias->grad[static_cast<size_t>(j)] += g[j];
        }
        if (a->requires_grad) {
          a->ensure_grad();
          double* gx = a->grad.data() + static_cast<size_t>(r) * cols;
          double mean_gy = 0.0, mean_gy_xh = 0.0;
          for (int j = 0; j < cols; ++j) {
            gy[static_cast<size_t>(j)] = g[j] * gain->data[static_cast<size_t>(j)];
            mean_gy += gy[static_cast<size_t>(j)];
            mean_gy_xh += gy[static_cast<size_t>(j)] * xh[j];
          }
          mean_gy /= cols;
          mean_gy_xh /= cols;
          const double inv = (*inv_std)[static_cast<size_t>(r)];
          for (int j = 0; j < cols; ++j) {
            gx[j] += inv * (gy[static_cast<size_t>(j)] - mean_gy - xh[j] * mean_gy_xh);
          }
        }
      }
    };
  }
  return record("layer_norm", std::move(out), std::move(back));
}

TensorPtr Tape::softmax_lastdim(const TensorPtr& a) {
  const int cols = a->cols();
  const int rows = static_cast<int>(a->size()) / cols;
  auto out = make_tensor(a->shape, a->requires_grad);
  for (int r = 0; r < rows; ++r) {
    const double* x = a->data.data() + static_cast<size_t>(r) * cols;
    double* y = out->data.data() + static_cast<size_t>(r) * cols;
    double mx = x[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double s = 0.0;
    for (int j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    const double inv = 1.0 / s;
    for (int j = 0; j < cols; ++j) y[j] *= inv;
  }
  std::function<void()> back;
  if (out->requires_grad) {
    back = [a, out, rows, cols]() {
      if (out->grad.empty()) return;
      a->ensure_grad();
      for (int r = 0; r < rows; ++r) {
        const double* y = out->data.data() + static_cast<size_t>(r) * cols;
        const double* g = out->grad.data() + static_cast<size_t>(r) * cols;
        double* gx = a->grad.data() + static_cast<size_t>(r) * cols;
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += g[j] * y[j];
        for (int j = 0; j < cols; ++j) gx[j] += y[j] * (g[j] - dot);
      }
    };
  }
  return record("softmax_lastdim", std::move(out), std::move(back));
}

TensorPtr Tape::gelu(const TensorPtr& a) {
  constexpr double inv_sqrt2 = std::numbers::sqrt2 / 2.0;
  auto out = make_tensor(a->shape, a->requires_grad);
  for (size_t i = 0; i < a->size(); ++i) {
    const double x = a->data[i];
    out->data[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
  }
  std::function<void()> back;
  if (out->requires_grad) {
    back = [a, out]() {
      if (out->grad.empty()) return;
      a->ensure_grad();
      constexpr double inv_sqrt2pi = 0.3989422804014326779;  // 1/sqrt(2*pi)
      for (size_t i = 0; i < out->grad.size(); ++i) {
        const double x = a->data[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
        a->grad[i] += out->grad[i] * (cdf + x * pdf);
      }
    };
  }
  return record("gelu", std::move(out), std::move(back));
}

TensorPtr Tape::relu(const TensorPtr& a) {
  auto out = make_tensor(a->shape, a->requires_grad);
  for (size_t i = 0; i < a->size(); ++i) out->data[i] = std::max(0.0, a->data[i]);
  std::function<void()> back;
  if (out->requires_grad) {
    back = [a, out]() {
      if (out->grad.empty()) return;
      a->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) {
        if (a->data[i] > 0.0) a->grad[i] += out->grad[i];
      }
    };
  }
  return record("relu", std::move(out), std::move(back));
}

TensorPtr Tape::embedding_select(const TensorPtr& table, std::vector<int> indices) {
  require_2d(table, "embedding_select table");
  const int rows = table->shape[0], cols = table->shape[1];
  if (indices.empty()) throw ShapeError("embedding_select: empty index list");
  for (int idx : indices) {
    if (idx < 0 || idx >= rows) {
      throw ShapeError("embedding_select: index " + std::to_string(idx) +
                       " out of range for table " + shape_string(*table));
    }
  }
  auto out = make_tensor({static_cast<int>(indices.size()), cols}, table->requires_grad);
  for (size_t i = 0; i < indices.size(); ++i) {
    const double* src = table->data.data() + static_cast<size_t>(indices[i]) * cols;
    std::copy(src, src + cols, out->data.data() + i * static_cast<size_t>(cols));
  }
  std::function<void()> back;
  if (out->requires_grad) {
    back = [table, out, indices = std::move(indices), cols]() {
      if (out->grad.empty()) return;
      table->ensure_grad();
      for (size_t i = 0; i < indices.size(); ++i) {
        double* dst = table->grad.data() + static_cast<size_t>(indices[i]) * cols;
        const double* g = out->grad.data() + i * static_cast<size_t>(cols);
        for (int j = 0; j < cols; ++j) dst[j] += g[j];
      }
    };
  }
  return record("embedding_select", std::move(out), std::move(back));
}

TensorPtr Tape::concat_rows(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  int cols = -1, total_rows = 0;
  bool grad = false;
  for (const auto& p : parts) {
    require_2d(p, "concat_rows input");
    if (cols == -1) cols = p->shape[1];
    if (p->shape[1] != cols) {
      throw ShapeError("concat_rows: column mismatch between [..x" + std::to_string(cols) +
                       "] and " + shape_string(*p));
    }
    total_rows += p->shape[0];
    grad = grad || p->requires_grad;
  }
  auto out = make_tensor({total_rows, cols}, grad);
  size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->data.begin(), p->data.end(), out->data.begin() + static_cast<long>(off));
    off += p->size();
  }
  std::function<void()> back;
  if (grad) {
    back = [parts, out]() {
      if (out->grad.empty()) return;
      size_t off = 0;
      for (const auto& p : parts) {
        if (p->requires_grad) {
          p->ensure_grad();
          for (size_t i = 0; i < p->size(); ++i) p->grad[i] += out->grad[off + i];
        }
        off += p->size();
      }
    };
  }
  return record("concat_rows", std::move(out), std::move(back));
}

TensorPtr Tape::concat_cols(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  int rows = -1, total_cols = 0;
  bool grad = false;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols input");
    if (rows == -1) rows = p->shape[0];
    if (p->shape[0] != rows) {
      throw ShapeError("concat_cols: row mismatch between [" + std::to_string(rows) +
                       "x..] and " + shape_string(*p));
    }
    total_cols += p->shape[1];
    grad = grad || p->requires_grad;
  }
  auto out = make_tensor({rows, total_cols}, grad);
  int col_off = 0;
  for (const auto& p : parts) {
    const int pc = p->shape[1];
    for (int r = 0; r < rows; ++r) {
      std::copy(p->data.begin() + static_cast<long>(r) * pc,
                p->data.begin() + static_cast<long>(r + 1) * pc,
                out->data.begin() + static_cast<long>(r) * total_cols + col_off);
    }
    col_off += pc;
  }
  std::function<void()> back;
  if (grad) {
    back = [parts, out, rows, total_cols]() {
      if (out->grad.empty()) return;
      int col_off = 0;
      for (const auto& p : parts) {
        const int pc = p->shape[1];
        if (p->requires_grad) {
          p->ensure_grad();
          for (int r = 0; r < rows; ++r) {
            const double* g = out->grad.data() + static_cast<size_t>(r) * total_cols + col_off;
            double* dst = p->grad.data() + static_cast<size_t>(r) * pc;
            for (int j = 0; j < pc; ++j) dst[j] += g[j];
          }
        }
        col_off += pc;
      }
    };
  }
  return record("concat_cols", std::move(out), std::move(back));
}

TensorPtr Tape::slice_rows(const TensorPtr& a, int begin, int end) {
  require_2d(a, "slice_rows input");
  const int rows = a->shape[0], cols = a->shape[1];
  if (begin < 0 || end > rows || begin >= end) {
    throw ShapeError("slice_rows: bad range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") for " + shape_string(*a));
  }
  auto out = make_tensor({end - begin, cols}, a->requires_grad);
  std::copy(a->data.begin() + static_cast<long>(begin) * cols,
            a->data.begin() + static_cast<long>(end) * cols, out->data.begin());
  std::function<void()> back;
  if (out->requires_grad) {
    back = [a, out, begin, cols]() {
      if (out->grad.empty()) return;
      a->ensure_grad();
      double* dst = a->grad.data() + static_cast<size_t>(begin) * cols;
      for (size_t i = 0; i < out->grad.size(); ++i) dst[i] += out->grad[i];
    };
  }
  return record("slice_rows", std::move(out), std::move(back));
}

TensorPtr Tape::slice_cols(const TensorPtr& a, int begin, int end) {
  require_2d(a, "slice_cols input");
  const int rows = a->shape[0], cols = a->shape[1];
  if (begin < 0 || end > cols || begin >= end) {
    throw ShapeError("slice_cols: bad range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") for " + shape_string(*a));
  }
  const int width = end - begin;
  auto out = make_tensor({rows, width}, a->requires_grad);
  for (int r = 0; r < rows; ++r) {
    const double* src = a->data.data() + static_cast<size_t>(r) * cols + begin;
    std::copy(src, src + width, out->data.data() + static_cast<size_t>(r) * width);
  }
  std::function<void()> back;
  if (out->requires_grad) {
    back = [a, out, begin, cols, width, rows]() {
      if (out->grad.empty()) return;
      a->ensure_grad();
      for (int r = 0; r < rows; ++r) {
        double* dst = a->grad.data() + static_cast<size_t>(r) * cols + begin;
        const double* g = out->grad.data() + static_cast<size_t>(r) * width;
        for (int j = 0; j < width; ++j) dst[j] += g[j];
      }
    };
  }
  return record("slice_cols", std::move(out), std::move(back));
}

TensorPtr Tape::transpose_last2(const TensorPtr& a) {
  require_2d(a, "transpose_last2 input");
  const int rows = a->shape[0], cols = a->shape[1];
  auto out = make_tensor({cols, rows}, a->requires_grad);
  transpose_into(out->data.data(), a->data.data(), rows, cols);
  std::function<void()> back;
  if (out->requires_grad) {
    back = [a, out, rows, cols]() {
      if (out->grad.empty()) return;
      a->ensure_grad();
      for (int i = 0; i < cols; ++i) {
        for (int j = 0; j < rows; ++j) {
          a->grad[static_cast<size_t>(j) * cols + i] += out->grad[static_cast<size_t>(i) * rows + j];
        }
      }
    };
  }
  return record("transpose_last2", std::move(out), std::move(back));
}

TensorPtr Tape::dropout(const TensorPtr& a, double p, Rng& rng, bool train_flag) {
  if (!(p >= 0.0) || p >= 1.0) {
    throw ShapeError("dropout: p must be in [0, 1)");
  }
  if (!train_flag || p == 0.0) {
    auto out = make_tensor(a->shape, a->requires_grad);
    out->data = a->data;
    std::function<void()> back;
    if (out->requires_grad) {
      back = [a, out]() {
        if (out->grad.empty()) return;
        a->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
      };
    }
    return record("dropout", std::move(out), std::move(back));
  }
  auto mask = std::make_shared<std::vector<double>>(a->size());
  const double keep_scale = 1.0 / (1.0 - p);
  std::bernoulli_distribution keep(1.0 - p);
  for (size_t i = 0; i < a->size(); ++i) (*mask)[i] = keep(rng) ? keep_scale : 0.0;
  auto out = make_tensor(a->shape, a->requires_grad);
  for (size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * (*mask)[i];
  std::function<void()> back;
  if (out->requires_grad) {
    back = [a, out, mask]() {
      if (out->grad.empty()) return;
      a->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * (*mask)[i];
    };
  }
  return record("dropout", std::move(out), std::move(back));
}

TensorPtr Tape::cross_entropy(const TensorPtr& logits, int target) {
  const int classes = static_cast<int>(logits->size());
  if (logits->shape.size() > 2 || (logits->shape.size() == 2 && logits->shape[0] != 1)) {
    throw ShapeError("cross_entropy: logits must be a vector, got " + shape_string(*logits));
  }
  if (target < 0 || target >= classes) {
    throw ShapeError("cross_entropy: target " + std::to_string(target) + " out of range for " +
                     std::to_string(classes) + " classes");
  }
  double mx = 0.0;
  const double lse = stable_lse(logits->data.data(), classes, mx);
  auto out = make_tensor({1}, logits->requires_grad);
  out->data[0] = lse - logits->data[static_cast<size_t>(target)];
  std::function<void()> back;
  if (out->requires_grad) {
    back = [logits, out, target, lse]() {
      if (out->grad.empty()) return;
      logits->ensure_grad();
      const double g = out->grad[0];
      for (size_t j = 0; j < logits->size(); ++j) {
        const double p = std::exp(logits->data[j] - lse);
        logits->grad[j] += g * (p - (static_cast<int>(j) == target ? 1.0 : 0.0));
      }
    };
  }
  return record("cross_entropy", std::move(out), std::move(back));
}

TensorPtr Tape::sum(const TensorPtr& a) {
  auto out = make_tensor({1}, a->requires_grad);
  double s = 0.0;
  for (double v : a->data) s += v;
  out->data[0] = s;
  std::function<void()> back;
  if (out->requires_grad) {
    back = [a, out]() {
      if (out->grad.empty()) return;
      a->ensure_grad();
      for (size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[0];
    };
  }
  return record("sum", std::move(out), std::move(back));
}

void Tape::backward(const TensorPtr& loss, double seed) {
  if (!loss->is_scalar()) {
    throw ShapeError("backward: loss must be scalar, got " + shape_string(*loss));
  }
  bool on_tape = false;
  for (const Node& n : nodes_) {
    if (n.out == loss) {
      on_tape = true;
      break;
    }
  }
  if (!on_tape) {
    throw Error("backward: loss tensor was not produced by this tape");
  }
  loss->ensure_grad();
  loss->grad[0] = seed;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->back) it->back();
  }
}

void zero_grads(std::span<const TensorPtr> params) {
  for (const auto& p : params) p->zero_grad();
}

double gradcheck(const LossFn& f, std::span<const TensorPtr> params, double h) {
  if (!(h > 0.0)) throw NumericError("gradcheck: step h must be positive");

  std::vector<std::vector<double>> analytic;
  {
    zero_grads(params);
    Tape tape;
    TensorPtr loss = f(tape);
    if (!loss->is_scalar()) {
      throw ShapeError("gradcheck: f must produce a scalar, got " + shape_string(*loss));
    }
    tape.backward(loss);
    for (const auto& p : params) {
      p->ensure_grad();
      analytic.push_back(p->grad);
    }
  }

  auto value_at = [&]() {
    Tape tape;
    TensorPtr loss = f(tape);
    const double v = loss->data[0];
    if (!std::isfinite(v)) throw NumericError("gradcheck: non-finite loss value");
    return v;
  };

  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    for (size_t i = 0; i < p.size(); ++i) {
      const double orig = p.data[i];
      p.data[i] = orig + h;
      const double f_plus = value_at();
      p.data[i] = orig - h;
      const double f_minus = value_at();
      p.data[i] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  zero_grads(params);
  return max_rel;
}

}  // namespace egoact::nn
