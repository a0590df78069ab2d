#include "daner/graph.hpp"

#include <cmath>
#include <memory>

#include "daner/error.hpp"

namespace daner {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

template <typename T>
NodeId Graph<T>::emplace(Tensor<T> value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.grad = Tensor<T>(n.value.shape());
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename T>
NodeId Graph<T>::input(Tensor<T> value) {
  return emplace(std::move(value), false);
}

template <typename T>
NodeId Graph<T>::param(const Tensor<T>& value) {
  return emplace(value, true);
}

template <typename T>
const Tensor<T>& Graph<T>::grad(NodeId id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) fail(ErrorKind::InvalidConfig, "node does not track gradients");
  return n.grad;
}

template <typename T>
void Graph<T>::backward(NodeId root) {
  Node& r = node(root);
  if (r.value.size() != 1) fail(ErrorKind::ShapeMismatch, "backward root must be a scalar");
  if (backward_done_) fail(ErrorKind::InvalidConfig, "backward already run on this graph");
  backward_done_ = true;
  if (!r.requires_grad) return;  // nothing differentiable upstream
  r.grad[0] = T(1);
  for (NodeId id = root; id >= 0; --id) {
    Node& n = node(id);
    if (n.requires_grad && n.backprop) n.backprop();
  }
}

template <typename T>
NodeId Graph<T>::matmul(NodeId a, NodeId b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  if (bv.rank() != 2 || av.rank() < 1 || av.last_dim() != bv.dim(0))
    fail(ErrorKind::ShapeMismatch,
         "matmul " + shape_string(av) + " x " + shape_string(bv));
  const std::int64_t rows = av.rows();
  const int k_dim = bv.dim(0);
  const int n_dim = bv.dim(1);

  std::vector<int> out_shape = av.shape();
  out_shape.back() = n_dim;
  Tensor<T> out(out_shape);
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* arow = av.data() + r * k_dim;
    T* orow = out.data() + r * n_dim;
    for (int k = 0; k < k_dim; ++k) {
      const T s = arow[k];
      const T* brow = bv.data() + static_cast<std::int64_t>(k) * n_dim;
      for (int n = 0; n < n_dim; ++n) orow[n] += s * brow[n];
    }
  }

  bool rg = requires_grad(a) || requires_grad(b);
  NodeId id = emplace(std::move(out), rg);
  if (rg) {
    node(id).backprop = [this, id, a, b, rows, k_dim, n_dim] {
      const Tensor<T>& g = grad_ref(id);
      const Tensor<T>& av2 = value(a);
      const Tensor<T>& bv2 = value(b);
      if (requires_grad(a)) {
        Tensor<T>& ga = grad_ref(a);
        // dA = g . B^T ; transpose B once for contiguous inner loops
        Tensor<T> bt({n_dim, k_dim});
        for (int k = 0; k < k_dim; ++k)
          for (int n = 0; n < n_dim; ++n)
            bt[static_cast<std::int64_t>(n) * k_dim + k] =
                bv2[static_cast<std::int64_t>(k) * n_dim + n];
        for (std::int64_t r = 0; r < rows; ++r) {
          const T* grow = g.data() + r * n_dim;
          T* garow = ga.data() + r * k_dim;
          for (int n = 0; n < n_dim; ++n) {
            const T s = grow[n];
            const T* btrow = bt.data() + static_cast<std::int64_t>(n) * k_dim;
            for (int k = 0; k < k_dim; ++k) garow[k] += s * btrow[k];
          }
        }
      }
      if (requires_grad(b)) {
        Tensor<T>& gb = grad_ref(b);
        for (std::int64_t r = 0; r < rows; ++r) {
          const T* arow = av2.data() + r * k_dim;
          const T* grow = g.data() + r * n_dim;
          for (int k = 0; k < k_dim; ++k) {
            const T s = arow[k];
            T* gbrow = gb.data() + static_cast<std::int64_t>(k) * n_dim;
            for (int n = 0; n < n_dim; ++n) gbrow[n] += s * grow[n];
          }
        }
      }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::add(NodeId a, NodeId b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  const bool same = av.same_shape(bv);
  if (!same) {
    // b must be a trailing suffix of a
    if (bv.rank() > av.rank())
      fail(ErrorKind::ShapeMismatch, "add " + shape_string(av) + " + " + shape_string(bv));
    for (int i = 0; i < bv.rank(); ++i)
      if (bv.dim(bv.rank() - 1 - i) != av.dim(av.rank() - 1 - i))
        fail(ErrorKind::ShapeMismatch, "add " + shape_string(av) + " + " + shape_string(bv));
  }
  const std::int64_t bsize = bv.size();
  Tensor<T> out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i % bsize];

  bool rg = requires_grad(a) || requires_grad(b);
  NodeId id = emplace(std::move(out), rg);
  if (rg) {
    node(id).backprop = [this, id, a, b, bsize] {
      const Tensor<T>& g = grad_ref(id);
      if (requires_grad(a)) {
        Tensor<T>& ga = grad_ref(a);
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (requires_grad(b)) {
        Tensor<T>& gb = grad_ref(b);
        for (std::int64_t i = 0; i < g.size(); ++i) gb[i % bsize] += g[i];
      }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::scale(NodeId a, T factor) {
  const Tensor<T>& av = value(a);
  Tensor<T> out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out[i] = factor * av[i];
  bool rg = requires_grad(a);
  NodeId id = emplace(std::move(out), rg);
  if (rg) {
    node(id).backprop = [this, id, a, factor] {
      const Tensor<T>& g = grad_ref(id);
      Tensor<T>& ga = grad_ref(a);
      for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::gelu(NodeId a) {
  const Tensor<T>& av = value(a);
  Tensor<T> out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) {
    const double x = static_cast<double>(av[i]);
    out[i] = static_cast<T>(0.5 * x * (1.0 + std::erf(x * kInvSqrt2)));
  }
  bool rg = requires_grad(a);
  NodeId id = emplace(std::move(out), rg);
  if (rg) {
    node(id).backprop = [this, id, a] {
      const Tensor<T>& g = grad_ref(id);
      const Tensor<T>& av2 = value(a);
      Tensor<T>& ga = grad_ref(a);
      for (std::int64_t i = 0; i < g.size(); ++i) {
        const double x = static_cast<double>(av2[i]);
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        ga[i] += g[i] * static_cast<T>(cdf + x * pdf);
      }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::softmax(NodeId a) {
  const Tensor<T>& av = value(a);
  const int cols = av.last_dim();
  const std::int64_t rows = av.rows();
  if (cols < 1) fail(ErrorKind::ShapeMismatch, "softmax over empty dim");
  Tensor<T> out(av.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * cols;
    T* y = out.data() + r * cols;
    T m = x[0];
    for (int c = 1; c < cols; ++c) m = std::max(m, x[c]);
    T sum = T(0);
    for (int c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - m);
      sum += y[c];
    }
    for (int c = 0; c < cols; ++c) y[c] /= sum;
  }
  bool rg = requires_grad(a);
  NodeId id = emplace(std::move(out), rg);
  if (rg) {
    node(id).backprop = [this, id, a, rows, cols] {
      const Tensor<T>& g = grad_ref(id);
      const Tensor<T>& y = value(id);
      Tensor<T>& ga = grad_ref(a);
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* grow = g.data() + r * cols;
        const T* yrow = y.data() + r * cols;
        T dot = T(0);
        for (int c = 0; c < cols; ++c) dot += grow[c] * yrow[c];
        T* garow = ga.data() + r * cols;
        for (int c = 0; c < cols; ++c) garow[c] += yrow[c] * (grow[c] - dot);
      }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::log_softmax(NodeId a) {
  const Tensor<T>& av = value(a);
  const int cols = av.last_dim();
  const std::int64_t rows = av.rows();
  if (cols < 1) fail(ErrorKind::ShapeMismatch, "log_softmax over empty dim");
  Tensor<T> out(av.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * cols;
    T* y = out.data() + r * cols;
    T m = x[0];
    for (int c = 1; c < cols; ++c) m = std::max(m, x[c]);
    T sum = T(0);
    for (int c = 0; c < cols; ++c) sum += std::exp(x[c] - m);
    const T lse = m + std::log(sum);
    for (int c = 0; c < cols; ++c) y[c] = x[c] - lse;
  }
  bool rg = requires_grad(a);
  NodeId id = emplace(std::move(out), rg);
  if (rg) {
    node(id).backprop = [this, id, a, rows, cols] {
      const Tensor<T>& g = grad_ref(id);
      const Tensor<T>& y = value(id);
      Tensor<T>& ga = grad_ref(a);
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* grow = g.data() + r * cols;
        const T* yrow = y.data() + r * cols;
        T gsum = T(0);
        for (int c = 0; c < cols; ++c) gsum += grow[c];
        T* garow = ga.data() + r * cols;
        for (int c = 0; c < cols; ++c) garow[c] += grow[c] - std::exp(yrow[c]) * gsum;
      }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::layer_norm(NodeId x, NodeId gain, NodeId shift, T eps) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& gv = value(gain);
  const Tensor<T>& sv = value(shift);
  const int cols = xv.last_dim();
  const std::int64_t rows = xv.rows();
  if (gv.size() != cols || sv.size() != cols)
    fail(ErrorKind::ShapeMismatch, "layer_norm gain/shift must match the last dim");

  // normalized values and the per-row inverse stddev are reused in backward
  auto xhat = std::make_shared<Tensor<T>>(xv.shape());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
  Tensor<T> out(xv.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * cols;
    T mean = T(0);
    for (int c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<T>(cols);
    T var = T(0);
    for (int c = 0; c < cols; ++c) {
      const T d = xr[c] - mean;
      var += d * d;
    }
    var /= static_cast<T>(cols);
    const T inv = T(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(r)] = inv;
    T* hr = xhat->data() + r * cols;
    T* yr = out.data() + r * cols;
    for (int c = 0; c < cols; ++c) {
      hr[c] = (xr[c] - mean) * inv;
      yr[c] = gv[c] * hr[c] + sv[c];
    }
  }

  bool rg = requires_grad(x) || requires_grad(gain) || requires_grad(shift);
  NodeId id = emplace(std::move(out), rg);
  if (rg) {
    node(id).backprop = [this, id, x, gain, shift, rows, cols, xhat, inv_std] {
      const Tensor<T>& g = grad_ref(id);
      const Tensor<T>& gv2 = value(gain);
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* grow = g.data() + r * cols;
        const T* hrow = xhat->data() + r * cols;
        if (requires_grad(gain)) {
          Tensor<T>& gg = grad_ref(gain);
          for (int c = 0; c < cols; ++c) gg[c] += grow[c] * hrow[c];
        }
        if (requires_grad(shift)) {
          Tensor<T>& gs = grad_ref(shift);
          for (int c = 0; c < cols; ++c) gs[c] += grow[c];
        }
        if (requires_grad(x)) {
          Tensor<T>& gx = grad_ref(x);
          T sum_dh = T(0), sum_dh_h = T(0);
          for (int c = 0; c < cols; ++c) {
            const T dh = grow[c] * gv2[c];
            sum_dh += dh;
            sum_dh_h += dh * hrow[c];
          }
          const T mean_dh = sum_dh / static_cast<T>(cols);
          const T mean_dh_h = sum_dh_h / static_cast<T>(cols);
          const T inv = (*inv_std)[static_cast<std::size_t>(r)];
          T* gxrow = gx.data() + r * cols;
          for (int c = 0; c < cols; ++c) {
            const T dh = grow[c] * gv2[c];
            gxrow[c] += inv * (dh - mean_dh - hrow[c] * mean_dh_h);
          }
        }
      }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::dropout(NodeId x, double rate) {
  if (rate < 0.0 || rate >= 1.0) fail(ErrorKind::InvalidConfig, "dropout rate must be in [0, 1)");
  if (rate == 0.0) return x;  // identity
  const Tensor<T>& xv = value(x);
  auto keep = std::make_shared<Tensor<T>>(xv.shape());
  const T scale_up = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> out(xv.shape());
  for (std::int64_t i = 0; i < xv.size(); ++i) {
    const T m = rng_.uniform() < rate ? T(0) : scale_up;
    (*keep)[i] = m;
    out[i] = xv[i] * m;
  }
  bool rg = requires_grad(x);
  NodeId id = emplace(std::move(out), rg);
  if (rg) {
    node(id).backprop = [this, id, x, keep] {
      const Tensor<T>& g = grad_ref(id);
      Tensor<T>& gx = grad_ref(x);
      for (std::int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*keep)[i];
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::embedding(NodeId table, const std::vector<std::int32_t>& ids, int rows,
                           int cols) {
  const Tensor<T>& tv = value(table);
  if (tv.rank() != 2) fail(ErrorKind::ShapeMismatch, "embedding table must be rank 2");
  if (static_cast<std::int64_t>(ids.size()) != static_cast<std::int64_t>(rows) * cols)
    fail(ErrorKind::ShapeMismatch, "embedding ids do not match rows*cols");
  const int vocab = tv.dim(0);
  const int width = tv.dim(1);
  for (std::int32_t v : ids)
    if (v < 0 || v >= vocab)
      fail(ErrorKind::OutOfRange, "embedding id " + std::to_string(v) + " outside vocab");

  Tensor<T> out({rows, cols, width});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const T* src = tv.data() + static_cast<std::int64_t>(ids[i]) * width;
    T* dst = out.data() + static_cast<std::int64_t>(i) * width;
    for (int c = 0; c < width; ++c) dst[c] = src[c];
  }
  bool rg = requires_grad(table);
  NodeId id = emplace(std::move(out), rg);
  if (rg) {
    node(id).backprop = [this, id, table, ids, width] {
      const Tensor<T>& g = grad_ref(id);
      Tensor<T>& gt = grad_ref(table);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const T* src = g.data() + static_cast<std::int64_t>(i) * width;
        T* dst = gt.data() + static_cast<std::int64_t>(ids[i]) * width;
        for (int c = 0; c < width; ++c) dst[c] += src[c];
      }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::masked_mean_pool(NodeId x, const std::vector<std::uint8_t>& mask) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() != 3) fail(ErrorKind::ShapeMismatch, "masked_mean_pool expects [B, T, D]");
  const int b_dim = xv.dim(0), t_dim = xv.dim(1), d_dim = xv.dim(2);
  if (static_cast<std::int64_t>(mask.size()) != static_cast<std::int64_t>(b_dim) * t_dim)
    fail(ErrorKind::ShapeMismatch, "mask size does not match [B, T]");

  auto counts = std::make_shared<std::vector<T>>(static_cast<std::size_t>(b_dim), T(0));
  for (int b = 0; b < b_dim; ++b) {
    int c = 0;
    for (int t = 0; t < t_dim; ++t)
      if (mask[static_cast<std::size_t>(b) * t_dim + t]) ++c;
    if (c == 0) fail(ErrorKind::EmptyBatch, "row " + std::to_string(b) + " has no real tokens");
    (*counts)[static_cast<std::size_t>(b)] = static_cast<T>(c);
  }

  Tensor<T> out({b_dim, d_dim});
  for (int b = 0; b < b_dim; ++b) {
    T* orow = out.data() + static_cast<std::int64_t>(b) * d_dim;
    for (int t = 0; t < t_dim; ++t) {
      if (!mask[static_cast<std::size_t>(b) * t_dim + t]) continue;
      const T* xrow = xv.data() + (static_cast<std::int64_t>(b) * t_dim + t) * d_dim;
      for (int d = 0; d < d_dim; ++d) orow[d] += xrow[d];
    }
    const T inv = T(1) / (*counts)[static_cast<std::size_t>(b)];
    for (int d = 0; d < d_dim; ++d) orow[d] *= inv;
  }

  bool rg = requires_grad(x);
  NodeId id = emplace(std::move(out), rg);
  if (rg) {
    node(id).backprop = [this, id, x, mask, counts, b_dim, t_dim, d_dim] {
      const Tensor<T>& g = grad_ref(id);
      Tensor<T>& gx = grad_ref(x);
      for (int b = 0; b < b_dim; ++b) {
        const T inv = T(1) / (*counts)[static_cast<std::size_t>(b)];
        const T* grow = g.data() + static_cast<std::int64_t>(b) * d_dim;
        for (int t = 0; t < t_dim; ++t) {
          if (!mask[static_cast<std::size_t>(b) * t_dim + t]) continue;
          T* gxrow = gx.data() + (static_cast<std::int64_t>(b) * t_dim + t) * d_dim;
          for (int d = 0; d < d_dim; ++d) gxrow[d] += grow[d] * inv;
        }
      }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::concat_last(NodeId a, NodeId b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  if (av.rank() != bv.rank() || av.rank() < 1)
    fail(ErrorKind::ShapeMismatch, "concat_last rank mismatch");
  for (int i = 0; i + 1 < av.rank(); ++i)
    if (av.dim(i) != bv.dim(i)) fail(ErrorKind::ShapeMismatch, "concat_last leading dims differ");
  const int da = av.last_dim(), db = bv.last_dim();
  const std::int64_t rows = av.rows();

  std::vector<int> out_shape = av.shape();
  out_shape.back() = da + db;
  Tensor<T> out(out_shape);
  for (std::int64_t r = 0; r < rows; ++r) {
    T* orow = out.data() + r * (da + db);
    const T* arow = av.data() + r * da;
    const T* brow = bv.data() + r * db;
    for (int i = 0; i < da; ++i) orow[i] = arow[i];
    for (int i = 0; i < db; ++i) orow[da + i] = brow[i];
  }

  bool rg = requires_grad(a) || requires_grad(b);
  NodeId id = emplace(std::move(out), rg);
  if (rg) {
    node(id).backprop = [this, id, a, b, rows, da, db] {
      const Tensor<T>& g = grad_ref(id);
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* grow = g.data() + r * (da + db);
        if (requires_grad(a)) {
          T* garow = grad_ref(a).data() + r * da;
          for (int i = 0; i < da; ++i) garow[i] += grow[i];
        }
        if (requires_grad(b)) {
          T* gbrow = grad_ref(b).data() + r * db;
          for (int i = 0; i < db; ++i) gbrow[i] += grow[da + i];
        }
      }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::split_heads(NodeId x, int n_heads) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() != 3) fail(ErrorKind::ShapeMismatch, "split_heads expects [B, T, D]");
  const int b_dim = xv.dim(0), t_dim = xv.dim(1), d_dim = xv.dim(2);
  if (n_heads < 1 || d_dim % n_heads != 0)
    fail(ErrorKind::InvalidConfig, "model width must divide evenly into heads");
  const int dh = d_dim / n_heads;

  Tensor<T> out({b_dim, n_heads, t_dim, dh});
  for (int b = 0; b < b_dim; ++b)
    for (int t = 0; t < t_dim; ++t)
      for (int h = 0; h < n_heads; ++h) {
        const T* src = xv.data() + ((static_cast<std::int64_t>(b) * t_dim + t) * d_dim) +
                       static_cast<std::int64_t>(h) * dh;
        T* dst = out.data() +
                 (((static_cast<std::int64_t>(b) * n_heads + h) * t_dim + t) * dh);
        for (int j = 0; j < dh; ++j) dst[j] = src[j];
      }

  bool rg = requires_grad(x);
  NodeId id = emplace(std::move(out), rg);
  if (rg) {
    node(id).backprop = [this, id, x, b_dim, t_dim, n_heads, dh, d_dim] {
      const Tensor<T>& g = grad_ref(id);
      Tensor<T>& gx = grad_ref(x);
      for (int b = 0; b < b_dim; ++b)
        for (int t = 0; t < t_dim; ++t)
          for (int h = 0; h < n_heads; ++h) {
            const T* src = g.data() +
                           (((static_cast<std::int64_t>(b) * n_heads + h) * t_dim + t) * dh);
            T* dst = gx.data() + ((static_cast<std::int64_t>(b) * t_dim + t) * d_dim) +
                     static_cast<std::int64_t>(h) * dh;
            for (int j = 0; j < dh; ++j) dst[j] += src[j];
          }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::merge_heads(NodeId x) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() != 4) fail(ErrorKind::ShapeMismatch, "merge_heads expects [B, H, T, dh]");
  const int b_dim = xv.dim(0), n_heads = xv.dim(1), t_dim = xv.dim(2), dh = xv.dim(3);
  const int d_dim = n_heads * dh;

  Tensor<T> out({b_dim, t_dim, d_dim});
  for (int b = 0; b < b_dim; ++b)
    for (int h = 0; h < n_heads; ++h)
      for (int t = 0; t < t_dim; ++t) {
        const T* src = xv.data() +
                       (((static_cast<std::int64_t>(b) * n_heads + h) * t_dim + t) * dh);
        T* dst = out.data() + ((static_cast<std::int64_t>(b) * t_dim + t) * d_dim) +
                 static_cast<std::int64_t>(h) * dh;
        for (int j = 0; j < dh; ++j) dst[j] = src[j];
      }

  bool rg = requires_grad(x);
  NodeId id = emplace(std::move(out), rg);
  if (rg) {
    node(id).backprop = [this, id, x, b_dim, t_dim, n_heads, dh, d_dim] {
      const Tensor<T>& g = grad_ref(id);
      Tensor<T>& gx = grad_ref(x);
      for (int b = 0; b < b_dim; ++b)
        for (int h = 0; h < n_heads; ++h)
          for (int t = 0; t < t_dim; ++t) {
            const T* src = g.data() + ((static_cast<std::int64_t>(b) * t_dim + t) * d_dim) +
                           static_cast<std::int64_t>(h) * dh;
            T* dst = gx.data() +
                     (((static_cast<std::int64_t>(b) * n_heads + h) * t_dim + t) * dh);
            for (int j = 0; j < dh; ++j) dst[j] += src[j];
          }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::attention(NodeId q, NodeId k, NodeId v, const Tensor<T>& additive_mask) {
  const Tensor<T>& qv = value(q);
  const Tensor<T>& kv = value(k);
  const Tensor<T>& vv = value(v);
  if (qv.rank() != 4 || !qv.same_shape(kv) || !qv.same_shape(vv))
    fail(ErrorKind::ShapeMismatch, "attention expects equal [B, H, T, dh] inputs");
  const int b_dim = qv.dim(0), h_dim = qv.dim(1), t_dim = qv.dim(2), dh = qv.dim(3);
  if (additive_mask.size() != static_cast<std::int64_t>(b_dim) * t_dim)
    fail(ErrorKind::ShapeMismatch, "attention mask must have B*T entries");
  const T att_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

  auto weights = std::make_shared<Tensor<T>>(std::vector<int>{b_dim, h_dim, t_dim, t_dim});
  Tensor<T> out({b_dim, h_dim, t_dim, dh});
  std::vector<T> scores(static_cast<std::size_t>(t_dim));
  for (int b = 0; b < b_dim; ++b) {
    const T* mrow = additive_mask.data() + static_cast<std::int64_t>(b) * t_dim;
    for (int h = 0; h < h_dim; ++h) {
      const std::int64_t base = (static_cast<std::int64_t>(b) * h_dim + h) * t_dim;
      for (int i = 0; i < t_dim; ++i) {
        const T* qrow = qv.data() + (base + i) * dh;
        for (int j = 0; j < t_dim; ++j) {
          const T* krow = kv.data() + (base + j) * dh;
          T dot = T(0);
          for (int c = 0; c < dh; ++c) dot += qrow[c] * krow[c];
          scores[static_cast<std::size_t>(j)] = dot * att_scale + mrow[j];
        }
        T m = scores[0];
        for (int j = 1; j < t_dim; ++j) m = std::max(m, scores[static_cast<std::size_t>(j)]);
        T sum = T(0);
        T* arow = weights->data() + (base + i) * t_dim;
        for (int j = 0; j < t_dim; ++j) {
          arow[j] = std::exp(scores[static_cast<std::size_t>(j)] - m);
          sum += arow[j];
        }
        const T inv = T(1) / sum;
        T* orow = out.data() + (base + i) * dh;
        for (int j = 0; j < t_dim; ++j) {
          arow[j] *= inv;
          const T* vrow = vv.data() + (base + j) * dh;
          const T w = arow[j];
          for (int c = 0; c < dh; ++c) orow[c] += w * vrow[c];
        }
      }
    }
  }

  bool rg = requires_grad(q) || requires_grad(k) || requires_grad(v);
  NodeId id = emplace(std::move(out), rg);
  if (rg) {
    node(id).backprop = [this, id, q, k, v, weights, b_dim, h_dim, t_dim, dh, att_scale] {
      const Tensor<T>& g = grad_ref(id);
      const Tensor<T>& qv2 = value(q);
      const Tensor<T>& kv2 = value(k);
      const Tensor<T>& vv2 = value(v);
      std::vector<T> d_att(static_cast<std::size_t>(t_dim));
      for (int b = 0; b < b_dim; ++b) {
        for (int h = 0; h < h_dim; ++h) {
          const std::int64_t base = (static_cast<std::int64_t>(b) * h_dim + h) * t_dim;
          for (int i = 0; i < t_dim; ++i) {
            const T* grow = g.data() + (base + i) * dh;
            const T* arow = weights->data() + (base + i) * t_dim;
            // dV and d(attention weights)
            T dot_sum = T(0);
            for (int j = 0; j < t_dim; ++j) {
              const T* vrow = vv2.data() + (base + j) * dh;
              T dot = T(0);
              for (int c = 0; c < dh; ++c) dot += grow[c] * vrow[c];
              d_att[static_cast<std::size_t>(j)] = dot;
              dot_sum += dot * arow[j];
              if (requires_grad(v)) {
                T* gvrow = grad_ref(v).data() + (base + j) * dh;
                const T w = arow[j];
                for (int c = 0; c < dh; ++c) gvrow[c] += w * grow[c];
              }
            }
            // softmax backward, then into q and k
            for (int j = 0; j < t_dim; ++j) {
              const T ds = arow[j] * (d_att[static_cast<std::size_t>(j)] - dot_sum) * att_scale;
              if (requires_grad(q)) {
                T* gqrow = grad_ref(q).data() + (base + i) * dh;
                const T* krow = kv2.data() + (base + j) * dh;
                for (int c = 0; c < dh; ++c) gqrow[c] += ds * krow[c];
              }
              if (requires_grad(k)) {
                T* gkrow = grad_ref(k).data() + (base + j) * dh;
                const T* qrow = qv2.data() + (base + i) * dh;
                for (int c = 0; c < dh; ++c) gkrow[c] += ds * qrow[c];
              }
            }
          }
        }
      }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::gradient_reversal(NodeId x, T lambda) {
  if (!(lambda > T(0))) fail(ErrorKind::InvalidConfig, "gradient_reversal lambda must be > 0");
  const Tensor<T>& xv = value(x);
  Tensor<T> out = xv;  // forward is the identity, bitwise
  bool rg = requires_grad(x);
  NodeId id = emplace(std::move(out), rg);
  if (rg) {
    node(id).backprop = [this, id, x, lambda] {
      const Tensor<T>& g = grad_ref(id);
      Tensor<T>& gx = grad_ref(x);
      for (std::int64_t i = 0; i < g.size(); ++i) gx[i] += -lambda * g[i];
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::nll_loss(NodeId log_probs, const std::vector<std::int32_t>& targets,
                          std::int32_t ignore, bool* all_ignored) {
  const Tensor<T>& lp = value(log_probs);
  const int cols = lp.last_dim();
  const std::int64_t rows = lp.rows();
  if (static_cast<std::int64_t>(targets.size()) != rows)
    fail(ErrorKind::ShapeMismatch, "nll_loss targets must match log-prob rows");

  std::int64_t count = 0;
  double total = 0.0;
  for (std::int64_t i = 0; i < rows; ++i) {
    const std::int32_t t = targets[static_cast<std::size_t>(i)];
    if (t == ignore) continue;
    if (t < 0 || t >= cols)
      fail(ErrorKind::TargetOutOfRange, "target " + std::to_string(t) + " outside [0, " +
                                            std::to_string(cols) + ")");
    total -= static_cast<double>(lp[i * cols + t]);
    ++count;
  }
  if (all_ignored) *all_ignored = (count == 0);
  Tensor<T> out = Tensor<T>::scalar(count == 0 ? T(0) : static_cast<T>(total / count));

  bool rg = requires_grad(log_probs) && count > 0;
  NodeId id = emplace(std::move(out), requires_grad(log_probs));
  if (rg) {
    node(id).backprop = [this, id, log_probs, targets, ignore, cols, count] {
      const T gscale = grad_ref(id)[0] / static_cast<T>(count);
      Tensor<T>& glp = grad_ref(log_probs);
      for (std::size_t i = 0; i < targets.size(); ++i) {
        const std::int32_t t = targets[i];
        if (t == ignore) continue;
        glp[static_cast<std::int64_t>(i) * cols + t] -= gscale;
      }
    };
  }
  return id;
}

template <typename T>
NodeId Graph<T>::weighted_sum(NodeId x, const Tensor<T>& weights) {
  const Tensor<T>& xv = value(x);
  if (!xv.same_shape(weights)) fail(ErrorKind::ShapeMismatch, "weighted_sum shape mismatch");
  double total = 0.0;
  for (std::int64_t i = 0; i < xv.size(); ++i)
    total += static_cast<double>(xv[i]) * static_cast<double>(weights[i]);
  bool rg = requires_grad(x);
  NodeId id = emplace(Tensor<T>::scalar(static_cast<T>(total)), rg);
  if (rg) {
    node(id).backprop = [this, id, x, weights] {
      const T g = grad_ref(id)[0];
      Tensor<T>& gx = grad_ref(x);
      for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] += g * weights[i];
    };
  }
  return id;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace daner
