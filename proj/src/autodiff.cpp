#include "lungdn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "lungdn/errors.hpp"
#include "lungdn/kernels.hpp"

namespace lungdn::nn {

template <class Real>
Var<Real> Tape<Real>::constant(Tensor<Real> value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<Real>(this, static_cast<int>(nodes_.size() - 1));
}

template <class Real>
Var<Real> Tape<Real>::param(Parameter<Real>& p) {
  Node node;
  node.param = &p;
  node.needs_grad = record_ && p.trainable;
  nodes_.push_back(std::move(node));
  return Var<Real>(this, static_cast<int>(nodes_.size() - 1));
}

template <class Real>
Var<Real> Tape<Real>::push(Tensor<Real> value, std::vector<int> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericFault("non-finite value produced by forward op");
  Node node;
  node.value = std::move(value);
  if (record_) {
    node.needs_grad = std::any_of(inputs.begin(), inputs.end(), [&](int i) { return nodes_.at(i).needs_grad; });
    if (node.needs_grad) {
      node.inputs = std::move(inputs);
      node.backward = std::move(backward);
    }
  }
  nodes_.push_back(std::move(node));
  return Var<Real>(this, static_cast<int>(nodes_.size() - 1));
}

template <class Real>
Tensor<Real>& Tape<Real>::grad(int id) {
  Node& node = nodes_.at(id);
  if (node.param) return node.param->grad;
  if (node.grad.empty() && !node.value.empty()) node.grad = Tensor<Real>(node.value.shape());
  return node.grad;
}

template <class Real>
void Tape<Real>::backward(const Var<Real>& loss) {
  if (!record_) throw TapeError("backward on a tape that did not record the forward pass");
  if (consumed_) throw TapeError("backward called twice on one tape; re-run the forward pass");
  if (&loss.tape() != this) throw TapeError("loss does not belong to this tape");
  if (loss.value().size() != 1) throw ShapeError("backward needs a scalar loss, got " + shape_string(loss.shape()));
  consumed_ = true;
  if (!nodes_.at(loss.id()).needs_grad) return;
  grad(loss.id())[0] = Real(1);
  for (int id = loss.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.needs_grad || !node.backward || node.grad.empty()) continue;
    node.backward(*this, id);
  }
}

template class Tape<float>;
template class Tape<double>;

namespace ops {
namespace {

template <class Real>
void require_rank(const Tensor<Real>& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " + shape_string(t.shape()));
}

template <class Real>
void require_same_tape(const Var<Real>& a, const Var<Real>& b) {
  if (&a.tape() != &b.tape()) throw TapeError("operands recorded on different tapes");
}

// w: (rows x cols) row-major -> (cols x rows)
template <class Real>
std::vector<Real> transposed(const Real* w, std::size_t rows, std::size_t cols) {
  std::vector<Real> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = w[r * cols + c];
  return t;
}

}  // namespace

template <class Real>
Var<Real> conv1d(const Var<Real>& xv, const Var<Real>& wv, const Var<Real>& bv, std::size_t stride) {
  require_same_tape(xv, wv);
  require_same_tape(xv, bv);
  const Tensor<Real>& x = xv.value();
  const Tensor<Real>& w = wv.value();
  const Tensor<Real>& b = bv.value();
  require_rank(x, 3, "conv1d input");
  require_rank(w, 3, "conv1d kernel");
  require_rank(b, 1, "conv1d bias");
  const std::size_t batch = x.dim(0), len = x.dim(1), cin = x.dim(2);
  const std::size_t ksize = w.dim(0), cout = w.dim(2);
  if (w.dim(1) != cin) throw ShapeError("conv1d: input has " + std::to_string(cin) + " channels, kernel expects " + std::to_string(w.dim(1)));
  if (b.dim(0) != cout) throw ShapeError("conv1d: bias length does not match filter count");
  if (stride == 0 || len == 0 || batch == 0) throw ShapeError("conv1d: empty input or zero stride");

  const std::size_t out_len = (len + stride - 1) / stride;
  const std::size_t needed = (out_len - 1) * stride + ksize;
  const std::size_t pad_total = needed > len ? needed - len : 0;
  const std::size_t pad_left = pad_total / 2;
  const std::size_t padded_len = len + pad_total;
  const std::size_t window = ksize * cin;

  Tensor<Real> y({batch, out_len, cout});
  std::vector<Real> xp(padded_len * cin, Real(0));
  for (std::size_t bi = 0; bi < batch; ++bi) {
    std::copy_n(x.data() + bi * len * cin, len * cin, xp.begin() + pad_left * cin);
    Real* yb = y.data() + bi * out_len * cout;
    for (std::size_t t = 0; t < out_len; ++t) std::copy_n(b.data(), cout, yb + t * cout);
    kernels::gemm_nn<Real>(out_len, cout, window, xp.data(), stride * cin, w.data(), cout, yb, cout);
  }

  const int xi = xv.id(), wi = wv.id(), bi_ = bv.id();
  return xv.tape().push(std::move(y), {xi, wi, bi_}, [=](Tape<Real>& tape, int self) {
    const Tensor<Real>& dy = tape.grad(self);
    const Tensor<Real>& xval = tape.value(xi);
    const Tensor<Real>& wval = tape.value(wi);
    if (tape.needs_grad(wi)) {
      Tensor<Real>& dw = tape.grad(wi);
      std::vector<Real> pad(padded_len * cin, Real(0));
      for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(xval.data() + b * len * cin, len * cin, pad.begin() + pad_left * cin);
        kernels::gemm_tn<Real>(out_len, cout, window, pad.data(), stride * cin,
                               dy.data() + b * out_len * cout, cout, dw.data(), cout);
      }
    }
    if (tape.needs_grad(bi_)) {
      Real* db = tape.grad(bi_).data();
      for (std::size_t r = 0; r < batch * out_len; ++r)
        for (std::size_t c = 0; c < cout; ++c) db[c] += dy[r * cout + c];
    }
    if (tape.needs_grad(xi)) {
      Tensor<Real>& dx = tape.grad(xi);
      const std::vector<Real> wt = transposed(wval.data(), window, cout);
      std::vector<Real> dpad(padded_len * cin);
      for (std::size_t b = 0; b < batch; ++b) {
        std::fill(dpad.begin(), dpad.end(), Real(0));
        // Rows of dpad overlap (ldc = stride * cin < window); the kernel
        // contract allows that.
        kernels::gemm_nn<Real>(out_len, window, cout, dy.data() + b * out_len * cout, cout, wt.data(),
                               window, dpad.data(), stride * cin);
        Real* dxb = dx.data() + b * len * cin;
        const Real* src = dpad.data() + pad_left * cin;
        for (std::size_t i = 0; i < len * cin; ++i) dxb[i] += src[i];
      }
    }
  });
}

template <class Real>
Var<Real> dense(const Var<Real>& xv, const Var<Real>& wv, const Var<Real>& bv) {
  require_same_tape(xv, wv);
  require_same_tape(xv, bv);
  const Tensor<Real>& x = xv.value();
  const Tensor<Real>& w = wv.value();
  const Tensor<Real>& b = bv.value();
  require_rank(x, 3, "dense input");
  require_rank(w, 2, "dense kernel");
  require_rank(b, 1, "dense bias");
  const std::size_t din = w.dim(0), dout = w.dim(1);
  if (x.dim(2) != din) throw ShapeError("dense: input width does not match kernel rows");
  if (b.dim(0) != dout) throw ShapeError("dense: bias length does not match kernel columns");
  const std::size_t rows = x.dim(0) * x.dim(1);
  if (rows == 0) throw ShapeError("dense: empty input");

  Tensor<Real> y({x.dim(0), x.dim(1), dout});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(b.data(), dout, y.data() + r * dout);
  kernels::gemm_nn<Real>(rows, dout, din, x.data(), din, w.data(), dout, y.data(), dout);

  const int xi = xv.id(), wi = wv.id(), bi = bv.id();
  return xv.tape().push(std::move(y), {xi, wi, bi}, [=](Tape<Real>& tape, int self) {
    const Tensor<Real>& dy = tape.grad(self);
    if (tape.needs_grad(wi))
      kernels::gemm_tn<Real>(rows, dout, din, tape.value(xi).data(), din, dy.data(), dout,
                             tape.grad(wi).data(), dout);
    if (tape.needs_grad(bi)) {
      Real* db = tape.grad(bi).data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < dout; ++c) db[c] += dy[r * dout + c];
    }
    if (tape.needs_grad(xi)) {
      const std::vector<Real> wt = transposed(tape.value(wi).data(), din, dout);
      kernels::gemm_nn<Real>(rows, din, dout, dy.data(), dout, wt.data(), din, tape.grad(xi).data(), din);
    }
  });
}

template <class Real>
Var<Real> relu(const Var<Real>& xv) {
  Tensor<Real> y = xv.value();
  for (auto& v : y.values()) v = v > Real(0) ? v : Real(0);
  const int xi = xv.id();
  return xv.tape().push(std::move(y), {xi}, [=](Tape<Real>& tape, int self) {
    const Tensor<Real>& dy = tape.grad(self);
    const Tensor<Real>& x = tape.value(xi);
    Tensor<Real>& dx = tape.grad(xi);
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (x[i] > Real(0)) dx[i] += dy[i];
  });
}

template <class Real>
Var<Real> tanh(const Var<Real>& xv) {
  Tensor<Real> y = xv.value();
  for (auto& v : y.values()) v = std::tanh(v);
  const int xi = xv.id();
  return xv.tape().push(std::move(y), {xi}, [=](Tape<Real>& tape, int self) {
    const Tensor<Real>& dy = tape.grad(self);
    const Tensor<Real>& out = tape.value(self);
    Tensor<Real>& dx = tape.grad(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * (Real(1) - out[i] * out[i]);
  });
}

template <class Real>
Var<Real> add(const Var<Real>& av, const Var<Real>& bv) {
  require_same_tape(av, bv);
  if (av.shape() != bv.shape())
    throw ShapeError("add: shapes " + shape_string(av.shape()) + " and " + shape_string(bv.shape()) + " differ");
  Tensor<Real> y = av.value();
  const Tensor<Real>& b = bv.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
  const int ai = av.id(), bi = bv.id();
  return av.tape().push(std::move(y), {ai, bi}, [=](Tape<Real>& tape, int self) {
    const Tensor<Real>& dy = tape.grad(self);
    for (int id : {ai, bi}) {
      if (!tape.needs_grad(id)) continue;
      Tensor<Real>& d = tape.grad(id);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
  });
}

template <class Real>
Var<Real> upsample2(const Var<Real>& xv) {
  const Tensor<Real>& x = xv.value();
  require_rank(x, 3, "upsample2 input");
  const std::size_t batch = x.dim(0), len = x.dim(1), ch = x.dim(2);
  Tensor<Real> y({batch, 2 * len, ch});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < len; ++t) {
      const Real* src = x.data() + (b * len + t) * ch;
      Real* dst = y.data() + (b * 2 * len + 2 * t) * ch;
      std::copy_n(src, ch, dst);
      std::copy_n(src, ch, dst + ch);
    }
  const int xi = xv.id();
  return xv.tape().push(std::move(y), {xi}, [=](Tape<Real>& tape, int self) {
    const Tensor<Real>& dy = tape.grad(self);
    Tensor<Real>& dx = tape.grad(xi);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < len; ++t) {
        Real* d = dx.data() + (b * len + t) * ch;
        const Real* g = dy.data() + (b * 2 * len + 2 * t) * ch;
        for (std::size_t c = 0; c < ch; ++c) d[c] += g[c] + g[ch + c];
      }
  });
}

template <class Real>
Var<Real> concat_channels(const Var<Real>& av, const Var<Real>& bv) {
  require_same_tape(av, bv);
  const Tensor<Real>& a = av.value();
  const Tensor<Real>& b = bv.value();
  require_rank(a, 3, "concat lhs");
  require_rank(b, 3, "concat rhs");
  if (a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1))
    throw ShapeError("concat_channels: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const std::size_t rows = a.dim(0) * a.dim(1), ca = a.dim(2), cb = b.dim(2);
  Tensor<Real> y({a.dim(0), a.dim(1), ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data() + r * ca, ca, y.data() + r * (ca + cb));
    std::copy_n(b.data() + r * cb, cb, y.data() + r * (ca + cb) + ca);
  }
  const int ai = av.id(), bi = bv.id();
  return av.tape().push(std::move(y), {ai, bi}, [=](Tape<Real>& tape, int self) {
    const Tensor<Real>& dy = tape.grad(self);
    if (tape.needs_grad(ai)) {
      Tensor<Real>& da = tape.grad(ai);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) da[r * ca + c] += dy[r * (ca + cb) + c];
    }
    if (tape.needs_grad(bi)) {
      Tensor<Real>& db = tape.grad(bi);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) db[r * cb + c] += dy[r * (ca + cb) + ca + c];
    }
  });
}

template <class Real>
Var<Real> batch_norm(const Var<Real>& xv, const Var<Real>& gv, const Var<Real>& bv,
                     Parameter<Real>& moving_mean, Parameter<Real>& moving_var, Mode mode,
                     const NormConfig& cfg) {
  const Tensor<Real>& x = xv.value();
  require_rank(x, 3, "batch_norm input");
  const std::size_t rows = x.dim(0) * x.dim(1), ch = x.dim(2);
  if (rows == 0) throw ShapeError("batch_norm: batch of size 0");
  if (gv.value().size() != ch || bv.value().size() != ch || moving_mean.value.size() != ch ||
      moving_var.value.size() != ch)
    throw ShapeError("batch_norm: parameter width does not match channel count");
  const Real* gamma = gv.value().data();
  const Real* beta = bv.value().data();

  std::vector<double> mean(ch, 0.0), invstd(ch, 0.0);
  if (mode == Mode::train) {
    std::vector<double> var(ch, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) mean[c] += x[r * ch + c];
    for (auto& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) {
        const double d = x[r * ch + c] - mean[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < ch; ++c) {
      var[c] /= static_cast<double>(rows);
      invstd[c] = 1.0 / std::sqrt(var[c] + cfg.epsilon);
      moving_mean.value[c] = static_cast<Real>(cfg.momentum * moving_mean.value[c] + (1.0 - cfg.momentum) * mean[c]);
      moving_var.value[c] = static_cast<Real>(cfg.momentum * moving_var.value[c] + (1.0 - cfg.momentum) * var[c]);
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = moving_mean.value[c];
      invstd[c] = 1.0 / std::sqrt(static_cast<double>(moving_var.value[c]) + cfg.epsilon);
    }
  }

  Tensor<Real> y(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < ch; ++c)
      y[r * ch + c] = static_cast<Real>(gamma[c] * (x[r * ch + c] - mean[c]) * invstd[c] + beta[c]);

  const int xi = xv.id(), gi = gv.id(), bi = bv.id();
  const bool train = mode == Mode::train;
  return xv.tape().push(std::move(y), {xi, gi, bi}, [=](Tape<Real>& tape, int self) {
    const Tensor<Real>& dy = tape.grad(self);
    const Tensor<Real>& xval = tape.value(xi);
    const Real* g = tape.value(gi).data();
    std::vector<double> sum_dy(ch, 0.0), sum_dy_xhat(ch, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) {
        const double xhat = (xval[r * ch + c] - mean[c]) * invstd[c];
        sum_dy[c] += dy[r * ch + c];
        sum_dy_xhat[c] += dy[r * ch + c] * xhat;
      }
    if (tape.needs_grad(gi)) {
      Tensor<Real>& dg = tape.grad(gi);
      for (std::size_t c = 0; c < ch; ++c) dg[c] += static_cast<Real>(sum_dy_xhat[c]);
    }
    if (tape.needs_grad(bi)) {
      Tensor<Real>& db = tape.grad(bi);
      for (std::size_t c = 0; c < ch; ++c) db[c] += static_cast<Real>(sum_dy[c]);
    }
    if (tape.needs_grad(xi)) {
      Tensor<Real>& dx = tape.grad(xi);
      const double n = static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ch; ++c) {
          const double scale = g[c] * invstd[c];
          if (train) {
            const double xhat = (xval[r * ch + c] - mean[c]) * invstd[c];
            dx[r * ch + c] += static_cast<Real>(scale / n * (n * dy[r * ch + c] - sum_dy[c] - xhat * sum_dy_xhat[c]));
          } else {
            dx[r * ch + c] += static_cast<Real>(scale * dy[r * ch + c]);
          }
        }
    }
  });
}

template <class Real>
Var<Real> layer_norm(const Var<Real>& xv, const Var<Real>& gv, const Var<Real>& bv, double epsilon) {
  const Tensor<Real>& x = xv.value();
  require_rank(x, 3, "layer_norm input");
  const std::size_t rows = x.dim(0) * x.dim(1), ch = x.dim(2);
  if (gv.value().size() != ch || bv.value().size() != ch)
    throw ShapeError("layer_norm: parameter width does not match channel count");
  const Real* gamma = gv.value().data();
  const Real* beta = bv.value().data();
  auto stats = std::make_shared<std::vector<double>>(2 * rows);  // mean, invstd per row
  Tensor<Real> y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = x.data() + r * ch;
    double mean = 0.0;
    for (std::size_t c = 0; c < ch; ++c) mean += xr[c];
    mean /= static_cast<double>(ch);
    double var = 0.0;
    for (std::size_t c = 0; c < ch; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(ch);
    const double invstd = 1.0 / std::sqrt(var + epsilon);
    (*stats)[2 * r] = mean;
    (*stats)[2 * r + 1] = invstd;
    for (std::size_t c = 0; c < ch; ++c)
      y[r * ch + c] = static_cast<Real>(gamma[c] * (xr[c] - mean) * invstd + beta[c]);
  }
  const int xi = xv.id(), gi = gv.id(), bi = bv.id();
  return xv.tape().push(std::move(y), {xi, gi, bi}, [=](Tape<Real>& tape, int self) {
    const Tensor<Real>& dy = tape.grad(self);
    const Tensor<Real>& xval = tape.value(xi);
    const Real* g = tape.value(gi).data();
    Real* dg = tape.needs_grad(gi) ? tape.grad(gi).data() : nullptr;
    Real* db = tape.needs_grad(bi) ? tape.grad(bi).data() : nullptr;
    Real* dx = tape.needs_grad(xi) ? tape.grad(xi).data() : nullptr;
    std::vector<double> xhat(ch), dxhat(ch);
    const double n = static_cast<double>(ch);
    for (std::size_t r = 0; r < rows; ++r) {
      const double mean = (*stats)[2 * r], invstd = (*stats)[2 * r + 1];
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t c = 0; c < ch; ++c) {
        const double gy = dy[r * ch + c];
        xhat[c] = (xval[r * ch + c] - mean) * invstd;
        dxhat[c] = gy * g[c];
        s1 += dxhat[c];
        s2 += dxhat[c] * xhat[c];
        if (dg) dg[c] += static_cast<Real>(gy * xhat[c]);
        if (db) db[c] += static_cast<Real>(gy);
      }
      if (dx)
        for (std::size_t c = 0; c < ch; ++c)
          dx[r * ch + c] += static_cast<Real>(invstd / n * (n * dxhat[c] - s1 - xhat[c] * s2));
    }
  });
}

namespace {

// Fills probs (heads * len * len) for one batch element.
template <class Real>
void softmax_scores(const Real* q, const Real* k, std::size_t len, std::size_t heads, std::size_t key_dim,
                    Real* probs) {
  const std::size_t width = heads * key_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(key_dim));
  std::vector<double> row(len);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t t = 0; t < len; ++t) {
      const Real* qt = q + t * width + h * key_dim;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < len; ++s) {
        const Real* ks = k + s * width + h * key_dim;
        double acc = 0.0;
        for (std::size_t j = 0; j < key_dim; ++j) acc += static_cast<double>(qt[j]) * ks[j];
        row[s] = acc * scale;
        mx = std::max(mx, row[s]);
      }
      double total = 0.0;
      for (std::size_t s = 0; s < len; ++s) {
        row[s] = std::exp(row[s] - mx);
        total += row[s];
      }
      Real* out = probs + (h * len + t) * len;
      for (std::size_t s = 0; s < len; ++s) out[s] = static_cast<Real>(row[s] / total);
    }
}

}  // namespace

template <class Real>
Var<Real> attention(const Var<Real>& qv, const Var<Real>& kv, const Var<Real>& vv, std::size_t heads,
                    std::size_t key_dim) {
  require_same_tape(qv, kv);
  require_same_tape(qv, vv);
  const Tensor<Real>& q = qv.value();
  const Tensor<Real>& k = kv.value();
  const Tensor<Real>& v = vv.value();
  require_rank(q, 3, "attention query");
  if (q.shape() != k.shape() || q.shape() != v.shape())
    throw ShapeError("attention: query/key/value shapes differ");
  const std::size_t batch = q.dim(0), len = q.dim(1), width = heads * key_dim;
  if (len == 0) throw ShapeError("attention: sequence length must be positive");
  if (q.dim(2) != width) throw ShapeError("attention: projection width is not heads * key_dim");

  auto probs = std::make_shared<std::vector<Real>>(batch * heads * len * len);
  Tensor<Real> out(q.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    Real* pb = probs->data() + b * heads * len * len;
    softmax_scores(q.data() + b * len * width, k.data() + b * len * width, len, heads, key_dim, pb);
    const Real* vb = v.data() + b * len * width;
    Real* ob = out.data() + b * len * width;
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < len; ++t) {
        const Real* p = pb + (h * len + t) * len;
        Real* o = ob + t * width + h * key_dim;
        for (std::size_t s = 0; s < len; ++s) {
          const Real* vs = vb + s * width + h * key_dim;
          for (std::size_t j = 0; j < key_dim; ++j) o[j] += p[s] * vs[j];
        }
      }
  }

  const int qi = qv.id(), ki = kv.id(), vi = vv.id();
  return qv.tape().push(std::move(out), {qi, ki, vi}, [=](Tape<Real>& tape, int self) {
    const Tensor<Real>& dout = tape.grad(self);
    const Tensor<Real>& qval = tape.value(qi);
    const Tensor<Real>& kval = tape.value(ki);
    const Tensor<Real>& vval = tape.value(vi);
    Real* dq = tape.needs_grad(qi) ? tape.grad(qi).data() : nullptr;
    Real* dk = tape.needs_grad(ki) ? tape.grad(ki).data() : nullptr;
    Real* dv = tape.needs_grad(vi) ? tape.grad(vi).data() : nullptr;
    const double scale = 1.0 / std::sqrt(static_cast<double>(key_dim));
    std::vector<double> dp(len), ds(len);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = b * len * width;
      const Real* pb = probs->data() + b * heads * len * len;
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = base + h * key_dim;
        for (std::size_t t = 0; t < len; ++t) {
          const Real* p = pb + (h * len + t) * len;
          const Real* go = dout.data() + off + t * width;
          double dot_pdp = 0.0;
          for (std::size_t s = 0; s < len; ++s) {
            const Real* vs = vval.data() + off + s * width;
            double acc = 0.0;
            for (std::size_t j = 0; j < key_dim; ++j) acc += static_cast<double>(go[j]) * vs[j];
            dp[s] = acc;
            dot_pdp += p[s] * acc;
            if (dv) {
              Real* dvs = dv + off + s * width;
              for (std::size_t j = 0; j < key_dim; ++j) dvs[j] += p[s] * go[j];
            }
          }
          for (std::size_t s = 0; s < len; ++s) ds[s] = p[s] * (dp[s] - dot_pdp) * scale;
          const Real* qt = qval.data() + off + t * width;
          for (std::size_t s = 0; s < len; ++s) {
            const Real* ks = kval.data() + off + s * width;
            if (dq) {
              Real* dqt = dq + off + t * width;
              for (std::size_t j = 0; j < key_dim; ++j) dqt[j] += static_cast<Real>(ds[s] * ks[j]);
            }
            if (dk) {
              Real* dks = dk + off + s * width;
              for (std::size_t j = 0; j < key_dim; ++j) dks[j] += static_cast<Real>(ds[s] * qt[j]);
            }
          }
        }
      }
    }
  });
}

template <class Real>
Var<Real> mse(const Var<Real>& pv, const Var<Real>& tv) {
  require_same_tape(pv, tv);
  if (pv.shape() != tv.shape())
    throw ShapeError("mse: shapes " + shape_string(pv.shape()) + " and " + shape_string(tv.shape()) + " differ");
  const Tensor<Real>& p = pv.value();
  const Tensor<Real>& t = tv.value();
  if (p.size() == 0) throw ShapeError("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - t[i];
    acc += d * d;
  }
  const double n = static_cast<double>(p.size());
  Tensor<Real> y({1}, static_cast<Real>(acc / n));
  const int pi = pv.id(), ti = tv.id();
  return pv.tape().push(std::move(y), {pi, ti}, [=](Tape<Real>& tape, int self) {
    const double g = tape.grad(self)[0];
    const Tensor<Real>& pval = tape.value(pi);
    const Tensor<Real>& tval = tape.value(ti);
    for (int id : {pi, ti}) {
      if (!tape.needs_grad(id)) continue;
      const double sign = id == pi ? 1.0 : -1.0;
      Tensor<Real>& d = tape.grad(id);
      for (std::size_t i = 0; i < d.size(); ++i)
        d[i] += static_cast<Real>(sign * 2.0 * g * (static_cast<double>(pval[i]) - tval[i]) / n);
    }
  });
}

template <class Real>
Var<Real> inner(const Var<Real>& xv, const Tensor<Real>& weights) {
  if (xv.value().size() != weights.size()) throw ShapeError("inner: weight count does not match input");
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) acc += static_cast<double>(xv.value()[i]) * weights[i];
  const int xi = xv.id();
  return xv.tape().push(Tensor<Real>({1}, static_cast<Real>(acc)), {xi}, [=](Tape<Real>& tape, int self) {
    const Real g = tape.grad(self)[0];
    Tensor<Real>& dx = tape.grad(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * weights[i];
  });
}

#define LUNGDN_INSTANTIATE(Real)                                                                       \
  template Var<Real> conv1d(const Var<Real>&, const Var<Real>&, const Var<Real>&, std::size_t);        \
  template Var<Real> dense(const Var<Real>&, const Var<Real>&, const Var<Real>&);                      \
  template Var<Real> relu(const Var<Real>&);                                                           \
  template Var<Real> tanh(const Var<Real>&);                                                           \
  template Var<Real> add(const Var<Real>&, const Var<Real>&);                                          \
  template Var<Real> upsample2(const Var<Real>&);                                                      \
  template Var<Real> concat_channels(const Var<Real>&, const Var<Real>&);                              \
  template Var<Real> batch_norm(const Var<Real>&, const Var<Real>&, const Var<Real>&, Parameter<Real>&, \
                                Parameter<Real>&, Mode, const NormConfig&);                            \
  template Var<Real> layer_norm(const Var<Real>&, const Var<Real>&, const Var<Real>&, double);         \
  template Var<Real> attention(const Var<Real>&, const Var<Real>&, const Var<Real>&, std::size_t,      \
                               std::size_t);                                                           \
  template Var<Real> mse(const Var<Real>&, const Var<Real>&);                                          \
  template Var<Real> inner(const Var<Real>&, const Tensor<Real>&);

LUNGDN_INSTANTIATE(float)
LUNGDN_INSTANTIATE(double)
#undef LUNGDN_INSTANTIATE

}  // namespace ops

template <class Real>
Tensor<Real> attention_weights(const Tensor<Real>& q, const Tensor<Real>& k, std::size_t heads,
                               std::size_t key_dim) {
  if (q.rank() != 3 || q.shape() != k.shape() || q.dim(2) != heads * key_dim)
    throw ShapeError("attention_weights: bad projection shapes");
  const std::size_t batch = q.dim(0), len = q.dim(1), width = heads * key_dim;
  Tensor<Real> probs({batch * heads, len, len});
  for (std::size_t b = 0; b < batch; ++b)
    ops::softmax_scores(q.data() + b * len * width, k.data() + b * len * width, len, heads, key_dim,
                        probs.data() + b * heads * len * len);
  return probs;
}

template Tensor<float> attention_weights(const Tensor<float>&, const Tensor<float>&, std::size_t, std::size_t);
template Tensor<double> attention_weights(const Tensor<double>&, const Tensor<double>&, std::size_t, std::size_t);

}  // namespace lungdn::nn
