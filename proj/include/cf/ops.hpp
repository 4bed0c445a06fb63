#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cf/tensor.hpp"

namespace cf {

namespace detail {

// Shared tape of the tracked operands, nullptr when all are free-standing.
// Mixing tensors from two live tapes is a caller bug.
inline Tape* resolve_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->tracked()) continue;
    if (tape && tape != t->tape) {
      throw ContractError("operands are tracked on different tapes");
    }
    tape = t->tape;
  }
  return tape;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape) + " and " +
                     shape_str(b.shape) + " differ");
  }
}

// C[m x n] = A[m x k] . B[k x n]
inline void mm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
                  std::size_t n) {
  std::fill(C, C + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double a = A[i * k + p];
      if (a == 0.0) continue;
      const double* brow = B + p * n;
      double* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

// C[m x n] = A[m x k] . B[n x k]^T
inline void mm_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
                  std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      const double* arow = A + i * k;
      const double* brow = B + j * k;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      C[i * n + j] = acc;
    }
  }
}

// C[m x n] = A[k x m]^T . B[k x n]
inline void mm_tn(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
                  std::size_t n) {
  std::fill(C, C + m * n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = A + p * m;
    const double* brow = B + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double a = arow[i];
      if (a == 0.0) continue;
      double* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  Tensor out = a;
  out.tape = nullptr;
  out.node = -1;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  if (Tape* tape = detail::resolve_tape({&a, &b})) {
    const int ia = a.tracked() ? a.node : -1;
    const int ib = b.tracked() ? b.node : -1;
    out.tape = tape;
    out.node = tape->emit({ia, ib}, out.shape, [ia, ib](Tape& t, const Tensor& up) {
      if (ia >= 0) t.accumulate(ia, up);
      if (ib >= 0) t.accumulate(ib, up);
    });
  }
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor out = a;
  out.tape = nullptr;
  out.node = -1;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  if (Tape* tape = detail::resolve_tape({&a, &b})) {
    const int ia = a.tracked() ? a.node : -1;
    const int ib = b.tracked() ? b.node : -1;
    out.tape = tape;
    out.node = tape->emit({ia, ib}, out.shape, [ia, ib](Tape& t, const Tensor& up) {
      if (ia >= 0) t.accumulate(ia, up);
      if (ib >= 0) {
        Tensor neg(up.shape, up.data);
        for (double& v : neg.data) v = -v;
        t.accumulate(ib, neg);
      }
    });
  }
  return out;
}

// Elementwise (Hadamard) product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor out = a;
  out.tape = nullptr;
  out.node = -1;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  if (Tape* tape = detail::resolve_tape({&a, &b})) {
    const int ia = a.tracked() ? a.node : -1;
    const int ib = b.tracked() ? b.node : -1;
    std::vector<double> av = a.data;
    std::vector<double> bv = b.data;
    out.tape = tape;
    out.node = tape->emit({ia, ib}, out.shape,
                          [ia, ib, av = std::move(av), bv = std::move(bv)](Tape& t, const Tensor& up) {
                            if (ia >= 0) {
                              Tensor d(up.shape, up.data);
                              for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] *= bv[i];
                              t.accumulate(ia, d);
                            }
                            if (ib >= 0) {
                              Tensor d(up.shape, up.data);
                              for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] *= av[i];
                              t.accumulate(ib, d);
                            }
                          });
  }
  return out;
}

inline Tensor scalar_mul(const Tensor& a, double c) {
  Tensor out = a;
  out.tape = nullptr;
  out.node = -1;
  for (double& v : out.data) v *= c;
  if (a.tracked()) {
    const int ia = a.node;
    out.tape = a.tape;
    out.node = a.tape->emit({ia}, out.shape, [ia, c](Tape& t, const Tensor& up) {
      Tensor d(up.shape, up.data);
      for (double& v : d.data) v *= c;
      t.accumulate(ia, d);
    });
  }
  return out;
}

inline Tensor scalar_add(const Tensor& a, double c) {
  Tensor out = a;
  out.tape = nullptr;
  out.node = -1;
  for (double& v : out.data) v += c;
  if (a.tracked()) {
    const int ia = a.node;
    out.tape = a.tape;
    out.node = a.tape->emit(
        {ia}, out.shape, [ia](Tape& t, const Tensor& up) { t.accumulate(ia, up); });
  }
  return out;
}

inline Tensor mean(const Tensor& a) {
  double acc = 0.0;
  for (const double v : a.data) acc += v;
  const double inv = 1.0 / static_cast<double>(a.size());
  Tensor out = Tensor::scalar(acc * inv);
  if (a.tracked()) {
    const int ia = a.node;
    const Shape in_shape = a.shape;
    out.tape = a.tape;
    out.node = a.tape->emit({ia}, out.shape, [ia, in_shape, inv](Tape& t, const Tensor& up) {
      t.accumulate(ia, Tensor::full(in_shape, up.data[0] * inv));
    });
  }
  return out;
}

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (const double v : a.data) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (a.tracked()) {
    const int ia = a.node;
    const Shape in_shape = a.shape;
    out.tape = a.tape;
    out.node = a.tape->emit({ia}, out.shape, [ia, in_shape](Tape& t, const Tensor& up) {
      t.accumulate(ia, Tensor::full(in_shape, up.data[0]));
    });
  }
  return out;
}

inline Tensor reshape(const Tensor& a, Shape target) {
  if (shape_numel(target) != a.size()) {
    throw ShapeError("reshape: " + shape_str(a.shape) + " to " + shape_str(target) +
                     " changes element count");
  }
  Tensor out(target, a.data);
  if (a.tracked()) {
    const int ia = a.node;
    const Shape in_shape = a.shape;
    out.tape = a.tape;
    out.node = a.tape->emit({ia}, out.shape, [ia, in_shape](Tape& t, const Tensor& up) {
      t.accumulate(ia, Tensor(in_shape, up.data));
    });
  }
  return out;
}

// Collapses everything to one axis.
inline Tensor flatten(const Tensor& a) { return reshape(a, {a.size()}); }

// Collapses all axes after the first; [n x c x h x w] -> [n x c*h*w].
inline Tensor flatten_rows(const Tensor& a) {
  if (a.rank() < 2) throw ShapeError("flatten_rows: rank must be >= 2, got " + shape_str(a.shape));
  return reshape(a, {a.shape[0], a.size() / a.shape[0]});
}

// Concatenation along axis 0. All parts must agree on trailing extents.
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape& first = parts[0].shape;
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != parts[0].rank() ||
        !std::equal(p.shape.begin() + 1, p.shape.end(), first.begin() + 1)) {
      throw ShapeError("concat: trailing extents of " + shape_str(p.shape) + " and " +
                       shape_str(first) + " differ");
    }
    rows += p.shape[0];
  }
  Shape out_shape = first;
  out_shape[0] = rows;
  Tensor out = Tensor::zeros(out_shape);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data.begin(), p.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.data.size();
  }
  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    if (!p.tracked()) continue;
    if (tape && tape != p.tape) throw ContractError("operands are tracked on different tapes");
    tape = p.tape;
  }
  if (tape) {
    std::vector<int> ids;
    std::vector<std::size_t> sizes;
    std::vector<Shape> shapes;
    for (const Tensor& p : parts) {
      ids.push_back(p.tracked() ? p.node : -1);
      sizes.push_back(p.data.size());
      shapes.push_back(p.shape);
    }
    out.tape = tape;
    out.node = tape->emit(ids, out.shape,
                          [ids, sizes, shapes](Tape& t, const Tensor& up) {
                            std::size_t off = 0;
                            for (std::size_t i = 0; i < ids.size(); ++i) {
                              if (ids[i] >= 0) {
                                Tensor d = Tensor::zeros(shapes[i]);
                                std::copy(up.data.begin() + static_cast<std::ptrdiff_t>(off),
                                          up.data.begin() + static_cast<std::ptrdiff_t>(off + sizes[i]),
                                          d.data.begin());
                                t.accumulate(ids[i], d);
                              }
                              off += sizes[i];
                            }
                          });
  }
  return out;
}

// out[i, :] = x[rows[i], :]. Rows may repeat; the backward pass scatter-adds.
inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  if (x.rank() < 2) throw ShapeError("gather_rows: rank must be >= 2, got " + shape_str(x.shape));
  if (rows.empty()) throw ShapeError("gather_rows: empty row list");
  const std::size_t stride = x.size() / x.shape[0];
  for (const std::size_t r : rows) {
    if (r >= x.shape[0]) {
      throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range for " +
                       shape_str(x.shape));
    }
  }
  Shape out_shape = x.shape;
  out_shape[0] = rows.size();
  Tensor out = Tensor::zeros(out_shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(rows[i] * stride),
              x.data.begin() + static_cast<std::ptrdiff_t>((rows[i] + 1) * stride),
              out.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  if (x.tracked()) {
    const int ix = x.node;
    const Shape in_shape = x.shape;
    out.tape = x.tape;
    out.node = x.tape->emit({ix}, out.shape,
                            [ix, in_shape, rows, stride](Tape& t, const Tensor& up) {
                              Tensor d = Tensor::zeros(in_shape);
                              for (std::size_t i = 0; i < rows.size(); ++i) {
                                const std::size_t dst = rows[i] * stride;
                                const std::size_t src = i * stride;
                                for (std::size_t j = 0; j < stride; ++j) {
                                  d.data[dst + j] += up.data[src + j];
                                }
                              }
                              t.accumulate(ix, d);
                            });
  }
  return out;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: operands must be rank 2, got " + shape_str(a.shape) + " and " +
                     shape_str(b.shape));
  }
  if (a.shape[1] != b.shape[0]) {
    throw ShapeError("matmul: inner extents of " + shape_str(a.shape) + " and " +
                     shape_str(b.shape) + " differ");
  }
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out = Tensor::zeros({m, n});
  detail::mm_nn(a.data.data(), b.data.data(), out.data.data(), m, k, n);
  if (Tape* tape = detail::resolve_tape({&a, &b})) {
    const int ia = a.tracked() ? a.node : -1;
    const int ib = b.tracked() ? b.node : -1;
    std::vector<double> av = a.data;
    std::vector<double> bv = b.data;
    out.tape = tape;
    out.node = tape->emit({ia, ib}, out.shape,
                          [ia, ib, av = std::move(av), bv = std::move(bv), m, k, n](
                              Tape& t, const Tensor& up) {
                            if (ia >= 0) {
                              Tensor d = Tensor::zeros({m, k});
                              detail::mm_nt(up.data.data(), bv.data(), d.data.data(), m, n, k);
                              t.accumulate(ia, d);
                            }
                            if (ib >= 0) {
                              Tensor d = Tensor::zeros({k, n});
                              detail::mm_tn(av.data(), up.data.data(), d.data.data(), k, m, n);
                              t.accumulate(ib, d);
                            }
                          });
  }
  return out;
}

// [n x f] + [f] row broadcast, or [n x c x h x w] + [c] channel broadcast.
inline Tensor bias_add(const Tensor& x, const Tensor& b) {
  if (b.rank() != 1) throw ShapeError("bias_add: bias must be rank 1, got " + shape_str(b.shape));
  Tensor out = x;
  out.tape = nullptr;
  out.node = -1;
  if (x.rank() == 2) {
    if (b.shape[0] != x.shape[1]) {
      throw ShapeError("bias_add: bias " + shape_str(b.shape) + " does not match " +
                       shape_str(x.shape));
    }
    for (std::size_t i = 0; i < x.shape[0]; ++i) {
      for (std::size_t j = 0; j < x.shape[1]; ++j) out.data[i * x.shape[1] + j] += b.data[j];
    }
  } else if (x.rank() == 4) {
    if (b.shape[0] != x.shape[1]) {
      throw ShapeError("bias_add: bias " + shape_str(b.shape) + " does not match channels of " +
                       shape_str(x.shape));
    }
    const std::size_t hw = x.shape[2] * x.shape[3];
    for (std::size_t i = 0; i < x.shape[0]; ++i) {
      for (std::size_t c = 0; c < x.shape[1]; ++c) {
        double* base = out.data.data() + (i * x.shape[1] + c) * hw;
        for (std::size_t p = 0; p < hw; ++p) base[p] += b.data[c];
      }
    }
  } else {
    throw ShapeError("bias_add: input must be rank 2 or 4, got " + shape_str(x.shape));
  }
  if (Tape* tape = detail::resolve_tape({&x, &b})) {
    const int ix = x.tracked() ? x.node : -1;
    const int ib = b.tracked() ? b.node : -1;
    const Shape xs = x.shape;
    const Shape bs = b.shape;
    out.tape = tape;
    out.node = tape->emit({ix, ib}, out.shape, [ix, ib, xs, bs](Tape& t, const Tensor& up) {
      if (ix >= 0) t.accumulate(ix, up);
      if (ib >= 0) {
        Tensor d = Tensor::zeros(bs);
        if (xs.size() == 2) {
          for (std::size_t i = 0; i < xs[0]; ++i) {
            for (std::size_t j = 0; j < xs[1]; ++j) d.data[j] += up.data[i * xs[1] + j];
          }
        } else {
          const std::size_t hw = xs[2] * xs[3];
          for (std::size_t i = 0; i < xs[0]; ++i) {
            for (std::size_t c = 0; c < xs[1]; ++c) {
              const double* base = up.data.data() + (i * xs[1] + c) * hw;
              for (std::size_t p = 0; p < hw; ++p) d.data[c] += base[p];
            }
          }
        }
        t.accumulate(ib, d);
      }
    });
  }
  return out;
}

// max(x, 0). The subgradient at exactly 0 is taken as 0.
inline Tensor relu(const Tensor& x) {
  Tensor out = x;
  out.tape = nullptr;
  out.node = -1;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  if (x.tracked()) {
    const int ix = x.node;
    std::vector<double> xv = x.data;
    out.tape = x.tape;
    out.node = x.tape->emit({ix}, out.shape, [ix, xv = std::move(xv)](Tape& t, const Tensor& up) {
      Tensor d(up.shape, up.data);
      for (std::size_t i = 0; i < d.data.size(); ++i) {
        if (xv[i] <= 0.0) d.data[i] = 0.0;
      }
      t.accumulate(ix, d);
    });
  }
  return out;
}

// Mean cross-entropy of row-wise softmax against (1 - eps) * onehot + eps / K
// targets, computed with the max-shift trick so large logits cannot overflow.
inline Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                                    double smoothing = 0.0) {
  if (logits.rank() != 2) {
    throw ShapeError("softmax_cross_entropy: logits must be rank 2, got " + shape_str(logits.shape));
  }
  const std::size_t n = logits.shape[0];
  const std::size_t k = logits.shape[1];
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(n) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (smoothing < 0.0 || smoothing >= 1.0) {
    throw ContractError("softmax_cross_entropy: smoothing must be in [0, 1)");
  }
  for (const int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw std::out_of_range("label " + std::to_string(y) + " outside [0, " + std::to_string(k) +
                              ")");
    }
  }
  std::vector<double> probs(n * k);
  double total = 0.0;
  const double off = smoothing / static_cast<double>(k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data.data() + i * k;
    double hi = row[0];
    for (std::size_t j = 1; j < k; ++j) hi = std::max(hi, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - hi);
    const double logz = std::log(z);
    double row_loss = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double logp = row[j] - hi - logz;
      probs[i * k + j] = std::exp(logp);
      double target = off;
      if (j == static_cast<std::size_t>(labels[i])) target += 1.0 - smoothing;
      if (target != 0.0) row_loss -= target * logp;
    }
    total += row_loss;
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  if (logits.tracked()) {
    const int il = logits.node;
    std::vector<int> ys = labels;
    const Shape ls = logits.shape;
    out.tape = logits.tape;
    out.node = logits.tape->emit(
        {il}, out.shape,
        [il, ls, n, k, off, smoothing, ys = std::move(ys), probs = std::move(probs)](
            Tape& t, const Tensor& up) {
          Tensor d = Tensor::zeros(ls);
          const double scale = up.data[0] / static_cast<double>(n);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
              double target = off;
              if (j == static_cast<std::size_t>(ys[i])) target += 1.0 - smoothing;
              d.data[i * k + j] = scale * (probs[i * k + j] - target);
            }
          }
          t.accumulate(il, d);
        });
  }
  return out;
}

// Cross-correlation of [n x c x h x w] with kernel [o x c x kh x kw].
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride = 1,
                     std::size_t pad = 0) {
  if (input.rank() != 4) {
    throw ShapeError("conv2d: input must be rank 4, got " + shape_str(input.shape));
  }
  if (kernel.rank() != 4) {
    throw ShapeError("conv2d: kernel must be rank 4, got " + shape_str(kernel.shape));
  }
  if (input.shape[1] != kernel.shape[1]) {
    throw ShapeError("conv2d: input channels " + shape_str(input.shape) +
                     " do not match kernel " + shape_str(kernel.shape));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  const std::size_t n = input.shape[0], c = input.shape[1], h = input.shape[2], w = input.shape[3];
  const std::size_t o = kernel.shape[0], kh = kernel.shape[2], kw = kernel.shape[3];
  if (kh > h + 2 * pad || kw > w + 2 * pad) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape) + " larger than padded input " +
                     shape_str(input.shape) + " with pad " + std::to_string(pad));
  }
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kw) / stride + 1;
  Tensor out = Tensor::zeros({n, o, oh, ow});
  const auto in_at = [&](std::size_t b, std::size_t ch, std::ptrdiff_t y, std::ptrdiff_t x) {
    if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) || x >= static_cast<std::ptrdiff_t>(w))
      return 0.0;
    return input.data[((b * c + ch) * h + static_cast<std::size_t>(y)) * w +
                      static_cast<std::size_t>(x)];
  };
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t f = 0; f < o; ++f) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                          static_cast<std::ptrdiff_t>(pad);
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                          static_cast<std::ptrdiff_t>(pad);
                acc += in_at(b, ch, iy, ix) * kernel.data[((f * c + ch) * kh + ky) * kw + kx];
              }
            }
          }
          out.data[((b * o + f) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
  if (Tape* tape = detail::resolve_tape({&input, &kernel})) {
    const int ii = input.tracked() ? input.node : -1;
    const int ik = kernel.tracked() ? kernel.node : -1;
    std::vector<double> iv = input.data;
    std::vector<double> kv = kernel.data;
    const Shape is = input.shape;
    const Shape ks = kernel.shape;
    out.tape = tape;
    out.node = tape->emit(
        {ii, ik}, out.shape,
        [ii, ik, iv = std::move(iv), kv = std::move(kv), is, ks, stride, pad, oh, ow](
            Tape& t, const Tensor& up) {
          const std::size_t n = is[0], c = is[1], h = is[2], w = is[3];
          const std::size_t o = ks[0], kh = ks[2], kw = ks[3];
          Tensor din = Tensor::zeros(is);
          Tensor dker = Tensor::zeros(ks);
          for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t f = 0; f < o; ++f) {
              for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                  const double g = up.data[((b * o + f) * oh + oy) * ow + ox];
                  if (g == 0.0) continue;
                  for (std::size_t ch = 0; ch < c; ++ch) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                      for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                            ix >= static_cast<std::ptrdiff_t>(w))
                          continue;
                        const std::size_t ipos =
                            ((b * c + ch) * h + static_cast<std::size_t>(iy)) * w +
                            static_cast<std::size_t>(ix);
                        const std::size_t kpos = ((f * c + ch) * kh + ky) * kw + kx;
                        if (ii >= 0) din.data[ipos] += g * kv[kpos];
                        if (ik >= 0) dker.data[kpos] += g * iv[ipos];
                      }
                    }
                  }
                }
              }
            }
          }
          if (ii >= 0) t.accumulate(ii, din);
          if (ik >= 0) t.accumulate(ik, dker);
        });
  }
  return out;
}

}  // namespace cf
