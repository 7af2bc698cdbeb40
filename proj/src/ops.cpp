// SPDX-License-Identifier: Apache-2.0
#include "mimk/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mimk/errors.hpp"
#include "mimk/parallel.hpp"

namespace mimk {

namespace {

void record(std::string_view kind, std::initializer_list<Tensor> inputs, Tensor& out,
            BackwardFn fn) {
  if (Tape* tape = Tape::active()) tape->record(kind, inputs, out, std::move(fn));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> c(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  parallel_for(
      0, m,
      [&](std::size_t i) {
        double* row = c.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double s = pa[i * k + p];
          const double* brow = pb + p * n;
          for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
        }
      },
      k * n);
  Tensor out({m, n}, std::move(c));
  auto ai = a.impl(), bi = b.impl();
  record("matmul", {a, b}, out, [ai, bi, m, k, n](std::span<const double> g) {
    if (ai->requires_grad) {
      std::vector<double> da(m * k, 0.0);
      parallel_for(
          0, m,
          [&](std::size_t i) {
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              const double* grow = g.data() + i * n;
              const double* brow = bi->data.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              da[i * k + p] = acc;
            }
          },
          k * n);
      accumulate_grad(ai, da);
    }
    if (bi->requires_grad) {
      std::vector<double> db(k * n, 0.0);
      parallel_for(
          0, k,
          [&](std::size_t p) {
            double* row = db.data() + p * n;
            for (std::size_t i = 0; i < m; ++i) {
              const double s = ai->data[i * k + p];
              const double* grow = g.data() + i * n;
              for (std::size_t j = 0; j < n; ++j) row[j] += s * grow[j];
            }
          },
          m * n);
      accumulate_grad(bi, db);
    }
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] + b.data()[i];
  Tensor out(a.shape(), std::move(c));
  auto ai = a.impl(), bi = b.impl();
  record("add", {a, b}, out, [ai, bi](std::span<const double> g) {
    accumulate_grad(ai, g);
    accumulate_grad(bi, g);
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] - b.data()[i];
  Tensor out(a.shape(), std::move(c));
  auto ai = a.impl(), bi = b.impl();
  record("sub", {a, b}, out, [ai, bi](std::span<const double> g) {
    accumulate_grad(ai, g);
    if (bi->requires_grad) {
      std::vector<double> neg(g.begin(), g.end());
      for (auto& v : neg) v = -v;
      accumulate_grad(bi, neg);
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] * b.data()[i];
  Tensor out(a.shape(), std::move(c));
  auto ai = a.impl(), bi = b.impl();
  record("mul", {a, b}, out, [ai, bi](std::span<const double> g) {
    const std::size_t n = g.size();
    if (ai->requires_grad) {
      std::vector<double> da(n);
      for (std::size_t i = 0; i < n; ++i) da[i] = g[i] * bi->data[i];
      accumulate_grad(ai, da);
    }
    if (bi->requires_grad) {
      std::vector<double> db(n);
      for (std::size_t i = 0; i < n; ++i) db[i] = g[i] * ai->data[i];
      accumulate_grad(bi, db);
    }
  });
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> c(x.data().begin(), x.data().end());
  for (auto& v : c) v *= factor;
  Tensor out(x.shape(), std::move(c));
  auto xi = x.impl();
  record("scale", {x}, out, [xi, factor](std::span<const double> g) {
    std::vector<double> dx(g.begin(), g.end());
    for (auto& v : dx) v *= factor;
    accumulate_grad(xi, dx);
  });
  return out;
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  const std::size_t d = bias.numel();
  if (bias.rank() != 1 || x.shape().back() != d) {
    throw ShapeError("add_rowwise: bias " + shape_str(bias.shape()) + " does not match " +
                     shape_str(x.shape()));
  }
  std::vector<double> c(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += bias.data()[i % d];
  Tensor out(x.shape(), std::move(c));
  auto xi = x.impl(), bi = bias.impl();
  record("add_rowwise", {x, bias}, out, [xi, bi, d](std::span<const double> g) {
    accumulate_grad(xi, g);
    if (bi->requires_grad) {
      std::vector<double> db(d, 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) db[i % d] += g[i];
      accumulate_grad(bi, db);
    }
  });
  return out;
}

Tensor add_channelwise(const Tensor& x, const Tensor& bias) {
  const std::size_t c = bias.numel();
  if (bias.rank() != 1 || x.dim(0) != c) {
    throw ShapeError("add_channelwise: bias " + shape_str(bias.shape()) + " does not match " +
                     shape_str(x.shape()));
  }
  const std::size_t inner = x.numel() / c;
  std::vector<double> v(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += bias.data()[i / inner];
  Tensor out(x.shape(), std::move(v));
  auto xi = x.impl(), bi = bias.impl();
  record("add_channelwise", {x, bias}, out, [xi, bi, inner, c](std::span<const double> g) {
    accumulate_grad(xi, g);
    if (bi->requires_grad) {
      std::vector<double> db(c, 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) db[i / inner] += g[i];
      accumulate_grad(bi, db);
    }
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_rowwise(y, bias) : y;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  auto xi = x.impl();
  record("sum", {x}, out, [xi](std::span<const double> g) {
    std::vector<double> dx(xi->data.size(), g[0]);
    accumulate_grad(xi, dx);
  });
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ContractError("softmax: axis " + std::to_string(axis) + " out of range for " +
                        shape_str(x.shape()));
  }
  const std::size_t len = x.dim(axis);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t outer = x.numel() / (len * inner);
  std::vector<double> y(x.numel());
  const auto xs = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xs[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xs[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(xs[base + j * inner] - mx);
        y[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) y[base + j * inner] /= total;
    }
  }
  Tensor out(x.shape(), std::move(y));
  auto xi = x.impl();
  auto yi = out.impl();
  record("softmax", {x}, out, [xi, yi, outer, len, inner](std::span<const double> g) {
    const auto& yv = yi->data;
    std::vector<double> dx(yv.size());
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * yv[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t p = base + j * inner;
          dx[p] = yv[p] * (g[p] - dot);
        }
      }
    }
    accumulate_grad(xi, dx);
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw ShapeError("layer_norm: gamma/beta " + shape_str(gamma.shape()) + "/" +
                     shape_str(beta.shape()) + " do not match last axis of " +
                     shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> xhat(x.numel()), inv_std(rows), y(x.numel());
  const auto xs = x.data();
  const auto gs = gamma.data();
  const auto bs = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * inv_std[r];
      xhat[r * d + j] = h;
      y[r * d + j] = h * gs[j] + bs[j];
    }
  }
  Tensor out(x.shape(), std::move(y));
  auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
  record("layer_norm", {x, gamma, beta}, out,
         [xi, gi, bi, rows, d, xhat = std::move(xhat),
          inv_std = std::move(inv_std)](std::span<const double> g) {
           if (xi->requires_grad) {
             std::vector<double> dx(rows * d);
             for (std::size_t r = 0; r < rows; ++r) {
               double m1 = 0.0, m2 = 0.0;
               for (std::size_t j = 0; j < d; ++j) {
                 const double dh = g[r * d + j] * gi->data[j];
                 m1 += dh;
                 m2 += dh * xhat[r * d + j];
               }
               m1 /= static_cast<double>(d);
               m2 /= static_cast<double>(d);
               for (std::size_t j = 0; j < d; ++j) {
                 const double dh = g[r * d + j] * gi->data[j];
                 dx[r * d + j] = inv_std[r] * (dh - m1 - xhat[r * d + j] * m2);
               }
             }
             accumulate_grad(xi, dx);
           }
           if (gi->requires_grad || bi->requires_grad) {
             std::vector<double> dg(d, 0.0), db(d, 0.0);
             for (std::size_t r = 0; r < rows; ++r) {
               for (std::size_t j = 0; j < d; ++j) {
                 dg[j] += g[r * d + j] * xhat[r * d + j];
                 db[j] += g[r * d + j];
               }
             }
             accumulate_grad(gi, dg);
             accumulate_grad(bi, db);
           }
         });
  return out;
}

Tensor gelu(const Tensor& x) {
  std::vector<double> y(x.numel());
  const auto xs = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = 0.5 * xs[i] * (1.0 + std::erf(xs[i] * std::numbers::sqrt2 / 2.0));
  }
  Tensor out(x.shape(), std::move(y));
  auto xi = x.impl();
  record("gelu", {x}, out, [xi](std::span<const double> g) {
    std::vector<double> dx(g.size());
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xi->data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dx[i] = g[i] * (cdf + v * pdf);
    }
    accumulate_grad(xi, dx);
  });
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride) {
  require_rank(x, 3, "conv2d");
  require_rank(w, 4, "conv2d");
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != cin || kh != kw || kh > h || kw > wd || stride == 0 ||
      (h - kh) % stride != 0 || (wd - kw) % stride != 0) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()) + " at stride " + std::to_string(stride));
  }
  const std::size_t k = kh;
  const std::size_t ho = (h - k) / stride + 1, wo = (wd - k) / stride + 1;
  std::vector<double> y(cout * ho * wo, 0.0);
  const double* xs = x.data().data();
  const double* ws = w.data().data();
  parallel_for(
      0, cout,
      [&](std::size_t co) {
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = 0; b < k; ++b) {
              const double wv = ws[((co * cin + ci) * k + a) * k + b];
              for (std::size_t i = 0; i < ho; ++i) {
                const double* xrow = xs + (ci * h + i * stride + a) * wd + b;
                double* yrow = y.data() + (co * ho + i) * wo;
                for (std::size_t j = 0; j < wo; ++j) yrow[j] += wv * xrow[j * stride];
              }
            }
          }
        }
      },
      cin * k * k * ho * wo);
  Tensor out({cout, ho, wo}, std::move(y));
  auto xi = x.impl(), wi = w.impl();
  record("conv2d", {x, w}, out,
         [xi, wi, cin, h, wd, cout, k, ho, wo, stride](std::span<const double> g) {
           if (xi->requires_grad) {
             std::vector<double> dx(cin * h * wd, 0.0);
             parallel_for(0, cin, [&](std::size_t ci) {
               for (std::size_t co = 0; co < cout; ++co) {
                 for (std::size_t a = 0; a < k; ++a) {
                   for (std::size_t b = 0; b < k; ++b) {
                     const double wv = wi->data[((co * cin + ci) * k + a) * k + b];
                     for (std::size_t i = 0; i < ho; ++i) {
                       double* xrow = dx.data() + (ci * h + i * stride + a) * wd + b;
                       const double* grow = g.data() + (co * ho + i) * wo;
                       for (std::size_t j = 0; j < wo; ++j) xrow[j * stride] += wv * grow[j];
                     }
                   }
                 }
               }
             });
             accumulate_grad(xi, dx);
           }
           if (wi->requires_grad) {
             std::vector<double> dw(cout * cin * k * k, 0.0);
             parallel_for(0, cout, [&](std::size_t co) {
               for (std::size_t ci = 0; ci < cin; ++ci) {
                 for (std::size_t a = 0; a < k; ++a) {
                   for (std::size_t b = 0; b < k; ++b) {
                     double acc = 0.0;
                     for (std::size_t i = 0; i < ho; ++i) {
                       const double* xrow = xi->data.data() + (ci * h + i * stride + a) * wd + b;
                       const double* grow = g.data() + (co * ho + i) * wo;
                       for (std::size_t j = 0; j < wo; ++j) acc += xrow[j * stride] * grow[j];
                     }
                     dw[((co * cin + ci) * k + a) * k + b] = acc;
                   }
                 }
               }
             });
             accumulate_grad(wi, dw);
           }
         });
  return out;
}

Tensor gather(const Tensor& x, Shape out_shape, std::vector<std::size_t> source) {
  if (shape_numel(out_shape) != source.size()) {
    throw ShapeError("gather: " + std::to_string(source.size()) + " indices for shape " +
                     shape_str(out_shape));
  }
  const auto xs = x.data();
  std::vector<double> y(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    const std::size_t s = source[i];
    if (s == kZeroIndex) {
      y[i] = 0.0;
    } else if (s < xs.size()) {
      y[i] = xs[s];
    } else {
      throw ShapeError("gather: index " + std::to_string(s) + " outside " + shape_str(x.shape()));
    }
  }
  Tensor out(std::move(out_shape), std::move(y));
  auto xi = x.impl();
  record("gather", {x}, out, [xi, source = std::move(source)](std::span<const double> g) {
    std::vector<double> dx(xi->data.size(), 0.0);
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (source[i] != kZeroIndex) dx[source[i]] += g[i];
    }
    accumulate_grad(xi, dx);
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  auto xi = x.impl();
  record("reshape", {x}, out, [xi](std::span<const double> g) { accumulate_grad(xi, g); });
  return out;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  std::vector<bool> seen(r, false);
  if (perm.size() != r) throw ShapeError("permute: permutation rank mismatch");
  for (auto p : perm) {
    if (p >= r || seen[p]) throw ShapeError("permute: not a permutation");
    seen[p] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.dim(perm[i]);
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * x.dim(i);
  std::vector<std::size_t> source(x.numel());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < source.size(); ++flat) {
    std::size_t s = 0;
    for (std::size_t i = 0; i < r; ++i) s += idx[i] * in_strides[perm[i]];
    source[flat] = s;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  return gather(x, std::move(out_shape), std::move(source));
}

Tensor pad2d(const Tensor& x, std::size_t pad) {
  require_rank(x, 3, "pad2d");
  if (pad == 0) return x;
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
  std::vector<std::size_t> source(c * hp * wp, kZeroIndex);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        source[(ch * hp + i + pad) * wp + j + pad] = (ch * h + i) * w + j;
      }
    }
  }
  return gather(x, {c, hp, wp}, std::move(source));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, double scale,
                 std::span<const double> mask, std::size_t mask_group) {
  require_rank(q, 3, "attention");
  require_same_shape(q, k, "attention");
  require_same_shape(q, v, "attention");
  const std::size_t batch = q.dim(0), t = q.dim(1), dh = q.dim(2);
  if (!mask.empty()) {
    if (mask_group == 0 || batch % mask_group != 0 ||
        mask.size() != (batch / mask_group) * t * t) {
      throw ShapeError("attention: mask of " + std::to_string(mask.size()) +
                       " values does not fit batch " + std::to_string(batch) + " / group " +
                       std::to_string(mask_group) + " with " + std::to_string(t) + " tokens");
    }
  }
  std::vector<double> probs(batch * t * t);
  std::vector<double> o(batch * t * dh, 0.0);
  const double* qs = q.data().data();
  const double* ks = k.data().data();
  const double* vs = v.data().data();
  parallel_for(
      0, batch,
      [&](std::size_t b) {
        const double* qb = qs + b * t * dh;
        const double* kb = ks + b * t * dh;
        const double* vb = vs + b * t * dh;
        double* pb = probs.data() + b * t * t;
        const double* mb = mask.empty() ? nullptr : mask.data() + (b / mask_group) * t * t;
        for (std::size_t i = 0; i < t; ++i) {
          double* prow = pb + i * t;
          double mx = -std::numeric_limits<double>::infinity();
          for (std::size_t j = 0; j < t; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < dh; ++c) s += qb[i * dh + c] * kb[j * dh + c];
            s *= scale;
            if (mb) s += mb[i * t + j];
            prow[j] = s;
            mx = std::max(mx, s);
          }
          double total = 0.0;
          for (std::size_t j = 0; j < t; ++j) {
            prow[j] = std::exp(prow[j] - mx);
            total += prow[j];
          }
          double* orow = o.data() + (b * t + i) * dh;
          for (std::size_t j = 0; j < t; ++j) {
            prow[j] /= total;
            const double p = prow[j];
            for (std::size_t c = 0; c < dh; ++c) orow[c] += p * vb[j * dh + c];
          }
        }
      },
      2 * t * t * dh);
  Tensor out(q.shape(), std::move(o));
  auto qi = q.impl(), ki = k.impl(), vi = v.impl();
  record("attention", {q, k, v}, out,
         [qi, ki, vi, batch, t, dh, scale, probs = std::move(probs)](std::span<const double> g) {
           std::vector<double> dq(batch * t * dh, 0.0), dk(batch * t * dh, 0.0),
               dv(batch * t * dh, 0.0);
           parallel_for(
               0, batch,
               [&](std::size_t b) {
                 const std::size_t off = b * t * dh;
                 const double* pb = probs.data() + b * t * t;
                 const double* gb = g.data() + off;
                 std::vector<double> ds(t);
                 for (std::size_t i = 0; i < t; ++i) {
                   const double* prow = pb + i * t;
                   const double* grow = gb + i * dh;
                   double dot = 0.0;
                   for (std::size_t j = 0; j < t; ++j) {
                     double dp = 0.0;
                     for (std::size_t c = 0; c < dh; ++c) dp += grow[c] * vi->data[off + j * dh + c];
                     ds[j] = dp;
                     dot += dp * prow[j];
                   }
                   for (std::size_t j = 0; j < t; ++j) {
                     const double p = prow[j];
                     for (std::size_t c = 0; c < dh; ++c) dv[off + j * dh + c] += p * grow[c];
                     const double s = p * (ds[j] - dot) * scale;
                     for (std::size_t c = 0; c < dh; ++c) {
                       dq[off + i * dh + c] += s * ki->data[off + j * dh + c];
                       dk[off + j * dh + c] += s * qi->data[off + i * dh + c];
                     }
                   }
                 }
               },
               4 * t * t * dh);
           accumulate_grad(qi, dq);
           accumulate_grad(ki, dk);
           accumulate_grad(vi, dv);
         });
  return out;
}

Tensor replace_rows(const Tensor& tokens, const std::vector<std::uint8_t>& flags,
                    const Tensor& token) {
  require_rank(tokens, 2, "replace_rows");
  const std::size_t n = tokens.dim(0), d = tokens.dim(1);
  if (flags.size() != n || token.numel() != d) {
    throw ShapeError("replace_rows: " + std::to_string(flags.size()) + " flags and token " +
                     shape_str(token.shape()) + " do not fit tokens " +
                     shape_str(tokens.shape()));
  }
  std::vector<double> y(tokens.data().begin(), tokens.data().end());
  for (std::size_t i = 0; i < n; ++i) {
    if (flags[i]) std::copy(token.data().begin(), token.data().end(), y.begin() + i * d);
  }
  Tensor out(tokens.shape(), std::move(y));
  auto xi = tokens.impl(), ti = token.impl();
  record("replace_rows", {tokens, token}, out, [xi, ti, flags, n, d](std::span<const double> g) {
    if (xi->requires_grad) {
      std::vector<double> dx(g.begin(), g.end());
      for (std::size_t i = 0; i < n; ++i) {
        if (flags[i]) std::fill(dx.begin() + i * d, dx.begin() + (i + 1) * d, 0.0);
      }
      accumulate_grad(xi, dx);
    }
    if (ti->requires_grad) {
      std::vector<double> dt(d, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (!flags[i]) continue;
        for (std::size_t c = 0; c < d; ++c) dt[c] += g[i * d + c];
      }
      accumulate_grad(ti, dt);
    }
  });
  return out;
}

Tensor weighted_l1(const Tensor& pred, std::span<const double> target,
                   std::span<const double> weights) {
  const std::size_t n = pred.numel();
  if (target.size() != n || weights.size() != n) {
    throw ShapeError("weighted_l1: prediction " + shape_str(pred.shape()) + " vs " +
                     std::to_string(target.size()) + " targets / " +
                     std::to_string(weights.size()) + " weights");
  }
  double wsum = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    wsum += weights[i];
    acc += weights[i] * std::abs(pred.data()[i] - target[i]);
  }
  if (!(wsum > 0.0)) throw ContractError("weighted_l1: weights sum to zero");
  Tensor out = Tensor::scalar(acc / wsum);
  auto pi = pred.impl();
  std::vector<double> local(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = pred.data()[i] - target[i];
    const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    local[i] = weights[i] * sign / wsum;
  }
  record("weighted_l1", {pred}, out, [pi, local = std::move(local)](std::span<const double> g) {
    std::vector<double> dp(local);
    for (auto& v : dp) v *= g[0];
    accumulate_grad(pi, dp);
  });
  return out;
}

}  // namespace mimk
