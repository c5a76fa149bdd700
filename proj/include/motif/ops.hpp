#pragma once

// Dense kernels with reverse-mode backward rules. Each kernel computes its
// value eagerly and, when a Tape is active and an input requires grad,
// records a closure that accumulates input gradients from the output grad.
//
// Parallel kernels split work into units whose arithmetic does not depend on
// the thread count (batch elements, channels, fixed-size row blocks), so all
// results are bitwise reproducible for any number of threads.

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "motif/tensor.hpp"

namespace motif {

namespace detail {

constexpr Eigen::Index kLinearRowBlock = 64;

template <typename Scalar>
inline bool all_finite(const Tensor<Scalar>& t) {
  return t.values().isFinite().all();
}

inline void check_axis(int axis, int ndim, const char* who) {
  require(axis >= 0 && axis < ndim,
          std::string(who) + ": axis " + std::to_string(axis) + " out of range for rank " +
              std::to_string(ndim));
}

struct AxisSplit {
  Eigen::Index outer, len, inner;
};

inline AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r{1, s[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i)
    r.inner *= s[i];
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise kernels

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require(a.shape() == b.shape(),
          "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<Scalar> y(a.shape());
  y.values() = a.values() + b.values();
  if (recording<Scalar>(a.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [an = a.node(), bn = b.node(), yn = y.node()] {
      if (yn->grad.size() == 0) return;
      if (an->requires_grad) ensure_grad(an) += yn->grad;
      if (bn->requires_grad) ensure_grad(bn) += yn->grad;
    });
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require(a.shape() == b.shape(),
          "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<Scalar> y(a.shape());
  y.values() = a.values() - b.values();
  if (recording<Scalar>(a.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [an = a.node(), bn = b.node(), yn = y.node()] {
      if (yn->grad.size() == 0) return;
      if (an->requires_grad) ensure_grad(an) += yn->grad;
      if (bn->requires_grad) ensure_grad(bn) -= yn->grad;
    });
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require(a.shape() == b.shape(),
          "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<Scalar> y(a.shape());
  y.values() = a.values() * b.values();
  if (recording<Scalar>(a.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [an = a.node(), bn = b.node(), yn = y.node()] {
      if (yn->grad.size() == 0) return;
      if (an->requires_grad) ensure_grad(an) += yn->grad * bn->value;
      if (bn->requires_grad) ensure_grad(bn) += yn->grad * an->value;
    });
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar c) {
  Tensor<Scalar> y(a.shape());
  y.values() = a.values() * c;
  if (recording<Scalar>(a.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [an = a.node(), yn = y.node(), c] {
      if (yn->grad.size() == 0) return;
      ensure_grad(an) += yn->grad * c;
    });
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> silu(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.shape());
  y.values() = x.values() / (Scalar(1) + (-x.values()).exp());
  if (recording<Scalar>(x.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [xn = x.node(), yn = y.node()] {
      if (yn->grad.size() == 0) return;
      ArrX<Scalar> s = Scalar(1) / (Scalar(1) + (-xn->value).exp());
      ensure_grad(xn) += yn->grad * s * (Scalar(1) + xn->value * (Scalar(1) - s));
    });
  }
  return y;
}

// Inverted dropout: survivors are scaled by 1/(1-p) at train time, so eval is
// the exact identity (the input handle is returned unchanged).
template <typename Scalar>
Tensor<Scalar> dropout(const Tensor<Scalar>& x, double p, bool training, RngStream& rng) {
  if (p < 0.0 || p >= 1.0)
    throw ConfigError("dropout: p must lie in [0,1), got " + std::to_string(p));
  if (!training) return x;
  auto mask = std::make_shared<ArrX<Scalar>>(x.numel());
  const Scalar keep_scale = Scalar(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < x.numel(); ++i)
    (*mask)[i] = rng.uniform() >= p ? keep_scale : Scalar(0);
  Tensor<Scalar> y(x.shape());
  y.values() = x.values() * (*mask);
  if (recording<Scalar>(x.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [xn = x.node(), yn = y.node(), mask] {
      if (yn->grad.size() == 0) return;
      ensure_grad(xn) += yn->grad * (*mask);
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Structural kernels

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape new_shape) {
  require(shape_numel(new_shape) == x.numel(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
  Tensor<Scalar> y(std::move(new_shape));
  y.values() = x.values();
  if (recording<Scalar>(x.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [xn = x.node(), yn = y.node()] {
      if (yn->grad.size() == 0) return;
      ensure_grad(xn) += yn->grad;
    });
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  detail::check_axis(axis, parts[0].ndim(), "concat");
  Shape out_shape = parts[0].shape();
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    s[static_cast<std::size_t>(axis)] = out_shape[static_cast<std::size_t>(axis)];
    require(s == out_shape, "concat: incompatible shape " + shape_str(p.shape()));
    total += p.dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = total;
  Tensor<Scalar> y(out_shape);
  const auto sp = detail::split_at(out_shape, axis);
  bool any_grad = false;
  Eigen::Index a_off = 0;
  for (const auto& p : parts) {
    const Eigen::Index len = p.dim(axis);
    for (Eigen::Index o = 0; o < sp.outer; ++o) {
      std::copy_n(p.data() + o * len * sp.inner, len * sp.inner,
                  y.data() + (o * sp.len + a_off) * sp.inner);
    }
    a_off += len;
    any_grad = any_grad || p.requires_grad();
  }
  if (recording<Scalar>(any_grad)) {
    y.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorNode<Scalar>>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    Tape<Scalar>::current()->record(y.node(), [nodes, yn = y.node(), sp] {
      if (yn->grad.size() == 0) return;
      Eigen::Index off = 0;
      for (const auto& n : nodes) {
        const Eigen::Index len = n->value.size() / (sp.outer * sp.inner);
        if (n->requires_grad) {
          auto& g = ensure_grad(n);
          for (Eigen::Index o = 0; o < sp.outer; ++o)
            g.segment(o * len * sp.inner, len * sp.inner) +=
                yn->grad.segment((o * sp.len + off) * sp.inner, len * sp.inner);
        }
        off += len;
      }
    });
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, int axis, Eigen::Index start, Eigen::Index len) {
  detail::check_axis(axis, x.ndim(), "slice");
  require(start >= 0 && len >= 1 && start + len <= x.dim(axis),
          "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
              ") out of bounds for axis size " + std::to_string(x.dim(axis)));
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  Tensor<Scalar> y(out_shape);
  const auto sp = detail::split_at(x.shape(), axis);
  for (Eigen::Index o = 0; o < sp.outer; ++o)
    std::copy_n(x.data() + (o * sp.len + start) * sp.inner, len * sp.inner,
                y.data() + o * len * sp.inner);
  if (recording<Scalar>(x.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [xn = x.node(), yn = y.node(), sp, start, len] {
      if (yn->grad.size() == 0) return;
      auto& g = ensure_grad(xn);
      for (Eigen::Index o = 0; o < sp.outer; ++o)
        g.segment((o * sp.len + start) * sp.inner, len * sp.inner) +=
            yn->grad.segment(o * len * sp.inner, len * sp.inner);
    });
  }
  return y;
}

// (B, X, Y) -> (B, Y, X)
template <typename Scalar>
Tensor<Scalar> transpose12(const Tensor<Scalar>& x) {
  require(x.ndim() == 3, "transpose12: expected rank 3, got " + shape_str(x.shape()));
  const Eigen::Index B = x.dim(0), X = x.dim(1), Y = x.dim(2);
  Tensor<Scalar> y({B, Y, X});
  for (Eigen::Index b = 0; b < B; ++b) {
    CMapMat<Scalar> xb(x.data() + b * X * Y, X, Y);
    MapMat<Scalar> yb(y.data() + b * X * Y, Y, X);
    yb = xb.transpose();
  }
  if (recording<Scalar>(x.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [xn = x.node(), yn = y.node(), B, X, Y] {
      if (yn->grad.size() == 0) return;
      auto& g = ensure_grad(xn);
      for (Eigen::Index b = 0; b < B; ++b) {
        CMapMat<Scalar> gy(yn->grad.data() + b * X * Y, Y, X);
        MapMat<Scalar> gx(g.data() + b * X * Y, X, Y);
        gx += gy.transpose();
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Reductions

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  Tensor<Scalar> y = Tensor<Scalar>::scalar(x.values().sum());
  if (recording<Scalar>(x.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [xn = x.node(), yn = y.node()] {
      if (yn->grad.size() == 0) return;
      ensure_grad(xn) += yn->grad[0];
    });
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  const Scalar inv = Scalar(1) / static_cast<Scalar>(x.numel());
  Tensor<Scalar> y = Tensor<Scalar>::scalar(x.values().sum() * inv);
  if (recording<Scalar>(x.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [xn = x.node(), yn = y.node(), inv] {
      if (yn->grad.size() == 0) return;
      ensure_grad(xn) += yn->grad[0] * inv;
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Affine map on the last axis: y[..., o] = sum_i x[..., i] * W[o, i] + b[o]

template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                      const Tensor<Scalar>& b) {
  require(x.ndim() >= 1, "linear: input must have rank >= 1");
  require(w.ndim() == 2, "linear: weight must be rank 2, got " + shape_str(w.shape()));
  const Eigen::Index d_in = x.dim(x.ndim() - 1);
  const Eigen::Index d_out = w.dim(0);
  require(w.dim(1) == d_in, "linear: input feature dimension " + std::to_string(d_in) +
                                " does not match weight D_in " + std::to_string(w.dim(1)));
  require(b.ndim() == 1 && b.dim(0) == d_out,
          "linear: bias dimension " + shape_str(b.shape()) + " does not match D_out " +
              std::to_string(d_out));
  Shape out_shape = x.shape();
  out_shape.back() = d_out;
  Tensor<Scalar> y(out_shape);
  const Eigen::Index m = x.numel() / d_in;

  CMapMat<Scalar> xm(x.data(), m, d_in);
  CMapMat<Scalar> wm(w.data(), d_out, d_in);
  MapMat<Scalar> ym(y.data(), m, d_out);
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> bv(b.data(), d_out);

  const Eigen::Index nblk = (m + detail::kLinearRowBlock - 1) / detail::kLinearRowBlock;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Eigen::Index blk = 0; blk < nblk; ++blk) {
    const Eigen::Index r0 = blk * detail::kLinearRowBlock;
    const Eigen::Index nr = std::min(detail::kLinearRowBlock, m - r0);
    ym.middleRows(r0, nr).noalias() = xm.middleRows(r0, nr) * wm.transpose();
    ym.middleRows(r0, nr).rowwise() += bv.transpose();
  }

  if (recording<Scalar>(x.requires_grad() || w.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(
        y.node(),
        [xn = x.node(), wn = w.node(), bn = b.node(), yn = y.node(), m, d_in, d_out] {
          if (yn->grad.size() == 0) return;
          CMapMat<Scalar> gy(yn->grad.data(), m, d_out);
          CMapMat<Scalar> xm(xn->value.data(), m, d_in);
          CMapMat<Scalar> wm(wn->value.data(), d_out, d_in);
          if (xn->requires_grad) {
            MapMat<Scalar> gx(ensure_grad(xn).data(), m, d_in);
            const Eigen::Index nblk =
                (m + detail::kLinearRowBlock - 1) / detail::kLinearRowBlock;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
            for (Eigen::Index blk = 0; blk < nblk; ++blk) {
              const Eigen::Index r0 = blk * detail::kLinearRowBlock;
              const Eigen::Index nr = std::min(detail::kLinearRowBlock, m - r0);
              gx.middleRows(r0, nr).noalias() += gy.middleRows(r0, nr) * wm;
            }
          }
          if (wn->requires_grad) {
            MapMat<Scalar> gw(ensure_grad(wn).data(), d_out, d_in);
            const Eigen::Index nblk =
                (d_out + detail::kLinearRowBlock - 1) / detail::kLinearRowBlock;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
            for (Eigen::Index blk = 0; blk < nblk; ++blk) {
              const Eigen::Index r0 = blk * detail::kLinearRowBlock;
              const Eigen::Index nr = std::min(detail::kLinearRowBlock, d_out - r0);
              gw.middleRows(r0, nr).noalias() += gy.middleCols(r0, nr).transpose() * xm;
            }
          }
          if (bn->requires_grad) {
            Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> gb(ensure_grad(bn).data(),
                                                                    d_out);
            gb += gy.colwise().sum().transpose();
          }
        });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Temporal cross-correlation, zero padding, length preserving (odd k).
// x: (B, C_in, N), w: (C_out, C_in, k), b: (C_out) -> (B, C_out, N)

template <typename Scalar>
Tensor<Scalar> conv1d(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                      const Tensor<Scalar>& b) {
  require(x.ndim() == 3, "conv1d: input must be rank 3 (BxC_inxN), got " + shape_str(x.shape()));
  require(w.ndim() == 3, "conv1d: weight must be rank 3 (C_outxC_inxk), got " + shape_str(w.shape()));
  const Eigen::Index B = x.dim(0), c_in = x.dim(1), N = x.dim(2);
  const Eigen::Index c_out = w.dim(0), k = w.dim(2);
  require(w.dim(1) == c_in, "conv1d: input channel dimension " + std::to_string(c_in) +
                                " does not match weight C_in " + std::to_string(w.dim(1)));
  require(k % 2 == 1, "conv1d: kernel size " + std::to_string(k) + " must be odd");
  require(b.ndim() == 1 && b.dim(0) == c_out,
          "conv1d: bias dimension " + shape_str(b.shape()) + " does not match C_out " +
              std::to_string(c_out));
  const Eigen::Index pad = (k - 1) / 2;

  // Taps are strided in the weight layout; pack them once per call.
  auto taps = std::make_shared<std::vector<MatRM<Scalar>>>(static_cast<std::size_t>(k));
  for (Eigen::Index t = 0; t < k; ++t) {
    auto& wt = (*taps)[static_cast<std::size_t>(t)];
    wt.resize(c_out, c_in);
    for (Eigen::Index co = 0; co < c_out; ++co)
      for (Eigen::Index ci = 0; ci < c_in; ++ci)
        wt(co, ci) = w.data()[(co * c_in + ci) * k + t];
  }

  Tensor<Scalar> y({B, c_out, N});
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> bv(b.data(), c_out);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Eigen::Index bi = 0; bi < B; ++bi) {
    CMapMat<Scalar> in_b(x.data() + bi * c_in * N, c_in, N);
    MapMat<Scalar> out_b(y.data() + bi * c_out * N, c_out, N);
    out_b.colwise() = bv;
    for (Eigen::Index t = 0; t < k; ++t) {
      const Eigen::Index off = t - pad;
      const Eigen::Index lo = std::max<Eigen::Index>(0, -off);
      const Eigen::Index hi = std::min<Eigen::Index>(N, N - off);
      if (hi <= lo) continue;
      out_b.block(0, lo, c_out, hi - lo).noalias() +=
          (*taps)[static_cast<std::size_t>(t)] * in_b.block(0, lo + off, c_in, hi - lo);
    }
  }

  if (recording<Scalar>(x.requires_grad() || w.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [xn = x.node(), wn = w.node(), bn = b.node(),
                                     yn = y.node(), taps, B, c_in, c_out, N, k, pad] {
      if (yn->grad.size() == 0) return;
      if (xn->requires_grad) {
        auto& gx = ensure_grad(xn);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (Eigen::Index bi = 0; bi < B; ++bi) {
          CMapMat<Scalar> gy_b(yn->grad.data() + bi * c_out * N, c_out, N);
          MapMat<Scalar> gx_b(gx.data() + bi * c_in * N, c_in, N);
          for (Eigen::Index t = 0; t < k; ++t) {
            const Eigen::Index off = t - pad;
            const Eigen::Index lo = std::max<Eigen::Index>(0, -off);
            const Eigen::Index hi = std::min<Eigen::Index>(N, N - off);
            if (hi <= lo) continue;
            gx_b.block(0, lo + off, c_in, hi - lo).noalias() +=
                (*taps)[static_cast<std::size_t>(t)].transpose() *
                gy_b.block(0, lo, c_out, hi - lo);
          }
        }
      }
      if (wn->requires_grad) {
        auto& gw = ensure_grad(wn);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (Eigen::Index t = 0; t < k; ++t) {
          const Eigen::Index off = t - pad;
          const Eigen::Index lo = std::max<Eigen::Index>(0, -off);
          const Eigen::Index hi = std::min<Eigen::Index>(N, N - off);
          if (hi <= lo) continue;
          MatRM<Scalar> acc = MatRM<Scalar>::Zero(c_out, c_in);
          for (Eigen::Index bi = 0; bi < B; ++bi) {
            CMapMat<Scalar> gy_b(yn->grad.data() + bi * c_out * N, c_out, N);
            CMapMat<Scalar> in_b(xn->value.data() + bi * c_in * N, c_in, N);
            acc.noalias() += gy_b.block(0, lo, c_out, hi - lo) *
                             in_b.block(0, lo + off, c_in, hi - lo).transpose();
          }
          for (Eigen::Index co = 0; co < c_out; ++co)
            for (Eigen::Index ci = 0; ci < c_in; ++ci)
              gw[(co * c_in + ci) * k + t] += acc(co, ci);
        }
      }
      if (bn->requires_grad) {
        auto& gb = ensure_grad(bn);
        for (Eigen::Index bi = 0; bi < B; ++bi) {
          CMapMat<Scalar> gy_b(yn->grad.data() + bi * c_out * N, c_out, N);
          for (Eigen::Index co = 0; co < c_out; ++co) gb[co] += gy_b.row(co).sum();
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Numerically stable softmax along an axis.

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, int axis) {
  detail::check_axis(axis, x.ndim(), "softmax");
  require(detail::all_finite(x), "softmax: non-finite input");
  const auto sp = detail::split_at(x.shape(), axis);
  Tensor<Scalar> y(x.shape());
  const Eigen::Index slices = sp.outer * sp.inner;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Eigen::Index si = 0; si < slices; ++si) {
    const Eigen::Index o = si / sp.inner, in = si % sp.inner;
    const Scalar* xs = x.data() + o * sp.len * sp.inner + in;
    Scalar* ys = y.data() + o * sp.len * sp.inner + in;
    Scalar mx = xs[0];
    for (Eigen::Index j = 1; j < sp.len; ++j) mx = std::max(mx, xs[j * sp.inner]);
    Scalar total = 0;
    for (Eigen::Index j = 0; j < sp.len; ++j) {
      const Scalar e = std::exp(xs[j * sp.inner] - mx);
      ys[j * sp.inner] = e;
      total += e;
    }
    const Scalar inv = Scalar(1) / total;
    for (Eigen::Index j = 0; j < sp.len; ++j) ys[j * sp.inner] *= inv;
  }
  if (recording<Scalar>(x.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [xn = x.node(), yn = y.node(), sp] {
      if (yn->grad.size() == 0) return;
      auto& gx = ensure_grad(xn);
      const Eigen::Index slices = sp.outer * sp.inner;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (Eigen::Index si = 0; si < slices; ++si) {
        const Eigen::Index o = si / sp.inner, in = si % sp.inner;
        const Eigen::Index base = o * sp.len * sp.inner + in;
        Scalar dot = 0;
        for (Eigen::Index j = 0; j < sp.len; ++j)
          dot += yn->grad[base + j * sp.inner] * yn->value[base + j * sp.inner];
        for (Eigen::Index j = 0; j < sp.len; ++j)
          gx[base + j * sp.inner] += yn->value[base + j * sp.inner] *
                                     (yn->grad[base + j * sp.inner] - dot);
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Group normalization with timestep-conditioned scale/shift.
//
// Statistics are computed per (batch, group, frame) over the group's channels
// only. Pooling statistics over time would couple every pair of frames and
// destroy the denoiser's bounded temporal receptive field, so the temporal
// axis is deliberately excluded.
// out = normalized * (1 + scale) + shift, with scale/shift per (batch, channel).

template <typename Scalar>
Tensor<Scalar> group_norm_scale_shift(const Tensor<Scalar>& x, int groups,
                                      const Tensor<Scalar>& scale_t,
                                      const Tensor<Scalar>& shift_t,
                                      Scalar eps = Scalar(1e-5)) {
  require(x.ndim() == 3, "group_norm: input must be rank 3 (BxCxN), got " + shape_str(x.shape()));
  const Eigen::Index B = x.dim(0), C = x.dim(1), N = x.dim(2);
  require(groups >= 1 && C % groups == 0,
          "group_norm: channel count " + std::to_string(C) + " not divisible by groups " +
              std::to_string(groups));
  require(scale_t.ndim() == 2 && scale_t.dim(0) == B && scale_t.dim(1) == C,
          "group_norm: scale shape " + shape_str(scale_t.shape()) + " must be BxC");
  require(shift_t.ndim() == 2 && shift_t.dim(0) == B && shift_t.dim(1) == C,
          "group_norm: shift shape " + shape_str(shift_t.shape()) + " must be BxC");
  const Eigen::Index cg = C / groups;

  Tensor<Scalar> y(x.shape());
  auto mean_buf = std::make_shared<ArrX<Scalar>>(B * groups * N);
  auto rstd_buf = std::make_shared<ArrX<Scalar>>(B * groups * N);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index g = 0; g < groups; ++g) {
      for (Eigen::Index n = 0; n < N; ++n) {
        Scalar m = 0;
        for (Eigen::Index c = 0; c < cg; ++c)
          m += x.data()[(b * C + g * cg + c) * N + n];
        m /= static_cast<Scalar>(cg);
        Scalar var = 0;
        for (Eigen::Index c = 0; c < cg; ++c) {
          const Scalar d = x.data()[(b * C + g * cg + c) * N + n] - m;
          var += d * d;
        }
        var /= static_cast<Scalar>(cg);
        const Scalar rs = Scalar(1) / std::sqrt(var + eps);
        (*mean_buf)[(b * groups + g) * N + n] = m;
        (*rstd_buf)[(b * groups + g) * N + n] = rs;
        for (Eigen::Index c = 0; c < cg; ++c) {
          const Eigen::Index ci = g * cg + c;
          const Scalar xhat = (x.data()[(b * C + ci) * N + n] - m) * rs;
          y.data()[(b * C + ci) * N + n] =
              xhat * (Scalar(1) + scale_t.data()[b * C + ci]) + shift_t.data()[b * C + ci];
        }
      }
    }
  }

  if (recording<Scalar>(x.requires_grad() || scale_t.requires_grad() ||
                        shift_t.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [xn = x.node(), sn = scale_t.node(),
                                     tn = shift_t.node(), yn = y.node(), mean_buf,
                                     rstd_buf, B, C, N, groups, cg] {
      if (yn->grad.size() == 0) return;
      ArrX<Scalar>* gx = xn->requires_grad ? &ensure_grad(xn) : nullptr;
      ArrX<Scalar>* gs = sn->requires_grad ? &ensure_grad(sn) : nullptr;
      ArrX<Scalar>* gt = tn->requires_grad ? &ensure_grad(tn) : nullptr;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (Eigen::Index b = 0; b < B; ++b) {
        std::vector<Scalar> ghat(static_cast<std::size_t>(cg));
        std::vector<Scalar> xhat(static_cast<std::size_t>(cg));
        for (Eigen::Index g = 0; g < groups; ++g) {
          for (Eigen::Index n = 0; n < N; ++n) {
            const Scalar m = (*mean_buf)[(b * groups + g) * N + n];
            const Scalar rs = (*rstd_buf)[(b * groups + g) * N + n];
            Scalar m1 = 0, m2 = 0;
            for (Eigen::Index c = 0; c < cg; ++c) {
              const Eigen::Index ci = g * cg + c;
              const Eigen::Index xi = (b * C + ci) * N + n;
              xhat[static_cast<std::size_t>(c)] = (xn->value[xi] - m) * rs;
              const Scalar go = yn->grad[xi];
              ghat[static_cast<std::size_t>(c)] =
                  go * (Scalar(1) + sn->value[b * C + ci]);
              if (gs) (*gs)[b * C + ci] += go * xhat[static_cast<std::size_t>(c)];
              if (gt) (*gt)[b * C + ci] += go;
              m1 += ghat[static_cast<std::size_t>(c)];
              m2 += ghat[static_cast<std::size_t>(c)] * xhat[static_cast<std::size_t>(c)];
            }
            if (gx) {
              m1 /= static_cast<Scalar>(cg);
              m2 /= static_cast<Scalar>(cg);
              for (Eigen::Index c = 0; c < cg; ++c) {
                const Eigen::Index xi = (b * C + g * cg + c) * N + n;
                (*gx)[xi] += rs * (ghat[static_cast<std::size_t>(c)] - m1 -
                                   xhat[static_cast<std::size_t>(c)] * m2);
              }
            }
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Per-channel bias broadcast over the temporal axis: (B,C,N) + (B,C).

template <typename Scalar>
Tensor<Scalar> add_channel_bias(const Tensor<Scalar>& x, const Tensor<Scalar>& bias) {
  require(x.ndim() == 3, "add_channel_bias: input must be rank 3");
  const Eigen::Index B = x.dim(0), C = x.dim(1), N = x.dim(2);
  require(bias.ndim() == 2 && bias.dim(0) == B && bias.dim(1) == C,
          "add_channel_bias: bias shape " + shape_str(bias.shape()) + " must be BxC");
  Tensor<Scalar> y(x.shape());
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index c = 0; c < C; ++c)
      y.values().segment((b * C + c) * N, N) =
          x.values().segment((b * C + c) * N, N) + bias.data()[b * C + c];
  if (recording<Scalar>(x.requires_grad() || bias.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [xn = x.node(), bn = bias.node(), yn = y.node(), B, C, N] {
      if (yn->grad.size() == 0) return;
      if (xn->requires_grad) ensure_grad(xn) += yn->grad;
      if (bn->requires_grad) {
        auto& gb = ensure_grad(bn);
        for (Eigen::Index b = 0; b < B; ++b)
          for (Eigen::Index c = 0; c < C; ++c)
            gb[b * C + c] += yn->grad.segment((b * C + c) * N, N).sum();
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Temporal resampling: stride-2 average pooling and its linear-interpolation
// inverse, both on (B, C, N).

template <typename Scalar>
Tensor<Scalar> avg_pool2(const Tensor<Scalar>& x) {
  require(x.ndim() == 3, "avg_pool2: input must be rank 3");
  const Eigen::Index B = x.dim(0), C = x.dim(1), N = x.dim(2);
  require(N % 2 == 0, "avg_pool2: temporal length " + std::to_string(N) + " must be even");
  const Eigen::Index M = N / 2;
  Tensor<Scalar> y({B, C, M});
  for (Eigen::Index r = 0; r < B * C; ++r)
    for (Eigen::Index i = 0; i < M; ++i)
      y.data()[r * M + i] =
          (x.data()[r * N + 2 * i] + x.data()[r * N + 2 * i + 1]) * Scalar(0.5);
  if (recording<Scalar>(x.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [xn = x.node(), yn = y.node(), B, C, N, M] {
      if (yn->grad.size() == 0) return;
      auto& gx = ensure_grad(xn);
      for (Eigen::Index r = 0; r < B * C; ++r)
        for (Eigen::Index i = 0; i < M; ++i) {
          const Scalar g = yn->grad[r * M + i] * Scalar(0.5);
          gx[r * N + 2 * i] += g;
          gx[r * N + 2 * i + 1] += g;
        }
    });
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> upsample_linear2(const Tensor<Scalar>& x) {
  require(x.ndim() == 3, "upsample_linear2: input must be rank 3");
  const Eigen::Index B = x.dim(0), C = x.dim(1), N = x.dim(2);
  const Eigen::Index M = 2 * N;
  Tensor<Scalar> y({B, C, M});
  for (Eigen::Index r = 0; r < B * C; ++r) {
    for (Eigen::Index i = 0; i < N; ++i) {
      y.data()[r * M + 2 * i] = x.data()[r * N + i];
      y.data()[r * M + 2 * i + 1] =
          i + 1 < N ? (x.data()[r * N + i] + x.data()[r * N + i + 1]) * Scalar(0.5)
                    : x.data()[r * N + i];
    }
  }
  if (recording<Scalar>(x.requires_grad())) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [xn = x.node(), yn = y.node(), B, C, N, M] {
      if (yn->grad.size() == 0) return;
      auto& gx = ensure_grad(xn);
      for (Eigen::Index r = 0; r < B * C; ++r) {
        for (Eigen::Index i = 0; i < N; ++i) {
          gx[r * N + i] += yn->grad[r * M + 2 * i];
          const Scalar g = yn->grad[r * M + 2 * i + 1];
          if (i + 1 < N) {
            gx[r * N + i] += g * Scalar(0.5);
            gx[r * N + i + 1] += g * Scalar(0.5);
          } else {
            gx[r * N + i] += g;
          }
        }
      }
    });
  }
  return y;
}

}  // namespace motif
