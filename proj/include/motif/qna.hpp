#pragma once

// Local attention with learned queries. One query vector per head is shared
// by every window, so only keys and values are projected from the input. For
// frame i the window is its k-neighbourhood; positions that fall outside the
// sequence are masked out of the softmax rather than attended to as zeros.

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "motif/tensor.hpp"
#include "motif/ops.hpp"

namespace motif {

namespace detail {

// y (m x out) = x (m x in) * w^T + b, row-blocked; accumulate=false assigns.
template <typename Scalar>
void gemm_bias(const Scalar* x, const Scalar* w, const Scalar* b, Scalar* y,
               Eigen::Index m, Eigen::Index in, Eigen::Index out) {
  CMapMat<Scalar> xm(x, m, in);
  CMapMat<Scalar> wm(w, out, in);
  MapMat<Scalar> ym(y, m, out);
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> bv(b, out);
  const Eigen::Index nblk = (m + kLinearRowBlock - 1) / kLinearRowBlock;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Eigen::Index blk = 0; blk < nblk; ++blk) {
    const Eigen::Index r0 = blk * kLinearRowBlock;
    const Eigen::Index nr = std::min(kLinearRowBlock, m - r0);
    ym.middleRows(r0, nr).noalias() = xm.middleRows(r0, nr) * wm.transpose();
    ym.middleRows(r0, nr).rowwise() += bv.transpose();
  }
}

}  // namespace detail

// x: (B, N, D_e); q: (H, d); wk, wv: (H*d, D_e); bk, bv: (H*d);
// wo: (D_e, H*d); bo: (D_e). Returns (B, N, D_e).
template <typename Scalar>
Tensor<Scalar> qna_attention(const Tensor<Scalar>& x, const Tensor<Scalar>& q,
                             const Tensor<Scalar>& wk, const Tensor<Scalar>& bk,
                             const Tensor<Scalar>& wv, const Tensor<Scalar>& bv,
                             const Tensor<Scalar>& wo, const Tensor<Scalar>& bo,
                             Eigen::Index window) {
  require(x.ndim() == 3, "qna: input must be rank 3 (BxNxD_e), got " + shape_str(x.shape()));
  const Eigen::Index B = x.dim(0), N = x.dim(1), De = x.dim(2);
  require(window % 2 == 1, "qna: window " + std::to_string(window) + " must be odd");
  require(window <= 2 * N,
          "qna: window " + std::to_string(window) + " exceeds twice the sequence length " +
              std::to_string(N));
  require(q.ndim() == 2, "qna: queries must be rank 2 (heads x head_dim)");
  const Eigen::Index H = q.dim(0), d = q.dim(1);
  const Eigen::Index hd = H * d;
  require(wk.ndim() == 2 && wk.dim(0) == hd && wk.dim(1) == De,
          "qna: W_K shape " + shape_str(wk.shape()) + " must be (heads*head_dim)xD_e");
  require(wv.ndim() == 2 && wv.dim(0) == hd && wv.dim(1) == De,
          "qna: W_V shape " + shape_str(wv.shape()) + " must be (heads*head_dim)xD_e");
  require(wo.ndim() == 2 && wo.dim(0) == De && wo.dim(1) == hd,
          "qna: W_O shape " + shape_str(wo.shape()) + " must be D_ex(heads*head_dim)");
  require(bk.numel() == hd && bv.numel() == hd && bo.numel() == De,
          "qna: bias dimensions do not match projections");

  const Eigen::Index r = (window - 1) / 2;
  const Eigen::Index m = B * N;
  const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(d));

  auto keys = std::make_shared<MatRM<Scalar>>(m, hd);
  auto vals = std::make_shared<MatRM<Scalar>>(m, hd);
  auto attn = std::make_shared<ArrX<Scalar>>(B * H * N * window);
  auto ctx = std::make_shared<MatRM<Scalar>>(m, hd);

  detail::gemm_bias(x.data(), wk.data(), bk.data(), keys->data(), m, De, hd);
  detail::gemm_bias(x.data(), wv.data(), bv.data(), vals->data(), m, De, hd);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Eigen::Index bh = 0; bh < B * H; ++bh) {
    const Eigen::Index b = bh / H, h = bh % H;
    const Scalar* qh = q.data() + h * d;
    std::vector<Scalar> logits(static_cast<std::size_t>(window));
    for (Eigen::Index i = 0; i < N; ++i) {
      const Eigen::Index jlo = std::max<Eigen::Index>(0, i - r);
      const Eigen::Index jhi = std::min<Eigen::Index>(N - 1, i + r);
      Scalar mx = -std::numeric_limits<Scalar>::infinity();
      for (Eigen::Index j = jlo; j <= jhi; ++j) {
        const Scalar* krow = keys->data() + (b * N + j) * hd + h * d;
        Scalar l = 0;
        for (Eigen::Index e = 0; e < d; ++e) l += qh[e] * krow[e];
        l *= inv_sqrt_d;
        logits[static_cast<std::size_t>(j - jlo)] = l;
        mx = std::max(mx, l);
      }
      Scalar total = 0;
      for (Eigen::Index j = jlo; j <= jhi; ++j) {
        const Scalar e = std::exp(logits[static_cast<std::size_t>(j - jlo)] - mx);
        logits[static_cast<std::size_t>(j - jlo)] = e;
        total += e;
      }
      const Scalar inv = Scalar(1) / total;
      Scalar* zrow = ctx->data() + (b * N + i) * hd + h * d;
      for (Eigen::Index e = 0; e < d; ++e) zrow[e] = 0;
      Scalar* arow = attn->data() + (bh * N + i) * window;
      for (Eigen::Index w = 0; w < window; ++w) arow[w] = 0;
      for (Eigen::Index j = jlo; j <= jhi; ++j) {
        const Scalar a = logits[static_cast<std::size_t>(j - jlo)] * inv;
        arow[j - (i - r)] = a;
        const Scalar* vrow = vals->data() + (b * N + j) * hd + h * d;
        for (Eigen::Index e = 0; e < d; ++e) zrow[e] += a * vrow[e];
      }
    }
  }

  Tensor<Scalar> y({B, N, De});
  detail::gemm_bias(ctx->data(), wo.data(), bo.data(), y.data(), m, hd, De);

  const bool rec = recording<Scalar>(x.requires_grad() || q.requires_grad() ||
                                     wk.requires_grad() || bk.requires_grad() ||
                                     wv.requires_grad() || bv.requires_grad() ||
                                     wo.requires_grad() || bo.requires_grad());
  if (rec) {
    y.set_requires_grad(true);
    Tape<Scalar>::current()->record(y.node(), [xn = x.node(), qn = q.node(), wkn = wk.node(),
                                     bkn = bk.node(), wvn = wv.node(), bvn = bv.node(),
                                     won = wo.node(), bon = bo.node(), yn = y.node(),
                                     keys, vals, attn, ctx, B, N, De, H, d, hd, window, r,
                                     inv_sqrt_d] {
      if (yn->grad.size() == 0) return;
      const Eigen::Index m = B * N;
      CMapMat<Scalar> gy(yn->grad.data(), m, De);
      CMapMat<Scalar> wom(won->value.data(), De, hd);

      // Through the output projection.
      MatRM<Scalar> gz(m, hd);
      {
        const Eigen::Index nblk =
            (m + detail::kLinearRowBlock - 1) / detail::kLinearRowBlock;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (Eigen::Index blk = 0; blk < nblk; ++blk) {
          const Eigen::Index r0 = blk * detail::kLinearRowBlock;
          const Eigen::Index nr = std::min(detail::kLinearRowBlock, m - r0);
          gz.middleRows(r0, nr).noalias() = gy.middleRows(r0, nr) * wom;
        }
      }
      if (won->requires_grad) {
        MapMat<Scalar> gwo(ensure_grad(won).data(), De, hd);
        gwo.noalias() += gy.transpose() * (*ctx);
      }
      if (bon->requires_grad) {
        Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> gbo(ensure_grad(bon).data(), De);
        gbo += gy.colwise().sum().transpose();
      }

      // Through the attention core, collecting key/value/query grads.
      MatRM<Scalar> gk = MatRM<Scalar>::Zero(m, hd);
      MatRM<Scalar> gv = MatRM<Scalar>::Zero(m, hd);
      MatRM<Scalar> gq_partial = MatRM<Scalar>::Zero(B, hd);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (Eigen::Index bh = 0; bh < B * H; ++bh) {
        const Eigen::Index b = bh / H, h = bh % H;
        const Scalar* qh = qn->value.data() + h * d;
        std::vector<Scalar> ga(static_cast<std::size_t>(window));
        for (Eigen::Index i = 0; i < N; ++i) {
          const Eigen::Index jlo = std::max<Eigen::Index>(0, i - r);
          const Eigen::Index jhi = std::min<Eigen::Index>(N - 1, i + r);
          const Scalar* gzrow = gz.data() + (b * N + i) * hd + h * d;
          const Scalar* arow = attn->data() + (bh * N + i) * window;
          Scalar dot = 0;
          for (Eigen::Index j = jlo; j <= jhi; ++j) {
            const Scalar* vrow = vals->data() + (b * N + j) * hd + h * d;
            Scalar s = 0;
            for (Eigen::Index e = 0; e < d; ++e) s += gzrow[e] * vrow[e];
            ga[static_cast<std::size_t>(j - jlo)] = s;
            dot += s * arow[j - (i - r)];
          }
          for (Eigen::Index j = jlo; j <= jhi; ++j) {
            const Scalar a = arow[j - (i - r)];
            const Scalar gl = a * (ga[static_cast<std::size_t>(j - jlo)] - dot);
            const Scalar gls = gl * inv_sqrt_d;
            Scalar* gkrow = gk.data() + (b * N + j) * hd + h * d;
            Scalar* gvrow = gv.data() + (b * N + j) * hd + h * d;
            const Scalar* krow = keys->data() + (b * N + j) * hd + h * d;
            Scalar* gqrow = gq_partial.data() + b * hd + h * d;
            for (Eigen::Index e = 0; e < d; ++e) {
              gkrow[e] += gls * qh[e];
              gqrow[e] += gls * krow[e];
              gvrow[e] += a * gzrow[e];
            }
          }
        }
      }
      if (qn->requires_grad) {
        auto& gq = ensure_grad(qn);
        for (Eigen::Index b = 0; b < B; ++b)
          for (Eigen::Index e = 0; e < hd; ++e) gq[e] += gq_partial(b, e);
      }

      // Through the key/value projections.
      CMapMat<Scalar> xm(xn->value.data(), m, De);
      if (wkn->requires_grad) {
        MapMat<Scalar> gwk(ensure_grad(wkn).data(), hd, De);
        gwk.noalias() += gk.transpose() * xm;
      }
      if (bkn->requires_grad) {
        Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> gbk(ensure_grad(bkn).data(), hd);
        gbk += gk.colwise().sum().transpose();
      }
      if (wvn->requires_grad) {
        MapMat<Scalar> gwv(ensure_grad(wvn).data(), hd, De);
        gwv.noalias() += gv.transpose() * xm;
      }
      if (bvn->requires_grad) {
        Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> gbv(ensure_grad(bvn).data(), hd);
        gbv += gv.colwise().sum().transpose();
      }
      if (xn->requires_grad) {
        MapMat<Scalar> gx(ensure_grad(xn).data(), m, De);
        CMapMat<Scalar> wkm(wkn->value.data(), hd, De);
        CMapMat<Scalar> wvm(wvn->value.data(), hd, De);
        const Eigen::Index nblk =
            (m + detail::kLinearRowBlock - 1) / detail::kLinearRowBlock;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (Eigen::Index blk = 0; blk < nblk; ++blk) {
          const Eigen::Index r0 = blk * detail::kLinearRowBlock;
          const Eigen::Index nr = std::min(detail::kLinearRowBlock, m - r0);
          gx.middleRows(r0, nr).noalias() += gk.middleRows(r0, nr) * wkm;
          gx.middleRows(r0, nr).noalias() += gv.middleRows(r0, nr) * wvm;
        }
      }
    });
  }
  return y;
}

}  // namespace motif
