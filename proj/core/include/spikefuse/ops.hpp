#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "spikefuse/gemm.hpp"
#include "spikefuse/tensor.hpp"
#include "spikefuse/threads.hpp"

namespace spikefuse {

namespace detail {

inline bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    const std::size_t off = big.size() - small.size();
    for (std::size_t i = 0; i < small.size(); ++i)
        if (small[i] != big[off + i]) return false;
    return true;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t nd = std::max(a.size(), b.size());
    Shape out(nd);
    for (std::size_t d = 0; d < nd; ++d) {
        const std::size_t ad = d < nd - a.size() ? 1 : a[d - (nd - a.size())];
        const std::size_t bd = d < nd - b.size() ? 1 : b[d - (nd - b.size())];
        check(ad == bd || ad == 1 || bd == 1, "cannot broadcast ", shape_str(a), " with ",
              shape_str(b));
        out[d] = std::max(ad, bd);
    }
    return out;
}

/// Visits every output element of a broadcast binary op as f(i_out, i_a, i_b).
/// Fast paths cover the shapes that actually occur in the model; the odometer
/// fallback handles the rest.
template <typename F>
void bcast_for_each(const Shape& out, const Shape& ash, const Shape& bsh, F&& f) {
    const std::size_t n = numel(out);
    if (ash == bsh) {
        for (std::size_t i = 0; i < n; ++i) f(i, i, i);
        return;
    }
    const std::size_t na = numel(ash), nb = numel(bsh);
    if (nb == 1 && ash == out) {
        for (std::size_t i = 0; i < n; ++i) f(i, i, 0);
        return;
    }
    if (na == 1 && bsh == out) {
        for (std::size_t i = 0; i < n; ++i) f(i, 0, i);
        return;
    }
    if (ash == out && is_suffix(bsh, out)) {
        for (std::size_t i = 0; i < n; ++i) f(i, i, i % nb);
        return;
    }
    if (bsh == out && is_suffix(ash, out)) {
        for (std::size_t i = 0; i < n; ++i) f(i, i % na, i);
        return;
    }
    const std::size_t nd = out.size();
    std::vector<std::size_t> sa(nd, 0), sb(nd, 0), idx(nd, 0);
    {
        auto strides_a = row_major_strides(ash);
        auto strides_b = row_major_strides(bsh);
        for (std::size_t d = 0; d < nd; ++d) {
            if (d >= nd - ash.size()) {
                const std::size_t ad = d - (nd - ash.size());
                sa[d] = ash[ad] == 1 ? 0 : strides_a[ad];
            }
            if (d >= nd - bsh.size()) {
                const std::size_t bd = d - (nd - bsh.size());
                sb[d] = bsh[bd] == 1 ? 0 : strides_b[bd];
            }
        }
    }
    std::size_t ia = 0, ib = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (std::size_t d = nd; d-- > 0;) {
            if (++idx[d] < out[d]) {
                ia += sa[d];
                ib += sb[d];
                break;
            }
            idx[d] = 0;
            ia -= sa[d] * (out[d] - 1);
            ib -= sb[d] * (out[d] - 1);
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise

/// fval(a, b) -> out; fga/fgb(g, a, b, out) -> grad contribution.
template <typename S, typename FV, typename FA, typename FB>
Tensor<S> binary_op(const Tensor<S>& a, const Tensor<S>& b, FV fval, FA fga, FB fgb) {
    Shape out_shape = detail::broadcast_shape(a.shape(), b.shape());
    std::vector<S> out(numel(out_shape));
    const auto& av = a.values();
    const auto& bv = b.values();
    detail::bcast_for_each(out_shape, a.shape(), b.shape(),
                           [&](std::size_t i, std::size_t ia, std::size_t ib) {
                               out[i] = fval(av[ia], bv[ib]);
                           });
    Tensor<S> ta = a, tb = b;
    return make_op<S>(
        std::move(out_shape), std::move(out), {a, b}, [ta, tb, fga, fgb](Node<S>& self) mutable {
            const bool na = ta.requires_grad(), nb = tb.requires_grad();
            S* ga = na ? ta.grad_mut().data() : nullptr;
            S* gb = nb ? tb.grad_mut().data() : nullptr;
            const auto& av = ta.values();
            const auto& bv = tb.values();
            const auto& g = self.grad;
            const auto& ov = self.values;
            detail::bcast_for_each(self.shape, ta.shape(), tb.shape(),
                                   [&](std::size_t i, std::size_t ia, std::size_t ib) {
                                       if (ga) ga[ia] += fga(g[i], av[ia], bv[ib], ov[i]);
                                       if (gb) gb[ib] += fgb(g[i], av[ia], bv[ib], ov[i]);
                                   });
        });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    return binary_op(
        a, b, [](S x, S y) { return x + y; }, [](S g, S, S, S) { return g; },
        [](S g, S, S, S) { return g; });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    return binary_op(
        a, b, [](S x, S y) { return x - y; }, [](S g, S, S, S) { return g; },
        [](S g, S, S, S) { return -g; });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    return binary_op(
        a, b, [](S x, S y) { return x * y; }, [](S g, S, S y, S) { return g * y; },
        [](S g, S x, S, S) { return g * x; });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
    return binary_op(
        a, b, [](S x, S y) { return x / y; }, [](S g, S, S y, S) { return g / y; },
        [](S g, S, S y, S o) { return -g * o / y; });
}

/// out = scale * x + shift
template <typename S>
Tensor<S> affine(const Tensor<S>& x, double scale, double shift = 0.0) {
    std::vector<S> out(x.size());
    const auto& xv = x.values();
    const S sc = static_cast<S>(scale), sh = static_cast<S>(shift);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sc * xv[i] + sh;
    Tensor<S> tx = x;
    return make_op<S>(x.shape(), std::move(out), {x}, [tx, sc](Node<S>& self) mutable {
        if (!tx.requires_grad()) return;
        S* g = tx.grad_mut().data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += sc * self.grad[i];
    });
}

/// fval(x) -> out; fg(g, x, out) -> grad contribution.
template <typename S, typename FV, typename FG>
Tensor<S> unary_op(const Tensor<S>& x, FV fval, FG fg) {
    std::vector<S> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fval(xv[i]);
    Tensor<S> tx = x;
    return make_op<S>(x.shape(), std::move(out), {x}, [tx, fg](Node<S>& self) mutable {
        if (!tx.requires_grad()) return;
        S* g = tx.grad_mut().data();
        const auto& xv = tx.values();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            g[i] += fg(self.grad[i], xv[i], self.values[i]);
    });
}

template <typename S>
Tensor<S> exp_t(const Tensor<S>& x) {
    return unary_op(
        x, [](S v) { return std::exp(v); }, [](S g, S, S o) { return g * o; });
}

template <typename S>
Tensor<S> log_t(const Tensor<S>& x) {
    return unary_op(
        x, [](S v) { return std::log(v); }, [](S g, S v, S) { return g / v; });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    return unary_op(
        x,
        [](S v) {
            return v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
        },
        [](S g, S, S o) { return g * o * (S(1) - o); });
}

/// Step spike with a sigmoid-derivative surrogate in the backward pass.
/// Forward emits 1 where v >= 0 (a membrane exactly at threshold fires).
template <typename S>
Tensor<S> heaviside_surrogate(const Tensor<S>& x, double slope) {
    const S k = static_cast<S>(slope);
    return unary_op(
        x, [](S v) { return v >= S(0) ? S(1) : S(0); },
        [k](S g, S v, S) {
            const S s = S(1) / (S(1) + std::exp(-k * v));
            return g * k * s * (S(1) - s);
        });
}

// operator sugar
template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) {
    return add(a, b);
}
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) {
    return sub(a, b);
}
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) {
    return mul(a, b);
}
template <typename S>
Tensor<S> operator+(const Tensor<S>& a, double c) {
    return affine(a, 1.0, c);
}
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, double c) {
    return affine(a, 1.0, -c);
}
template <typename S>
Tensor<S> operator-(double c, const Tensor<S>& a) {
    return affine(a, -1.0, c);
}
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, double c) {
    return affine(a, c);
}
template <typename S>
Tensor<S> operator*(double c, const Tensor<S>& a) {
    return affine(a, c);
}
template <typename S>
Tensor<S> operator/(const Tensor<S>& a, double c) {
    return affine(a, 1.0 / c);
}
template <typename S>
Tensor<S> operator-(const Tensor<S>& a) {
    return affine(a, -1.0);
}

// ---------------------------------------------------------------------------
// shape ops

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape new_shape) {
    check(numel(new_shape) == x.size(), "reshape ", shape_str(x.shape()), " -> ",
          shape_str(new_shape), " changes element count");
    Tensor<S> tx = x;
    return make_op<S>(std::move(new_shape), x.values(), {x}, [tx](Node<S>& self) mutable {
        if (!tx.requires_grad()) return;
        S* g = tx.grad_mut().data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

template <typename S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<std::size_t>& perm) {
    const std::size_t nd = x.ndim();
    check(perm.size() == nd, "permute rank mismatch for ", shape_str(x.shape()));
    {
        std::vector<bool> seen(nd, false);
        for (auto p : perm) {
            check(p < nd && !seen[p], "invalid permutation");
            seen[p] = true;
        }
    }
    Shape out_shape(nd);
    for (std::size_t d = 0; d < nd; ++d) out_shape[d] = x.dim(perm[d]);
    const auto in_strides = row_major_strides(x.shape());
    std::vector<std::size_t> map_stride(nd);
    for (std::size_t d = 0; d < nd; ++d) map_stride[d] = in_strides[perm[d]];

    const std::size_t n = x.size();
    std::vector<S> out(n);
    const auto& xv = x.values();
    {
        std::vector<std::size_t> idx(nd, 0);
        std::size_t src = 0;
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = xv[src];
            for (std::size_t d = nd; d-- > 0;) {
                if (++idx[d] < out_shape[d]) {
                    src += map_stride[d];
                    break;
                }
                idx[d] = 0;
                src -= map_stride[d] * (out_shape[d] - 1);
            }
        }
    }
    Tensor<S> tx = x;
    Shape oshape = out_shape;
    return make_op<S>(std::move(oshape), std::move(out), {x},
                      [tx, out_shape, map_stride, nd](Node<S>& self) mutable {
                          if (!tx.requires_grad()) return;
                          S* g = tx.grad_mut().data();
                          std::vector<std::size_t> idx(nd, 0);
                          std::size_t src = 0;
                          const std::size_t n = self.grad.size();
                          for (std::size_t i = 0; i < n; ++i) {
                              g[src] += self.grad[i];
                              for (std::size_t d = nd; d-- > 0;) {
                                  if (++idx[d] < out_shape[d]) {
                                      src += map_stride[d];
                                      break;
                                  }
                                  idx[d] = 0;
                                  src -= map_stride[d] * (out_shape[d] - 1);
                              }
                          }
                      });
}

/// x[i] along the leading axis; result drops that axis.
template <typename S>
Tensor<S> slice0(const Tensor<S>& x, std::size_t i) {
    check(x.ndim() >= 1, "slice0 on a scalar");
    check(i < x.dim(0), "slice0 index ", i, " out of range for ", shape_str(x.shape()));
    Shape out_shape(x.shape().begin() + 1, x.shape().end());
    const std::size_t block = numel(out_shape);
    std::vector<S> out(x.values().begin() + i * block, x.values().begin() + (i + 1) * block);
    Tensor<S> tx = x;
    return make_op<S>(std::move(out_shape), std::move(out), {x},
                      [tx, i, block](Node<S>& self) mutable {
                          if (!tx.requires_grad()) return;
                          S* g = tx.grad_mut().data() + i * block;
                          for (std::size_t j = 0; j < block; ++j) g[j] += self.grad[j];
                      });
}

/// Stacks equally shaped tensors along a new leading axis.
template <typename S>
Tensor<S> stack0(const std::vector<Tensor<S>>& parts) {
    check(!parts.empty(), "stack0 of nothing");
    const Shape& base = parts[0].shape();
    for (const auto& p : parts)
        check(p.shape() == base, "stack0 shape mismatch: ", shape_str(base), " vs ",
              shape_str(p.shape()));
    const std::size_t block = numel(base);
    Shape out_shape;
    out_shape.push_back(parts.size());
    out_shape.insert(out_shape.end(), base.begin(), base.end());
    std::vector<S> out(parts.size() * block);
    for (std::size_t p = 0; p < parts.size(); ++p)
        std::copy(parts[p].values().begin(), parts[p].values().end(), out.begin() + p * block);
    std::vector<Tensor<S>> hold = parts;
    return make_op<S>(std::move(out_shape), std::move(out), parts,
                      [hold, block](Node<S>& self) mutable {
                          for (std::size_t p = 0; p < hold.size(); ++p) {
                              if (!hold[p].requires_grad()) continue;
                              S* g = hold[p].grad_mut().data();
                              const S* sg = self.grad.data() + p * block;
                              for (std::size_t j = 0; j < block; ++j) g[j] += sg[j];
                          }
                      });
}

/// Inserts a new axis of the given extent at `axis`, repeating the input.
template <typename S>
Tensor<S> expand_axis(const Tensor<S>& x, std::size_t axis, std::size_t extent) {
    check(axis <= x.ndim(), "expand_axis position ", axis, " out of range for ",
          shape_str(x.shape()));
    check(extent >= 1, "expand_axis extent must be positive");
    Shape out_shape = x.shape();
    out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), extent);
    std::size_t pre = 1, post = 1;
    for (std::size_t d = 0; d < axis; ++d) pre *= x.dim(d);
    for (std::size_t d = axis; d < x.ndim(); ++d) post *= x.dim(d);
    std::vector<S> out(pre * extent * post);
    const auto& xv = x.values();
    for (std::size_t p = 0; p < pre; ++p)
        for (std::size_t e = 0; e < extent; ++e)
            std::copy(xv.begin() + p * post, xv.begin() + (p + 1) * post,
                      out.begin() + (p * extent + e) * post);
    Tensor<S> tx = x;
    return make_op<S>(std::move(out_shape), std::move(out), {x},
                      [tx, pre, extent, post](Node<S>& self) mutable {
                          if (!tx.requires_grad()) return;
                          S* g = tx.grad_mut().data();
                          const S* sg = self.grad.data();
                          for (std::size_t p = 0; p < pre; ++p)
                              for (std::size_t e = 0; e < extent; ++e)
                                  for (std::size_t q = 0; q < post; ++q)
                                      g[p * post + q] += sg[(p * extent + e) * post + q];
                      });
}

// ---------------------------------------------------------------------------
// reductions

namespace detail {
template <typename S>
Tensor<S> reduce_impl(const Tensor<S>& x, std::size_t axis, bool keepdim, bool mean) {
    check(axis < x.ndim(), "reduce axis ", axis, " out of range for ", shape_str(x.shape()));
    std::size_t pre = 1, post = 1;
    const std::size_t ax = x.dim(axis);
    for (std::size_t d = 0; d < axis; ++d) pre *= x.dim(d);
    for (std::size_t d = axis + 1; d < x.ndim(); ++d) post *= x.dim(d);
    Shape out_shape = x.shape();
    if (keepdim)
        out_shape[axis] = 1;
    else
        out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    std::vector<S> out(pre * post, S(0));
    const auto& xv = x.values();
    for (std::size_t p = 0; p < pre; ++p)
        for (std::size_t a = 0; a < ax; ++a) {
            const S* src = xv.data() + (p * ax + a) * post;
            S* dst = out.data() + p * post;
            for (std::size_t q = 0; q < post; ++q) dst[q] += src[q];
        }
    const S scale = mean ? S(1) / static_cast<S>(ax) : S(1);
    if (mean)
        for (auto& v : out) v *= scale;
    Tensor<S> tx = x;
    return make_op<S>(std::move(out_shape), std::move(out), {x},
                      [tx, pre, ax, post, scale](Node<S>& self) mutable {
                          if (!tx.requires_grad()) return;
                          S* g = tx.grad_mut().data();
                          const S* sg = self.grad.data();
                          for (std::size_t p = 0; p < pre; ++p)
                              for (std::size_t a = 0; a < ax; ++a) {
                                  S* dst = g + (p * ax + a) * post;
                                  const S* src = sg + p * post;
                                  for (std::size_t q = 0; q < post; ++q)
                                      dst[q] += scale * src[q];
                              }
                      });
}
}  // namespace detail

template <typename S>
Tensor<S> reduce_sum(const Tensor<S>& x, std::size_t axis, bool keepdim = false) {
    return detail::reduce_impl(x, axis, keepdim, false);
}

template <typename S>
Tensor<S> reduce_mean(const Tensor<S>& x, std::size_t axis, bool keepdim = false) {
    return detail::reduce_impl(x, axis, keepdim, true);
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
    S acc = S(0);
    for (S v : x.values()) acc += v;
    Tensor<S> tx = x;
    return make_op<S>(Shape{}, {acc}, {x}, [tx](Node<S>& self) mutable {
        if (!tx.requires_grad()) return;
        S* g = tx.grad_mut().data();
        const S sg = self.grad[0];
        for (std::size_t i = 0; i < tx.size(); ++i) g[i] += sg;
    });
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
    return affine(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

// ---------------------------------------------------------------------------
// matmul

/// Batched matrix product. Supports equal leading dims on both operands, a
/// rank-2 right operand shared across the batch (the linear-layer case), or a
/// rank-2 left operand shared across the batch.
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    check(a.ndim() >= 2 && b.ndim() >= 2, "matmul requires rank >= 2, got ",
          shape_str(a.shape()), " and ", shape_str(b.shape()));
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    const std::size_t M = as[as.size() - 2], K = as.back();
    const std::size_t Kb = bs[bs.size() - 2], P = bs.back();
    check(K == Kb, "matmul inner dims differ: ", shape_str(as), " vs ", shape_str(bs));
    Shape la(as.begin(), as.end() - 2), lb(bs.begin(), bs.end() - 2);

    if (lb.empty()) {
        // [*, M, K] x [K, P]: flatten the leading dims into rows.
        const std::size_t R = a.size() / K;
        Shape out_shape = as;
        out_shape.back() = P;
        std::vector<S> out(R * P);
        gemm_nn(R, K, P, a.values().data(), b.values().data(), out.data());
        Tensor<S> ta = a, tb = b;
        return make_op<S>(std::move(out_shape), std::move(out), {a, b},
                          [ta, tb, R, K, P](Node<S>& self) mutable {
                              if (ta.requires_grad())
                                  gemm_nt(R, P, K, self.grad.data(), tb.values().data(),
                                          ta.grad_mut().data(), true);
                              if (tb.requires_grad())
                                  gemm_tn(R, K, P, ta.values().data(), self.grad.data(),
                                          tb.grad_mut().data(), true);
                          });
    }
    if (la.empty()) {
        // [M, K] x [*, K, P]
        const std::size_t nbatch = numel(lb);
        Shape out_shape = lb;
        out_shape.push_back(M);
        out_shape.push_back(P);
        std::vector<S> out(nbatch * M * P);
        for (std::size_t i = 0; i < nbatch; ++i)
            gemm_nn(M, K, P, a.values().data(), b.values().data() + i * K * P,
                    out.data() + i * M * P);
        Tensor<S> ta = a, tb = b;
        return make_op<S>(std::move(out_shape), std::move(out), {a, b},
                          [ta, tb, nbatch, M, K, P](Node<S>& self) mutable {
                              for (std::size_t i = 0; i < nbatch; ++i) {
                                  const S* g = self.grad.data() + i * M * P;
                                  if (ta.requires_grad())
                                      gemm_nt(M, P, K, g, tb.values().data() + i * K * P,
                                              ta.grad_mut().data(), true);
                                  if (tb.requires_grad())
                                      gemm_tn(M, K, P, ta.values().data(), g,
                                              tb.grad_mut().data() + i * K * P, true);
                              }
                          });
    }
    check(la == lb, "matmul batch dims differ: ", shape_str(as), " vs ", shape_str(bs));
    const std::size_t nbatch = numel(la);
    Shape out_shape = la;
    out_shape.push_back(M);
    out_shape.push_back(P);
    std::vector<S> out(nbatch * M * P);
    {
        const S* av = a.values().data();
        const S* bv = b.values().data();
        S* ov = out.data();
        parallel_for(nbatch, [&](std::size_t i0, std::size_t i1) {
            for (std::size_t i = i0; i < i1; ++i)
                gemm_nn(M, K, P, av + i * M * K, bv + i * K * P, ov + i * M * P, false, false);
        });
    }
    Tensor<S> ta = a, tb = b;
    return make_op<S>(std::move(out_shape), std::move(out), {a, b},
                      [ta, tb, nbatch, M, K, P](Node<S>& self) mutable {
                          const bool na = ta.requires_grad(), nb = tb.requires_grad();
                          S* ga = na ? ta.grad_mut().data() : nullptr;
                          S* gb = nb ? tb.grad_mut().data() : nullptr;
                          const S* av = ta.values().data();
                          const S* bv = tb.values().data();
                          const S* sg = self.grad.data();
                          parallel_for(nbatch, [&](std::size_t i0, std::size_t i1) {
                              for (std::size_t i = i0; i < i1; ++i) {
                                  const S* g = sg + i * M * P;
                                  if (na)
                                      gemm_nt(M, P, K, g, bv + i * K * P, ga + i * M * K, true,
                                              false);
                                  if (nb)
                                      gemm_tn(M, K, P, av + i * M * K, g, gb + i * K * P, true,
                                              false);
                              }
                          });
                      });
}

/// y = x W + b with W [in, out] and optional b [out].
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    check(x.ndim() >= 1 && x.shape().back() == w.dim(0), "linear input ", shape_str(x.shape()),
          " does not match weight ", shape_str(w.shape()));
    Tensor<S> y = matmul(x, w);
    if (b.defined()) y = add(y, b);
    return y;
}

// ---------------------------------------------------------------------------
// convolution / pooling

namespace detail {

template <typename S>
void im2col(const S* x, std::size_t C, std::size_t H, std::size_t W, std::size_t KH,
            std::size_t KW, std::size_t stride, std::size_t pad, std::size_t OH, std::size_t OW,
            S* col) {
    const std::size_t ohw = OH * OW;
    std::size_t r = 0;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t kh = 0; kh < KH; ++kh)
            for (std::size_t kw = 0; kw < KW; ++kw, ++r) {
                S* dst = col + r * ohw;
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + kh) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) {
                        for (std::size_t ow = 0; ow < OW; ++ow) dst[oh * OW + ow] = S(0);
                        continue;
                    }
                    const S* src = x + (c * H + static_cast<std::size_t>(ih)) * W;
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kw) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        dst[oh * OW + ow] =
                            (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W))
                                ? S(0)
                                : src[static_cast<std::size_t>(iw)];
                    }
                }
            }
}

template <typename S>
void col2im_add(const S* col, std::size_t C, std::size_t H, std::size_t W, std::size_t KH,
                std::size_t KW, std::size_t stride, std::size_t pad, std::size_t OH,
                std::size_t OW, S* dx) {
    const std::size_t ohw = OH * OW;
    std::size_t r = 0;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t kh = 0; kh < KH; ++kh)
            for (std::size_t kw = 0; kw < KW; ++kw, ++r) {
                const S* src = col + r * ohw;
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + kh) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                    S* dst = dx + (c * H + static_cast<std::size_t>(ih)) * W;
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kw) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                        dst[static_cast<std::size_t>(iw)] += src[oh * OW + ow];
                    }
                }
            }
}

}  // namespace detail

/// 2-d convolution, x [B,C,H,W], w [OC,C,KH,KW], optional b [OC].
/// Images are processed in parallel; the weight gradient is reduced from
/// per-image partials in image order, so the result does not depend on the
/// worker count.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 std::size_t stride = 1, std::size_t pad = 0) {
    check(x.ndim() == 4, "conv2d input must be rank 4, got ", shape_str(x.shape()));
    check(w.ndim() == 4, "conv2d weight must be rank 4, got ", shape_str(w.shape()));
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t OC = w.dim(0), KH = w.dim(2), KW = w.dim(3);
    check(w.dim(1) == C, "conv2d channel mismatch: input ", shape_str(x.shape()), " weight ",
          shape_str(w.shape()));
    check(stride >= 1, "conv2d stride must be positive");
    check(H + 2 * pad >= KH && W + 2 * pad >= KW, "conv2d kernel ", KH, "x", KW,
          " exceeds padded input ", H + 2 * pad, "x", W + 2 * pad);
    if (b.defined())
        check(b.ndim() == 1 && b.dim(0) == OC, "conv2d bias shape ", shape_str(b.shape()),
              " does not match ", OC, " output channels");
    const std::size_t OH = (H + 2 * pad - KH) / stride + 1;
    const std::size_t OW = (W + 2 * pad - KW) / stride + 1;
    const std::size_t ickk = C * KH * KW, ohw = OH * OW, chw = C * H * W;

    std::vector<S> out(B * OC * ohw);
    {
        const S* xv = x.values().data();
        const S* wv = w.values().data();
        const S* bv = b.defined() ? b.values().data() : nullptr;
        S* ov = out.data();
        parallel_for(B, [&](std::size_t i0, std::size_t i1) {
            std::vector<S> col(ickk * ohw);
            for (std::size_t i = i0; i < i1; ++i) {
                detail::im2col(xv + i * chw, C, H, W, KH, KW, stride, pad, OH, OW, col.data());
                S* yi = ov + i * OC * ohw;
                gemm_nn(OC, ickk, ohw, wv, col.data(), yi, false, false);
                if (bv)
                    for (std::size_t oc = 0; oc < OC; ++oc)
                        for (std::size_t j = 0; j < ohw; ++j) yi[oc * ohw + j] += bv[oc];
            }
        });
    }

    Tensor<S> tx = x, tw = w, tb = b;
    std::vector<Tensor<S>> parents{x, w};
    if (b.defined()) parents.push_back(b);
    return make_op<S>(
        Shape{B, OC, OH, OW}, std::move(out), std::move(parents),
        [tx, tw, tb, B, C, H, W, OC, KH, KW, stride, pad, OH, OW, ickk, ohw,
         chw](Node<S>& self) mutable {
            const bool nx = tx.requires_grad();
            const bool nw = tw.requires_grad();
            const bool nb = tb.defined() && tb.requires_grad();
            S* gx = nx ? tx.grad_mut().data() : nullptr;
            const S* xv = tx.values().data();
            const S* wv = tw.values().data();
            const S* sg = self.grad.data();
            std::vector<S> dwp, dbp;
            if (nw) dwp.assign(B * OC * ickk, S(0));
            if (nb) dbp.assign(B * OC, S(0));
            parallel_for(B, [&](std::size_t i0, std::size_t i1) {
                std::vector<S> col, dcol;
                if (nw || nx) col.resize(ickk * ohw);
                if (nx) dcol.resize(ickk * ohw);
                for (std::size_t i = i0; i < i1; ++i) {
                    const S* dy = sg + i * OC * ohw;
                    if (nw || nx)
                        detail::im2col(xv + i * chw, C, H, W, KH, KW, stride, pad, OH, OW,
                                       col.data());
                    if (nw)
                        gemm_nt(OC, ohw, ickk, dy, col.data(), dwp.data() + i * OC * ickk,
                                false, false);
                    if (nx) {
                        gemm_tn(OC, ickk, ohw, wv, dy, dcol.data(), false, false);
                        detail::col2im_add(dcol.data(), C, H, W, KH, KW, stride, pad, OH, OW,
                                           gx + i * chw);
                    }
                    if (nb) {
                        S* db = dbp.data() + i * OC;
                        for (std::size_t oc = 0; oc < OC; ++oc) {
                            S acc = S(0);
                            for (std::size_t j = 0; j < ohw; ++j) acc += dy[oc * ohw + j];
                            db[oc] = acc;
                        }
                    }
                }
            });
            if (nw) {
                S* gw = tw.grad_mut().data();
                for (std::size_t i = 0; i < B; ++i) {
                    const S* p = dwp.data() + i * OC * ickk;
                    for (std::size_t j = 0; j < OC * ickk; ++j) gw[j] += p[j];
                }
            }
            if (nb) {
                S* gb = tb.grad_mut().data();
                for (std::size_t i = 0; i < B; ++i)
                    for (std::size_t oc = 0; oc < OC; ++oc) gb[oc] += dbp[i * OC + oc];
            }
        });
}

/// Max pooling over k x k windows; ties resolve to the first occurrence in
/// row-major window order.
template <typename S>
Tensor<S> maxpool2d(const Tensor<S>& x, std::size_t k, std::size_t stride) {
    check(x.ndim() == 4, "maxpool2d input must be rank 4, got ", shape_str(x.shape()));
    check(k >= 1 && stride >= 1, "maxpool2d window and stride must be positive");
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    check(k <= H && k <= W, "maxpool2d window ", k, " exceeds input ", H, "x", W);
    const std::size_t OH = (H - k) / stride + 1, OW = (W - k) / stride + 1;
    const std::size_t planes = B * C, ohw = OH * OW, hw = H * W;

    std::vector<S> out(planes * ohw);
    auto argmax = std::make_shared<std::vector<std::uint32_t>>(planes * ohw);
    {
        const S* xv = x.values().data();
        S* ov = out.data();
        std::uint32_t* am = argmax->data();
        parallel_for(planes, [&](std::size_t p0, std::size_t p1) {
            for (std::size_t p = p0; p < p1; ++p) {
                const S* plane = xv + p * hw;
                for (std::size_t oh = 0; oh < OH; ++oh)
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        std::size_t best = oh * stride * W + ow * stride;
                        S bv = plane[best];
                        for (std::size_t i = 0; i < k; ++i)
                            for (std::size_t j = 0; j < k; ++j) {
                                const std::size_t idx =
                                    (oh * stride + i) * W + (ow * stride + j);
                                if (plane[idx] > bv) {
                                    bv = plane[idx];
                                    best = idx;
                                }
                            }
                        ov[p * ohw + oh * OW + ow] = bv;
                        am[p * ohw + oh * OW + ow] = static_cast<std::uint32_t>(best);
                    }
            }
        });
    }
    Tensor<S> tx = x;
    return make_op<S>(Shape{B, C, OH, OW}, std::move(out), {x},
                      [tx, argmax, planes, ohw, hw](Node<S>& self) mutable {
                          if (!tx.requires_grad()) return;
                          S* g = tx.grad_mut().data();
                          const S* sg = self.grad.data();
                          const std::uint32_t* am = argmax->data();
                          parallel_for(planes, [&](std::size_t p0, std::size_t p1) {
                              for (std::size_t p = p0; p < p1; ++p)
                                  for (std::size_t j = 0; j < ohw; ++j)
                                      g[p * hw + am[p * ohw + j]] += sg[p * ohw + j];
                          });
                      });
}

// ---------------------------------------------------------------------------
// batch normalization

enum class BnMode { Train, Eval };

template <typename S>
struct RunningStats {
    std::vector<S> mean, var;
};

/// Normalizes over every axis except `feat_axis` using population statistics,
/// then applies the learned scale and shift. Train mode uses batch statistics
/// and blends them into `running`; eval mode reads `running` directly.
template <typename S>
Tensor<S> batchnorm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                    RunningStats<S>* running, BnMode mode, std::size_t feat_axis, double eps,
                    double momentum) {
    check(feat_axis < x.ndim(), "batchnorm feature axis ", feat_axis, " out of range for ",
          shape_str(x.shape()));
    const std::size_t F = x.dim(feat_axis);
    check(gamma.size() == F && beta.size() == F, "batchnorm scale/shift size must be ", F);
    std::size_t pre = 1, post = 1;
    for (std::size_t d = 0; d < feat_axis; ++d) pre *= x.dim(d);
    for (std::size_t d = feat_axis + 1; d < x.ndim(); ++d) post *= x.dim(d);
    const std::size_t rows = pre * post;
    const auto& xv = x.values();

    // post == 1 is the feature-last layout; its loops run over contiguous
    // feature vectors so they vectorize. The element arithmetic and the
    // accumulation order match the generic layout exactly.
    std::vector<S> mean(F), invstd(F);
    if (mode == BnMode::Train) {
        check(rows >= 2, "batchnorm over a single element per feature is degenerate (",
              shape_str(x.shape()), ", feature axis ", feat_axis, ")");
        std::vector<double> mu(F, 0.0), var(F, 0.0);
        if (post == 1) {
            for (std::size_t p = 0; p < pre; ++p) {
                const S* src = xv.data() + p * F;
                for (std::size_t f = 0; f < F; ++f) mu[f] += src[f];
            }
        } else {
            for (std::size_t p = 0; p < pre; ++p)
                for (std::size_t f = 0; f < F; ++f) {
                    const S* src = xv.data() + (p * F + f) * post;
                    double acc = 0.0;
                    for (std::size_t q = 0; q < post; ++q) acc += src[q];
                    mu[f] += acc;
                }
        }
        for (std::size_t f = 0; f < F; ++f) mu[f] /= static_cast<double>(rows);
        if (post == 1) {
            for (std::size_t p = 0; p < pre; ++p) {
                const S* src = xv.data() + p * F;
                for (std::size_t f = 0; f < F; ++f) {
                    const double d = src[f] - mu[f];
                    var[f] += d * d;
                }
            }
        } else {
            for (std::size_t p = 0; p < pre; ++p)
                for (std::size_t f = 0; f < F; ++f) {
                    const S* src = xv.data() + (p * F + f) * post;
                    double acc = 0.0;
                    for (std::size_t q = 0; q < post; ++q) {
                        const double d = src[q] - mu[f];
                        acc += d * d;
                    }
                    var[f] += acc;
                }
        }
        for (std::size_t f = 0; f < F; ++f) {
            var[f] /= static_cast<double>(rows);
            mean[f] = static_cast<S>(mu[f]);
            invstd[f] = static_cast<S>(1.0 / std::sqrt(var[f] + eps));
        }
        if (running) {
            if (running->mean.size() != F) {
                running->mean.assign(F, S(0));
                running->var.assign(F, S(1));
            }
            for (std::size_t f = 0; f < F; ++f) {
                running->mean[f] = static_cast<S>((1.0 - momentum) * running->mean[f] +
                                                  momentum * mu[f]);
                running->var[f] =
                    static_cast<S>((1.0 - momentum) * running->var[f] + momentum * var[f]);
            }
        }
    } else {
        check(running && running->mean.size() == F,
              "batchnorm eval requires populated running statistics");
        for (std::size_t f = 0; f < F; ++f) {
            mean[f] = running->mean[f];
            invstd[f] = static_cast<S>(1.0 / std::sqrt(static_cast<double>(running->var[f]) + eps));
        }
    }

    std::vector<S> out(xv.size());
    const auto& gv = gamma.values();
    const auto& bv = beta.values();
    if (post == 1) {
        for (std::size_t p = 0; p < pre; ++p) {
            const S* src = xv.data() + p * F;
            S* dst = out.data() + p * F;
            for (std::size_t f = 0; f < F; ++f)
                dst[f] = gv[f] * (src[f] - mean[f]) * invstd[f] + bv[f];
        }
    } else {
        for (std::size_t p = 0; p < pre; ++p)
            for (std::size_t f = 0; f < F; ++f) {
                const S* src = xv.data() + (p * F + f) * post;
                S* dst = out.data() + (p * F + f) * post;
                const S m = mean[f], is = invstd[f], ga = gv[f], be = bv[f];
                for (std::size_t q = 0; q < post; ++q) dst[q] = ga * (src[q] - m) * is + be;
            }
    }

    Tensor<S> tx = x, tg = gamma, tb = beta;
    const bool train = mode == BnMode::Train;
    return make_op<S>(
        x.shape(), std::move(out), {x, gamma, beta},
        [tx, tg, tb, mean, invstd, pre, F, post, rows, train](Node<S>& self) mutable {
            const bool nx = tx.requires_grad();
            const bool ng = tg.requires_grad();
            const bool nb = tb.requires_grad();
            S* gx = nx ? tx.grad_mut().data() : nullptr;
            S* gg = ng ? tg.grad_mut().data() : nullptr;
            S* gb = nb ? tb.grad_mut().data() : nullptr;
            const auto& xv = tx.values();
            const auto& gv = tg.values();
            const S* sg = self.grad.data();
            // per-feature sums of dxhat and dxhat*xhat
            std::vector<double> s1(F, 0.0), s2(F, 0.0), sg_sum(F, 0.0), sgx_sum(F, 0.0);
            if (post == 1) {
                for (std::size_t p = 0; p < pre; ++p) {
                    const S* xs = xv.data() + p * F;
                    const S* gs = sg + p * F;
                    for (std::size_t f = 0; f < F; ++f) {
                        const S xhat = (xs[f] - mean[f]) * invstd[f];
                        const S dxhat = gs[f] * gv[f];
                        s1[f] += dxhat;
                        s2[f] += dxhat * xhat;
                        sg_sum[f] += gs[f];
                        sgx_sum[f] += gs[f] * xhat;
                    }
                }
            } else {
                for (std::size_t p = 0; p < pre; ++p)
                    for (std::size_t f = 0; f < F; ++f) {
                        const S* xs = xv.data() + (p * F + f) * post;
                        const S* gs = sg + (p * F + f) * post;
                        const S m = mean[f], is = invstd[f], ga = gv[f];
                        double a1 = 0.0, a2 = 0.0, a3 = 0.0, a4 = 0.0;
                        for (std::size_t q = 0; q < post; ++q) {
                            const S xhat = (xs[q] - m) * is;
                            const S dxhat = gs[q] * ga;
                            a1 += dxhat;
                            a2 += dxhat * xhat;
                            a3 += gs[q];
                            a4 += gs[q] * xhat;
                        }
                        s1[f] += a1;
                        s2[f] += a2;
                        sg_sum[f] += a3;
                        sgx_sum[f] += a4;
                    }
            }
            if (ng)
                for (std::size_t f = 0; f < F; ++f) gg[f] += static_cast<S>(sgx_sum[f]);
            if (nb)
                for (std::size_t f = 0; f < F; ++f) gb[f] += static_cast<S>(sg_sum[f]);
            if (!nx) return;
            const double r = static_cast<double>(rows);
            if (post == 1) {
                std::vector<S> c1(F), c2(F);
                for (std::size_t f = 0; f < F; ++f) {
                    c1[f] = static_cast<S>(s1[f] / r);
                    c2[f] = static_cast<S>(s2[f] / r);
                }
                for (std::size_t p = 0; p < pre; ++p) {
                    const S* xs = xv.data() + p * F;
                    const S* gs = sg + p * F;
                    S* gd = gx + p * F;
                    if (train) {
                        for (std::size_t f = 0; f < F; ++f) {
                            const S xhat = (xs[f] - mean[f]) * invstd[f];
                            gd[f] += invstd[f] * (gs[f] * gv[f] - c1[f] - xhat * c2[f]);
                        }
                    } else {
                        for (std::size_t f = 0; f < F; ++f) gd[f] += gs[f] * gv[f] * invstd[f];
                    }
                }
            } else {
                for (std::size_t p = 0; p < pre; ++p)
                    for (std::size_t f = 0; f < F; ++f) {
                        const S* xs = xv.data() + (p * F + f) * post;
                        const S* gs = sg + (p * F + f) * post;
                        S* gd = gx + (p * F + f) * post;
                        const S m = mean[f], is = invstd[f], ga = gv[f];
                        if (train) {
                            const S c1 = static_cast<S>(s1[f] / r),
                                    c2 = static_cast<S>(s2[f] / r);
                            for (std::size_t q = 0; q < post; ++q) {
                                const S xhat = (xs[q] - m) * is;
                                gd[q] += is * (gs[q] * ga - c1 - xhat * c2);
                            }
                        } else {
                            for (std::size_t q = 0; q < post; ++q) gd[q] += gs[q] * ga * is;
                        }
                    }
            }
        });
}

// ---------------------------------------------------------------------------
// losses and heads

/// Mean softmax cross entropy over rows of [B, C] logits.
template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<std::size_t>& labels) {
    check(logits.ndim() == 2, "cross_entropy expects [batch, classes], got ",
          shape_str(logits.shape()));
    const std::size_t B = logits.dim(0), C = logits.dim(1);
    check(labels.size() == B, "cross_entropy got ", labels.size(), " labels for batch ", B);
    for (auto y : labels) check(y < C, "label ", y, " out of range for ", C, " classes");
    const auto& lv = logits.values();
    std::vector<S> lse(B);
    double total = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        const S* row = lv.data() + i * C;
        S m = row[0];
        for (std::size_t c = 1; c < C; ++c) m = std::max(m, row[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < C; ++c) z += std::exp(static_cast<double>(row[c] - m));
        lse[i] = static_cast<S>(m + std::log(z));
        total += static_cast<double>(lse[i] - row[labels[i]]);
    }
    Tensor<S> tl = logits;
    return make_op<S>(Shape{}, {static_cast<S>(total / static_cast<double>(B))}, {logits},
                      [tl, labels, lse, B, C](Node<S>& self) mutable {
                          if (!tl.requires_grad()) return;
                          S* g = tl.grad_mut().data();
                          const auto& lv = tl.values();
                          const S scale = self.grad[0] / static_cast<S>(B);
                          for (std::size_t i = 0; i < B; ++i) {
                              const S* row = lv.data() + i * C;
                              S* gr = g + i * C;
                              for (std::size_t c = 0; c < C; ++c) {
                                  const S p = std::exp(row[c] - lse[i]);
                                  gr[c] += scale * (p - (c == labels[i] ? S(1) : S(0)));
                              }
                          }
                      });
}

/// Normalizes each row along the last axis to unit length; all-zero rows pass
/// through unchanged.
template <typename S>
Tensor<S> l2_normalize_last(const Tensor<S>& x) {
    check(x.ndim() >= 1, "l2_normalize_last on a scalar");
    const std::size_t D = x.shape().back();
    const std::size_t R = x.size() / D;
    const auto& xv = x.values();
    std::vector<S> out(x.size());
    auto norms = std::make_shared<std::vector<S>>(R);
    for (std::size_t r = 0; r < R; ++r) {
        const S* src = xv.data() + r * D;
        double acc = 0.0;
        for (std::size_t d = 0; d < D; ++d) acc += static_cast<double>(src[d]) * src[d];
        const S n = static_cast<S>(std::sqrt(acc));
        (*norms)[r] = n;
        S* dst = out.data() + r * D;
        if (n == S(0))
            std::copy(src, src + D, dst);
        else
            for (std::size_t d = 0; d < D; ++d) dst[d] = src[d] / n;
    }
    Tensor<S> tx = x;
    return make_op<S>(x.shape(), std::move(out), {x}, [tx, norms, R, D](Node<S>& self) mutable {
        if (!tx.requires_grad()) return;
        S* g = tx.grad_mut().data();
        const S* sg = self.grad.data();
        const S* ov = self.values.data();
        for (std::size_t r = 0; r < R; ++r) {
            const S n = (*norms)[r];
            const S* gr = sg + r * D;
            S* gd = g + r * D;
            if (n == S(0)) {
                for (std::size_t d = 0; d < D; ++d) gd[d] += gr[d];
                continue;
            }
            const S* u = ov + r * D;
            S dot = S(0);
            for (std::size_t d = 0; d < D; ++d) dot += u[d] * gr[d];
            for (std::size_t d = 0; d < D; ++d) gd[d] += (gr[d] - u[d] * dot) / n;
        }
    });
}

/// Row-wise argmax of [R, C] values; ties resolve to the lowest index.
template <typename S>
std::vector<std::size_t> argmax_rows(const Tensor<S>& t) {
    check(t.ndim() == 2, "argmax_rows expects a rank-2 tensor, got ", shape_str(t.shape()));
    const std::size_t R = t.dim(0), C = t.dim(1);
    const auto& v = t.values();
    std::vector<std::size_t> out(R);
    for (std::size_t r = 0; r < R; ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < C; ++c)
            if (v[r * C + c] > v[r * C + best]) best = c;
        out[r] = best;
    }
    return out;
}

}  // namespace spikefuse
