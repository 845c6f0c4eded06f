#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <utility>
#include <vector>

#include "licda/tensor.hpp"

// Differentiable operations over Tensor<S>. Every function builds a fresh
// graph node; when no parent requires a gradient the node is emitted as a
// plain constant so inference paths carry no graph at all.

namespace licda {

namespace detail {

template <class S>
using NodePtr = std::shared_ptr<TensorNode<S>>;

template <class S>
Tensor<S> op_result(const char* opname, Shape shape, std::vector<S> vals,
                    std::vector<NodePtr<S>> parents, std::function<void(TensorNode<S>&)> back) {
    auto node = std::make_shared<TensorNode<S>>(std::move(shape), std::move(vals));
    node->op = opname;
    check_finite(*node, opname);
    bool any = false;
    for (auto& p : parents) any = any || p->requires_grad;
    if (any && GradMode::enabled()) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backprop = std::move(back);
    }
    return Tensor<S>(node);
}

// cols[(c*kh+i)*kw+j, dh*DW+dw] = src[c, dh*stride+i-pad, dw*stride+j-pad], 0 outside.
template <class S>
void im2col(const S* src, int C, int SH, int SW, int kh, int kw, int stride, int pad, int DH, int DW,
            S* cols) {
    const int DHW = DH * DW;
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                S* row = cols + (static_cast<std::size_t>((c * kh + i) * kw + j)) * DHW;
                for (int dh = 0; dh < DH; ++dh) {
                    const int sh = dh * stride + i - pad;
                    if (sh < 0 || sh >= SH) {
                        std::fill(row + dh * DW, row + (dh + 1) * DW, S(0));
                        continue;
                    }
                    const S* srow = src + (static_cast<std::size_t>(c) * SH + sh) * SW;
                    for (int dw = 0; dw < DW; ++dw) {
                        const int sw = dw * stride + j - pad;
                        row[dh * DW + dw] = (sw < 0 || sw >= SW) ? S(0) : srow[sw];
                    }
                }
            }
        }
    }
}

// Scatter-add transpose of im2col.
template <class S>
void col2im(const S* cols, int C, int SH, int SW, int kh, int kw, int stride, int pad, int DH, int DW,
            S* src_accum) {
    const int DHW = DH * DW;
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                const S* row = cols + (static_cast<std::size_t>((c * kh + i) * kw + j)) * DHW;
                for (int dh = 0; dh < DH; ++dh) {
                    const int sh = dh * stride + i - pad;
                    if (sh < 0 || sh >= SH) continue;
                    S* srow = src_accum + (static_cast<std::size_t>(c) * SH + sh) * SW;
                    for (int dw = 0; dw < DW; ++dw) {
                        const int sw = dw * stride + j - pad;
                        if (sw >= 0 && sw < SW) srow[sw] += row[dh * DW + dw];
                    }
                }
            }
        }
    }
}

template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapRM = Eigen::Map<RowMat<S>>;
template <class S>
using CMapRM = Eigen::Map<const RowMat<S>>;
template <class S>
using MapVec = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>;
template <class S>
using CMapVec = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>;

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw DimError(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<S> v(a.values());
    detail::CMapVec<S> bv(b.values().data(), b.numel());
    detail::MapVec<S>(v.data(), v.size()) += bv;
    auto an = a.node_ptr(), bn = b.node_ptr();
    return detail::op_result<S>("add", a.shape(), std::move(v), {an, bn}, [an, bn](TensorNode<S>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            detail::MapVec<S>(an->grad.data(), an->grad.size()) += detail::CMapVec<S>(self.grad.data(), self.grad.size());
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            detail::MapVec<S>(bn->grad.data(), bn->grad.size()) += detail::CMapVec<S>(self.grad.data(), self.grad.size());
        }
    });
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require(a.shape() == b.shape(), "sub: shape mismatch");
    std::vector<S> v(a.values());
    detail::MapVec<S>(v.data(), v.size()) -= detail::CMapVec<S>(b.values().data(), b.numel());
    auto an = a.node_ptr(), bn = b.node_ptr();
    return detail::op_result<S>("sub", a.shape(), std::move(v), {an, bn}, [an, bn](TensorNode<S>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            detail::MapVec<S>(an->grad.data(), an->grad.size()) += detail::CMapVec<S>(self.grad.data(), self.grad.size());
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            detail::MapVec<S>(bn->grad.data(), bn->grad.size()) -= detail::CMapVec<S>(self.grad.data(), self.grad.size());
        }
    });
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require(a.shape() == b.shape(), "mul: shape mismatch");
    std::vector<S> v(a.values());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= b.values()[i];
    auto an = a.node_ptr(), bn = b.node_ptr();
    return detail::op_result<S>("mul", a.shape(), std::move(v), {an, bn}, [an, bn](TensorNode<S>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
        }
    });
}

template <class S>
Tensor<S> mul_scalar(const Tensor<S>& a, S c) {
    std::vector<S> v(a.values());
    for (auto& x : v) x *= c;
    auto an = a.node_ptr();
    return detail::op_result<S>("mul_scalar", a.shape(), std::move(v), {an}, [an, c](TensorNode<S>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * c;
    });
}

template <class S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
    std::vector<S> v(a.values());
    for (auto& x : v) x += c;
    auto an = a.node_ptr();
    return detail::op_result<S>("add_scalar", a.shape(), std::move(v), {an}, [an](TensorNode<S>& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

// out[n, ...] = t[n, ...] * s[n]; s has shape [N] where N is t's leading dim.
template <class S>
Tensor<S> scale_rows(const Tensor<S>& t, const Tensor<S>& s) {
    detail::require(s.rank() == 1 && t.rank() >= 1 && s.dim(0) == t.dim(0),
                    "scale_rows: scale shape " + shape_str(s.shape()) + " incompatible with " + shape_str(t.shape()));
    const int N = t.dim(0);
    const std::size_t row = static_cast<std::size_t>(t.numel() / N);
    std::vector<S> v(t.values());
    for (int n = 0; n < N; ++n) {
        const S c = s.values()[static_cast<std::size_t>(n)];
        S* p = v.data() + static_cast<std::size_t>(n) * row;
        for (std::size_t i = 0; i < row; ++i) p[i] *= c;
    }
    auto tn = t.node_ptr(), sn = s.node_ptr();
    return detail::op_result<S>("scale_rows", t.shape(), std::move(v), {tn, sn}, [tn, sn, N, row](TensorNode<S>& self) {
        for (int n = 0; n < N; ++n) {
            const std::size_t off = static_cast<std::size_t>(n) * row;
            if (tn->requires_grad) {
                tn->ensure_grad();
                const S c = sn->value[static_cast<std::size_t>(n)];
                for (std::size_t i = 0; i < row; ++i) tn->grad[off + i] += self.grad[off + i] * c;
            }
            if (sn->requires_grad) {
                sn->ensure_grad();
                S acc = S(0);
                for (std::size_t i = 0; i < row; ++i) acc += self.grad[off + i] * tn->value[off + i];
                sn->grad[static_cast<std::size_t>(n)] += acc;
            }
        }
    });
}

// Column k of a [N, C] tensor as a [N] vector.
template <class S>
Tensor<S> col(const Tensor<S>& t, int k) {
    detail::require(t.rank() == 2, "col: expected rank-2 tensor");
    const int N = t.dim(0), C = t.dim(1);
    detail::require(k >= 0 && k < C, "col: index out of range");
    std::vector<S> v(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) v[static_cast<std::size_t>(n)] = t.values()[static_cast<std::size_t>(n) * C + k];
    auto tn = t.node_ptr();
    return detail::op_result<S>("col", {N}, std::move(v), {tn}, [tn, N, C, k](TensorNode<S>& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (int n = 0; n < N; ++n) tn->grad[static_cast<std::size_t>(n) * C + k] += self.grad[static_cast<std::size_t>(n)];
    });
}

template <class S>
Tensor<S> reshape(const Tensor<S>& t, Shape shape) {
    detail::require(shape_numel(shape) == t.numel(), "reshape: element count mismatch");
    std::vector<S> v(t.values());
    auto tn = t.node_ptr();
    return detail::op_result<S>("reshape", std::move(shape), std::move(v), {tn}, [tn](TensorNode<S>& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        detail::MapVec<S>(tn->grad.data(), tn->grad.size()) += detail::CMapVec<S>(self.grad.data(), self.grad.size());
    });
}

template <class S>
Tensor<S> sum(const Tensor<S>& t) {
    const S acc = static_cast<S>(t.array().template cast<double>().sum());
    auto tn = t.node_ptr();
    return detail::op_result<S>("sum", {1}, {acc}, {tn}, [tn](TensorNode<S>& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        const S g = self.grad[0];
        for (auto& x : tn->grad) x += g;
    });
}

template <class S>
Tensor<S> mean(const Tensor<S>& t) {
    const S inv = S(1) / static_cast<S>(t.numel());
    const S acc = static_cast<S>(t.array().template cast<double>().sum()) * inv;
    auto tn = t.node_ptr();
    return detail::op_result<S>("mean", {1}, {acc}, {tn}, [tn, inv](TensorNode<S>& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        const S g = self.grad[0] * inv;
        for (auto& x : tn->grad) x += g;
    });
}

template <class S>
Tensor<S> log(const Tensor<S>& t) {
    std::vector<S> v(t.values());
    for (auto& x : v) {
        if (x <= S(0)) throw CodecError("log of non-positive value");
        x = std::log(x);
    }
    auto tn = t.node_ptr();
    return detail::op_result<S>("log", t.shape(), std::move(v), {tn}, [tn](TensorNode<S>& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) tn->grad[i] += self.grad[i] / tn->value[i];
    });
}

// Gradient passes where the *input* lies inside [lo, hi].
template <class S>
Tensor<S> clamp(const Tensor<S>& t, S lo, S hi) {
    std::vector<S> v(t.values());
    for (auto& x : v) x = std::min(hi, std::max(lo, x));
    auto tn = t.node_ptr();
    return detail::op_result<S>("clamp", t.shape(), std::move(v), {tn}, [tn, lo, hi](TensorNode<S>& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const S x = tn->value[i];
            if (x >= lo && x <= hi) tn->grad[i] += self.grad[i];
        }
    });
}

template <class S>
Tensor<S> relu(const Tensor<S>& t) {
    std::vector<S> v(t.values());
    for (auto& x : v) x = std::max(S(0), x);
    auto tn = t.node_ptr();
    return detail::op_result<S>("relu", t.shape(), std::move(v), {tn}, [tn](TensorNode<S>& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (tn->value[i] > S(0)) tn->grad[i] += self.grad[i];
    });
}

template <class S>
Tensor<S> leaky_relu(const Tensor<S>& t, S slope) {
    std::vector<S> v(t.values());
    for (auto& x : v) x = x > S(0) ? x : slope * x;
    auto tn = t.node_ptr();
    return detail::op_result<S>("leaky_relu", t.shape(), std::move(v), {tn, }, [tn, slope](TensorNode<S>& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            tn->grad[i] += self.grad[i] * (tn->value[i] > S(0) ? S(1) : slope);
    });
}

template <class S>
Tensor<S> softmax(const Tensor<S>& t, int axis) {
    const Shape& sh = t.shape();
    if (axis < 0 || axis >= static_cast<int>(sh.size())) throw DimError("softmax: axis out of range for " + shape_str(sh));
    const int A = sh[static_cast<std::size_t>(axis)];
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= sh[static_cast<std::size_t>(d)];
    for (int d = axis + 1; d < static_cast<int>(sh.size()); ++d) inner *= sh[static_cast<std::size_t>(d)];

    std::vector<S> v(t.values().size());
    const auto& x = t.values();
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t i = 0; i < inner; ++i) {
            const std::size_t base = static_cast<std::size_t>(o * A * inner + i);
            S m = x[base];
            for (int a = 1; a < A; ++a) m = std::max(m, x[base + static_cast<std::size_t>(a) * inner]);
            S z = S(0);
            for (int a = 0; a < A; ++a) {
                const std::size_t idx = base + static_cast<std::size_t>(a) * inner;
                v[idx] = std::exp(x[idx] - m);
                z += v[idx];
            }
            for (int a = 0; a < A; ++a) v[base + static_cast<std::size_t>(a) * inner] /= z;
        }
    }
    auto tn = t.node_ptr();
    return detail::op_result<S>("softmax", sh, std::move(v), {tn}, [tn, A, outer, inner](TensorNode<S>& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t i = 0; i < inner; ++i) {
                const std::size_t base = static_cast<std::size_t>(o * A * inner + i);
                S dot = S(0);
                for (int a = 0; a < A; ++a) {
                    const std::size_t idx = base + static_cast<std::size_t>(a) * inner;
                    dot += self.grad[idx] * self.value[idx];
                }
                for (int a = 0; a < A; ++a) {
                    const std::size_t idx = base + static_cast<std::size_t>(a) * inner;
                    tn->grad[idx] += self.value[idx] * (self.grad[idx] - dot);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Convolutions, pooling, linear
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int stride, int padding) {
    detail::require(x.rank() == 4, "conv2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
    detail::require(w.rank() == 4, "conv2d: weight must be [OC,IC,kh,kw]");
    detail::require(stride >= 1 && padding >= 0, "conv2d: bad stride/padding");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int OC = w.dim(0), IC = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    detail::require(C == IC, "conv2d: input channels " + std::to_string(C) + " != weight channels " + std::to_string(IC));
    detail::require(b.rank() == 1 && b.dim(0) == OC, "conv2d: bias must be [OC]");
    detail::require(kh <= H + 2 * padding && kw <= W + 2 * padding, "conv2d: kernel larger than padded input");
    const int OH = (H + 2 * padding - kh) / stride + 1;
    const int OW = (W + 2 * padding - kw) / stride + 1;
    const int CKK = C * kh * kw, OHW = OH * OW;

    std::vector<S> out(static_cast<std::size_t>(N) * OC * OHW);
    std::vector<S> cols(static_cast<std::size_t>(CKK) * OHW);
    detail::CMapRM<S> Wm(w.values().data(), OC, CKK);
    detail::CMapVec<S> bv(b.values().data(), OC);
    for (int n = 0; n < N; ++n) {
        detail::im2col(x.values().data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, kh, kw, stride,
                       padding, OH, OW, cols.data());
        detail::CMapRM<S> colm(cols.data(), CKK, OHW);
        detail::MapRM<S> Ym(out.data() + static_cast<std::size_t>(n) * OC * OHW, OC, OHW);
        Ym.noalias() = Wm * colm;
        Ym.colwise() += bv;
    }

    auto xn = x.node_ptr(), wn = w.node_ptr(), bn = b.node_ptr();
    auto back = [xn, wn, bn, N, C, H, W, OC, kh, kw, stride, padding, OH, OW, CKK, OHW](TensorNode<S>& self) {
        std::vector<S> cols(static_cast<std::size_t>(CKK) * OHW);
        detail::CMapRM<S> Wm(wn->value.data(), OC, CKK);
        for (int n = 0; n < N; ++n) {
            detail::CMapRM<S> dY(self.grad.data() + static_cast<std::size_t>(n) * OC * OHW, OC, OHW);
            if (bn->requires_grad) {
                bn->ensure_grad();
                detail::MapVec<S>(bn->grad.data(), OC) += dY.rowwise().sum();
            }
            if (wn->requires_grad || xn->requires_grad) {
                detail::im2col(xn->value.data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, kh, kw,
                               stride, padding, OH, OW, cols.data());
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                detail::CMapRM<S> colm(cols.data(), CKK, OHW);
                detail::MapRM<S> dW(wn->grad.data(), OC, CKK);
                dW.noalias() += dY * colm.transpose();
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                detail::RowMat<S> dcol = Wm.transpose() * dY;
                detail::col2im(dcol.data(), C, H, W, kh, kw, stride, padding, OH, OW,
                               xn->grad.data() + static_cast<std::size_t>(n) * C * H * W);
            }
        }
    };
    return detail::op_result<S>("conv2d", {N, OC, OH, OW}, std::move(out), {xn, wn, bn}, std::move(back));
}

template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Parameter<S>& w, const Parameter<S>& b, int stride, int padding) {
    return conv2d(x, w.tensor(), b.tensor(), stride, padding);
}

// Transposed convolution; weight layout [IC, OC, kh, kw].
template <class S>
Tensor<S> tconv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int stride, int padding,
                  int output_padding) {
    detail::require(x.rank() == 4, "tconv2d: input must be [N,C,H,W]");
    detail::require(w.rank() == 4, "tconv2d: weight must be [IC,OC,kh,kw]");
    detail::require(stride >= 1 && padding >= 0, "tconv2d: bad stride/padding");
    detail::require(output_padding >= 0 && output_padding < stride,
                    "tconv2d: inconsistent output_padding " + std::to_string(output_padding));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int IC = w.dim(0), OC = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    detail::require(C == IC, "tconv2d: input channels != weight channels");
    detail::require(b.rank() == 1 && b.dim(0) == OC, "tconv2d: bias must be [OC]");
    const int OH = (H - 1) * stride - 2 * padding + kh + output_padding;
    const int OW = (W - 1) * stride - 2 * padding + kw + output_padding;
    detail::require(OH > 0 && OW > 0, "tconv2d: output dims not positive");
    const int OKK = OC * kh * kw, HW = H * W;

    std::vector<S> out(static_cast<std::size_t>(N) * OC * OH * OW, S(0));
    detail::CMapRM<S> Wm(w.values().data(), IC, OKK);
    for (int n = 0; n < N; ++n) {
        detail::CMapRM<S> Xm(x.values().data() + static_cast<std::size_t>(n) * C * HW, C, HW);
        detail::RowMat<S> tmp = Wm.transpose() * Xm;  // [OC*kh*kw, H*W]
        detail::col2im(tmp.data(), OC, OH, OW, kh, kw, stride, padding, H, W,
                       out.data() + static_cast<std::size_t>(n) * OC * OH * OW);
        S* y = out.data() + static_cast<std::size_t>(n) * OC * OH * OW;
        for (int oc = 0; oc < OC; ++oc) {
            const S bb = b.values()[static_cast<std::size_t>(oc)];
            S* p = y + static_cast<std::size_t>(oc) * OH * OW;
            for (int i = 0; i < OH * OW; ++i) p[i] += bb;
        }
    }

    auto xn = x.node_ptr(), wn = w.node_ptr(), bn = b.node_ptr();
    auto back = [xn, wn, bn, N, C, H, W, OC, kh, kw, stride, padding, OH, OW, OKK, HW](TensorNode<S>& self) {
        std::vector<S> cols(static_cast<std::size_t>(OKK) * HW);
        detail::CMapRM<S> Wm(wn->value.data(), C, OKK);
        for (int n = 0; n < N; ++n) {
            const S* dYp = self.grad.data() + static_cast<std::size_t>(n) * OC * OH * OW;
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int oc = 0; oc < OC; ++oc) {
                    S acc = S(0);
                    const S* p = dYp + static_cast<std::size_t>(oc) * OH * OW;
                    for (int i = 0; i < OH * OW; ++i) acc += p[i];
                    bn->grad[static_cast<std::size_t>(oc)] += acc;
                }
            }
            if (!wn->requires_grad && !xn->requires_grad) continue;
            detail::im2col(dYp, OC, OH, OW, kh, kw, stride, padding, H, W, cols.data());
            detail::CMapRM<S> colm(cols.data(), OKK, HW);
            if (xn->requires_grad) {
                xn->ensure_grad();
                detail::MapRM<S> dX(xn->grad.data() + static_cast<std::size_t>(n) * C * HW, C, HW);
                dX.noalias() += Wm * colm;
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                detail::CMapRM<S> Xm(xn->value.data() + static_cast<std::size_t>(n) * C * HW, C, HW);
                detail::MapRM<S> dW(wn->grad.data(), C, OKK);
                dW.noalias() += Xm * colm.transpose();
            }
        }
    };
    return detail::op_result<S>("tconv2d", {N, OC, OH, OW}, std::move(out), {xn, wn, bn}, std::move(back));
}

template <class S>
Tensor<S> tconv2d(const Tensor<S>& x, const Parameter<S>& w, const Parameter<S>& b, int stride, int padding,
                  int output_padding) {
    return tconv2d(x, w.tensor(), b.tensor(), stride, padding, output_padding);
}

// Non-overlapping max pooling with window k (stride k, no padding, floor).
template <class S>
Tensor<S> maxpool2d(const Tensor<S>& x, int k) {
    detail::require(x.rank() == 4, "maxpool2d: input must be [N,C,H,W]");
    detail::require(k >= 1, "maxpool2d: window must be >= 1");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    detail::require(H >= k && W >= k, "maxpool2d: window larger than input");
    const int OH = H / k, OW = W / k;

    std::vector<S> out(static_cast<std::size_t>(N) * C * OH * OW);
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    const auto& xv = x.values();
    std::size_t oi = 0;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const std::size_t plane = (static_cast<std::size_t>(n) * C + c) * H * W;
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow, ++oi) {
                    S best = xv[plane + static_cast<std::size_t>(oh * k) * W + ow * k];
                    std::size_t bi = plane + static_cast<std::size_t>(oh * k) * W + ow * k;
                    for (int i = 0; i < k; ++i)
                        for (int j = 0; j < k; ++j) {
                            const std::size_t idx = plane + static_cast<std::size_t>(oh * k + i) * W + (ow * k + j);
                            if (xv[idx] > best) {
                                best = xv[idx];
                                bi = idx;
                            }
                        }
                    out[oi] = best;
                    (*argmax)[oi] = bi;
                }
        }

    auto xn = x.node_ptr();
    return detail::op_result<S>("maxpool2d", {N, C, OH, OW}, std::move(out), {xn}, [xn, argmax](TensorNode<S>& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[(*argmax)[i]] += self.grad[i];
    });
}

// PyTorch-style adaptive average pooling; requires input >= target.
template <class S>
Tensor<S> adaptive_avg_pool2d(const Tensor<S>& x, int oh, int ow) {
    detail::require(x.rank() == 4, "adaptive_avg_pool2d: input must be [N,C,H,W]");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (oh > H || ow > W)
        throw DimError("adaptive_avg_pool2d: target " + std::to_string(oh) + "x" + std::to_string(ow) +
                       " larger than input " + std::to_string(H) + "x" + std::to_string(W));
    detail::require(oh >= 1 && ow >= 1, "adaptive_avg_pool2d: bad target");

    auto bin = [](int i, int in, int out) {
        return std::pair<int, int>{(i * in) / out, ((i + 1) * in + out - 1) / out};
    };
    std::vector<S> out(static_cast<std::size_t>(N) * C * oh * ow);
    const auto& xv = x.values();
    std::size_t oi = 0;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const std::size_t plane = (static_cast<std::size_t>(n) * C + c) * H * W;
            for (int a = 0; a < oh; ++a) {
                auto [h0, h1] = bin(a, H, oh);
                for (int b2 = 0; b2 < ow; ++b2, ++oi) {
                    auto [w0, w1] = bin(b2, W, ow);
                    S acc = S(0);
                    for (int h = h0; h < h1; ++h)
                        for (int w = w0; w < w1; ++w) acc += xv[plane + static_cast<std::size_t>(h) * W + w];
                    out[oi] = acc / static_cast<S>((h1 - h0) * (w1 - w0));
                }
            }
        }

    auto xn = x.node_ptr();
    return detail::op_result<S>("adaptive_avg_pool2d", {N, C, oh, ow}, std::move(out), {xn},
                                [xn, N, C, H, W, oh, ow, bin](TensorNode<S>& self) {
                                    if (!xn->requires_grad) return;
                                    xn->ensure_grad();
                                    std::size_t oi = 0;
                                    for (int n = 0; n < N; ++n)
                                        for (int c = 0; c < C; ++c) {
                                            const std::size_t plane = (static_cast<std::size_t>(n) * C + c) * H * W;
                                            for (int a = 0; a < oh; ++a) {
                                                auto [h0, h1] = bin(a, H, oh);
                                                for (int b2 = 0; b2 < ow; ++b2, ++oi) {
                                                    auto [w0, w1] = bin(b2, W, ow);
                                                    const S g = self.grad[oi] / static_cast<S>((h1 - h0) * (w1 - w0));
                                                    for (int h = h0; h < h1; ++h)
                                                        for (int w = w0; w < w1; ++w)
                                                            xn->grad[plane + static_cast<std::size_t>(h) * W + w] += g;
                                                }
                                            }
                                        }
                                });
}

// y = x * W^T + b with x:[N,F], W:[O,F], b:[O].
template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    detail::require(x.rank() == 2 && w.rank() == 2, "linear: x and W must be rank 2");
    const int N = x.dim(0), F = x.dim(1), O = w.dim(0);
    detail::require(w.dim(1) == F, "linear: feature size mismatch");
    detail::require(b.rank() == 1 && b.dim(0) == O, "linear: bias must be [O]");

    std::vector<S> out(static_cast<std::size_t>(N) * O);
    detail::CMapRM<S> Xm(x.values().data(), N, F);
    detail::CMapRM<S> Wm(w.values().data(), O, F);
    detail::MapRM<S> Ym(out.data(), N, O);
    Ym.noalias() = Xm * Wm.transpose();
    Ym.rowwise() += detail::CMapVec<S>(b.values().data(), O).transpose();

    auto xn = x.node_ptr(), wn = w.node_ptr(), bn = b.node_ptr();
    return detail::op_result<S>("linear", {N, O}, std::move(out), {xn, wn, bn}, [xn, wn, bn, N, F, O](TensorNode<S>& self) {
        detail::CMapRM<S> dY(self.grad.data(), N, O);
        if (bn->requires_grad) {
            bn->ensure_grad();
            detail::MapVec<S>(bn->grad.data(), O) += dY.colwise().sum().transpose();
        }
        if (xn->requires_grad) {
            xn->ensure_grad();
            detail::CMapRM<S> Wm(wn->value.data(), O, F);
            detail::MapRM<S> dX(xn->grad.data(), N, F);
            dX.noalias() += dY * Wm;
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            detail::CMapRM<S> Xm(xn->value.data(), N, F);
            detail::MapRM<S> dW(wn->grad.data(), O, F);
            dW.noalias() += dY.transpose() * Xm;
        }
    });
}

template <class S>
Tensor<S> linear(const Tensor<S>& x, const Parameter<S>& w, const Parameter<S>& b) {
    return linear(x, w.tensor(), b.tensor());
}

// ---------------------------------------------------------------------------
// Losses and likelihoods
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> mse(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require(a.shape() == b.shape(), "mse: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t n = a.values().size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a.values()[i]) - static_cast<double>(b.values()[i]);
        acc += d * d;
    }
    const S val = static_cast<S>(acc / static_cast<double>(n));
    auto an = a.node_ptr(), bn = b.node_ptr();
    return detail::op_result<S>("mse", {1}, {val}, {an, bn}, [an, bn, n](TensorNode<S>& self) {
        const S g = self.grad[0] * S(2) / static_cast<S>(n);
        if (an->requires_grad) an->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            const S d = (an->value[i] - bn->value[i]) * g;
            if (an->requires_grad) an->grad[i] += d;
            if (bn->requires_grad) bn->grad[i] -= d;
        }
    });
}

// Mean cross entropy (natural log) from raw logits, computed via log-sum-exp.
template <class S>
Tensor<S> cross_entropy_with_logits(const Tensor<S>& logits, const std::vector<int>& labels) {
    detail::require(logits.rank() == 2, "cross_entropy: logits must be [N,C]");
    const int N = logits.dim(0), C = logits.dim(1);
    if (static_cast<int>(labels.size()) != N) throw ContractError("cross_entropy: label count != batch size");
    for (int l : labels)
        if (l < 0 || l >= C) throw ContractError("cross_entropy: label " + std::to_string(l) + " out of range");

    const auto& x = logits.values();
    double acc = 0.0;
    for (int i = 0; i < N; ++i) {
        const S* row = x.data() + static_cast<std::size_t>(i) * C;
        S m = row[0];
        for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
        double z = 0.0;
        for (int c = 0; c < C; ++c) z += std::exp(static_cast<double>(row[c] - m));
        acc += static_cast<double>(m) + std::log(z) - static_cast<double>(row[labels[static_cast<std::size_t>(i)]]);
    }
    const S val = static_cast<S>(acc / N);

    auto ln = logits.node_ptr();
    auto lab = std::make_shared<std::vector<int>>(labels);
    return detail::op_result<S>("cross_entropy", {1}, {val}, {ln}, [ln, lab, N, C](TensorNode<S>& self) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const S g = self.grad[0] / static_cast<S>(N);
        for (int i = 0; i < N; ++i) {
            const S* row = ln->value.data() + static_cast<std::size_t>(i) * C;
            S m = row[0];
            for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
            double z = 0.0;
            for (int c = 0; c < C; ++c) z += std::exp(static_cast<double>(row[c] - m));
            S* gr = ln->grad.data() + static_cast<std::size_t>(i) * C;
            for (int c = 0; c < C; ++c) {
                const S p = static_cast<S>(std::exp(static_cast<double>(row[c] - m)) / z);
                gr[c] += g * (p - (c == (*lab)[static_cast<std::size_t>(i)] ? S(1) : S(0)));
            }
        }
    });
}

// Probability mass of the unit-width interval around each value under a
// per-channel Gaussian: p = Phi((v - mu + 1/2)/sigma) - Phi((v - mu - 1/2)/sigma).
// y is [M,h,w] or [N,M,h,w]; mean and scale are [M].
template <class S>
Tensor<S> gaussian_interval_likelihood(const Tensor<S>& y, const Tensor<S>& mean, const Tensor<S>& scale) {
    detail::require(y.rank() == 3 || y.rank() == 4, "likelihood: y must be [M,h,w] or [N,M,h,w]");
    const int cdim = y.rank() - 3;
    const int M = y.dim(cdim);
    detail::require(mean.rank() == 1 && mean.dim(0) == M, "likelihood: mean must be [M]");
    detail::require(scale.rank() == 1 && scale.dim(0) == M, "likelihood: scale must be [M]");
    for (S s : scale.values())
        if (!(s > S(0))) throw CodecError("entropy model scale must be positive");

    const int N = (y.rank() == 4) ? y.dim(0) : 1;
    const std::int64_t hw = y.numel() / (static_cast<std::int64_t>(N) * M);
    static const double inv_sqrt2 = 0.7071067811865475244;

    auto phi_cdf = [](double z) { return 0.5 * std::erfc(-z * inv_sqrt2); };

    std::vector<S> p(y.values().size());
    const auto& yv = y.values();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < M; ++c) {
            const double mu = static_cast<double>(mean.values()[static_cast<std::size_t>(c)]);
            const double sg = static_cast<double>(scale.values()[static_cast<std::size_t>(c)]);
            const std::size_t off = (static_cast<std::size_t>(n) * M + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
                const double v = static_cast<double>(yv[off + i]);
                p[off + i] = static_cast<S>(phi_cdf((v - mu + 0.5) / sg) - phi_cdf((v - mu - 0.5) / sg));
            }
        }

    auto yn = y.node_ptr(), mn = mean.node_ptr(), sn = scale.node_ptr();
    auto back = [yn, mn, sn, N, M, hw](TensorNode<S>& self) {
        static const double inv_sqrt2pi = 0.3989422804014326779;
        auto pdf = [](double z) { return inv_sqrt2pi * std::exp(-0.5 * z * z); };
        if (yn->requires_grad) yn->ensure_grad();
        if (mn->requires_grad) mn->ensure_grad();
        if (sn->requires_grad) sn->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < M; ++c) {
                const double mu = static_cast<double>(mn->value[static_cast<std::size_t>(c)]);
                const double sg = static_cast<double>(sn->value[static_cast<std::size_t>(c)]);
                const std::size_t off = (static_cast<std::size_t>(n) * M + c) * hw;
                double dmu = 0.0, dsg = 0.0;
                for (std::int64_t i = 0; i < hw; ++i) {
                    const double g = static_cast<double>(self.grad[off + i]);
                    if (g == 0.0) continue;
                    const double v = static_cast<double>(yn->value[off + i]);
                    const double zh = (v - mu + 0.5) / sg, zl = (v - mu - 0.5) / sg;
                    const double ph = pdf(zh), pl = pdf(zl);
                    const double dv = (ph - pl) / sg;
                    if (yn->requires_grad) yn->grad[off + i] += static_cast<S>(g * dv);
                    dmu -= g * dv;
                    dsg -= g * (ph * zh - pl * zl) / sg;
                }
                if (mn->requires_grad) mn->grad[static_cast<std::size_t>(c)] += static_cast<S>(dmu);
                if (sn->requires_grad) sn->grad[static_cast<std::size_t>(c)] += static_cast<S>(dsg);
            }
    };
    return detail::op_result<S>("gaussian_interval_likelihood", y.shape(), std::move(p), {yn, mn, sn}, std::move(back));
}

// ---------------------------------------------------------------------------
// Non-graph tensor utilities
// ---------------------------------------------------------------------------

// Round to nearest, ties away from zero. Produces a constant tensor.
template <class S>
Tensor<S> round_ties_away(const Tensor<S>& t) {
    std::vector<S> v(t.values());
    for (auto& x : v) x = std::round(x);
    return Tensor<S>::from(t.shape(), std::move(v));
}

template <class S>
Tensor<S> constant_like(const Tensor<S>& t) {
    return Tensor<S>::from(t.shape(), t.values());
}

inline int argmax_index(const std::vector<float>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
    return best;
}
inline int argmax_index(const std::vector<double>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
    return best;
}

}  // namespace licda
