// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "pano/kernels.hpp"
#include "pano/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

// Differentiable tensor operations. Every vjp is itself written in terms of
// ops from this file, so gradients computed with create_graph=true can be
// differentiated once more (needed for the masked gradient penalty).
//
// Convolution uses cross-correlation semantics (no kernel flip), matching
// mainstream framework convention.

namespace pano::ops {

using pano::Tensor;
using pano::TensorData;

enum class PadMode { zero, circular_h };

namespace detail {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

template <typename T>
void check_rank(const Tensor<T>& a, size_t rank, const char* what) {
    if (a.rank() != rank) {
        throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(rank) +
                                    " tensor, got shape " + shape_str(a.shape()));
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    TensorData<T> out = TensorData<T>::zeros(a.shape());
    kern::vaddc(a.numel(), a.data(), c, out.data.data());
    return Tensor<T>::make_op(std::move(out), {a},
                              [](const Tensor<T>&, const Tensor<T>& g) { return std::vector<Tensor<T>>{g}; });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
    TensorData<T> out = TensorData<T>::zeros(a.shape());
    kern::vscale(a.numel(), c, a.data(), out.data.data());
    return Tensor<T>::make_op(std::move(out), {a}, [c](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{mul_scalar(g, c)};
    });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return mul_scalar(a, T(-1));
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a);

template <typename T>
Tensor<T> broadcast_scalar(const Tensor<T>& s, Shape shape) {
    if (s.numel() != 1) throw std::invalid_argument("broadcast_scalar: source must be scalar");
    TensorData<T> out = TensorData<T>::full(std::move(shape), s.data()[0]);
    return Tensor<T>::make_op(std::move(out), {s}, [](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{sum_all(g)};
    });
}

}  // namespace pano::ops

namespace pano {
// Fulfills the forward declaration used by the autograd engine.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() == b.shape()) {
        TensorData<T> out = TensorData<T>::zeros(a.shape());
        kern::vadd(a.numel(), a.data(), b.data(), out.data.data());
        return Tensor<T>::make_op(std::move(out), {a, b}, [](const Tensor<T>&, const Tensor<T>& g) {
            return std::vector<Tensor<T>>{g, g};
        });
    }
    if (b.numel() == 1) {
        TensorData<T> out = TensorData<T>::zeros(a.shape());
        kern::vaddc(a.numel(), a.data(), b.data()[0], out.data.data());
        return Tensor<T>::make_op(std::move(out), {a, b}, [](const Tensor<T>&, const Tensor<T>& g) {
            return std::vector<Tensor<T>>{g, ops::sum_all(g)};
        });
    }
    if (a.numel() == 1) return add(b, a);
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}
}  // namespace pano

namespace pano::ops {

using pano::add;

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() == b.shape()) {
        TensorData<T> out = TensorData<T>::zeros(a.shape());
        kern::vsub(a.numel(), a.data(), b.data(), out.data.data());
        return Tensor<T>::make_op(std::move(out), {a, b}, [](const Tensor<T>&, const Tensor<T>& g) {
            return std::vector<Tensor<T>>{g, neg(g)};
        });
    }
    if (b.numel() == 1) {
        TensorData<T> out = TensorData<T>::zeros(a.shape());
        kern::vaddc(a.numel(), a.data(), -b.data()[0], out.data.data());
        return Tensor<T>::make_op(std::move(out), {a, b}, [](const Tensor<T>&, const Tensor<T>& g) {
            return std::vector<Tensor<T>>{g, neg(sum_all(g))};
        });
    }
    if (a.numel() == 1) return add(neg(b), a);
    throw std::invalid_argument("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() == b.shape()) {
        TensorData<T> out = TensorData<T>::zeros(a.shape());
        kern::vmul(a.numel(), a.data(), b.data(), out.data.data());
        return Tensor<T>::make_op(std::move(out), {a, b}, [a, b](const Tensor<T>&, const Tensor<T>& g) {
            return std::vector<Tensor<T>>{mul(g, b), mul(g, a)};
        });
    }
    if (b.numel() == 1) {
        TensorData<T> out = TensorData<T>::zeros(a.shape());
        kern::vscale(a.numel(), b.data()[0], a.data(), out.data.data());
        return Tensor<T>::make_op(std::move(out), {a, b}, [a, b](const Tensor<T>&, const Tensor<T>& g) {
            return std::vector<Tensor<T>>{mul(g, b), sum_all(mul(g, a))};
        });
    }
    if (a.numel() == 1) return mul(b, a);
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
Tensor<T> maximum_scalar(const Tensor<T>& a, T c) {
    TensorData<T> out = TensorData<T>::zeros(a.shape());
    kern::vmaxc(a.numel(), a.data(), c, out.data.data());
    TensorData<T> mask = TensorData<T>::zeros(a.shape());
    for (i64 i = 0; i < a.numel(); ++i) mask.data[i] = a.data()[i] > c ? T(1) : T(0);
    Tensor<T> mask_t(std::move(mask));
    return Tensor<T>::make_op(std::move(out), {a}, [mask_t](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{mul(g, mask_t)};
    });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    TensorData<T> out = TensorData<T>::zeros(a.shape());
    TensorData<T> sign = TensorData<T>::zeros(a.shape());
    for (i64 i = 0; i < a.numel(); ++i) {
        const T v = a.data()[i];
        out.data[i] = v < T(0) ? -v : v;
        sign.data[i] = v < T(0) ? T(-1) : T(1);
    }
    Tensor<T> sign_t(std::move(sign));
    return Tensor<T>::make_op(std::move(out), {a}, [sign_t](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{mul(g, sign_t)};
    });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    TensorData<T> out = TensorData<T>::zeros(a.shape());
    kern::relu(a.numel(), a.data(), out.data.data());
    TensorData<T> mask = TensorData<T>::zeros(a.shape());
    for (i64 i = 0; i < a.numel(); ++i) mask.data[i] = a.data()[i] > T(0) ? T(1) : T(0);
    Tensor<T> mask_t(std::move(mask));
    return Tensor<T>::make_op(std::move(out), {a}, [mask_t](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{mul(g, mask_t)};
    });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
    TensorData<T> out = TensorData<T>::zeros(a.shape());
    kern::lrelu(a.numel(), a.data(), slope, out.data.data());
    TensorData<T> mask = TensorData<T>::zeros(a.shape());
    for (i64 i = 0; i < a.numel(); ++i) mask.data[i] = a.data()[i] > T(0) ? T(1) : slope;
    Tensor<T> mask_t(std::move(mask));
    return Tensor<T>::make_op(std::move(out), {a}, [mask_t](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{mul(g, mask_t)};
    });
}

// ELU with alpha = 1. d/dx = 1 for x > 0 and elu(x) + 1 otherwise, so the
// vjp is expressed through the saved output and stays twice-differentiable.
template <typename T>
Tensor<T> elu(const Tensor<T>& a) {
    TensorData<T> out = TensorData<T>::zeros(a.shape());
    TensorData<T> pos = TensorData<T>::zeros(a.shape());
    for (i64 i = 0; i < a.numel(); ++i) {
        const T v = a.data()[i];
        if (v > T(0)) {
            out.data[i] = v;
            pos.data[i] = T(1);
        } else {
            out.data[i] = std::exp(v) - T(1);
        }
    }
    Tensor<T> pos_t(std::move(pos));
    return Tensor<T>::make_op(std::move(out), {a}, [pos_t](const Tensor<T>& self, const Tensor<T>& g) {
        Tensor<T> neg_part = mul(sub(Tensor<T>::ones(pos_t.shape()), pos_t), add_scalar(self, T(1)));
        Tensor<T> slope = add(pos_t, neg_part);
        return std::vector<Tensor<T>>{mul(g, slope)};
    });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    TensorData<T> out = TensorData<T>::zeros(a.shape());
    for (i64 i = 0; i < a.numel(); ++i) {
        const T v = a.data()[i];
        out.data[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
    }
    return Tensor<T>::make_op(std::move(out), {a}, [](const Tensor<T>& self, const Tensor<T>& g) {
        Tensor<T> one_minus = add_scalar(neg(self), T(1));
        return std::vector<Tensor<T>>{mul(g, mul(self, one_minus))};
    });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
    TensorData<T> out = TensorData<T>::zeros(a.shape());
    for (i64 i = 0; i < a.numel(); ++i) out.data[i] = std::exp(a.data()[i]);
    return Tensor<T>::make_op(std::move(out), {a}, [](const Tensor<T>& self, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{mul(g, self)};
    });
}

template <typename T>
Tensor<T> recip(const Tensor<T>& a) {
    TensorData<T> out = TensorData<T>::zeros(a.shape());
    for (i64 i = 0; i < a.numel(); ++i) out.data[i] = T(1) / a.data()[i];
    return Tensor<T>::make_op(std::move(out), {a}, [](const Tensor<T>& self, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{neg(mul(g, mul(self, self)))};
    });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
    TensorData<T> out = TensorData<T>::zeros(a.shape());
    for (i64 i = 0; i < a.numel(); ++i) out.data[i] = std::sqrt(a.data()[i]);
    return Tensor<T>::make_op(std::move(out), {a}, [](const Tensor<T>& self, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{mul(g, mul_scalar(recip(self), T(0.5)))};
    });
}

template <typename T>
Tensor<T> detach(const Tensor<T>& a) {
    return Tensor<T>(a.value());
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    const T s = kern::sum(a.numel(), a.data());
    Shape src = a.shape();
    return Tensor<T>::make_op(TensorData<T>({1}, {s}), {a}, [src](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{broadcast_scalar(g, src)};
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
    return mul_scalar(sum_all(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> expand_per_item(const Tensor<T>& s, Shape shape);

// Reduce over all axes except the leading (batch) one.
template <typename T>
Tensor<T> sum_per_item(const Tensor<T>& a) {
    if (a.rank() < 1) throw std::invalid_argument("sum_per_item: rank >= 1 required");
    const i64 n = a.dim(0);
    const i64 inner = a.numel() / std::max<i64>(n, 1);
    TensorData<T> out = TensorData<T>::zeros({n});
    for (i64 i = 0; i < n; ++i) out.data[i] = kern::sum(inner, a.data() + i * inner);
    Shape src = a.shape();
    return Tensor<T>::make_op(std::move(out), {a}, [src](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{expand_per_item(g, src)};
    });
}

template <typename T>
Tensor<T> expand_per_item(const Tensor<T>& s, Shape shape) {
    const i64 n = shape.empty() ? 0 : shape[0];
    if (s.rank() != 1 || s.dim(0) != n) {
        throw std::invalid_argument("expand_per_item: source must be (batch) vector");
    }
    TensorData<T> out = TensorData<T>::zeros(shape);
    const i64 inner = out.numel() / std::max<i64>(n, 1);
    for (i64 i = 0; i < n; ++i) {
        std::fill(out.data.begin() + i * inner, out.data.begin() + (i + 1) * inner, s.data()[i]);
    }
    return Tensor<T>::make_op(std::move(out), {s}, [](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{sum_per_item(g)};
    });
}

template <typename T>
Tensor<T> expand_last(const Tensor<T>& s, i64 d);

template <typename T>
Tensor<T> sum_last(const Tensor<T>& a) {
    detail::check_rank(a, 2, "sum_last");
    const i64 r = a.dim(0), d = a.dim(1);
    TensorData<T> out = TensorData<T>::zeros({r});
    for (i64 i = 0; i < r; ++i) out.data[i] = kern::sum(d, a.data() + i * d);
    return Tensor<T>::make_op(std::move(out), {a}, [d](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{expand_last(g, d)};
    });
}

template <typename T>
Tensor<T> expand_last(const Tensor<T>& s, i64 d) {
    detail::check_rank(s, 1, "expand_last");
    const i64 r = s.dim(0);
    TensorData<T> out = TensorData<T>::zeros({r, d});
    for (i64 i = 0; i < r; ++i) {
        std::fill(out.data.begin() + i * d, out.data.begin() + (i + 1) * d, s.data()[i]);
    }
    return Tensor<T>::make_op(std::move(out), {s}, [](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{sum_last(g)};
    });
}

// Row maxima as a detached constant (used for softmax stabilization).
template <typename T>
Tensor<T> rowmax_const(const Tensor<T>& a) {
    detail::check_rank(a, 2, "rowmax_const");
    const i64 r = a.dim(0), d = a.dim(1);
    TensorData<T> out = TensorData<T>::zeros({r});
    for (i64 i = 0; i < r; ++i) {
        T m = a.data()[i * d];
        for (i64 j = 1; j < d; ++j) m = std::max(m, a.data()[i * d + j]);
        out.data[i] = m;
    }
    return Tensor<T>(std::move(out));
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape s) {
    if (numel_of(s) != a.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(s));
    }
    TensorData<T> out(s, a.value().data);
    Shape src = a.shape();
    return Tensor<T>::make_op(std::move(out), {a}, [src](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{reshape(g, src)};
    });
}

template <typename T>
Tensor<T> embed_axis(const Tensor<T>& a, size_t axis, i64 start, i64 full);

template <typename T>
Tensor<T> slice_axis(const Tensor<T>& a, size_t axis, i64 start, i64 len) {
    if (axis >= a.rank() || start < 0 || len <= 0 || start + len > a.dim(axis)) {
        throw std::invalid_argument("slice_axis: invalid slice [" + std::to_string(start) + "," +
                                    std::to_string(start + len) + ") of axis " + std::to_string(axis) +
                                    " in " + shape_str(a.shape()));
    }
    Shape os = a.shape();
    const i64 full = os[axis];
    os[axis] = len;
    i64 outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    TensorData<T> out = TensorData<T>::zeros(os);
    for (i64 o = 0; o < outer; ++o) {
        const T* src = a.data() + (o * full + start) * inner;
        std::copy(src, src + len * inner, out.data.begin() + o * len * inner);
    }
    return Tensor<T>::make_op(std::move(out), {a}, [axis, start, full](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{embed_axis(g, axis, start, full)};
    });
}

// Adjoint of slice_axis: place `a` into a zero tensor whose `axis` extent is
// `full`, starting at `start`.
template <typename T>
Tensor<T> embed_axis(const Tensor<T>& a, size_t axis, i64 start, i64 full) {
    if (axis >= a.rank() || start < 0 || start + a.dim(axis) > full) {
        throw std::invalid_argument("embed_axis: invalid placement");
    }
    Shape os = a.shape();
    const i64 len = os[axis];
    os[axis] = full;
    i64 outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    TensorData<T> out = TensorData<T>::zeros(os);
    for (i64 o = 0; o < outer; ++o) {
        const T* src = a.data() + o * len * inner;
        std::copy(src, src + len * inner, out.data.begin() + (o * full + start) * inner);
    }
    return Tensor<T>::make_op(std::move(out), {a}, [axis, start, len](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{slice_axis(g, axis, start, len)};
    });
}

template <typename T>
Tensor<T> concat_axis(const std::vector<Tensor<T>>& parts, size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat_axis: no inputs");
    Shape os = parts[0].shape();
    if (axis >= os.size()) throw std::invalid_argument("concat_axis: bad axis");
    i64 total = 0;
    for (const auto& p : parts) {
        Shape ps = p.shape();
        ps[axis] = os[axis];
        if (ps != os) {
            throw std::invalid_argument("concat_axis: incompatible shapes " + shape_str(os) + " vs " +
                                        shape_str(p.shape()));
        }
        total += p.dim(axis);
    }
    os[axis] = total;
    i64 outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= os[i];
    for (size_t i = axis + 1; i < os.size(); ++i) inner *= os[i];
    TensorData<T> out = TensorData<T>::zeros(os);
    i64 at = 0;
    for (const auto& p : parts) {
        const i64 len = p.dim(axis);
        for (i64 o = 0; o < outer; ++o) {
            const T* src = p.data() + o * len * inner;
            std::copy(src, src + len * inner, out.data.begin() + (o * total + at) * inner);
        }
        at += len;
    }
    std::vector<i64> lens;
    for (const auto& p : parts) lens.push_back(p.dim(axis));
    return Tensor<T>::make_op(std::move(out), parts, [axis, lens](const Tensor<T>&, const Tensor<T>& g) {
        std::vector<Tensor<T>> gs;
        i64 at = 0;
        for (i64 len : lens) {
            gs.push_back(slice_axis(g, axis, at, len));
            at += len;
        }
        return gs;
    });
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    detail::check_rank(a, 2, "transpose2d");
    const i64 r = a.dim(0), c = a.dim(1);
    TensorData<T> out = TensorData<T>::zeros({c, r});
    for (i64 i = 0; i < r; ++i)
        for (i64 j = 0; j < c; ++j) out.data[j * r + i] = a.data()[i * c + j];
    return Tensor<T>::make_op(std::move(out), {a}, [](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{transpose2d(g)};
    });
}

// ---------------------------------------------------------------------------
// padding & resampling (NCHW)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> pad2d_adjoint(const Tensor<T>& a, i64 top, i64 bottom, i64 left, i64 right, PadMode mode);

// Pads H with zeros; pads W with zeros (PadMode::zero) or cyclic wrap
// (PadMode::circular_h). Wrap handles pads wider than the image.
template <typename T>
Tensor<T> pad2d(const Tensor<T>& a, i64 top, i64 bottom, i64 left, i64 right, PadMode mode) {
    detail::check_rank(a, 4, "pad2d");
    const i64 n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
    const i64 oh = h + top + bottom, ow = w + left + right;
    TensorData<T> out = TensorData<T>::zeros({n, c, oh, ow});
    for (i64 nc = 0; nc < n * c; ++nc) {
        const T* src = a.data() + nc * h * w;
        T* dst = out.data.data() + nc * oh * ow;
        for (i64 y = 0; y < h; ++y) {
            T* drow = dst + (y + top) * ow;
            const T* srow = src + y * w;
            if (mode == PadMode::zero) {
                std::copy(srow, srow + w, drow + left);
            } else {
                for (i64 x = 0; x < ow; ++x) {
                    const i64 sx = ((x - left) % w + w) % w;
                    drow[x] = srow[sx];
                }
            }
        }
    }
    return Tensor<T>::make_op(std::move(out), {a},
                              [top, bottom, left, right, mode](const Tensor<T>&, const Tensor<T>& g) {
                                  return std::vector<Tensor<T>>{pad2d_adjoint(g, top, bottom, left, right, mode)};
                              });
}

// Exact adjoint of pad2d: crops vertically and either crops (zero) or
// wrap-accumulates (circular_h) horizontally.
template <typename T>
Tensor<T> pad2d_adjoint(const Tensor<T>& a, i64 top, i64 bottom, i64 left, i64 right, PadMode mode) {
    detail::check_rank(a, 4, "pad2d_adjoint");
    const i64 n = a.dim(0), c = a.dim(1), ih = a.dim(2), iw = a.dim(3);
    const i64 h = ih - top - bottom, w = iw - left - right;
    if (h <= 0 || w <= 0) throw std::invalid_argument("pad2d_adjoint: pads exceed input " + shape_str(a.shape()));
    TensorData<T> out = TensorData<T>::zeros({n, c, h, w});
    for (i64 nc = 0; nc < n * c; ++nc) {
        const T* src = a.data() + nc * ih * iw;
        T* dst = out.data.data() + nc * h * w;
        for (i64 y = 0; y < h; ++y) {
            const T* srow = src + (y + top) * iw;
            T* drow = dst + y * w;
            if (mode == PadMode::zero) {
                for (i64 x = 0; x < w; ++x) drow[x] = srow[x + left];
            } else {
                for (i64 x = 0; x < iw; ++x) {
                    const i64 dx = ((x - left) % w + w) % w;
                    drow[dx] += srow[x];
                }
            }
        }
    }
    return Tensor<T>::make_op(std::move(out), {a},
                              [top, bottom, left, right, mode](const Tensor<T>&, const Tensor<T>& g) {
                                  return std::vector<Tensor<T>>{pad2d(g, top, bottom, left, right, mode)};
                              });
}

template <typename T>
Tensor<T> downsample_sum(const Tensor<T>& a, i64 fh, i64 fw);

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& a, i64 fh, i64 fw) {
    detail::check_rank(a, 4, "upsample_nearest");
    if (fh < 1 || fw < 1) throw std::invalid_argument("upsample_nearest: factors must be >= 1");
    const i64 n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
    TensorData<T> out = TensorData<T>::zeros({n, c, h * fh, w * fw});
    const i64 ow = w * fw;
    for (i64 nc = 0; nc < n * c; ++nc) {
        const T* src = a.data() + nc * h * w;
        T* dst = out.data.data() + nc * h * fh * ow;
        for (i64 y = 0; y < h * fh; ++y) {
            const T* srow = src + (y / fh) * w;
            T* drow = dst + y * ow;
            for (i64 x = 0; x < ow; ++x) drow[x] = srow[x / fw];
        }
    }
    return Tensor<T>::make_op(std::move(out), {a}, [fh, fw](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{downsample_sum(g, fh, fw)};
    });
}

template <typename T>
Tensor<T> downsample_sum(const Tensor<T>& a, i64 fh, i64 fw) {
    detail::check_rank(a, 4, "downsample_sum");
    const i64 n = a.dim(0), c = a.dim(1), ih = a.dim(2), iw = a.dim(3);
    if (ih % fh != 0 || iw % fw != 0) throw std::invalid_argument("downsample_sum: dims not divisible by factors");
    const i64 h = ih / fh, w = iw / fw;
    TensorData<T> out = TensorData<T>::zeros({n, c, h, w});
    for (i64 nc = 0; nc < n * c; ++nc) {
        const T* src = a.data() + nc * ih * iw;
        T* dst = out.data.data() + nc * h * w;
        for (i64 y = 0; y < ih; ++y) {
            const T* srow = src + y * iw;
            T* drow = dst + (y / fh) * w;
            for (i64 x = 0; x < iw; ++x) drow[x / fw] += srow[x];
        }
    }
    return Tensor<T>::make_op(std::move(out), {a}, [fh, fw](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{upsample_nearest(g, fh, fw)};
    });
}

// ---------------------------------------------------------------------------
// convolution triad (cross-correlation, zero padding handled by pad2d)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void im2col(const T* x, i64 cin, i64 h, i64 w, i64 kh, i64 kw, i64 stride, i64 oh, i64 ow, T* col) {
    // col is (cin*kh*kw) x (oh*ow)
    const i64 ohw = oh * ow;
    for (i64 ic = 0; ic < cin; ++ic) {
        for (i64 a = 0; a < kh; ++a) {
            for (i64 b = 0; b < kw; ++b) {
                T* crow = col + ((ic * kh + a) * kw + b) * ohw;
                for (i64 y = 0; y < oh; ++y) {
                    const T* srow = x + ic * h * w + (y * stride + a) * w + b;
                    if (stride == 1) {
                        std::copy(srow, srow + ow, crow + y * ow);
                    } else {
                        for (i64 xo = 0; xo < ow; ++xo) crow[y * ow + xo] = srow[xo * stride];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, i64 cin, i64 h, i64 w, i64 kh, i64 kw, i64 stride, i64 oh, i64 ow, T* x) {
    const i64 ohw = oh * ow;
    for (i64 ic = 0; ic < cin; ++ic) {
        for (i64 a = 0; a < kh; ++a) {
            for (i64 b = 0; b < kw; ++b) {
                const T* crow = col + ((ic * kh + a) * kw + b) * ohw;
                for (i64 y = 0; y < oh; ++y) {
                    T* drow = x + ic * h * w + (y * stride + a) * w + b;
                    for (i64 xo = 0; xo < ow; ++xo) drow[xo * stride] += crow[y * ow + xo];
                }
            }
        }
    }
}

inline i64 conv_out_dim(i64 in, i64 k, i64 stride) { return (in - k) / stride + 1; }

}  // namespace detail

template <typename T>
Tensor<T> conv2d_dgrad_core(const Tensor<T>& gy, const Tensor<T>& w, i64 stride, i64 h, i64 wd);
template <typename T>
Tensor<T> conv2d_wgrad_core(const Tensor<T>& x, const Tensor<T>& gy, i64 stride, i64 kh, i64 kw);

template <typename T>
Tensor<T> conv2d_core(const Tensor<T>& x, const Tensor<T>& w, i64 stride) {
    detail::check_rank(x, 4, "conv2d");
    detail::check_rank(w, 4, "conv2d weight");
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    const i64 n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const i64 cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != cin) {
        throw std::invalid_argument("conv2d: input channels of " + shape_str(x.shape()) +
                                    " do not match weight " + shape_str(w.shape()));
    }
    if (h < kh || wd < kw) {
        throw std::invalid_argument("conv2d: kernel " + shape_str(w.shape()) + " larger than input " +
                                    shape_str(x.shape()));
    }
    const i64 oh = detail::conv_out_dim(h, kh, stride);
    const i64 ow = detail::conv_out_dim(wd, kw, stride);
    const i64 k = cin * kh * kw, ohw = oh * ow;
    TensorData<T> out = TensorData<T>::zeros({n, cout, oh, ow});
    std::vector<T> col(static_cast<size_t>(k * ohw));
    for (i64 i = 0; i < n; ++i) {
        detail::im2col(x.data() + i * cin * h * wd, cin, h, wd, kh, kw, stride, oh, ow, col.data());
        kern::gemm(cout, ohw, k, w.data(), col.data(), out.data.data() + i * cout * ohw, false);
    }
    return Tensor<T>::make_op(std::move(out), {x, w},
                              [stride, h, wd, kh, kw](const Tensor<T>& self, const Tensor<T>& g) {
                                  const auto& parents = self.node()->parents;
                                  return std::vector<Tensor<T>>{
                                      conv2d_dgrad_core(g, parents[1], stride, h, wd),
                                      conv2d_wgrad_core(parents[0], g, stride, kh, kw),
                                  };
                              });
}

// Adjoint of conv2d_core with respect to its input: maps (N,Cout,OH,OW) back
// to (N,Cin,h,wd). Shared by backprop and by transposed convolution.
template <typename T>
Tensor<T> conv2d_dgrad_core(const Tensor<T>& gy, const Tensor<T>& w, i64 stride, i64 h, i64 wd) {
    detail::check_rank(gy, 4, "conv2d_dgrad");
    detail::check_rank(w, 4, "conv2d_dgrad weight");
    const i64 n = gy.dim(0), cout = gy.dim(1), oh = gy.dim(2), ow = gy.dim(3);
    const i64 cin = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(0) != cout) {
        throw std::invalid_argument("conv2d_dgrad: channels of " + shape_str(gy.shape()) +
                                    " do not match weight " + shape_str(w.shape()));
    }
    if (detail::conv_out_dim(h, kh, stride) != oh || detail::conv_out_dim(wd, kw, stride) != ow) {
        throw std::invalid_argument("conv2d_dgrad: target size " + std::to_string(h) + "x" + std::to_string(wd) +
                                    " inconsistent with output " + shape_str(gy.shape()));
    }
    const i64 k = cin * kh * kw, ohw = oh * ow;
    // W^T copy: (k x cout)
    std::vector<T> wt(static_cast<size_t>(k * cout));
    for (i64 oc = 0; oc < cout; ++oc)
        for (i64 j = 0; j < k; ++j) wt[j * cout + oc] = w.data()[oc * k + j];
    TensorData<T> out = TensorData<T>::zeros({n, cin, h, wd});
    std::vector<T> col(static_cast<size_t>(k * ohw));
    for (i64 i = 0; i < n; ++i) {
        kern::gemm(k, ohw, cout, wt.data(), gy.data() + i * cout * ohw, col.data(), false);
        detail::col2im_add(col.data(), cin, h, wd, kh, kw, stride, oh, ow, out.data.data() + i * cin * h * wd);
    }
    return Tensor<T>::make_op(std::move(out), {gy, w}, [stride](const Tensor<T>& self, const Tensor<T>& g) {
        const auto& parents = self.node()->parents;
        const Tensor<T>& w_ = parents[1];
        return std::vector<Tensor<T>>{
            conv2d_core(g, w_, stride),
            conv2d_wgrad_core(g, parents[0], stride, w_.dim(2), w_.dim(3)),
        };
    });
}

// Adjoint of conv2d_core with respect to its weight.
template <typename T>
Tensor<T> conv2d_wgrad_core(const Tensor<T>& x, const Tensor<T>& gy, i64 stride, i64 kh, i64 kw) {
    detail::check_rank(x, 4, "conv2d_wgrad");
    detail::check_rank(gy, 4, "conv2d_wgrad grad");
    const i64 n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const i64 cout = gy.dim(1), oh = gy.dim(2), ow = gy.dim(3);
    if (gy.dim(0) != n || detail::conv_out_dim(h, kh, stride) != oh || detail::conv_out_dim(wd, kw, stride) != ow) {
        throw std::invalid_argument("conv2d_wgrad: " + shape_str(x.shape()) + " and " + shape_str(gy.shape()) +
                                    " are inconsistent");
    }
    const i64 k = cin * kh * kw, ohw = oh * ow;
    TensorData<T> out = TensorData<T>::zeros({cout, cin, kh, kw});
    std::vector<T> col(static_cast<size_t>(k * ohw));
    for (i64 i = 0; i < n; ++i) {
        detail::im2col(x.data() + i * cin * h * wd, cin, h, wd, kh, kw, stride, oh, ow, col.data());
        kern::gemm_nt(cout, k, ohw, gy.data() + i * cout * ohw, col.data(), out.data.data(), true);
    }
    return Tensor<T>::make_op(std::move(out), {x, gy}, [stride, h, wd](const Tensor<T>& self, const Tensor<T>& g) {
        const auto& parents = self.node()->parents;
        return std::vector<Tensor<T>>{
            conv2d_dgrad_core(parents[1], g, stride, h, wd),
            conv2d_core(parents[0], g, stride),
        };
    });
}

template <typename T>
Tensor<T> sum_nhw(const Tensor<T>& a);

template <typename T>
Tensor<T> broadcast_channel(const Tensor<T>& b, Shape shape) {
    if (shape.size() != 4 || b.rank() != 1 || b.dim(0) != shape[1]) {
        throw std::invalid_argument("broadcast_channel: bias " + shape_str(b.shape()) + " vs " + shape_str(shape));
    }
    TensorData<T> out = TensorData<T>::zeros(shape);
    const i64 n = shape[0], c = shape[1], hw = shape[2] * shape[3];
    for (i64 i = 0; i < n; ++i)
        for (i64 j = 0; j < c; ++j) {
            T* dst = out.data.data() + (i * c + j) * hw;
            std::fill(dst, dst + hw, b.data()[j]);
        }
    return Tensor<T>::make_op(std::move(out), {b}, [](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{sum_nhw(g)};
    });
}

template <typename T>
Tensor<T> sum_nhw(const Tensor<T>& a) {
    detail::check_rank(a, 4, "sum_nhw");
    const i64 n = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
    TensorData<T> out = TensorData<T>::zeros({c});
    for (i64 i = 0; i < n; ++i)
        for (i64 j = 0; j < c; ++j) out.data[j] += kern::sum(hw, a.data() + (i * c + j) * hw);
    Shape src = a.shape();
    return Tensor<T>::make_op(std::move(out), {a}, [src](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{broadcast_channel(g, src)};
    });
}

template <typename T>
Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& b) {
    detail::check_rank(x, 4, "bias_add");
    if (b.rank() != 1 || b.dim(0) != x.dim(1)) {
        throw std::invalid_argument("bias_add: bias " + shape_str(b.shape()) + " does not match " +
                                    shape_str(x.shape()));
    }
    TensorData<T> out = x.value();
    const i64 n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    for (i64 i = 0; i < n; ++i)
        for (i64 j = 0; j < c; ++j) {
            kern::vaddc(hw, out.data.data() + (i * c + j) * hw, b.data()[j], out.data.data() + (i * c + j) * hw);
        }
    return Tensor<T>::make_op(std::move(out), {x, b}, [](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{g, sum_nhw(g)};
    });
}

// Public convolution: symmetric padding, standard output-size contract.
// Weight layout (out_ch, in_ch, kh, kw).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, i64 stride, i64 padding,
                 PadMode mode = PadMode::zero) {
    if (padding < 0) throw std::invalid_argument("conv2d: negative padding");
    Tensor<T> in = padding > 0 ? pad2d(x, padding, padding, padding, padding, mode) : x;
    Tensor<T> y = conv2d_core(in, w, stride);
    return b.defined() ? bias_add(y, b) : y;
}

// Asymmetric-padding variant used by layers that saturate tiny spatial dims.
template <typename T>
Tensor<T> conv2d_asym(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, i64 stride, i64 top, i64 bottom,
                      i64 left, i64 right, PadMode mode) {
    Tensor<T> in = (top | bottom | left | right) ? pad2d(x, top, bottom, left, right, mode) : x;
    Tensor<T> y = conv2d_core(in, w, stride);
    return b.defined() ? bias_add(y, b) : y;
}

// Exact adjoint of conv2d under shared weight/stride/padding/mode.
// Weight layout (in_ch_of_this_op, out_ch, kh, kw); output spatial dims are
// (H-1)*stride - 2*padding + k.
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, i64 stride, i64 padding,
                           PadMode mode = PadMode::zero) {
    detail::check_rank(x, 4, "conv2d_transpose");
    detail::check_rank(w, 4, "conv2d_transpose weight");
    if (x.dim(1) != w.dim(0)) {
        throw std::invalid_argument("conv2d_transpose: input " + shape_str(x.shape()) +
                                    " does not match weight " + shape_str(w.shape()));
    }
    const i64 kh = w.dim(2), kw = w.dim(3);
    const i64 hfull = (x.dim(2) - 1) * stride + kh;
    const i64 wfull = (x.dim(3) - 1) * stride + kw;
    Tensor<T> full = conv2d_dgrad_core(x, w, stride, hfull, wfull);
    Tensor<T> y = padding > 0 ? pad2d_adjoint(full, padding, padding, padding, padding, mode) : full;
    return b.defined() ? bias_add(y, b) : y;
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_rank(a, 2, "matmul");
    detail::check_rank(b, 2, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const i64 m = a.dim(0), k = a.dim(1), n = b.dim(1);
    TensorData<T> out = TensorData<T>::zeros({m, n});
    kern::gemm(m, n, k, a.data(), b.data(), out.data.data(), false);
    return Tensor<T>::make_op(std::move(out), {a, b}, [](const Tensor<T>& self, const Tensor<T>& g) {
        const auto& parents = self.node()->parents;
        return std::vector<Tensor<T>>{matmul_nt(g, parents[1]), matmul(transpose2d(parents[0]), g)};
    });
}

// a (M,K) times b^T where b is stored (N,K).
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_rank(a, 2, "matmul_nt");
    detail::check_rank(b, 2, "matmul_nt");
    if (a.dim(1) != b.dim(1)) {
        throw std::invalid_argument("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const i64 m = a.dim(0), k = a.dim(1), n = b.dim(0);
    TensorData<T> out = TensorData<T>::zeros({m, n});
    kern::gemm_nt(m, n, k, a.data(), b.data(), out.data.data(), false);
    return Tensor<T>::make_op(std::move(out), {a, b}, [](const Tensor<T>& self, const Tensor<T>& g) {
        const auto& parents = self.node()->parents;
        return std::vector<Tensor<T>>{matmul(g, parents[1]), matmul(transpose2d(g), parents[0])};
    });
}

template <typename T>
Tensor<T> scatter_rows(const Tensor<T>& a, const std::vector<i64>& idx, i64 rows);

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<i64>& idx) {
    detail::check_rank(a, 2, "gather_rows");
    const i64 r = a.dim(0), d = a.dim(1);
    TensorData<T> out = TensorData<T>::zeros({static_cast<i64>(idx.size()), d});
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= r) throw std::invalid_argument("gather_rows: index out of range");
        std::copy(a.data() + idx[i] * d, a.data() + (idx[i] + 1) * d, out.data.begin() + i * d);
    }
    return Tensor<T>::make_op(std::move(out), {a}, [idx, r](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{scatter_rows(g, idx, r)};
    });
}

// Rows scatter-add into a (rows x D) zero matrix; duplicates accumulate.
template <typename T>
Tensor<T> scatter_rows(const Tensor<T>& a, const std::vector<i64>& idx, i64 rows) {
    detail::check_rank(a, 2, "scatter_rows");
    if (a.dim(0) != static_cast<i64>(idx.size())) throw std::invalid_argument("scatter_rows: index count mismatch");
    const i64 d = a.dim(1);
    TensorData<T> out = TensorData<T>::zeros({rows, d});
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= rows) throw std::invalid_argument("scatter_rows: index out of range");
        kern::vadd(d, out.data.data() + idx[i] * d, a.data() + i * d, out.data.data() + idx[i] * d);
    }
    return Tensor<T>::make_op(std::move(out), {a}, [idx](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{gather_rows(g, idx)};
    });
}

// ---------------------------------------------------------------------------
// patch extraction (sliding window over NCHW)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> fold_sum(const Tensor<T>& patches, i64 c, i64 h, i64 w, i64 p, i64 stride);

// (N,C,H,W) -> (N, P, C*p*p) with P = nh*nw sliding-window positions.
template <typename T>
Tensor<T> unfold(const Tensor<T>& x, i64 p, i64 stride) {
    detail::check_rank(x, 4, "unfold");
    const i64 n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (p <= 0 || stride <= 0 || p > h || p > w) {
        throw std::invalid_argument("unfold: patch " + std::to_string(p) + " does not fit in " +
                                    shape_str(x.shape()));
    }
    const i64 nh = (h - p) / stride + 1, nw = (w - p) / stride + 1;
    const i64 np = nh * nw, d = c * p * p;
    TensorData<T> out = TensorData<T>::zeros({n, np, d});
    for (i64 i = 0; i < n; ++i) {
        for (i64 py = 0; py < nh; ++py)
            for (i64 px = 0; px < nw; ++px) {
                T* dst = out.data.data() + (i * np + py * nw + px) * d;
                for (i64 ch = 0; ch < c; ++ch)
                    for (i64 dy = 0; dy < p; ++dy) {
                        const T* src = x.data() + ((i * c + ch) * h + py * stride + dy) * w + px * stride;
                        std::copy(src, src + p, dst + (ch * p + dy) * p);
                    }
            }
    }
    return Tensor<T>::make_op(std::move(out), {x}, [c, h, w, p, stride](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{fold_sum(g, c, h, w, p, stride)};
    });
}

// Adjoint of unfold: accumulates overlapping patches back into the image.
template <typename T>
Tensor<T> fold_sum(const Tensor<T>& patches, i64 c, i64 h, i64 w, i64 p, i64 stride) {
    detail::check_rank(patches, 3, "fold_sum");
    const i64 n = patches.dim(0), np = patches.dim(1), d = patches.dim(2);
    const i64 nh = (h - p) / stride + 1, nw = (w - p) / stride + 1;
    if (np != nh * nw || d != c * p * p) {
        throw std::invalid_argument("fold_sum: patches " + shape_str(patches.shape()) + " inconsistent with target");
    }
    TensorData<T> out = TensorData<T>::zeros({n, c, h, w});
    for (i64 i = 0; i < n; ++i) {
        for (i64 py = 0; py < nh; ++py)
            for (i64 px = 0; px < nw; ++px) {
                const T* src = patches.data() + (i * np + py * nw + px) * d;
                for (i64 ch = 0; ch < c; ++ch)
                    for (i64 dy = 0; dy < p; ++dy) {
                        T* dst = out.data.data() + ((i * c + ch) * h + py * stride + dy) * w + px * stride;
                        for (i64 dx = 0; dx < p; ++dx) dst[dx] += src[(ch * p + dy) * p + dx];
                    }
            }
    }
    return Tensor<T>::make_op(std::move(out), {patches}, [p, stride](const Tensor<T>&, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{unfold(g, p, stride)};
    });
}

// ---------------------------------------------------------------------------
// composites
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> one_minus(const Tensor<T>& a) {
    return add_scalar(neg(a), T(1));
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
    return mul(a, a);
}

// Row-wise softmax with temperature; the row max is detached, which leaves
// gradients exact because it enters as an additive constant.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a, T temperature) {
    detail::check_rank(a, 2, "softmax_rows");
    if (temperature <= T(0)) throw std::invalid_argument("softmax_rows: temperature must be positive");
    Tensor<T> z = mul_scalar(a, T(1) / temperature);
    Tensor<T> m = rowmax_const(z);
    Tensor<T> e = exp(sub(z, expand_last(m, a.dim(1))));
    Tensor<T> inv = recip(sum_last(e));
    return mul(e, expand_last(inv, a.dim(1)));
}

// Per-item L2 norm over all non-batch axes; eps keeps the zero-vector
// gradient finite.
template <typename T>
Tensor<T> l2_norm_per_item(const Tensor<T>& x, T eps = T(1e-12)) {
    return sqrt(add_scalar(sum_per_item(square(x)), eps));
}

// Per-item norm of the critic input-gradient restricted to the known region,
// || d critic(x)/dx (.) (1-M) ||_2. The result carries graph history through
// the critic parameters (double backward), which is what the gradient
// penalty differentiates.
template <typename T, typename CriticFn>
Tensor<T> second_order_grad_norm(CriticFn&& critic, const Tensor<T>& x_hat, const Tensor<T>& mask) {
    Tensor<T> probe(x_hat.value());
    probe.set_requires_grad(true);
    Tensor<T> scores = critic(probe);
    if (scores.rank() != 1 || scores.dim(0) != x_hat.dim(0)) {
        throw std::invalid_argument("second_order_grad_norm: critic must produce one scalar per batch item, got " +
                                    shape_str(scores.shape()));
    }
    // Batch items are independent through the critic, so the per-item input
    // gradient equals the gradient of the score sum.
    Tensor<T> g = grad(sum_all(scores), {probe}, /*create_graph=*/true)[0];
    detail::check_same_shape(g, mask, "second_order_grad_norm");
    Tensor<T> masked = mul(g, one_minus(mask));
    return l2_norm_per_item(masked);
}

}  // namespace pano::ops
