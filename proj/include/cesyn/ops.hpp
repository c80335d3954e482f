#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cesyn/tape.hpp"
#include "cesyn/tensor.hpp"

namespace cesyn {

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    const T* xd = x.data();
    T* yd = y.data();
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) yd[i] = xd[i] > T(0) ? xd[i] : T(0);
    if (tracked(tape, x)) {
        auto xs = x.store;
        const int xn = x.node;
        y.node = tape->emit(n, [xs, xn, n](Tape<T>& tp, const std::vector<T>& g) {
            auto& gx = tp.grad_buffer(xn);
            const T* xd2 = xs->data();
            for (int64_t i = 0; i < n; ++i)
                if (xd2[i] > T(0)) gx[i] += g[i];
        });
        y.tape_serial = tape->serial();
    }
    return y;
}

namespace detail {

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> binary_op(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b, const char* name,
                    FwdFn fwd, BwdFn bwd) {
    require_shape(a.shape == b.shape, std::string(name) + ": shape mismatch " + shape_str(a.shape) +
                                          " vs " + shape_str(b.shape));
    Tensor<T> y = Tensor<T>::zeros(a.shape);
    const T* ad = a.data();
    const T* bd = b.data();
    T* yd = y.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) yd[i] = fwd(ad[i], bd[i]);
    const bool ta = tracked(tape, a);
    const bool tb = tracked(tape, b);
    if (ta || tb) {
        auto as = a.store;
        auto bs = b.store;
        const int an = ta ? a.node : -1;
        const int bn = tb ? b.node : -1;
        y.node = tape->emit(n, [as, bs, an, bn, n, bwd](Tape<T>& tp, const std::vector<T>& g) {
            const T* ad2 = as->data();
            const T* bd2 = bs->data();
            std::vector<T>* ga = an >= 0 ? &tp.grad_buffer(an) : nullptr;
            std::vector<T>* gb = bn >= 0 ? &tp.grad_buffer(bn) : nullptr;
            for (int64_t i = 0; i < n; ++i) {
                T da, db;
                bwd(ad2[i], bd2[i], g[i], da, db);
                if (ga) (*ga)[i] += da;
                if (gb) (*gb)[i] += db;
            }
        });
        y.tape_serial = tape->serial();
    }
    return y;
}

}  // namespace detail

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        tape, a, b, "add", [](T x, T y) { return x + y; },
        [](T, T, T g, T& da, T& db) {
            da = g;
            db = g;
        });
}

template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        tape, a, b, "sub", [](T x, T y) { return x - y; },
        [](T, T, T g, T& da, T& db) {
            da = g;
            db = -g;
        });
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        tape, a, b, "mul", [](T x, T y) { return x * y; },
        [](T x, T y, T g, T& da, T& db) {
            da = g * y;
            db = g * x;
        });
}

template <typename T>
Tensor<T> div(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        tape, a, b, "div", [](T x, T y) { return x / y; },
        [](T x, T y, T g, T& da, T& db) {
            da = g / y;
            db = -g * x / (y * y);
        });
}

template <typename T>
Tensor<T> scalar_mul(Tape<T>* tape, const Tensor<T>& x, T c) {
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    const T* xd = x.data();
    T* yd = y.data();
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) yd[i] = xd[i] * c;
    if (tracked(tape, x)) {
        const int xn = x.node;
        y.node = tape->emit(n, [xn, n, c](Tape<T>& tp, const std::vector<T>& g) {
            auto& gx = tp.grad_buffer(xn);
            for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * c;
        });
        y.tape_serial = tape->serial();
    }
    return y;
}

template <typename T>
Tensor<T> scalar_add(Tape<T>* tape, const Tensor<T>& x, T c) {
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    const T* xd = x.data();
    T* yd = y.data();
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) yd[i] = xd[i] + c;
    if (tracked(tape, x)) {
        const int xn = x.node;
        y.node = tape->emit(n, [xn, n](Tape<T>& tp, const std::vector<T>& g) {
            auto& gx = tp.grad_buffer(xn);
            for (int64_t i = 0; i < n; ++i) gx[i] += g[i];
        });
        y.tape_serial = tape->serial();
    }
    return y;
}

// ---------------------------------------------------------------------------
// concat / slice along the channel axis (axis 1)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(Tape<T>* tape, const std::vector<Tensor<T>>& xs) {
    require_shape(!xs.empty(), "concat_channels: no inputs");
    const Shape& s0 = xs[0].shape;
    require_shape(s0.size() >= 2, "concat_channels: inputs must have a channel axis");
    int64_t channels = 0;
    for (const auto& x : xs) {
        require_shape(x.shape.size() == s0.size(), "concat_channels: rank mismatch");
        for (size_t d = 0; d < s0.size(); ++d)
            if (d != 1)
                require_shape(x.shape[d] == s0[d],
                              "concat_channels: non-channel dims differ: " + shape_str(x.shape) +
                                  " vs " + shape_str(s0));
        channels += x.shape[1];
    }
    Shape out_shape = s0;
    out_shape[1] = channels;
    Tensor<T> y = Tensor<T>::zeros(out_shape);

    const int64_t batch = s0[0];
    int64_t inner = 1;
    for (size_t d = 2; d < s0.size(); ++d) inner *= s0[d];
    const int64_t out_bstride = channels * inner;

    int64_t coff = 0;
    std::vector<int64_t> offsets;
    for (const auto& x : xs) {
        offsets.push_back(coff);
        const int64_t cx = x.shape[1];
        const T* xd = x.data();
        for (int64_t b = 0; b < batch; ++b)
            std::copy(xd + b * cx * inner, xd + (b + 1) * cx * inner,
                      y.data() + b * out_bstride + coff * inner);
        coff += cx;
    }

    bool any_tracked = false;
    for (const auto& x : xs) any_tracked |= tracked(tape, x);
    if (any_tracked) {
        struct Src {
            int node;
            int64_t coff, c;
        };
        std::vector<Src> srcs;
        for (size_t i = 0; i < xs.size(); ++i)
            if (tracked(tape, xs[i])) srcs.push_back({xs[i].node, offsets[i], xs[i].shape[1]});
        y.node = tape->emit(y.size(), [srcs, batch, inner, out_bstride](Tape<T>& tp,
                                                                       const std::vector<T>& g) {
            for (const Src& s : srcs) {
                auto& gx = tp.grad_buffer(s.node);
                for (int64_t b = 0; b < batch; ++b) {
                    const T* gsrc = g.data() + b * out_bstride + s.coff * inner;
                    T* gdst = gx.data() + b * s.c * inner;
                    for (int64_t i = 0; i < s.c * inner; ++i) gdst[i] += gsrc[i];
                }
            }
        });
        y.tape_serial = tape->serial();
    }
    return y;
}

template <typename T>
Tensor<T> slice_channels(Tape<T>* tape, const Tensor<T>& x, int64_t start, int64_t count) {
    require_shape(x.shape.size() >= 2, "slice_channels: input must have a channel axis");
    const int64_t cx = x.shape[1];
    require_shape(start >= 0 && count > 0 && start + count <= cx,
                  "slice_channels: range [" + std::to_string(start) + "," +
                      std::to_string(start + count) + ") out of " + std::to_string(cx) +
                      " channels");
    Shape out_shape = x.shape;
    out_shape[1] = count;
    Tensor<T> y = Tensor<T>::zeros(out_shape);
    const int64_t batch = x.shape[0];
    int64_t inner = 1;
    for (size_t d = 2; d < x.shape.size(); ++d) inner *= x.shape[d];
    const T* xd = x.data();
    for (int64_t b = 0; b < batch; ++b)
        std::copy(xd + (b * cx + start) * inner, xd + (b * cx + start + count) * inner,
                  y.data() + b * count * inner);
    if (tracked(tape, x)) {
        const int xn = x.node;
        y.node = tape->emit(y.size(), [xn, batch, inner, cx, start, count](
                                          Tape<T>& tp, const std::vector<T>& g) {
            auto& gx = tp.grad_buffer(xn);
            for (int64_t b = 0; b < batch; ++b) {
                T* gdst = gx.data() + (b * cx + start) * inner;
                const T* gsrc = g.data() + b * count * inner;
                for (int64_t i = 0; i < count * inner; ++i) gdst[i] += gsrc[i];
            }
        });
        y.tape_serial = tape->serial();
    }
    return y;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

enum class ReduceKind { Sum, Mean, MeanAbs };

template <typename T>
Tensor<T> reduce(Tape<T>* tape, const Tensor<T>& x, ReduceKind kind, std::vector<int> axes) {
    const size_t rank = x.shape.size();
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
    for (int a : axes)
        require_shape(a >= 0 && a < static_cast<int>(rank),
                      "reduce: axis " + std::to_string(a) + " out of range for rank " +
                          std::to_string(rank));

    // Empty axis set reduces nothing.
    if (axes.empty()) {
        Tensor<T> y = x.detached_copy();
        if (tracked(tape, x)) {
            const int xn = x.node;
            const int64_t n = x.size();
            y.node = tape->emit(n, [xn, n](Tape<T>& tp, const std::vector<T>& g) {
                auto& gx = tp.grad_buffer(xn);
                for (int64_t i = 0; i < n; ++i) gx[i] += g[i];
            });
            y.tape_serial = tape->serial();
        }
        return y;
    }

    std::vector<bool> reduced(rank, false);
    for (int a : axes) reduced[a] = true;
    Shape out_shape;
    for (size_t d = 0; d < rank; ++d)
        if (!reduced[d]) out_shape.push_back(x.shape[d]);
    if (out_shape.empty()) out_shape = {1};

    int64_t reduce_count = 1;
    for (int a : axes) reduce_count *= x.shape[a];
    const T scale = kind == ReduceKind::Sum ? T(1) : T(1) / static_cast<T>(reduce_count);

    // Strides from input coordinates into the output buffer (0 on reduced axes).
    std::vector<int64_t> in_stride(rank, 1), out_map(rank, 0);
    for (size_t d = rank; d-- > 1;) in_stride[d - 1] = in_stride[d] * x.shape[d];
    {
        int64_t stride = 1;
        for (size_t d = rank; d-- > 0;) {
            if (!reduced[d]) {
                out_map[d] = stride;
                stride *= x.shape[d];
            }
        }
    }

    const int64_t n = x.size();
    auto out_index = [rank, &in_stride, &out_map](int64_t i) {
        int64_t o = 0;
        for (size_t d = 0; d < rank; ++d) {
            int64_t coord = (i / in_stride[d]);
            i -= coord * in_stride[d];
            o += coord * out_map[d];
        }
        return o;
    };

    Tensor<T> y = Tensor<T>::zeros(out_shape);
    const T* xd = x.data();
    T* yd = y.data();
    const bool take_abs = kind == ReduceKind::MeanAbs;
    if (y.size() == 1) {
        T acc = T(0);
        for (int64_t i = 0; i < n; ++i) acc += take_abs ? std::abs(xd[i]) : xd[i];
        yd[0] = acc * scale;
    } else {
        for (int64_t i = 0; i < n; ++i) yd[out_index(i)] += take_abs ? std::abs(xd[i]) : xd[i];
        for (int64_t i = 0; i < y.size(); ++i) yd[i] *= scale;
    }

    if (tracked(tape, x)) {
        const int xn = x.node;
        auto xs = x.store;
        const bool scalar_out = y.size() == 1;
        std::vector<int64_t> in_stride_c = in_stride, out_map_c = out_map;
        y.node = tape->emit(y.size(), [xn, xs, n, scale, take_abs, scalar_out, rank, in_stride_c,
                                       out_map_c](Tape<T>& tp, const std::vector<T>& g) {
            auto& gx = tp.grad_buffer(xn);
            const T* xd2 = xs->data();
            for (int64_t i = 0; i < n; ++i) {
                int64_t o = 0;
                if (!scalar_out) {
                    int64_t r = i;
                    for (size_t d = 0; d < rank; ++d) {
                        int64_t coord = r / in_stride_c[d];
                        r -= coord * in_stride_c[d];
                        o += coord * out_map_c[d];
                    }
                }
                T w = g[o] * scale;
                if (take_abs) w = xd2[i] > T(0) ? w : (xd2[i] < T(0) ? -w : T(0));
                gx[i] += w;
            }
        });
        y.tape_serial = tape->serial();
    }
    return y;
}

template <typename T>
Tensor<T> reduce_all(Tape<T>* tape, const Tensor<T>& x, ReduceKind kind) {
    std::vector<int> axes(x.shape.size());
    for (size_t d = 0; d < axes.size(); ++d) axes[d] = static_cast<int>(d);
    return reduce(tape, x, kind, axes);
}

template <typename T>
Tensor<T> mean_all(Tape<T>* tape, const Tensor<T>& x) {
    return reduce_all(tape, x, ReduceKind::Mean);
}

// ---------------------------------------------------------------------------
// trilinear upsampling (integer factors, half-pixel centers)
// ---------------------------------------------------------------------------

namespace detail {

struct LerpTable {
    std::vector<int64_t> i0, i1;
    std::vector<float> w1;  // weight on i1; weight on i0 is 1-w1
};

inline LerpTable make_lerp_table(int64_t n_in, int64_t factor) {
    LerpTable t;
    const int64_t n_out = n_in * factor;
    t.i0.resize(n_out);
    t.i1.resize(n_out);
    t.w1.resize(n_out);
    const double scale = 1.0 / static_cast<double>(factor);
    for (int64_t o = 0; o < n_out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        if (src > static_cast<double>(n_in - 1)) src = static_cast<double>(n_in - 1);
        int64_t lo = static_cast<int64_t>(std::floor(src));
        if (lo > n_in - 2) lo = n_in - 2;
        if (lo < 0) lo = 0;
        t.i0[o] = lo;
        t.i1[o] = n_in == 1 ? 0 : lo + 1;
        t.w1[o] = n_in == 1 ? 0.0f : static_cast<float>(src - static_cast<double>(lo));
    }
    return t;
}

}  // namespace detail

template <typename T>
Tensor<T> upsample_trilinear(Tape<T>* tape, const Tensor<T>& x, int64_t fd, int64_t fh, int64_t fw) {
    require_shape(x.shape.size() == 5, "upsample_trilinear: expected [B,C,D,H,W], got " + shape_str(x.shape));
    require(fd >= 1 && fh >= 1 && fw >= 1, "upsample_trilinear: factors must be >= 1");
    const int64_t B = x.shape[0], C = x.shape[1], D = x.shape[2], H = x.shape[3], W = x.shape[4];
    const int64_t OD = D * fd, OH = H * fh, OW = W * fw;
    Tensor<T> y = Tensor<T>::zeros({B, C, OD, OH, OW});

    const auto td = detail::make_lerp_table(D, fd);
    const auto th = detail::make_lerp_table(H, fh);
    const auto tw = detail::make_lerp_table(W, fw);

    const T* xd = x.data();
    T* yd = y.data();
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const T* xp = xd + bc * D * H * W;
        T* yp = yd + bc * OD * OH * OW;
        for (int64_t od = 0; od < OD; ++od) {
            const T wd1 = static_cast<T>(td.w1[od]);
            const T* xz0 = xp + td.i0[od] * H * W;
            const T* xz1 = xp + td.i1[od] * H * W;
            for (int64_t oh = 0; oh < OH; ++oh) {
                const T wh1 = static_cast<T>(th.w1[oh]);
                const T* r00 = xz0 + th.i0[oh] * W;
                const T* r01 = xz0 + th.i1[oh] * W;
                const T* r10 = xz1 + th.i0[oh] * W;
                const T* r11 = xz1 + th.i1[oh] * W;
                T* yrow = yp + (od * OH + oh) * OW;
                for (int64_t ow = 0; ow < OW; ++ow) {
                    const T ww1 = static_cast<T>(tw.w1[ow]);
                    const int64_t a = tw.i0[ow], b = tw.i1[ow];
                    const T x00 = r00[a] + ww1 * (r00[b] - r00[a]);
                    const T x01 = r01[a] + ww1 * (r01[b] - r01[a]);
                    const T x10 = r10[a] + ww1 * (r10[b] - r10[a]);
                    const T x11 = r11[a] + ww1 * (r11[b] - r11[a]);
                    const T v0 = x00 + wh1 * (x01 - x00);
                    const T v1 = x10 + wh1 * (x11 - x10);
                    yrow[ow] = v0 + wd1 * (v1 - v0);
                }
            }
        }
    }

    if (tracked(tape, x)) {
        const int xn = x.node;
        y.node = tape->emit(y.size(), [xn, B, C, D, H, W, OD, OH, OW, td, th, tw](
                                          Tape<T>& tp, const std::vector<T>& g) {
            auto& gx = tp.grad_buffer(xn);
            for (int64_t bc = 0; bc < B * C; ++bc) {
                T* gxp = gx.data() + bc * D * H * W;
                const T* gp = g.data() + bc * OD * OH * OW;
                for (int64_t od = 0; od < OD; ++od) {
                    const T wd1 = static_cast<T>(td.w1[od]);
                    for (int64_t oh = 0; oh < OH; ++oh) {
                        const T wh1 = static_cast<T>(th.w1[oh]);
                        const T* grow = gp + (od * OH + oh) * OW;
                        for (int64_t ow = 0; ow < OW; ++ow) {
                            const T ww1 = static_cast<T>(tw.w1[ow]);
                            const T gv = grow[ow];
                            const int64_t a = tw.i0[ow], b = tw.i1[ow];
                            T* z0 = gxp + td.i0[od] * H * W;
                            T* z1 = gxp + td.i1[od] * H * W;
                            z0[th.i0[oh] * W + a] += gv * (T(1) - wd1) * (T(1) - wh1) * (T(1) - ww1);
                            z0[th.i0[oh] * W + b] += gv * (T(1) - wd1) * (T(1) - wh1) * ww1;
                            z0[th.i1[oh] * W + a] += gv * (T(1) - wd1) * wh1 * (T(1) - ww1);
                            z0[th.i1[oh] * W + b] += gv * (T(1) - wd1) * wh1 * ww1;
                            z1[th.i0[oh] * W + a] += gv * wd1 * (T(1) - wh1) * (T(1) - ww1);
                            z1[th.i0[oh] * W + b] += gv * wd1 * (T(1) - wh1) * ww1;
                            z1[th.i1[oh] * W + a] += gv * wd1 * wh1 * (T(1) - ww1);
                            z1[th.i1[oh] * W + b] += gv * wd1 * wh1 * ww1;
                        }
                    }
                }
            }
        });
        y.tape_serial = tape->serial();
    }
    return y;
}

}  // namespace cesyn
