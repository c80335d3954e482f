#pragma once

#include <cstdint>
#include <string>

#include "cesyn/parallel.hpp"
#include "cesyn/tape.hpp"
#include "cesyn/tensor.hpp"

namespace cesyn {

struct ConvSpec {
    int64_t kd = 3, kh = 3, kw = 3;
    int64_t sd = 1, sh = 1, sw = 1;
    int64_t pd = 0, ph = 0, pw = 0;
    int64_t in_channels = 0, out_channels = 0;

    // "same" padding: preserves spatial size at stride 1; requires odd kernels.
    static ConvSpec same(int64_t kd, int64_t kh, int64_t kw, int64_t ic, int64_t oc,
                         int64_t sd = 1, int64_t sh = 1, int64_t sw = 1) {
        require(kd % 2 == 1 && kh % 2 == 1 && kw % 2 == 1,
                "ConvSpec::same requires odd kernel sizes");
        ConvSpec s;
        s.kd = kd;
        s.kh = kh;
        s.kw = kw;
        s.sd = sd;
        s.sh = sh;
        s.sw = sw;
        s.pd = (kd - 1) / 2;
        s.ph = (kh - 1) / 2;
        s.pw = (kw - 1) / 2;
        s.in_channels = ic;
        s.out_channels = oc;
        return s;
    }

    void validate() const {
        require(sd >= 1 && sh >= 1 && sw >= 1, "ConvSpec: stride must be >= 1 on every axis");
        require(kd >= 1 && kh >= 1 && kw >= 1, "ConvSpec: kernel must be >= 1 on every axis");
        require(pd >= 0 && ph >= 0 && pw >= 0, "ConvSpec: padding must be >= 0");
        require(in_channels >= 1 && out_channels >= 1, "ConvSpec: channel counts must be >= 1");
    }
};

namespace detail {

inline int64_t div_ceil(int64_t a, int64_t b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

inline int64_t conv_out_dim(int64_t n, int64_t p, int64_t k, int64_t s) {
    return (n + 2 * p - k) / s + 1;
}

// Output range [lo,hi) touching valid (unpadded) input for kernel offset k.
inline void valid_range(int64_t n_in, int64_t n_out, int64_t pad, int64_t stride, int64_t k,
                        int64_t& lo, int64_t& hi) {
    lo = std::max<int64_t>(0, div_ceil(pad - k, stride));
    hi = std::min<int64_t>(n_out, div_ceil(n_in + pad - k, stride));
    if (hi < lo) hi = lo;
}

}  // namespace detail

// Direct zero-padded 3D convolution (cross-correlation) over [B,C,D,H,W].
// weights are [OC,IC,KD,KH,KW], bias is [OC]. Parallel partitioning keeps
// every output cell owned by one task, so results are identical for any
// thread count.
template <typename T>
Tensor<T> conv3d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 const ConvSpec& spec) {
    spec.validate();
    require_shape(x.shape.size() == 5, "conv3d: input must be [B,C,D,H,W], got " + shape_str(x.shape));
    require_shape(w.shape == Shape({spec.out_channels, spec.in_channels, spec.kd, spec.kh, spec.kw}),
                  "conv3d: weight shape " + shape_str(w.shape) + " does not match spec " +
                      shape_str({spec.out_channels, spec.in_channels, spec.kd, spec.kh, spec.kw}));
    require_shape(b.shape == Shape({spec.out_channels}),
                  "conv3d: bias shape " + shape_str(b.shape) + " expected [" +
                      std::to_string(spec.out_channels) + "]");
    require_shape(x.shape[1] == spec.in_channels,
                  "conv3d: input has " + std::to_string(x.shape[1]) + " channels, spec expects " +
                      std::to_string(spec.in_channels));

    const int64_t B = x.shape[0], IC = x.shape[1], D = x.shape[2], H = x.shape[3], W = x.shape[4];
    const int64_t OC = spec.out_channels;
    const int64_t OD = detail::conv_out_dim(D, spec.pd, spec.kd, spec.sd);
    const int64_t OH = detail::conv_out_dim(H, spec.ph, spec.kh, spec.sh);
    const int64_t OW = detail::conv_out_dim(W, spec.pw, spec.kw, spec.sw);
    require_shape(OD > 0 && OH > 0 && OW > 0,
                  "conv3d: zero-size output for input " + shape_str(x.shape) + " with kernel (" +
                      std::to_string(spec.kd) + "," + std::to_string(spec.kh) + "," +
                      std::to_string(spec.kw) + ")");

    Tensor<T> y = Tensor<T>::zeros({B, OC, OD, OH, OW});
    const T* xd = x.data();
    const T* wd = w.data();
    const T* bd = b.data();
    T* yd = y.data();
    const ConvSpec sp = spec;

    parallel_for(B * OC, [&](int64_t boc) {
        const int64_t bi = boc / OC, oc = boc % OC;
        T* __restrict yplane = yd + (bi * OC + oc) * OD * OH * OW;
        std::fill(yplane, yplane + OD * OH * OW, bd[oc]);
        for (int64_t ic = 0; ic < IC; ++ic) {
            const T* xchan = xd + (bi * IC + ic) * D * H * W;
            const T* wchan = wd + (oc * IC + ic) * sp.kd * sp.kh * sp.kw;
            for (int64_t kd = 0; kd < sp.kd; ++kd) {
                int64_t dlo, dhi;
                detail::valid_range(D, OD, sp.pd, sp.sd, kd, dlo, dhi);
                for (int64_t kh = 0; kh < sp.kh; ++kh) {
                    int64_t hlo, hhi;
                    detail::valid_range(H, OH, sp.ph, sp.sh, kh, hlo, hhi);
                    for (int64_t kw = 0; kw < sp.kw; ++kw) {
                        int64_t wlo, whi;
                        detail::valid_range(W, OW, sp.pw, sp.sw, kw, wlo, whi);
                        const T wv = wchan[(kd * sp.kh + kh) * sp.kw + kw];
                        if (wv == T(0)) continue;
                        for (int64_t od = dlo; od < dhi; ++od) {
                            const int64_t id = od * sp.sd - sp.pd + kd;
                            for (int64_t oh = hlo; oh < hhi; ++oh) {
                                const int64_t ih = oh * sp.sh - sp.ph + kh;
                                const T* __restrict xrow = xchan + (id * H + ih) * W;
                                T* __restrict yrow = yplane + (od * OH + oh) * OW;
                                if (sp.sw == 1) {
                                    const int64_t off = kw - sp.pw;
                                    for (int64_t ow = wlo; ow < whi; ++ow)
                                        yrow[ow] += wv * xrow[ow + off];
                                } else {
                                    for (int64_t ow = wlo; ow < whi; ++ow)
                                        yrow[ow] += wv * xrow[ow * sp.sw - sp.pw + kw];
                                }
                            }
                        }
                    }
                }
            }
        }
    });

    const bool tx = tracked(tape, x);
    const bool tw_ = tracked(tape, w);
    const bool tb = tracked(tape, b);
    if (tx || tw_ || tb) {
        auto xs = x.store;
        auto ws = w.store;
        const int xn = tx ? x.node : -1;
        const int wn = tw_ ? w.node : -1;
        const int bn = tb ? b.node : -1;
        y.node = tape->emit(
            y.size(), [xs, ws, xn, wn, bn, B, IC, OC, D, H, W, OD, OH, OW, sp](
                          Tape<T>& tp, const std::vector<T>& g) {
                const T* gd = g.data();
                const T* xd2 = xs->data();
                const T* wd2 = ws->data();
                if (xn >= 0) {
                    auto& gx = tp.grad_buffer(xn);
                    T* gxd = gx.data();
                    parallel_for(B * IC, [&](int64_t bic) {
                        const int64_t bi = bic / IC, ic = bic % IC;
                        T* __restrict gxchan = gxd + (bi * IC + ic) * D * H * W;
                        for (int64_t oc = 0; oc < OC; ++oc) {
                            const T* gplane = gd + (bi * OC + oc) * OD * OH * OW;
                            const T* wchan = wd2 + (oc * IC + ic) * sp.kd * sp.kh * sp.kw;
                            for (int64_t kd = 0; kd < sp.kd; ++kd) {
                                int64_t dlo, dhi;
                                detail::valid_range(D, OD, sp.pd, sp.sd, kd, dlo, dhi);
                                for (int64_t kh = 0; kh < sp.kh; ++kh) {
                                    int64_t hlo, hhi;
                                    detail::valid_range(H, OH, sp.ph, sp.sh, kh, hlo, hhi);
                                    for (int64_t kw = 0; kw < sp.kw; ++kw) {
                                        int64_t wlo, whi;
                                        detail::valid_range(W, OW, sp.pw, sp.sw, kw, wlo, whi);
                                        const T wv = wchan[(kd * sp.kh + kh) * sp.kw + kw];
                                        if (wv == T(0)) continue;
                                        for (int64_t od = dlo; od < dhi; ++od) {
                                            const int64_t id = od * sp.sd - sp.pd + kd;
                                            for (int64_t oh = hlo; oh < hhi; ++oh) {
                                                const int64_t ih = oh * sp.sh - sp.ph + kh;
                                                T* __restrict gxrow = gxchan + (id * H + ih) * W;
                                                const T* __restrict grow =
                                                    gplane + (od * OH + oh) * OW;
                                                if (sp.sw == 1) {
                                                    const int64_t off = kw - sp.pw;
                                                    for (int64_t ow = wlo; ow < whi; ++ow)
                                                        gxrow[ow + off] += wv * grow[ow];
                                                } else {
                                                    for (int64_t ow = wlo; ow < whi; ++ow)
                                                        gxrow[ow * sp.sw - sp.pw + kw] +=
                                                            wv * grow[ow];
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    });
                }
                if (wn >= 0) {
                    auto& gw = tp.grad_buffer(wn);
                    T* gwd = gw.data();
                    parallel_for(OC, [&](int64_t oc) {
                        for (int64_t ic = 0; ic < IC; ++ic) {
                            T* gwchan = gwd + (oc * IC + ic) * sp.kd * sp.kh * sp.kw;
                            for (int64_t kd = 0; kd < sp.kd; ++kd) {
                                int64_t dlo, dhi;
                                detail::valid_range(D, OD, sp.pd, sp.sd, kd, dlo, dhi);
                                for (int64_t kh = 0; kh < sp.kh; ++kh) {
                                    int64_t hlo, hhi;
                                    detail::valid_range(H, OH, sp.ph, sp.sh, kh, hlo, hhi);
                                    for (int64_t kw = 0; kw < sp.kw; ++kw) {
                                        int64_t wlo, whi;
                                        detail::valid_range(W, OW, sp.pw, sp.sw, kw, wlo, whi);
                                        T acc = T(0);
                                        for (int64_t bi = 0; bi < B; ++bi) {
                                            const T* gplane = gd + (bi * OC + oc) * OD * OH * OW;
                                            const T* xchan = xd2 + (bi * IC + ic) * D * H * W;
                                            for (int64_t od = dlo; od < dhi; ++od) {
                                                const int64_t id = od * sp.sd - sp.pd + kd;
                                                for (int64_t oh = hlo; oh < hhi; ++oh) {
                                                    const int64_t ih = oh * sp.sh - sp.ph + kh;
                                                    const T* __restrict xrow =
                                                        xchan + (id * H + ih) * W;
                                                    const T* __restrict grow =
                                                        gplane + (od * OH + oh) * OW;
                                                    if (sp.sw == 1) {
                                                        const int64_t off = kw - sp.pw;
                                                        for (int64_t ow = wlo; ow < whi; ++ow)
                                                            acc += grow[ow] * xrow[ow + off];
                                                    } else {
                                                        for (int64_t ow = wlo; ow < whi; ++ow)
                                                            acc += grow[ow] *
                                                                   xrow[ow * sp.sw - sp.pw + kw];
                                                    }
                                                }
                                            }
                                        }
                                        gwchan[(kd * sp.kh + kh) * sp.kw + kw] += acc;
                                    }
                                }
                            }
                        }
                    });
                }
                if (bn >= 0) {
                    auto& gb = tp.grad_buffer(bn);
                    for (int64_t oc = 0; oc < OC; ++oc) {
                        T acc = T(0);
                        for (int64_t bi = 0; bi < B; ++bi) {
                            const T* gplane = gd + (bi * OC + oc) * OD * OH * OW;
                            for (int64_t i = 0; i < OD * OH * OW; ++i) acc += gplane[i];
                        }
                        gb[oc] += acc;
                    }
                }
            });
        y.tape_serial = tape->serial();
    }
    return y;
}

}  // namespace cesyn
