#pragma once

#include <cmath>
#include <cstdint>

#include "cesyn/tape.hpp"
#include "cesyn/tensor.hpp"

namespace cesyn {

template <typename T>
struct BNState {
    Tensor<T> running_mean;
    Tensor<T> running_var;
    double momentum = 0.9;
    double eps = 1e-5;
    bool initialized = false;

    static BNState make(int64_t channels, double momentum = 0.9, double eps = 1e-5) {
        BNState s;
        s.running_mean = Tensor<T>::zeros({channels});
        s.running_var = Tensor<T>::full({channels}, T(1));
        s.momentum = momentum;
        s.eps = eps;
        return s;
    }
};

enum class BNMode { Train, Eval };

// Per-channel batch normalization over [B,C,D,H,W]. Train mode normalizes
// with batch statistics and updates the running stats; eval mode uses the
// running stats and requires them to exist.
template <typename T>
Tensor<T> batch_norm3d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                       const Tensor<T>& beta, BNState<T>& state, BNMode mode) {
    require_shape(x.shape.size() == 5, "batch_norm3d: input must be [B,C,D,H,W], got " + shape_str(x.shape));
    const int64_t B = x.shape[0], C = x.shape[1];
    const int64_t spatial = x.shape[2] * x.shape[3] * x.shape[4];
    require_shape(gamma.shape == Shape({C}) && beta.shape == Shape({C}),
                  "batch_norm3d: gamma/beta must have length " + std::to_string(C));
    require_shape(state.running_mean.size() == C,
                  "batch_norm3d: state channel count " + std::to_string(state.running_mean.size()) +
                      " != " + std::to_string(C));
    if (mode == BNMode::Eval && !state.initialized)
        throw NumericError("batch_norm3d: eval mode before any statistics were recorded");

    const int64_t n = B * spatial;  // elements per channel
    const T* xd = x.data();
    const T* gd = gamma.data();
    const T* bd = beta.data();

    std::vector<T> mean(C), invstd(C);
    if (mode == BNMode::Train) {
        for (int64_t c = 0; c < C; ++c) {
            double acc = 0;
            for (int64_t b = 0; b < B; ++b) {
                const T* p = xd + (b * C + c) * spatial;
                for (int64_t i = 0; i < spatial; ++i) acc += static_cast<double>(p[i]);
            }
            const double mu = acc / static_cast<double>(n);
            double var_acc = 0;
            for (int64_t b = 0; b < B; ++b) {
                const T* p = xd + (b * C + c) * spatial;
                for (int64_t i = 0; i < spatial; ++i) {
                    const double d = static_cast<double>(p[i]) - mu;
                    var_acc += d * d;
                }
            }
            const double var = var_acc / static_cast<double>(n);
            mean[c] = static_cast<T>(mu);
            invstd[c] = static_cast<T>(1.0 / std::sqrt(var + state.eps));
            const double m = state.momentum;
            const double unbiased = n > 1 ? var * static_cast<double>(n) / static_cast<double>(n - 1) : var;
            state.running_mean[c] = static_cast<T>(m * static_cast<double>(state.running_mean[c]) + (1 - m) * mu);
            state.running_var[c] = static_cast<T>(m * static_cast<double>(state.running_var[c]) + (1 - m) * unbiased);
        }
        state.initialized = true;
    } else {
        for (int64_t c = 0; c < C; ++c) {
            mean[c] = state.running_mean[c];
            invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(state.running_var[c]) + state.eps));
        }
    }

    Tensor<T> y = Tensor<T>::zeros(x.shape);
    auto xhat = std::make_shared<std::vector<T>>(x.size());
    T* yd = y.data();
    T* xh = xhat->data();
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t c = 0; c < C; ++c) {
            const T* p = xd + (b * C + c) * spatial;
            T* q = yd + (b * C + c) * spatial;
            T* h = xh + (b * C + c) * spatial;
            const T mu = mean[c], is = invstd[c], ga = gd[c], be = bd[c];
            for (int64_t i = 0; i < spatial; ++i) {
                h[i] = (p[i] - mu) * is;
                q[i] = ga * h[i] + be;
            }
        }
    }

    const bool tx = tracked(tape, x);
    const bool tg = tracked(tape, gamma);
    const bool tb = tracked(tape, beta);
    if (tx || tg || tb) {
        auto gs = gamma.store;
        const int xn = tx ? x.node : -1;
        const int gn = tg ? gamma.node : -1;
        const int bn = tb ? beta.node : -1;
        const bool train = mode == BNMode::Train;
        y.node = tape->emit(y.size(), [xhat, gs, invstd, xn, gn, bn, B, C, spatial, n, train](
                                          Tape<T>& tp, const std::vector<T>& g) {
            const T* xh2 = xhat->data();
            const T* ga = gs->data();
            // per-channel sums of g and g*xhat
            std::vector<T> sum_g(C, T(0)), sum_gx(C, T(0));
            for (int64_t b = 0; b < B; ++b) {
                for (int64_t c = 0; c < C; ++c) {
                    const T* gp = g.data() + (b * C + c) * spatial;
                    const T* hp = xh2 + (b * C + c) * spatial;
                    T s = T(0), sx = T(0);
                    for (int64_t i = 0; i < spatial; ++i) {
                        s += gp[i];
                        sx += gp[i] * hp[i];
                    }
                    sum_g[c] += s;
                    sum_gx[c] += sx;
                }
            }
            if (gn >= 0) {
                auto& gg = tp.grad_buffer(gn);
                for (int64_t c = 0; c < C; ++c) gg[c] += sum_gx[c];
            }
            if (bn >= 0) {
                auto& gb = tp.grad_buffer(bn);
                for (int64_t c = 0; c < C; ++c) gb[c] += sum_g[c];
            }
            if (xn >= 0) {
                auto& gx = tp.grad_buffer(xn);
                T* gxd = gx.data();
                for (int64_t b = 0; b < B; ++b) {
                    for (int64_t c = 0; c < C; ++c) {
                        const T* gp = g.data() + (b * C + c) * spatial;
                        const T* hp = xh2 + (b * C + c) * spatial;
                        T* q = gxd + (b * C + c) * spatial;
                        const T k = ga[c] * invstd[c];
                        if (train) {
                            const T mg = sum_g[c] / static_cast<T>(n);
                            const T mgx = sum_gx[c] / static_cast<T>(n);
                            for (int64_t i = 0; i < spatial; ++i)
                                q[i] += k * (gp[i] - mg - hp[i] * mgx);
                        } else {
                            for (int64_t i = 0; i < spatial; ++i) q[i] += k * gp[i];
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
