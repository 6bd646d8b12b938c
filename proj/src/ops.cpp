#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "attrib/error.hpp"
#include "attrib/parallel.hpp"
#include "attrib/tensor.hpp"

namespace attrib::tg {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

void expect_rank(const Shape& s, std::size_t rank, const char* op, const char* arg) {
    if (s.size() != rank)
        throw DimensionError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) + ", got " +
                             shape_str(s));
}

// Lowers one [C,H,W] image into a (C*9) x (H*W) patch matrix (pad 1).
template <typename T>
void im2col3x3(const T* in, std::size_t C, std::size_t H, std::size_t W, T* col) {
    const std::size_t HW = H * W;
    for (std::size_t c = 0; c < C; ++c) {
        const T* plane = in + c * HW;
        for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
                T* row = col + ((c * 3 + ky) * 3 + kx) * HW;
                for (std::size_t y = 0; y < H; ++y) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
                    T* dst = row + y * W;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) {
                        std::fill(dst, dst + W, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(iy) * W;
                    // ix = x + kx - 1
                    if (kx == 0) {
                        dst[0] = T(0);
                        std::copy(src, src + W - 1, dst + 1);
                    } else if (kx == 1) {
                        std::copy(src, src + W, dst);
                    } else {
                        std::copy(src + 1, src + W, dst);
                        dst[W - 1] = T(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col3x3: scatters patch-matrix gradients back onto the image.
template <typename T>
void col2im3x3(const T* col, std::size_t C, std::size_t H, std::size_t W, T* out) {
    const std::size_t HW = H * W;
    for (std::size_t c = 0; c < C; ++c) {
        T* plane = out + c * HW;
        for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
                const T* row = col + ((c * 3 + ky) * 3 + kx) * HW;
                for (std::size_t y = 0; y < H; ++y) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                    const T* src = row + y * W;
                    T* dst = plane + static_cast<std::size_t>(iy) * W;
                    if (kx == 0) {
                        for (std::size_t x = 1; x < W; ++x) dst[x - 1] += src[x];
                    } else if (kx == 1) {
                        for (std::size_t x = 0; x < W; ++x) dst[x] += src[x];
                    } else {
                        for (std::size_t x = 0; x + 1 < W; ++x) dst[x + 1] += src[x];
                    }
                }
            }
        }
    }
}

template <typename T>
std::vector<T>& scratch(std::size_t n) {
    thread_local std::vector<T> buf;
    if (buf.size() < n) buf.resize(n);
    return buf;
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>* bias) {
    const Shape& xs = input.shape();
    const Shape& ws = weight.shape();
    expect_rank(xs, 4, "conv2d", "input");
    expect_rank(ws, 4, "conv2d", "weight");
    if (ws[2] != 3 || ws[3] != 3) throw DimensionError("conv2d: weight must be Kx Cx3x3, got " + shape_str(ws));
    if (ws[1] != xs[1])
        throw DimensionError("conv2d: weight expects " + std::to_string(ws[1]) + " input channels, input has " +
                             std::to_string(xs[1]));
    const std::size_t N = xs[0], C = xs[1], H = xs[2], W = xs[3], K = ws[0];
    if (bias && (bias->shape() != Shape{K}))
        throw DimensionError("conv2d: bias must have shape [" + std::to_string(K) + "], got " +
                             shape_str(bias->shape()));
    const std::size_t HW = H * W, C9 = C * 9;

    Tensor<T> out(Shape{N, K, H, W});
    const T* x = input.value().raw();
    const T* w = weight.value().raw();
    T* y = out.raw();
    parallel_for(N, [&](std::size_t n) {
        auto& col = scratch<T>(C9 * HW);
        im2col3x3(x + n * C * HW, C, H, W, col.data());
        MapR<T> yn(y + n * K * HW, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(HW));
        yn.noalias() = CMapR<T>(w, K, C9) * CMapR<T>(col.data(), C9, HW);
        if (bias) {
            const T* b = bias->value().raw();
            for (std::size_t k = 0; k < K; ++k) yn.row(static_cast<Eigen::Index>(k)).array() += b[k];
        }
    });

    std::vector<Var<T>> parents{input, weight};
    if (bias) parents.push_back(*bias);
    return make_op<T>(std::move(out), std::move(parents), [=](Node<T>& self) {
        Node<T>& xin = *self.parents[0];
        Node<T>& wn = *self.parents[1];
        const T* dy = self.grad.raw();

        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            T* db = grad_buffer(*self.parents[2]).raw();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t k = 0; k < K; ++k) {
                    const T* p = dy + (n * K + k) * HW;
                    T acc = T(0);
                    for (std::size_t i = 0; i < HW; ++i) acc += p[i];
                    db[k] += acc;
                }
        }

        const bool need_w = wn.requires_grad;
        const bool need_x = xin.requires_grad;
        if (!need_w && !need_x) return;
        // Per-sample weight gradients are summed in sample order afterwards so
        // the result does not depend on the worker count.
        std::vector<T> dw_parts(need_w ? N * K * C9 : 0);
        T* dx = need_x ? grad_buffer(xin).raw() : nullptr;
        const T* xv = xin.value.raw();
        const T* wv = wn.value.raw();
        parallel_for(N, [&](std::size_t n) {
            auto& col = scratch<T>(C9 * HW);
            CMapR<T> dyn(dy + n * K * HW, K, HW);
            if (need_w) {
                im2col3x3(xv + n * C * HW, C, H, W, col.data());
                MapR<T>(dw_parts.data() + n * K * C9, K, C9).noalias() =
                    dyn * CMapR<T>(col.data(), C9, HW).transpose();
            }
            if (need_x) {
                MapR<T>(col.data(), C9, HW).noalias() = CMapR<T>(wv, K, C9).transpose() * dyn;
                col2im3x3(col.data(), C, H, W, dx + n * C * HW);
            }
        });
        if (need_w) {
            T* dw = grad_buffer(wn).raw();
            for (std::size_t n = 0; n < N; ++n) {
                const T* part = dw_parts.data() + n * K * C9;
                for (std::size_t i = 0; i < K * C9; ++i) dw[i] += part[i];
            }
        }
    });
}

template <typename T>
Var<T> batchnorm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state,
                 bool train) {
    const Shape& xs = input.shape();
    if (xs.size() < 2) throw DimensionError("batchnorm: input must have rank >= 2, got " + shape_str(xs));
    const std::size_t N = xs[0], C = xs[1];
    const std::size_t S = shape_numel(xs) / (N * C);
    if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
        throw DimensionError("batchnorm: affine parameters must have shape [" + std::to_string(C) + "]");
    if (state.running_mean.shape() != Shape{C} || state.running_var.shape() != Shape{C})
        throw DimensionError("batchnorm: running statistics must have shape [" + std::to_string(C) + "]");
    const std::size_t M = N * S;

    const T* x = input.value().raw();
    std::vector<T> mean(C), inv_std(C);
    if (train) {
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const T* p = x + (n * C + c) * S;
                for (std::size_t i = 0; i < S; ++i) s += p[i];
            }
            const double mu = s / static_cast<double>(M);
            double v = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const T* p = x + (n * C + c) * S;
                for (std::size_t i = 0; i < S; ++i) {
                    const double d = p[i] - mu;
                    v += d * d;
                }
            }
            const double var = v / static_cast<double>(M);
            mean[c] = static_cast<T>(mu);
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(state.eps)));
            const double unbiased = M > 1 ? var * static_cast<double>(M) / static_cast<double>(M - 1) : var;
            state.running_mean[c] = (T(1) - state.momentum) * state.running_mean[c] + state.momentum * mean[c];
            state.running_var[c] =
                (T(1) - state.momentum) * state.running_var[c] + state.momentum * static_cast<T>(unbiased);
        }
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            mean[c] = state.running_mean[c];
            inv_std[c] = T(1) / std::sqrt(state.running_var[c] + state.eps);
        }
    }

    Tensor<T> out(xs);
    const T* g = gamma.value().raw();
    const T* b = beta.value().raw();
    T* y = out.raw();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const T* p = x + (n * C + c) * S;
            T* q = y + (n * C + c) * S;
            const T a = g[c] * inv_std[c];
            const T shift = b[c] - a * mean[c];
            for (std::size_t i = 0; i < S; ++i) q[i] = a * p[i] + shift;
        }

    return make_op<T>(std::move(out), {input, gamma, beta},
                      [N, C, S, M, train, mean = std::move(mean), inv_std = std::move(inv_std)](Node<T>& self) {
                          Node<T>& xin = *self.parents[0];
                          Node<T>& gn = *self.parents[1];
                          Node<T>& bn = *self.parents[2];
                          const T* xv = xin.value.raw();
                          const T* dy = self.grad.raw();
                          const T* gv = gn.value.raw();
                          std::vector<T> sum_dy(C, T(0)), sum_dy_xhat(C, T(0));
                          for (std::size_t n = 0; n < N; ++n)
                              for (std::size_t c = 0; c < C; ++c) {
                                  const T* p = xv + (n * C + c) * S;
                                  const T* d = dy + (n * C + c) * S;
                                  T s1 = T(0), s2 = T(0);
                                  for (std::size_t i = 0; i < S; ++i) {
                                      s1 += d[i];
                                      s2 += d[i] * (p[i] - mean[c]) * inv_std[c];
                                  }
                                  sum_dy[c] += s1;
                                  sum_dy_xhat[c] += s2;
                              }
                          if (gn.requires_grad) {
                              T* dg = grad_buffer(gn).raw();
                              for (std::size_t c = 0; c < C; ++c) dg[c] += sum_dy_xhat[c];
                          }
                          if (bn.requires_grad) {
                              T* db = grad_buffer(bn).raw();
                              for (std::size_t c = 0; c < C; ++c) db[c] += sum_dy[c];
                          }
                          if (!xin.requires_grad) return;
                          T* dx = grad_buffer(xin).raw();
                          const T inv_m = T(1) / static_cast<T>(M);
                          for (std::size_t n = 0; n < N; ++n)
                              for (std::size_t c = 0; c < C; ++c) {
                                  const T* p = xv + (n * C + c) * S;
                                  const T* d = dy + (n * C + c) * S;
                                  T* q = dx + (n * C + c) * S;
                                  const T a = gv[c] * inv_std[c];
                                  if (train) {
                                      for (std::size_t i = 0; i < S; ++i) {
                                          const T xhat = (p[i] - mean[c]) * inv_std[c];
                                          q[i] += a * (d[i] - inv_m * sum_dy[c] - xhat * inv_m * sum_dy_xhat[c]);
                                      }
                                  } else {
                                      for (std::size_t i = 0; i < S; ++i) q[i] += a * d[i];
                                  }
                              }
                      });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out(x.shape());
    const T* xv = x.value().raw();
    T* y = out.raw();
    for (std::size_t i = 0; i < out.numel(); ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
    return make_op<T>(std::move(out), {x}, [](Node<T>& self) {
        Node<T>& in = *self.parents[0];
        const T* v = in.value.raw();
        const T* dy = self.grad.raw();
        T* dx = grad_buffer(in).raw();
        for (std::size_t i = 0; i < in.value.numel(); ++i)
            if (v[i] > T(0)) dx[i] += dy[i];
    });
}

template <typename T>
Var<T> avgpool2x2(const Var<T>& x) {
    const Shape& xs = x.shape();
    expect_rank(xs, 4, "avgpool2x2", "input");
    const std::size_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    if (H % 2 != 0 || W % 2 != 0)
        throw DimensionError("avgpool2x2: spatial size " + shape_str(xs) + " is not divisible by 2");
    const std::size_t Ho = H / 2, Wo = W / 2;
    Tensor<T> out(Shape{N, C, Ho, Wo});
    const T* xv = x.value().raw();
    T* y = out.raw();
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const T* p = xv + nc * H * W;
        T* q = y + nc * Ho * Wo;
        for (std::size_t i = 0; i < Ho; ++i)
            for (std::size_t j = 0; j < Wo; ++j) {
                const T* a = p + 2 * i * W + 2 * j;
                q[i * Wo + j] = T(0.25) * (a[0] + a[1] + a[W] + a[W + 1]);
            }
    }
    return make_op<T>(std::move(out), {x}, [N, C, H, W, Ho, Wo](Node<T>& self) {
        T* dx = grad_buffer(*self.parents[0]).raw();
        const T* dy = self.grad.raw();
        for (std::size_t nc = 0; nc < N * C; ++nc) {
            T* p = dx + nc * H * W;
            const T* q = dy + nc * Ho * Wo;
            for (std::size_t i = 0; i < Ho; ++i)
                for (std::size_t j = 0; j < Wo; ++j) {
                    const T g = T(0.25) * q[i * Wo + j];
                    T* a = p + 2 * i * W + 2 * j;
                    a[0] += g;
                    a[1] += g;
                    a[W] += g;
                    a[W + 1] += g;
                }
        }
    });
}

template <typename T>
Var<T> global_avgpool(const Var<T>& x) {
    const Shape& xs = x.shape();
    expect_rank(xs, 4, "global_avgpool", "input");
    const std::size_t N = xs[0], C = xs[1], S = xs[2] * xs[3];
    if (S == 0) throw DimensionError("global_avgpool: empty spatial extent");
    Tensor<T> out(Shape{N, C});
    const T* xv = x.value().raw();
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        T acc = T(0);
        for (std::size_t i = 0; i < S; ++i) acc += xv[nc * S + i];
        out[nc] = acc / static_cast<T>(S);
    }
    return make_op<T>(std::move(out), {x}, [N, C, S](Node<T>& self) {
        T* dx = grad_buffer(*self.parents[0]).raw();
        const T* dy = self.grad.raw();
        const T inv = T(1) / static_cast<T>(S);
        for (std::size_t nc = 0; nc < N * C; ++nc)
            for (std::size_t i = 0; i < S; ++i) dx[nc * S + i] += dy[nc] * inv;
    });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw DimensionError("concat_channels: no inputs");
    const Shape& first = xs.front().shape();
    if (first.size() < 2) throw DimensionError("concat_channels: inputs must have rank >= 2");
    const std::size_t N = first[0];
    std::vector<std::size_t> inner(xs.size());
    std::size_t total = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const Shape& s = xs[k].shape();
        if (s.size() != first.size() || s[0] != N || !std::equal(s.begin() + 2, s.end(), first.begin() + 2))
            throw DimensionError("concat_channels: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
        inner[k] = shape_numel(s) / N;
        total += s[1];
    }
    Shape out_shape = first;
    out_shape[1] = total;
    Tensor<T> out(out_shape);
    const std::size_t row = shape_numel(out_shape) / N;
    for (std::size_t n = 0; n < N; ++n) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const T* src = xs[k].value().raw() + n * inner[k];
            std::copy(src, src + inner[k], out.raw() + n * row + off);
            off += inner[k];
        }
    }
    return make_op<T>(std::move(out), xs, [N, row, inner](Node<T>& self) {
        const T* dy = self.grad.raw();
        std::size_t off = 0;
        for (std::size_t k = 0; k < inner.size(); ++k) {
            Node<T>& p = *self.parents[k];
            if (p.requires_grad) {
                T* dx = grad_buffer(p).raw();
                for (std::size_t n = 0; n < N; ++n) {
                    const T* src = dy + n * row + off;
                    T* dst = dx + n * inner[k];
                    for (std::size_t i = 0; i < inner[k]; ++i) dst[i] += src[i];
                }
            }
            off += inner[k];
        }
    });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>* bias) {
    expect_rank(x.shape(), 2, "linear", "input");
    expect_rank(weight.shape(), 2, "linear", "weight");
    const std::size_t N = x.shape()[0], In = x.shape()[1], Out = weight.shape()[0];
    if (weight.shape()[1] != In)
        throw DimensionError("linear: weight " + shape_str(weight.shape()) + " incompatible with input " +
                             shape_str(x.shape()));
    if (bias && bias->shape() != Shape{Out})
        throw DimensionError("linear: bias must have shape [" + std::to_string(Out) + "]");
    Tensor<T> out(Shape{N, Out});
    MapR<T> y(out.raw(), N, Out);
    y.noalias() = CMapR<T>(x.value().raw(), N, In) * CMapR<T>(weight.value().raw(), Out, In).transpose();
    if (bias) {
        const T* b = bias->value().raw();
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < Out; ++o) out[n * Out + o] += b[o];
    }
    std::vector<Var<T>> parents{x, weight};
    if (bias) parents.push_back(*bias);
    return make_op<T>(std::move(out), std::move(parents), [N, In, Out](Node<T>& self) {
        Node<T>& xn = *self.parents[0];
        Node<T>& wn = *self.parents[1];
        CMapR<T> dy(self.grad.raw(), N, Out);
        if (xn.requires_grad)
            MapR<T>(grad_buffer(xn).raw(), N, In).noalias() += dy * CMapR<T>(wn.value.raw(), Out, In);
        if (wn.requires_grad)
            MapR<T>(grad_buffer(wn).raw(), Out, In).noalias() += dy.transpose() * CMapR<T>(xn.value.raw(), N, In);
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            T* db = grad_buffer(*self.parents[2]).raw();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t o = 0; o < Out; ++o) db[o] += dy(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(o));
        }
    });
}

template <typename T>
Var<T> l2_distance_matrix(const Var<T>& f) {
    expect_rank(f.shape(), 2, "l2_distance_matrix", "input");
    const std::size_t B = f.shape()[0], D = f.shape()[1];
    Tensor<T> out(Shape{B, B});
    const T* fv = f.value().raw();
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = i + 1; j < B; ++j) {
            T s = T(0);
            for (std::size_t k = 0; k < D; ++k) {
                const T d = fv[i * D + k] - fv[j * D + k];
                s += d * d;
            }
            out[i * B + j] = out[j * B + i] = std::sqrt(s);
        }
    return make_op<T>(std::move(out), {f}, [B, D](Node<T>& self) {
        Node<T>& fn = *self.parents[0];
        const T* fv = fn.value.raw();
        const T* dist = self.value.raw();
        const T* g = self.grad.raw();
        T* df = grad_buffer(fn).raw();
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t j = 0; j < B; ++j) {
                if (i == j) continue;
                const T gij = g[i * B + j];
                if (gij == T(0)) continue;
                const T d = dist[i * B + j];
                const T c = gij / std::sqrt(d * d + T(1e-12));
                for (std::size_t k = 0; k < D; ++k) {
                    const T diff = c * (fv[i * D + k] - fv[j * D + k]);
                    df[i * D + k] += diff;
                    df[j * D + k] -= diff;
                }
            }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    if (a.shape() != b.shape())
        throw DimensionError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        Node<T>& an = *self.parents[0];
        Node<T>& bn = *self.parents[1];
        const std::size_t n = self.value.numel();
        if (an.requires_grad) {
            T* da = grad_buffer(an).raw();
            for (std::size_t i = 0; i < n; ++i) da[i] += self.grad[i] * bn.value[i];
        }
        if (bn.requires_grad) {
            T* db = grad_buffer(bn).raw();
            for (std::size_t i = 0; i < n; ++i) db[i] += self.grad[i] * an.value[i];
        }
    });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (a.shape() != b.shape())
        throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            T* d = grad_buffer(*p).raw();
            for (std::size_t i = 0; i < self.value.numel(); ++i) d[i] += self.grad[i];
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * factor;
    return make_op<T>(std::move(out), {a}, [factor](Node<T>& self) {
        T* d = grad_buffer(*self.parents[0]).raw();
        for (std::size_t i = 0; i < self.value.numel(); ++i) d[i] += self.grad[i] * factor;
    });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
    T acc = T(0);
    for (auto v : a.value().data()) acc += v;
    return make_op<T>(Tensor<T>::scalar(acc), {a}, [](Node<T>& self) {
        Node<T>& p = *self.parents[0];
        T* d = grad_buffer(p).raw();
        const T g = self.grad[0];
        for (std::size_t i = 0; i < p.value.numel(); ++i) d[i] += g;
    });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels) {
    expect_rank(logits.shape(), 2, "cross_entropy", "logits");
    const std::size_t N = logits.shape()[0], C = logits.shape()[1];
    if (labels.size() != N)
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                             std::to_string(N));
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= C)
            throw DimensionError("cross_entropy: label " + std::to_string(l) + " out of range");
    Tensor<T> probs(Shape{N, C});
    T loss = T(0);
    const T* z = logits.value().raw();
    for (std::size_t n = 0; n < N; ++n) {
        const T* row = z + n * C;
        const T mx = *std::max_element(row, row + C);
        T denom = T(0);
        for (std::size_t c = 0; c < C; ++c) denom += std::exp(row[c] - mx);
        for (std::size_t c = 0; c < C; ++c) probs[n * C + c] = std::exp(row[c] - mx) / denom;
        loss += -(row[labels[n]] - mx - std::log(denom));
    }
    loss /= static_cast<T>(N);
    std::vector<int> lab(labels.begin(), labels.end());
    return make_op<T>(Tensor<T>::scalar(loss), {logits},
                      [N, C, probs = std::move(probs), lab = std::move(lab)](Node<T>& self) {
                          T* d = grad_buffer(*self.parents[0]).raw();
                          const T g = self.grad[0] / static_cast<T>(N);
                          for (std::size_t n = 0; n < N; ++n)
                              for (std::size_t c = 0; c < C; ++c) {
                                  const T target = static_cast<int>(c) == lab[n] ? T(1) : T(0);
                                  d[n * C + c] += g * (probs[n * C + c] - target);
                              }
                      });
}

#define ATTRIB_INSTANTIATE_OPS(T)                                                                           \
    template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>*);                                 \
    template Var<T> batchnorm<T>(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormState<T>&, bool);    \
    template Var<T> relu<T>(const Var<T>&);                                                                 \
    template Var<T> avgpool2x2<T>(const Var<T>&);                                                           \
    template Var<T> global_avgpool<T>(const Var<T>&);                                                       \
    template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                                         \
    template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>*);                                 \
    template Var<T> l2_distance_matrix<T>(const Var<T>&);                                                   \
    template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                                   \
    template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                   \
    template Var<T> scale<T>(const Var<T>&, T);                                                             \
    template Var<T> sum<T>(const Var<T>&);                                                                  \
    template Var<T> cross_entropy<T>(const Var<T>&, std::span<const int>);

ATTRIB_INSTANTIATE_OPS(float)
ATTRIB_INSTANTIATE_OPS(double)

#undef ATTRIB_INSTANTIATE_OPS

}  // namespace attrib::tg
