#include "funie/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace funie::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

void require_rank4(const Shape& s, const char* what) {
    require(s.size() == 4, std::string(what) + " must be rank 4 (NCHW), got " + shape_str(s));
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    require(a == b, std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

struct ConvGeometry {
    std::int64_t channels, height, width;  // image side
    std::int64_t kh, kw;
    std::int64_t out_h, out_w;  // column side
    int stride, padding;
};

// cols is [C*kh*kw, batch*out_h*out_w] row-major; image is NCHW.
template <typename T>
void im2col(const T* image, std::int64_t batch, const ConvGeometry& g, T* cols) {
    const std::int64_t plane = g.out_h * g.out_w;
    const std::int64_t row_len = batch * plane;
    for (std::int64_t c = 0; c < g.channels; ++c) {
        for (std::int64_t ki = 0; ki < g.kh; ++ki) {
            for (std::int64_t kj = 0; kj < g.kw; ++kj) {
                T* row = cols + ((c * g.kh + ki) * g.kw + kj) * row_len;
                for (std::int64_t n = 0; n < batch; ++n) {
                    const T* src = image + (n * g.channels + c) * g.height * g.width;
                    T* dst = row + n * plane;
                    for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
                        const std::int64_t ih = oh * g.stride - g.padding + ki;
                        T* drow = dst + oh * g.out_w;
                        if (ih < 0 || ih >= g.height) {
                            std::fill(drow, drow + g.out_w, T(0));
                            continue;
                        }
                        const T* srow = src + ih * g.width;
                        for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
                            const std::int64_t iw = ow * g.stride - g.padding + kj;
                            drow[ow] = (iw >= 0 && iw < g.width) ? srow[iw] : T(0);
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters-adds columns back into an NCHW image buffer.
template <typename T>
void col2im(const T* cols, std::int64_t batch, const ConvGeometry& g, T* image) {
    const std::int64_t plane = g.out_h * g.out_w;
    const std::int64_t row_len = batch * plane;
    for (std::int64_t c = 0; c < g.channels; ++c) {
        for (std::int64_t ki = 0; ki < g.kh; ++ki) {
            for (std::int64_t kj = 0; kj < g.kw; ++kj) {
                const T* row = cols + ((c * g.kh + ki) * g.kw + kj) * row_len;
                for (std::int64_t n = 0; n < batch; ++n) {
                    T* dst = image + (n * g.channels + c) * g.height * g.width;
                    const T* src = row + n * plane;
                    for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
                        const std::int64_t ih = oh * g.stride - g.padding + ki;
                        if (ih < 0 || ih >= g.height) continue;
                        T* drow = dst + ih * g.width;
                        const T* srow = src + oh * g.out_w;
                        for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
                            const std::int64_t iw = ow * g.stride - g.padding + kj;
                            if (iw >= 0 && iw < g.width) drow[iw] += srow[ow];
                        }
                    }
                }
            }
        }
    }
}

// NCHW <-> [C, N*P] channel-major matrices.
template <typename T>
void nchw_to_cm(const T* src, std::int64_t n, std::int64_t c, std::int64_t p, T* dst) {
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch)
            std::copy_n(src + (b * c + ch) * p, p, dst + ch * n * p + b * p);
}

template <typename T>
void cm_to_nchw(const T* src, std::int64_t n, std::int64_t c, std::int64_t p, T* dst) {
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch)
            std::copy_n(src + ch * n * p + b * p, p, dst + (b * c + ch) * p);
}

template <typename T>
void accumulate(std::vector<T>& into, const std::vector<T>& from) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
}

template <typename T>
T sigmoid_scalar(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace

std::int64_t conv_out_size(std::int64_t in, std::int64_t kernel, int stride, int padding) {
    return (in + 2 * padding - kernel) / stride + 1;
}

std::int64_t conv_transpose_out_size(std::int64_t in, std::int64_t kernel, int stride, int padding) {
    return (in - 1) * stride - 2 * padding + kernel;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride,
                 int padding) {
    const Shape& xs = input.shape();
    const Shape& ks = kernel.shape();
    require_rank4(xs, "conv2d input");
    require_rank4(ks, "conv2d kernel");
    require(stride >= 1, "conv2d: stride must be >= 1, got " + std::to_string(stride));
    require(padding >= 0, "conv2d: padding must be >= 0, got " + std::to_string(padding));
    require(ks[1] == xs[1], "conv2d: kernel channels " + std::to_string(ks[1]) +
                                " != input channels " + std::to_string(xs[1]) + " (input " +
                                shape_str(xs) + ", kernel " + shape_str(ks) + ")");
    require(xs[2] + 2 * padding >= ks[2] && xs[3] + 2 * padding >= ks[3],
            "conv2d: padded input " + shape_str(xs) + " smaller than kernel " + shape_str(ks));
    require(bias.shape() == Shape{ks[0]},
            "conv2d: bias shape " + shape_str(bias.shape()) + " != [" + std::to_string(ks[0]) + "]");

    const std::int64_t n = xs[0], f = ks[0];
    ConvGeometry g{xs[1], xs[2], xs[3], ks[2], ks[3], conv_out_size(xs[2], ks[2], stride, padding),
                   conv_out_size(xs[3], ks[3], stride, padding), stride, padding};
    const std::int64_t k = g.channels * g.kh * g.kw;
    const std::int64_t p = g.out_h * g.out_w;

    std::vector<T> cols(static_cast<std::size_t>(k * n * p));
    im2col(input.values().data(), n, g, cols.data());
    std::vector<T> out_cm(static_cast<std::size_t>(f * n * p));
    MatMap<T>(out_cm.data(), f, n * p).noalias() =
        ConstMatMap<T>(kernel.values().data(), f, k) * ConstMatMap<T>(cols.data(), k, n * p);
    const auto b = bias.values();
    for (std::int64_t ch = 0; ch < f; ++ch) {
        T* row = out_cm.data() + ch * n * p;
        for (std::int64_t i = 0; i < n * p; ++i) row[i] += b[ch];
    }
    std::vector<T> out(out_cm.size());
    cm_to_nchw(out_cm.data(), n, f, p, out.data());

    return Tensor<T>::make_result(
        Shape{n, f, g.out_h, g.out_w}, std::move(out), {input, kernel, bias},
        [g, n, f, k, p](detail::Node<T>& self) {
            auto& x = *self.parents[0];
            auto& w = *self.parents[1];
            auto& bb = *self.parents[2];
            std::vector<T> dy(static_cast<std::size_t>(f * n * p));
            nchw_to_cm(self.grad.data(), n, f, p, dy.data());
            ConstMatMap<T> dy_m(dy.data(), f, n * p);
            if (bb.requires_grad) {
                auto& gb = bb.ensure_grad();
                // Plain loop: Eigen's reductions peel by address, which breaks bitwise reproducibility.
                for (std::int64_t ch = 0; ch < f; ++ch) {
                    double acc = 0.0;
                    const T* row = dy.data() + ch * n * p;
                    for (std::int64_t i = 0; i < n * p; ++i) acc += row[i];
                    gb[ch] += static_cast<T>(acc);
                }
            }
            if (w.requires_grad) {
                std::vector<T> cols(static_cast<std::size_t>(k * n * p));
                im2col(x.values.data(), n, g, cols.data());
                MatMap<T>(w.ensure_grad().data(), f, k).noalias() +=
                    dy_m * ConstMatMap<T>(cols.data(), k, n * p).transpose();
            }
            if (x.requires_grad) {
                std::vector<T> dcols(static_cast<std::size_t>(k * n * p));
                MatMap<T>(dcols.data(), k, n * p).noalias() =
                    ConstMatMap<T>(w.values.data(), f, k).transpose() * dy_m;
                col2im(dcols.data(), n, g, x.ensure_grad().data());
            }
        });
}

template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                           int stride, int padding) {
    const Shape& xs = input.shape();
    const Shape& ks = kernel.shape();
    require_rank4(xs, "conv2d_transpose input");
    require_rank4(ks, "conv2d_transpose kernel");
    require(stride >= 1, "conv2d_transpose: stride must be >= 1, got " + std::to_string(stride));
    require(padding >= 0, "conv2d_transpose: padding must be >= 0, got " + std::to_string(padding));
    require(ks[0] == xs[1], "conv2d_transpose: kernel input channels " + std::to_string(ks[0]) +
                                " != input channels " + std::to_string(xs[1]) + " (input " +
                                shape_str(xs) + ", kernel " + shape_str(ks) + ")");
    require(bias.shape() == Shape{ks[1]}, "conv2d_transpose: bias shape " + shape_str(bias.shape()) +
                                              " != [" + std::to_string(ks[1]) + "]");
    const std::int64_t out_h = conv_transpose_out_size(xs[2], ks[2], stride, padding);
    const std::int64_t out_w = conv_transpose_out_size(xs[3], ks[3], stride, padding);
    require(out_h > 0 && out_w > 0, "conv2d_transpose: non-positive output size for input " +
                                        shape_str(xs) + " and kernel " + shape_str(ks));

    const std::int64_t n = xs[0], c = xs[1], f = ks[1];
    const std::int64_t hw = xs[2] * xs[3];
    // Column geometry of the conv2d whose input-gradient this op computes.
    ConvGeometry g{f, out_h, out_w, ks[2], ks[3], xs[2], xs[3], stride, padding};
    const std::int64_t k = f * g.kh * g.kw;

    std::vector<T> x_cm(static_cast<std::size_t>(c * n * hw));
    nchw_to_cm(input.values().data(), n, c, hw, x_cm.data());
    std::vector<T> cols(static_cast<std::size_t>(k * n * hw));
    MatMap<T>(cols.data(), k, n * hw).noalias() =
        ConstMatMap<T>(kernel.values().data(), c, k).transpose() *
        ConstMatMap<T>(x_cm.data(), c, n * hw);
    std::vector<T> out(static_cast<std::size_t>(n * f * out_h * out_w), T(0));
    col2im(cols.data(), n, g, out.data());
    const auto b = bias.values();
    const std::int64_t plane = out_h * out_w;
    for (std::int64_t bi = 0; bi < n; ++bi)
        for (std::int64_t ch = 0; ch < f; ++ch) {
            T* dst = out.data() + (bi * f + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i) dst[i] += b[ch];
        }

    return Tensor<T>::make_result(
        Shape{n, f, out_h, out_w}, std::move(out), {input, kernel, bias},
        [g, n, c, f, k, hw, plane](detail::Node<T>& self) {
            auto& x = *self.parents[0];
            auto& w = *self.parents[1];
            auto& bb = *self.parents[2];
            if (bb.requires_grad) {
                auto& gb = bb.ensure_grad();
                for (std::int64_t bi = 0; bi < n; ++bi)
                    for (std::int64_t ch = 0; ch < f; ++ch) {
                        const T* src = self.grad.data() + (bi * f + ch) * plane;
                        T s = T(0);
                        for (std::int64_t i = 0; i < plane; ++i) s += src[i];
                        gb[ch] += s;
                    }
            }
            if (!x.requires_grad && !w.requires_grad) return;
            std::vector<T> dcols(static_cast<std::size_t>(k * n * hw));
            im2col(self.grad.data(), n, g, dcols.data());
            ConstMatMap<T> dcols_m(dcols.data(), k, n * hw);
            if (w.requires_grad) {
                std::vector<T> x_cm(static_cast<std::size_t>(c * n * hw));
                nchw_to_cm(x.values.data(), n, c, hw, x_cm.data());
                MatMap<T>(w.ensure_grad().data(), c, k).noalias() +=
                    ConstMatMap<T>(x_cm.data(), c, n * hw) * dcols_m.transpose();
            }
            if (x.requires_grad) {
                std::vector<T> dx_cm(static_cast<std::size_t>(c * n * hw));
                MatMap<T>(dx_cm.data(), c, n * hw).noalias() =
                    ConstMatMap<T>(w.values.data(), c, k) * dcols_m;
                std::vector<T> dx(dx_cm.size());
                cm_to_nchw(dx_cm.data(), n, c, hw, dx.data());
                accumulate(x.ensure_grad(), dx);
            }
        });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    require(slope >= T(0) && slope < T(1), "leaky_relu: slope must be in [0,1)");
    auto in = x.values();
    std::vector<T> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : slope * in[i];
    return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [slope](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += p.values[i] > T(0) ? self.grad[i] : slope * self.grad[i];
    });
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Mode mode,
                     RunningStats<T>& stats, T epsilon, T momentum) {
    const Shape& xs = x.shape();
    require_rank4(xs, "batch_norm input");
    require(epsilon > T(0), "batch_norm: epsilon must be positive");
    const std::int64_t n = xs[0], c = xs[1], plane = xs[2] * xs[3];
    require(gamma.shape() == Shape{c} && beta.shape() == Shape{c},
            "batch_norm: gamma/beta must have shape [" + std::to_string(c) + "]");

    std::vector<T> mean_c(c), invstd(c);
    if (mode == Mode::train) {
        const auto v = x.values();
        const double count = static_cast<double>(n * plane);
        for (std::int64_t ch = 0; ch < c; ++ch) {
            double s = 0.0;
            for (std::int64_t b = 0; b < n; ++b) {
                const T* src = v.data() + (b * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) s += src[i];
            }
            const double mu = s / count;
            double sq = 0.0;
            for (std::int64_t b = 0; b < n; ++b) {
                const T* src = v.data() + (b * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) sq += (src[i] - mu) * (src[i] - mu);
            }
            const double var = sq / count;
            mean_c[ch] = static_cast<T>(mu);
            invstd[ch] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(epsilon)));
            if (stats.populated()) {
                auto rm = stats.mean.mutable_values();
                auto rv = stats.var.mutable_values();
                const double unbiased = count > 1 ? sq / (count - 1) : var;
                rm[ch] = static_cast<T>((1 - momentum) * rm[ch] + momentum * mu);
                rv[ch] = static_cast<T>((1 - momentum) * rv[ch] + momentum * unbiased);
            }
        }
    } else {
        if (!stats.populated()) throw StateError("batch_norm: infer mode requires populated running stats");
        require(stats.mean.numel() == static_cast<std::size_t>(c) &&
                    stats.var.numel() == static_cast<std::size_t>(c),
                "batch_norm: running stats size mismatch");
        for (std::int64_t ch = 0; ch < c; ++ch) {
            mean_c[ch] = stats.mean.values()[ch];
            invstd[ch] = T(1) / std::sqrt(stats.var.values()[ch] + epsilon);
        }
    }

    const auto v = x.values();
    const auto gm = gamma.values();
    const auto bt = beta.values();
    std::vector<T> xhat(v.size()), out(v.size());
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const std::int64_t off = (b * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                const T h = (v[off + i] - mean_c[ch]) * invstd[ch];
                xhat[off + i] = h;
                out[off + i] = gm[ch] * h + bt[ch];
            }
        }

    return Tensor<T>::make_result(
        xs, std::move(out), {x, gamma, beta},
        [mode, n, c, plane, invstd, xhat = std::move(xhat)](detail::Node<T>& self) {
            auto& px = *self.parents[0];
            auto& pg = *self.parents[1];
            auto& pb = *self.parents[2];
            const auto& dy = self.grad;
            std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
            for (std::int64_t b = 0; b < n; ++b)
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    const std::int64_t off = (b * c + ch) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) {
                        sum_dy[ch] += dy[off + i];
                        sum_dy_xhat[ch] += dy[off + i] * xhat[off + i];
                    }
                }
            if (pg.requires_grad) {
                auto& g = pg.ensure_grad();
                for (std::int64_t ch = 0; ch < c; ++ch) g[ch] += static_cast<T>(sum_dy_xhat[ch]);
            }
            if (pb.requires_grad) {
                auto& g = pb.ensure_grad();
                for (std::int64_t ch = 0; ch < c; ++ch) g[ch] += static_cast<T>(sum_dy[ch]);
            }
            if (!px.requires_grad) return;
            auto& gx = px.ensure_grad();
            const auto& gm = self.parents[1]->values;
            const double count = static_cast<double>(n * plane);
            for (std::int64_t b = 0; b < n; ++b)
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    const std::int64_t off = (b * c + ch) * plane;
                    const T scale_c = gm[ch] * invstd[ch];
                    if (mode == Mode::infer) {
                        for (std::int64_t i = 0; i < plane; ++i) gx[off + i] += scale_c * dy[off + i];
                        continue;
                    }
                    const T mdy = static_cast<T>(sum_dy[ch] / count);
                    const T mdyx = static_cast<T>(sum_dy_xhat[ch] / count);
                    for (std::int64_t i = 0; i < plane; ++i)
                        gx[off + i] += scale_c * (dy[off + i] - mdy - xhat[off + i] * mdyx);
                }
        });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    require_rank4(as, "concat_channels lhs");
    require_rank4(bs, "concat_channels rhs");
    require(as[0] == bs[0] && as[2] == bs[2] && as[3] == bs[3],
            "concat_channels: batch/spatial mismatch " + shape_str(as) + " vs " + shape_str(bs));
    const std::int64_t n = as[0], ca = as[1], cb = bs[1], plane = as[2] * as[3];
    std::vector<T> out(static_cast<std::size_t>(n * (ca + cb) * plane));
    const auto av = a.values();
    const auto bv = b.values();
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(av.data() + i * ca * plane, ca * plane, out.data() + i * (ca + cb) * plane);
        std::copy_n(bv.data() + i * cb * plane, cb * plane,
                    out.data() + i * (ca + cb) * plane + ca * plane);
    }
    return Tensor<T>::make_result(
        Shape{n, ca + cb, as[2], as[3]}, std::move(out), {a, b}, [n, ca, cb, plane](detail::Node<T>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            for (std::int64_t i = 0; i < n; ++i) {
                const T* src = self.grad.data() + i * (ca + cb) * plane;
                if (pa.requires_grad) {
                    T* dst = pa.ensure_grad().data() + i * ca * plane;
                    for (std::int64_t j = 0; j < ca * plane; ++j) dst[j] += src[j];
                }
                if (pb.requires_grad) {
                    T* dst = pb.ensure_grad().data() + i * cb * plane;
                    for (std::int64_t j = 0; j < cb * plane; ++j) dst[j] += src[ca * plane + j];
                }
            }
        });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t end) {
    const Shape& xs = x.shape();
    require_rank4(xs, "slice_channels input");
    require(0 <= begin && begin < end && end <= xs[1], "slice_channels: invalid range");
    const std::int64_t n = xs[0], c = xs[1], plane = xs[2] * xs[3], w = end - begin;
    std::vector<T> out(static_cast<std::size_t>(n * w * plane));
    for (std::int64_t i = 0; i < n; ++i)
        std::copy_n(x.values().data() + (i * c + begin) * plane, w * plane, out.data() + i * w * plane);
    return Tensor<T>::make_result(Shape{n, w, xs[2], xs[3]}, std::move(out), {x},
                                  [n, c, plane, w, begin](detail::Node<T>& self) {
                                      auto& g = self.parents[0]->ensure_grad();
                                      for (std::int64_t i = 0; i < n; ++i)
                                          for (std::int64_t j = 0; j < w * plane; ++j)
                                              g[(i * c + begin) * plane + j] += self.grad[i * w * plane + j];
                                  });
}

template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items) {
    require(!items.empty(), "stack_batch: no items");
    const Shape& s0 = items.front().shape();
    require(s0.size() == 4 && s0[0] == 1, "stack_batch: items must be [1,C,H,W], got " + shape_str(s0));
    std::vector<T> out;
    out.reserve(items.size() * items.front().numel());
    for (const auto& it : items) {
        require_same_shape(it.shape(), s0, "stack_batch");
        out.insert(out.end(), it.values().begin(), it.values().end());
    }
    const std::int64_t per = static_cast<std::int64_t>(items.front().numel());
    return Tensor<T>::make_result(Shape{static_cast<std::int64_t>(items.size()), s0[1], s0[2], s0[3]},
                                  std::move(out), items, [per](detail::Node<T>& self) {
                                      for (std::size_t i = 0; i < self.parents.size(); ++i) {
                                          auto& p = *self.parents[i];
                                          if (!p.requires_grad) continue;
                                          auto& g = p.ensure_grad();
                                          for (std::int64_t j = 0; j < per; ++j) g[j] += self.grad[i * per + j];
                                      }
                                  });
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, ActivationKind kind) {
    auto in = x.values();
    std::vector<T> out(in.size());
    if (kind == ActivationKind::tanh) {
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
    } else {
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = sigmoid_scalar(in[i]);
    }
    // Both derivatives are functions of the output, captured by value.
    return Tensor<T>::make_result(x.shape(), out, {x}, [kind, y = out](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        if (kind == ActivationKind::tanh) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (T(1) - y[i] * y[i]);
        } else {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y[i] * (T(1) - y[i]);
        }
    });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T rate, std::mt19937_64& rng) {
    require(rate >= T(0) && rate < T(1), "dropout: rate must be in [0,1)");
    auto in = x.values();
    std::vector<T> mask(in.size());
    std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
    const T inv = T(1) / (T(1) - rate);
    for (auto& m : mask) m = keep(rng) ? inv : T(0);
    std::vector<T> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * mask[i];
    return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
    });
}

template <typename T>
Tensor<T> reduce_loss(const Tensor<T>& a, const Tensor<T>& b, LossKind kind) {
    require_same_shape(a.shape(), b.shape(), "reduce_loss");
    const auto av = a.values();
    const auto bv = b.values();
    const std::size_t count = av.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
        acc += kind == LossKind::mean_abs ? std::abs(d) : d * d;
    }
    const T value = static_cast<T>(acc / static_cast<double>(count));
    return Tensor<T>::make_result(Shape{1}, {value}, {a, b}, [kind, count](detail::Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const T up = self.grad[0] / static_cast<T>(count);
        for (std::size_t i = 0; i < count; ++i) {
            const T d = pa.values[i] - pb.values[i];
            T g;
            if (kind == LossKind::mean_abs) {
                g = d > T(0) ? up : (d < T(0) ? -up : T(0));
            } else {
                g = T(2) * d * up;
            }
            if (pa.requires_grad) pa.ensure_grad()[i] += g;
            if (pb.requires_grad) pb.ensure_grad()[i] -= g;
        }
    });
}

template <typename T>
Tensor<T> bce(const Tensor<T>& prob, int target) {
    require(target == 0 || target == 1, "bce: target must be 0 or 1");
    const auto pv = prob.values();
    const double floor = kBceProbFloor;
    double acc = 0.0;
    for (auto p : pv) {
        const double q = target == 1 ? static_cast<double>(p) : 1.0 - static_cast<double>(p);
        acc += -std::log(std::clamp(q, floor, 1.0));
    }
    const std::size_t count = pv.size();
    const T value = static_cast<T>(acc / static_cast<double>(count));
    return Tensor<T>::make_result(Shape{1}, {value}, {prob}, [target, count, floor](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        auto& g = p.ensure_grad();
        const double up = static_cast<double>(self.grad[0]) / static_cast<double>(count);
        for (std::size_t i = 0; i < count; ++i) {
            const double pi = p.values[i];
            const double q = target == 1 ? pi : 1.0 - pi;
            if (q < floor) continue;  // clamped: flat
            g[i] += static_cast<T>(target == 1 ? -up / q : up / q);
        }
    });
}

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, int target) {
    require(target == 0 || target == 1, "bce_with_logits: target must be 0 or 1");
    const auto zv = logits.values();
    const double cap = -std::log(kBceProbFloor);
    double acc = 0.0;
    for (auto zf : zv) {
        const double z = zf;
        // -ln(sigmoid(z)) for t=1, -ln(1-sigmoid(z)) for t=0
        const double l = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
        acc += std::min(l, cap);
    }
    const std::size_t count = zv.size();
    const T value = static_cast<T>(acc / static_cast<double>(count));
    return Tensor<T>::make_result(Shape{1}, {value}, {logits}, [target, count, cap](detail::Node<T>& self) {
        auto& p = *self.parents[0];
        auto& g = p.ensure_grad();
        const double up = static_cast<double>(self.grad[0]) / static_cast<double>(count);
        for (std::size_t i = 0; i < count; ++i) {
            const double z = p.values[i];
            const double l = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
            if (l > cap) continue;
            const double s = sigmoid_scalar(z);
            g[i] += static_cast<T>(up * (s - target));
        }
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    const auto v = x.values();
    double acc = 0.0;
    for (auto e : v) acc += e;
    const std::size_t count = v.size();
    return Tensor<T>::make_result(Shape{1}, {static_cast<T>(acc / static_cast<double>(count))}, {x},
                                  [count](detail::Node<T>& self) {
                                      auto& g = self.parents[0]->ensure_grad();
                                      const T up = self.grad[0] / static_cast<T>(count);
                                      for (auto& e : g) e += up;
                                  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            auto& g = p->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "sub");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * factor;
    return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [factor](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
    });
}

#define FUNIE_INSTANTIATE_OPS(T)                                                                     \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);      \
    template Tensor<T> conv2d_transpose(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int,  \
                                        int);                                                       \
    template Tensor<T> leaky_relu(const Tensor<T>&, T);                                             \
    template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Mode,       \
                                  RunningStats<T>&, T, T);                                          \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                         \
    template Tensor<T> slice_channels(const Tensor<T>&, std::int64_t, std::int64_t);                \
    template Tensor<T> stack_batch(const std::vector<Tensor<T>>&);                                  \
    template Tensor<T> activation(const Tensor<T>&, ActivationKind);                                \
    template Tensor<T> dropout(const Tensor<T>&, T, std::mt19937_64&);                              \
    template Tensor<T> reduce_loss(const Tensor<T>&, const Tensor<T>&, LossKind);                   \
    template Tensor<T> bce(const Tensor<T>&, int);                                                  \
    template Tensor<T> bce_with_logits(const Tensor<T>&, int);                                      \
    template Tensor<T> mean(const Tensor<T>&);                                                      \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                     \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                     \
    template Tensor<T> scale(const Tensor<T>&, T);

FUNIE_INSTANTIATE_OPS(float)
FUNIE_INSTANTIATE_OPS(double)

#undef FUNIE_INSTANTIATE_OPS

}  // namespace funie::ops
