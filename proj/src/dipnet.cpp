#include "lamino/dipnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "lamino/parallel.hpp"
#include "lamino/rng.hpp"

namespace lamino {

namespace {

inline int reflect(int i, int n) {
    if (i < 0)
        return -i;
    if (i >= n)
        return 2 * n - 2 - i;
    return i;
}

void check_conv_args(const Tensor& in, int k, int stride) {
    if (k != 1 && k != 3)
        throw std::invalid_argument("conv2d: kernel must be 1 or 3");
    if (stride != 1 && stride != 2)
        throw std::invalid_argument("conv2d: stride must be 1 or 2");
    if (stride == 2 && (in.h % 2 != 0 || in.w % 2 != 0))
        throw std::invalid_argument("conv2d: stride 2 needs even dims");
    if (k == 3 && (in.h < 2 || in.w < 2))
        throw std::invalid_argument("conv2d: 3x3 needs dims >= 2");
}

} // namespace

void conv2d_forward(const Tensor& in, const double* w, const double* bias,
                    int out_c, int k, int stride, Tensor& out) {
    check_conv_args(in, k, stride);
    const int pad = (k - 1) / 2;
    const int oh = in.h / stride, ow = in.w / stride;
    out = Tensor(out_c, oh, ow);

    parallel_for(0, out_c, [&](std::int64_t oc) {
        double* op = out.plane(static_cast<int>(oc));
        const double b = bias[oc];
        for (int i = 0; i < oh * ow; ++i)
            op[i] = b;
        for (int ic = 0; ic < in.c; ++ic) {
            const double* ip = in.plane(ic);
            const double* wk =
                w + (static_cast<std::size_t>(oc) * in.c + ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wk[ky * k + kx];
                    const int offx = kx - pad;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = reflect(oy * stride + ky - pad, in.h);
                        const double* irow = ip + static_cast<std::size_t>(iy) * in.w;
                        double* orow = op + static_cast<std::size_t>(oy) * ow;
                        // Interior columns read without reflection.
                        int x_lo = 0, x_hi = ow;
                        while (x_lo < ow && x_lo * stride + offx < 0)
                            ++x_lo;
                        while (x_hi > x_lo && (x_hi - 1) * stride + offx >= in.w)
                            --x_hi;
                        for (int ox = 0; ox < x_lo; ++ox)
                            orow[ox] += wv * irow[reflect(ox * stride + offx, in.w)];
                        for (int ox = x_lo; ox < x_hi; ++ox)
                            orow[ox] += wv * irow[ox * stride + offx];
                        for (int ox = x_hi; ox < ow; ++ox)
                            orow[ox] += wv * irow[reflect(ox * stride + offx, in.w)];
                    }
                }
            }
        }
    });
}

void conv2d_backward(const Tensor& in, const double* w, int out_c, int k,
                     int stride, const Tensor& grad_out, Tensor& grad_in,
                     double* grad_w, double* grad_bias) {
    check_conv_args(in, k, stride);
    const int pad = (k - 1) / 2;
    const int oh = in.h / stride, ow = in.w / stride;
    if (grad_out.c != out_c || grad_out.h != oh || grad_out.w != ow)
        throw std::invalid_argument("conv2d_backward: grad_out shape mismatch");

    // Bias and weight gradients, one output channel per worker.
    parallel_for(0, out_c, [&](std::int64_t oc) {
        const double* gp = grad_out.plane(static_cast<int>(oc));
        double gb = 0.0;
        for (int i = 0; i < oh * ow; ++i)
            gb += gp[i];
        grad_bias[oc] = gb;
        for (int ic = 0; ic < in.c; ++ic) {
            const double* ip = in.plane(ic);
            double* gw =
                grad_w + (static_cast<std::size_t>(oc) * in.c + ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const int offx = kx - pad;
                    double acc = 0.0;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = reflect(oy * stride + ky - pad, in.h);
                        const double* irow = ip + static_cast<std::size_t>(iy) * in.w;
                        const double* grow = gp + static_cast<std::size_t>(oy) * ow;
                        for (int ox = 0; ox < ow; ++ox)
                            acc += grow[ox] * irow[reflect(ox * stride + offx, in.w)];
                    }
                    gw[ky * k + kx] = acc;
                }
            }
        }
    });

    // Input gradient: scatter per input channel so writes never race.
    grad_in = Tensor(in.c, in.h, in.w);
    parallel_for(0, in.c, [&](std::int64_t ic) {
        double* gip = grad_in.plane(static_cast<int>(ic));
        for (int oc = 0; oc < out_c; ++oc) {
            const double* gp = grad_out.plane(oc);
            const double* wk =
                w + (static_cast<std::size_t>(oc) * in.c + ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wk[ky * k + kx];
                    const int offx = kx - pad;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = reflect(oy * stride + ky - pad, in.h);
                        double* girow = gip + static_cast<std::size_t>(iy) * in.w;
                        const double* grow = gp + static_cast<std::size_t>(oy) * ow;
                        for (int ox = 0; ox < ow; ++ox)
                            girow[reflect(ox * stride + offx, in.w)] +=
                                wv * grow[ox];
                    }
                }
            }
        }
    });
}

void leaky_relu_forward(const Tensor& pre, double slope, Tensor& out) {
    out = Tensor(pre.c, pre.h, pre.w);
    for (std::size_t i = 0; i < pre.size(); ++i) {
        const double x = pre.v[i];
        out.v[i] = x > 0.0 ? x : slope * x;
    }
}

void leaky_relu_backward(const Tensor& pre, double slope, Tensor& grad) {
    if (grad.size() != pre.size())
        throw std::invalid_argument("leaky_relu_backward: shape mismatch");
    for (std::size_t i = 0; i < pre.size(); ++i)
        if (!(pre.v[i] > 0.0))
            grad.v[i] *= slope;
}

void upsample2_forward(const Tensor& in, Tensor& out) {
    out = Tensor(in.c, in.h * 2, in.w * 2);
    for (int c = 0; c < in.c; ++c) {
        const double* ip = in.plane(c);
        double* op = out.plane(c);
        for (int y = 0; y < out.h; ++y) {
            const double* irow = ip + static_cast<std::size_t>(y / 2) * in.w;
            double* orow = op + static_cast<std::size_t>(y) * out.w;
            for (int x = 0; x < out.w; ++x)
                orow[x] = irow[x / 2];
        }
    }
}

void upsample2_backward(const Tensor& grad_out, Tensor& grad_in) {
    if (grad_out.h % 2 != 0 || grad_out.w % 2 != 0)
        throw std::invalid_argument("upsample2_backward: odd dims");
    grad_in = Tensor(grad_out.c, grad_out.h / 2, grad_out.w / 2);
    for (int c = 0; c < grad_out.c; ++c) {
        const double* gp = grad_out.plane(c);
        double* gip = grad_in.plane(c);
        for (int y = 0; y < grad_out.h; ++y) {
            const double* grow = gp + static_cast<std::size_t>(y) * grad_out.w;
            double* girow =
                gip + static_cast<std::size_t>(y / 2) * grad_in.w;
            for (int x = 0; x < grad_out.w; ++x)
                girow[x / 2] += grow[x];
        }
    }
}

void concat_forward(const Tensor& a, const Tensor& b, Tensor& out) {
    if (a.h != b.h || a.w != b.w)
        throw std::invalid_argument("concat: spatial dims mismatch");
    out = Tensor(a.c + b.c, a.h, a.w);
    std::memcpy(out.v.data(), a.v.data(), a.size() * sizeof(double));
    std::memcpy(out.v.data() + a.size(), b.v.data(),
                b.size() * sizeof(double));
}

void concat_backward(const Tensor& grad_out, int c_a, Tensor& grad_a,
                     Tensor& grad_b) {
    grad_a = Tensor(c_a, grad_out.h, grad_out.w);
    grad_b = Tensor(grad_out.c - c_a, grad_out.h, grad_out.w);
    std::memcpy(grad_a.v.data(), grad_out.v.data(),
                grad_a.size() * sizeof(double));
    std::memcpy(grad_b.v.data(), grad_out.v.data() + grad_a.size(),
                grad_b.size() * sizeof(double));
}

void ArchConfig::validate() const {
    if (n_stages < 1)
        throw std::invalid_argument("arch: n_stages must be >= 1");
    if (static_cast<int>(channels.size()) != n_stages)
        throw std::invalid_argument("arch: channels must list one width per stage");
    for (int c : channels)
        if (c < 1)
            throw std::invalid_argument("arch: channel widths must be >= 1");
    if (bottleneck < 1 || bottleneck_convs < 1)
        throw std::invalid_argument("arch: bottleneck config invalid");
    if (!(output_bound > 0.0))
        throw std::invalid_argument("arch: output_bound must be positive");
    if (xavier_gain < 0.0)
        throw std::invalid_argument("arch: xavier_gain must be >= 0");
}

NoiseInput make_noise(const Dims& dims, double voxel_nm, std::uint64_t seed) {
    NoiseInput z;
    z.dims = dims;
    z.voxel_nm = voxel_nm;
    z.seed = seed;
    z.values.resize(static_cast<std::size_t>(dims.count()));
    Rng rng(seed);
    for (double& v : z.values)
        v = 0.1 * rng.uniform();
    return z;
}

DipNetwork::DipNetwork(const ArchConfig& arch, const Dims& dims,
                       std::uint64_t seed)
    : arch_(arch), dims_(dims) {
    arch_.validate();
    const int div = 1 << arch_.n_stages;
    if (dims.nx % div != 0 || dims.ny % div != 0)
        throw std::invalid_argument(
            "dipnet: lateral dims " + dims_to_string(dims) +
            " must be divisible by " + std::to_string(div));
    if (dims.nz < 1)
        throw std::invalid_argument("dipnet: nz must be >= 1");

    const int S = arch_.n_stages;
    auto add_conv = [&](const std::string& name, int in_c, int out_c, int k,
                        int stride) {
        Conv c{name, in_c, out_c, k, stride, params_.size(), 0};
        params_.resize(params_.size() +
                       static_cast<std::size_t>(out_c) * in_c * k * k);
        c.b_off = params_.size();
        params_.resize(params_.size() + static_cast<std::size_t>(out_c));
        slots_.push_back({name + ".weight", c.w_off, c.b_off - c.w_off, in_c,
                          out_c, k, stride, false});
        slots_.push_back({name + ".bias", c.b_off,
                          static_cast<std::size_t>(out_c), in_c, out_c, k,
                          stride, true});
        convs_.push_back(c);
    };

    for (int i = 0; i < S; ++i) {
        const int in_c = i == 0 ? dims.nz : arch_.channels[static_cast<std::size_t>(i - 1)];
        const int ch = arch_.channels[static_cast<std::size_t>(i)];
        add_conv("enc" + std::to_string(i), in_c, ch, 3, 1);
        add_conv("down" + std::to_string(i), ch, ch, 3, 2);
    }
    for (int j = 0; j < arch_.bottleneck_convs; ++j) {
        const int in_c = j == 0 ? arch_.channels[static_cast<std::size_t>(S - 1)]
                                : arch_.bottleneck;
        add_conv("bot" + std::to_string(j), in_c, arch_.bottleneck, 3, 1);
    }
    for (int i = S - 1; i >= 0; --i) {
        const int from_c = i == S - 1 ? arch_.bottleneck
                                      : arch_.channels[static_cast<std::size_t>(i + 1)];
        const int ch = arch_.channels[static_cast<std::size_t>(i)];
        add_conv("dec" + std::to_string(i), from_c + ch, ch, 3, 1);
    }
    add_conv("head", arch_.channels[0], dims.nz, 1, 1);

    grads_.assign(params_.size(), 0.0);

    // Xavier uniform in canonical slot order; biases stay zero.
    Rng rng(seed);
    for (const Conv& c : convs_) {
        const double fan_in = static_cast<double>(c.in_c) * c.k * c.k;
        const double fan_out = static_cast<double>(c.out_c) * c.k * c.k;
        const double a =
            arch_.xavier_gain * std::sqrt(6.0 / (fan_in + fan_out));
        const std::size_t n_w =
            static_cast<std::size_t>(c.out_c) * c.in_c * c.k * c.k;
        for (std::size_t i = 0; i < n_w; ++i)
            params_[c.w_off + i] = rng.uniform(-a, a);
    }
}

Tensor DipNetwork::run_conv(const Conv& c, const Tensor& in) {
    Tensor out;
    conv2d_forward(in, params_.data() + c.w_off, params_.data() + c.b_off,
                   c.out_c, c.k, c.stride, out);
    return out;
}

void DipNetwork::conv_grads(const Conv& c, const Tensor& in,
                            const Tensor& grad_out, Tensor& grad_in) {
    conv2d_backward(in, params_.data() + c.w_off, c.out_c, c.k, c.stride,
                    grad_out, grad_in, grads_.data() + c.w_off,
                    grads_.data() + c.b_off);
}

std::uint64_t DipNetwork::activation_sign_hash() const {
    if (!cache_valid_)
        throw std::logic_error("dipnet: sign hash needs a forward cache");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const Tensor& t) {
        for (double v : t.v) {
            h ^= v > 0.0 ? 0x9eULL : 0x31ULL;
            h *= 0x100000001b3ULL;
        }
    };
    for (const Tensor& t : enc_pre_)
        mix(t);
    for (const Tensor& t : down_pre_)
        mix(t);
    for (const Tensor& t : bot_pre_)
        mix(t);
    for (const Tensor& t : dec_pre_)
        mix(t);
    return h;
}

Volume DipNetwork::forward(const NoiseInput& z) {
    if (!(z.dims == dims_))
        throw std::invalid_argument("dipnet: noise dims mismatch");
    const int S = arch_.n_stages;
    const double slope = arch_.leaky_slope;

    input_ = Tensor(dims_.nz, dims_.ny, dims_.nx);
    input_.v = z.values;

    enc_pre_.assign(static_cast<std::size_t>(S), {});
    skip_.assign(static_cast<std::size_t>(S), {});
    down_pre_.assign(static_cast<std::size_t>(S), {});
    down_act_.assign(static_cast<std::size_t>(S), {});
    bot_pre_.assign(static_cast<std::size_t>(arch_.bottleneck_convs), {});
    bot_act_.assign(static_cast<std::size_t>(arch_.bottleneck_convs), {});
    up_out_.assign(static_cast<std::size_t>(S), {});
    cat_.assign(static_cast<std::size_t>(S), {});
    dec_pre_.assign(static_cast<std::size_t>(S), {});
    dec_act_.assign(static_cast<std::size_t>(S), {});

    std::size_t ci = 0;
    const Tensor* cur = &input_;
    for (int i = 0; i < S; ++i) {
        enc_pre_[static_cast<std::size_t>(i)] = run_conv(convs_[ci++], *cur);
        leaky_relu_forward(enc_pre_[static_cast<std::size_t>(i)], slope,
                           skip_[static_cast<std::size_t>(i)]);
        down_pre_[static_cast<std::size_t>(i)] =
            run_conv(convs_[ci++], skip_[static_cast<std::size_t>(i)]);
        leaky_relu_forward(down_pre_[static_cast<std::size_t>(i)], slope,
                           down_act_[static_cast<std::size_t>(i)]);
        cur = &down_act_[static_cast<std::size_t>(i)];
    }
    for (int j = 0; j < arch_.bottleneck_convs; ++j) {
        bot_pre_[static_cast<std::size_t>(j)] = run_conv(convs_[ci++], *cur);
        leaky_relu_forward(bot_pre_[static_cast<std::size_t>(j)], slope,
                           bot_act_[static_cast<std::size_t>(j)]);
        cur = &bot_act_[static_cast<std::size_t>(j)];
    }
    for (int i = S - 1; i >= 0; --i) {
        upsample2_forward(*cur, up_out_[static_cast<std::size_t>(i)]);
        concat_forward(up_out_[static_cast<std::size_t>(i)],
                       skip_[static_cast<std::size_t>(i)],
                       cat_[static_cast<std::size_t>(i)]);
        dec_pre_[static_cast<std::size_t>(i)] =
            run_conv(convs_[ci++], cat_[static_cast<std::size_t>(i)]);
        leaky_relu_forward(dec_pre_[static_cast<std::size_t>(i)], slope,
                           dec_act_[static_cast<std::size_t>(i)]);
        cur = &dec_act_[static_cast<std::size_t>(i)];
    }
    head_pre_ = run_conv(convs_[ci++], *cur);

    tanh_out_ = Tensor(head_pre_.c, head_pre_.h, head_pre_.w);
    for (std::size_t i = 0; i < head_pre_.size(); ++i)
        tanh_out_.v[i] = std::tanh(head_pre_.v[i]);

    Volume out(dims_, z.voxel_nm, 0.0);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = arch_.output_bound * tanh_out_.v[i];

    cache_valid_ = true;
    cached_noise_seed_ = z.seed;
    return out;
}

void DipNetwork::backward(const Volume& grad_wrt_output) {
    if (!cache_valid_)
        throw std::logic_error(
            "dipnet: backward requires a fresh forward pass (stale cache)");
    if (!(grad_wrt_output.dims == dims_))
        throw std::invalid_argument("dipnet: cotangent dims mismatch");
    const int S = arch_.n_stages;
    const double slope = arch_.leaky_slope;
    std::fill(grads_.begin(), grads_.end(), 0.0);

    // Head: x = bound * tanh(a).
    Tensor g(dims_.nz, dims_.ny, dims_.nx);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double th = tanh_out_.v[i];
        g.v[i] = grad_wrt_output.values[i] * arch_.output_bound *
                 (1.0 - th * th);
    }

    int ci = static_cast<int>(convs_.size()) - 1;
    Tensor g_in;
    conv_grads(convs_[static_cast<std::size_t>(ci--)], dec_act_[0], g, g_in);
    g = std::move(g_in);

    // Decoder stages, outermost first, collecting skip cotangents.
    std::vector<Tensor> g_skip(static_cast<std::size_t>(S));
    for (int i = 0; i < S; ++i) {
        leaky_relu_backward(dec_pre_[static_cast<std::size_t>(i)], slope, g);
        Tensor g_cat;
        conv_grads(convs_[static_cast<std::size_t>(ci--)],
                   cat_[static_cast<std::size_t>(i)], g, g_cat);
        Tensor g_up, g_sk;
        concat_backward(g_cat, up_out_[static_cast<std::size_t>(i)].c, g_up,
                        g_sk);
        g_skip[static_cast<std::size_t>(i)] = std::move(g_sk);
        upsample2_backward(g_up, g);
    }

    // Bottleneck.
    for (int j = arch_.bottleneck_convs - 1; j >= 0; --j) {
        leaky_relu_backward(bot_pre_[static_cast<std::size_t>(j)], slope, g);
        const Tensor& in = j == 0 ? down_act_[static_cast<std::size_t>(S - 1)]
                                  : bot_act_[static_cast<std::size_t>(j - 1)];
        Tensor g_prev;
        conv_grads(convs_[static_cast<std::size_t>(ci--)], in, g, g_prev);
        g = std::move(g_prev);
    }

    // Encoder, deepest stage first; add the skip cotangents.
    for (int i = S - 1; i >= 0; --i) {
        leaky_relu_backward(down_pre_[static_cast<std::size_t>(i)], slope, g);
        Tensor g_skip_total;
        conv_grads(convs_[static_cast<std::size_t>(ci--)],
                   skip_[static_cast<std::size_t>(i)], g, g_skip_total);
        const Tensor& sk = g_skip[static_cast<std::size_t>(i)];
        for (std::size_t n = 0; n < g_skip_total.size(); ++n)
            g_skip_total.v[n] += sk.v[n];
        leaky_relu_backward(enc_pre_[static_cast<std::size_t>(i)], slope,
                            g_skip_total);
        const Tensor& in =
            i == 0 ? input_ : skip_[static_cast<std::size_t>(i - 1)];
        Tensor g_prev;
        conv_grads(convs_[static_cast<std::size_t>(ci--)], in, g_skip_total,
                   g_prev);
        g = std::move(g_prev);
    }
}

} // namespace lamino
