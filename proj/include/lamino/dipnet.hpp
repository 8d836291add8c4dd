#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lamino/volume.hpp"

namespace lamino {

/// 2D feature map with explicit channels; layout (c, y, x), x fastest.
/// A Volume maps onto a Tensor with depth as channels (c = nz) without
/// copying order: both are x-fastest.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_)
        : c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}

    double* plane(int ch) {
        return v.data() + static_cast<std::size_t>(ch) * h * w;
    }
    const double* plane(int ch) const {
        return v.data() + static_cast<std::size_t>(ch) * h * w;
    }
    std::size_t size() const { return v.size(); }
};

// --- layer primitives (shared by the network and its tests) ---

/// 2D convolution, stride 1 or 2, odd kernel, reflective padding
/// (k-1)/2. Weights layout: w[oc][ic][ky][kx]; bias one per oc.
void conv2d_forward(const Tensor& in, const double* w, const double* bias,
                    int out_c, int k, int stride, Tensor& out);
void conv2d_backward(const Tensor& in, const double* w, int out_c, int k,
                     int stride, const Tensor& grad_out, Tensor& grad_in,
                     double* grad_w, double* grad_bias);

void leaky_relu_forward(const Tensor& pre, double slope, Tensor& out);
/// Multiplies grad by the activation derivative, using the cached
/// pre-activation signs. In-place on grad.
void leaky_relu_backward(const Tensor& pre, double slope, Tensor& grad);

void upsample2_forward(const Tensor& in, Tensor& out);
void upsample2_backward(const Tensor& grad_out, Tensor& grad_in);

void concat_forward(const Tensor& a, const Tensor& b, Tensor& out);
void concat_backward(const Tensor& grad_out, int c_a, Tensor& grad_a,
                     Tensor& grad_b);

// --- the generator ---

struct ArchConfig {
    int n_stages = 2; // lateral reduction = 2^n_stages
    std::vector<int> channels = {32, 64};
    int bottleneck = 64;
    int bottleneck_convs = 2;
    double leaky_slope = 0.1;
    double output_bound = kContrastBound;
    double xavier_gain = 0.2;

    void validate() const;
};

/// Fixed uniform-noise input z ~ U[0, 0.1], never resampled during an
/// optimization. Same memory layout as Volume.
struct NoiseInput {
    Dims dims;
    double voxel_nm = 1.0;
    std::uint64_t seed = 0;
    std::vector<double> values;
};

NoiseInput make_noise(const Dims& dims, double voxel_nm, std::uint64_t seed);

/// Named parameter block, for checkpoint sidecars.
struct ParamSlot {
    std::string name;
    std::size_t offset = 0;
    std::size_t count = 0;
    int in_c = 0, out_c = 0, k = 0, stride = 0;
    bool is_bias = false;
};

/// Encoder-decoder convolutional generator with skip connections,
/// operating on depth-as-channels 2D tensors. Per encoder stage:
/// conv3x3 + leaky-ReLU (skip source), conv3x3 stride 2 + leaky-ReLU.
/// Decoder stage: nearest x2 upsample, concat skip, conv3x3 +
/// leaky-ReLU. Head: 1x1 conv to nz channels, then
/// x = output_bound * tanh(a), which pins the output to
/// [-output_bound, output_bound] for any weights.
class DipNetwork {
public:
    /// Xavier-uniform init (gain * sqrt(6/(fan_in+fan_out))), zero
    /// biases, deterministic per seed. Lateral dims must be divisible
    /// by 2^n_stages.
    DipNetwork(const ArchConfig& arch, const Dims& dims, std::uint64_t seed);

    Volume forward(const NoiseInput& z);

    /// Exact reverse-mode gradients of forward composed with the given
    /// output cotangent; requires a valid forward cache for the same
    /// noise. Parameter gradients are overwritten (not accumulated).
    void backward(const Volume& grad_wrt_output);

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    const std::vector<double>& grads() const { return grads_; }
    std::size_t param_count() const { return params_.size(); }
    const std::vector<ParamSlot>& param_slots() const { return slots_; }
    const ArchConfig& arch() const { return arch_; }
    const Dims& dims() const { return dims_; }

    /// Must be called after mutating params(); forgetting it makes the
    /// next backward() throw on a stale cache.
    void invalidate_cache() { cache_valid_ = false; }

    /// Hash of the leaky-ReLU sign pattern of the cached forward pass.
    /// Finite-difference probes compare it across the probe interval
    /// and skip parameters whose perturbation crosses an activation
    /// kink, where central differences are invalid.
    std::uint64_t activation_sign_hash() const;

private:
    struct Conv {
        std::string name;
        int in_c, out_c, k, stride;
        std::size_t w_off, b_off;
    };

    Tensor run_conv(const Conv& c, const Tensor& in);
    void conv_grads(const Conv& c, const Tensor& in, const Tensor& grad_out,
                    Tensor& grad_in);

    ArchConfig arch_;
    Dims dims_;
    std::vector<Conv> convs_; // enc/down per stage, bottleneck, dec, head
    std::vector<ParamSlot> slots_;
    std::vector<double> params_;
    std::vector<double> grads_;

    // forward cache
    bool cache_valid_ = false;
    std::uint64_t cached_noise_seed_ = 0;
    Tensor input_;
    std::vector<Tensor> enc_pre_, skip_, down_pre_, down_act_;
    std::vector<Tensor> bot_pre_, bot_act_;
    std::vector<Tensor> up_out_, cat_, dec_pre_, dec_act_;
    Tensor head_pre_, tanh_out_;
};

} // namespace lamino
