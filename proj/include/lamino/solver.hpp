#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lamino/dipnet.hpp"
#include "lamino/projector.hpp"

namespace lamino {

/// Depth-dependent TV weight: lambda_coarse below the z split,
/// lambda_fine above it.
struct LambdaMap {
    double z_split_frac = 0.70;
    double lambda_coarse = 3e-6;
    double lambda_fine = 3e-8;

    double at(int z_index, int nz) const {
        return static_cast<double>(z_index) < z_split_frac * nz
                   ? lambda_coarse
                   : lambda_fine;
    }
    void validate() const;
};

/// Smoothed isotropic TV: sum over voxels of
/// lambda(z) * sqrt(dx^2 + dy^2 + dz^2 + eps^2), forward differences
/// with replicate boundary (last-slice differences are zero),
/// eps = 1e-8. Returns the value and its exact gradient.
std::pair<double, Volume> tv_value_grad(const Volume& vol,
                                        const LambdaMap& lmap);

struct LossConfig {
    bool no_hpf = false;
    bool no_tv = false;
    bool symmetric_hpf = false;
    bool normalize_data_term = false; // divide data term by N * n_pixels
    double hpf_sigma_px = 8.0;
    LambdaMap lambda;
};

/// Measurement-side target: HPF(y_n), or raw y_n when ablated. Computed
/// once per run since the measurements are fixed.
ProjectionStack prepare_targets(const ProjectionStack& y,
                                const LossConfig& cfg);

struct LossParts {
    double total = 0.0;
    double data_term = 0.0;
    double tv_term = 0.0;
};

/// Loss 0.5 * sum_n ||H_n x - y~_n||^2 + TV(x) with x = T_w(z), and its
/// exact gradient w.r.t. the network parameters (left in net.grads()).
/// targets must come from prepare_targets. x_out receives the current
/// volume. Throws on non-finite loss (divergence signal).
LossParts loss_and_grad(DipNetwork& net, const NoiseInput& z,
                        const ProjectionStack& targets,
                        const LaminoGeometry& geom, const LossConfig& cfg,
                        Volume* x_out);

/// Bias-corrected Adam; the learning rate is halved after halve_after
/// steps.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr_initial = 2e-4;
    int halve_after = 1000;
    long t = 0;
    std::vector<double> m, v;

    double lr_at(long step) const {
        return step <= halve_after ? lr_initial : 0.5 * lr_initial;
    }
};

void adam_step(AdamState& state, std::vector<double>& params,
               const std::vector<double>& grads);

struct TraceRow {
    int iter = 0;
    double data_term = 0.0;
    double tv_term = 0.0;
    double total = 0.0;
};

struct SolveOptions {
    int n_iters = 1500;
    std::uint64_t weight_seed = 7;
    std::uint64_t noise_seed = 11;
    int snapshot_stride = 100; // 0 disables snapshots
    ArchConfig arch;
    LossConfig loss;
    AdamState adam; // template: schedule and betas; moments sized here
};

struct SolveResult {
    Volume volume;
    std::vector<TraceRow> trace;
    std::vector<std::pair<int, Volume>> snapshots;
    std::vector<double> final_params;
    bool aborted = false;
    std::string abort_reason;
};

/// Fits the generator to the measurements by minimizing the loss for
/// n_iters Adam steps. Deterministic given the seeds (bit-exact in
/// single-thread mode). On divergence the last finite volume and the
/// partial trace are preserved.
SolveResult reconstruct(const ProjectionStack& y, const LaminoGeometry& geom,
                        const Dims& vol_dims, double voxel_nm,
                        const SolveOptions& opt);

} // namespace lamino
