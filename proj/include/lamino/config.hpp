#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lamino/dipnet.hpp"
#include "lamino/phantom.hpp"
#include "lamino/solver.hpp"

namespace lamino {

/// Whole-run configuration. Plain-text file grammar: `[section]`
/// headers, `key = value` lines, `#` comments. Every key has a
/// default; CLI flags override file values.
struct RunConfig {
    // [geometry]
    double theta_deg = 61.0;
    int n_angles = 400; // dense scan
    double ray_step_frac = 0.5;
    int det_nu = 0; // 0 = fit to the volume footprint
    int det_nv = 0;

    // [phantom]
    PhantomSpec phantom;

    // [preproc]
    double hpf_sigma_px = 0.0; // 0 = hpf_sigma_frac * det_nu
    double hpf_sigma_frac = 0.125;
    bool symmetric_hpf = false;
    double jitter_sigma_px = 0.0;
    std::uint64_t jitter_seed = 99;
    bool align = false;

    // [dipnet]
    int n_stages = 2;
    std::vector<int> channels = {32, 64};
    int bottleneck = 64;
    int bottleneck_convs = 2;
    double leaky_slope = 0.1;
    double xavier_gain = 0.2;
    std::uint64_t weight_seed = 7;
    std::uint64_t noise_seed = 11;

    // [solver]
    int n_iters = 1500;
    double lr_initial = 2e-4;
    int lr_halve_after = 1000;
    double lambda_coarse = 3e-6;
    double lambda_fine = 3e-8;
    double z_split_frac = 0.70;
    bool no_hpf = false;
    bool no_tv = false;
    bool normalize_data_term = false;
    int snapshot_stride = 100;

    // [io]
    int threads = 1;

    /// Geometry for the dense scan described by this config (detector
    /// fitted to the phantom dims when det_nu/det_nv are 0).
    LaminoGeometry make_geometry() const;
    double hpf_sigma_for(int det_nu_actual) const;
    ArchConfig make_arch() const;
    SolveOptions make_solve_options(int det_nu_actual) const;
};

RunConfig parse_config_file(const std::string& path);
/// Parses from text; `origin` names the source in error messages.
RunConfig parse_config_text(const std::string& text,
                            const std::string& origin);

/// Canonical text form (fixed key order); basis of the config hash and
/// the .meta sidecars.
std::string config_to_text(const RunConfig& cfg);

/// FNV-1a over the canonical text.
std::uint64_t config_hash(const RunConfig& cfg);

std::uint64_t fnv1a64(const std::string& text);

} // namespace lamino
