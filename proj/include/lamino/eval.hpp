#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "lamino/volume.hpp"

namespace lamino {

struct GmmFit {
    double w0 = 0.5, mu0 = 0.0, var0 = 1.0; // lower-mean component
    double w1 = 0.5, mu1 = 0.0, var1 = 1.0; // higher-mean component
    double threshold = 0.0; // equal-posterior point between the means
    int iterations = 0;
    double log_likelihood = 0.0;
};

/// Two-component 1D Gaussian-mixture EM over all voxel values; means
/// initialized at the 10th/90th percentiles, equal weights, variances
/// at the global variance. Foreground is the higher-mean component;
/// the binary volume is value > threshold.
std::pair<Volume, GmmFit> binarize_em(const Volume& vol);

/// Inclusive-exclusive z-index range [z0, z1).
struct ZRange {
    int z0 = 0;
    int z1 = 0;
};

ZRange z_range_all(int nz);
/// Fine-feature preset: z-index >= 0.70 * nz.
ZRange z_range_fine(int nz);

/// Fraction of voxels in the z range where the binary volumes disagree.
double ber(const Volume& a, const Volume& b, const ZRange& range);

/// Pearson correlation of raw voxel values over the z range.
double pcc(const Volume& a, const Volume& b, const ZRange& range);

/// Centered power spectral density |DFT(vol)|^2, DC at the grid center.
Volume psd(const Volume& vol);

/// Fraction of non-DC spectral energy inside the missing cone.
double cone_energy_ratio(const Volume& spectrum, double theta_deg);

struct MetricsRecord {
    double ber_all = 0.0;
    double ber_fine = 0.0;
    double pcc_all = 0.0;
    double cone_energy_ratio = 0.0;
    std::uint64_t config_hash = 0;
    std::string loss_trace_path;
};

} // namespace lamino
