#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lamino/projector.hpp"

namespace lamino {

/// Per-frame (du, dv) detector-plane displacements in pixels.
struct ShiftTable {
    std::vector<double> du;
    std::vector<double> dv;

    int size() const { return static_cast<int>(du.size()); }
};

/// DFT of the normalized periodic Gaussian kernel on an nv x nu grid
/// (real-valued transfer; the DC bin is exactly 1).
std::vector<double> gaussian_transfer(int nu, int nv, double sigma_px);

/// HPF(y) = y - G_sigma * y with the blur applied spectrally under
/// periodic boundaries. The output has exactly zero DC.
Projection high_pass(const Projection& proj, double sigma_px);
ProjectionStack high_pass(const ProjectionStack& stack, double sigma_px);

/// Subpixel translation via a Fourier phase ramp (periodic).
Projection fourier_shift(const Projection& proj, double du_px, double dv_px);

/// Applies iid Normal(0, sigma^2) subpixel shifts to every frame;
/// returns the shifted stack and the true shifts for evaluation.
std::pair<ProjectionStack, ShiftTable>
jitter_projections(const ProjectionStack& stack, double sigma_shift_px,
                   std::uint64_t seed);

struct AlignResult {
    ProjectionStack stack;
    ShiftTable shifts; // estimated per-frame displacement, mean removed
    bool skipped_degenerate = false;
};

/// Registers each frame to the previous aligned frame by phase
/// correlation with a locally upsampled correlation peak (0.1 px
/// resolution), then removes the mean estimated drift.
AlignResult align_projections(const ProjectionStack& stack);

/// Displacement of b relative to a, quantized to 1/upsample px.
std::pair<double, double> phase_correlate(const Projection& a,
                                          const Projection& b,
                                          int upsample = 10);

} // namespace lamino
