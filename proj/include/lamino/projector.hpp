#pragma once

#include <vector>

#include "lamino/geometry.hpp"
#include "lamino/volume.hpp"

namespace lamino {

/// One 2D parallel-beam projection. Pixel values are line integrals in
/// units of nm * contrast; u is the fast axis: index = u + nu*v.
struct Projection {
    double phi_deg = 0.0;
    int nu = 0;
    int nv = 0;
    double pixel_nm = 1.0;
    std::vector<double> pixels;

    Projection() = default;
    Projection(double phi, int nu_, int nv_, double pix_nm)
        : phi_deg(phi), nu(nu_), nv(nv_), pixel_nm(pix_nm),
          pixels(static_cast<std::size_t>(nu_) * nv_, 0.0) {}

    double& at(int u, int v) {
        return pixels[static_cast<std::size_t>(u) +
                      static_cast<std::size_t>(nu) * v];
    }
    double at(int u, int v) const {
        return pixels[static_cast<std::size_t>(u) +
                      static_cast<std::size_t>(nu) * v];
    }
};

/// Per-angle projections, same order as the geometry's angle list.
struct ProjectionStack {
    std::vector<Projection> frames;

    int n_frames() const { return static_cast<int>(frames.size()); }
    double pixel_nm() const {
        return frames.empty() ? 0.0 : frames.front().pixel_nm;
    }
};

/// Sizes the detector so every volume corner projects inside it at
/// every rotation angle, with a small margin; pixel size = voxel size.
void fit_detector(LaminoGeometry& geom, const Dims& dims, double voxel_nm);

/// Line integrals of vol along d(phi) sampled on the detector grid.
/// Ray marching uses trilinear interpolation at steps
/// dt = ray_step_frac * voxel_nm; samples outside the volume are zero.
Projection forward_project(const Volume& vol, const LaminoGeometry& geom,
                           double phi_deg);

ProjectionStack forward_project_all(const Volume& vol,
                                    const LaminoGeometry& geom);

/// Exact numerical adjoint of forward_project_all (transpose of the
/// same interpolation and dt weighting).
Volume back_project(const ProjectionStack& stack, const LaminoGeometry& geom,
                    const Dims& dims, double voxel_nm);

/// Keeps every k-th frame (and matching angle) of a dense scan, k =
/// n_frames / n_keep. Mirrors the sparse-angle decimation protocol.
void decimate_stack(ProjectionStack& stack, LaminoGeometry& geom, int n_keep);

} // namespace lamino
