#pragma once

#include "lamino/projector.hpp"

namespace lamino {

enum class FilterWindow { none, hann };

/// Ramp filter along the detector u axis: the u spectrum of each row is
/// multiplied by |f| (f in cycles/sample, optionally apodized by a Hann
/// window), leaving the v axis untouched. The filtering is periodic in
/// u, so the DC component is removed exactly and bin-frequency cosines
/// are exact eigenfunctions.
Projection ramp_filter(const Projection& proj, FilterWindow window);

/// Ramp-filtered backprojection scaled by pi / n_angles.
Volume fbp_reconstruct(const ProjectionStack& stack,
                       const LaminoGeometry& geom, const Dims& dims,
                       double voxel_nm, FilterWindow window);

} // namespace lamino
