#pragma once

#include <cstdint>
#include <vector>

#include "lamino/volume.hpp"

namespace lamino {

/// Synthetic multi-layer IC phantom: planar Manhattan wiring, coarse
/// pitch below the depth split and fine pitch above it, with vertical
/// via columns between adjacent layers. Values are exactly {0, 0.03}.
struct PhantomSpec {
    std::uint64_t seed = 1;
    Dims dims{64, 64, 32};
    double voxel_nm = 27.2;
    double z_split_frac = 0.70; // below: coarse regime, above: fine
    int coarse_pitch_px = 8;
    int fine_pitch_px = 4;
    double fill_frac = 0.25; // target per-layer occupancy
    int n_layers = 7;
    double via_density = 0.05; // fraction of layer crossings connected

    void validate() const;
};

struct ViaColumn {
    int x = 0, y = 0;
    int size_px = 1; // 1 or 2
    int z0 = 0, z1 = 0; // inclusive
};

struct PhantomLayout {
    std::vector<int> layer_z;
    std::vector<int> layer_pitch;
    std::vector<std::uint8_t> layer_is_fine;
    std::vector<std::uint8_t> layer_along_x;
    std::vector<ViaColumn> vias;
};

Volume generate_ic_phantom(const PhantomSpec& spec,
                           PhantomLayout* layout = nullptr);

/// True (1.0) where value > kContrastBound / 2.
Volume occupancy_mask(const Volume& vol);

} // namespace lamino
