#include "lamino/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "lamino/rng.hpp"

namespace lamino {

namespace {

struct LayerPlane {
    std::vector<std::uint8_t> occ; // nx*ny, x fastest
};

// Draws one layer of Manhattan wires: parallel tracks at the given
// pitch, each track an alternating sequence of wire and gap runs whose
// duty cycle targets the requested fill fraction.
LayerPlane draw_layer(int nx, int ny, int pitch, bool along_x,
                      double fill_frac, double mean_run, Rng& rng) {
    LayerPlane layer;
    layer.occ.assign(static_cast<std::size_t>(nx) * ny, 0);
    const int width = std::max(1, pitch / 2);
    const double duty =
        std::clamp(fill_frac * pitch / static_cast<double>(width), 0.05, 0.95);
    const int n_along = along_x ? nx : ny;
    const int n_across = along_x ? ny : nx;
    const int offset = static_cast<int>(rng.uniform_int(
        static_cast<std::uint64_t>(pitch)));

    const double mean_gap = mean_run * (1.0 - duty) / duty;
    for (int track = offset; track + width <= n_across; track += pitch) {
        int pos = 0;
        // Random phase so segments do not all start at the border.
        bool wire = rng.uniform() < duty;
        if (!wire)
            pos = 0;
        while (pos < n_along) {
            const double mean = wire ? mean_run : mean_gap;
            int run = 1 + static_cast<int>(rng.uniform(0.5, 1.5) * mean);
            run = std::min(run, n_along - pos);
            if (wire) {
                for (int a = pos; a < pos + run; ++a)
                    for (int c = track; c < track + width; ++c) {
                        const int x = along_x ? a : c;
                        const int y = along_x ? c : a;
                        layer.occ[static_cast<std::size_t>(y) * nx + x] = 1;
                    }
            }
            pos += run;
            wire = !wire;
        }
    }
    return layer;
}

double layer_occupancy(const LayerPlane& layer) {
    std::size_t n = 0;
    for (auto v : layer.occ)
        n += v;
    return static_cast<double>(n) / static_cast<double>(layer.occ.size());
}

} // namespace

void PhantomSpec::validate() const {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0)
        throw std::invalid_argument("phantom: dims must be positive");
    if (!(voxel_nm > 0.0))
        throw std::invalid_argument("phantom: voxel_nm must be positive");
    if (!(z_split_frac > 0.0 && z_split_frac < 1.0))
        throw std::invalid_argument("phantom: z_split_frac must be in (0, 1)");
    if (coarse_pitch_px < 2 || fine_pitch_px < 2)
        throw std::invalid_argument("phantom: pitches must be >= 2 px");
    if (!(fill_frac >= 0.0 && fill_frac < 1.0))
        throw std::invalid_argument("phantom: fill_frac must be in [0, 1)");
    if (n_layers < 1)
        throw std::invalid_argument("phantom: n_layers must be >= 1");
    if (!(via_density >= 0.0 && via_density <= 1.0))
        throw std::invalid_argument("phantom: via_density must be in [0, 1]");
    if (dims.nz < 2 * n_layers)
        throw std::invalid_argument(
            "phantom: dims too small to host " + std::to_string(n_layers) +
            " layers; need nz >= " + std::to_string(2 * n_layers) + ", got " +
            std::to_string(dims.nz));
    const int max_pitch = std::max(coarse_pitch_px, fine_pitch_px);
    if (dims.nx < max_pitch || dims.ny < max_pitch)
        throw std::invalid_argument(
            "phantom: lateral dims too small for pitch " +
            std::to_string(max_pitch));
}

Volume generate_ic_phantom(const PhantomSpec& spec, PhantomLayout* layout) {
    spec.validate();
    const int nx = spec.dims.nx, ny = spec.dims.ny, nz = spec.dims.nz;

    Volume vol(spec.dims, spec.voxel_nm, 0.0);

    PhantomLayout local;
    PhantomLayout& lay = layout ? *layout : local;
    lay = PhantomLayout{};

    const int z_split = static_cast<int>(spec.z_split_frac * nz);
    std::vector<LayerPlane> planes;
    planes.reserve(static_cast<std::size_t>(spec.n_layers));

    for (int i = 0; i < spec.n_layers; ++i) {
        const int z = static_cast<int>((i + 0.5) * nz / spec.n_layers);
        const bool fine = z >= z_split;
        const int pitch = fine ? spec.fine_pitch_px : spec.coarse_pitch_px;
        const bool along_x = (i % 2 == 0);
        const double mean_run = 3.0 * pitch;

        // Per-layer sub-seed; the retry count below stays inside the
        // layer's own stream so layers remain independent.
        Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
        LayerPlane plane =
            draw_layer(nx, ny, pitch, along_x, spec.fill_frac, mean_run, rng);
        for (int attempt = 0;
             attempt < 20 && spec.fill_frac > 0.0 &&
             std::abs(layer_occupancy(plane) - spec.fill_frac) > 0.08;
             ++attempt)
            plane = draw_layer(nx, ny, pitch, along_x, spec.fill_frac,
                               mean_run, rng);

        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x)
                if (plane.occ[static_cast<std::size_t>(y) * nx + x])
                    vol.at(x, y, z) = kContrastBound;

        planes.push_back(std::move(plane));
        lay.layer_z.push_back(z);
        lay.layer_pitch.push_back(pitch);
        lay.layer_is_fine.push_back(fine ? 1 : 0);
        lay.layer_along_x.push_back(along_x ? 1 : 0);
    }

    // Via columns at randomly selected crossings of adjacent layers.
    Rng via_rng(derive_seed(spec.seed, 0x5649414cULL));
    for (int i = 0; i + 1 < spec.n_layers; ++i) {
        const int z0 = lay.layer_z[static_cast<std::size_t>(i)];
        const int z1 = lay.layer_z[static_cast<std::size_t>(i + 1)];
        for (int y = 0; y + 1 < ny; ++y) {
            for (int x = 0; x + 1 < nx; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * nx + x;
                if (!planes[static_cast<std::size_t>(i)].occ[p] ||
                    !planes[static_cast<std::size_t>(i + 1)].occ[p])
                    continue;
                if (via_rng.uniform() >= spec.via_density)
                    continue;
                const int size = via_rng.uniform() < 0.5 ? 1 : 2;
                for (int z = z0; z <= z1; ++z)
                    for (int dy = 0; dy < size; ++dy)
                        for (int dx = 0; dx < size; ++dx)
                            vol.at(x + dx, y + dy, z) = kContrastBound;
                lay.vias.push_back({x, y, size, z0, z1});
            }
        }
    }

    return vol;
}

Volume occupancy_mask(const Volume& vol) {
    Volume mask(vol.dims, vol.voxel_nm, 0.0);
    const double thr = kContrastBound / 2.0;
    for (std::size_t i = 0; i < vol.values.size(); ++i)
        mask.values[i] = vol.values[i] > thr ? 1.0 : 0.0;
    return mask;
}

} // namespace lamino
