#include "lamino/fbp.hpp"

#include <cmath>
#include <stdexcept>

#include "lamino/fft.hpp"
#include "lamino/parallel.hpp"

namespace lamino {

Projection ramp_filter(const Projection& proj, FilterWindow window) {
    const int nu = proj.nu;
    if (nu < 4)
        throw std::invalid_argument("ramp_filter: need det_nu >= 4");

    std::vector<double> filt(static_cast<std::size_t>(nu));
    for (int k = 0; k < nu; ++k) {
        const double f =
            (k <= nu / 2 ? k : k - nu) / static_cast<double>(nu);
        double h = std::abs(f);
        if (window == FilterWindow::hann)
            h *= 0.5 * (1.0 + std::cos(2.0 * 3.14159265358979323846 * f));
        filt[static_cast<std::size_t>(k)] = h;
    }

    std::vector<cplx> rows(proj.pixels.size());
    for (std::size_t i = 0; i < proj.pixels.size(); ++i)
        rows[i] = cplx(proj.pixels[i], 0.0);
    fft_1d_rows(rows.data(), proj.nv, nu, false);
    for (int v = 0; v < proj.nv; ++v)
        for (int k = 0; k < nu; ++k)
            rows[static_cast<std::size_t>(v) * nu + k] *=
                filt[static_cast<std::size_t>(k)];
    fft_1d_rows(rows.data(), proj.nv, nu, true);

    Projection out(proj.phi_deg, proj.nu, proj.nv, proj.pixel_nm);
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = rows[i].real();
    return out;
}

Volume fbp_reconstruct(const ProjectionStack& stack,
                       const LaminoGeometry& geom, const Dims& dims,
                       double voxel_nm, FilterWindow window) {
    if (stack.n_frames() == 0)
        throw std::invalid_argument("fbp: empty projection stack");
    geom.validate();

    ProjectionStack filtered;
    filtered.frames.resize(stack.frames.size());
    parallel_for(0, stack.n_frames(), [&](std::int64_t i) {
        filtered.frames[static_cast<std::size_t>(i)] =
            ramp_filter(stack.frames[static_cast<std::size_t>(i)], window);
    });

    Volume vol = back_project(filtered, geom, dims, voxel_nm);
    const double scale = 3.14159265358979323846 / geom.n_angles();
    for (double& v : vol.values)
        v *= scale;
    return vol;
}

} // namespace lamino
