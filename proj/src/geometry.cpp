#include "lamino/geometry.hpp"

#include <stdexcept>
#include <string>

namespace lamino {

void LaminoGeometry::validate() const {
    if (!(theta_deg > 0.0) || theta_deg > 90.0)
        throw std::invalid_argument("geometry: theta_deg must be in (0, 90]");
    if (angles_deg.empty())
        throw std::invalid_argument("geometry: angle list is empty");
    for (std::size_t i = 0; i < angles_deg.size(); ++i) {
        const double a = angles_deg[i];
        if (a < 0.0 || a >= 360.0)
            throw std::invalid_argument("geometry: angle " +
                                        std::to_string(a) +
                                        " outside [0, 360)");
        if (i > 0 && !(angles_deg[i - 1] < a))
            throw std::invalid_argument(
                "geometry: angles must be strictly increasing");
    }
    if (det_nu <= 0 || det_nv <= 0)
        throw std::invalid_argument("geometry: detector dims must be positive");
    if (!(det_pixel_nm > 0.0))
        throw std::invalid_argument("geometry: det_pixel_nm must be positive");
    if (!(ray_step_frac > 0.0) || ray_step_frac > 1.0)
        throw std::invalid_argument("geometry: ray_step_frac must be in (0, 1]");
}

std::vector<double> evenly_spaced_angles(int n) {
    if (n <= 0)
        throw std::invalid_argument("angle count must be positive");
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = 360.0 * i / n;
    return out;
}

Vec3 ray_direction(double theta_deg, double phi_deg) {
    const double th = deg_to_rad(theta_deg);
    const double ph = deg_to_rad(phi_deg);
    return {std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph),
            std::cos(th)};
}

std::pair<Vec3, Vec3> detector_basis(double theta_deg, double phi_deg) {
    const double th = deg_to_rad(theta_deg);
    const double ph = deg_to_rad(phi_deg);
    const Vec3 e_u{-std::sin(ph), std::cos(ph), 0.0};
    const Vec3 e_v{-std::cos(th) * std::cos(ph), -std::cos(th) * std::sin(ph),
                   std::sin(th)};
    return {e_u, e_v};
}

std::vector<std::uint8_t> missing_cone_mask(const Dims& dims,
                                            double theta_deg) {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0)
        throw std::invalid_argument("missing_cone_mask: dims must be positive");
    if (theta_deg == 0.0)
        throw std::invalid_argument(
            "missing_cone_mask: theta_deg = 0 leaves the whole spectrum unmeasured");
    const double cot = theta_deg == 90.0
                           ? 0.0
                           : std::cos(deg_to_rad(theta_deg)) /
                                 std::sin(deg_to_rad(theta_deg));
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(dims.count()), 0);
    const int cx = dims.nx / 2, cy = dims.ny / 2, cz = dims.nz / 2;
    std::size_t idx = 0;
    for (int z = 0; z < dims.nz; ++z) {
        const double kz = static_cast<double>(z - cz) / dims.nz;
        for (int y = 0; y < dims.ny; ++y) {
            const double ky = static_cast<double>(y - cy) / dims.ny;
            for (int x = 0; x < dims.nx; ++x, ++idx) {
                const double kx = static_cast<double>(x - cx) / dims.nx;
                if (kx == 0.0 && ky == 0.0 && kz == 0.0)
                    continue; // DC
                const double lateral = std::sqrt(kx * kx + ky * ky);
                if (lateral < std::abs(kz) * cot)
                    mask[idx] = 1;
            }
        }
    }
    return mask;
}

} // namespace lamino
