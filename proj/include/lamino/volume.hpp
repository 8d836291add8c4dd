#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lamino {

/// Material contrast of an occupied voxel; also the bound of the
/// network's representable output range [-0.03, 0.03].
inline constexpr double kContrastBound = 0.03;

struct Dims {
    int nx = 0;
    int ny = 0;
    int nz = 0;

    std::int64_t count() const {
        return static_cast<std::int64_t>(nx) * ny * nz;
    }
    bool operator==(const Dims&) const = default;
};

/// 3D scalar field of material contrast. Values are stored x-fastest:
/// index = x + nx*(y + ny*z).
struct Volume {
    Dims dims;
    double voxel_nm = 1.0;
    std::vector<double> values;

    Volume() = default;
    Volume(Dims d, double vox_nm, double fill = 0.0)
        : dims(d), voxel_nm(vox_nm),
          values(static_cast<std::size_t>(d.count()), fill) {
        if (d.nx <= 0 || d.ny <= 0 || d.nz <= 0)
            throw std::invalid_argument("Volume: dims must be positive");
        if (vox_nm <= 0.0)
            throw std::invalid_argument("Volume: voxel_nm must be positive");
    }

    double& at(int x, int y, int z) {
        return values[static_cast<std::size_t>(x) +
                      static_cast<std::size_t>(dims.nx) *
                          (static_cast<std::size_t>(y) +
                           static_cast<std::size_t>(dims.ny) * z)];
    }
    double at(int x, int y, int z) const {
        return values[static_cast<std::size_t>(x) +
                      static_cast<std::size_t>(dims.nx) *
                          (static_cast<std::size_t>(y) +
                           static_cast<std::size_t>(dims.ny) * z)];
    }

    std::size_t size() const { return values.size(); }
};

inline std::string dims_to_string(const Dims& d) {
    return std::to_string(d.nx) + "x" + std::to_string(d.ny) + "x" +
           std::to_string(d.nz);
}

} // namespace lamino
