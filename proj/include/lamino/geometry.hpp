#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "lamino/volume.hpp"

namespace lamino {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
};

inline double deg_to_rad(double deg) {
    return deg * (3.14159265358979323846 / 180.0);
}

/// Oblique-axis laminographic scan geometry. The rotation axis is the
/// sample z-axis; the beam direction rotates around it at a fixed tilt
/// theta_deg. Detector pixels must match the voxel size (no resampling).
struct LaminoGeometry {
    double theta_deg = 61.0;
    std::vector<double> angles_deg;
    int det_nu = 0;
    int det_nv = 0;
    double det_pixel_nm = 27.2;
    double ray_step_frac = 0.5;

    int n_angles() const { return static_cast<int>(angles_deg.size()); }

    void validate() const;
};

/// N angles evenly spaced over [0, 360).
std::vector<double> evenly_spaced_angles(int n);

/// Beam direction for rotation angle phi:
/// d = (sin(theta)cos(phi), sin(theta)sin(phi), cos(theta)).
Vec3 ray_direction(double theta_deg, double phi_deg);

/// Orthonormal in-detector-plane basis, right-handed with the ray
/// direction: e_u = (-sin phi, cos phi, 0),
/// e_v = (-cos(theta)cos(phi), -cos(theta)sin(phi), sin(theta)).
std::pair<Vec3, Vec3> detector_basis(double theta_deg, double phi_deg);

/// Binary k-space mask of the double cone no projection measures.
/// Frequencies are centered (DC at index n/2) and normalized per axis
/// by 1/dim; mask is true where sqrt(kx^2+ky^2) < |kz| * cot(theta).
/// The DC bin is always false. Flat layout matches Volume (x fastest).
std::vector<std::uint8_t> missing_cone_mask(const Dims& dims,
                                            double theta_deg);

} // namespace lamino
