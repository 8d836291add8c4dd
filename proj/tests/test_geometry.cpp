#include <doctest.h>

#include <cmath>

#include "lamino/geometry.hpp"
#include "lamino/rng.hpp"

using namespace lamino;

TEST_CASE("ray direction matches the oblique-axis convention") {
    const Vec3 d = ray_direction(61.0, 0.0);
    CHECK(d.x == doctest::Approx(0.87462).epsilon(1e-5));
    CHECK(d.y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(d.z == doctest::Approx(0.48481).epsilon(1e-5));

    const Vec3 axial = ray_direction(0.0, 123.0);
    CHECK(axial.x == doctest::Approx(0.0));
    CHECK(axial.y == doctest::Approx(0.0));
    CHECK(axial.z == doctest::Approx(1.0));

    const Vec3 d90 = ray_direction(61.0, 90.0);
    CHECK(d90.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(d90.y == doctest::Approx(0.87462).epsilon(1e-5));
    CHECK(d90.z == doctest::Approx(0.48481).epsilon(1e-5));
}

TEST_CASE("ray direction is unit norm for random angles") {
    Rng rng(42);
    for (int i = 0; i < 200; ++i) {
        const double theta = rng.uniform(1.0, 90.0);
        const double phi = rng.uniform(0.0, 360.0);
        CHECK(std::abs(ray_direction(theta, phi).norm() - 1.0) < 1e-12);
    }
}

TEST_CASE("detector basis values and orthonormality") {
    const auto [e_u, e_v] = detector_basis(61.0, 0.0);
    CHECK(e_u.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(e_u.y == doctest::Approx(1.0));
    CHECK(e_u.z == doctest::Approx(0.0));
    CHECK(e_v.x == doctest::Approx(-0.48481).epsilon(1e-5));
    CHECK(e_v.y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(e_v.z == doctest::Approx(0.87462).epsilon(1e-5));

    Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        const double theta = rng.uniform(1.0, 90.0);
        const double phi = rng.uniform(0.0, 360.0);
        const Vec3 d = ray_direction(theta, phi);
        const auto [u, v] = detector_basis(theta, phi);
        CHECK(std::abs(u.dot(d)) < 1e-12);
        CHECK(std::abs(v.dot(d)) < 1e-12);
        CHECK(std::abs(u.dot(v)) < 1e-12);
        CHECK(std::abs(u.norm() - 1.0) < 1e-12);
        CHECK(std::abs(v.norm() - 1.0) < 1e-12);
        // right-handed: e_u x e_v = d
        const Vec3 c = u.cross(v);
        CHECK(std::abs(c.x - d.x) < 1e-12);
        CHECK(std::abs(c.y - d.y) < 1e-12);
        CHECK(std::abs(c.z - d.z) < 1e-12);
    }

    // classic tomography limit: v along the rotation axis
    const auto [u90, v90] = detector_basis(90.0, 0.0);
    CHECK(v90.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v90.y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v90.z == doctest::Approx(1.0));
    CHECK(u90.y == doctest::Approx(1.0));
}

TEST_CASE("missing cone mask basics") {
    const Dims dims{16, 16, 16};

    SUBCASE("theta 90 leaves nothing missing") {
        const auto mask = missing_cone_mask(dims, 90.0);
        for (auto m : mask)
            CHECK(m == 0);
    }

    SUBCASE("axial frequencies are inside the cone at theta 61") {
        const auto mask = missing_cone_mask(dims, 61.0);
        const int cx = 8, cy = 8;
        for (int z = 0; z < 16; ++z) {
            const std::size_t idx =
                static_cast<std::size_t>(cx) +
                16 * (static_cast<std::size_t>(cy) +
                      16 * static_cast<std::size_t>(z));
            if (z == 8)
                CHECK(mask[idx] == 0); // DC excluded
            else
                CHECK(mask[idx] == 1);
        }
    }

    SUBCASE("theta 0 rejected") {
        CHECK_THROWS_AS(missing_cone_mask(dims, 0.0), std::invalid_argument);
    }
}

TEST_CASE("missing cone fraction matches the solid-angle estimate") {
    // Within the Nyquist ball |k| <= 0.5 the masked fraction equals the
    // double-cone solid-angle fraction 1 - cos(29 deg) ~ 0.1254; over
    // the full cube grid it equals the cone/cube volume ratio
    // pi cot^2(theta) / 12 ~ 0.0804. Both checked by brute-force count.
    const int n = 64;
    const Dims dims{n, n, n};
    const auto mask = missing_cone_mask(dims, 61.0);
    std::size_t cube_masked = 0, ball_total = 0, ball_masked = 0;
    std::size_t idx = 0;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x, ++idx) {
                const double kx = static_cast<double>(x - n / 2) / n;
                const double ky = static_cast<double>(y - n / 2) / n;
                const double kz = static_cast<double>(z - n / 2) / n;
                cube_masked += mask[idx];
                if (kx * kx + ky * ky + kz * kz <= 0.25) {
                    ++ball_total;
                    ball_masked += mask[idx];
                }
            }
    const double ball_frac =
        static_cast<double>(ball_masked) / static_cast<double>(ball_total);
    const double solid_angle = 1.0 - std::cos(deg_to_rad(29.0));
    CHECK(ball_frac > 0.9 * solid_angle);
    CHECK(ball_frac < 1.1 * solid_angle);

    const double cube_frac =
        static_cast<double>(cube_masked) / static_cast<double>(mask.size());
    const double cot = 1.0 / std::tan(deg_to_rad(61.0));
    const double cone_volume = M_PI * cot * cot / 12.0;
    CHECK(cube_frac > 0.9 * cone_volume);
    CHECK(cube_frac < 1.1 * cone_volume);
}

TEST_CASE("mask symmetry under k -> -k") {
    const Dims dims{12, 10, 8};
    const auto mask = missing_cone_mask(dims, 61.0);
    const int cx = 6, cy = 5, cz = 4;
    for (int z = 0; z < dims.nz; ++z)
        for (int y = 0; y < dims.ny; ++y)
            for (int x = 0; x < dims.nx; ++x) {
                const int mx = 2 * cx - x, my = 2 * cy - y, mz = 2 * cz - z;
                if (mx < 0 || mx >= dims.nx || my < 0 || my >= dims.ny ||
                    mz < 0 || mz >= dims.nz)
                    continue;
                const auto at = [&](int a, int b, int c) {
                    return mask[static_cast<std::size_t>(a) +
                                static_cast<std::size_t>(dims.nx) *
                                    (static_cast<std::size_t>(b) +
                                     static_cast<std::size_t>(dims.ny) * c)];
                };
                CHECK(at(x, y, z) == at(mx, my, mz));
            }
}

TEST_CASE("non-masked frequencies are covered by some view") {
    // For every measurable k there must be a rotation angle phi with
    // k . d(phi) ~ 0 (Fourier-slice coverage). 17^3 grid, 720 angles.
    const int n = 17;
    const int c = n / 2;
    const double theta = 61.0;
    const auto mask = missing_cone_mask({n, n, n}, theta);

    std::vector<Vec3> dirs;
    for (int a = 0; a < 720; ++a)
        dirs.push_back(ray_direction(theta, a * 0.5));

    const double dphi = deg_to_rad(0.5);
    const double sin_th = std::sin(deg_to_rad(theta));
    std::size_t idx = 0;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x, ++idx) {
                if (mask[idx])
                    continue;
                const double kx = static_cast<double>(x - c) / n;
                const double ky = static_cast<double>(y - c) / n;
                const double kz = static_cast<double>(z - c) / n;
                if (kx == 0.0 && ky == 0.0 && kz == 0.0)
                    continue;
                const Vec3 k{kx, ky, kz};
                double best = 1e300;
                for (const Vec3& d : dirs)
                    best = std::min(best, std::abs(k.dot(d)));
                const double rho = std::sqrt(kx * kx + ky * ky);
                const double bound = sin_th * rho * dphi * 0.5 + 1e-12;
                CHECK(best <= bound);
            }
}

TEST_CASE("geometry validation rejects bad inputs") {
    LaminoGeometry geom;
    geom.theta_deg = 61.0;
    geom.angles_deg = {0.0, 90.0, 180.0};
    geom.det_nu = 8;
    geom.det_nv = 8;
    CHECK_NOTHROW(geom.validate());

    LaminoGeometry bad = geom;
    bad.theta_deg = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = geom;
    bad.angles_deg = {0.0, 90.0, 90.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = geom;
    bad.angles_deg = {0.0, 360.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = geom;
    bad.ray_step_frac = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
