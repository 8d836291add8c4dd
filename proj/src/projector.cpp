#include "lamino/projector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "lamino/parallel.hpp"

namespace lamino {

namespace {

constexpr double kPixelMatchTol = 1e-12;

// Shared ray-sampling grid: t_m = t_start + m*dt, fixed per
// (dims, voxel, step) so forward and adjoint visit identical samples.
struct RayGrid {
    double t_start = 0.0;
    double dt = 0.0;
    int n_steps = 0;
};

RayGrid make_ray_grid(const Dims& dims, double voxel_nm,
                      double ray_step_frac) {
    RayGrid g;
    g.dt = ray_step_frac * voxel_nm;
    const double half_diag =
        0.5 * voxel_nm *
        std::sqrt(static_cast<double>(dims.nx) * dims.nx +
                  static_cast<double>(dims.ny) * dims.ny +
                  static_cast<double>(dims.nz) * dims.nz);
    const double reach = half_diag + voxel_nm;
    g.n_steps = static_cast<int>(std::ceil(2.0 * reach / g.dt));
    g.t_start = -reach + 0.5 * g.dt;
    return g;
}

// Clips the step range [0, n_steps) against the trilinear support box
// [-1, dim] per axis. Samples outside the box have zero weight, so the
// extra +-1 safety steps keep the operator exact.
void clip_steps(double s, double d, double lo, double hi, double& m_lo,
                double& m_hi) {
    if (std::abs(d) < 1e-300) {
        if (s < lo || s > hi) {
            m_lo = 1.0;
            m_hi = 0.0;
        }
        return;
    }
    double a = (lo - s) / d;
    double b = (hi - s) / d;
    if (a > b)
        std::swap(a, b);
    m_lo = std::max(m_lo, a);
    m_hi = std::min(m_hi, b);
}

// Visits the 8 trilinear corners of each in-range sample along one ray.
// visit(flat_index, weight) must be side-effect free w.r.t. the loop.
template <class F>
void march_ray(const Dims& dims, const Vec3& start_idx, const Vec3& step_idx,
               int n_steps, F&& visit) {
    double m_lo = 0.0;
    double m_hi = static_cast<double>(n_steps - 1);
    clip_steps(start_idx.x, step_idx.x, -1.0, static_cast<double>(dims.nx),
               m_lo, m_hi);
    clip_steps(start_idx.y, step_idx.y, -1.0, static_cast<double>(dims.ny),
               m_lo, m_hi);
    clip_steps(start_idx.z, step_idx.z, -1.0, static_cast<double>(dims.nz),
               m_lo, m_hi);
    if (m_lo > m_hi)
        return;
    const int m0 = std::max(0, static_cast<int>(std::floor(m_lo)) - 1);
    const int m1 = std::min(n_steps - 1, static_cast<int>(std::ceil(m_hi)) + 1);

    const std::int64_t sx = 1;
    const std::int64_t sy = dims.nx;
    const std::int64_t sz = static_cast<std::int64_t>(dims.nx) * dims.ny;

    double gx = start_idx.x + m0 * step_idx.x;
    double gy = start_idx.y + m0 * step_idx.y;
    double gz = start_idx.z + m0 * step_idx.z;
    for (int m = m0; m <= m1; ++m) {
        const int ix = static_cast<int>(std::floor(gx));
        const int iy = static_cast<int>(std::floor(gy));
        const int iz = static_cast<int>(std::floor(gz));
        const double fx = gx - ix, fy = gy - iy, fz = gz - iz;

        const bool x0 = ix >= 0 && ix < dims.nx;
        const bool x1 = ix + 1 >= 0 && ix + 1 < dims.nx;
        const bool y0 = iy >= 0 && iy < dims.ny;
        const bool y1 = iy + 1 >= 0 && iy + 1 < dims.ny;
        const bool z0 = iz >= 0 && iz < dims.nz;
        const bool z1 = iz + 1 >= 0 && iz + 1 < dims.nz;

        if ((x0 || x1) && (y0 || y1) && (z0 || z1)) {
            const std::int64_t base = ix * sx + iy * sy + iz * sz;
            const double wx0 = 1.0 - fx, wy0 = 1.0 - fy, wz0 = 1.0 - fz;
            if (z0) {
                if (y0) {
                    if (x0) visit(base, wx0 * wy0 * wz0);
                    if (x1) visit(base + sx, fx * wy0 * wz0);
                }
                if (y1) {
                    if (x0) visit(base + sy, wx0 * fy * wz0);
                    if (x1) visit(base + sy + sx, fx * fy * wz0);
                }
            }
            if (z1) {
                if (y0) {
                    if (x0) visit(base + sz, wx0 * wy0 * fz);
                    if (x1) visit(base + sz + sx, fx * wy0 * fz);
                }
                if (y1) {
                    if (x0) visit(base + sz + sy, wx0 * fy * fz);
                    if (x1) visit(base + sz + sy + sx, fx * fy * fz);
                }
            }
        }
        gx += step_idx.x;
        gy += step_idx.y;
        gz += step_idx.z;
    }
}

void check_pixel_match(double pixel_nm, double voxel_nm) {
    if (std::abs(pixel_nm - voxel_nm) > kPixelMatchTol * voxel_nm)
        throw std::invalid_argument(
            "projector: pixel_nm (" + std::to_string(pixel_nm) +
            ") must equal voxel_nm (" + std::to_string(voxel_nm) +
            "); this toolkit does not resample");
}

void check_stack(const ProjectionStack& stack, const LaminoGeometry& geom) {
    if (stack.n_frames() != geom.n_angles())
        throw std::invalid_argument(
            "projector: stack has " + std::to_string(stack.n_frames()) +
            " frames but geometry lists " + std::to_string(geom.n_angles()) +
            " angles");
    for (int i = 0; i < stack.n_frames(); ++i) {
        const Projection& p = stack.frames[static_cast<std::size_t>(i)];
        if (p.nu != geom.det_nu || p.nv != geom.det_nv)
            throw std::invalid_argument("projector: frame " +
                                        std::to_string(i) +
                                        " detector dims mismatch");
        if (p.phi_deg != geom.angles_deg[static_cast<std::size_t>(i)])
            throw std::invalid_argument("projector: frame " +
                                        std::to_string(i) +
                                        " angle mismatch with geometry");
    }
}

// One angle of the adjoint, accumulating into vol.
void back_project_one(const Projection& proj, const LaminoGeometry& geom,
                      const Dims& dims, double voxel_nm, Volume& vol) {
    const Vec3 d = ray_direction(geom.theta_deg, proj.phi_deg);
    const auto [e_u, e_v] = detector_basis(geom.theta_deg, proj.phi_deg);
    const RayGrid grid = make_ray_grid(dims, voxel_nm, geom.ray_step_frac);
    const double inv_vox = 1.0 / voxel_nm;
    const Vec3 step = d * (grid.dt * inv_vox);
    const Vec3 ctr{0.5 * (dims.nx - 1), 0.5 * (dims.ny - 1),
                   0.5 * (dims.nz - 1)};
    double* out = vol.values.data();

    for (int iv = 0; iv < proj.nv; ++iv) {
        const double v_nm = (iv - 0.5 * (proj.nv - 1)) * proj.pixel_nm;
        for (int iu = 0; iu < proj.nu; ++iu) {
            const double val = proj.at(iu, iv) * grid.dt;
            if (val == 0.0)
                continue;
            const double u_nm = (iu - 0.5 * (proj.nu - 1)) * proj.pixel_nm;
            const Vec3 p0 = e_u * u_nm + e_v * v_nm + d * grid.t_start;
            const Vec3 start = p0 * inv_vox + ctr;
            march_ray(dims, start, step, grid.n_steps,
                      [out, val](std::int64_t idx, double w) {
                          out[idx] += val * w;
                      });
        }
    }
}

} // namespace

void fit_detector(LaminoGeometry& geom, const Dims& dims, double voxel_nm) {
    const double th = deg_to_rad(geom.theta_deg);
    const double hx = 0.5 * dims.nx * voxel_nm;
    const double hy = 0.5 * dims.ny * voxel_nm;
    const double hz = 0.5 * dims.nz * voxel_nm;
    const double lateral = std::sqrt(hx * hx + hy * hy);
    const double max_u = lateral;
    const double max_v = std::abs(std::cos(th)) * lateral + std::sin(th) * hz;
    geom.det_pixel_nm = voxel_nm;
    geom.det_nu = 2 * static_cast<int>(std::ceil(max_u / voxel_nm)) + 4;
    geom.det_nv = 2 * static_cast<int>(std::ceil(max_v / voxel_nm)) + 4;
}

Projection forward_project(const Volume& vol, const LaminoGeometry& geom,
                           double phi_deg) {
    check_pixel_match(geom.det_pixel_nm, vol.voxel_nm);
    Projection proj(phi_deg, geom.det_nu, geom.det_nv, geom.det_pixel_nm);

    const Vec3 d = ray_direction(geom.theta_deg, phi_deg);
    const auto [e_u, e_v] = detector_basis(geom.theta_deg, phi_deg);
    const RayGrid grid = make_ray_grid(vol.dims, vol.voxel_nm,
                                       geom.ray_step_frac);
    const double inv_vox = 1.0 / vol.voxel_nm;
    const Vec3 step = d * (grid.dt * inv_vox);
    const Vec3 ctr{0.5 * (vol.dims.nx - 1), 0.5 * (vol.dims.ny - 1),
                   0.5 * (vol.dims.nz - 1)};
    const double* data = vol.values.data();
    const Dims dims = vol.dims;

    parallel_for(0, proj.nv, [&](std::int64_t iv) {
        const double v_nm = (iv - 0.5 * (proj.nv - 1)) * proj.pixel_nm;
        for (int iu = 0; iu < proj.nu; ++iu) {
            const double u_nm = (iu - 0.5 * (proj.nu - 1)) * proj.pixel_nm;
            const Vec3 p0 = e_u * u_nm + e_v * v_nm + d * grid.t_start;
            const Vec3 start = p0 * inv_vox + ctr;
            double acc = 0.0;
            march_ray(dims, start, step, grid.n_steps,
                      [data, &acc](std::int64_t idx, double w) {
                          acc += w * data[idx];
                      });
            proj.at(iu, static_cast<int>(iv)) = acc * grid.dt;
        }
    });
    return proj;
}

ProjectionStack forward_project_all(const Volume& vol,
                                    const LaminoGeometry& geom) {
    geom.validate();
    ProjectionStack stack;
    stack.frames.resize(static_cast<std::size_t>(geom.n_angles()));
    // Frames are independent; forward_project parallelizes internally,
    // so the angle loop stays sequential to bound memory.
    for (int i = 0; i < geom.n_angles(); ++i)
        stack.frames[static_cast<std::size_t>(i)] =
            forward_project(vol, geom, geom.angles_deg[static_cast<std::size_t>(i)]);
    return stack;
}

Volume back_project(const ProjectionStack& stack, const LaminoGeometry& geom,
                    const Dims& dims, double voxel_nm) {
    geom.validate();
    check_stack(stack, geom);
    check_pixel_match(stack.pixel_nm(), voxel_nm);

    Volume vol(dims, voxel_nm, 0.0);
    const int n = stack.n_frames();
    const int workers = std::min(num_threads(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i)
            back_project_one(stack.frames[static_cast<std::size_t>(i)], geom,
                             dims, voxel_nm, vol);
        return vol;
    }

    // Per-angle partial volumes, reduced in angle order: the result is
    // identical for every worker count.
    for (int block = 0; block < n; block += workers) {
        const int count = std::min(workers, n - block);
        std::vector<Volume> partials(static_cast<std::size_t>(count),
                                     Volume(dims, voxel_nm, 0.0));
        parallel_for(0, count, [&](std::int64_t j) {
            back_project_one(
                stack.frames[static_cast<std::size_t>(block + j)], geom, dims,
                voxel_nm, partials[static_cast<std::size_t>(j)]);
        });
        for (int j = 0; j < count; ++j) {
            const auto& part = partials[static_cast<std::size_t>(j)].values;
            for (std::size_t k = 0; k < vol.values.size(); ++k)
                vol.values[k] += part[k];
        }
    }
    return vol;
}

void decimate_stack(ProjectionStack& stack, LaminoGeometry& geom, int n_keep) {
    const int n = stack.n_frames();
    if (n_keep <= 0 || n_keep > n)
        throw std::invalid_argument("decimate: requested " +
                                    std::to_string(n_keep) + " of " +
                                    std::to_string(n) + " frames");
    if (n % n_keep != 0)
        throw std::invalid_argument(
            "decimate: " + std::to_string(n_keep) +
            " does not evenly divide the dense scan of " + std::to_string(n));
    const int k = n / n_keep;
    ProjectionStack kept;
    std::vector<double> angles;
    for (int i = 0; i < n; i += k) {
        kept.frames.push_back(stack.frames[static_cast<std::size_t>(i)]);
        angles.push_back(geom.angles_deg[static_cast<std::size_t>(i)]);
    }
    stack = std::move(kept);
    geom.angles_deg = std::move(angles);
}

} // namespace lamino
