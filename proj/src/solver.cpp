#include "lamino/solver.hpp"

#include <cmath>
#include <stdexcept>

#include "lamino/parallel.hpp"
#include "lamino/preproc.hpp"

namespace lamino {

namespace {
constexpr double kTvEps = 1e-8;
}

void LambdaMap::validate() const {
    if (lambda_coarse < 0.0 || lambda_fine < 0.0)
        throw std::invalid_argument("lambda map: weights must be >= 0");
    if (!(z_split_frac > 0.0 && z_split_frac < 1.0))
        throw std::invalid_argument("lambda map: z_split_frac must be in (0,1)");
}

std::pair<double, Volume> tv_value_grad(const Volume& vol,
                                        const LambdaMap& lmap) {
    lmap.validate();
    const int nx = vol.dims.nx, ny = vol.dims.ny, nz = vol.dims.nz;
    const std::size_t n = vol.values.size();

    // Pass 1: forward differences and lambda(z)/r per voxel.
    std::vector<double> dx(n), dy(n), dz(n), s(n);
    double value = 0.0;
    const std::int64_t sy = nx;
    const std::int64_t sz = static_cast<std::int64_t>(nx) * ny;
    const double* v = vol.values.data();
    for (int z = 0; z < nz; ++z) {
        const double lam = lmap.at(z, nz);
        for (int y = 0; y < ny; ++y) {
            std::size_t i = static_cast<std::size_t>(z) * sz +
                            static_cast<std::size_t>(y) * sy;
            for (int x = 0; x < nx; ++x, ++i) {
                const double ddx = x + 1 < nx ? v[i + 1] - v[i] : 0.0;
                const double ddy = y + 1 < ny ? v[i + sy] - v[i] : 0.0;
                const double ddz = z + 1 < nz ? v[i + sz] - v[i] : 0.0;
                const double r = std::sqrt(ddx * ddx + ddy * ddy +
                                           ddz * ddz + kTvEps * kTvEps);
                dx[i] = ddx;
                dy[i] = ddy;
                dz[i] = ddz;
                s[i] = lam / r;
                value += lam * r;
            }
        }
    }

    // Pass 2: gather gradient (each voxel reads its own term and the
    // three backward neighbours' terms), race-free under threading.
    Volume grad(vol.dims, vol.voxel_nm, 0.0);
    double* g = grad.values.data();
    parallel_for(0, nz, [&](std::int64_t z) {
        for (int y = 0; y < ny; ++y) {
            std::size_t i = static_cast<std::size_t>(z) * sz +
                            static_cast<std::size_t>(y) * sy;
            for (int x = 0; x < nx; ++x, ++i) {
                double acc = -s[i] * (dx[i] + dy[i] + dz[i]);
                if (x > 0)
                    acc += s[i - 1] * dx[i - 1];
                if (y > 0)
                    acc += s[i - sy] * dy[i - sy];
                if (z > 0)
                    acc += s[i - sz] * dz[i - sz];
                g[i] = acc;
            }
        }
    });
    return {value, std::move(grad)};
}

ProjectionStack prepare_targets(const ProjectionStack& y,
                                const LossConfig& cfg) {
    if (cfg.no_hpf)
        return y;
    return high_pass(y, cfg.hpf_sigma_px);
}

LossParts loss_and_grad(DipNetwork& net, const NoiseInput& z,
                        const ProjectionStack& targets,
                        const LaminoGeometry& geom, const LossConfig& cfg,
                        Volume* x_out) {
    geom.validate();
    if (targets.n_frames() != geom.n_angles())
        throw std::invalid_argument("loss: target stack/geometry mismatch");

    Volume x = net.forward(z);

    ProjectionStack pred = forward_project_all(x, geom);
    if (cfg.symmetric_hpf && !cfg.no_hpf)
        pred = high_pass(pred, cfg.hpf_sigma_px);

    double data = 0.0;
    ProjectionStack residual = pred;
    for (int i = 0; i < residual.n_frames(); ++i) {
        auto& r = residual.frames[static_cast<std::size_t>(i)].pixels;
        const auto& t = targets.frames[static_cast<std::size_t>(i)].pixels;
        for (std::size_t k = 0; k < r.size(); ++k) {
            r[k] -= t[k];
            data += r[k] * r[k];
        }
    }
    double scale = 0.5;
    if (cfg.normalize_data_term) {
        const auto& f = targets.frames.front();
        scale /= static_cast<double>(targets.n_frames()) * f.nu * f.nv;
    }
    data *= scale;

    // d(data)/dx = H^T r (with the HPF re-applied first in the
    // symmetric variant; the periodic Gaussian filter is self-adjoint).
    if (cfg.symmetric_hpf && !cfg.no_hpf)
        residual = high_pass(residual, cfg.hpf_sigma_px);
    Volume grad_x = back_project(residual, geom, x.dims, x.voxel_nm);
    if (scale != 0.5) {
        const double f = 2.0 * scale;
        for (double& v : grad_x.values)
            v *= f;
    }

    double tv = 0.0;
    if (!cfg.no_tv) {
        auto [tv_value, tv_grad] = tv_value_grad(x, cfg.lambda);
        tv = tv_value;
        for (std::size_t i = 0; i < grad_x.values.size(); ++i)
            grad_x.values[i] += tv_grad.values[i];
    }

    LossParts parts{data + tv, data, tv};
    if (!std::isfinite(parts.total))
        throw std::runtime_error(
            "loss diverged: data=" + std::to_string(data) +
            " tv=" + std::to_string(tv));

    net.backward(grad_x);
    if (x_out)
        *x_out = std::move(x);
    return parts;
}

void adam_step(AdamState& state, std::vector<double>& params,
               const std::vector<double>& grads) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam: params/grads size mismatch");
    if (state.m.size() != params.size()) {
        if (!state.m.empty())
            throw std::invalid_argument("adam: state sized for another model");
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    state.t += 1;
    const double lr = state.lr_at(state.t);
    const double b1 = state.beta1, b2 = state.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    parallel_for_blocks(
        0, static_cast<std::int64_t>(params.size()),
        [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) {
                const double g = grads[static_cast<std::size_t>(i)];
                double& m = state.m[static_cast<std::size_t>(i)];
                double& v = state.v[static_cast<std::size_t>(i)];
                m = b1 * m + (1.0 - b1) * g;
                v = b2 * v + (1.0 - b2) * g * g;
                const double mh = m / c1;
                const double vh = v / c2;
                params[static_cast<std::size_t>(i)] -=
                    lr * mh / (std::sqrt(vh) + state.eps);
            }
        });
}

SolveResult reconstruct(const ProjectionStack& y, const LaminoGeometry& geom,
                        const Dims& vol_dims, double voxel_nm,
                        const SolveOptions& opt) {
    geom.validate();
    if (opt.n_iters < 0)
        throw std::invalid_argument("reconstruct: n_iters must be >= 0");

    DipNetwork net(opt.arch, vol_dims, opt.weight_seed);
    const NoiseInput noise = make_noise(vol_dims, voxel_nm, opt.noise_seed);
    const ProjectionStack targets = prepare_targets(y, opt.loss);

    AdamState adam = opt.adam;
    adam.t = 0;
    adam.m.clear();
    adam.v.clear();

    SolveResult res;
    res.trace.reserve(static_cast<std::size_t>(opt.n_iters));
    Volume x;
    for (int t = 1; t <= opt.n_iters; ++t) {
        LossParts parts;
        try {
            parts = loss_and_grad(net, noise, targets, geom, opt.loss, &x);
        } catch (const std::runtime_error& e) {
            res.aborted = true;
            res.abort_reason = e.what();
            res.volume = std::move(x); // last finite snapshot
            return res;
        }
        res.trace.push_back({t, parts.data_term, parts.tv_term, parts.total});
        if (opt.snapshot_stride > 0 && t % opt.snapshot_stride == 0)
            res.snapshots.emplace_back(t, x);
        adam_step(adam, net.params(), net.grads());
        net.invalidate_cache();
    }
    res.volume = net.forward(noise);
    res.final_params = net.params();
    return res;
}

} // namespace lamino
