#include "lamino/preproc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lamino/fft.hpp"
#include "lamino/parallel.hpp"
#include "lamino/rng.hpp"

namespace lamino {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double wrapped_offset(int i, int n) {
    return i <= n / 2 ? i : i - n;
}

std::vector<cplx> fft2_of(const Projection& p) {
    std::vector<cplx> buf = to_complex(p.pixels);
    fft_2d(buf.data(), p.nv, p.nu, false);
    return buf;
}

} // namespace

std::vector<double> gaussian_transfer(int nu, int nv, double sigma_px) {
    if (!(sigma_px > 0.0))
        throw std::invalid_argument("high_pass: sigma_px must be positive");
    std::vector<double> kernel(static_cast<std::size_t>(nu) * nv);
    double sum = 0.0;
    for (int v = 0; v < nv; ++v) {
        const double dy = wrapped_offset(v, nv);
        for (int u = 0; u < nu; ++u) {
            const double dx = wrapped_offset(u, nu);
            const double k =
                std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_px * sigma_px));
            kernel[static_cast<std::size_t>(v) * nu + u] = k;
            sum += k;
        }
    }
    std::vector<cplx> buf(kernel.size());
    for (std::size_t i = 0; i < kernel.size(); ++i)
        buf[i] = cplx(kernel[i] / sum, 0.0);
    fft_2d(buf.data(), nv, nu, false);
    std::vector<double> transfer(kernel.size());
    for (std::size_t i = 0; i < kernel.size(); ++i)
        transfer[i] = buf[i].real();
    transfer[0] = 1.0; // normalized kernel: DC passes exactly
    return transfer;
}

Projection high_pass(const Projection& proj, double sigma_px) {
    const std::vector<double> transfer =
        gaussian_transfer(proj.nu, proj.nv, sigma_px);
    std::vector<cplx> buf = fft2_of(proj);
    for (std::size_t i = 0; i < buf.size(); ++i)
        buf[i] *= (1.0 - transfer[i]);
    fft_2d(buf.data(), proj.nv, proj.nu, true);

    Projection out(proj.phi_deg, proj.nu, proj.nv, proj.pixel_nm);
    for (std::size_t i = 0; i < buf.size(); ++i)
        out.pixels[i] = buf[i].real();
    return out;
}

ProjectionStack high_pass(const ProjectionStack& stack, double sigma_px) {
    if (stack.n_frames() == 0)
        return stack;
    const std::vector<double> transfer = gaussian_transfer(
        stack.frames.front().nu, stack.frames.front().nv, sigma_px);
    ProjectionStack out;
    out.frames.resize(stack.frames.size());
    parallel_for(0, stack.n_frames(), [&](std::int64_t i) {
        const Projection& p = stack.frames[static_cast<std::size_t>(i)];
        std::vector<cplx> buf = fft2_of(p);
        for (std::size_t k = 0; k < buf.size(); ++k)
            buf[k] *= (1.0 - transfer[k]);
        fft_2d(buf.data(), p.nv, p.nu, true);
        Projection o(p.phi_deg, p.nu, p.nv, p.pixel_nm);
        for (std::size_t k = 0; k < buf.size(); ++k)
            o.pixels[k] = buf[k].real();
        out.frames[static_cast<std::size_t>(i)] = std::move(o);
    });
    return out;
}

Projection fourier_shift(const Projection& proj, double du_px, double dv_px) {
    std::vector<cplx> buf = fft2_of(proj);
    for (int v = 0; v < proj.nv; ++v) {
        const double fv = wrapped_offset(v, proj.nv) / proj.nv;
        for (int u = 0; u < proj.nu; ++u) {
            const double fu = wrapped_offset(u, proj.nu) / proj.nu;
            const double phase = -kTwoPi * (fu * du_px + fv * dv_px);
            buf[static_cast<std::size_t>(v) * proj.nu + u] *=
                cplx(std::cos(phase), std::sin(phase));
        }
    }
    fft_2d(buf.data(), proj.nv, proj.nu, true);
    Projection out(proj.phi_deg, proj.nu, proj.nv, proj.pixel_nm);
    for (std::size_t i = 0; i < buf.size(); ++i)
        out.pixels[i] = buf[i].real();
    return out;
}

std::pair<ProjectionStack, ShiftTable>
jitter_projections(const ProjectionStack& stack, double sigma_shift_px,
                   std::uint64_t seed) {
    if (sigma_shift_px < 0.0)
        throw std::invalid_argument("jitter: sigma must be >= 0");
    ShiftTable table;
    Rng rng(seed);
    for (int i = 0; i < stack.n_frames(); ++i) {
        table.du.push_back(sigma_shift_px * rng.normal());
        table.dv.push_back(sigma_shift_px * rng.normal());
    }
    if (sigma_shift_px == 0.0)
        return {stack, table};
    ProjectionStack out;
    out.frames.resize(stack.frames.size());
    parallel_for(0, stack.n_frames(), [&](std::int64_t i) {
        const std::size_t k = static_cast<std::size_t>(i);
        out.frames[k] =
            fourier_shift(stack.frames[k], table.du[k], table.dv[k]);
    });
    return {std::move(out), std::move(table)};
}

std::pair<double, double> phase_correlate(const Projection& a,
                                          const Projection& b, int upsample) {
    if (a.nu != b.nu || a.nv != b.nv)
        throw std::invalid_argument("phase_correlate: frame dims mismatch");
    const int nu = a.nu, nv = a.nv;
    std::vector<cplx> fa = fft2_of(a);
    std::vector<cplx> fb = fft2_of(b);

    // Normalized cross-power spectrum.
    std::vector<cplx> r(fa.size());
    double mean_mag = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const cplx c = fb[i] * std::conj(fa[i]);
        mean_mag += std::abs(c);
        r[i] = c;
    }
    mean_mag /= static_cast<double>(r.size());
    const double floor_mag = 1e-12 * mean_mag + 1e-300;
    for (auto& c : r)
        c /= (std::abs(c) + floor_mag);

    std::vector<cplx> corr = r;
    fft_2d(corr.data(), nv, nu, true);
    int pu = 0, pv = 0;
    double best = -1.0;
    for (int v = 0; v < nv; ++v)
        for (int u = 0; u < nu; ++u) {
            const double val =
                corr[static_cast<std::size_t>(v) * nu + u].real();
            if (val > best) {
                best = val;
                pu = u;
                pv = v;
            }
        }
    const double cu = wrapped_offset(pu, nu);
    const double cv = wrapped_offset(pv, nv);

    // Refine on a 1/upsample grid within +-1.5 px of the integer peak,
    // evaluated separably from the cross-power spectrum.
    const int half = upsample + upsample / 2;
    const int n_eval = 2 * half + 1;
    const double step = 1.0 / upsample;

    std::vector<cplx> partial(static_cast<std::size_t>(nv) * n_eval);
    for (int v = 0; v < nv; ++v) {
        for (int j = 0; j < n_eval; ++j) {
            const double x = cu + (j - half) * step;
            cplx acc(0.0, 0.0);
            const cplx* row = r.data() + static_cast<std::size_t>(v) * nu;
            for (int u = 0; u < nu; ++u) {
                const double fu = wrapped_offset(u, nu) / nu;
                const double ph = kTwoPi * fu * x;
                acc += row[u] * cplx(std::cos(ph), std::sin(ph));
            }
            partial[static_cast<std::size_t>(v) * n_eval + j] = acc;
        }
    }
    double best_val = -1e300;
    double best_du = cu, best_dv = cv;
    for (int i = 0; i < n_eval; ++i) {
        const double y = cv + (i - half) * step;
        for (int j = 0; j < n_eval; ++j) {
            cplx acc(0.0, 0.0);
            for (int v = 0; v < nv; ++v) {
                const double fv = wrapped_offset(v, nv) / nv;
                const double ph = kTwoPi * fv * y;
                acc += partial[static_cast<std::size_t>(v) * n_eval + j] *
                       cplx(std::cos(ph), std::sin(ph));
            }
            if (acc.real() > best_val) {
                best_val = acc.real();
                best_du = cu + (j - half) * step;
                best_dv = y;
            }
        }
    }
    return {best_du, best_dv};
}

AlignResult align_projections(const ProjectionStack& stack) {
    if (stack.n_frames() < 2)
        throw std::invalid_argument("align: need at least 2 projections");
    AlignResult res;
    res.shifts.du.assign(static_cast<std::size_t>(stack.n_frames()), 0.0);
    res.shifts.dv.assign(static_cast<std::size_t>(stack.n_frames()), 0.0);

    for (const Projection& p : stack.frames) {
        double mx = 0.0;
        for (double v : p.pixels)
            mx = std::max(mx, std::abs(v));
        if (mx == 0.0) {
            res.stack = stack;
            res.skipped_degenerate = true;
            return res;
        }
    }

    // Chain registration to the running aligned reference; this stage
    // is inherently sequential.
    res.stack.frames.resize(stack.frames.size());
    res.stack.frames[0] = stack.frames[0];
    for (int i = 1; i < stack.n_frames(); ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        const auto [du, dv] =
            phase_correlate(res.stack.frames[k - 1], stack.frames[k]);
        res.shifts.du[k] = du;
        res.shifts.dv[k] = dv;
        res.stack.frames[k] = fourier_shift(stack.frames[k], -du, -dv);
    }

    // Remove the unobservable global drift.
    double mu = 0.0, mv = 0.0;
    for (int i = 0; i < stack.n_frames(); ++i) {
        mu += res.shifts.du[static_cast<std::size_t>(i)];
        mv += res.shifts.dv[static_cast<std::size_t>(i)];
    }
    mu /= stack.n_frames();
    mv /= stack.n_frames();
    parallel_for(0, stack.n_frames(), [&](std::int64_t i) {
        const std::size_t k = static_cast<std::size_t>(i);
        res.shifts.du[k] -= mu;
        res.shifts.dv[k] -= mv;
        res.stack.frames[k] =
            fourier_shift(stack.frames[k], -res.shifts.du[k],
                          -res.shifts.dv[k]);
    });
    return res;
}

} // namespace lamino
