#include "lamino/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "lamino/fft.hpp"
#include "lamino/geometry.hpp"

namespace lamino {

namespace {

constexpr double kVarFloor = 1e-18;

double percentile(std::vector<double> values, double p) {
    const std::size_t k = static_cast<std::size_t>(
        p * static_cast<double>(values.size() - 1) + 0.5);
    std::nth_element(values.begin(), values.begin() + static_cast<long>(k),
                     values.end());
    return values[k];
}

double log_gauss(double x, double mu, double var) {
    const double d = x - mu;
    return -0.5 * std::log(6.283185307179586 * var) - d * d / (2.0 * var);
}

struct EmParams {
    double w0, mu0, var0, w1, mu1, var1;
};

// One EM run; returns iterations, final log-likelihood, and whether a
// component collapsed to non-finite or zero-weight state.
bool run_em(const std::vector<double>& x, EmParams& p, int& iters,
            double& loglik) {
    const std::size_t n = x.size();
    const double tol = 1e-8 * static_cast<double>(n);
    double prev_ll = -1e300;
    std::vector<double> gamma(n);
    for (iters = 1; iters <= 200; ++iters) {
        double ll = 0.0;
        double sum_g = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double l0 = std::log(p.w0) + log_gauss(x[i], p.mu0, p.var0);
            const double l1 = std::log(p.w1) + log_gauss(x[i], p.mu1, p.var1);
            const double m = std::max(l0, l1);
            const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
            const double g = e1 / (e0 + e1);
            gamma[i] = g;
            sum_g += g;
            ll += m + std::log(e0 + e1);
        }
        loglik = ll;
        if (!std::isfinite(ll))
            return false;

        const double w1 = sum_g / static_cast<double>(n);
        if (w1 < 1e-12 || w1 > 1.0 - 1e-12)
            return false;
        double mu0 = 0.0, mu1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mu1 += gamma[i] * x[i];
            mu0 += (1.0 - gamma[i]) * x[i];
        }
        mu1 /= sum_g;
        mu0 /= (static_cast<double>(n) - sum_g);
        double v0 = 0.0, v1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d1 = x[i] - mu1, d0 = x[i] - mu0;
            v1 += gamma[i] * d1 * d1;
            v0 += (1.0 - gamma[i]) * d0 * d0;
        }
        v1 /= sum_g;
        v0 /= (static_cast<double>(n) - sum_g);
        p = {1.0 - w1, mu0, std::max(v0, kVarFloor),
             w1, mu1, std::max(v1, kVarFloor)};

        if (std::abs(ll - prev_ll) < tol)
            return true;
        prev_ll = ll;
    }
    iters = 200;
    return true;
}

// Equal-posterior point between the two means, by bisection on the
// log-posterior difference.
double posterior_threshold(const EmParams& p) {
    double lo = std::min(p.mu0, p.mu1);
    double hi = std::max(p.mu0, p.mu1);
    if (lo == hi)
        return lo;
    auto f = [&p](double x) {
        return (std::log(p.w1) + log_gauss(x, p.mu1, p.var1)) -
               (std::log(p.w0) + log_gauss(x, p.mu0, p.var0));
    };
    double flo = f(lo), fhi = f(hi);
    if (flo * fhi > 0.0)
        return 0.5 * (lo + hi); // no crossing between the means
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0)
            return mid;
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

void check_range(const Volume& a, const ZRange& range) {
    if (range.z0 < 0 || range.z1 > a.dims.nz || range.z0 >= range.z1)
        throw std::invalid_argument("metrics: empty or invalid z range");
}

} // namespace

std::pair<Volume, GmmFit> binarize_em(const Volume& vol) {
    const auto [mn_it, mx_it] =
        std::minmax_element(vol.values.begin(), vol.values.end());
    const double mn = *mn_it, mx = *mx_it;
    if (mn == mx)
        throw std::invalid_argument("binarize_em: constant volume");

    const std::size_t n = vol.values.size();
    double mean = 0.0;
    for (double v : vol.values)
        mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : vol.values)
        var += (v - mean) * (v - mean);
    var = std::max(var / static_cast<double>(n), kVarFloor);

    EmParams p{0.5, percentile(vol.values, 0.10), var,
               0.5, percentile(vol.values, 0.90), var};
    if (p.mu0 == p.mu1) {
        p.mu0 = mn;
        p.mu1 = mx;
    }

    GmmFit fit;
    if (!run_em(vol.values, p, fit.iterations, fit.log_likelihood)) {
        // Re-init once with jittered means before giving up.
        const double span = mx - mn;
        p = {0.5, mean - 0.25 * span, var, 0.5, mean + 0.25 * span, var};
        if (!run_em(vol.values, p, fit.iterations, fit.log_likelihood))
            throw std::runtime_error(
                "binarize_em: degenerate fit (component collapsed twice)");
    }

    if (p.mu1 < p.mu0)
        p = {p.w1, p.mu1, p.var1, p.w0, p.mu0, p.var0};
    fit.w0 = p.w0;
    fit.mu0 = p.mu0;
    fit.var0 = p.var0;
    fit.w1 = p.w1;
    fit.mu1 = p.mu1;
    fit.var1 = p.var1;
    fit.threshold = posterior_threshold(p);

    Volume mask(vol.dims, vol.voxel_nm, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        mask.values[i] = vol.values[i] > fit.threshold ? 1.0 : 0.0;
    return {std::move(mask), fit};
}

ZRange z_range_all(int nz) { return {0, nz}; }

ZRange z_range_fine(int nz) {
    const int z0 = static_cast<int>(std::ceil(0.70 * nz - 1e-12));
    return {z0, nz};
}

double ber(const Volume& a, const Volume& b, const ZRange& range) {
    if (!(a.dims == b.dims))
        throw std::invalid_argument("ber: dims mismatch");
    check_range(a, range);
    const std::size_t plane =
        static_cast<std::size_t>(a.dims.nx) * a.dims.ny;
    std::size_t wrong = 0;
    for (int z = range.z0; z < range.z1; ++z) {
        const std::size_t off = static_cast<std::size_t>(z) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            const bool ba = a.values[off + i] > 0.5;
            const bool bb = b.values[off + i] > 0.5;
            wrong += ba != bb ? 1 : 0;
        }
    }
    return static_cast<double>(wrong) /
           (static_cast<double>(plane) * (range.z1 - range.z0));
}

double pcc(const Volume& a, const Volume& b, const ZRange& range) {
    if (!(a.dims == b.dims))
        throw std::invalid_argument("pcc: dims mismatch");
    check_range(a, range);
    const std::size_t plane =
        static_cast<std::size_t>(a.dims.nx) * a.dims.ny;
    const std::size_t off = static_cast<std::size_t>(range.z0) * plane;
    const std::size_t count =
        static_cast<std::size_t>(range.z1 - range.z0) * plane;

    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        ma += a.values[off + i];
        mb += b.values[off + i];
    }
    ma /= static_cast<double>(count);
    mb /= static_cast<double>(count);
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double da = a.values[off + i] - ma;
        const double db = b.values[off + i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw std::invalid_argument("pcc: zero variance over the z range");
    return sab / std::sqrt(saa * sbb);
}

Volume psd(const Volume& vol) {
    const int nx = vol.dims.nx, ny = vol.dims.ny, nz = vol.dims.nz;
    std::vector<cplx> buf = to_complex(vol.values);
    fft_3d(buf.data(), nz, ny, nx, false);

    Volume out(vol.dims, vol.voxel_nm, 0.0);
    const int cx = nx / 2, cy = ny / 2, cz = nz / 2;
    for (int z = 0; z < nz; ++z) {
        const int rz = (z - cz + nz) % nz;
        for (int y = 0; y < ny; ++y) {
            const int ry = (y - cy + ny) % ny;
            for (int x = 0; x < nx; ++x) {
                const int rx = (x - cx + nx) % nx;
                const cplx c =
                    buf[static_cast<std::size_t>(rx) +
                        static_cast<std::size_t>(nx) *
                            (static_cast<std::size_t>(ry) +
                             static_cast<std::size_t>(ny) * rz)];
                out.at(x, y, z) = std::norm(c);
            }
        }
    }
    return out;
}

double cone_energy_ratio(const Volume& spectrum, double theta_deg) {
    const auto mask = missing_cone_mask(spectrum.dims, theta_deg);
    const int cx = spectrum.dims.nx / 2, cy = spectrum.dims.ny / 2,
              cz = spectrum.dims.nz / 2;
    const std::size_t dc =
        static_cast<std::size_t>(cx) +
        static_cast<std::size_t>(spectrum.dims.nx) *
            (static_cast<std::size_t>(cy) +
             static_cast<std::size_t>(spectrum.dims.ny) * cz);
    double inside = 0.0, total = 0.0;
    for (std::size_t i = 0; i < spectrum.values.size(); ++i) {
        const double v = spectrum.values[i];
        if (v < 0.0)
            throw std::invalid_argument("cone_energy_ratio: negative spectrum");
        if (i == dc)
            continue;
        total += v;
        if (mask[i])
            inside += v;
    }
    if (total == 0.0)
        throw std::invalid_argument("cone_energy_ratio: all-zero spectrum");
    return inside / total;
}

} // namespace lamino
