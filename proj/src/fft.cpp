#include "lamino/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace lamino {

namespace {

// FFTW plan creation is not thread-safe and FFTW_MEASURE is not
// deterministic; plans are cached per shape under a lock and created
// with FFTW_ESTIMATE. Execution uses the new-array interface, which is
// thread-safe for distinct buffers.
class PlanCache {
public:
    fftw_plan get(std::vector<int> dims, int howmany, bool inverse) {
        std::lock_guard<std::mutex> lock(mu_);
        Key key{dims, howmany, inverse};
        auto it = plans_.find(key);
        if (it != plans_.end())
            return it->second;

        std::size_t total = static_cast<std::size_t>(howmany);
        for (int d : dims)
            total *= static_cast<std::size_t>(d);
        fftw_complex* buf = fftw_alloc_complex(total);
        if (!buf)
            throw std::runtime_error("fft: allocation failed");
        int n = 1;
        for (int d : dims)
            n *= d;
        fftw_plan p = fftw_plan_many_dft(
            static_cast<int>(dims.size()), dims.data(), howmany, buf, nullptr,
            1, n, buf, nullptr, 1, n,
            inverse ? FFTW_BACKWARD : FFTW_FORWARD,
            FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(buf);
        if (!p)
            throw std::runtime_error("fft: plan creation failed");
        plans_.emplace(std::move(key), p);
        return p;
    }

private:
    using Key = std::tuple<std::vector<int>, int, bool>;
    std::mutex mu_;
    std::map<Key, fftw_plan> plans_;
};

PlanCache& cache() {
    static PlanCache c;
    return c;
}

void run(cplx* data, std::vector<int> dims, int howmany, bool inverse) {
    std::size_t n = 1;
    for (int d : dims) {
        if (d <= 0)
            throw std::invalid_argument("fft: dims must be positive");
        n *= static_cast<std::size_t>(d);
    }
    fftw_plan p = cache().get(dims, howmany, inverse);
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(data),
                     reinterpret_cast<fftw_complex*>(data));
    if (inverse) {
        const double scale = 1.0 / static_cast<double>(n);
        const std::size_t total = n * static_cast<std::size_t>(howmany);
        for (std::size_t i = 0; i < total; ++i)
            data[i] *= scale;
    }
}

} // namespace

void fft_1d(cplx* data, int n, bool inverse) { run(data, {n}, 1, inverse); }

void fft_2d(cplx* data, int rows, int cols, bool inverse) {
    run(data, {rows, cols}, 1, inverse);
}

void fft_3d(cplx* data, int n2, int n1, int n0, bool inverse) {
    run(data, {n2, n1, n0}, 1, inverse);
}

void fft_1d_rows(cplx* data, int rows, int n, bool inverse) {
    run(data, {n}, rows, inverse);
}

std::vector<cplx> to_complex(const std::vector<double>& v) {
    std::vector<cplx> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = cplx(v[i], 0.0);
    return out;
}

std::vector<double> real_part(const std::vector<cplx>& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = v[i].real();
    return out;
}

} // namespace lamino
