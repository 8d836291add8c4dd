#pragma once

#include <complex>
#include <vector>

namespace lamino {

using cplx = std::complex<double>;

/// In-place complex DFTs (FFTW backend, deterministic plans). The
/// inverse transforms are normalized by 1/N so fft followed by ifft is
/// the identity.
void fft_1d(cplx* data, int n, bool inverse);
void fft_2d(cplx* data, int rows, int cols, bool inverse);
void fft_3d(cplx* data, int n2, int n1, int n0, bool inverse);

/// Batched 1D transform along the fastest axis of a rows x n array.
void fft_1d_rows(cplx* data, int rows, int n, bool inverse);

std::vector<cplx> to_complex(const std::vector<double>& v);
std::vector<double> real_part(const std::vector<cplx>& v);

} // namespace lamino
