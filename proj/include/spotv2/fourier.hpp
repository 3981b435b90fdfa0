#pragma once

#include <complex>
#include <string>
#include <vector>

#include "json.hpp"

#include "spotv2/ingest.hpp"
#include "spotv2/panel.hpp"

namespace spotv2::fourier {

using Complex = std::complex<double>;

/// Dense coefficients c_k for k = -K..K (stored at k + K).
struct CoeffArray {
    int K = 0;
    double T = 1.0;
    std::vector<Complex> values;

    static CoeffArray zeros(int K, double T = 1.0);

    Complex operator[](int k) const { return values[static_cast<std::size_t>(k + K)]; }
    Complex& operator[](int k) { return values[static_cast<std::size_t>(k + K)]; }
};

/// Harmonic caps for one estimation run. Every series (single asset or pair)
/// uses the same caps.
struct CuttingFreqs {
    int N = 0;  // convolution cap for returns
    int M = 0;  // Fejer cap for vol / covol
    int S = 0;  // convolution cap for vol coefficients
    int L = 0;  // Fejer cap for vov / covov
    // Multiply the vov convolution by (2pi/T)^2 so it estimates d<V,V>/dt.
    bool angular = true;
    // Covov from c(C_ij) convolved with itself instead of c(V_i) with c(V_j).
    bool covov_from_covol = false;

    static CuttingFreqs defaults(int n);
    void validate() const;
};

nlohmann::json to_json(const CuttingFreqs& f);
CuttingFreqs freqs_from_json(const nlohmann::json& j, int n);

/// c_k(dp) = (1/T) sum_l exp(-i k 2pi t_l / T) (p_{l+1} - p_l), |k| <= kmax,
/// computed with one real FFT of the returns.
CoeffArray return_coeffs(const ingest::LogPriceGrid& grid, int kmax);

/// Same formula on an arbitrary (possibly nonuniform) grid t_0 < ... < t_n.
CoeffArray return_coeffs(const std::vector<double>& times, const std::vector<double>& logp,
                         double T, int kmax);

/// c_k(C) = T/(2Nc+1) sum_{|l|<=Nc} a_l b_{k-l}, |k| <= kmax.
CoeffArray covol_coeffs(const CoeffArray& a, const CoeffArray& b, int Nc, int kmax);

/// c_k = w T/(2S+1) sum_{|l|<=S} l(l-k) a_l b_{k-l}, w = (2pi/T)^2 when
/// angular, else 1.
CoeffArray vov_coeffs(const CoeffArray& a, const CoeffArray& b, int S, int kmax, bool angular = true);

/// Real part of sum_{|k|<M} (1-|k|/M) c_k exp(i k 2pi tau / T) at each tau.
/// Throws Internal when the imaginary part is not negligible.
std::vector<double> fejer_invert(const CoeffArray& c, int M, const std::vector<double>& taus);

/// All four families for one day; grids must share n and T.
SpotPanel estimate_day(const std::vector<ingest::LogPriceGrid>& grids, const CuttingFreqs& freqs,
                       const std::vector<double>& taus, int workers = 1);

/// Days whose grids do not cover every asset are skipped and reported in
/// `warnings`.
SpotPanel estimate_panel(const std::vector<std::string>& assets,
                         const std::vector<std::vector<ingest::LogPriceGrid>>& days,
                         const CuttingFreqs& freqs, const std::vector<double>& taus, int workers = 1,
                         std::vector<std::string>* warnings = nullptr);

}  // namespace spotv2::fourier
