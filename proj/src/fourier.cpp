#include "spotv2/fourier.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include <fftw3.h>
#include <fmt/format.h>

#include "spotv2/error.hpp"
#include "spotv2/parallel.hpp"

namespace spotv2::fourier {

namespace {

// FFTW planning is not thread-safe; execution on distinct arrays is.
std::mutex& fftw_mutex() {
    static std::mutex mu;
    return mu;
}

void require_cover(const CoeffArray& c, int need, std::string_view what) {
    if (c.K < need) {
        throw Error(ErrorKind::Argument,
                    fmt::format("{}: input covers |k| <= {}, need {}", what, c.K, need));
    }
}

// Real and imaginary parts accumulated separately; std::complex multiply
// goes through the slow NaN-checking path without -ffast-math.
Complex bilinear(const CoeffArray& a, const CoeffArray& b, int lo, int hi, int k,
                 bool weighted) {
    double re = 0.0;
    double im = 0.0;
    for (int l = lo; l <= hi; ++l) {
        const Complex x = a[l];
        const Complex y = b[k - l];
        const double w = weighted ? static_cast<double>(l) * static_cast<double>(l - k) : 1.0;
        re += w * (x.real() * y.real() - x.imag() * y.imag());
        im += w * (x.real() * y.imag() + x.imag() * y.real());
    }
    return {re, im};
}

}  // namespace

CoeffArray CoeffArray::zeros(int K, double T) {
    if (K < 0) throw Error(ErrorKind::Argument, "coefficient range must be non-negative");
    CoeffArray c;
    c.K = K;
    c.T = T;
    c.values.assign(static_cast<std::size_t>(2 * K + 1), Complex{});
    return c;
}

CuttingFreqs CuttingFreqs::defaults(int n) {
    if (n < 8) throw Error(ErrorKind::Argument, "cutting frequency defaults need n >= 8");
    CuttingFreqs f;
    f.N = n / 2;
    f.M = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
    f.S = static_cast<int>(std::floor(std::pow(static_cast<double>(n), 0.25)));
    f.L = static_cast<int>(std::floor(2.0 * std::sqrt(static_cast<double>(f.S))));
    return f;
}

void CuttingFreqs::validate() const {
    if (N < 1 || M < 1 || S < 1 || L < 1) {
        throw Error(ErrorKind::Config, "cutting frequencies must be positive");
    }
    if (!(M < N)) throw Error(ErrorKind::Config, fmt::format("need M < N (M={}, N={})", M, N));
    if (!(S < N)) throw Error(ErrorKind::Config, fmt::format("need S < N (S={}, N={})", S, N));
    if (!(L < S)) throw Error(ErrorKind::Config, fmt::format("need L < S (L={}, S={})", L, S));
}

nlohmann::json to_json(const CuttingFreqs& f) {
    return {{"N", f.N},
            {"M", f.M},
            {"S", f.S},
            {"L", f.L},
            {"vov_convention", f.angular ? "angular" : "plain"},
            {"covov_input", f.covov_from_covol ? "covol" : "vol_pair"}};
}

CuttingFreqs freqs_from_json(const nlohmann::json& j, int n) {
    CuttingFreqs f = CuttingFreqs::defaults(n);
    f.N = j.value("N", f.N);
    f.M = j.value("M", f.M);
    f.S = j.value("S", f.S);
    f.L = j.value("L", f.L);
    const auto conv = j.value("vov_convention", std::string("angular"));
    if (conv != "angular" && conv != "plain") {
        throw Error(ErrorKind::Config, fmt::format("unknown vov_convention '{}'", conv));
    }
    f.angular = conv == "angular";
    const auto input = j.value("covov_input", std::string("vol_pair"));
    if (input != "vol_pair" && input != "covol") {
        throw Error(ErrorKind::Config, fmt::format("unknown covov_input '{}'", input));
    }
    f.covov_from_covol = input == "covol";
    f.validate();
    return f;
}

CoeffArray return_coeffs(const ingest::LogPriceGrid& grid, int kmax) {
    if (kmax < 0) throw Error(ErrorKind::Argument, "return_coeffs: kmax must be non-negative");
    ingest::validate(grid);
    const int n = grid.n;
    std::vector<double> r(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) r[s] = grid.values[s + 1] - grid.values[s];

    const int half = n / 2 + 1;
    auto* out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * half));
    fftw_plan plan;
    {
        std::lock_guard lock(fftw_mutex());
        plan = fftw_plan_dft_r2c_1d(n, r.data(), out, FFTW_ESTIMATE);
    }
    fftw_execute(plan);

    // exp(-i k 2pi s/n) is n-periodic in k, so harmonics beyond n/2 alias
    // onto the half spectrum exactly as the defining sum does.
    auto c = CoeffArray::zeros(kmax, grid.T);
    for (int k = -kmax; k <= kmax; ++k) {
        int m = k % n;
        if (m < 0) m += n;
        Complex x;
        if (m < half) {
            x = {out[m][0], out[m][1]};
        } else {
            x = {out[n - m][0], -out[n - m][1]};
        }
        c[k] = x / grid.T;
    }
    {
        std::lock_guard lock(fftw_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(out);
    return c;
}

CoeffArray return_coeffs(const std::vector<double>& times, const std::vector<double>& logp,
                         double T, int kmax) {
    if (kmax < 0) throw Error(ErrorKind::Argument, "return_coeffs: kmax must be non-negative");
    if (times.size() != logp.size() || times.size() < 2) {
        throw Error(ErrorKind::Argument, "return_coeffs: need matching times and prices (>= 2)");
    }
    if (!(T > 0.0)) throw Error(ErrorKind::Argument, "return_coeffs: T must be positive");
    const double omega = 2.0 * std::numbers::pi / T;
    auto c = CoeffArray::zeros(kmax, T);
    for (std::size_t l = 0; l + 1 < times.size(); ++l) {
        const double r = logp[l + 1] - logp[l];
        if (r == 0.0) continue;
        for (int k = 0; k <= kmax; ++k) {
            const double phase = -k * omega * times[l];
            c[k] += Complex(std::cos(phase) * r, std::sin(phase) * r);
        }
    }
    for (int k = 0; k <= kmax; ++k) {
        c[k] /= T;
        c[-k] = std::conj(c[k]);
    }
    return c;
}

CoeffArray covol_coeffs(const CoeffArray& a, const CoeffArray& b, int Nc, int kmax) {
    if (Nc < 0 || kmax < 0) throw Error(ErrorKind::Argument, "covol_coeffs: negative range");
    if (kmax > Nc) {
        throw Error(ErrorKind::Argument, fmt::format("covol_coeffs: kmax {} exceeds Nc {}", kmax, Nc));
    }
    require_cover(a, Nc, "covol_coeffs");
    require_cover(b, Nc + kmax, "covol_coeffs");
    auto c = CoeffArray::zeros(kmax, a.T);
    const double scale = a.T / (2.0 * Nc + 1.0);
    for (int k = -kmax; k <= kmax; ++k) c[k] = scale * bilinear(a, b, -Nc, Nc, k, false);
    return c;
}

CoeffArray vov_coeffs(const CoeffArray& a, const CoeffArray& b, int S, int kmax, bool angular) {
    if (S < 0 || kmax < 0) throw Error(ErrorKind::Argument, "vov_coeffs: negative range");
    require_cover(a, S, "vov_coeffs");
    require_cover(b, S + kmax, "vov_coeffs");
    const double omega = 2.0 * std::numbers::pi / a.T;
    const double scale = (angular ? omega * omega : 1.0) * a.T / (2.0 * S + 1.0);
    auto c = CoeffArray::zeros(kmax, a.T);
    for (int k = -kmax; k <= kmax; ++k) c[k] = scale * bilinear(a, b, -S, S, k, true);
    return c;
}

std::vector<double> fejer_invert(const CoeffArray& c, int M, const std::vector<double>& taus) {
    if (M < 1) throw Error(ErrorKind::Argument, "fejer_invert: M must be >= 1");
    require_cover(c, M - 1, "fejer_invert");
    const double omega = 2.0 * std::numbers::pi / c.T;
    std::vector<double> out(taus.size());
    for (std::size_t b = 0; b < taus.size(); ++b) {
        double re = 0.0;
        double im = 0.0;
        double mag = 0.0;
        for (int k = -(M - 1); k <= M - 1; ++k) {
            const double w = 1.0 - std::abs(k) / static_cast<double>(M);
            const Complex term = w * c[k] * std::polar(1.0, k * omega * taus[b]);
            re += term.real();
            im += term.imag();
            mag += std::abs(term);
        }
        if (std::abs(im) > 1e-9 * std::max(mag, 1e-300)) {
            throw Error(ErrorKind::Internal,
                        fmt::format("fejer_invert: imaginary residue {:.3g} at tau {} (scale {:.3g}); "
                                    "coefficients are not conjugate-symmetric",
                                    im, taus[b], mag));
        }
        out[b] = re;
    }
    return out;
}

SpotPanel estimate_day(const std::vector<ingest::LogPriceGrid>& grids, const CuttingFreqs& freqs,
                       const std::vector<double>& taus, int workers) {
    freqs.validate();
    if (grids.empty()) throw Error(ErrorKind::Argument, "estimate_day: no grids");
    for (const auto& g : grids) {
        if (g.n != grids[0].n || g.T != grids[0].T || g.day != grids[0].day) {
            throw Error(ErrorKind::Validation, "estimate_day: grids differ in day, n or T");
        }
    }
    const auto na = grids.size();
    const auto np = pair_count(na);
    const int kv = std::max(freqs.M - 1, freqs.S + freqs.L - 1);
    const int kc = freqs.covov_from_covol ? kv : freqs.M - 1;
    if (kv > freqs.N) {
        throw Error(ErrorKind::Config,
                    fmt::format("cutting frequencies need vol harmonics up to {} > N = {}", kv, freqs.N));
    }

    std::vector<CoeffArray> ret(na);
    parallel_for(na, workers, [&](std::size_t i) { ret[i] = return_coeffs(grids[i], freqs.N + kv); });
    std::vector<CoeffArray> vol(na);
    parallel_for(na, workers, [&](std::size_t i) { vol[i] = covol_coeffs(ret[i], ret[i], freqs.N, kv); });

    SpotPanel out;
    for (const auto& g : grids) out.assets.push_back(g.symbol);
    out.resize(na, taus.size());
    for (std::size_t b = 0; b < taus.size(); ++b) {
        out.dates[b] = grids[0].day;
        out.tau_index[b] = static_cast<int>(b);
    }
    parallel_for(na, workers, [&](std::size_t i) {
        out.vol[i] = fejer_invert(vol[i], freqs.M, taus);
        const auto vv = vov_coeffs(vol[i], vol[i], freqs.S, freqs.L - 1, freqs.angular);
        out.vov[i] = fejer_invert(vv, freqs.L, taus);
    });

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = i + 1; j < na; ++j) pairs.emplace_back(i, j);
    }
    parallel_for(np, workers, [&](std::size_t p) {
        const auto [i, j] = pairs[p];
        const auto cc = covol_coeffs(ret[i], ret[j], freqs.N, kc);
        out.covol[p] = fejer_invert(cc, freqs.M, taus);
        const auto cv = freqs.covov_from_covol
                            ? vov_coeffs(cc, cc, freqs.S, freqs.L - 1, freqs.angular)
                            : vov_coeffs(vol[i], vol[j], freqs.S, freqs.L - 1, freqs.angular);
        out.covov[p] = fejer_invert(cv, freqs.L, taus);
    });
    return out;
}

SpotPanel estimate_panel(const std::vector<std::string>& assets,
                         const std::vector<std::vector<ingest::LogPriceGrid>>& days,
                         const CuttingFreqs& freqs, const std::vector<double>& taus, int workers,
                         std::vector<std::string>* warnings) {
    if (assets.empty()) throw Error(ErrorKind::Argument, "estimate_panel: no assets");
    SpotPanel panel;
    panel.assets = assets;
    panel.resize(assets.size(), 0);
    for (const auto& day : days) {
        std::map<std::string, const ingest::LogPriceGrid*> by_symbol;
        for (const auto& g : day) by_symbol[g.symbol] = &g;
        std::vector<ingest::LogPriceGrid> ordered;
        std::string missing;
        for (const auto& a : assets) {
            auto it = by_symbol.find(a);
            if (it == by_symbol.end()) {
                missing += missing.empty() ? a : "," + a;
            } else {
                ordered.push_back(*it->second);
            }
        }
        if (!missing.empty()) {
            if (warnings) {
                const auto when = day.empty() ? std::string("?") : format_date(day.front().day);
                warnings->push_back(fmt::format("{}: missing {}; day excluded", when, missing));
            }
            continue;
        }
        panel.append(estimate_day(ordered, freqs, taus, workers));
    }
    return panel;
}

}  // namespace spotv2::fourier
