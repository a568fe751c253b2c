#pragma once

// Symbol-level Monte Carlo checks of the analytic error formulas.

#include "sticmac/error.hpp"
#include "sticmac/phy.hpp"
#include "sticmac/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace sticmac {

struct SymbolSimResult {
    double ser = 0.0;
    double standard_error = 0.0;
    std::uint64_t symbols = 0;
};

// Square M-QAM (or BPSK for M = 2) with unit average energy over AWGN at
// Es/N0 = snr, sliced per axis.
inline SymbolSimResult simulate_symbol_errors(int modulation_order, double snr, std::uint64_t symbols,
                                              std::uint64_t seed)
{
    Rng rng(seed);
    const int side = modulation_order == 2 ? 2 : static_cast<int>(std::lround(std::sqrt(modulation_order)));
    const double scale = modulation_order == 2 ? 1.0 : std::sqrt(3.0 / (2.0 * (modulation_order - 1)));
    const double sigma = std::sqrt(0.5 / snr);
    std::normal_distribution<double> noise(0.0, sigma);
    std::uniform_int_distribution<int> level(0, side - 1);
    auto slice = [&](double y) {
        const double k = std::round((y / scale + (side - 1)) / 2.0);
        return static_cast<int>(std::clamp(k, 0.0, static_cast<double>(side - 1)));
    };
    std::uint64_t errors = 0;
    for (std::uint64_t s = 0; s < symbols; ++s) {
        const int i = level(rng);
        const double xi = scale * (2 * i - (side - 1));
        const double yi = xi + noise(rng);
        bool wrong = slice(yi) != i;
        if (modulation_order != 2) {
            const int q = level(rng);
            const double xq = scale * (2 * q - (side - 1));
            wrong = wrong || slice(xq + noise(rng)) != q;
        } else {
            noise(rng);
        }
        errors += wrong ? 1 : 0;
    }
    SymbolSimResult r;
    r.symbols = symbols;
    r.ser = static_cast<double>(errors) / static_cast<double>(symbols);
    r.standard_error = std::sqrt(std::max(r.ser * (1.0 - r.ser), 1.0 / static_cast<double>(symbols)) /
                                 static_cast<double>(symbols));
    return r;
}

inline const Mcs& mcs_for_modulation(int modulation_order)
{
    for (const auto& m : rate_set())
        if (m.modulation_order == modulation_order)
            return m;
    throw Error("no rate uses modulation order " + std::to_string(modulation_order));
}

} // namespace sticmac
