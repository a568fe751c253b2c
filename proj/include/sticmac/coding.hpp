#pragma once

// Rate-1/2, K = 7 (133, 171) convolutional code with the 802.11 puncturing
// patterns, a hard-decision Viterbi decoder and Monte-Carlo packet error
// rate estimation over a binary symmetric channel.

#include "sticmac/error.hpp"
#include "sticmac/phy.hpp"
#include "sticmac/random.hpp"
#include "sticmac/stats.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

namespace sticmac {

using Bits = std::vector<std::uint8_t>;

inline constexpr int kConstraintLength = 7;
inline constexpr int kTailBits = kConstraintLength - 1;
inline constexpr unsigned kGeneratorA = 0133;
inline constexpr unsigned kGeneratorB = 0171;

struct PuncturePattern {
    int period = 1;
    std::array<std::uint8_t, 3> keep_a{1, 1, 1};
    std::array<std::uint8_t, 3> keep_b{1, 1, 1};
};

struct ConvCode {
    CodeRate rate = CodeRate::Half;

    PuncturePattern pattern() const
    {
        switch (rate) {
        case CodeRate::Half: return {1, {1, 1, 1}, {1, 1, 1}};
        case CodeRate::TwoThirds: return {2, {1, 1, 0}, {1, 0, 0}};
        case CodeRate::ThreeQuarters: return {3, {1, 1, 0}, {1, 0, 1}};
        }
        return {};
    }

    // Free distance of the punctured code.
    int free_distance() const
    {
        switch (rate) {
        case CodeRate::Half: return 10;
        case CodeRate::TwoThirds: return 6;
        case CodeRate::ThreeQuarters: return 5;
        }
        return 0;
    }

    // Error weight the hard-decision ML decoder is guaranteed to correct.
    int guaranteed_correctable() const { return (free_distance() - 1) / 2; }

    // Coded length for `steps` trellis steps (information plus tail bits).
    std::size_t punctured_length(std::size_t steps) const
    {
        const auto p = pattern();
        std::size_t per_period = 0;
        for (int i = 0; i < p.period; ++i)
            per_period += p.keep_a[i] + p.keep_b[i];
        std::size_t n = (steps / p.period) * per_period;
        for (std::size_t i = 0; i < steps % p.period; ++i)
            n += p.keep_a[i] + p.keep_b[i];
        return n;
    }

    std::size_t encoded_length(std::size_t info_bits) const { return punctured_length(info_bits + kTailBits); }
};

inline ConvCode code_for(const Mcs& mcs) { return ConvCode{mcs.code_rate}; }

namespace detail {

inline unsigned parity(unsigned x) { return static_cast<unsigned>(std::popcount(x) & 1); }

// Expected (A, B) output pair, packed as (A << 1) | B, for the butterfly
// whose even predecessor is 2j and whose input bit is 0.
inline const std::array<std::uint8_t, 32>& butterfly_outputs()
{
    static const std::array<std::uint8_t, 32> table = [] {
        std::array<std::uint8_t, 32> t{};
        for (unsigned j = 0; j < 32; ++j) {
            const unsigned reg = j << 1;
            t[j] = static_cast<std::uint8_t>((parity(reg & kGeneratorA) << 1) | parity(reg & kGeneratorB));
        }
        return t;
    }();
    return table;
}

} // namespace detail

inline Bits conv_encode(std::span<const std::uint8_t> bits, const ConvCode& code)
{
    if (bits.empty())
        throw Error("conv_encode: empty input");
    const auto p = code.pattern();
    Bits out;
    out.reserve(code.encoded_length(bits.size()));
    unsigned state = 0; // six most recent inputs, newest in bit 5
    const std::size_t steps = bits.size() + kTailBits;
    for (std::size_t i = 0; i < steps; ++i) {
        const unsigned b = i < bits.size() ? (bits[i] & 1u) : 0u;
        const unsigned reg = (b << 6) | (state << 0);
        const int phase = static_cast<int>(i % static_cast<std::size_t>(p.period));
        if (p.keep_a[phase])
            out.push_back(static_cast<std::uint8_t>(detail::parity(reg & kGeneratorA)));
        if (p.keep_b[phase])
            out.push_back(static_cast<std::uint8_t>(detail::parity(reg & kGeneratorB)));
        state = reg >> 1;
    }
    return out;
}

// Hard-decision Viterbi decoder over the full packet. Buffers are kept between
// calls, so one instance per thread is cheap to reuse.
class ViterbiDecoder {
public:
    explicit ViterbiDecoder(ConvCode code = {})
        : code_(code)
    {
    }

    const ConvCode& code() const noexcept { return code_; }

    // Number of information bits carried by a received word, or throws if the
    // length does not correspond to any terminated codeword.
    std::size_t info_length(std::size_t received) const
    {
        std::size_t lo = 1, hi = received + 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (code_.encoded_length(mid) < received)
                lo = mid + 1;
            else
                hi = mid;
        }
        if (lo > received || code_.encoded_length(lo) != received)
            throw Error("viterbi_decode: malformed codeword length " + std::to_string(received));
        return lo;
    }

    Bits decode(std::span<const std::uint8_t> received)
    {
        const std::size_t info = info_length(received.size());
        load(received, info + kTailBits);
        return run(info);
    }

    // Decodes an error pattern against the all-zero codeword: `flips` are the
    // coded positions in error. Returns true if any of the first
    // `checked_bits` information bits is decoded wrongly.
    bool decode_error_pattern(std::size_t info_bits, std::span<const std::uint32_t> flips, std::size_t checked_bits)
    {
        const std::size_t steps = info_bits + kTailBits;
        prepare_zero(steps);
        for (auto pos : flips)
            rx_[coded_to_slot_[pos]] ^= slot_bit(pos);
        const Bits decoded = run(info_bits);
        for (auto pos : flips)
            rx_[coded_to_slot_[pos]] ^= slot_bit(pos);
        for (std::size_t i = 0; i < checked_bits && i < decoded.size(); ++i)
            if (decoded[i])
                return true;
        return false;
    }

private:
    // Step i holds received bits (A << 1 | B) and an erasure-free mask.
    void load(std::span<const std::uint8_t> received, std::size_t steps)
    {
        prepare_zero(steps);
        for (std::size_t pos = 0; pos < received.size(); ++pos)
            if (received[pos] & 1)
                rx_[coded_to_slot_[pos]] |= slot_bit(pos);
    }

    std::uint8_t slot_bit(std::size_t pos) const { return coded_is_a_[pos] ? 2 : 1; }

    void prepare_zero(std::size_t steps)
    {
        if (steps != steps_) {
            steps_ = steps;
            const auto p = code_.pattern();
            mask_.assign(steps, 0);
            coded_to_slot_.clear();
            coded_is_a_.clear();
            for (std::size_t i = 0; i < steps; ++i) {
                const int phase = static_cast<int>(i % static_cast<std::size_t>(p.period));
                if (p.keep_a[phase]) {
                    mask_[i] |= 2;
                    coded_to_slot_.push_back(static_cast<std::uint32_t>(i));
                    coded_is_a_.push_back(1);
                }
                if (p.keep_b[phase]) {
                    mask_[i] |= 1;
                    coded_to_slot_.push_back(static_cast<std::uint32_t>(i));
                    coded_is_a_.push_back(0);
                }
            }
            decisions_.resize(steps);
        }
        rx_.assign(steps, 0);
    }

    Bits run(std::size_t info_bits)
    {
        forward();
        Bits out(steps_);
        unsigned state = 0; // terminated trellis
        for (std::size_t t = steps_; t-- > 0;) {
            out[t] = static_cast<std::uint8_t>(state >> 5);
            const unsigned d = static_cast<unsigned>((decisions_[t] >> state) & 1u);
            state = ((state & 31u) << 1) | d;
        }
        out.resize(info_bits);
        return out;
    }

    // Add-compare-select over the whole trellis. Bit s of decisions_[t] is set
    // when state s at step t+1 survives through its odd predecessor.
    void forward()
    {
        const auto& outputs = detail::butterfly_outputs();
#if defined(__SSE2__)
        alignas(16) std::int16_t metric[64];
        for (auto& m : metric)
            m = 1000;
        metric[0] = 0;
        alignas(16) std::int16_t out_a[32], out_b[32];
        for (unsigned j = 0; j < 32; ++j) {
            out_a[j] = static_cast<std::int16_t>(outputs[j] >> 1);
            out_b[j] = static_cast<std::int16_t>(outputs[j] & 1);
        }
        __m128i ca[4], cb[4];
        for (int k = 0; k < 4; ++k) {
            ca[k] = _mm_load_si128(reinterpret_cast<const __m128i*>(out_a + 8 * k));
            cb[k] = _mm_load_si128(reinterpret_cast<const __m128i*>(out_b + 8 * k));
        }
        for (std::size_t t = 0; t < steps_; ++t) {
            const std::int16_t ra = (rx_[t] >> 1) & 1, rb = rx_[t] & 1;
            const std::int16_t ma = -static_cast<std::int16_t>((mask_[t] >> 1) & 1);
            const std::int16_t mb = -static_cast<std::int16_t>(mask_[t] & 1);
            const __m128i vra = _mm_set1_epi16(ra), vrb = _mm_set1_epi16(rb);
            const __m128i vma = _mm_set1_epi16(ma), vmb = _mm_set1_epi16(mb);
            const __m128i total = _mm_set1_epi16(static_cast<std::int16_t>((ma & 1) + (mb & 1)));
            __m128i lo[4], hi[4];
            std::uint64_t dec = 0;
            for (int k = 0; k < 4; ++k) {
                const __m128i va = _mm_load_si128(reinterpret_cast<const __m128i*>(metric + 16 * k));
                const __m128i vb = _mm_load_si128(reinterpret_cast<const __m128i*>(metric + 16 * k + 8));
                const __m128i even = _mm_packs_epi32(_mm_srai_epi32(_mm_slli_epi32(va, 16), 16),
                                                     _mm_srai_epi32(_mm_slli_epi32(vb, 16), 16));
                const __m128i odd = _mm_packs_epi32(_mm_srai_epi32(va, 16), _mm_srai_epi32(vb, 16));
                const __m128i bc = _mm_add_epi16(_mm_and_si128(_mm_xor_si128(ca[k], vra), vma),
                                                 _mm_and_si128(_mm_xor_si128(cb[k], vrb), vmb));
                const __m128i bn = _mm_sub_epi16(total, bc);
                const __m128i a0 = _mm_add_epi16(even, bc), a1 = _mm_add_epi16(odd, bn);
                const __m128i b0 = _mm_add_epi16(even, bn), b1 = _mm_add_epi16(odd, bc);
                lo[k] = _mm_min_epi16(a0, a1);
                hi[k] = _mm_min_epi16(b0, b1);
                const __m128i dl = _mm_cmpgt_epi16(a0, a1);
                const __m128i dh = _mm_cmpgt_epi16(b0, b1);
                const auto ml = static_cast<std::uint64_t>(_mm_movemask_epi8(_mm_packs_epi16(dl, dl)) & 0xff);
                const auto mh = static_cast<std::uint64_t>(_mm_movemask_epi8(_mm_packs_epi16(dh, dh)) & 0xff);
                dec |= ml << (8 * k);
                dec |= mh << (32 + 8 * k);
            }
            for (int k = 0; k < 4; ++k) {
                _mm_store_si128(reinterpret_cast<__m128i*>(metric + 8 * k), lo[k]);
                _mm_store_si128(reinterpret_cast<__m128i*>(metric + 32 + 8 * k), hi[k]);
            }
            decisions_[t] = dec;
            if ((t & 1023u) == 1023u) {
                const std::int16_t low = *std::min_element(metric, metric + 64);
                for (auto& m : metric)
                    m = static_cast<std::int16_t>(m - low);
            }
        }
#else
        std::array<std::uint16_t, 64> metric{};
        std::array<std::uint16_t, 64> next{};
        metric.fill(1000);
        metric[0] = 0;
        for (std::size_t t = 0; t < steps_; ++t) {
            std::array<std::uint16_t, 4> bm{};
            for (unsigned c = 0; c < 4; ++c)
                bm[c] = static_cast<std::uint16_t>(std::popcount(static_cast<unsigned>((rx_[t] ^ c) & mask_[t])));
            std::uint64_t dec = 0;
            for (unsigned j = 0; j < 32; ++j) {
                const std::uint16_t bc = bm[outputs[j]];
                const std::uint16_t bn = bm[outputs[j] ^ 3u];
                const std::uint16_t m0 = metric[2 * j], m1 = metric[2 * j + 1];
                const std::uint16_t a0 = m0 + bc, a1 = m1 + bn;
                const std::uint16_t b0 = m0 + bn, b1 = m1 + bc;
                dec |= static_cast<std::uint64_t>(a1 < a0) << j;
                dec |= static_cast<std::uint64_t>(b1 < b0) << (j + 32);
                next[j] = a1 < a0 ? a1 : a0;
                next[j + 32] = b1 < b0 ? b1 : b0;
            }
            decisions_[t] = dec;
            if ((t & 1023u) == 1023u) {
                const std::uint16_t low = *std::min_element(next.begin(), next.end());
                for (auto& m : next)
                    m = static_cast<std::uint16_t>(m - low);
            }
            metric = next;
        }
#endif
    }

    ConvCode code_;
    std::size_t steps_ = 0;
    std::vector<std::uint8_t> rx_;
    std::vector<std::uint8_t> mask_;
    std::vector<std::uint32_t> coded_to_slot_;
    std::vector<std::uint8_t> coded_is_a_;
    std::vector<std::uint64_t> decisions_;
};

inline Bits viterbi_decode(std::span<const std::uint8_t> received, const ConvCode& code)
{
    ViterbiDecoder dec(code);
    return dec.decode(received);
}

// Packet-error trials over a binary symmetric channel. The code is linear and
// the channel symmetric, so the all-zero codeword is sent and only the error
// pattern is decoded. Patterns no heavier than the guaranteed-correctable
// weight are counted as successes without running the decoder.
class CodedPacketSimulator {
public:
    CodedPacketSimulator(CodeRate rate, std::size_t pdu_bytes)
        : code_{rate}
        , decoder_(code_)
        , info_bits_(pdu_bytes * 8)
        , coded_bits_(code_.encoded_length(info_bits_))
    {
        if (pdu_bytes == 0)
            throw ValidationError("pdu_bytes", "pdu_bytes must be at least 1");
    }

    std::size_t coded_bits() const noexcept { return coded_bits_; }

    bool trial(double ber, Rng& rng)
    {
        if (ber <= 0.0)
            return false;
        std::binomial_distribution<std::uint64_t> count_dist(coded_bits_, std::min(ber, 1.0));
        const std::uint64_t k = count_dist(rng);
        if (k <= static_cast<std::uint64_t>(code_.guaranteed_correctable()))
            return false;
        choose_positions(static_cast<std::size_t>(k), rng);
        return decoder_.decode_error_pattern(info_bits_, flips_, info_bits_);
    }

private:
    void choose_positions(std::size_t k, Rng& rng)
    {
        flips_.clear();
        if (k * 8 < coded_bits_) {
            taken_.assign(coded_bits_, 0);
            std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(coded_bits_ - 1));
            while (flips_.size() < k) {
                const auto p = pick(rng);
                if (!taken_[p]) {
                    taken_[p] = 1;
                    flips_.push_back(p);
                }
            }
            return;
        }
        perm_.resize(coded_bits_);
        std::iota(perm_.begin(), perm_.end(), 0u);
        for (std::size_t i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, coded_bits_ - 1);
            std::swap(perm_[i], perm_[pick(rng)]);
            flips_.push_back(perm_[i]);
        }
    }

    ConvCode code_;
    ViterbiDecoder decoder_;
    std::size_t info_bits_;
    std::size_t coded_bits_;
    std::vector<std::uint32_t> flips_;
    std::vector<std::uint8_t> taken_;
    std::vector<std::uint32_t> perm_;
};

// Stopping rule for adaptive PER estimation.
struct AdaptiveTrials {
    std::uint64_t min_trials = 200;
    std::uint64_t max_trials = 100000;
    double relative_half_width = 0.1;
    double absolute_half_width = 0.002;
    std::uint64_t check_every = 50;
};

inline PerEstimate simulate_coded_per(const Mcs& mcs, double channel_ber, std::size_t pdu_bytes,
                                      std::uint64_t trials, std::uint64_t seed)
{
    CodedPacketSimulator sim(mcs.code_rate, pdu_bytes);
    Rng rng(seed);
    std::uint64_t errors = 0;
    for (std::uint64_t i = 0; i < trials; ++i)
        errors += sim.trial(channel_ber, rng) ? 1 : 0;
    PerEstimate e;
    e.trials = trials;
    e.per = trials ? static_cast<double>(errors) / static_cast<double>(trials) : 0.0;
    e.half_width_95 = wilson_half_width(e.per, trials);
    return e;
}

inline PerEstimate simulate_coded_per_adaptive(CodeRate rate, double channel_ber, std::size_t pdu_bytes,
                                               std::uint64_t seed, const AdaptiveTrials& rule = {})
{
    CodedPacketSimulator sim(rate, pdu_bytes);
    Rng rng(seed);
    std::uint64_t errors = 0, n = 0;
    PerEstimate e;
    while (n < rule.max_trials) {
        errors += sim.trial(channel_ber, rng) ? 1 : 0;
        ++n;
        if (n >= rule.min_trials && n % rule.check_every == 0) {
            const double p = static_cast<double>(errors) / static_cast<double>(n);
            const double hw = wilson_half_width(p, n);
            if (hw <= std::max(rule.relative_half_width * p, rule.absolute_half_width))
                break;
        }
    }
    e.trials = n;
    e.per = static_cast<double>(errors) / static_cast<double>(n);
    e.half_width_95 = wilson_half_width(e.per, n);
    return e;
}

} // namespace sticmac
