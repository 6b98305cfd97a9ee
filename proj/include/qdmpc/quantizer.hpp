// Uniform quantizer with progressively refined intervals, plus the bit-exact
// message codec used for all inter-agent traffic.
//
// Quantization of a scalar z around a mid-value m with interval length l and
// n bits uses step size D = l / 2^n and maps z to the nearest lattice point
//     Q(z) = m + sgn(z - m) * D * floor(|z - m| / D + 1/2),
// clamped to the interval endpoints m -/+ l/2 when z falls outside (the
// component's saturation flag is set in that case). For in-interval z the
// error obeys |z - Q(z)| <= D/2 = l / 2^{n+1}.
//
// The lattice inside the closed interval has 2^n + 1 points, one more than an
// n-bit code can address. The codec therefore covers the 2^n points from the
// lower endpoint up to (but excluding) the upper endpoint, in offset-binary.
// wire_quantize() folds the single unrepresentable top lattice point one step
// down (and flags it), exactly like the asymmetric top code of two's
// complement integer formats; encode() rejects it instead. The distributed
// solver transmits wire_quantize() output only, so every message decodes
// bit-exactly on the receiver's mirrored state.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "qdmpc/errors.hpp"

namespace qdmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Widest per-scalar code the packed codec supports.
inline constexpr int kMaxWireBits = 62;

struct QuantizerState {
    Vec mid;          // lattice origin, one entry per scalar
    double interval;  // total interval length l > 0
    int bits;         // n >= 1

    double step() const { return std::ldexp(interval, -bits); }  // l / 2^n, exact

    void validate() const {
        if (interval <= 0.0 || !std::isfinite(interval))
            throw DomainError("quantizer interval must be positive and finite");
        if (bits < 1) throw DomainError("quantizer needs at least one bit");
    }
};

struct QuantizeResult {
    Vec values;
    std::vector<char> saturated;
    int saturation_count = 0;
};

namespace detail {

// Signed lattice index of z relative to (mid, step), before any clamping.
inline double raw_index(double z, double mid, double step) {
    const double x = z - mid;
    const double s = (x > 0.0) - (x < 0.0);
    return s * std::floor(std::abs(x) / step + 0.5);
}

}  // namespace detail

/// Nearest-lattice quantization with endpoint clamping (indices in
/// [-2^{n-1}, +2^{n-1}]).
inline QuantizeResult quantize(const Vec& value, const QuantizerState& state) {
    state.validate();
    if (value.size() != state.mid.size())
        throw DimensionMismatch("quantize: value/mid size mismatch");
    const double step = state.step();
    const double half_count = std::ldexp(1.0, state.bits - 1);  // 2^{n-1}
    QuantizeResult out;
    out.values.resize(value.size());
    out.saturated.assign(static_cast<std::size_t>(value.size()), 0);
    for (Eigen::Index i = 0; i < value.size(); ++i) {
        const double z = value[i];
        if (!std::isfinite(z))
            throw NonFiniteInput("quantize: non-finite component");
        double idx = detail::raw_index(z, state.mid[i], step);
        if (idx > half_count) {
            idx = half_count;
            out.saturated[static_cast<std::size_t>(i)] = 1;
            ++out.saturation_count;
        } else if (idx < -half_count) {
            idx = -half_count;
            out.saturated[static_cast<std::size_t>(i)] = 1;
            ++out.saturation_count;
        }
        out.values[i] = state.mid[i] + idx * step;
    }
    return out;
}

/// Quantization restricted to the codec-representable lattice
/// (indices in [-2^{n-1}, 2^{n-1} - 1]); the top endpoint folds one step
/// down and counts as saturation.
inline QuantizeResult wire_quantize(const Vec& value, const QuantizerState& state) {
    state.validate();
    if (state.bits > kMaxWireBits)
        throw DomainError("wire quantizer supports at most 62 bits per scalar");
    QuantizeResult out = quantize(value, state);
    const double step = state.step();
    const double top = std::ldexp(1.0, state.bits - 1);  // index 2^{n-1}
    for (Eigen::Index i = 0; i < out.values.size(); ++i) {
        const double idx = detail::raw_index(out.values[i], state.mid[i], step);
        if (idx >= top) {
            out.values[i] = state.mid[i] + (top - 1.0) * step;
            if (!out.saturated[static_cast<std::size_t>(i)]) {
                out.saturated[static_cast<std::size_t>(i)] = 1;
                ++out.saturation_count;
            }
        }
    }
    return out;
}

enum class Channel : std::uint8_t { variable = 0, gradient = 1 };

/// One broadcast from one agent in one iteration. Regular messages carry
/// packed n-bit offset-binary lattice codes; pass-through messages carry raw
/// doubles and account for zero payload bits.
struct QuantizedMessage {
    int sender = 0;
    Channel channel = Channel::variable;
    int iteration = 0;
    int bits = 0;                        // n; 0 marks pass-through
    std::vector<std::uint64_t> codes;    // offset-binary, one per scalar
    Vec passthrough_values;              // only for pass-through messages
    std::vector<char> saturation_flags;  // diagnostic metadata, not serialized

    bool passthrough() const { return bits == 0; }

    Eigen::Index scalar_count() const {
        return passthrough() ? passthrough_values.size()
                             : static_cast<Eigen::Index>(codes.size());
    }

    /// Payload bits only; header and byte padding excluded.
    std::int64_t payload_bits() const {
        return passthrough() ? 0
                             : static_cast<std::int64_t>(bits) *
                                   static_cast<std::int64_t>(codes.size());
    }

    /// Packed binary layout: sender:16 | channel:1 | iteration:15, then the
    /// n-bit codes MSB-first, zero-padded to a byte boundary.
    std::vector<std::uint8_t> to_bytes() const {
        if (passthrough())
            throw StateMismatch("pass-through messages have no packed layout");
        if (sender < 0 || sender >= (1 << 16))
            throw LayoutError("sender id exceeds 16 bits");
        if (iteration < 0 || iteration >= (1 << 15))
            throw LayoutError("iteration exceeds 15 bits");
        std::vector<std::uint8_t> bytes;
        std::uint32_t header = (static_cast<std::uint32_t>(sender) << 16) |
                               (static_cast<std::uint32_t>(channel) << 15) |
                               static_cast<std::uint32_t>(iteration);
        int bitpos = 0;
        auto put_bit = [&](int b) {
            if (bitpos % 8 == 0) bytes.push_back(0);
            if (b) bytes.back() |= static_cast<std::uint8_t>(1u << (7 - bitpos % 8));
            ++bitpos;
        };
        for (int i = 31; i >= 0; --i) put_bit((header >> i) & 1u);
        for (std::uint64_t code : codes)
            for (int i = bits - 1; i >= 0; --i) put_bit((code >> i) & 1u);
        return bytes;
    }

    static QuantizedMessage from_bytes(const std::vector<std::uint8_t>& bytes,
                                       int bits, Eigen::Index scalar_count) {
        if (bits < 1 || bits > kMaxWireBits)
            throw StateMismatch("decoder bit width out of range");
        const std::int64_t need =
            32 + static_cast<std::int64_t>(bits) * scalar_count;
        if (static_cast<std::int64_t>(bytes.size()) * 8 < need)
            throw LayoutError("message truncated");
        std::int64_t bitpos = 0;
        auto get_bit = [&]() {
            const auto byte = bytes[static_cast<std::size_t>(bitpos / 8)];
            const int b = (byte >> (7 - bitpos % 8)) & 1;
            ++bitpos;
            return b;
        };
        std::uint32_t header = 0;
        for (int i = 0; i < 32; ++i) header = (header << 1) | static_cast<std::uint32_t>(get_bit());
        QuantizedMessage msg;
        msg.sender = static_cast<int>(header >> 16);
        msg.channel = static_cast<Channel>((header >> 15) & 1u);
        msg.iteration = static_cast<int>(header & 0x7fffu);
        msg.bits = bits;
        msg.codes.resize(static_cast<std::size_t>(scalar_count));
        for (auto& code : msg.codes) {
            std::uint64_t c = 0;
            for (int i = 0; i < bits; ++i) c = (c << 1) | static_cast<std::uint64_t>(get_bit());
            code = c;
        }
        return msg;
    }
};

/// Encode a lattice vector. Rejects anything off the representable lattice,
/// including the upper-endpoint point that wire_quantize() folds away.
inline QuantizedMessage encode(const Vec& values, const QuantizerState& state,
                               int sender, Channel channel, int iteration) {
    state.validate();
    if (state.bits > kMaxWireBits)
        throw DomainError("codec supports at most 62 bits per scalar");
    if (values.size() != state.mid.size())
        throw DimensionMismatch("encode: value/mid size mismatch");
    const double step = state.step();
    const std::int64_t half = std::int64_t{1} << (state.bits - 1);
    QuantizedMessage msg;
    msg.sender = sender;
    msg.channel = channel;
    msg.iteration = iteration;
    msg.bits = state.bits;
    msg.codes.resize(static_cast<std::size_t>(values.size()));
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        const double rel = (values[i] - state.mid[i]) / step;
        const std::int64_t idx = std::llround(rel);
        if (idx < -half || idx > half - 1)
            throw LatticeMismatch("value outside representable lattice range");
        if (state.mid[i] + static_cast<double>(idx) * step != values[i])
            throw LatticeMismatch("value is not a lattice point");
        msg.codes[static_cast<std::size_t>(i)] =
            static_cast<std::uint64_t>(idx + half);
    }
    return msg;
}

/// Inverse of encode under an identical (mid, interval, bits) state.
inline Vec decode(const QuantizedMessage& msg, const QuantizerState& state) {
    state.validate();
    if (msg.passthrough()) return msg.passthrough_values;
    if (msg.bits != state.bits)
        throw StateMismatch("decoder bit width differs from message");
    if (static_cast<Eigen::Index>(msg.codes.size()) != state.mid.size())
        throw DimensionMismatch("decode: scalar count mismatch");
    const double step = state.step();
    const std::int64_t half = std::int64_t{1} << (state.bits - 1);
    Vec out(state.mid.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const auto code = msg.codes[static_cast<std::size_t>(i)];
        if (code >> state.bits)
            throw LatticeMismatch("code exceeds bit width");
        const std::int64_t idx = static_cast<std::int64_t>(code) - half;
        out[i] = state.mid[i] + static_cast<double>(idx) * step;
    }
    return out;
}

/// Geometrically shrinking interval schedule l(k) = C * kappa^k.
struct RefinementSchedule {
    double initial_interval = 1.0;  // C > 0
    double shrinkage = 0.5;         // kappa in (0, 1)

    double interval_at(int k) const {
        if (k < 0) throw DomainError("refinement index must be non-negative");
        if (shrinkage <= 0.0 || shrinkage >= 1.0)
            throw DomainError("shrinkage must lie in (0, 1)");
        if (initial_interval <= 0.0)
            throw DomainError("initial interval must be positive");
        return initial_interval * std::pow(shrinkage, k);
    }
};

inline QuantizerState advance_midpoint(QuantizerState state, const Vec& last_quantized) {
    if (last_quantized.size() != state.mid.size())
        throw DimensionMismatch("advance_midpoint: size mismatch");
    state.mid = last_quantized;
    return state;
}

/// Sender- or receiver-side state of one progressively refined channel.
/// Both ends construct it with the same schedule and synchronise mid-values
/// purely through transmitted lattice values, so decode stays bit-exact.
class ProgressiveQuantizer {
public:
    ProgressiveQuantizer() = default;
    ProgressiveQuantizer(RefinementSchedule schedule, int bits, Vec initial_mid,
                         bool passthrough = false)
        : schedule_(schedule), bits_(bits), mid_(std::move(initial_mid)),
          passthrough_(passthrough) {
        if (!passthrough_ && (bits_ < 1 || bits_ > kMaxWireBits))
            throw DomainError("channel bit width out of range");
    }

    bool passthrough() const { return passthrough_; }
    const Vec& mid() const { return mid_; }
    void set_mid(Vec mid) { mid_ = std::move(mid); }

    QuantizerState state_at(int k) const {
        return QuantizerState{mid_, schedule_.interval_at(k), bits_};
    }

    /// Sender side: quantize, pack, and advance the mid-value.
    std::pair<Vec, QuantizedMessage> transmit(const Vec& value, int k, int sender,
                                              Channel channel) {
        if (passthrough_) {
            QuantizedMessage msg;
            msg.sender = sender;
            msg.channel = channel;
            msg.iteration = k;
            msg.bits = 0;
            msg.passthrough_values = value;
            mid_ = value;
            return {value, msg};
        }
        const QuantizerState st = state_at(k);
        QuantizeResult q = wire_quantize(value, st);
        QuantizedMessage msg = encode(q.values, st, sender, channel, k);
        msg.saturation_flags = q.saturated;
        mid_ = q.values;
        return {q.values, msg};
    }

    /// Receiver side: decode with the mirrored state and advance the mid-value.
    Vec receive(const QuantizedMessage& msg, int k) {
        if (passthrough_ != msg.passthrough())
            throw StateMismatch("pass-through mode differs between endpoints");
        if (passthrough_) {
            mid_ = msg.passthrough_values;
            return mid_;
        }
        if (msg.iteration != k)
            throw StateMismatch("message iteration differs from channel state");
        Vec v = decode(msg, state_at(k));
        mid_ = v;
        return v;
    }

private:
    RefinementSchedule schedule_{};
    int bits_ = 0;
    Vec mid_;
    bool passthrough_ = false;
};

}  // namespace qdmpc
