#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>

#include "lkp/error.hpp"

namespace lkp::detail {

inline void write_f64_le(std::ostream& out, std::span<const double> values) {
    for (double v : values) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        char buf[8];
        std::memcpy(buf, &bits, 8);
        out.write(buf, 8);
    }
}

inline void read_f64_le(std::istream& in, std::span<double> values) {
    for (double& v : values) {
        char buf[8];
        if (!in.read(buf, 8)) throw DataError("unexpected end of binary payload");
        std::uint64_t bits;
        std::memcpy(&bits, buf, 8);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        v = std::bit_cast<double>(bits);
    }
}

} // namespace lkp::detail
