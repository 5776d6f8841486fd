#pragma once

#include <cstdint>

namespace lkp {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;
using CategoryId = std::uint32_t;

} // namespace lkp
