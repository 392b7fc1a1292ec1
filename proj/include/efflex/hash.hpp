#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace efflex {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view data);
std::string to_hex(const Digest& d);

} // namespace efflex
