#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace dgm {

// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);
double parse_double_exact(std::string_view text);

// 64-bit FNV-1a, used for provenance hashes of configs and inputs.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace dgm
