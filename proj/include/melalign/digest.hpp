#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace melalign {

// FNV-1a 64 as a 16-digit hex string; used for config/rule provenance tags.
inline std::string fnv1a_hex(std::string_view text) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

}  // namespace melalign
