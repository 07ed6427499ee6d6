#pragma once

// Bit-stable report emission: fixed float formatting, stable key order,
// and a manifest (invocation, config hash, seed, version) next to every
// report file.

#include <cstdint>
#include <string>
#include <vector>

#include "structmerge/errors.hpp"

namespace structmerge {

inline constexpr const char* kVersion = "0.1.0";

// Shortest representation at 12 significant digits ("%.12g"); integral
// values print without an exponent where possible.
std::string format_g12(double value);

// FNV-1a 64-bit over the canonical config text.
std::uint64_t config_hash(const std::string& canonical_config);

// Throws IoError on failure.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Writes <report_path>.manifest.json containing the exact invocation, the
// canonical config string, its hash, the seed, and the library version.
void write_manifest(const std::string& report_path, const std::vector<std::string>& invocation,
                    const std::string& canonical_config, std::uint64_t seed);

}  // namespace structmerge
