#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fiplab::hash {

// FNV-1a 64-bit. Used for content checksums (checkpoints, configs, reports);
// not cryptographic.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64(const std::vector<double>& values);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

std::string to_hex(std::uint64_t value);

}  // namespace fiplab::hash
