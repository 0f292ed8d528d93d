#pragma once

#include <optional>
#include <string>

#include "bc/layers.hpp"

namespace bc {

// "BCMP" container: version, prior tag, architecture string, tau0, per-layer
// parameter blocks as little-endian 64-bit floats, optional mask blocks, and
// a trailing CRC-64 over everything before it. Layout documented in
// docs/model-format.md.
inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const Network& net, const std::string& path,
                const ModelMask* masks = nullptr);

struct LoadedModel {
    Network net;
    std::optional<ModelMask> masks;
};

// Throws IoError with distinct messages for bad magic, version mismatch,
// checksum failure, truncation, and files over `max_bytes`.
LoadedModel load_model(const std::string& path,
                       std::size_t max_bytes = std::size_t{1} << 30);

// ECMA-182 CRC-64 (also used by the tests to corrupt-and-detect).
std::uint64_t crc64(const unsigned char* data, std::size_t n);

} // namespace bc
