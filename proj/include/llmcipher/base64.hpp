#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace llmcipher::base64 {

std::string encode(std::span<const std::uint8_t> bytes);

/// Strict RFC 4648 decoding (padding required, no whitespace).
/// Throws FormatError on malformed input.
std::vector<std::uint8_t> decode(std::string_view text);

/// Little-endian IEEE-754 binary32 packing used by every artifact format.
std::string encode_f32(std::span<const float> values);
std::vector<float> decode_f32(std::string_view text);

}  // namespace llmcipher::base64
