#include "llmcipher/base64.hpp"

#include <array>
#include <bit>

#include "llmcipher/errors.hpp"

namespace llmcipher::base64 {
namespace {

constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

constexpr std::array<int, 256> make_reverse() {
    std::array<int, 256> table{};
    for (auto& v : table) v = -1;
    for (std::size_t i = 0; i < kAlphabet.size(); ++i)
        table[static_cast<unsigned char>(kAlphabet[i])] = static_cast<int>(i);
    return table;
}

constexpr auto kReverse = make_reverse();

}  // namespace

std::string encode(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const std::uint32_t n = (bytes[i] << 16u) | (bytes[i + 1] << 8u) | bytes[i + 2];
        out += kAlphabet[(n >> 18u) & 63u];
        out += kAlphabet[(n >> 12u) & 63u];
        out += kAlphabet[(n >> 6u) & 63u];
        out += kAlphabet[n & 63u];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const std::uint32_t n = bytes[i] << 16u;
        out += kAlphabet[(n >> 18u) & 63u];
        out += kAlphabet[(n >> 12u) & 63u];
        out += "==";
    } else if (rest == 2) {
        const std::uint32_t n = (bytes[i] << 16u) | (bytes[i + 1] << 8u);
        out += kAlphabet[(n >> 18u) & 63u];
        out += kAlphabet[(n >> 12u) & 63u];
        out += kAlphabet[(n >> 6u) & 63u];
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> decode(std::string_view text) {
    if (text.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        const bool last = i + 4 == text.size();
        int v[4];
        int pad = 0;
        for (int j = 0; j < 4; ++j) {
            const char c = text[i + j];
            if (c == '=' && last && j >= 2) {
                v[j] = 0;
                ++pad;
                continue;
            }
            if (pad > 0) throw FormatError("base64 padding in the middle of a group");
            v[j] = kReverse[static_cast<unsigned char>(c)];
            if (v[j] < 0) throw FormatError("invalid base64 character");
        }
        const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
        out.push_back(static_cast<std::uint8_t>(n >> 16u));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>(n >> 8u));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(n));
    }
    return out;
}

std::string encode_f32(std::span<const float> values) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(values.size() * 4);
    for (float f : values) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        bytes.push_back(static_cast<std::uint8_t>(bits));
        bytes.push_back(static_cast<std::uint8_t>(bits >> 8u));
        bytes.push_back(static_cast<std::uint8_t>(bits >> 16u));
        bytes.push_back(static_cast<std::uint8_t>(bits >> 24u));
    }
    return encode(bytes);
}

std::vector<float> decode_f32(std::string_view text) {
    const auto bytes = decode(text);
    if (bytes.size() % 4 != 0) throw FormatError("f32 payload length is not a multiple of 4 bytes");
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::uint32_t bits = std::uint32_t{bytes[4 * i]} | (std::uint32_t{bytes[4 * i + 1]} << 8u) |
                                   (std::uint32_t{bytes[4 * i + 2]} << 16u) |
                                   (std::uint32_t{bytes[4 * i + 3]} << 24u);
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

}  // namespace llmcipher::base64
