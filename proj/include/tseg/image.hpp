#pragma once

#include "tseg/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tseg {

/// 8-bit RGB image, row-major, 3 bytes per pixel.
struct ImageRGB {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    ImageRGB() = default;
    ImageRGB(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

    bool empty() const noexcept { return width <= 0 || height <= 0; }
    std::uint8_t* at(int x, int y) { return data.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* at(int x, int y) const
    {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    bool operator==(const ImageRGB&) const = default;
};

std::string encode_png(const ImageRGB& image);
ImageRGB decode_png(std::string_view bytes);
void write_png(const std::filesystem::path& path, const ImageRGB& image);

/// Content hash of the decoded pixels (FNV-1a over width, height and bytes).
std::uint64_t image_hash(const ImageRGB& image);

// Face-id buffer file: 16-byte header ("TSFI", u32 width, u32 height, u32 reserved = 0),
// then width*height little-endian int32 entries, -1 = background.
constexpr char kFaceIdMagic[4] = {'T', 'S', 'F', 'I'};

std::string encode_face_ids(int width, int height, std::span<const std::int32_t> ids);
struct FaceIdBuffer {
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> ids;
};
FaceIdBuffer decode_face_ids(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

} // namespace tseg
