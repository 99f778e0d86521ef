#include "tseg/image.hpp"

#include "tseg/mesh_io.hpp"
#include "tseg/random.hpp"

#include <png.h>

#include <array>
#include <cstring>

namespace tseg {

std::string encode_png(const ImageRGB& image)
{
    if (image.empty()) throw PreconditionError("cannot encode an empty image");
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = PNG_FORMAT_RGB;

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.data.data(), 0, nullptr))
        throw Error(std::string("PNG sizing failed: ") + img.message);
    std::string out(size, '\0');
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.data.data(), 0, nullptr))
        throw Error(std::string("PNG encoding failed: ") + img.message);
    out.resize(size);
    return out;
}

ImageRGB decode_png(std::string_view bytes)
{
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
        throw ParseError(std::string("PNG decode failed: ") + img.message);
    img.format = PNG_FORMAT_RGB;
    ImageRGB out(static_cast<int>(img.width), static_cast<int>(img.height));
    if (!png_image_finish_read(&img, nullptr, out.data.data(), 0, nullptr)) {
        png_image_free(&img);
        throw ParseError(std::string("PNG decode failed: ") + img.message);
    }
    return out;
}

void write_png(const std::filesystem::path& path, const ImageRGB& image) { write_file(path, encode_png(image)); }

std::uint64_t image_hash(const ImageRGB& image)
{
    std::uint64_t h = fnv1a64(std::to_string(image.width) + "x" + std::to_string(image.height));
    for (auto b : image.data) {
        h ^= b;
        h *= 0x100000001B3ull;
    }
    return h;
}

namespace {

void put_u32(std::string& out, std::uint32_t v)
{
    for (int k = 0; k < 4; ++k) out += static_cast<char>((v >> (8 * k)) & 0xFF);
}

std::uint32_t get_u32(const char* p)
{
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[k])) << (8 * k);
    return v;
}

} // namespace

std::string encode_face_ids(int width, int height, std::span<const std::int32_t> ids)
{
    if (ids.size() != static_cast<std::size_t>(width) * height)
        throw PreconditionError("face id buffer size mismatch");
    std::string out(kFaceIdMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(width));
    put_u32(out, static_cast<std::uint32_t>(height));
    put_u32(out, 0);
    out.reserve(16 + ids.size() * 4);
    for (auto v : ids) put_u32(out, static_cast<std::uint32_t>(v));
    return out;
}

FaceIdBuffer decode_face_ids(std::string_view bytes)
{
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kFaceIdMagic, 4) != 0)
        throw ParseError("not a face-id buffer");
    FaceIdBuffer buf;
    buf.width = static_cast<int>(get_u32(bytes.data() + 4));
    buf.height = static_cast<int>(get_u32(bytes.data() + 8));
    const std::size_t n = static_cast<std::size_t>(buf.width) * buf.height;
    if (bytes.size() != 16 + n * 4) throw ParseError("face-id buffer length mismatch");
    buf.ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) buf.ids[i] = static_cast<std::int32_t>(get_u32(bytes.data() + 16 + 4 * i));
    return buf;
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes)
{
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8) | static_cast<unsigned char>(bytes[i + 2]);
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += kB64[v & 63];
    }
    if (i + 1 == bytes.size()) {
        const std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text)
{
    std::array<int, 256> lut;
    lut.fill(-1);
    for (int k = 0; k < 64; ++k) lut[static_cast<unsigned char>(kB64[k])] = k;
    std::string out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=') break;
        if (c == '\n' || c == '\r') continue;
        const int v = lut[static_cast<unsigned char>(c)];
        if (v < 0) throw ParseError("invalid base64 character");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out += static_cast<char>((acc >> bits) & 0xFF);
        }
    }
    return out;
}

} // namespace tseg
