#include "volta/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "volta/file_io.hpp"

namespace volta {

namespace {

bool is_png(std::span<const std::uint8_t> b)
{
    static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    return b.size() >= 8 && std::equal(sig, sig + 8, b.begin());
}

bool is_jpeg(std::span<const std::uint8_t> b)
{
    return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

Tensor from_interleaved(const std::uint8_t* pixels, std::size_t h, std::size_t w, std::size_t stride_channels)
{
    Tensor out({1, 3, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::uint8_t* px = pixels + (y * w + x) * stride_channels;
            for (std::size_t c = 0; c < 3; ++c) out.at(0, c, y, x) = static_cast<float>(px[c]) / 255.0f;
        }
    return out;
}

Tensor decode_png(std::span<const std::uint8_t> bytes, const std::string& name)
{
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw DecodeError("decode error: " + name + ": " + image.message);
    }
    // RGBA output keeps gray->RGB replication and lets alpha be discarded
    // instead of composited.
    image.format = PNG_FORMAT_RGBA;
    if (image.width == 0 || image.height == 0) {
        png_image_free(&image);
        throw DecodeError("decode error: " + name + ": zero-area image");
    }
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw DecodeError("decode error: " + name + ": " + msg);
    }
    return from_interleaved(buffer.data(), image.height, image.width, 4);
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo)
{
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Kept free of objects with destructors between setjmp and longjmp.
bool decode_jpeg_raw(std::span<const std::uint8_t> bytes, std::vector<std::uint8_t>& pixels, std::size_t& h,
                     std::size_t& w, char* message)
{
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.message[0] = '\0';
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        std::snprintf(message, JMSG_LENGTH_MAX, "%s", err.message);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    h = cinfo.output_height;
    w = cinfo.output_width;
    pixels.resize(h * w * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

Tensor decode_jpeg(std::span<const std::uint8_t> bytes, const std::string& name)
{
    std::vector<std::uint8_t> pixels;
    std::size_t h = 0, w = 0;
    char message[JMSG_LENGTH_MAX] = {};
    if (!decode_jpeg_raw(bytes, pixels, h, w, message)) {
        throw DecodeError("decode error: " + name + ": " + message);
    }
    if (h == 0 || w == 0) throw DecodeError("decode error: " + name + ": zero-area image");
    return from_interleaved(pixels.data(), h, w, 3);
}

}  // namespace

Tensor decode_image(std::span<const std::uint8_t> bytes, const std::string& name)
{
    if (is_png(bytes)) return decode_png(bytes, name);
    if (is_jpeg(bytes)) return decode_jpeg(bytes, name);
    throw DecodeError("decode error: " + name + ": not a PNG or JPEG image");
}

Tensor read_image(const std::filesystem::path& path)
{
    return decode_image(read_file_bytes(path), path.string());
}

void write_png(const std::filesystem::path& path, const Tensor& image)
{
    const Shape4 s = image.shape();
    if (s.n != 1 || s.c != 3) throw ShapeError("write_png expects a (1,3,H,W) image, got " + to_string(s));
    std::vector<std::uint8_t> rgb(s.h * s.w * 3);
    for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const float v = std::clamp(image.at(0, c, y, x), 0.0f, 1.0f);
                rgb[(y * s.w + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(s.w);
    img.height = static_cast<png_uint_32>(s.h);
    img.format = PNG_FORMAT_RGB;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, rgb.data(), 0, nullptr)) {
        throw IoError("cannot write PNG " + path.string() + ": " + img.message);
    }
}

}  // namespace volta
