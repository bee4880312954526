#pragma once

#include "gsamp/error.hpp"
#include "gsamp/graph.hpp"
#include "gsamp/knn.hpp"
#include "gsamp/parallel.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace gsamp {

/// Raw decoded raster: integer samples in [0, 2^bit_depth), row-major,
/// channels interleaved.
struct Raster {
    Index height = 0;
    Index width = 0;
    int channels = 0;
    int bit_depth = 8;
    std::vector<std::uint16_t> samples;

    std::uint16_t at(Index r, Index c, int ch) const
    {
        return samples[static_cast<std::size_t>((r * width + c) * channels + ch)];
    }
    double max_value() const { return static_cast<double>((1u << bit_depth) - 1u); }
};

/// Image with values in [0,1], row-major, channels interleaved.
struct ImageTensor {
    Index height = 0;
    Index width = 0;
    int channels = 3;
    std::vector<double> data;

    Index size() const noexcept { return height * width; }

    double& at(Index r, Index c, int ch) { return data[static_cast<std::size_t>((r * width + c) * channels + ch)]; }
    double at(Index r, Index c, int ch) const
    {
        return data[static_cast<std::size_t>((r * width + c) * channels + ch)];
    }

    static ImageTensor zeros(Index height, Index width, int channels = 3)
    {
        if (height < 1 || width < 1 || (channels != 1 && channels != 3)) {
            throw DomainError("image dimensions must be positive with 1 or 3 channels");
        }
        ImageTensor img;
        img.height = height;
        img.width = width;
        img.channels = channels;
        img.data.assign(static_cast<std::size_t>(height * width * channels), 0.0);
        return img;
    }
};

namespace detail {

struct PngReadSource {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos;
};

inline void png_read_callback(png_structp png, png_bytep out, png_size_t len)
{
    auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
    if (src->pos + len > src->size) {
        png_error(png, "truncated PNG stream");
    }
    std::memcpy(out, src->data + src->pos, len);
    src->pos += len;
}

inline void png_write_callback(png_structp png, png_bytep in, png_size_t len)
{
    auto* dst = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    dst->insert(dst->end(), in, in + len);
}

inline void png_flush_callback(png_structp) {}

inline void png_error_callback(png_structp png, png_const_charp msg)
{
    auto* slot = static_cast<std::string*>(png_get_error_ptr(png));
    if (slot) {
        *slot = msg;
    }
    png_longjmp(png, 1);
}

inline void png_warning_callback(png_structp, png_const_charp) {}

inline std::vector<std::uint8_t> read_bytes(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open " + path);
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError("cannot write " + path);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

} // namespace detail

inline bool is_png(const std::vector<std::uint8_t>& bytes)
{
    return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

namespace detail {

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::string message;

    PngReader()
    {
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_callback, png_warning_callback);
        if (png) {
            info = png_create_info_struct(png);
        }
        if (!png || !info) {
            png_destroy_read_struct(&png, &info, nullptr);
            throw Error("libpng initialization failed");
        }
    }
    ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
    PngReader(const PngReader&) = delete;
    PngReader& operator=(const PngReader&) = delete;
};

/// Reads the header and installs the normalizing transforms; false on a libpng error.
inline bool png_read_header(png_structp png, png_infop info, PngReadSource* src)
{
    if (setjmp(png_jmpbuf(png))) {
        return false;
    }
    png_set_read_fn(png, src, png_read_callback);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_tRNS_to_alpha(png);
    }
    png_set_strip_alpha(png);
    if (depth == 16) {
        png_set_swap(png);
    }
    png_read_update_info(png, info);
    return true;
}

inline bool png_read_rows(png_structp png, png_bytepp rows)
{
    if (setjmp(png_jmpbuf(png))) {
        return false;
    }
    png_read_image(png, rows);
    png_read_end(png, nullptr);
    return true;
}

} // namespace detail

/// Largest raster decoded, guarding against decompression bombs.
inline constexpr Index max_decoded_pixels = Index{1} << 26;

/// Decodes an 8- or 16-bit PNG. Palettes and low-bit gray are expanded to
/// 8 bits, alpha is dropped, and gray+alpha becomes gray.
inline Raster decode_png(const std::vector<std::uint8_t>& bytes)
{
    if (!is_png(bytes)) {
        throw ParseError("not a PNG stream", 0);
    }
    detail::PngReader rd;
    detail::PngReadSource src{bytes.data(), bytes.size(), 0};
    if (!detail::png_read_header(rd.png, rd.info, &src)) {
        throw ParseError("invalid PNG: " + rd.message, 0);
    }
    Raster r;
    r.width = png_get_image_width(rd.png, rd.info);
    r.height = png_get_image_height(rd.png, rd.info);
    r.channels = png_get_channels(rd.png, rd.info);
    r.bit_depth = png_get_bit_depth(rd.png, rd.info);
    if (r.width * r.height > max_decoded_pixels) {
        throw SizeError("PNG of " + std::to_string(r.width) + "x" + std::to_string(r.height) + " exceeds the pixel limit");
    }
    const std::size_t stride = png_get_rowbytes(rd.png, rd.info);
    std::vector<std::uint8_t> buffer(stride * static_cast<std::size_t>(r.height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(r.height));
    for (Index y = 0; y < r.height; ++y) {
        rows[static_cast<std::size_t>(y)] = buffer.data() + stride * static_cast<std::size_t>(y);
    }
    if (!detail::png_read_rows(rd.png, rows.data())) {
        throw ParseError("invalid PNG: " + rd.message, 0);
    }

    const auto count = static_cast<std::size_t>(r.height * r.width * r.channels);
    r.samples.resize(count);
    if (r.bit_depth == 16) {
        for (std::size_t i = 0; i < count; ++i) {
            std::uint16_t v;
            std::memcpy(&v, buffer.data() + 2 * i, 2);
            r.samples[i] = v;
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            r.samples[i] = buffer[i];
        }
    }
    return r;
}

namespace detail {

struct PngWriteJob {
    std::vector<std::uint8_t>* out;
    png_uint_32 width;
    png_uint_32 height;
    int bit_depth;
    int color_type;
    png_bytepp rows;
    png_textp text;
    int text_count;
};

inline bool png_write_all(const PngWriteJob& job, std::string* message)
{
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, message, png_error_callback, png_warning_callback);
    if (!png) {
        return false;
    }
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_set_write_fn(png, job.out, png_write_callback, png_flush_callback);
    png_set_IHDR(png, info, job.width, job.height, job.bit_depth, job.color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    if (job.text_count > 0) {
        png_set_text(png, info, job.text, job.text_count);
    }
    png_set_rows(png, info, job.rows);
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

} // namespace detail

/// Encodes a 1- or 3-channel raster of depth 8 or 16; `text` pairs become
/// tEXt chunks.
inline std::vector<std::uint8_t> encode_png(const Raster& r,
                                            const std::vector<std::pair<std::string, std::string>>& text = {})
{
    if ((r.channels != 1 && r.channels != 3) || (r.bit_depth != 8 && r.bit_depth != 16)) {
        throw UnsupportedError("encode_png: only 8/16-bit gray or RGB rasters are written");
    }
    if (r.samples.size() != static_cast<std::size_t>(r.height * r.width * r.channels) || r.height < 1 || r.width < 1) {
        throw ShapeError("encode_png: sample count does not match the raster shape");
    }
    std::vector<std::uint8_t> out;
    const std::size_t bytes_per = r.bit_depth == 16 ? 2 : 1;
    const std::size_t stride = static_cast<std::size_t>(r.width * r.channels) * bytes_per;
    std::vector<std::uint8_t> buffer(stride * static_cast<std::size_t>(r.height));
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        if (bytes_per == 2) {
            // PNG stores 16-bit samples big-endian
            buffer[2 * i] = static_cast<std::uint8_t>(r.samples[i] >> 8);
            buffer[2 * i + 1] = static_cast<std::uint8_t>(r.samples[i] & 0xff);
        } else {
            buffer[i] = static_cast<std::uint8_t>(std::min<std::uint16_t>(r.samples[i], 255));
        }
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(r.height));
    for (Index y = 0; y < r.height; ++y) {
        rows[static_cast<std::size_t>(y)] = buffer.data() + stride * static_cast<std::size_t>(y);
    }
    std::vector<png_text> chunks(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        chunks[i].compression = PNG_TEXT_COMPRESSION_NONE;
        chunks[i].key = const_cast<char*>(text[i].first.c_str());
        chunks[i].text = const_cast<char*>(text[i].second.c_str());
        chunks[i].text_length = text[i].second.size();
    }
    detail::PngWriteJob job{&out, static_cast<png_uint_32>(r.width), static_cast<png_uint_32>(r.height), r.bit_depth,
                            r.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, rows.data(), chunks.data(),
                            static_cast<int>(chunks.size())};
    std::string message;
    if (!detail::png_write_all(job, &message)) {
        throw Error("PNG encoding failed: " + message);
    }
    return out;
}

/// Binary (P5/P6) and ASCII (P2/P3) netpbm decoding, maxval up to 65535.
inline Raster decode_pnm(const std::vector<std::uint8_t>& bytes)
{
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') {
                    ++pos;
                }
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> long {
        skip_space();
        long v = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            any = true;
            ++pos;
            if (v > 1L << 30) {
                throw ParseError("netpbm header value too large", 0);
            }
        }
        if (!any) {
            throw ParseError("malformed netpbm header", 0);
        }
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '3' && bytes[1] != '5' && bytes[1] != '6')) {
        throw ParseError("not a PGM/PPM stream", 0);
    }
    const bool ascii = bytes[1] == '2' || bytes[1] == '3';
    Raster r;
    r.channels = (bytes[1] == '3' || bytes[1] == '6') ? 3 : 1;
    pos = 2;
    r.width = read_int();
    r.height = read_int();
    const long maxval = read_int();
    if (r.width < 1 || r.height < 1 || maxval < 1 || maxval > 65535) {
        throw ParseError("netpbm dimensions or maxval out of range", 0);
    }
    if (r.width * r.height > max_decoded_pixels) {
        throw SizeError("netpbm raster exceeds the pixel limit");
    }
    r.bit_depth = maxval > 255 ? 16 : 8;
    const double rescale = r.max_value() / static_cast<double>(maxval);
    const auto count = static_cast<std::size_t>(r.width * r.height * r.channels);
    r.samples.resize(count);
    if (ascii) {
        for (std::size_t i = 0; i < count; ++i) {
            r.samples[i] = static_cast<std::uint16_t>(std::lround(std::min(read_int(), maxval) * rescale));
        }
        return r;
    }
    ++pos; // single whitespace after maxval
    const std::size_t width = maxval > 255 ? 2 : 1;
    if (pos + count * width > bytes.size()) {
        throw ParseError("truncated netpbm raster", 0);
    }
    for (std::size_t i = 0; i < count; ++i) {
        long v = bytes[pos + i * width];
        if (width == 2) {
            v = (v << 8) | bytes[pos + i * width + 1];
        }
        r.samples[i] = static_cast<std::uint16_t>(std::lround(std::min(v, maxval) * rescale));
    }
    return r;
}

inline std::vector<std::uint8_t> encode_pnm(const Raster& r)
{
    if (r.channels != 1 && r.channels != 3) {
        throw UnsupportedError("encode_pnm: only gray or RGB rasters are written");
    }
    std::ostringstream head;
    head << (r.channels == 3 ? "P6" : "P5") << '\n' << r.width << ' ' << r.height << '\n' << r.max_value() << '\n';
    const std::string h = head.str();
    std::vector<std::uint8_t> out(h.begin(), h.end());
    for (auto v : r.samples) {
        if (r.bit_depth == 16) {
            out.push_back(static_cast<std::uint8_t>(v >> 8));
        }
        out.push_back(static_cast<std::uint8_t>(v & 0xff));
    }
    return out;
}

/// Decodes PNG or netpbm, chosen by signature.
inline Raster decode_raster(const std::vector<std::uint8_t>& bytes)
{
    return is_png(bytes) ? decode_png(bytes) : decode_pnm(bytes);
}

inline Raster load_raster(const std::string& path)
{
    try {
        return decode_raster(detail::read_bytes(path));
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what(), e.line());
    }
}

/// Scales samples to [0,1]; gray input is replicated into three channels
/// when `rgb` is set.
inline ImageTensor to_image(const Raster& r, bool rgb = true)
{
    if (r.channels != 1 && r.channels != 3) {
        throw UnsupportedError("to_image: unsupported channel count " + std::to_string(r.channels));
    }
    ImageTensor img = ImageTensor::zeros(r.height, r.width, rgb ? 3 : r.channels);
    const double scale = 1.0 / r.max_value();
    for (Index y = 0; y < r.height; ++y) {
        for (Index x = 0; x < r.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                img.at(y, x, c) = r.at(y, x, std::min(c, r.channels - 1)) * scale;
            }
        }
    }
    return img;
}

inline Raster to_raster(const ImageTensor& img, int bit_depth = 8)
{
    Raster r;
    r.height = img.height;
    r.width = img.width;
    r.channels = img.channels;
    r.bit_depth = bit_depth;
    const double top = r.max_value();
    r.samples.resize(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        r.samples[i] = static_cast<std::uint16_t>(std::lround(std::clamp(img.data[i], 0.0, 1.0) * top));
    }
    return r;
}

inline ImageTensor load_image(const std::string& path)
{
    return to_image(load_raster(path));
}

/// Writes PNG unless the path ends in .ppm/.pgm.
inline void save_image(const std::string& path, const ImageTensor& img,
                       const std::vector<std::pair<std::string, std::string>>& text = {})
{
    const auto dot = path.find_last_of('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    const Raster r = to_raster(img);
    detail::write_bytes(path, ext == ".ppm" || ext == ".pgm" ? encode_pnm(r) : encode_png(r, text));
}

/// Feature dimension: a 3x3 RGB patch followed by the patch coordinates.
inline constexpr Index feature_dimension = 45;

/// Per-pixel features: the 3x3 RGB patch around the pixel (edge pixels
/// replicated), then the (row, col) coordinates of the same nine clamped
/// patch pixels, both in row-major patch order. Row i*width + j holds pixel (i, j).
inline PointSet extract_features(const ImageTensor& img, unsigned threads = 0)
{
    if (img.channels != 3) {
        throw ParseError("extract_features: expected 3 channels, got " + std::to_string(img.channels), 0);
    }
    const Index h = img.height;
    const Index w = img.width;
    PointSet f(h * w, feature_dimension);
    parallel_for(
        static_cast<std::size_t>(h),
        [&](std::size_t yi) {
            const auto y = static_cast<Index>(yi);
            for (Index x = 0; x < w; ++x) {
                const Index row = y * w + x;
                int slot = 0;
                for (Index dy = -1; dy <= 1; ++dy) {
                    for (Index dx = -1; dx <= 1; ++dx, ++slot) {
                        const Index py = std::clamp<Index>(y + dy, 0, h - 1);
                        const Index px = std::clamp<Index>(x + dx, 0, w - 1);
                        for (int c = 0; c < 3; ++c) {
                            f(row, 3 * slot + c) = img.at(py, px, c);
                        }
                        f(row, 27 + 2 * slot) = static_cast<double>(py);
                        f(row, 27 + 2 * slot + 1) = static_cast<double>(px);
                    }
                }
            }
        },
        threads);
    return f;
}

/// Pixel graph of an image: 9-NN over the patch features.
inline SparseGraph image_graph(const ImageTensor& img, Index k_nn = 9, double sigma_percentile = 25.0,
                               KnnGraphInfo* info = nullptr, unsigned threads = 0)
{
    return knn_graph(extract_features(img, threads), k_nn, sigma_percentile, info, threads);
}

/// Binary mask from a gray or RGB raster: a pixel is 1 when its first
/// channel is above half range.
inline std::vector<std::uint8_t> raster_to_mask(const Raster& r)
{
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(r.height * r.width));
    const double half = r.max_value() / 2.0;
    for (Index y = 0; y < r.height; ++y) {
        for (Index x = 0; x < r.width; ++x) {
            mask[static_cast<std::size_t>(y * r.width + x)] = r.at(y, x, 0) > half ? 1 : 0;
        }
    }
    return mask;
}

inline Raster mask_to_raster(const std::vector<std::uint8_t>& mask, Index height, Index width)
{
    if (mask.size() != static_cast<std::size_t>(height * width)) {
        throw ShapeError("mask_to_raster: mask size does not match the shape");
    }
    Raster r;
    r.height = height;
    r.width = width;
    r.channels = 1;
    r.bit_depth = 8;
    r.samples.resize(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        r.samples[i] = mask[i] ? 255 : 0;
    }
    return r;
}

} // namespace gsamp
