#include "unblur/image_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "unblur/common.hpp"

namespace unblur {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
    put_u32(out, crc);
}

const std::uint8_t kSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

std::vector<std::uint8_t> quantize_image(const Image& img) {
    if (img.rank() != 3 || img.dim(2) != 3) throw ArgumentError("quantize: expected [H,W,3]");
    std::vector<std::uint8_t> px(img.numel());
    for (std::size_t i = 0; i < img.numel(); ++i) {
        float v = std::min(1.0f, std::max(-1.0f, img[i]));
        px[i] = static_cast<std::uint8_t>(std::lround(255.0 * (double(v) + 1.0) / 2.0));
    }
    return px;
}

Image dequantize_image(const std::vector<std::uint8_t>& px, int h, int w) {
    Image img({h, w, 3});
    for (std::size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(2.0 * px[i] / 255.0 - 1.0);
    return img;
}

std::vector<std::uint8_t> encode_png(const Image& img) {
    int h = img.dim(0), w = img.dim(1);
    std::vector<std::uint8_t> px = quantize_image(img);

    // filter 0 scanlines
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * (1 + static_cast<std::size_t>(w) * 3));
    for (int y = 0; y < h; ++y) {
        std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * (1 + static_cast<std::size_t>(w) * 3);
        row[0] = 0;
        std::memcpy(row + 1, px.data() + static_cast<std::size_t>(y) * w * 3, static_cast<std::size_t>(w) * 3);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("png deflate failed");
    comp.resize(comp_len);

    std::vector<std::uint8_t> out(kSig, kSig + 8);
    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(w));
    put_u32(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // truecolor
    ihdr.push_back(0);   // deflate
    ihdr.push_back(0);   // filter method
    ihdr.push_back(0);   // no interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", comp);
    put_chunk(out, "IEND", {});
    return out;
}

void write_png(const std::string& path, const Image& img) {
    std::vector<std::uint8_t> bytes = encode_png(img);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write: " + path);
}

Image read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSig, 8) != 0) throw IoError("not a png: " + path);

    int w = 0, h = 0;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    bool seen_ihdr = false;
    while (pos + 8 <= bytes.size()) {
        std::uint32_t len = get_u32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw IoError("truncated png: " + path);
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw IoError("bad IHDR: " + path);
            w = static_cast<int>(get_u32(data));
            h = static_cast<int>(get_u32(data + 4));
            if (data[8] != 8 || data[9] != 2 || data[12] != 0)
                throw IoError("unsupported png format (need 8-bit RGB, no interlace): " + path);
            seen_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr || w <= 0 || h <= 0 || idat.empty()) throw IoError("malformed png: " + path);

    std::size_t stride = static_cast<std::size_t>(w) * 3;
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * (1 + stride));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw IoError("png inflate failed: " + path);

    std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * stride);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * (1 + stride);
        std::uint8_t filter = row[0];
        const std::uint8_t* src = row + 1;
        std::uint8_t* dst = px.data() + static_cast<std::size_t>(y) * stride;
        const std::uint8_t* up = y > 0 ? px.data() + static_cast<std::size_t>(y - 1) * stride : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            int a = i >= 3 ? dst[i - 3] : 0;
            int b = up ? up[i] : 0;
            int c = (up && i >= 3) ? up[i - 3] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw IoError("bad png filter: " + path);
            }
            dst[i] = static_cast<std::uint8_t>(v & 0xff);
        }
    }
    return dequantize_image(px, h, w);
}

Image stack_rows(const std::vector<Image>& imgs) {
    if (imgs.empty()) throw ArgumentError("stack_rows: empty batch");
    int h = imgs[0].dim(0), w = imgs[0].dim(1), c = imgs[0].dim(2);
    Image out({static_cast<int>(imgs.size()), h, w, c});
    std::size_t n = imgs[0].numel();
    for (std::size_t b = 0; b < imgs.size(); ++b) {
        if (!same_shape(imgs[b], imgs[0])) throw ArgumentError("stack_rows: shape mismatch");
        std::copy(imgs[b].ptr(), imgs[b].ptr() + n, out.ptr() + b * n);
    }
    return out;
}

}  // namespace unblur
