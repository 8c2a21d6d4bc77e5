#include "millie/imageio.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "millie/errors.hpp"

namespace millie {

namespace {

constexpr std::uint8_t kPngSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

std::uint32_t read_u32_be(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t read_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::int32_t read_i32_le(const std::uint8_t* p) {
  return static_cast<std::int32_t>(read_u32_le(p));
}

void put_u16_le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

void append_chunk(std::vector<std::uint8_t>& out, const char* type,
                  const std::vector<std::uint8_t>& payload) {
  put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uLong crc =
      crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

RgbImage decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
    throw DataError("not a PNG: bad signature");

  int width = 0, height = 0, bit_depth = 0, color_type = 0;
  std::vector<std::uint8_t> idat;
  std::vector<std::uint8_t> palette;  // RGB triples
  bool saw_ihdr = false, saw_iend = false;

  std::size_t pos = 8;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = read_u32_be(bytes.data() + pos);
    if (pos + 12 + len > bytes.size()) throw DataError("PNG chunk overruns file");
    const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    const std::uint8_t* payload = bytes.data() + pos + 8;
    const std::uint32_t stored_crc = read_u32_be(payload + len);
    const uLong crc = crc32(0L, bytes.data() + pos + 4, static_cast<uInt>(len + 4));
    if (static_cast<std::uint32_t>(crc) != stored_crc)
      throw IntegrityError("PNG chunk CRC mismatch in '" + std::string(type, 4) + "'");

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw DataError("PNG IHDR length must be 13");
      width = static_cast<int>(read_u32_be(payload));
      height = static_cast<int>(read_u32_be(payload + 4));
      bit_depth = payload[8];
      color_type = payload[9];
      if (payload[12] != 0) throw DataError("interlaced PNG is not supported");
      if (bit_depth != 8) throw DataError("only 8-bit PNG is supported");
      if (color_type != 0 && color_type != 2 && color_type != 3 && color_type != 4 &&
          color_type != 6)
        throw DataError("unsupported PNG color type " + std::to_string(color_type));
      if (width <= 0 || height <= 0) throw DataError("PNG has empty dimensions");
      saw_ihdr = true;
    } else if (std::memcmp(type, "PLTE", 4) == 0) {
      palette.assign(payload, payload + len);
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_iend = true;
      break;
    }
    pos += 12 + len;
  }
  if (!saw_ihdr || !saw_iend || idat.empty()) throw DataError("PNG is missing required chunks");

  const int channels = color_type == 0 ? 1 : color_type == 2 ? 3 : color_type == 3 ? 1
                       : color_type == 4 ? 2 : 4;
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  const std::size_t raw_size = (stride + 1) * height;
  std::vector<std::uint8_t> raw(raw_size);
  uLongf dest_len = static_cast<uLongf>(raw_size);
  const int rc = uncompress(raw.data(), &dest_len, idat.data(), static_cast<uLong>(idat.size()));
  if (rc != Z_OK || dest_len != raw_size) throw DataError("PNG inflate failed");

  // undo per-row filters in place
  std::vector<std::uint8_t> img(stride * height);
  for (int y = 0; y < height; ++y) {
    const std::uint8_t filter = raw[(stride + 1) * y];
    const std::uint8_t* src = raw.data() + (stride + 1) * y + 1;
    std::uint8_t* cur = img.data() + stride * y;
    const std::uint8_t* up = y > 0 ? img.data() + stride * (y - 1) : nullptr;
    for (std::size_t x = 0; x < stride; ++x) {
      const int a = x >= static_cast<std::size_t>(channels) ? cur[x - channels] : 0;
      const int b = up != nullptr ? up[x] : 0;
      const int c = (up != nullptr && x >= static_cast<std::size_t>(channels))
                        ? up[x - channels]
                        : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw DataError("PNG row uses unknown filter " + std::to_string(filter));
      }
      cur[x] = static_cast<std::uint8_t>(v & 0xff);
    }
  }

  RgbImage out(width, height);
  const std::size_t n = static_cast<std::size_t>(width) * height;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* px = img.data() + i * channels;
    std::uint8_t r, g, b;
    switch (color_type) {
      case 0: case 4: r = g = b = px[0]; break;
      case 2: case 6: r = px[0]; g = px[1]; b = px[2]; break;
      default: {  // palette
        const std::size_t idx = static_cast<std::size_t>(px[0]) * 3;
        if (idx + 2 >= palette.size()) throw DataError("PNG palette index out of range");
        r = palette[idx]; g = palette[idx + 1]; b = palette[idx + 2];
      }
    }
    out.pixels[i * 3 + 0] = r;
    out.pixels[i * 3 + 1] = g;
    out.pixels[i * 3 + 2] = b;
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
  std::vector<std::uint8_t> raw((stride + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw[(stride + 1) * y] = 0;  // filter: none
    std::memcpy(raw.data() + (stride + 1) * y + 1, img.pixels.data() + stride * y, stride);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("PNG deflate failed");
  compressed.resize(bound);

  std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);
  std::vector<std::uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(img.width));
  put_u32_be(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: RGB
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter method
  ihdr.push_back(0);   // no interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", compressed);
  append_chunk(out, "IEND", {});
  return out;
}

RgbImage decode_bmp(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 54 || bytes[0] != 'B' || bytes[1] != 'M')
    throw DataError("not a BMP: bad signature");
  const std::uint32_t data_offset = read_u32_le(bytes.data() + 10);
  const std::uint32_t header_size = read_u32_le(bytes.data() + 14);
  if (header_size < 40) throw DataError("BMP header too old");
  const std::int32_t width = read_i32_le(bytes.data() + 18);
  const std::int32_t height_raw = read_i32_le(bytes.data() + 22);
  const std::uint16_t bpp = static_cast<std::uint16_t>(bytes[28] | (bytes[29] << 8));
  const std::uint32_t compression = read_u32_le(bytes.data() + 30);
  if (bpp != 24 || compression != 0)
    throw DataError("only uncompressed 24-bit BMP is supported");
  const bool top_down = height_raw < 0;
  const int height = top_down ? -height_raw : height_raw;
  if (width <= 0 || height <= 0) throw DataError("BMP has empty dimensions");

  const std::size_t row_stride = (static_cast<std::size_t>(width) * 3 + 3) & ~std::size_t{3};
  if (data_offset + row_stride * height > bytes.size()) throw DataError("BMP pixel data truncated");

  RgbImage out(width, height);
  for (int y = 0; y < height; ++y) {
    const int src_row = top_down ? y : height - 1 - y;
    const std::uint8_t* src = bytes.data() + data_offset + row_stride * src_row;
    for (int x = 0; x < width; ++x) {
      out.at(y, x, 0) = src[x * 3 + 2];
      out.at(y, x, 1) = src[x * 3 + 1];
      out.at(y, x, 2) = src[x * 3 + 0];
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_bmp(const RgbImage& img) {
  const std::size_t row_stride = (static_cast<std::size_t>(img.width) * 3 + 3) & ~std::size_t{3};
  const std::uint32_t pixel_bytes = static_cast<std::uint32_t>(row_stride * img.height);
  std::vector<std::uint8_t> out;
  out.reserve(54 + pixel_bytes);
  out.push_back('B');
  out.push_back('M');
  put_u32_le(out, 54 + pixel_bytes);
  put_u16_le(out, 0);
  put_u16_le(out, 0);
  put_u32_le(out, 54);
  put_u32_le(out, 40);
  put_u32_le(out, static_cast<std::uint32_t>(img.width));
  put_u32_le(out, static_cast<std::uint32_t>(img.height));  // bottom-up
  put_u16_le(out, 1);
  put_u16_le(out, 24);
  put_u32_le(out, 0);
  put_u32_le(out, pixel_bytes);
  put_u32_le(out, 2835);  // 72 dpi
  put_u32_le(out, 2835);
  put_u32_le(out, 0);
  put_u32_le(out, 0);
  out.resize(54 + pixel_bytes, 0);
  for (int y = 0; y < img.height; ++y) {
    std::uint8_t* dst = out.data() + 54 + row_stride * (img.height - 1 - y);
    for (int x = 0; x < img.width; ++x) {
      dst[x * 3 + 0] = img.at(y, x, 2);
      dst[x * 3 + 1] = img.at(y, x, 1);
      dst[x * 3 + 2] = img.at(y, x, 0);
    }
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed on '" + path + "'");
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed on '" + path + "'");
}

RgbImage load_image(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'B' && bytes[1] == 'M') return decode_bmp(bytes);
  throw DataError("'" + path + "' is neither PNG nor BMP");
}

void save_png(const RgbImage& img, const std::string& path) {
  write_file_bytes(path, encode_png(img));
}

void save_bmp(const RgbImage& img, const std::string& path) {
  write_file_bytes(path, encode_bmp(img));
}

}  // namespace millie
