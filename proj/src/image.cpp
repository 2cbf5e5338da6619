#include "nsim/image.hpp"

#include <png.h>

#include <array>
#include <csetjmp>
#include <cstring>
#include <fstream>

namespace nsim {

namespace {

void on_png_error(png_structp png, png_const_charp msg) {
  *static_cast<std::string*>(png_get_error_ptr(png)) = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct ReadCursor {
  std::span<const uint8_t> data;
  size_t offset = 0;
};

void read_bytes(png_structp png, png_bytep out, png_size_t n) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + n > cur->data.size()) png_error(png, "truncated PNG data");
  std::memcpy(out, cur->data.data() + cur->offset, n);
  cur->offset += n;
}

void write_bytes(png_structp png, png_bytep in, png_size_t n) {
  auto* out = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + n);
}

void flush_bytes(png_structp) {}

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::vector<uint8_t> encode_png(const Frame& frame) {
  if (frame.height <= 0 || frame.width <= 0 ||
      frame.pixels.size() != static_cast<size_t>(frame.height * frame.width * 3)) {
    throw ContractError("encode_png: frame buffer does not match its extents");
  }
  std::string error;
  std::vector<uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("encode_png: libpng initialisation failed");
  }
  std::vector<png_bytep> rows(static_cast<size_t>(frame.height));
  for (int y = 0; y < frame.height; ++y) {
    rows[static_cast<size_t>(y)] = const_cast<png_bytep>(frame.pixels.data() + static_cast<size_t>(y * frame.width * 3));
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("encode_png: " + error);
  }
  png_set_write_fn(png, &out, write_bytes, flush_bytes);
  png_set_IHDR(png, info, static_cast<png_uint_32>(frame.width), static_cast<png_uint_32>(frame.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Frame decode_png(std::span<const uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("not a PNG image", 0);
  std::string error;
  ReadCursor cursor{bytes, 0};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("decode_png: libpng initialisation failed");
  }
  Frame f;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("PNG decode failed: " + error, cursor.offset);
  }
  png_set_read_fn(png, &cursor, read_bytes);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int colour = png_get_color_type(png, info);
  if (w > 8192 || h > 8192) png_error(png, "image larger than 8192 pixels");
  if (bit_depth == 16) png_set_strip_16(png);
  if (colour == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (colour == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (colour == PNG_COLOR_TYPE_GRAY || colour == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  f.height = static_cast<int>(h);
  f.width = static_cast<int>(w);
  f.pixels.resize(static_cast<size_t>(w) * h * 3);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = f.pixels.data() + static_cast<size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return f;
}

void write_png(const std::filesystem::path& path, const Frame& frame) {
  const auto bytes = encode_png(frame);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

std::string base64_encode(std::span<const uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (size_t i = 0; i < bytes.size(); i += 3) {
    const uint32_t b0 = bytes[i];
    const uint32_t b1 = i + 1 < bytes.size() ? bytes[i + 1] : 0;
    const uint32_t b2 = i + 2 < bytes.size() ? bytes[i + 2] : 0;
    const uint32_t v = (b0 << 16) | (b1 << 8) | b2;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kAlphabet[v & 63] : '=';
  }
  return out;
}

std::vector<uint8_t> base64_decode(std::string_view text) {
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[static_cast<uint8_t>(kAlphabet[i])] = i;
  if (text.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4", text.size());
  std::vector<uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + static_cast<size_t>(k)];
      const bool last_group = i + 4 == text.size();
      if (c == '=' && last_group && k >= 2) {
        v[k] = 0;
        ++pad;
        continue;
      }
      if (pad > 0 || lut[static_cast<uint8_t>(c)] < 0) throw FormatError("invalid base64 character", i + static_cast<size_t>(k));
      v[k] = lut[static_cast<uint8_t>(c)];
    }
    const uint32_t n = (static_cast<uint32_t>(v[0]) << 18) | (static_cast<uint32_t>(v[1]) << 12) |
                       (static_cast<uint32_t>(v[2]) << 6) | static_cast<uint32_t>(v[3]);
    out.push_back(static_cast<uint8_t>(n >> 16));
    if (pad < 2) out.push_back(static_cast<uint8_t>((n >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<uint8_t>(n & 0xff));
  }
  return out;
}

Frame resize_nearest(const Frame& frame, int height, int width) {
  if (height <= 0 || width <= 0) throw ContractError("resize_nearest: target extents must be positive");
  Frame out{height, width, std::vector<uint8_t>(static_cast<size_t>(height * width * 3))};
  for (int y = 0; y < height; ++y) {
    const int sy = static_cast<int>(static_cast<int64_t>(y) * frame.height / height);
    for (int x = 0; x < width; ++x) {
      const int sx = static_cast<int>(static_cast<int64_t>(x) * frame.width / width);
      std::memcpy(&out.pixels[static_cast<size_t>((y * width + x) * 3)], frame.at(sy, sx), 3);
    }
  }
  return out;
}

Frame tile(const std::vector<std::vector<Frame>>& rows, int scale) {
  if (rows.empty() || rows[0].empty()) throw ContractError("tile: empty grid");
  if (scale < 1) throw ContractError("tile: scale must be >= 1");
  const int ch = rows[0][0].height, cw = rows[0][0].width;
  const int cols = static_cast<int>(rows[0].size());
  const int h = ch * scale * static_cast<int>(rows.size()), w = cw * scale * cols;
  Frame out{h, w, std::vector<uint8_t>(static_cast<size_t>(h * w * 3), 0)};
  for (size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<int>(rows[r].size()) != cols) throw ContractError("tile: rows differ in length");
    for (int c = 0; c < cols; ++c) {
      const Frame& cell = rows[r][static_cast<size_t>(c)];
      if (cell.height != ch || cell.width != cw) throw ContractError("tile: cells differ in size");
      for (int y = 0; y < ch * scale; ++y)
        for (int x = 0; x < cw * scale; ++x) {
          const int oy = static_cast<int>(r) * ch * scale + y, ox = c * cw * scale + x;
          std::memcpy(&out.pixels[static_cast<size_t>((oy * w + ox) * 3)], cell.at(y / scale, x / scale), 3);
        }
    }
  }
  return out;
}

}  // namespace nsim
