#pragma once

#include <png.h>

#include <array>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "mpv/image.hpp"

namespace mpv {

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

/// Cursor over a PNM header: whitespace separated tokens, '#' comments.
class PnmHeaderReader {
 public:
  PnmHeaderReader(const std::vector<std::uint8_t>& bytes, std::string path)
      : bytes_(bytes), path_(std::move(path)) {}

  long next_int() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000L) throw FormatError("'" + path_ + "': header value too large");
      ++pos_;
    }
    if (pos_ == start) throw FormatError("'" + path_ + "': malformed PNM header");
    return value;
  }

  /// Consumes the single whitespace byte that terminates the header.
  std::size_t body_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
      throw FormatError("'" + path_ + "': malformed PNM header");
    return pos_ + 1;
  }

  void seek(std::size_t pos) { pos_ = pos; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& path) {
  if (bytes.size() < 2 || bytes[0] != 'P')
    throw FormatError("'" + path + "': not a PNM file");
  if (bytes[1] != '5') {
    throw UnsupportedFormat("'" + path + "': PNM variant P" + std::string(1, bytes[1]) +
                            " is not supported (binary grayscale P5 only)");
  }
  PnmHeaderReader reader(bytes, path);
  reader.seek(2);
  const long w = reader.next_int();
  const long h = reader.next_int();
  const long maxval = reader.next_int();
  if (w < 1 || h < 1) throw FormatError("'" + path + "': invalid dimensions");
  if (maxval != 255) {
    throw UnsupportedFormat("'" + path + "': unsupported bit depth (maxval " +
                            std::to_string(maxval) + ", expected 255)");
  }
  const std::size_t offset = reader.body_offset();
  const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() < offset + count) {
    throw FormatError("'" + path + "': truncated pixel data (" +
                      std::to_string(bytes.size() - offset) + " of " + std::to_string(count) +
                      " bytes)");
  }
  std::vector<std::uint8_t> data(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                                 bytes.begin() + static_cast<std::ptrdiff_t>(offset + count));
  return GrayImage(static_cast<int>(w), static_cast<int>(h), std::move(data));
}

inline std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

inline GrayImage decode_png(const std::vector<std::uint8_t>& bytes, const std::string& path) {
  // IHDR is always the first chunk: 8 signature + 4 length + 4 type + 13 data.
  if (bytes.size() < 33 || std::memcmp(bytes.data() + 12, "IHDR", 4) != 0)
    throw FormatError("'" + path + "': malformed PNG header");
  const int bit_depth = bytes[24];
  const int color_type = bytes[25];
  if (color_type != PNG_COLOR_TYPE_GRAY) {
    throw UnsupportedFormat("'" + path + "': PNG colour type " + std::to_string(color_type) +
                            " is not supported (8-bit grayscale only)");
  }
  if (bit_depth != 8) {
    throw UnsupportedFormat("'" + path + "': unsupported bit depth " +
                            std::to_string(bit_depth) + " (8-bit grayscale only)");
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError("'" + path + "': " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> data(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, data.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("'" + path + "': " + msg);
  }
  const int w = static_cast<int>(image.width);
  const int h = static_cast<int>(image.height);
  png_image_free(&image);
  return GrayImage(w, h, std::move(data));
}

}  // namespace detail

/// Reads a binary PGM (P5, maxval 255) or an 8-bit grayscale PNG.
inline GrayImage load_image(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  static constexpr std::array<std::uint8_t, 8> kPngSignature{0x89, 'P', 'N', 'G',
                                                             '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin()))
    return detail::decode_png(bytes, path.string());
  return detail::decode_pgm(bytes, path.string());
}

/// Writes PNG when the extension is .png, binary PGM otherwise.
inline void save_image(const GrayImage& img, const std::filesystem::path& path) {
  if (detail::lower_extension(path) == ".png") {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.pixels().data(), 0,
                                 nullptr)) {
      throw IoError("cannot write '" + path.string() + "': " + image.message);
    }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels().data()),
            static_cast<std::streamsize>(img.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// Remap table file: "MPVRMAP1" magic, uint32 width, uint32 height (all
// little-endian), then width*height interleaved float32 (src_x, src_y).

inline constexpr char kRemapMagic[8] = {'M', 'P', 'V', 'R', 'M', 'A', 'P', '1'};

namespace detail {

inline void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline std::uint32_t get_le32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

}  // namespace detail

inline void save_remap_table(const RemapTable& table, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(std::begin(kRemapMagic), std::end(kRemapMagic));
  detail::put_le32(bytes, static_cast<std::uint32_t>(table.width));
  detail::put_le32(bytes, static_cast<std::uint32_t>(table.height));
  for (std::size_t i = 0; i < table.src_x.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &table.src_x[i], 4);
    detail::put_le32(bytes, bits);
    std::memcpy(&bits, &table.src_y[i], 4);
    detail::put_le32(bytes, bits);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline RemapTable load_remap_table(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kRemapMagic, 8) != 0)
    throw FormatError("'" + path.string() + "': not a remap table (bad magic)");
  const auto w = detail::get_le32(bytes.data() + 8);
  const auto h = detail::get_le32(bytes.data() + 12);
  if (w == 0 || h == 0 || w > 65536 || h > 65536)
    throw FormatError("'" + path.string() + "': invalid remap table dimensions");
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() != 16 + n * 8)
    throw FormatError("'" + path.string() + "': remap table body has wrong length");
  RemapTable table(static_cast<int>(w), static_cast<int>(h));
  const std::uint8_t* p = bytes.data() + 16;
  for (std::size_t i = 0; i < n; ++i, p += 8) {
    std::uint32_t bx = detail::get_le32(p);
    std::uint32_t by = detail::get_le32(p + 4);
    std::memcpy(&table.src_x[i], &bx, 4);
    std::memcpy(&table.src_y[i], &by, 4);
  }
  return table;
}

}  // namespace mpv
