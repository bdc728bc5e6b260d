#include "histmap/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <memory>

namespace histmap {

namespace {

constexpr size_t kMsgLen = 256;

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void on_png_error(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<char*>(png_get_error_ptr(png));
  std::snprintf(buf, kMsgLen, "%s", msg);
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

enum class ReadStatus { ok, header_error, depth_mismatch, payload_error };

struct RawRead {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
  unsigned char* pixels = nullptr;  // malloc'd, released by the caller
};

// Everything between setjmp and longjmp is plain C state; no destructors are
// skipped when libpng bails out.
ReadStatus read_png_gray(std::FILE* fp, int expected_depth, RawRead* out, char* msg) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, msg, on_png_error, on_png_warning);
  if (!png) return ReadStatus::header_error;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return ReadStatus::header_error;
  }
  volatile int stage = 0;
  unsigned char* volatile pixels = nullptr;
  png_bytep* volatile rows = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::free(pixels);
    std::free(rows);
    return stage == 0 ? ReadStatus::header_error : ReadStatus::payload_error;
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  out->width = png_get_image_width(png, info);
  out->height = png_get_image_height(png, info);
  out->bit_depth = png_get_bit_depth(png, info);
  out->color_type = png_get_color_type(png, info);
  if (out->color_type != PNG_COLOR_TYPE_GRAY || out->bit_depth != expected_depth) {
    png_destroy_read_struct(&png, &info, nullptr);
    return ReadStatus::depth_mismatch;
  }
  stage = 1;
  if (expected_depth == 16) {
    const unsigned probe = 1;
    if (*reinterpret_cast<const unsigned char*>(&probe) == 1) png_set_swap(png);
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  const size_t rowbytes = png_get_rowbytes(png, info);
  pixels = static_cast<unsigned char*>(std::malloc(rowbytes * out->height));
  rows = static_cast<png_bytep*>(std::malloc(sizeof(png_bytep) * out->height));
  if (!pixels || !rows) png_error(png, "out of memory");
  for (png_uint_32 r = 0; r < out->height; ++r) rows[r] = pixels + r * rowbytes;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::free(rows);
  out->pixels = pixels;
  return ReadStatus::ok;
}

bool write_png(std::FILE* fp, png_uint_32 width, png_uint_32 height, int bit_depth, int color_type,
               const unsigned char* pixels, size_t rowbytes, char* msg) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, msg, on_png_error, on_png_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  png_bytep* volatile rows = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::free(rows);
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) {
    const unsigned probe = 1;
    if (*reinterpret_cast<const unsigned char*>(&probe) == 1) png_set_swap(png);
  }
  rows = static_cast<png_bytep*>(std::malloc(sizeof(png_bytep) * height));
  if (!rows) png_error(png, "out of memory");
  for (png_uint_32 r = 0; r < height; ++r) rows[r] = const_cast<unsigned char*>(pixels) + r * rowbytes;
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::free(rows);
  return true;
}

template <typename Pixel>
std::vector<Pixel> load_gray(const std::filesystem::path& path, int depth, int& height, int& width) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ImageError(ImageErrorCode::missing_file, "cannot open image: " + path.string());
  unsigned char sig[8] = {};
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw ImageError(ImageErrorCode::malformed_header, "not a PNG file: " + path.string());
  char msg[kMsgLen] = {};
  RawRead raw;
  switch (read_png_gray(fp.get(), depth, &raw, msg)) {
    case ReadStatus::header_error:
      throw ImageError(ImageErrorCode::malformed_header, "malformed PNG header in " + path.string() + ": " + msg);
    case ReadStatus::depth_mismatch:
      throw ImageError(ImageErrorCode::bit_depth_mismatch,
                       path.string() + ": expected " + std::to_string(depth) + "-bit grayscale, found " +
                           std::to_string(raw.bit_depth) + "-bit color type " + std::to_string(raw.color_type));
    case ReadStatus::payload_error:
      throw ImageError(ImageErrorCode::malformed_payload, "malformed PNG payload in " + path.string() + ": " + msg);
    case ReadStatus::ok:
      break;
  }
  std::unique_ptr<unsigned char, decltype(&std::free)> owned(raw.pixels, &std::free);
  if (raw.width == 0 || raw.height == 0 || raw.width > 1u << 15 || raw.height > 1u << 15)
    throw ImageError(ImageErrorCode::malformed_header, "unsupported image dimensions in " + path.string());
  height = static_cast<int>(raw.height);
  width = static_cast<int>(raw.width);
  std::vector<Pixel> px(static_cast<size_t>(height) * width);
  std::memcpy(px.data(), owned.get(), px.size() * sizeof(Pixel));
  return px;
}

void save_raw(const std::filesystem::path& path, int height, int width, int depth, int color_type,
              const unsigned char* pixels, size_t rowbytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw ImageError(ImageErrorCode::write_failed, "cannot create image: " + path.string());
  char msg[kMsgLen] = {};
  if (!write_png(fp.get(), static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth, color_type,
                 pixels, rowbytes, msg))
    throw ImageError(ImageErrorCode::write_failed, "failed writing " + path.string() + ": " + msg);
  if (std::fflush(fp.get()) != 0) throw ImageError(ImageErrorCode::write_failed, "flush failed: " + path.string());
}

}  // namespace

RasterGrid load_grid(const std::filesystem::path& path) {
  int h = 0, w = 0;
  auto px = load_gray<uint8_t>(path, 8, h, w);
  return RasterGrid(h, w, std::move(px));
}

InstanceMask load_mask(const std::filesystem::path& path) {
  int h = 0, w = 0;
  auto px = load_gray<uint16_t>(path, 16, h, w);
  return InstanceMask(h, w, std::move(px));
}

void save_grid(const std::filesystem::path& path, const RasterGrid& grid) {
  save_raw(path, grid.height(), grid.width(), 8, PNG_COLOR_TYPE_GRAY, grid.data().data(),
           static_cast<size_t>(grid.width()));
}

void save_mask(const std::filesystem::path& path, const InstanceMask& mask) {
  save_raw(path, mask.height(), mask.width(), 16, PNG_COLOR_TYPE_GRAY,
           reinterpret_cast<const unsigned char*>(mask.data().data()), static_cast<size_t>(mask.width()) * 2);
}

void save_rgb(const std::filesystem::path& path, int height, int width, std::span<const uint8_t> rgb) {
  require(height >= 1 && width >= 1 && rgb.size() == static_cast<size_t>(height) * width * 3,
          "RGB payload does not match dimensions");
  save_raw(path, height, width, 8, PNG_COLOR_TYPE_RGB, rgb.data(), static_cast<size_t>(width) * 3);
}

}  // namespace histmap
