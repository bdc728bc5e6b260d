#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "histmap/error.hpp"
#include "histmap/raster.hpp"

namespace histmap {

enum class ImageErrorCode {
  missing_file,
  malformed_header,
  bit_depth_mismatch,
  malformed_payload,
  write_failed,
};

class ImageError : public Error {
 public:
  ImageError(ImageErrorCode code, const std::string& what)
      : Error(code == ImageErrorCode::missing_file || code == ImageErrorCode::write_failed ? ErrorKind::io
                                                                                           : ErrorKind::format,
              what),
        code_(code) {}
  ImageErrorCode code() const noexcept { return code_; }

 private:
  ImageErrorCode code_;
};

/// Grids are stored as 8-bit grayscale PNG, masks as 16-bit grayscale PNG.
RasterGrid load_grid(const std::filesystem::path& path);
InstanceMask load_mask(const std::filesystem::path& path);
void save_grid(const std::filesystem::path& path, const RasterGrid& grid);
void save_mask(const std::filesystem::path& path, const InstanceMask& mask);

/// Interleaved 8-bit RGB, used for overlays.
void save_rgb(const std::filesystem::path& path, int height, int width, std::span<const uint8_t> rgb);

}  // namespace histmap
