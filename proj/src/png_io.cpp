#include "incrseg/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "incrseg/error.hpp"

namespace incrseg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr file(std::fopen(path.c_str(), mode));
  if (!file) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return file;
}

class PngReader {
 public:
  explicit PngReader(const std::filesystem::path& path) : path_(path), file_(open_file(path, "rb")) {
    png_byte header[8];
    if (std::fread(header, 1, 8, file_.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
      throw Error(ErrorCode::IoError, path.string() + " is not a PNG file");
    }
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info_ = png_ ? png_create_info_struct(png_) : nullptr;
    if (!png_ || !info_) throw Error(ErrorCode::IoError, "libpng initialisation failed");
  }
  ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  // `configure` installs transforms after the header is read; returns the
  // decoded raster. libpng reports failures through longjmp.
  template <typename Configure>
  RasterImage decode(Configure configure) {
    RasterImage out;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png_))) throw Error(ErrorCode::IoError, "corrupt PNG " + path_.string());
    png_init_io(png_, file_.get());
    png_set_sig_bytes(png_, 8);
    png_read_info(png_, info_);
    configure(png_, info_);
    png_read_update_info(png_, info_);
    out.width = static_cast<int>(png_get_image_width(png_, info_));
    out.height = static_cast<int>(png_get_image_height(png_, info_));
    out.channels = png_get_channels(png_, info_);
    out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
    rows.resize(out.height);
    for (int y = 0; y < out.height; ++y) {
      rows[y] = out.pixels.data() + static_cast<std::size_t>(y) * out.width * out.channels;
    }
    png_read_image(png_, rows.data());
    png_read_end(png_, nullptr);
    return out;
  }

 private:
  std::filesystem::path path_;
  FilePtr file_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

}  // namespace

RasterImage read_png_rgb(const std::filesystem::path& path) {
  PngReader reader(path);
  return reader.decode([](png_structp png, png_infop info) {
    const int color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
  });
}

RasterImage read_png_indexed(const std::filesystem::path& path) {
  PngReader reader(path);
  bool single_channel = true;
  RasterImage out = reader.decode([&](png_structp png, png_infop info) {
    const int color = png_get_color_type(png, info);
    single_channel = color == PNG_COLOR_TYPE_PALETTE || color == PNG_COLOR_TYPE_GRAY;
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (png_get_bit_depth(png, info) < 8) png_set_packing(png);
  });
  if (!single_channel || out.channels != 1) {
    throw Error(ErrorCode::InvalidMask, path.string() + " is not a single-channel indexed image");
  }
  return out;
}

void write_png(const std::filesystem::path& path, const RasterImage& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw Error(ErrorCode::IoError, "write_png supports 1 or 3 channels");
  }
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, "libpng initialisation failed");
  }
  std::vector<png_bytep> rows(image.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, "failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.pixels.data() + static_cast<std::size_t>(y) * image.width * image.channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace incrseg
