#include "otobias/image_io.hpp"

#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <jpeglib.h>
#include <png.h>

#include "otobias/error.hpp"

namespace otobias {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError(fmt::format("cannot open {}", path.string()));
  return f;
}

// ---------------------------------------------------------------------------
// PNG

struct PngError {
  std::jmp_buf jump;
  char message[256] = {};
};

void png_on_error(png_structp png, png_const_charp msg) {
  auto* err = static_cast<PngError*>(png_get_error_ptr(png));
  std::snprintf(err->message, sizeof err->message, "%s", msg);
  std::longjmp(err->jump, 1);
}

void png_on_warning(png_structp, png_const_charp) {}

ImageBuffer decode_png(std::FILE* file, const fs::path& path) {
  PngError err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_on_error, png_on_warning);
  if (!png) throw IoError("libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;

  if (setjmp(err.jump)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(fmt::format("corrupt PNG {}: {}", path.string(), err.message));
  }
  png_init_io(png, file);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(fmt::format("unsupported PNG layout in {}", path.string()));
  }
  pixels.resize(static_cast<std::size_t>(width) * height * 3);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return ImageBuffer(width, height, std::move(pixels));
}

// ---------------------------------------------------------------------------
// JPEG

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  bool warned = false;
  char message[JMSG_LENGTH_MAX] = {};
};

void jpeg_on_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Warnings (level -1) include premature end of data, where libjpeg pads
// the image with gray and carries on. Treat them as corruption.
void jpeg_on_message(j_common_ptr cinfo, int level) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  if (level < 0 && !err->warned) {
    err->warned = true;
    (*cinfo->err->format_message)(cinfo, err->message);
  }
}

ImageBuffer decode_jpeg(std::FILE* file, const fs::path& path) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_on_error;
  err.mgr.emit_message = jpeg_on_message;
  std::vector<std::uint8_t> pixels;

  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError(fmt::format("corrupt JPEG {}: {}", path.string(), err.message));
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const std::size_t width = cinfo.output_width;
  const std::size_t height = cinfo.output_height;
  pixels.resize(width * height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  if (err.warned) throw IoError(fmt::format("corrupt JPEG {}: {}", path.string(), err.message));
  return ImageBuffer(width, height, std::move(pixels));
}

}  // namespace

ImageFormat detect_format(std::span<const std::uint8_t> header) {
  static constexpr std::uint8_t kPng[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (header.size() >= 8 && std::equal(header.begin(), header.begin() + 8, kPng)) return ImageFormat::png;
  if (header.size() >= 3 && header[0] == 0xFF && header[1] == 0xD8 && header[2] == 0xFF) {
    return ImageFormat::jpeg;
  }
  return ImageFormat::unknown;
}

ImageBuffer decode_image(const fs::path& path) {
  FilePtr file = open_file(path, "rb");
  std::uint8_t header[8] = {};
  const std::size_t got = std::fread(header, 1, sizeof header, file.get());
  std::rewind(file.get());
  switch (detect_format(std::span(header, got))) {
    case ImageFormat::png:
      return decode_png(file.get(), path);
    case ImageFormat::jpeg:
      return decode_jpeg(file.get(), path);
    case ImageFormat::unknown:
      break;
  }
  throw IoError(fmt::format("unsupported image format: {}", path.string()));
}

void write_png(const ImageBuffer& image, const fs::path& path) {
  FilePtr file = open_file(path, "wb");
  PngError err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_on_error, png_on_warning);
  if (!png) throw IoError("libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(image.height());
  auto* base = const_cast<std::uint8_t*>(image.bytes().data());
  for (std::size_t y = 0; y < image.height(); ++y) rows[y] = base + y * image.width() * 3;

  if (setjmp(err.jump)) {
    png_destroy_write_struct(&png, &info);
    throw IoError(fmt::format("cannot write PNG {}: {}", path.string(), err.message));
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw IoError(fmt::format("cannot write PNG {}", path.string()));
}

void write_jpeg(const ImageBuffer& image, const fs::path& path, int quality) {
  FilePtr file = open_file(path, "wb");
  jpeg_compress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_on_error;

  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    throw IoError(fmt::format("cannot write JPEG {}: {}", path.string(), err.message));
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, file.get());
  cinfo.image_width = static_cast<JDIMENSION>(image.width());
  cinfo.image_height = static_cast<JDIMENSION>(image.height());
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  auto* base = const_cast<std::uint8_t*>(image.bytes().data());
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = base + static_cast<std::size_t>(cinfo.next_scanline) * image.width() * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  if (std::fflush(file.get()) != 0) throw IoError(fmt::format("cannot write JPEG {}", path.string()));
}

}  // namespace otobias
