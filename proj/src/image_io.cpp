#include "vdforge/image_io.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <array>
#include <csetjmp>
#include <fstream>
#include <memory>

namespace vdforge {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error("cannot open " + path.string());
  return f;
}

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void png_write_error(png_structp png, png_const_charp msg) {
  auto* message = static_cast<std::string*>(png_get_error_ptr(png));
  if (message) *message = msg;
  png_longjmp(png, 1);
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error("cannot decode PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Image out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

Image read_jpeg(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  Image out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error("cannot decode JPEG " + path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out = Image(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
  const std::size_t stride = static_cast<std::size_t>(out.width) * 3;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + cinfo.output_scanline * stride;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

Image read_image(const std::filesystem::path& path) {
  std::array<unsigned char, 8> sig{};
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    in.read(reinterpret_cast<char*>(sig.data()), sig.size());
    if (in.gcount() < 3) throw Error("file too short to be an image: " + path.string());
  }
  if (png_sig_cmp(sig.data(), 0, sig.size()) == 0) return read_png(path);
  if (sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) return read_jpeg(path);
  throw Error("unsupported image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const Image& img, int level) {
  check_image(img);
  FilePtr f = open_file(path, "wb");
  std::string message;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_write_error, nullptr);
  if (!png) throw Error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("cannot write PNG " + path.string() + ": " + message);
  }
  png_init_io(png, f.get());
  png_set_compression_level(png, level);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, img.pixels.data() + y * stride);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(f.get()) != 0) throw Error("cannot flush " + path.string());
}

std::filesystem::path degraded_image_path(const std::filesystem::path& source,
                                          const ViewSpec& view) {
  if (view.is_hq()) return source;
  auto name = source.stem().string() + "__" + view.label() + ".png";
  return source.parent_path() / name;
}

std::filesystem::path materialize_view(const std::filesystem::path& source,
                                       const ViewSpec& view) {
  if (view.is_hq()) return source;
  auto target = degraded_image_path(source, view);
  if (std::filesystem::exists(target)) return target;
  Image degraded = apply_view(read_image(source), view);
  // Write under a unique name and rename so concurrent workers never observe
  // a partially written file.
  auto tmp = target;
  tmp += ".part" + std::to_string(std::hash<std::string>{}(target.string()) ^
                                  reinterpret_cast<std::uintptr_t>(&degraded));
  write_png(tmp, degraded);
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw Error("cannot create " + target.string() + ": " + ec.message());
  return target;
}

}  // namespace vdforge
