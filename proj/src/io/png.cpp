#include "angio/io/png.hpp"
#include "angio/io/container.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <vector>

namespace angio {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor<float> read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw LoadError("cannot open " + path);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_stdio(&image, fp.get())) throw LoadError(path + ": " + image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const Index c = color ? 3 : 1;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw LoadError(path + ": " + image.message);
  }
  const Index h = image.height, w = image.width;
  Tensor<float> out(Shape{1, c, h, w});
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index k = 0; k < c; ++k) out(0, k, y, x) = static_cast<float>(buf[(y * w + x) * c + k]) / 255.0f;
  return out;
}

void write_png(const std::string& path, const Tensor<float>& img) {
  const Shape s = img.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) throw ShapeError("write_png expects (1,1|3,H,W), got " + s.str());
  std::vector<png_byte> buf(static_cast<size_t>(s.numel()));
  for (Index y = 0; y < s.h; ++y)
    for (Index x = 0; x < s.w; ++x)
      for (Index k = 0; k < s.c; ++k) {
        const float v = std::clamp(img(0, k, y, x), 0.0f, 1.0f);
        buf[static_cast<size_t>((y * s.w + x) * s.c + k)] = static_cast<png_byte>(std::lround(v * 255.0f));
      }
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(s.w);
  image.height = static_cast<png_uint_32>(s.h);
  image.format = s.c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw std::runtime_error("png write failed for " + path + ": " + image.message);
  }
}

}  // namespace angio
