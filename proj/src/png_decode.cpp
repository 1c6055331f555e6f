#include <png.h>

#include <cstring>

#include "blpnet/image.hpp"

namespace blpnet {

GrayImage decode_png(std::span<const std::byte> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw ImageDecodeError(std::string("png: ") + img.message);
  img.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw ImageDecodeError(std::string("png: ") + img.message);
  }
  GrayImage out(img.height, img.width);
  for (std::size_t i = 0; i < buf.size(); ++i) out.data()[i] = static_cast<float>(buf[i]) / 255.0f;
  return out;
}

}  // namespace blpnet
