#include "blpnet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace blpnet {

namespace {

class PnmTokenizer {
 public:
  explicit PnmTokenizer(std::span<const std::byte> in) : in_(in) {}

  int number() {
    skip_space_and_comments();
    if (pos_ >= in_.size() || !std::isdigit(c(pos_))) throw ImageDecodeError("pnm: expected a number in header");
    long v = 0;
    while (pos_ < in_.size() && std::isdigit(c(pos_))) {
      v = v * 10 + (c(pos_) - '0');
      if (v > 1'000'000) throw ImageDecodeError("pnm: header value out of range");
      ++pos_;
    }
    return static_cast<int>(v);
  }
  // Exactly one whitespace byte separates the header from binary data.
  void end_header() {
    if (pos_ >= in_.size() || !std::isspace(c(pos_))) throw ImageDecodeError("pnm: malformed header terminator");
    ++pos_;
  }
  std::span<const std::byte> rest() const { return in_.subspan(pos_); }
  std::size_t pos() const { return pos_; }

 private:
  unsigned char c(std::size_t i) const { return std::to_integer<unsigned char>(in_[i]); }
  void skip_space_and_comments() {
    while (pos_ < in_.size()) {
      if (std::isspace(c(pos_))) {
        ++pos_;
      } else if (c(pos_) == '#') {
        while (pos_ < in_.size() && c(pos_) != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

std::vector<std::byte> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageDecodeError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

}  // namespace

GrayImage decode_pnm(std::span<const std::byte> bytes) {
  if (bytes.size() < 2 || std::to_integer<char>(bytes[0]) != 'P') throw ImageDecodeError("pnm: missing magic");
  const char kind = std::to_integer<char>(bytes[1]);
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6') throw ImageDecodeError("pnm: unsupported variant");
  PnmTokenizer tok(bytes.subspan(2));
  const int width = tok.number(), height = tok.number(), maxval = tok.number();
  if (width <= 0 || height <= 0) throw ImageDecodeError("pnm: empty image");
  if (maxval <= 0 || maxval > 65535) throw ImageDecodeError("pnm: invalid maxval");
  const int channels = (kind == '3' || kind == '6') ? 3 : 1;
  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  std::vector<double> samples(count);
  if (kind == '2' || kind == '3') {
    for (auto& s : samples) {
      const int v = tok.number();
      if (v > maxval) throw ImageDecodeError("pnm: sample exceeds maxval");
      s = v;
    }
  } else {
    tok.end_header();
    const auto data = tok.rest();
    const std::size_t bps = maxval > 255 ? 2 : 1;
    if (data.size() < count * bps) throw ImageDecodeError("pnm: truncated pixel data");
    for (std::size_t i = 0; i < count; ++i) {
      samples[i] = bps == 1 ? std::to_integer<int>(data[i])
                            : (std::to_integer<int>(data[2 * i]) << 8) | std::to_integer<int>(data[2 * i + 1]);
      if (samples[i] > maxval) throw ImageDecodeError("pnm: sample exceeds maxval");
    }
  }
  GrayImage img(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * width + x;
      const double v = channels == 1 ? samples[p]
                                     : 0.299 * samples[3 * p] + 0.587 * samples[3 * p + 1] + 0.114 * samples[3 * p + 2];
      img(y, x) = static_cast<float>(v / maxval);
    }
  return img;
}

GrayImage read_image(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
#ifdef BLPNET_WITH_PNG
  if (bytes.size() >= 8 && std::to_integer<unsigned char>(bytes[0]) == 0x89 && std::to_integer<char>(bytes[1]) == 'P')
    return decode_png(bytes);
#endif
  return decode_pnm(bytes);
}

std::vector<std::byte> encode_pgm(const GrayImage& image) {
  const std::string header =
      "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n";
  std::vector<std::byte> out(header.size() + static_cast<std::size_t>(image.size()));
  std::memcpy(out.data(), header.data(), header.size());
  std::size_t k = header.size();
  for (Eigen::Index y = 0; y < image.rows(); ++y)
    for (Eigen::Index x = 0; x < image.cols(); ++x)
      out[k++] = static_cast<std::byte>(std::lround(std::clamp(image(y, x), 0.0f, 1.0f) * 255.0f));
  return out;
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_pgm(const Mask& mask, const std::filesystem::path& path) {
  write_pgm(GrayImage(mask.cast<float>().min(1.0f)), path);
}

float sample_bilinear(const GrayImage& image, double y, double x) {
  const double maxy = static_cast<double>(image.rows() - 1), maxx = static_cast<double>(image.cols() - 1);
  y = std::clamp(y, 0.0, maxy);
  x = std::clamp(x, 0.0, maxx);
  const auto y0 = static_cast<Eigen::Index>(std::floor(y)), x0 = static_cast<Eigen::Index>(std::floor(x));
  const Eigen::Index y1 = std::min<Eigen::Index>(y0 + 1, image.rows() - 1);
  const Eigen::Index x1 = std::min<Eigen::Index>(x0 + 1, image.cols() - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  const double top = image(y0, x0) * (1 - fx) + image(y0, x1) * fx;
  const double bot = image(y1, x0) * (1 - fx) + image(y1, x1) * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

GrayImage resize_bilinear(const GrayImage& image, int height, int width) {
  if (height <= 0 || width <= 0 || image.size() == 0) throw std::invalid_argument("resize_bilinear: empty size");
  GrayImage out(height, width);
  const double sy = static_cast<double>(image.rows()) / height, sx = static_cast<double>(image.cols()) / width;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out(y, x) = sample_bilinear(image, (y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5);
  return out;
}

GrayImage warp_affine(const GrayImage& image, const Eigen::Matrix<double, 2, 3>& inverse, float fill) {
  GrayImage out(image.rows(), image.cols());
  const double h = static_cast<double>(image.rows()), w = static_cast<double>(image.cols());
  for (Eigen::Index y = 0; y < image.rows(); ++y)
    for (Eigen::Index x = 0; x < image.cols(); ++x) {
      const Eigen::Vector3d p(static_cast<double>(x), static_cast<double>(y), 1.0);
      const Eigen::Vector2d s = inverse * p;
      if (s.x() < -0.5 || s.y() < -0.5 || s.x() > w - 0.5 || s.y() > h - 0.5) {
        out(y, x) = fill;
      } else {
        out(y, x) = sample_bilinear(image, s.y(), s.x());
      }
    }
  return out;
}

GrayImage crop(const GrayImage& image, const PixelRect& r) {
  if (r.x0 < 0 || r.y0 < 0 || r.x1 > image.cols() || r.y1 > image.rows() || r.width() <= 0 || r.height() <= 0)
    throw std::invalid_argument("crop: rectangle outside the image or empty");
  return image.block(r.y0, r.x0, r.height(), r.width());
}

Tensor<float> to_tensor(const GrayImage& image) {
  const auto h = static_cast<std::size_t>(image.rows()), w = static_cast<std::size_t>(image.cols());
  return Tensor<float>({h, w, 1}, std::vector<float>(image.data(), image.data() + image.size()));
}

}  // namespace blpnet
