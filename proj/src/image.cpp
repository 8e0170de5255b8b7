#include "zsfuse/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>

#include "zsfuse/errors.hpp"

namespace zsfuse {

namespace {

cv::Mat to_mat(const Image& image) {
  // cv::Mat wants BGR; swap channels on the way in and out.
  cv::Mat rgb(image.height, image.width, CV_8UC3,
              const_cast<std::uint8_t*>(image.rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

Image from_mat(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image out;
  out.width = rgb.cols;
  out.height = rgb.rows;
  out.rgb.resize(static_cast<std::size_t>(rgb.cols) * rgb.rows * 3);
  if (rgb.isContinuous()) {
    std::copy(rgb.data, rgb.data + out.rgb.size(), out.rgb.begin());
  } else {
    for (int y = 0; y < rgb.rows; ++y) {
      std::copy(rgb.ptr(y), rgb.ptr(y) + static_cast<std::size_t>(rgb.cols) * 3,
                out.rgb.begin() + static_cast<std::size_t>(y) * rgb.cols * 3);
    }
  }
  return out;
}

}  // namespace

Image decode_image(const Bytes& encoded) {
  if (encoded.empty()) {
    raise(Errc::ImageDecode, "empty image payload");
  }
  const cv::Mat raw(1, static_cast<int>(encoded.size()), CV_8UC1,
                    const_cast<std::uint8_t*>(encoded.data()));
  cv::Mat bgr = cv::imdecode(raw, cv::IMREAD_COLOR);
  if (bgr.empty()) {
    raise(Errc::ImageDecode, "unrecognized or corrupt image payload");
  }
  return from_mat(bgr);
}

Bytes encode_png(const Image& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.rgb.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    raise(Errc::InvalidArgument, "malformed Image buffer");
  }
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".png", to_mat(image), buf)) {
    raise(Errc::Io, "png encode failed");
  }
  return buf;
}

Image resize_bilinear(const Image& image, int width, int height) {
  if (width <= 0 || height <= 0) {
    raise(Errc::InvalidArgument, "resize target must be positive");
  }
  if (image.width == width && image.height == height) {
    return image;
  }
  cv::Mat resized;
  cv::resize(to_mat(image), resized, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  return from_mat(resized);
}

void fill_rect(Image& image, int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g,
               std::uint8_t b) {
  x0 = std::clamp(x0, 0, image.width);
  x1 = std::clamp(x1, 0, image.width);
  y0 = std::clamp(y0, 0, image.height);
  y1 = std::clamp(y1, 0, image.height);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      std::uint8_t* p = image.pixel(x, y);
      p[0] = r;
      p[1] = g;
      p[2] = b;
    }
  }
}

}  // namespace zsfuse
