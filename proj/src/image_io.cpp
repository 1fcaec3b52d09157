#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <stdexcept>

#include "cadis/image.hpp"

namespace cadis {

namespace {

Image from_mat(const cv::Mat& m) {
    if (m.empty()) throw std::runtime_error("image decode produced empty matrix");
    cv::Mat bgr;
    if (m.channels() == 1)
        cv::cvtColor(m, bgr, cv::COLOR_GRAY2BGR);
    else if (m.channels() == 4)
        cv::cvtColor(m, bgr, cv::COLOR_BGRA2BGR);
    else
        bgr = m;
    Image img(bgr.rows, bgr.cols, 3);
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            img.at(y, x, 0) = row[x][2] / 255.0;
            img.at(y, x, 1) = row[x][1] / 255.0;
            img.at(y, x, 2) = row[x][0] / 255.0;
        }
    }
    return img;
}

cv::Mat to_mat(const Image& img) {
    if (img.c != 3 && img.c != 1) throw std::invalid_argument("to_mat: expects 1 or 3 channels");
    cv::Mat m(img.h, img.w, CV_8UC3);
    for (int y = 0; y < img.h; ++y) {
        auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.w; ++x) {
            auto q = [&](int ch) {
                double v = img.c == 3 ? img.at(y, x, ch) : img.at(y, x, 0);
                return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            };
            row[x] = cv::Vec3b(q(2), q(1), q(0));
        }
    }
    return m;
}

}  // namespace

Image load_image(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (m.empty()) throw std::runtime_error("failed to decode image: " + path);
    return from_mat(m);
}

void save_png(const Image& img, const std::string& path) {
    if (!cv::imwrite(path, to_mat(img), {cv::IMWRITE_PNG_COMPRESSION, 6}))
        throw std::runtime_error("failed to write PNG: " + path);
}

Image jpeg_roundtrip(const Image& img, int quality) {
    std::vector<unsigned char> buf;
    if (!cv::imencode(".jpg", to_mat(img), buf, {cv::IMWRITE_JPEG_QUALITY, quality}))
        throw std::runtime_error("jpeg encode failed");
    cv::Mat dec = cv::imdecode(buf, cv::IMREAD_COLOR);
    return from_mat(dec);
}

}  // namespace cadis
