#ifndef QTAR_IMAGE_HPP
#define QTAR_IMAGE_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace qtar {

// Grayscale image on the 0-255 working scale. Values are unconstrained
// doubles: optimization iterates may leave [0,255]; clamping happens only
// when saving and when computing metrics.
struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;  // row-major, index t = i*width + j

    GrayImage() = default;
    GrayImage(int h, int w, double fill = 0.0)
        : height(h), width(w), pixels(static_cast<size_t>(h) * w, fill) {}

    double& at(int i, int j) { return pixels[static_cast<size_t>(i) * width + j]; }
    double at(int i, int j) const { return pixels[static_cast<size_t>(i) * width + j]; }
    bool in_bounds(int i, int j) const {
        return i >= 0 && i < height && j >= 0 && j < width;
    }
    long size() const { return static_cast<long>(height) * width; }
};

struct MetricsReport {
    double rmse = 0.0;
    double psnr = 0.0;  // +inf marks identical images
    double ssim = 0.0;

    bool psnr_is_infinite() const { return std::isinf(psnr); }
};

// Reads an 8-bit grayscale PGM (P5) or PNG. The format is sniffed from the
// file's magic bytes, not the extension.
GrayImage load_image(const std::string& path);

// Clamps to [0,255], rounds half away from zero, writes 8-bit PGM or PNG
// chosen by the file extension (.pgm / .png).
void save_image(const GrayImage& image, const std::string& path);

// Identifier of the noise RNG recorded in run metadata. Determinism holds
// per build: same build + same seed => identical noise.
std::string noise_rng_id();

// v' = v + N(0, sigma^2) i.i.d. per pixel; output is not clamped.
GrayImage add_gaussian_noise(const GrayImage& image, double sigma, std::uint64_t seed);

// Separable Gaussian blur: radius ceil(3*kernel_sigma), kernel normalized
// to sum 1, edges handled by nearest-pixel replication.
GrayImage gaussian_filter(const GrayImage& image, double kernel_sigma);

// RMSE / PSNR (peak 255) / SSIM, all computed on values clamped to [0,255].
// SSIM: 11x11 Gaussian window (sigma 1.5), C1=(0.01*255)^2, C2=(0.03*255)^2,
// averaged over window positions fully inside the image. Windows shrink to
// the largest odd size that fits when an image dimension is below 11.
MetricsReport compute_metrics(const GrayImage& reference, const GrayImage& candidate);

}  // namespace qtar

#endif
