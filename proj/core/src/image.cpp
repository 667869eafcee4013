#include "qtar/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

#include "qtar/numerics.hpp"

namespace qtar {

namespace {

uint8_t quantize(double v) {
    const double c = std::clamp(v, 0.0, 255.0);
    // half away from zero; c >= 0 so this is plain round-half-up
    return static_cast<uint8_t>(std::lround(c));
}

// --- PGM ------------------------------------------------------------------

// Reads the next header token, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (!std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            while ((c = in.peek()) != EOF && !std::isspace(c) && c != '#') {
                tok.push_back(static_cast<char>(in.get()));
            }
            return tok;
        }
    }
    return tok;
}

GrayImage load_pgm(std::ifstream& in, const std::string& path) {
    const std::string magic = pgm_token(in);
    if (magic != "P5") throw IoError(path + ": unsupported PGM magic '" + magic + "' (only binary P5)");
    const std::string ws = pgm_token(in), hs = pgm_token(in), ms = pgm_token(in);
    int w = 0, h = 0;
    long maxval = 0;
    try {
        w = std::stoi(ws);
        h = std::stoi(hs);
        maxval = std::stol(ms);
    } catch (const std::exception&) {
        throw IoError(path + ": corrupt PGM header ('" + ws + " " + hs + " " + ms + "')");
    }
    if (w < 1 || h < 1) throw IoError(path + ": corrupt PGM header, non-positive dimensions");
    if (maxval != 255) {
        throw IoError(path + ": unsupported PGM maxval " + std::to_string(maxval) + " (only 8-bit, maxval 255)");
    }
    in.get();  // single whitespace byte after maxval
    GrayImage img(h, w);
    std::vector<uint8_t> row(static_cast<size_t>(w));
    for (int i = 0; i < h; ++i) {
        in.read(reinterpret_cast<char*>(row.data()), w);
        if (in.gcount() != w) throw IoError(path + ": truncated PGM pixel data at row " + std::to_string(i));
        for (int j = 0; j < w; ++j) img.at(i, j) = static_cast<double>(row[j]);
    }
    return img;
}

void save_pgm(const GrayImage& image, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path + ": cannot open for writing");
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(image.width));
    for (int i = 0; i < image.height; ++i) {
        for (int j = 0; j < image.width; ++j) row[j] = quantize(image.at(i, j));
        out.write(reinterpret_cast<const char*>(row.data()), image.width);
    }
    if (!out) throw IoError(path + ": write failed");
}

// --- PNG (libpng) ----------------------------------------------------------

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};

GrayImage load_png(const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError(path + ": cannot open");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path + ": libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path + ": corrupt PNG");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path + ": unsupported PNG color type " + std::to_string(color) + " (only single-channel grayscale)");
    }
    if (depth != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path + ": unsupported PNG bit depth " + std::to_string(depth) + " (only 8-bit)");
    }
    GrayImage img(static_cast<int>(h), static_cast<int>(w));
    std::vector<uint8_t> row(w);
    for (png_uint_32 i = 0; i < h; ++i) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 j = 0; j < w; ++j) {
            img.at(static_cast<int>(i), static_cast<int>(j)) = static_cast<double>(row[j]);
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_png(const GrayImage& image, const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError(path + ": cannot open for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path + ": libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path + ": PNG write failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height),
                 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<uint8_t> row(static_cast<size_t>(image.width));
    for (int i = 0; i < image.height; ++i) {
        for (int j = 0; j < image.width; ++j) row[j] = quantize(image.at(i, j));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

bool ends_with_ci(const std::string& s, const std::string& suffix) {
    if (s.size() < suffix.size()) return false;
    for (size_t i = 0; i < suffix.size(); ++i) {
        if (std::tolower(s[s.size() - suffix.size() + i]) != std::tolower(suffix[i])) return false;
    }
    return true;
}

}  // namespace

GrayImage load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": no such file");
    char magic[2] = {0, 0};
    in.read(magic, 2);
    in.seekg(0);
    if (magic[0] == 'P' && magic[1] == '5') return load_pgm(in, path);
    const unsigned char png_sig0 = 0x89;
    if (static_cast<unsigned char>(magic[0]) == png_sig0 && magic[1] == 'P') {
        in.close();
        return load_png(path);
    }
    throw IoError(path + ": unrecognized format (expected binary PGM 'P5' or PNG)");
}

void save_image(const GrayImage& image, const std::string& path) {
    if (image.height < 1 || image.width < 1) throw ValidationError("save_image: empty image");
    if (ends_with_ci(path, ".png")) {
        save_png(image, path);
    } else if (ends_with_ci(path, ".pgm")) {
        save_pgm(image, path);
    } else {
        throw ValidationError("save_image: unknown extension in '" + path + "' (use .pgm or .png)");
    }
}

std::string noise_rng_id() { return "mt19937_64+std::normal_distribution"; }

GrayImage add_gaussian_noise(const GrayImage& image, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw ValidationError("add_gaussian_noise: sigma must be >= 0, got " + std::to_string(sigma));
    GrayImage out = image;
    if (sigma == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& p : out.pixels) p += noise(rng);
    return out;
}

GrayImage gaussian_filter(const GrayImage& image, double kernel_sigma) {
    if (!(kernel_sigma > 0.0)) {
        throw ValidationError("gaussian_filter: kernel_sigma must be > 0, got " + std::to_string(kernel_sigma));
    }
    const int radius = static_cast<int>(std::ceil(3.0 * kernel_sigma));
    std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int r = -radius; r <= radius; ++r) {
        const double w = std::exp(-0.5 * (r * r) / (kernel_sigma * kernel_sigma));
        kernel[static_cast<size_t>(r + radius)] = w;
        sum += w;
    }
    for (double& w : kernel) w /= sum;

    const auto clampi = [](int v, int lo, int hi) { return std::min(std::max(v, lo), hi); };

    // horizontal then vertical pass, replicated edges
    GrayImage tmp(image.height, image.width);
    for (int i = 0; i < image.height; ++i) {
        for (int j = 0; j < image.width; ++j) {
            double acc = 0.0;
            for (int r = -radius; r <= radius; ++r) {
                acc += kernel[static_cast<size_t>(r + radius)] * image.at(i, clampi(j + r, 0, image.width - 1));
            }
            tmp.at(i, j) = acc;
        }
    }
    GrayImage out(image.height, image.width);
    for (int i = 0; i < image.height; ++i) {
        for (int j = 0; j < image.width; ++j) {
            double acc = 0.0;
            for (int r = -radius; r <= radius; ++r) {
                acc += kernel[static_cast<size_t>(r + radius)] * tmp.at(clampi(i + r, 0, image.height - 1), j);
            }
            out.at(i, j) = acc;
        }
    }
    return out;
}

namespace {

double ssim_mean(const std::vector<double>& x, const std::vector<double>& y, int h, int w) {
    constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);
    int win = std::min({11, h, w});
    if (win % 2 == 0) --win;
    const int half = win / 2;
    const double wsigma = 1.5;

    std::vector<double> kern(static_cast<size_t>(win) * win);
    double ksum = 0.0;
    for (int a = 0; a < win; ++a) {
        for (int b = 0; b < win; ++b) {
            const double da = a - half, db = b - half;
            const double v = std::exp(-(da * da + db * db) / (2.0 * wsigma * wsigma));
            kern[static_cast<size_t>(a) * win + b] = v;
            ksum += v;
        }
    }
    for (double& v : kern) v /= ksum;

    double total = 0.0;
    long count = 0;
    for (int i = half; i + half < h; ++i) {
        for (int j = half; j + half < w; ++j) {
            double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
            for (int a = -half; a <= half; ++a) {
                for (int b = -half; b <= half; ++b) {
                    const double kw = kern[static_cast<size_t>(a + half) * win + (b + half)];
                    const double xv = x[static_cast<size_t>(i + a) * w + (j + b)];
                    const double yv = y[static_cast<size_t>(i + a) * w + (j + b)];
                    mx += kw * xv;
                    my += kw * yv;
                    xx += kw * xv * xv;
                    yy += kw * yv * yv;
                    xy += kw * xv * yv;
                }
            }
            const double vx = xx - mx * mx;
            const double vy = yy - my * my;
            const double cxy = xy - mx * my;
            total += ((2 * mx * my + kC1) * (2 * cxy + kC2)) /
                     ((mx * mx + my * my + kC1) * (vx + vy + kC2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace

MetricsReport compute_metrics(const GrayImage& reference, const GrayImage& candidate) {
    if (reference.height != candidate.height || reference.width != candidate.width) {
        throw ValidationError("compute_metrics: dimension mismatch (" +
                              std::to_string(reference.height) + "x" + std::to_string(reference.width) + " vs " +
                              std::to_string(candidate.height) + "x" + std::to_string(candidate.width) + ")");
    }
    const long n = reference.size();
    std::vector<double> ref(static_cast<size_t>(n)), cand(static_cast<size_t>(n));
    for (long t = 0; t < n; ++t) {
        ref[static_cast<size_t>(t)] = std::clamp(reference.pixels[static_cast<size_t>(t)], 0.0, 255.0);
        cand[static_cast<size_t>(t)] = std::clamp(candidate.pixels[static_cast<size_t>(t)], 0.0, 255.0);
    }
    double sq = 0.0;
    for (long t = 0; t < n; ++t) {
        const double d = ref[static_cast<size_t>(t)] - cand[static_cast<size_t>(t)];
        sq += d * d;
    }
    MetricsReport rep;
    rep.rmse = std::sqrt(sq / static_cast<double>(n));
    rep.psnr = rep.rmse > 0.0 ? 20.0 * std::log10(255.0 / rep.rmse)
                              : std::numeric_limits<double>::infinity();
    rep.ssim = ssim_mean(ref, cand, reference.height, reference.width);
    return rep;
}

}  // namespace qtar
