#include "pspl/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace pspl {

ImageGrid::ImageGrid(int h, int w, int c, double range)
    : height(h), width(w), channels(c), dynamic_range(range) {
    if (h < 1 || w < 1 || (c != 1 && c != 3))
        throw std::invalid_argument("ImageGrid: dimensions must be positive and channels 1 or 3");
    if (!(range > 0.0))
        throw std::invalid_argument("ImageGrid: dynamic_range must be > 0");
    data.assign(static_cast<std::size_t>(h) * w * c, 0.0);
}

void ImageGrid::validate(const char* context) const {
    if (data.size() != static_cast<std::size_t>(height) * width * channels)
        throw std::runtime_error(std::string(context) + ": data length does not match dimensions");
    if (!(dynamic_range > 0.0))
        throw std::runtime_error(std::string(context) + ": dynamic_range must be > 0");
    for (double v : data)
        if (!std::isfinite(v))
            throw std::runtime_error(std::string(context) + ": non-finite pixel value");
}

int mirror_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = std::abs(i) % period;
    return i < n ? i : period - i;
}

int clamp_index(int i, int n) {
    return i < 0 ? 0 : (i >= n ? n - 1 : i);
}

// ---------------------------------------------------------------------------
// PNG input (libpng)
// ---------------------------------------------------------------------------

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageGrid load_png(const std::string& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw std::runtime_error("load_png: cannot open '" + path + "'");

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw std::runtime_error("load_png: '" + path + "' is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("load_png: png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("load_png: png_create_info_struct failed");
    }

    std::vector<png_bytep> rows;
    std::vector<unsigned char> pixels;
    std::string error;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("load_png: libpng error while reading '" + path + "'");
    }

    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    const int interlace = png_get_interlace_type(png, info);

    if (interlace != PNG_INTERLACE_NONE) {
        error = "interlaced PNG is not supported";
    } else if (bit_depth != 8) {
        error = "unsupported bit depth " + std::to_string(bit_depth) + " (only 8-bit)";
    } else if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB) {
        error = "unsupported color type (only 8-bit grayscale or RGB)";
    }
    if (!error.empty()) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("load_png: '" + path + "': " + error);
    }

    const int channels = (color_type == PNG_COLOR_TYPE_GRAY) ? 1 : 3;
    const std::size_t stride = static_cast<std::size_t>(w) * channels;
    pixels.resize(stride * h);
    rows.resize(h);
    for (png_uint_32 r = 0; r < h; ++r) rows[r] = pixels.data() + r * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageGrid grid(static_cast<int>(h), static_cast<int>(w), channels, 255.0);
    for (std::size_t i = 0; i < grid.data.size(); ++i)
        grid.data[i] = static_cast<double>(pixels[i]);
    return grid;
}

// ---------------------------------------------------------------------------
// PFM (little-endian, bottom-up scanlines)
// ---------------------------------------------------------------------------

void save_pfm(const ImageGrid& grid, const std::string& path) {
    grid.validate("save_pfm");
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw std::runtime_error("save_pfm: cannot open '" + path + "' for writing");

    const char* magic = (grid.channels == 1) ? "Pf" : "PF";
    if (std::fprintf(file.get(), "%s\n%d %d\n-1.0\n", magic, grid.width, grid.height) < 0)
        throw std::runtime_error("save_pfm: write failed for '" + path + "'");

    std::vector<float> row(static_cast<std::size_t>(grid.width) * grid.channels);
    for (int r = grid.height - 1; r >= 0; --r) {
        const double* src = grid.data.data() + grid.index(r, 0, 0);
        for (std::size_t i = 0; i < row.size(); ++i) row[i] = static_cast<float>(src[i]);
        if (std::fwrite(row.data(), sizeof(float), row.size(), file.get()) != row.size())
            throw std::runtime_error("save_pfm: write failed for '" + path + "'");
    }
}

namespace {

std::string read_pfm_token(std::FILE* f, const std::string& path) {
    std::string tok;
    int c;
    while ((c = std::fgetc(f)) != EOF && std::isspace(c)) {
    }
    if (c == EOF) throw std::runtime_error("load_pfm: truncated header in '" + path + "'");
    do {
        tok.push_back(static_cast<char>(c));
    } while ((c = std::fgetc(f)) != EOF && !std::isspace(c));
    if (c == EOF) throw std::runtime_error("load_pfm: truncated header in '" + path + "'");
    return tok;
}

}  // namespace

ImageGrid load_pfm(const std::string& path, double range) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw std::runtime_error("load_pfm: cannot open '" + path + "'");

    const std::string magic = read_pfm_token(file.get(), path);
    int channels = 0;
    if (magic == "Pf") channels = 1;
    else if (magic == "PF") channels = 3;
    else throw std::runtime_error("load_pfm: '" + path + "' has unknown magic '" + magic + "'");

    const std::string ws = read_pfm_token(file.get(), path);
    const std::string hs = read_pfm_token(file.get(), path);
    const std::string ss = read_pfm_token(file.get(), path);
    int w = 0, h = 0;
    double scale = 0.0;
    try {
        w = std::stoi(ws);
        h = std::stoi(hs);
        scale = std::stod(ss);
    } catch (const std::exception&) {
        throw std::runtime_error("load_pfm: malformed header in '" + path + "'");
    }
    if (w < 1 || h < 1 || scale == 0.0)
        throw std::runtime_error("load_pfm: malformed header in '" + path + "'");
    const bool file_little_endian = scale < 0.0;

    ImageGrid grid(h, w, channels, range);
    std::vector<float> row(static_cast<std::size_t>(w) * channels);
    for (int r = h - 1; r >= 0; --r) {
        if (std::fread(row.data(), sizeof(float), row.size(), file.get()) != row.size())
            throw std::runtime_error("load_pfm: truncated pixel data in '" + path + "'");
        if (!file_little_endian) {
            for (float& v : row) {
                std::uint32_t bits;
                std::memcpy(&bits, &v, 4);
                bits = ((bits & 0xff000000u) >> 24) | ((bits & 0x00ff0000u) >> 8) |
                       ((bits & 0x0000ff00u) << 8) | ((bits & 0x000000ffu) << 24);
                std::memcpy(&v, &bits, 4);
            }
        }
        double* dst = grid.data.data() + grid.index(r, 0, 0);
        for (std::size_t i = 0; i < row.size(); ++i) dst[i] = static_cast<double>(row[i]);
    }
    grid.validate("load_pfm");
    return grid;
}

// ---------------------------------------------------------------------------
// Catmull-Rom resize
// ---------------------------------------------------------------------------

namespace {

// Catmull-Rom kernel (bicubic with a = -0.5).
inline double cubic_weight(double t) {
    t = std::fabs(t);
    if (t <= 1.0) return ((1.5 * t - 2.5) * t) * t + 1.0;
    if (t < 2.0) return (((-0.5 * t + 2.5) * t) - 4.0) * t + 2.0;
    return 0.0;
}

// One resampling axis: 4 source taps + weights per output index, weights
// renormalized so constants are reproduced exactly.
struct AxisMap {
    std::vector<int> base;       // first tap index per output element
    std::vector<double> weight;  // 4 weights per output element
};

AxisMap make_axis_map(int in_n, int out_n) {
    AxisMap map;
    map.base.resize(out_n);
    map.weight.resize(static_cast<std::size_t>(out_n) * 4);
    const double ratio = static_cast<double>(in_n) / out_n;
    for (int o = 0; o < out_n; ++o) {
        const double src = (o + 0.5) * ratio - 0.5;
        const double fl = std::floor(src);
        const double frac = src - fl;
        map.base[o] = static_cast<int>(fl) - 1;
        double* w = &map.weight[static_cast<std::size_t>(o) * 4];
        w[0] = cubic_weight(frac + 1.0);
        w[1] = cubic_weight(frac);
        w[2] = cubic_weight(1.0 - frac);
        w[3] = cubic_weight(2.0 - frac);
        const double sum = w[0] + w[1] + w[2] + w[3];
        for (int k = 0; k < 4; ++k) w[k] /= sum;
    }
    return map;
}

}  // namespace

ImageGrid resize_to(const ImageGrid& grid, int out_height, int out_width) {
    grid.validate("resize_to");
    if (out_height < 1 || out_width < 1)
        throw std::invalid_argument("resize_to: output dimensions must be >= 1");

    const AxisMap col_map = make_axis_map(grid.width, out_width);
    const AxisMap row_map = make_axis_map(grid.height, out_height);
    const int c = grid.channels;

    // Horizontal pass.
    ImageGrid mid(grid.height, out_width, c, grid.dynamic_range);
    for (int r = 0; r < grid.height; ++r) {
        for (int o = 0; o < out_width; ++o) {
            const int base = col_map.base[o];
            const double* w = &col_map.weight[static_cast<std::size_t>(o) * 4];
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k)
                    acc += w[k] * grid.at(r, clamp_index(base + k, grid.width), ch);
                mid.at(r, o, ch) = acc;
            }
        }
    }

    // Vertical pass.
    ImageGrid out(out_height, out_width, c, grid.dynamic_range);
    for (int o = 0; o < out_height; ++o) {
        const int base = row_map.base[o];
        const double* w = &row_map.weight[static_cast<std::size_t>(o) * 4];
        for (int x = 0; x < out_width; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k)
                    acc += w[k] * mid.at(clamp_index(base + k, grid.height), x, ch);
                out.at(o, x, ch) = acc;
            }
        }
    }
    out.validate("resize_to");
    return out;
}

ImageGrid bicubic_resize(const ImageGrid& grid, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("bicubic_resize: scale must be > 0");
    const int out_h = static_cast<int>(std::lround(grid.height * scale));
    const int out_w = static_cast<int>(std::lround(grid.width * scale));
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("bicubic_resize: output dimensions must be >= 1");
    return resize_to(grid, out_h, out_w);
}

PatchView extract_patch(const ImageGrid& grid, int center_row, int center_col, int size) {
    if (size < 1 || size % 2 == 0)
        throw std::invalid_argument("extract_patch: window size must be odd and positive");
    grid.validate("extract_patch");

    const int half = size / 2;
    PatchView patch;
    patch.origin_row = center_row - half;
    patch.origin_col = center_col - half;
    patch.size = size;
    patch.channels = grid.channels;
    patch.values.resize(static_cast<std::size_t>(size) * size * grid.channels);

    std::size_t i = 0;
    for (int r = 0; r < size; ++r) {
        const int sr = mirror_index(patch.origin_row + r, grid.height);
        for (int c = 0; c < size; ++c) {
            const int sc = mirror_index(patch.origin_col + c, grid.width);
            for (int ch = 0; ch < grid.channels; ++ch)
                patch.values[i++] = grid.at(sr, sc, ch);
        }
    }
    return patch;
}

ImageGrid to_luminance(const ImageGrid& grid) {
    if (grid.channels != 3)
        throw std::invalid_argument("to_luminance: input must have 3 channels");
    grid.validate("to_luminance");
    ImageGrid out(grid.height, grid.width, 1, grid.dynamic_range);
    for (int r = 0; r < grid.height; ++r)
        for (int c = 0; c < grid.width; ++c)
            out.at(r, c) = 0.299 * grid.at(r, c, 0) + 0.587 * grid.at(r, c, 1) +
                           0.114 * grid.at(r, c, 2);
    return out;
}

}  // namespace pspl
