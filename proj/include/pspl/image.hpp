#pragma once

#include <string>
#include <vector>

namespace pspl {

/// Dense H x W x C raster, row-major (row, column, channel), double precision.
/// dynamic_range is the declared value span (1.0 for normalized, 255.0 for 8-bit).
struct ImageGrid {
    int height = 0;
    int width = 0;
    int channels = 0;
    double dynamic_range = 1.0;
    std::vector<double> data;

    ImageGrid() = default;
    ImageGrid(int h, int w, int c, double range = 1.0);

    std::size_t index(int r, int c, int ch = 0) const {
        return (static_cast<std::size_t>(r) * width + c) * channels + ch;
    }
    double at(int r, int c, int ch = 0) const { return data[index(r, c, ch)]; }
    double& at(int r, int c, int ch = 0) { return data[index(r, c, ch)]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const ImageGrid& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    // Throws if the shape/data-length invariants are broken or values are not finite.
    void validate(const char* context) const;
};

/// Square window extracted from a grid, same (row, col, channel) layout.
/// size is odd so the window has a unique center pixel.
struct PatchView {
    int origin_row = 0;   // top-left corner in the parent grid (may be negative)
    int origin_col = 0;
    int size = 0;
    int channels = 0;
    std::vector<double> values;

    double at(int r, int c, int ch = 0) const {
        return values[(static_cast<std::size_t>(r) * size + c) * channels + ch];
    }
};

// Reflect-without-repeat index for a length-n axis (..., 2, 1, 0, 1, 2, ..., n-1, n-2, ...).
int mirror_index(int i, int n);

// Clamp index to [0, n-1].
int clamp_index(int i, int n);

/// Decode an 8-bit grayscale or RGB PNG, bit-exact, values in [0, 255], dynamic_range 255.
ImageGrid load_png(const std::string& path);

/// Write a Portable Float Map: "Pf" (1 channel) or "PF" (3 channels), little-endian,
/// bottom-up scanlines. Values are stored as float32.
void save_pfm(const ImageGrid& grid, const std::string& path);

/// Read a PFM written by save_pfm (handles both endianness markers).
/// The format carries no range metadata; dynamic_range is set to `range`.
ImageGrid load_pfm(const std::string& path, double range = 1.0);

/// Catmull-Rom (a = -0.5) bicubic resize to exact output dimensions.
/// Border samples are replicated. Separable two-pass implementation.
ImageGrid resize_to(const ImageGrid& grid, int out_height, int out_width);

/// resize_to with output dimensions round(input * scale).
ImageGrid bicubic_resize(const ImageGrid& grid, double scale);

/// Odd-size window centered at (center_row, center_col); out-of-bounds samples
/// are mirror-padded.
PatchView extract_patch(const ImageGrid& grid, int center_row, int center_col, int size);

/// Rec.601 luma: Y = 0.299 R + 0.587 G + 0.114 B. Input must be 3-channel.
ImageGrid to_luminance(const ImageGrid& grid);

}  // namespace pspl
