#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace rate_alloc {

// Grayscale image with row-major intensities in [0, 1].
class Image {
public:
    Image() = default;
    // Throws InputError on a size mismatch or an intensity outside [0, 1].
    Image(std::size_t height, std::size_t width, std::vector<double> pixels);

    static Image filled(std::size_t height, std::size_t width, double value);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::span<const double> pixels() const noexcept { return pixels_; }
    double at(std::size_t row, std::size_t col) const { return pixels_[row * width_ + col]; }

    bool operator==(const Image&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> pixels_;
};

// B x B pixel block, row-major.
struct Block {
    std::size_t size = 0;
    std::vector<double> values;

    static Block zeros(std::size_t size) { return {size, std::vector<double>(size * size, 0.0)}; }
    double& operator()(std::size_t r, std::size_t c) { return values[r * size + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * size + c]; }
    bool operator==(const Block&) const = default;
};

// B x B DCT-II coefficients, row-major.
struct CoeffBlock {
    std::size_t size = 0;
    std::vector<double> coefficients;

    double operator()(std::size_t r, std::size_t c) const { return coefficients[r * size + c]; }
};

struct BlockGrid {
    std::size_t block_size = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t pad_bottom = 0;
    std::size_t pad_right = 0;
    std::vector<Block> blocks;  // row-major over the grid

    std::size_t block_count() const noexcept { return rows * cols; }
    std::size_t padded_height() const noexcept { return rows * block_size; }
    std::size_t padded_width() const noexcept { return cols * block_size; }
    std::size_t padded_pixels() const noexcept { return padded_height() * padded_width(); }
};

// Portable graymap I/O. Reading accepts P2 and P5 with maxval <= 65535; writing
// always produces P5 with maxval 255, rounding half-up.
Image load_pgm(const std::filesystem::path& path);
Image parse_pgm(std::span<const std::uint8_t> bytes);
void save_pgm(const Image& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pgm(const Image& image);

// Splits into non-overlapping B x B blocks, zero-padding the bottom and right edges.
BlockGrid partition(const Image& image, std::size_t block_size);

// Inverse of partition: crops the padding and clamps to [0, 1].
Image assemble(const BlockGrid& grid, std::size_t height, std::size_t width);

// Orthonormal DCT-II basis, row k holds basis vector k (row-major, n x n).
std::vector<double> dct_matrix(std::size_t n);

CoeffBlock dct2(const Block& block);
Block idct2(const CoeffBlock& coeffs);

// Row-major flattening shared by every module.
std::vector<double> vectorize(const Block& block);
Block devectorize(std::span<const double> values, std::size_t block_size);

}  // namespace rate_alloc
