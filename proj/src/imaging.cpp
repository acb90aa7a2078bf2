#include "rate_alloc/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include "rate_alloc/error.hpp"
#include "rate_alloc/report.hpp"

namespace rate_alloc {

Image::Image(std::size_t height, std::size_t width, std::vector<double> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
    if (height_ == 0 || width_ == 0) {
        throw InputError("image dimensions must be positive");
    }
    if (pixels_.size() != height_ * width_) {
        throw InputError("pixel count " + std::to_string(pixels_.size()) + " does not match " +
                         std::to_string(height_) + "x" + std::to_string(width_));
    }
    for (double v : pixels_) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw InputError("pixel intensity outside [0, 1]: " + std::to_string(v));
        }
    }
}

Image Image::filled(std::size_t height, std::size_t width, double value) {
    return Image(height, width, std::vector<double>(height * width, value));
}

// ---------------------------------------------------------------------------
// PGM

namespace {

class PgmReader {
public:
    explicit PgmReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t pos() const { return pos_; }
    bool at_end() const { return pos_ >= bytes_.size(); }
    std::span<const std::uint8_t> rest() const { return bytes_.subspan(pos_); }

    static bool is_space(std::uint8_t c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    }

    void skip_space_and_comments() {
        while (!at_end()) {
            if (is_space(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (!at_end() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    // Reads an unsigned decimal token; returns false if none is present.
    bool read_uint(std::uint64_t& out) {
        skip_space_and_comments();
        std::size_t start = pos_;
        std::uint64_t v = 0;
        while (!at_end() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > (1ull << 40)) return false;
            ++pos_;
        }
        if (pos_ == start) return false;
        if (!at_end() && !is_space(bytes_[pos_]) && bytes_[pos_] != '#') return false;
        out = v;
        return true;
    }

    void advance(std::size_t n) { pos_ += n; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::uint64_t header_field(PgmReader& in, const char* name) {
    std::uint64_t v = 0;
    in.skip_space_and_comments();
    const std::size_t at = in.pos();
    if (!in.read_uint(v)) {
        throw PgmError(PgmError::Kind::malformed_header, at, std::string("bad or missing ") + name);
    }
    return v;
}

}  // namespace

Image parse_pgm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P') {
        throw PgmError(PgmError::Kind::unsupported_magic, 0, "not a portable graymap");
    }
    const bool ascii = bytes[1] == '2';
    if (!ascii && bytes[1] != '5') {
        throw PgmError(PgmError::Kind::unsupported_magic, 0,
                       std::string("unsupported magic number P") + static_cast<char>(bytes[1]));
    }
    PgmReader in(bytes);
    in.advance(2);
    if (in.at_end() || !PgmReader::is_space(bytes[2])) {
        throw PgmError(PgmError::Kind::malformed_header, 2, "expected whitespace after magic");
    }

    const std::uint64_t width = header_field(in, "width");
    const std::uint64_t height = header_field(in, "height");
    const std::size_t maxval_at = in.pos();
    const std::uint64_t maxval = header_field(in, "maxval");
    if (width == 0 || height == 0) {
        throw PgmError(PgmError::Kind::malformed_header, maxval_at, "zero image dimension");
    }
    if (maxval == 0 || maxval > 65535) {
        throw PgmError(PgmError::Kind::malformed_header, maxval_at,
                       "maxval must be in 1..65535, got " + std::to_string(maxval));
    }

    const std::size_t count = static_cast<std::size_t>(width * height);
    std::vector<double> pixels(count);
    const double scale = static_cast<double>(maxval);

    if (ascii) {
        for (std::size_t i = 0; i < count; ++i) {
            in.skip_space_and_comments();
            const std::size_t at = in.pos();
            if (in.at_end()) {
                throw PgmError(PgmError::Kind::truncated_payload, at,
                               "expected " + std::to_string(count) + " samples, got " + std::to_string(i));
            }
            std::uint64_t v = 0;
            if (!in.read_uint(v)) {
                throw PgmError(PgmError::Kind::bad_sample, at, "non-numeric sample");
            }
            if (v > maxval) {
                throw PgmError(PgmError::Kind::bad_sample, at, "sample exceeds maxval");
            }
            pixels[i] = static_cast<double>(v) / scale;
        }
    } else {
        // Exactly one whitespace byte separates maxval from the raster.
        if (in.at_end()) {
            throw PgmError(PgmError::Kind::truncated_payload, in.pos(), "missing raster");
        }
        in.advance(1);
        const std::size_t sample_bytes = maxval < 256 ? 1 : 2;
        auto raster = in.rest();
        if (raster.size() < count * sample_bytes) {
            throw PgmError(PgmError::Kind::truncated_payload, in.pos() + raster.size(),
                           "raster needs " + std::to_string(count * sample_bytes) + " bytes, found " +
                               std::to_string(raster.size()));
        }
        for (std::size_t i = 0; i < count; ++i) {
            std::uint64_t v = sample_bytes == 1
                                  ? raster[i]
                                  : (static_cast<std::uint64_t>(raster[2 * i]) << 8) | raster[2 * i + 1];
            if (v > maxval) {
                throw PgmError(PgmError::Kind::bad_sample, in.pos() + i * sample_bytes,
                               "sample exceeds maxval");
            }
            pixels[i] = static_cast<double>(v) / scale;
        }
    }
    return Image(static_cast<std::size_t>(height), static_cast<std::size_t>(width), std::move(pixels));
}

Image load_pgm(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw InputError("cannot open image " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    try {
        return parse_pgm(bytes);
    } catch (const PgmError& e) {
        throw PgmError(e.kind(), e.offset(), path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_pgm(const Image& image) {
    const std::string header = "P5\n" + std::to_string(image.width()) + " " +
                               std::to_string(image.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + image.pixels().size());
    for (double v : image.pixels()) {
        out.push_back(static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5)));
    }
    return out;
}

void save_pgm(const Image& image, const std::filesystem::path& path) {
    const auto bytes = encode_pgm(image);
    write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

// ---------------------------------------------------------------------------
// Blocks

BlockGrid partition(const Image& image, std::size_t block_size) {
    if (block_size < 2) {
        throw InputError("block size must be at least 2");
    }
    BlockGrid grid;
    grid.block_size = block_size;
    grid.rows = (image.height() + block_size - 1) / block_size;
    grid.cols = (image.width() + block_size - 1) / block_size;
    grid.pad_bottom = grid.rows * block_size - image.height();
    grid.pad_right = grid.cols * block_size - image.width();
    grid.blocks.reserve(grid.block_count());
    for (std::size_t br = 0; br < grid.rows; ++br) {
        for (std::size_t bc = 0; bc < grid.cols; ++bc) {
            Block block = Block::zeros(block_size);
            for (std::size_t r = 0; r < block_size; ++r) {
                const std::size_t y = br * block_size + r;
                if (y >= image.height()) break;
                for (std::size_t c = 0; c < block_size; ++c) {
                    const std::size_t x = bc * block_size + c;
                    if (x >= image.width()) break;
                    block(r, c) = image.at(y, x);
                }
            }
            grid.blocks.push_back(std::move(block));
        }
    }
    return grid;
}

Image assemble(const BlockGrid& grid, std::size_t height, std::size_t width) {
    const std::size_t b = grid.block_size;
    if (b == 0 || height == 0 || width == 0 || (height + b - 1) / b != grid.rows ||
        (width + b - 1) / b != grid.cols || grid.blocks.size() != grid.block_count()) {
        throw InputError("image size " + std::to_string(height) + "x" + std::to_string(width) +
                         " does not match a " + std::to_string(grid.rows) + "x" +
                         std::to_string(grid.cols) + " grid of " + std::to_string(b) + "-pixel blocks");
    }
    std::vector<double> pixels(height * width);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const Block& block = grid.blocks[(y / b) * grid.cols + x / b];
            if (block.size != b) throw InputError("block size mismatch in grid");
            pixels[y * width + x] = std::clamp(block(y % b, x % b), 0.0, 1.0);
        }
    }
    return Image(height, width, std::move(pixels));
}

// ---------------------------------------------------------------------------
// DCT

std::vector<double> dct_matrix(std::size_t n) {
    std::vector<double> m(n * n);
    const double dc = std::sqrt(1.0 / static_cast<double>(n));
    const double ac = std::sqrt(2.0 / static_cast<double>(n));
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            m[k * n + i] = (k == 0 ? dc : ac) *
                           std::cos(std::numbers::pi * static_cast<double>((2 * i + 1) * k) /
                                    static_cast<double>(2 * n));
        }
    }
    return m;
}

namespace {

// out = left * in * right^T for n x n row-major matrices, with left = right = basis
// (forward) or their transposes (inverse).
std::vector<double> separable(const std::vector<double>& basis, std::span<const double> in,
                              std::size_t n, bool inverse) {
    auto b = [&](std::size_t k, std::size_t i) { return inverse ? basis[i * n + k] : basis[k * n + i]; };
    std::vector<double> tmp(n * n, 0.0), out(n * n, 0.0);
    // Rows first: tmp[r][k] = sum_c in[r][c] b(k, c)
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < n; ++k) {
            double s = 0.0;
            for (std::size_t c = 0; c < n; ++c) s += in[r * n + c] * b(k, c);
            tmp[r * n + k] = s;
        }
    }
    // Then columns: out[k][j] = sum_r b(k, r) tmp[r][j]
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t r = 0; r < n; ++r) {
            const double w = b(k, r);
            for (std::size_t j = 0; j < n; ++j) out[k * n + j] += w * tmp[r * n + j];
        }
    }
    return out;
}

}  // namespace

CoeffBlock dct2(const Block& block) {
    const auto basis = dct_matrix(block.size);
    return {block.size, separable(basis, block.values, block.size, false)};
}

Block idct2(const CoeffBlock& coeffs) {
    const auto basis = dct_matrix(coeffs.size);
    return {coeffs.size, separable(basis, coeffs.coefficients, coeffs.size, true)};
}

std::vector<double> vectorize(const Block& block) { return block.values; }

Block devectorize(std::span<const double> values, std::size_t block_size) {
    if (values.size() != block_size * block_size) {
        throw InputError("vector length " + std::to_string(values.size()) + " is not " +
                         std::to_string(block_size) + " squared");
    }
    return {block_size, std::vector<double>(values.begin(), values.end())};
}

}  // namespace rate_alloc
