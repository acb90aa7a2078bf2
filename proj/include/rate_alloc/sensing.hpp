#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rate_alloc/imaging.hpp"

namespace rate_alloc {

// Seeded B^2 x B^2 operator with orthonormal rows.
//
// Construction (reproducible across implementations):
//   1. std::mt19937_64 seeded with `seed` produces 64-bit words w.
//   2. Each word gives u = ((w >> 11) + 1) * 2^-53 in (0, 1] for the first draw
//      of a pair and v = (w >> 11) * 2^-53 in [0, 1) for the second.
//   3. Box-Muller turns (u, v) into sqrt(-2 ln u) cos(2 pi v) and
//      sqrt(-2 ln u) sin(2 pi v); the matrix is filled row-major with these.
//   4. Rows are orthonormalized in order (QR of the transpose), then each row is
//      negated if its first nonzero entry is negative.
// A draw whose QR diagonal has a ratio below 1e-10 is retried with seed + 1
// (at most 8 retries).
class MeasurementMatrix {
public:
    using Rows = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    MeasurementMatrix(std::size_t dim, std::uint64_t seed, Rows rows);

    std::size_t dim() const noexcept { return dim_; }
    std::uint64_t seed() const noexcept { return seed_; }
    // Seed the rows were actually drawn from (differs from seed() after a retry).
    std::uint64_t effective_seed() const noexcept { return effective_seed_; }
    const Rows& rows() const noexcept { return rows_; }
    std::span<const double> row(std::size_t index) const {
        return {rows_.data() + index * dim_, dim_};
    }

    bool operator==(const MeasurementMatrix& other) const {
        return dim_ == other.dim_ && seed_ == other.seed_ && rows_ == other.rows_;
    }

private:
    friend MeasurementMatrix build_matrix(std::size_t, std::uint64_t);
    std::size_t dim_;
    std::uint64_t seed_;
    std::uint64_t effective_seed_;
    Rows rows_;
};

MeasurementMatrix build_matrix(std::size_t block_size, std::uint64_t seed);

// Standard-normal stream used by build_matrix.
std::vector<double> normal_draws(std::uint64_t seed, std::size_t count);

// One contiguous slice of rows sampled in one stage. Rows are 1-based and
// inclusive; an empty slice has row_end = row_start - 1.
struct MeasurementSegment {
    std::size_t stage = 1;
    std::size_t row_start = 1;
    std::size_t row_end = 0;
    std::vector<double> values;

    std::size_t count() const noexcept { return row_end + 1 - row_start; }
};

struct MeasurementRecord {
    std::size_t block_index = 0;
    std::vector<MeasurementSegment> segments;

    std::size_t rows_used() const noexcept { return segments.empty() ? 0 : segments.back().row_end; }
    // Concatenation of all segment values, zero-padded to `length`.
    std::vector<double> padded(std::size_t length) const;
    // Appends a segment continuing after the last one.
    void append(std::size_t stage, std::vector<double> values);
};

// values[j] = <row(row_start + j), x> for 1-based inclusive [row_start, row_end].
// row_end = row_start - 1 is the empty range.
std::vector<double> sample_rows(const MeasurementMatrix& matrix, std::size_t row_start, std::size_t row_end,
                                std::span<const double> block_vector);

// sum_j values[j] * row(row_start + j): the orthogonal projection of the
// sampled block onto the span of the rows used.
std::vector<double> adjoint_reconstruct(const MeasurementMatrix& matrix, std::size_t row_start,
                                        std::size_t row_end, std::span<const double> values);

// Samples rows 1..counts[i] of every block in one segment.
std::vector<MeasurementRecord> sample_blocks(const MeasurementMatrix& matrix, const BlockGrid& grid,
                                             std::span<const std::int64_t> counts);

struct GridShape {
    std::size_t block_size = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t height = 0;
    std::size_t width = 0;
};

// Adjoint reconstruction of every block from its segments, assembled and
// clamped to [0, 1]. Throws InputError if a block has no record.
Image reconstruct_plan(const GridShape& shape, std::span<const MeasurementRecord> records,
                       const MeasurementMatrix& matrix);

// 10 log10(1 / MSE) for unit-range images; +infinity when identical.
double psnr(const Image& reference, const Image& estimate);
inline bool psnr_identical(double db) { return db == std::numeric_limits<double>::infinity(); }

// Binary dump: "MBRM", u16 version, u16 dim, u64 seed, then dim*dim f64 rows,
// all little-endian.
std::vector<std::uint8_t> encode_matrix(const MeasurementMatrix& matrix);
MeasurementMatrix decode_matrix(std::span<const std::uint8_t> bytes);
void save_matrix(const MeasurementMatrix& matrix, const std::filesystem::path& path);

}  // namespace rate_alloc
