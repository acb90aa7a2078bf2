#include "rate_alloc/sensing.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <string>

#include "rate_alloc/error.hpp"
#include "rate_alloc/parallel.hpp"
#include "rate_alloc/report.hpp"

namespace rate_alloc {

MeasurementMatrix::MeasurementMatrix(std::size_t dim, std::uint64_t seed, Rows rows)
    : dim_(dim), seed_(seed), effective_seed_(seed), rows_(std::move(rows)) {
    if (static_cast<std::size_t>(rows_.rows()) != dim_ || static_cast<std::size_t>(rows_.cols()) != dim_) {
        throw InputError("measurement matrix must be " + std::to_string(dim_) + " x " + std::to_string(dim_));
    }
}

std::vector<double> normal_draws(std::uint64_t seed, std::size_t count) {
    std::mt19937_64 gen(seed);
    constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
    std::vector<double> out;
    out.reserve(count + 1);
    while (out.size() < count) {
        const double u = static_cast<double>((gen() >> 11) + 1) * kScale;
        const double v = static_cast<double>(gen() >> 11) * kScale;
        const double radius = std::sqrt(-2.0 * std::log(u));
        const double angle = 2.0 * std::numbers::pi * v;
        out.push_back(radius * std::cos(angle));
        out.push_back(radius * std::sin(angle));
    }
    out.resize(count);
    return out;
}

MeasurementMatrix build_matrix(std::size_t block_size, std::uint64_t seed) {
    if (block_size < 2 || block_size > 255) {
        throw InputError("block size must lie in 2..255");
    }
    const std::size_t dim = block_size * block_size;
    const auto n = static_cast<Eigen::Index>(dim);

    for (std::uint64_t attempt = 0; attempt <= 8; ++attempt) {
        const std::uint64_t draw_seed = seed + attempt;
        const auto draws = normal_draws(draw_seed, dim * dim);
        // Columns of the transpose are the drawn rows, so Q's columns are their
        // Gram-Schmidt orthonormalization in order.
        Eigen::MatrixXd transposed = Eigen::Map<const MeasurementMatrix::Rows>(draws.data(), n, n).transpose();
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(transposed);

        const auto diag = qr.matrixQR().diagonal().cwiseAbs();
        if (!(diag.minCoeff() > 1e-10 * diag.maxCoeff())) continue;

        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
        MeasurementMatrix::Rows rows = q.transpose();
        for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index c = 0; c < n; ++c) {
                if (rows(r, c) != 0.0) {
                    if (rows(r, c) < 0.0) rows.row(r) *= -1.0;
                    break;
                }
            }
        }
        MeasurementMatrix matrix(dim, seed, std::move(rows));
        matrix.effective_seed_ = draw_seed;
        return matrix;
    }
    throw InternalError("measurement matrix draw is rank deficient after 8 retries");
}

std::vector<double> MeasurementRecord::padded(std::size_t length) const {
    std::vector<double> out;
    out.reserve(length);
    for (const auto& seg : segments) out.insert(out.end(), seg.values.begin(), seg.values.end());
    out.resize(std::max(length, out.size()), 0.0);
    out.resize(length);
    return out;
}

void MeasurementRecord::append(std::size_t stage, std::vector<double> values) {
    MeasurementSegment seg;
    seg.stage = stage;
    seg.row_start = rows_used() + 1;
    seg.row_end = seg.row_start + values.size() - 1;
    seg.values = std::move(values);
    segments.push_back(std::move(seg));
}

namespace {

void check_range(const MeasurementMatrix& matrix, std::size_t row_start, std::size_t row_end) {
    if (row_start < 1 || row_end + 1 < row_start || row_end > matrix.dim()) {
        throw InputError("row range [" + std::to_string(row_start) + ", " + std::to_string(row_end) +
                         "] is outside 1.." + std::to_string(matrix.dim()));
    }
}

}  // namespace

std::vector<double> sample_rows(const MeasurementMatrix& matrix, std::size_t row_start, std::size_t row_end,
                                std::span<const double> block_vector) {
    check_range(matrix, row_start, row_end);
    if (block_vector.size() != matrix.dim()) {
        throw InputError("block vector length does not match the operator");
    }
    std::vector<double> values;
    values.reserve(row_end + 1 - row_start);
    for (std::size_t r = row_start; r <= row_end; ++r) {
        const auto row = matrix.row(r - 1);
        double s = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * block_vector[j];
        values.push_back(s);
    }
    return values;
}

std::vector<double> adjoint_reconstruct(const MeasurementMatrix& matrix, std::size_t row_start,
                                        std::size_t row_end, std::span<const double> values) {
    check_range(matrix, row_start, row_end);
    if (values.size() != row_end + 1 - row_start) {
        throw InputError("measurement count " + std::to_string(values.size()) + " does not match rows " +
                         std::to_string(row_start) + ".." + std::to_string(row_end));
    }
    std::vector<double> x(matrix.dim(), 0.0);
    for (std::size_t j = 0; j < values.size(); ++j) {
        const auto row = matrix.row(row_start - 1 + j);
        for (std::size_t k = 0; k < x.size(); ++k) x[k] += values[j] * row[k];
    }
    return x;
}

std::vector<MeasurementRecord> sample_blocks(const MeasurementMatrix& matrix, const BlockGrid& grid,
                                             std::span<const std::int64_t> counts) {
    if (counts.size() != grid.block_count()) throw InputError("one count per block required");
    std::vector<MeasurementRecord> records(grid.block_count());
    parallel_for(records.size(), [&](std::size_t i) {
        records[i].block_index = i;
        const auto m = static_cast<std::size_t>(counts[i]);
        records[i].append(1, sample_rows(matrix, 1, m, vectorize(grid.blocks[i])));
    });
    return records;
}

Image reconstruct_plan(const GridShape& shape, std::span<const MeasurementRecord> records,
                       const MeasurementMatrix& matrix) {
    if (shape.block_size * shape.block_size != matrix.dim()) {
        throw InputError("operator size does not match the block size");
    }
    BlockGrid grid;
    grid.block_size = shape.block_size;
    grid.rows = shape.rows;
    grid.cols = shape.cols;
    grid.pad_bottom = shape.rows * shape.block_size - shape.height;
    grid.pad_right = shape.cols * shape.block_size - shape.width;
    grid.blocks.assign(grid.block_count(), Block::zeros(shape.block_size));

    std::vector<const MeasurementRecord*> by_block(grid.block_count(), nullptr);
    for (const auto& rec : records) {
        if (rec.block_index >= by_block.size()) throw InputError("record for a block outside the grid");
        by_block[rec.block_index] = &rec;
    }
    for (std::size_t i = 0; i < by_block.size(); ++i) {
        if (!by_block[i]) throw InputError("no measurements recorded for block " + std::to_string(i));
    }
    parallel_for(by_block.size(), [&](std::size_t i) {
        std::vector<double> x(matrix.dim(), 0.0);
        for (const auto& seg : by_block[i]->segments) {
            const auto part = adjoint_reconstruct(matrix, seg.row_start, seg.row_end, seg.values);
            for (std::size_t k = 0; k < x.size(); ++k) x[k] += part[k];
        }
        grid.blocks[i] = devectorize(x, shape.block_size);
    });
    return assemble(grid, shape.height, shape.width);
}

double psnr(const Image& reference, const Image& estimate) {
    if (reference.height() != estimate.height() || reference.width() != estimate.width()) {
        throw InputError("PSNR needs images of identical size");
    }
    double sse = 0.0;
    const auto a = reference.pixels();
    const auto b = estimate.pixels();
    for (std::size_t i = 0; i < a.size(); ++i) sse += (a[i] - b[i]) * (a[i] - b[i]);
    const double mse = sse / static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

// ---------------------------------------------------------------------------
// Binary dump

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t at) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[at + i]) << (8 * i);
    return v;
}

constexpr std::uint16_t kMatrixVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_matrix(const MeasurementMatrix& matrix) {
    std::vector<std::uint8_t> out{'M', 'B', 'R', 'M'};
    put_le<std::uint16_t>(out, kMatrixVersion);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(matrix.dim()));
    put_le<std::uint64_t>(out, matrix.seed());
    out.reserve(16 + matrix.dim() * matrix.dim() * 8);
    const double* data = matrix.rows().data();
    for (std::size_t i = 0; i < matrix.dim() * matrix.dim(); ++i) {
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(data[i]));
    }
    return out;
}

MeasurementMatrix decode_matrix(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "MBRM", 4) != 0) {
        throw InputError("not a measurement matrix dump");
    }
    if (get_le<std::uint16_t>(bytes, 4) != kMatrixVersion) {
        throw InputError("unsupported matrix dump version");
    }
    const std::size_t dim = get_le<std::uint16_t>(bytes, 6);
    const auto seed = get_le<std::uint64_t>(bytes, 8);
    if (bytes.size() != 16 + dim * dim * 8) throw InputError("matrix dump has the wrong payload size");
    MeasurementMatrix::Rows rows(dim, dim);
    double* data = rows.data();
    for (std::size_t i = 0; i < dim * dim; ++i) {
        data[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, 16 + 8 * i));
    }
    return MeasurementMatrix(dim, seed, std::move(rows));
}

void save_matrix(const MeasurementMatrix& matrix, const std::filesystem::path& path) {
    const auto bytes = encode_matrix(matrix);
    write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

}  // namespace rate_alloc
