#include "rate_alloc/synthetic.hpp"

#include <algorithm>
#include <vector>

#include "rate_alloc/error.hpp"

namespace rate_alloc {

namespace {
constexpr double kBackground = 0.2;
}  // namespace

SyntheticKind parse_synthetic_kind(const std::string& name) {
    if (name == "flat") return SyntheticKind::flat;
    if (name == "checkerboard" || name == "one-checkerboard-block") return SyntheticKind::checkerboard;
    if (name == "gradient") return SyntheticKind::gradient;
    throw InputError("unknown synthetic image '" + name + "' (expected flat, checkerboard or gradient)");
}

std::string to_string(SyntheticKind kind) {
    switch (kind) {
        case SyntheticKind::flat: return "flat";
        case SyntheticKind::checkerboard: return "checkerboard";
        case SyntheticKind::gradient: return "gradient";
    }
    return "unknown";
}

Image synthetic_image(SyntheticKind kind, std::size_t side, std::size_t block_size, std::size_t cell) {
    if (side == 0 || block_size == 0 || cell == 0) throw InputError("synthetic image sizes must be positive");
    std::vector<double> px(side * side, kBackground);
    switch (kind) {
        case SyntheticKind::flat:
            break;
        case SyntheticKind::gradient:
            for (std::size_t y = 0; y < side; ++y) {
                for (std::size_t x = 0; x < side; ++x) {
                    px[y * side + x] = side == 1 ? 0.0 : static_cast<double>(x) / static_cast<double>(side - 1);
                }
            }
            break;
        case SyntheticKind::checkerboard: {
            const std::size_t blocks = (side + block_size - 1) / block_size;
            const std::size_t y0 = (blocks / 2) * block_size;
            const std::size_t x0 = (blocks / 2) * block_size;
            for (std::size_t y = y0; y < std::min(side, y0 + block_size); ++y) {
                for (std::size_t x = x0; x < std::min(side, x0 + block_size); ++x) {
                    px[y * side + x] = ((y - y0) / cell + (x - x0) / cell) % 2 == 0 ? 1.0 : 0.0;
                }
            }
            break;
        }
    }
    return Image(side, side, std::move(px));
}

}  // namespace rate_alloc
