#pragma once

#include <cstddef>
#include <string>

#include "rate_alloc/imaging.hpp"

namespace rate_alloc {

enum class SyntheticKind {
    flat,          // constant 0.2
    checkerboard,  // flat 0.2 with one 0/1 checkerboard block in the middle of the grid
    gradient,      // horizontal ramp from 0 to 1
};

SyntheticKind parse_synthetic_kind(const std::string& name);
std::string to_string(SyntheticKind kind);

// side x side image; the checkerboard block is block_size wide with 0/1 cells
// of `cell` pixels.
Image synthetic_image(SyntheticKind kind, std::size_t side = 96, std::size_t block_size = 32, std::size_t cell = 3);

}  // namespace rate_alloc
