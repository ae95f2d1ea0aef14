#pragma once

#include <array>

namespace cubeviz::detail {

// Cube corners: 0 (0,0,0) 1 (1,0,0) 2 (1,1,0) 3 (0,1,0)
//               4 (0,0,1) 5 (1,0,1) 6 (1,1,1) 7 (0,1,1)
inline constexpr std::array<std::array<int, 3>, 8> corner_offsets{{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};

// Cube edges as (lower corner, upper corner) along one grid axis.
inline constexpr std::array<std::array<int, 2>, 12> edge_corners{{
    {0, 1}, {1, 2}, {3, 2}, {0, 3},
    {4, 5}, {5, 6}, {7, 6}, {4, 7},
    {0, 4}, {1, 5}, {2, 6}, {3, 7},
}};

// Axis each edge runs along (0 = x, 1 = y, 2 = z).
inline constexpr std::array<int, 12> edge_axis{0, 1, 0, 1, 0, 1, 0, 1, 2, 2, 2, 2};

// Up to five triangles per case as edge indices, padded with -1.
using CaseTable = std::array<std::array<signed char, 16>, 256>;

const CaseTable& triangle_table();

} // namespace cubeviz::detail
