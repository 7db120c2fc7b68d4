#pragma once

#include "conceptseg/core.hpp"

#include <cstddef>
#include <vector>

namespace conceptseg {

enum class Connectivity { Four = 4, Eight = 8 };

Connectivity connectivity_from_int(int value);

struct ComponentStats {
    std::size_t pixel_count = 0;
    /// Row-major index of the component's first pixel in scan order.
    std::size_t first_index = 0;
    BoxPrompt bounds;
};

/// Connected foreground components, ordered by first_index.
std::vector<ComponentStats> label_components(const BinaryMask& mask, Connectivity connectivity);

/// Per-pixel labels (0 = background, components numbered from 1 in scan order).
std::vector<int> label_map(const BinaryMask& mask, Connectivity connectivity);

/// Tight bounds of all foreground pixels; throws NoTarget on an empty mask.
BoxPrompt foreground_bounds(const BinaryMask& mask);

} // namespace conceptseg
