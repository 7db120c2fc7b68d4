#include "conceptseg/components.hpp"

#include <algorithm>

namespace conceptseg {

Connectivity connectivity_from_int(int value) {
    if (value == 4) {
        return Connectivity::Four;
    }
    if (value == 8) {
        return Connectivity::Eight;
    }
    throw Error(ErrorCode::InvalidArgument, "connectivity must be 4 or 8");
}

namespace {

struct Labeling {
    std::vector<int> labels;
    std::vector<ComponentStats> stats;
};

// Scan-order seeded flood fill with an explicit stack; labels follow first-pixel order.
Labeling run_labeling(const BinaryMask& mask, Connectivity connectivity) {
    const int w = mask.width();
    const int h = mask.height();
    Labeling out;
    out.labels.assign(mask.size(), 0);
    std::vector<std::size_t> stack;
    const bool diagonal = connectivity == Connectivity::Eight;

    for (std::size_t seed = 0; seed < mask.size(); ++seed) {
        if (!mask.test(seed) || out.labels[seed] != 0) {
            continue;
        }
        const int label = static_cast<int>(out.stats.size()) + 1;
        ComponentStats comp;
        comp.first_index = seed;
        const int sx = static_cast<int>(seed % w);
        const int sy = static_cast<int>(seed / w);
        comp.bounds = {sx, sy, sx, sy};

        out.labels[seed] = label;
        stack.push_back(seed);
        while (!stack.empty()) {
            const auto idx = stack.back();
            stack.pop_back();
            const int x = static_cast<int>(idx % w);
            const int y = static_cast<int>(idx / w);
            ++comp.pixel_count;
            comp.bounds.x_min = std::min(comp.bounds.x_min, x);
            comp.bounds.x_max = std::max(comp.bounds.x_max, x);
            comp.bounds.y_min = std::min(comp.bounds.y_min, y);
            comp.bounds.y_max = std::max(comp.bounds.y_max, y);
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if ((dx == 0 && dy == 0) || (!diagonal && dx != 0 && dy != 0)) {
                        continue;
                    }
                    const int nx = x + dx;
                    const int ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) {
                        continue;
                    }
                    const auto n = static_cast<std::size_t>(ny) * w + nx;
                    if (mask.test(n) && out.labels[n] == 0) {
                        out.labels[n] = label;
                        stack.push_back(n);
                    }
                }
            }
        }
        out.stats.push_back(comp);
    }
    return out;
}

} // namespace

std::vector<ComponentStats> label_components(const BinaryMask& mask, Connectivity connectivity) {
    return run_labeling(mask, connectivity).stats;
}

std::vector<int> label_map(const BinaryMask& mask, Connectivity connectivity) {
    return run_labeling(mask, connectivity).labels;
}

BoxPrompt foreground_bounds(const BinaryMask& mask) {
    BoxPrompt box{mask.width(), mask.height(), -1, -1};
    bool any = false;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.test(x, y)) {
                any = true;
                box.x_min = std::min(box.x_min, x);
                box.y_min = std::min(box.y_min, y);
                box.x_max = std::max(box.x_max, x);
                box.y_max = std::max(box.y_max, y);
            }
        }
    }
    if (!any) {
        throw Error(ErrorCode::NoTarget, "mask has no foreground pixels");
    }
    return box;
}

} // namespace conceptseg
