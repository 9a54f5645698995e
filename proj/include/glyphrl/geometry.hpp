#pragma once

#include <algorithm>
#include <cstddef>
#include <span>

namespace glyphrl {

/// Axis-aligned box in window coordinates. Invariant: x1 <= x2, y1 <= y2;
/// after clipping all coordinates lie in [0, window_size]. Zero-area boxes
/// are legal (step clipping can collapse a box onto an edge).
struct Rect {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }

    bool operator==(const Rect&) const = default;
};

inline double intersection_area(const Rect& a, const Rect& b) {
    const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (w <= 0.0 || h <= 0.0) return 0.0;
    return w * h;
}

/// Pairwise IoU. Returns 0 when the union has zero area, so degenerate
/// boxes never contribute overlap.
inline double iou(const Rect& a, const Rect& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

/// Sum of IoU over all unique pairs, i < j in lexicographic order. The
/// summation order is fixed so results are bit-reproducible across runs.
inline double total_overlap(std::span<const Rect> rects) {
    double sum = 0.0;
    for (std::size_t i = 0; i < rects.size(); ++i) {
        for (std::size_t j = i + 1; j < rects.size(); ++j) {
            sum += iou(rects[i], rects[j]);
        }
    }
    return sum;
}

inline Rect clip_to_window(const Rect& r, double window_size) {
    const auto clamp = [window_size](double v) { return std::clamp(v, 0.0, window_size); };
    return Rect{clamp(r.x1), clamp(r.y1), clamp(r.x2), clamp(r.y2)};
}

}  // namespace glyphrl
