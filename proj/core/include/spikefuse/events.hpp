#pragma once

#include <string>
#include <vector>

#include "spikefuse/common.hpp"

namespace spikefuse {

/// Address-event record: timestamp (microseconds), pixel, polarity.
struct Event {
    std::int64_t t = 0;
    int x = 0;
    int y = 0;
    int polarity = 0;  // 0 or 1
};

struct EventStream {
    std::vector<Event> events;
};

/// Parses text lines `t x y p`. Blank lines and `#` comments are skipped.
/// Timestamps must be non-decreasing and polarity must be 0 or 1.
EventStream parse_events(const std::string& text);
EventStream load_events(const std::string& path);
void save_events(const std::string& path, const EventStream& s);

/// Bins events into T equal time slices over the stream's span and
/// accumulates per-pixel counts per polarity; with clip, counts saturate
/// at 1. Output is [T, 2, H, W] row-major. Coordinates outside [0,W) x [0,H)
/// are an error.
std::vector<double> aggregate_events(const EventStream& s, std::size_t T, std::size_t H,
                                     std::size_t W, bool clip = true);

}  // namespace spikefuse
