#include "spikefuse/events.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace spikefuse {

EventStream parse_events(const std::string& text) {
    EventStream s;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::int64_t prev_t = 0;
    bool have_prev = false;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream fields(line);
        Event e;
        if (!(fields >> e.t >> e.x >> e.y >> e.polarity)) {
            fail("event line ", lineno, " is not `t x y p`: \"", line, "\"");
        }
        std::string extra;
        if (fields >> extra) {
            fail("event line ", lineno, " has trailing fields: \"", line, "\"");
        }
        check(e.polarity == 0 || e.polarity == 1, "event line ", lineno, ": polarity ",
              e.polarity, " is not 0 or 1");
        check(e.x >= 0 && e.y >= 0, "event line ", lineno, ": negative coordinates");
        if (have_prev) {
            check(e.t >= prev_t, "event line ", lineno, ": timestamp ", e.t,
                  " decreases from ", prev_t);
        }
        prev_t = e.t;
        have_prev = true;
        s.events.push_back(e);
    }
    return s;
}

EventStream load_events(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "cannot open event file ", path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_events(buf.str());
}

void save_events(const std::string& path, const EventStream& s) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    check(out.good(), "cannot write event file ", path);
    for (const Event& e : s.events) {
        out << e.t << ' ' << e.x << ' ' << e.y << ' ' << e.polarity << '\n';
    }
    check(out.good(), "write failed for event file ", path);
}

std::vector<double> aggregate_events(const EventStream& s, std::size_t T, std::size_t H,
                                     std::size_t W, bool clip) {
    check(T >= 1, "aggregate_events needs T >= 1, got ", T);
    check(H >= 1 && W >= 1, "aggregate_events needs a non-empty grid");
    check(!s.events.empty(), "cannot aggregate an empty event stream");
    std::vector<double> out(T * 2 * H * W, 0.0);
    const std::int64_t t0 = s.events.front().t;
    const std::int64_t t1 = s.events.back().t;
    const std::int64_t span = t1 - t0;
    for (const Event& e : s.events) {
        check(e.x >= 0 && static_cast<std::size_t>(e.x) < W, "event x=", e.x,
              " outside grid width ", W);
        check(e.y >= 0 && static_cast<std::size_t>(e.y) < H, "event y=", e.y,
              " outside grid height ", H);
        // Equal bins over [t0, t1]; the final timestamp lands in the last bin.
        std::size_t bin;
        if (span == 0) {
            bin = 0;
        } else {
            bin = static_cast<std::size_t>(((e.t - t0) * static_cast<std::int64_t>(T)) / (span + 1));
        }
        std::size_t idx = ((bin * 2 + static_cast<std::size_t>(e.polarity)) * H +
                           static_cast<std::size_t>(e.y)) *
                              W +
                          static_cast<std::size_t>(e.x);
        if (clip) {
            out[idx] = 1.0;
        } else {
            out[idx] += 1.0;
        }
    }
    return out;
}

}  // namespace spikefuse
