#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <vector>

#include "pistis/cascade.hpp"
#include "pistis/pipeline.hpp"
#include "pistis/util.hpp"

namespace pistis {

struct TuneSpace {
    std::vector<size_t> p_m_grid;
    std::vector<size_t> p_pr_grid;
    std::vector<size_t> p_r_grid;
    double l_th_ms = 0.0;
};

struct FrontierRow {
    size_t p_m = 0;
    size_t p_pr = 0;
    size_t p_r = 0;
    double accuracy = 0.0;
    double lat_p50 = 0.0;
    double lat_p95 = 0.0;
};

struct TuneResult {
    CascadeConfig best;
    FrontierRow best_row;
    std::vector<FrontierRow> frontier;
};

inline std::string frontier_to_csv(const std::vector<FrontierRow>& rows) {
    std::string out = "p_m,p_pr,p_r,acc,lat_p50,lat_p95\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%zu,%zu,%zu,%.6f,%.6f,%.6f\n", r.p_m, r.p_pr, r.p_r,
                      r.accuracy, r.lat_p50, r.lat_p95);
        out += buf;
    }
    return out;
}

inline std::vector<FrontierRow> frontier_from_csv(const std::string& csv) {
    std::vector<FrontierRow> rows;
    auto lines = split(csv, '\n');
    for (size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        auto cells = split(lines[i], ',');
        if (cells.size() != 6) throw Error(ErrorCode::data, "frontier CSV row has wrong arity");
        FrontierRow r;
        r.p_m = std::stoull(cells[0]);
        r.p_pr = std::stoull(cells[1]);
        r.p_r = std::stoull(cells[2]);
        r.accuracy = std::stod(cells[3]);
        r.lat_p50 = std::stod(cells[4]);
        r.lat_p95 = std::stod(cells[5]);
        rows.push_back(r);
    }
    return rows;
}

// Exhaustive grid evaluation of "maximize accuracy subject to p95 latency
// within the budget". Ties prefer lower latency, then lexicographically
// smaller (p_m, p_pr, p_r). The full frontier comes back for plotting.
inline TuneResult tune(const TuneSpace& space, const CascadeConfig& base,
                       const std::function<EvalReport(const CascadeConfig&)>& evaluator) {
    if (space.l_th_ms <= 0.0) {
        throw Error(ErrorCode::invalid_argument, "latency budget must be positive");
    }
    TuneResult result;
    bool found = false;
    double min_p95 = std::numeric_limits<double>::infinity();

    for (size_t p_m : space.p_m_grid) {
        for (size_t p_pr : space.p_pr_grid) {
            for (size_t p_r : space.p_r_grid) {
                if (!(p_r >= 1 && p_r <= p_pr && p_pr <= p_m)) continue;
                CascadeConfig config = base;
                config.p_m = p_m;
                config.p_pr = p_pr;
                config.p_r = p_r;
                config.l_th_ms = space.l_th_ms;
                auto report = evaluator(config);

                FrontierRow row;
                row.p_m = p_m;
                row.p_pr = p_pr;
                row.p_r = p_r;
                row.accuracy = report.accuracy;
                row.lat_p50 = report.latency.p50.total_ms;
                row.lat_p95 = report.latency.p95.total_ms;
                result.frontier.push_back(row);
                min_p95 = std::min(min_p95, row.lat_p95);

                if (row.lat_p95 > space.l_th_ms) continue;
                bool better = false;
                if (!found) {
                    better = true;
                } else if (row.accuracy != result.best_row.accuracy) {
                    better = row.accuracy > result.best_row.accuracy;
                } else if (row.lat_p95 != result.best_row.lat_p95) {
                    better = row.lat_p95 < result.best_row.lat_p95;
                } else {
                    auto key = std::array<size_t, 3>{row.p_m, row.p_pr, row.p_r};
                    auto best_key = std::array<size_t, 3>{result.best_row.p_m,
                                                          result.best_row.p_pr,
                                                          result.best_row.p_r};
                    better = key < best_key;
                }
                if (better) {
                    found = true;
                    result.best = config;
                    result.best_row = row;
                }
            }
        }
    }

    if (result.frontier.empty()) {
        throw Error(ErrorCode::invalid_argument, "tuning grid contains no valid point");
    }
    if (!found) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%.3f", min_p95);
        throw Error(ErrorCode::infeasible,
                    "no feasible point: minimum observed p95 latency " + std::string(buf) +
                        " ms exceeds budget");
    }
    return result;
}

// --------------------------------------------------------------------------
// Runtime downgrade
// --------------------------------------------------------------------------

struct ServiceLevel {
    CascadeConfig config;
    bool changed = false;
};

namespace detail {

inline size_t shrink_quarter(size_t value, size_t floor_value) {
    size_t cut = (value + 3) / 4;  // ceil(25%)
    size_t next = value > cut ? value - cut : floor_value;
    return std::max(next, floor_value);
}

}  // namespace detail

// One downgrade/upgrade decision. Over budget (p95 >= L_th): shave 25% off
// p_m down to p_pr, then off p_pr down to p_r, then collapse reasoning to a
// single path. Below the hysteresis band (p95 < 0.7 L_th): restore one step
// in reverse order, never exceeding the base configuration. The fully
// degraded config is a fixed point.
inline ServiceLevel downgrade_step(const CascadeConfig& current, double observed_p95_ms,
                                   double l_th_ms, const CascadeConfig& base) {
    ServiceLevel out;
    out.config = current;
    if (l_th_ms <= 0.0) throw Error(ErrorCode::invalid_argument, "latency budget must be positive");

    if (observed_p95_ms >= l_th_ms) {
        if (current.p_m > current.p_pr) {
            out.config.p_m = detail::shrink_quarter(current.p_m, current.p_pr);
        } else if (current.p_pr > current.p_r) {
            out.config.p_pr = detail::shrink_quarter(current.p_pr, current.p_r);
            out.config.p_m = std::max(out.config.p_m, out.config.p_pr);
        } else if (current.reason_paths > 1) {
            out.config.reason_paths = 1;
        }
    } else if (observed_p95_ms < 0.7 * l_th_ms) {
        if (current.reason_paths < base.reason_paths) {
            out.config.reason_paths = base.reason_paths;
        } else if (current.p_pr < base.p_pr && current.p_pr < current.p_m) {
            size_t grown = current.p_pr + (current.p_pr + 3) / 4;
            out.config.p_pr = std::min({grown, base.p_pr, current.p_m});
        } else if (current.p_m < base.p_m) {
            size_t grown = current.p_m + (current.p_m + 3) / 4;
            out.config.p_m = std::min(grown, base.p_m);
        }
    }

    out.config.validate();
    out.changed = out.config.p_m != current.p_m || out.config.p_pr != current.p_pr ||
                  out.config.reason_paths != current.reason_paths;
    return out;
}

// Sliding-window latency controller; the one mutable shared piece of the
// query service. Thread-safe.
class DowngradeController {
public:
    DowngradeController(CascadeConfig base, size_t window = 20, size_t min_samples = 10)
        : base_(base), current_(base), window_(window), min_samples_(min_samples) {}

    CascadeConfig current() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return current_;
    }

    CascadeConfig base() const { return base_; }

    // Records one observed end-to-end latency and applies at most one
    // downgrade/upgrade step.
    void record(double total_ms) {
        std::lock_guard<std::mutex> lock(mutex_);
        samples_.push_back(total_ms);
        while (samples_.size() > window_) samples_.pop_front();
        if (samples_.size() < min_samples_) return;
        std::vector<double> v(samples_.begin(), samples_.end());
        double p95 = percentile(std::move(v), 95.0);
        auto level = downgrade_step(current_, p95, base_.l_th_ms, base_);
        if (level.changed) {
            current_ = level.config;
            samples_.clear();  // re-observe under the new level
        }
    }

private:
    CascadeConfig base_;
    CascadeConfig current_;
    size_t window_;
    size_t min_samples_;
    std::deque<double> samples_;
    mutable std::mutex mutex_;
};

}  // namespace pistis
