#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparseloc {

/// A point (or vector) in R^d. Dimension is carried by the size.
using Point = std::vector<double>;

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Query touches a region for which no couplings were sampled.
struct WindowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Exact enumeration refused because the pattern count is over budget.
struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

double norm(const Point& x);
double distance(const Point& x, const Point& y);
double dot(const Point& x, const Point& y);

/// Volume of the unit ball in R^d.
double unit_ball_volume(int d);

/// Worker count from SPARSELOC_WORKERS (default 1, clamped to [1, 256]).
std::size_t worker_count();

/// Runs body(i) for i in [0, count) over worker_count() threads. Work is
/// split into fixed contiguous chunks; callers must write results by index
/// so the outcome does not depend on the schedule.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace sparseloc
