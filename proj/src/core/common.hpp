#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dsplat {

template <class T> using Vec2 = Eigen::Matrix<T, 2, 1>;
template <class T> using Vec3 = Eigen::Matrix<T, 3, 1>;
template <class T> using Vec4 = Eigen::Matrix<T, 4, 1>;
template <class T> using Mat2 = Eigen::Matrix<T, 2, 2>;
template <class T> using Mat3 = Eigen::Matrix<T, 3, 3>;
template <class T> using Mat23 = Eigen::Matrix<T, 2, 3>;
template <class T> using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T> using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class ErrorCode {
    invalid_argument = 2,  // bad inputs, shape mismatches, config validation
    io = 3,                // file system, parse failures
    numeric = 4,           // non-finite values, degenerate matrices
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool ok, ErrorCode code, const std::string& msg) {
    if (!ok) fail(code, msg);
}

template <class T> T sigmoid(T x) { return T(1) / (T(1) + std::exp(-x)); }
template <class T> T logit(T y) { return std::log(y / (T(1) - y)); }

// Deterministic per-purpose RNG streams derived from one run seed.
inline std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream) {
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * (stream + 1)));
    rng.discard(7);
    return rng;
}

// Chunked parallel loop. Results must not depend on the partition: callers
// either write disjoint outputs or reduce in a fixed order afterwards.
template <class Fn>
void parallel_for(std::int64_t begin, std::int64_t end, int n_threads, Fn&& fn) {
    const std::int64_t n = end - begin;
    if (n <= 0) return;
    if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
    n_threads = static_cast<int>(std::min<std::int64_t>(std::max(n_threads, 1), n));
    if (n_threads == 1) {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    const std::int64_t chunk = (n + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
        const std::int64_t lo = begin + t * chunk;
        const std::int64_t hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back([lo, hi, &fn] {
            for (std::int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& w : workers) w.join();
}

}  // namespace dsplat
