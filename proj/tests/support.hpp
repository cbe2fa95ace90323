// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "mgfn/rng.hpp"
#include "mgfn/tensor.hpp"

namespace mgfn::test {

inline std::vector<double> normals(std::size_t n, Rng& rng, double sd = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) {
        x = sd * rng.normal();
    }
    return v;
}

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false, double sd = 1.0) {
    const auto n = shape_numel(shape);
    return Tensor::from(std::move(shape), normals(n, rng, sd), requires_grad);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double worst = a.size() == b.size() ? 0.0 : INFINITY;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("mgfn-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    std::filesystem::path path_;
};

}  // namespace mgfn::test
