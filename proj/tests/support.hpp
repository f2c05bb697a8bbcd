#pragma once

#include <cmath>
#include <unistd.h>

#include <functional>
#include <vector>

#include "lotn/ops.hpp"

namespace lotn::testing {

// Central-difference gradient of a scalar function of one tensor, written
// independently of the library's checker.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, ag::Tensor x, double h = 1e-6) {
  std::vector<double> out(x.size());
  auto v = x.values_mut();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + h;
    const double plus = f();
    v[i] = keep - h;
    const double minus = f();
    v[i] = keep;
    out[i] = (plus - minus) / (2 * h);
  }
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline ag::Tensor random_tensor(ag::Shape shape, Rng& rng, double scale = 1.0, bool requires_grad = true) {
  std::vector<double> v(ag::element_count(shape));
  rng.fill_uniform(v, -scale, scale);
  return ag::Tensor(std::move(shape), std::move(v), requires_grad);
}

}  // namespace lotn::testing

#include <filesystem>
#include <fstream>
#include <string>

namespace lotn::testing {

// Per-test scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("lotn_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path write(const std::string& name, const std::string& contents) const {
    auto p = path_ / name;
    std::ofstream(p, std::ios::binary) << contents;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace lotn::testing
