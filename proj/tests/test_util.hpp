#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>

#include <gtest/gtest.h>

#include "gdml/rng.hpp"
#include "gdml/tensor.hpp"

namespace gdml::test {

inline Tensor random_tensor(Rng& rng, std::initializer_list<std::size_t> shape, double scale = 1.0) {
  Tensor t{Shape(shape)};
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

// Fresh directory under the system temp dir named after the running test; removed on scope exit.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "gdml_";
    if (info) name += std::string(info->test_suite_name()) + "_" + info->name();
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace gdml::test
