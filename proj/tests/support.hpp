#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "utc/network.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(UTC_FIXTURES) / name; }
inline std::filesystem::path scenario(const std::string& name) { return std::filesystem::path(UTC_SCENARIOS) / name; }

inline std::shared_ptr<const utc::TrafficNetwork> toy_net() {
  return std::make_shared<const utc::TrafficNetwork>(utc::load_network(fixture("toy_grid.network.json")));
}

// Scratch directory unique to one test; removed up front, left behind for inspection.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("utc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
