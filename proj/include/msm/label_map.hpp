#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace msm {

/// H x W instance IDs; 0 is background.
using LabelMap = Eigen::Array<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Sorted distinct non-zero IDs present in the map.
inline std::vector<std::int32_t> object_ids(const LabelMap& labels) {
  std::vector<std::int32_t> ids;
  std::vector<bool> seen;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const std::int32_t id = labels.data()[i];
    if (id <= 0) continue;
    if (static_cast<std::size_t>(id) >= seen.size()) seen.resize(static_cast<std::size_t>(id) + 1, false);
    seen[static_cast<std::size_t>(id)] = true;
  }
  for (std::size_t id = 1; id < seen.size(); ++id) {
    if (seen[id]) ids.push_back(static_cast<std::int32_t>(id));
  }
  return ids;
}

}  // namespace msm
