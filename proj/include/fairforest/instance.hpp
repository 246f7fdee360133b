#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace fairforest {

/// One stream element: features plus the feedback revealed after the
/// prediction (task label y and protected group a).
struct Instance {
  std::vector<double> x;
  std::size_t y = 0;
  std::size_t a = 0;
};

/// Single-consumer pull interface over a stream of instances.
class InstanceSource {
 public:
  virtual ~InstanceSource() = default;
  virtual std::optional<Instance> next() = 0;
};

}  // namespace fairforest
