#pragma once

#include <cstddef>
#include <vector>

namespace assg {

inline constexpr int kUnlabeled = -1;
inline constexpr int kBackground = 0;

/// Per-segment supervision state: kUnlabeled or a class in 0..C (0 = background).
/// Holds the initial seeds and, during training, the grown sets.
struct SeedLabelMap {
  std::size_t num_classes = 0;  // C, foreground classes only
  std::vector<int> state;

  SeedLabelMap() = default;
  SeedLabelMap(std::size_t n_segments, std::size_t classes)
      : num_classes(classes), state(n_segments, kUnlabeled) {}

  std::size_t size() const { return state.size(); }
  bool labeled(std::size_t t) const { return state[t] != kUnlabeled; }
  std::size_t labeled_count() const;
  /// Locations carrying class c, ascending.
  std::vector<std::size_t> members(int c) const;

  friend bool operator==(const SeedLabelMap&, const SeedLabelMap&) = default;
};

}  // namespace assg
