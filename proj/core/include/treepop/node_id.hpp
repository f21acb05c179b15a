#pragma once

#include <compare>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>

namespace treepop {

/// Short unique label of a population node ("Z", "A", "K", ...).
class NodeId {
 public:
  NodeId() = default;
  explicit NodeId(std::string label) : label_{std::move(label)} {}

  const std::string& str() const { return label_; }
  bool empty() const { return label_.empty(); }

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
  friend bool operator==(const NodeId&, const NodeId&) = default;

  friend std::ostream& operator<<(std::ostream& os, const NodeId& id) { return os << id.label_; }

 private:
  std::string label_;
};

}  // namespace treepop

template <>
struct std::hash<treepop::NodeId> {
  std::size_t operator()(const treepop::NodeId& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
