#pragma once

#include <bit>
#include <cstdint>
#include <vector>

namespace flowplan {

using NodeIndex = int;
using ModelIndex = int;

/// Set of workflow nodes as a 64-bit mask; node i is bit i.
class NodeSet {
 public:
  static constexpr int kMaxNodes = 64;

  constexpr NodeSet() = default;
  constexpr explicit NodeSet(std::uint64_t bits) : bits_(bits) {}

  static constexpr NodeSet all_of(int node_count) {
    return NodeSet(node_count >= kMaxNodes ? ~std::uint64_t{0}
                                           : (std::uint64_t{1} << node_count) - 1);
  }
  static constexpr NodeSet single(NodeIndex v) { return NodeSet(std::uint64_t{1} << v); }

  constexpr std::uint64_t bits() const { return bits_; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr int size() const { return std::popcount(bits_); }
  constexpr bool contains(NodeIndex v) const { return (bits_ >> v) & 1U; }
  constexpr bool subset_of(NodeSet other) const { return (bits_ & ~other.bits_) == 0; }

  constexpr void insert(NodeIndex v) { bits_ |= std::uint64_t{1} << v; }
  constexpr void erase(NodeIndex v) { bits_ &= ~(std::uint64_t{1} << v); }

  friend constexpr NodeSet operator|(NodeSet a, NodeSet b) { return NodeSet(a.bits_ | b.bits_); }
  friend constexpr NodeSet operator&(NodeSet a, NodeSet b) { return NodeSet(a.bits_ & b.bits_); }
  friend constexpr NodeSet operator-(NodeSet a, NodeSet b) { return NodeSet(a.bits_ & ~b.bits_); }
  friend constexpr bool operator==(NodeSet, NodeSet) = default;

  /// Visits members in increasing index order.
  template <class F>
  constexpr void for_each(F&& f) const {
    for (std::uint64_t rest = bits_; rest != 0; rest &= rest - 1) {
      f(static_cast<NodeIndex>(std::countr_zero(rest)));
    }
  }

  std::vector<NodeIndex> to_vector() const {
    std::vector<NodeIndex> out;
    out.reserve(static_cast<std::size_t>(size()));
    for_each([&](NodeIndex v) { out.push_back(v); });
    return out;
  }

 private:
  std::uint64_t bits_ = 0;
};

}  // namespace flowplan
