#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace emoflow::numerics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ParamEntry {
  std::string name;
  Matrix value;
};

/// Ordered collection of named parameter arrays. The ordinal of an entry is
/// its insertion position and never changes; shapes are fixed once added.
class ParamSet {
 public:
  std::size_t add(std::string name, Matrix value);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  const ParamEntry& entry(std::size_t i) const { return entries_.at(i); }
  const Matrix& value(std::size_t i) const { return entries_.at(i).value; }
  const std::string& name(std::size_t i) const { return entries_.at(i).name; }

  /// Shape-checked overwrite.
  void set(std::size_t i, const Matrix& value);
  Matrix& mutable_value(std::size_t i) { return entries_.at(i).value; }

  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  std::size_t scalar_count() const;
  ParamSet zeros_like() const;
  bool same_layout(const ParamSet& other) const;
  bool all_finite() const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  bool operator==(const ParamSet& other) const;

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace emoflow::numerics
