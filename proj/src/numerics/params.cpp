#include "emoflow/numerics/params.hpp"

#include "emoflow/errors.hpp"

namespace emoflow::numerics {

std::size_t ParamSet::add(std::string name, Matrix value) {
  if (index_.count(name)) throw ConfigError("ParamSet: duplicate parameter '" + name + "'");
  const std::size_t i = entries_.size();
  index_.emplace(name, i);
  entries_.push_back({std::move(name), std::move(value)});
  return i;
}

void ParamSet::set(std::size_t i, const Matrix& value) {
  auto& e = entries_.at(i);
  if (e.value.rows() != value.rows() || e.value.cols() != value.cols())
    throw ConfigError("ParamSet: shape mismatch when setting '" + e.name + "'");
  e.value = value;
}

std::optional<std::size_t> ParamSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParamSet::index_of(std::string_view name) const {
  auto i = find(name);
  if (!i) throw ConfigError("ParamSet: unknown parameter '" + std::string(name) + "'");
  return *i;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& e : entries_) out.add(e.name, Matrix::Zero(e.value.rows(), e.value.cols()));
  return out;
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols())
      return false;
  }
  return true;
}

bool ParamSet::all_finite() const {
  for (const auto& e : entries_)
    if (!e.value.allFinite()) return false;
  return true;
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (!same_layout(other)) return false;
  for (std::size_t i = 0; i < size(); ++i)
    if (entries_[i].value != other.entries_[i].value) return false;
  return true;
}

}  // namespace emoflow::numerics
