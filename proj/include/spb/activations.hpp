#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace spb {

/// One pooled activation vector per sample, stored row-major.
struct ActivationMatrix
{
  std::vector<std::string> ids;
  std::size_t dim = 0;
  std::vector<double> values; // ids.size() * dim

  std::size_t rows() const { return ids.size(); }

  std::span<const double> row(std::size_t i) const
  {
    return std::span<const double>(values).subspan(i * dim, dim);
  }

  friend bool operator==(const ActivationMatrix&, const ActivationMatrix&) = default;
};

} // namespace spb
