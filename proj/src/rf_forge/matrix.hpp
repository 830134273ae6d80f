// Copyright 2026 The rf_forge Authors. All Rights Reserved.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rf_forge/error.hpp"

namespace rfforge {

// Dense row-major feature matrix handed to the regressors.
class Matrix {
 public:
  Matrix() = default;
  Matrix(size_t rows, size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(size_t rows, size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows * cols, ErrorKind::kShape,
            "matrix data does not match its shape");
  }

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  double operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(size_t r) { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& data() const { return data_; }

  Matrix select_rows(std::span<const size_t> rows) const {
    Matrix out(rows.size(), cols_);
    for (size_t i = 0; i < rows.size(); ++i) {
      auto src = row(rows[i]);
      std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
  }

  Matrix select_cols(std::span<const size_t> cols) const {
    Matrix out(rows_, cols.size());
    for (size_t r = 0; r < rows_; ++r)
      for (size_t j = 0; j < cols.size(); ++j) out(r, j) = (*this)(r, cols[j]);
    return out;
  }

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<double> data_;
};

template <typename T>
std::vector<T> gather(std::span<const T> values, std::span<const size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(values[i]);
  return out;
}

}  // namespace rfforge
