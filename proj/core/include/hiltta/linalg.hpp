// Copyright 2026 The hiltta Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hiltta/domain.hpp"

namespace hiltta
{
/// Row-major dense matrix. Only the handful of operations the classifier and
/// the stream generator need.
struct Matrix
{
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Matrix identity(std::size_t n);

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

/// Stack equally sized vectors as matrix rows.
Matrix stack_rows(std::span<const FeatureVector> rows);

/// out = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// out = a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// out = a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// y = m * x
std::vector<double> matvec(const Matrix& m, std::span<const double> x);

/// Max-abs entry of m^T m - I.
double orthogonality_error(const Matrix& m);

}  // namespace hiltta
