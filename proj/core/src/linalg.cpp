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

#include "hiltta/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hiltta
{
Matrix Matrix::identity(std::size_t n)
{
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix stack_rows(std::span<const FeatureVector> rows)
{
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r)
    {
        if (rows[r].size() != m.cols)
            throw DimensionError("stack_rows: row " + std::to_string(r) + " has dimension " +
                                 std::to_string(rows[r].size()) + ", expected " + std::to_string(m.cols));
        std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    }
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b)
{
    if (a.cols != b.rows) throw DimensionError("matmul: inner dimensions differ");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k)
        {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            double* orow = out.data.data() + i * out.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b)
{
    if (a.rows != b.rows) throw DimensionError("matmul_tn: row counts differ");
    Matrix out(a.cols, b.cols);
    for (std::size_t n = 0; n < a.rows; ++n)
        for (std::size_t i = 0; i < a.cols; ++i)
        {
            const double ani = a(n, i);
            if (ani == 0.0) continue;
            const double* brow = b.data.data() + n * b.cols;
            double* orow = out.data.data() + i * out.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += ani * brow[j];
        }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b)
{
    if (a.cols != b.cols) throw DimensionError("matmul_nt: column counts differ");
    Matrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.rows; ++j)
        {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(j, k);
            out(i, j) = s;
        }
    return out;
}

std::vector<double> matvec(const Matrix& m, std::span<const double> x)
{
    if (m.cols != x.size()) throw DimensionError("matvec: dimension mismatch");
    std::vector<double> y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
    {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) s += m(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

double orthogonality_error(const Matrix& m)
{
    const Matrix g = matmul_tn(m, m);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j)
            worst = std::max(worst, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
    return worst;
}

}  // namespace hiltta
