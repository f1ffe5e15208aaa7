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

#include "hiltta/domain.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

namespace hiltta
{
std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t Rng::next_u64()
{
    ++counter_;
    return splitmix64(seed_ + counter_ * 0x9E3779B97F4A7C15ULL);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_index(std::uint64_t n)
{
    if (n == 0) throw std::invalid_argument("Rng::uniform_index: n must be positive");
    // rejection sampling keeps the draw unbiased
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return r % n;
}

double Rng::normal()
{
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::fork(std::uint64_t tag) const { return Rng(splitmix64(seed_ ^ splitmix64(tag + 0x632BE59BD9B4E019ULL))); }

bool is_valid_prob(std::span<const double> p, double tol)
{
    if (p.empty()) return false;
    double sum = 0.0;
    for (double v : p)
    {
        if (!(v >= 0.0 && v <= 1.0)) return false;
        sum += v;
    }
    return std::abs(sum - 1.0) <= tol;
}

int argmax_class(std::span<const double> p)
{
    if (p.empty()) throw DimensionError("argmax_class: empty probability vector");
    int best = 0;
    for (std::size_t c = 1; c < p.size(); ++c)
        if (p[c] > p[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    return best;
}

int argmin_index(std::span<const double> v)
{
    if (v.empty()) throw DimensionError("argmin_index: empty vector");
    int best = -1;
    for (std::size_t i = 0; i < v.size(); ++i)
    {
        if (std::isnan(v[i])) continue;
        if (best < 0 || v[i] < v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    return best < 0 ? 0 : best;
}

double entropy(std::span<const double> p)
{
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(std::max(v, kProbFloor));
    return h;
}

ProbVector sorted_posterior(std::span<const double> p)
{
    ProbVector out(p.begin(), p.end());
    std::sort(out.begin(), out.end(), std::greater<>());
    return out;
}

ProbVector softmax(std::span<const double> logits)
{
    if (logits.empty()) throw DimensionError("softmax: empty logits");
    const double m = *std::max_element(logits.begin(), logits.end());
    ProbVector out(logits.size());
    double z = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c)
    {
        out[c] = std::exp(logits[c] - m);
        z += out[c];
    }
    for (double& v : out) v /= z;
    return out;
}

}  // namespace hiltta
