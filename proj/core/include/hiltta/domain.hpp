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

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace hiltta
{
/// Dense real vector: raw inputs (D-dim) or penultimate features (H-dim).
using FeatureVector = std::vector<double>;

/// Categorical posterior over C classes. Entries are non-negative and sum to 1.
using ProbVector = std::vector<double>;

using SampleId = std::int64_t;

/// Thrown when vector or matrix shapes disagree.
class DimensionError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// One test-stream observation. The true class is kept in a GroundTruth table
/// that only labelers and scorers receive.
struct Sample
{
    SampleId id = 0;
    FeatureVector x;
    int domain_index = 0;
};

struct Batch
{
    std::vector<Sample> samples;
    int batch_index = 0;

    [[nodiscard]] std::size_t size() const { return samples.size(); }
};

struct LabeledExample
{
    SampleId sample_id = 0;
    FeatureVector x;
    int y = 0;
    int domain_index = 0;

    bool operator==(const LabeledExample&) const = default;
};

/// sample id -> true class.
using GroundTruth = std::unordered_map<SampleId, int>;

/// Counter-based generator: value n is splitmix64(seed + n * golden). The
/// integer stream is identical on every platform; normals go through libm.
class Rng
{
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);
    /// Standard normal (Box-Muller, one draw per pair of uniforms).
    double normal();
    /// Independent child stream keyed by `tag`; does not advance this stream.
    [[nodiscard]] Rng fork(std::uint64_t tag) const;

    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] std::uint64_t counter() const { return counter_; }

    template <typename T>
    void shuffle(std::vector<T>& v)
    {
        for (std::size_t i = v.size(); i > 1; --i)
        {
            const auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Floor applied to probabilities before any logarithm.
inline constexpr double kProbFloor = 1e-12;

/// True when every entry is in [0,1] and the entries sum to 1 within `tol`.
bool is_valid_prob(std::span<const double> p, double tol = 1e-9);

/// Index of the largest entry; ties go to the smallest index.
int argmax_class(std::span<const double> p);

/// Smallest index of the minimum; NaN entries never win.
int argmin_index(std::span<const double> v);

/// Shannon entropy in nats with 0 log 0 = 0.
double entropy(std::span<const double> p);

/// Copy of `p` sorted in descending order.
ProbVector sorted_posterior(std::span<const double> p);

/// Numerically stable softmax.
ProbVector softmax(std::span<const double> logits);

}  // namespace hiltta
