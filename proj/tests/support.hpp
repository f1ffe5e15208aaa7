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


// Shared helpers for the unit and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "hiltta/classifier.hpp"
#include "hiltta/harness.hpp"
#include "hiltta/kmargin.hpp"
#include "hiltta/linalg.hpp"

namespace hiltta::test
{
/// Parameters with N(0, scale^2) entries; gamma centred on 1.
inline ModelParams random_params(int d, int h, int c, Rng& rng, double scale = 0.5)
{
    ModelParams p = ModelParams::zeros(d, h, c);
    for (auto& b : p.blocks())
        for (double& v : b.values) v = scale * rng.normal();
    for (double& g : p.gamma) g += 1.0;
    return p;
}

inline Matrix random_inputs(std::size_t n, int d, Rng& rng)
{
    Matrix m(n, static_cast<std::size_t>(d));
    for (double& v : m.data) v = 1.5 * rng.normal();
    return m;
}

/// Largest |analytic - numeric| / max(1, |analytic|, |numeric|) over all
/// parameters, with central differences of step `h`.
inline double max_relative_fd_error(const ModelParams& params, const ModelParams& analytic,
                                    const std::function<double(const ModelParams&)>& loss, double h = 1e-5)
{
    double worst = 0.0;
    ModelParams probe = params;
    auto probe_blocks = probe.blocks();
    const auto grad_blocks = analytic.blocks();
    for (std::size_t b = 0; b < probe_blocks.size(); ++b)
    {
        auto values = probe_blocks[b].values;
        for (std::size_t i = 0; i < values.size(); ++i)
        {
            const double keep = values[i];
            values[i] = keep + h;
            const double up = loss(probe);
            values[i] = keep - h;
            const double down = loss(probe);
            values[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double a = grad_blocks[b].values[i];
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

/// Exact K-center optimum by enumerating every K-subset. Test-only.
inline double kcenter_bruteforce_radius(std::span<const WeightedEmbedding> points, std::size_t k)
{
    const std::size_t n = points.size();
    if (n > 16 || k > 5) throw std::invalid_argument("kcenter oracle: needs n <= 16 and K <= 5");
    if (k == 0 || k > n) throw std::invalid_argument("kcenter oracle: needs 1 <= K <= n");
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> pick(k);
    for (std::size_t i = 0; i < k; ++i) pick[i] = i;
    while (true)
    {
        std::vector<SampleId> ids;
        for (std::size_t i : pick) ids.push_back(points[i].sample_id);
        best = std::min(best, covering_radius(points, ids));
        // next combination in lexicographic order
        std::size_t i = k;
        while (i > 0 && pick[i - 1] == n - k + i - 1) --i;
        if (i == 0) break;
        ++pick[i - 1];
        for (std::size_t j = i; j < k; ++j) pick[j] = pick[j - 1] + 1;
    }
    return best;
}

inline std::vector<WeightedEmbedding> points_1d(std::initializer_list<double> xs)
{
    std::vector<WeightedEmbedding> out;
    SampleId id = 0;
    for (double x : xs) out.push_back({id++, {x}, 1.0});
    return out;
}

/// Small, fast configuration for engine-level tests.
inline RunConfig tiny_config(std::uint64_t seed = 0)
{
    RunConfig c;
    c.stream.seed = seed;
    c.stream.num_classes = 3;
    c.stream.input_dim = 6;
    c.stream.num_domains = 3;
    c.stream.batches_per_domain = 4;
    c.stream.batch_size = 50;
    c.source_per_class = 150;
    c.pretrain.hidden_dim = 8;
    c.engine.label_rate = 0.06;  // K = 3
    c.engine.seed = seed;
    return c;
}

}  // namespace hiltta::test
