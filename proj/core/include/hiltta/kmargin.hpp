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

#include <span>
#include <string_view>
#include <vector>

#include "hiltta/domain.hpp"

namespace hiltta
{
/// Penultimate feature scaled by the margin uncertainty 1 - p1 + p2 of the
/// sorted posterior.
struct WeightedEmbedding
{
    SampleId sample_id = 0;
    FeatureVector g;
    double weight = 0.0;
};

WeightedEmbedding margin_weighted_embedding(std::span<const double> posterior, std::span<const double> feature,
                                            SampleId sample_id = 0);

/// Farthest-first traversal (Gonzalez). Seeds with the largest ||g||, then
/// repeatedly takes the point farthest from its nearest chosen center. Ties go
/// to the smallest sample id. Returns K ids in selection order.
std::vector<SampleId> kcenter_greedy(std::span<const WeightedEmbedding> embeddings, std::size_t k);

/// max over points of the distance to the nearest center in `centers`.
double covering_radius(std::span<const WeightedEmbedding> embeddings, std::span<const SampleId> centers);

enum class SelectionStrategy
{
    KMargin,
    Random,
    Entropy,     ///< top-K posterior entropy
    MarginOnly,  ///< top-K margin uncertainty, no diversity term
};

SelectionStrategy parse_selection_strategy(std::string_view name);
std::string_view to_string(SelectionStrategy s);

/// Pick K samples of the current batch for annotation.
std::vector<SampleId> select_for_annotation(SelectionStrategy strategy, std::span<const SampleId> ids,
                                            std::span<const ProbVector> posteriors,
                                            std::span<const FeatureVector> features, std::size_t k, Rng& rng);

}  // namespace hiltta
