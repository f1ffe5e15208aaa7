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
#include <utility>
#include <vector>

#include "hiltta/classifier.hpp"

namespace hiltta
{
/// Mean negative log-likelihood of `labels` under `posteriors`. Lower is better.
double ce_validation(std::span<const ProbVector> posteriors, std::span<const int> labels);
/// Same, evaluating the model on the labeled examples as one batch.
double ce_validation(const ModelParams& params, std::span<const LabeledExample> labeled,
                     const NormStats* running = nullptr);

/// Mean Euclidean distance between the frozen source posteriors and the
/// candidate posteriors on the same labeled samples. Bounded by sqrt(2).
double anchor_deviation(std::span<const ProbVector> anchor, std::span<const ProbVector> candidate);
double anchor_deviation(const ModelParams& anchor, const ModelParams& candidate, std::span<const LabeledExample> labeled,
                        const NormStats* running = nullptr);

/// (x - min) / (max - min). All-equal input maps to all zeros. Non-finite
/// entries are ignored for min/max and come back as +inf.
std::vector<double> minmax_normalize(std::span<const double> values);

struct ValidationScores
{
    std::vector<double> ce_raw;
    std::vector<double> anchor_raw;
    std::vector<double> s_ce;
    std::vector<double> s_anc;
    std::vector<double> combined;  ///< s_ce + s_anc, +inf for disqualified candidates
};

/// Normalize each list independently and add. With `use_anchor` false the
/// anchor term is dropped (s_anc is reported as zeros).
ValidationScores combined_score(std::span<const double> ce_raw, std::span<const double> anchor_raw,
                                bool use_anchor = true);

/// Per-candidate smoothed validation loss.
struct EmaState
{
    std::vector<double> smoothed;  ///< NaN until the candidate has a finite score
    double beta = 0.5;
    bool initialized = false;

    static EmaState create(std::size_t num_candidates, double beta);
};

/// smoothed = beta * smoothed + (1 - beta) * current. A candidate's first
/// finite score initializes it directly. Non-finite scores leave its history
/// alone and exclude it from this round. Returns -1 if every candidate is
/// excluded; otherwise the argmin, ties to the smallest index.
std::pair<EmaState, int> ema_update_and_select(const EmaState& state, std::span<const double> combined);

}  // namespace hiltta
