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

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hiltta/classifier.hpp"

namespace hiltta
{
enum class Method
{
    Tent,  ///< entropy minimization on the normalization parameters
    PL,    ///< thresholded hard pseudo-labels on all parameters
};

Method parse_method(std::string_view name);
std::string_view to_string(Method m);

/// One point of the hyper-parameter search space. A single-parameter pool sets
/// one field; a dual pool sets both.
struct HyperParam
{
    std::optional<double> learning_rate;
    std::optional<double> entropy_threshold;

    void validate() const;
    /// e.g. "lr=0.001", "tau=0.4", "lr=0.01;tau=0.2"
    [[nodiscard]] std::string label() const;

    bool operator==(const HyperParam&) const = default;
};

struct CandidatePool
{
    Method method = Method::Tent;
    std::vector<HyperParam> entries;

    /// Non-empty, distinct, and every entry carries what `method` needs.
    void validate() const;
    [[nodiscard]] std::size_t size() const { return entries.size(); }
};

/// Seven learning rates for TENT, seven entropy thresholds for PL.
CandidatePool default_pool(Method method);

/// PL over learning rate x threshold: {1e-5,...,1e-1} x {0.1,0.2,0.4,0.6,0.8}.
CandidatePool dual_pool(Method method);

/// Index in default_pool(method) of the stock setting used without selection:
/// lr 1e-3 for TENT, tau 0.4 for PL.
std::size_t default_index(Method method);

enum class Optimizer
{
    Sgd,
    Adam,
};

Optimizer parse_optimizer(std::string_view name);
std::string_view to_string(Optimizer o);

struct AdaptOptions
{
    int steps = 1;
    /// PL step size when the hyper-parameter carries only a threshold.
    double pl_learning_rate = 1e-3;
    Optimizer tent_optimizer = Optimizer::Adam;
    Optimizer pl_optimizer = Optimizer::Sgd;
};

/// Model plus the optimizer moments that travel with it between batches.
struct AdaptedModel
{
    ModelParams params;
    AdamState optimizer;
};

/// Unsupervised adaptation of a copy of `prev` on the unlabeled rows.
AdaptedModel adapt_candidate(const AdaptedModel& prev, const Matrix& unlabeled, const HyperParam& hp, Method method,
                             const AdaptOptions& options, const NormStats* running = nullptr);

/// Stateless form for callers that do not track optimizer moments (a fresh
/// Adam state is used when the method's optimizer is Adam).
ModelParams adapt_candidate(const ModelParams& prev, const Matrix& unlabeled, const HyperParam& hp, Method method,
                            const AdaptOptions& options, const NormStats* running = nullptr);

}  // namespace hiltta
