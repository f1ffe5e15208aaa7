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

#include "hiltta/model_select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hiltta
{
namespace
{
constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<ProbVector> posteriors_of(const ModelParams& params, std::span<const LabeledExample> labeled,
                                      const NormStats* running)
{
    std::vector<FeatureVector> xs;
    xs.reserve(labeled.size());
    for (const auto& ex : labeled) xs.push_back(ex.x);
    return forward_batch(params, xs, running).posteriors;
}

}  // namespace

double ce_validation(std::span<const ProbVector> posteriors, std::span<const int> labels)
{
    if (posteriors.empty()) throw std::invalid_argument("ce_validation: empty labeled set");
    if (posteriors.size() != labels.size()) throw DimensionError("ce_validation: one label per posterior required");
    double sum = 0.0;
    for (std::size_t i = 0; i < posteriors.size(); ++i)
    {
        const auto y = static_cast<std::size_t>(labels[i]);
        if (labels[i] < 0 || y >= posteriors[i].size()) throw std::invalid_argument("ce_validation: label out of range");
        sum -= std::log(std::max(posteriors[i][y], kProbFloor));
    }
    return sum / static_cast<double>(posteriors.size());
}

double ce_validation(const ModelParams& params, std::span<const LabeledExample> labeled, const NormStats* running)
{
    std::vector<int> labels;
    for (const auto& ex : labeled) labels.push_back(ex.y);
    return ce_validation(posteriors_of(params, labeled, running), labels);
}

double anchor_deviation(std::span<const ProbVector> anchor, std::span<const ProbVector> candidate)
{
    if (anchor.empty()) throw std::invalid_argument("anchor_deviation: empty labeled set");
    if (anchor.size() != candidate.size()) throw DimensionError("anchor_deviation: posterior counts differ");
    double sum = 0.0;
    for (std::size_t i = 0; i < anchor.size(); ++i)
    {
        if (anchor[i].size() != candidate[i].size()) throw DimensionError("anchor_deviation: class counts differ");
        double sq = 0.0;
        for (std::size_t c = 0; c < anchor[i].size(); ++c)
        {
            const double d = anchor[i][c] - candidate[i][c];
            sq += d * d;
        }
        sum += std::sqrt(sq);
    }
    return sum / static_cast<double>(anchor.size());
}

double anchor_deviation(const ModelParams& anchor, const ModelParams& candidate, std::span<const LabeledExample> labeled,
                        const NormStats* running)
{
    return anchor_deviation(posteriors_of(anchor, labeled, running), posteriors_of(candidate, labeled, running));
}

std::vector<double> minmax_normalize(std::span<const double> values)
{
    double lo = kInf, hi = -kInf;
    for (double v : values)
        if (std::isfinite(v))
        {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
    {
        if (!std::isfinite(values[i]))
            out[i] = kInf;
        else if (hi > lo)
            out[i] = (values[i] - lo) / (hi - lo);
        else
            out[i] = 0.0;
    }
    return out;
}

ValidationScores combined_score(std::span<const double> ce_raw, std::span<const double> anchor_raw, bool use_anchor)
{
    if (ce_raw.size() != anchor_raw.size()) throw DimensionError("combined_score: list lengths differ");
    ValidationScores s;
    s.ce_raw.assign(ce_raw.begin(), ce_raw.end());
    s.anchor_raw.assign(anchor_raw.begin(), anchor_raw.end());
    // A candidate is disqualified when either raw metric is non-finite.
    std::vector<double> ce(ce_raw.begin(), ce_raw.end());
    std::vector<double> anc(anchor_raw.begin(), anchor_raw.end());
    for (std::size_t i = 0; i < ce.size(); ++i)
        if (!std::isfinite(ce[i]) || !std::isfinite(anc[i])) ce[i] = anc[i] = kInf;
    s.s_ce = minmax_normalize(ce);
    s.s_anc = use_anchor ? minmax_normalize(anc) : std::vector<double>(anc.size(), 0.0);
    s.combined.resize(ce.size());
    for (std::size_t i = 0; i < ce.size(); ++i)
        s.combined[i] = std::isfinite(ce[i]) ? s.s_ce[i] + s.s_anc[i] : kInf;
    return s;
}

EmaState EmaState::create(std::size_t num_candidates, double beta)
{
    if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("EMA momentum must be in [0, 1)");
    EmaState s;
    s.smoothed.assign(num_candidates, std::numeric_limits<double>::quiet_NaN());
    s.beta = beta;
    return s;
}

std::pair<EmaState, int> ema_update_and_select(const EmaState& state, std::span<const double> combined)
{
    if (combined.size() != state.smoothed.size())
        throw DimensionError("ema_update_and_select: expected " + std::to_string(state.smoothed.size()) + " scores");
    EmaState next = state;
    next.initialized = true;
    int winner = -1;
    for (std::size_t m = 0; m < combined.size(); ++m)
    {
        if (!std::isfinite(combined[m])) continue;
        double& s = next.smoothed[m];
        if (std::isnan(s) || s == combined[m])
            s = combined[m];
        else
            s = state.beta * s + (1.0 - state.beta) * combined[m];
        if (winner < 0 || s < next.smoothed[static_cast<std::size_t>(winner)]) winner = static_cast<int>(m);
    }
    return {std::move(next), winner};
}

}  // namespace hiltta
