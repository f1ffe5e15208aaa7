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

#include "hiltta/kmargin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace hiltta
{
namespace
{
double squared_distance(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double margin_weight(std::span<const double> posterior)
{
    if (posterior.size() < 2) throw DimensionError("margin weight needs at least two classes");
    double p1 = -1.0, p2 = -1.0;
    for (double p : posterior)
    {
        if (p > p1)
        {
            p2 = p1;
            p1 = p;
        }
        else if (p > p2)
            p2 = p;
    }
    return 1.0 - p1 + p2;
}

// Indices of the k largest scores, ties to the smallest id.
std::vector<SampleId> top_k(std::span<const SampleId> ids, const std::vector<double>& score, std::size_t k)
{
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (score[a] != score[b]) return score[a] > score[b];
        return ids[a] < ids[b];
    });
    std::vector<SampleId> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(ids[order[i]]);
    return out;
}

}  // namespace

WeightedEmbedding margin_weighted_embedding(std::span<const double> posterior, std::span<const double> feature,
                                            SampleId sample_id)
{
    WeightedEmbedding e;
    e.sample_id = sample_id;
    e.weight = margin_weight(posterior);
    e.g.resize(feature.size());
    for (std::size_t i = 0; i < feature.size(); ++i) e.g[i] = e.weight * feature[i];
    return e;
}

std::vector<SampleId> kcenter_greedy(std::span<const WeightedEmbedding> embeddings, std::size_t k)
{
    const std::size_t n = embeddings.size();
    if (k > n)
        throw std::invalid_argument("kcenter_greedy: K=" + std::to_string(k) + " exceeds batch size " + std::to_string(n));
    std::vector<SampleId> selected;
    if (k == 0) return selected;
    selected.reserve(k);

    auto better = [&](std::size_t cand, double cand_score, std::ptrdiff_t best, double best_score) {
        if (best < 0) return true;
        if (cand_score != best_score) return cand_score > best_score;
        return embeddings[cand].sample_id < embeddings[static_cast<std::size_t>(best)].sample_id;
    };

    std::vector<bool> taken(n, false);
    std::ptrdiff_t first = -1;
    double first_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        const double norm = std::inner_product(embeddings[i].g.begin(), embeddings[i].g.end(), embeddings[i].g.begin(), 0.0);
        if (better(i, norm, first, first_norm))
        {
            first = static_cast<std::ptrdiff_t>(i);
            first_norm = norm;
        }
    }

    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    auto take = [&](std::size_t c) {
        taken[c] = true;
        selected.push_back(embeddings[c].sample_id);
        for (std::size_t i = 0; i < n; ++i)
            nearest[i] = std::min(nearest[i], squared_distance(embeddings[i].g, embeddings[c].g));
    };
    take(static_cast<std::size_t>(first));

    while (selected.size() < k)
    {
        std::ptrdiff_t best = -1;
        double best_dist = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (!taken[i] && better(i, nearest[i], best, best_dist))
            {
                best = static_cast<std::ptrdiff_t>(i);
                best_dist = nearest[i];
            }
        take(static_cast<std::size_t>(best));
    }
    return selected;
}

double covering_radius(std::span<const WeightedEmbedding> embeddings, std::span<const SampleId> centers)
{
    if (centers.empty()) throw std::invalid_argument("covering_radius: no centers");
    std::unordered_map<SampleId, std::size_t> index;
    for (std::size_t i = 0; i < embeddings.size(); ++i) index.emplace(embeddings[i].sample_id, i);
    double radius = 0.0;
    for (const auto& e : embeddings)
    {
        double best = std::numeric_limits<double>::infinity();
        for (SampleId c : centers)
        {
            const auto it = index.find(c);
            if (it == index.end()) throw std::invalid_argument("covering_radius: unknown center id");
            best = std::min(best, squared_distance(e.g, embeddings[it->second].g));
        }
        radius = std::max(radius, best);
    }
    return std::sqrt(radius);
}

SelectionStrategy parse_selection_strategy(std::string_view name)
{
    if (name == "kmargin") return SelectionStrategy::KMargin;
    if (name == "random") return SelectionStrategy::Random;
    if (name == "entropy") return SelectionStrategy::Entropy;
    if (name == "margin_only") return SelectionStrategy::MarginOnly;
    throw std::invalid_argument("unknown selection strategy '" + std::string(name) +
                                "' (expected kmargin, random, entropy or margin_only)");
}

std::string_view to_string(SelectionStrategy s)
{
    switch (s)
    {
        case SelectionStrategy::KMargin: return "kmargin";
        case SelectionStrategy::Random: return "random";
        case SelectionStrategy::Entropy: return "entropy";
        case SelectionStrategy::MarginOnly: return "margin_only";
    }
    return "?";
}

std::vector<SampleId> select_for_annotation(SelectionStrategy strategy, std::span<const SampleId> ids,
                                            std::span<const ProbVector> posteriors,
                                            std::span<const FeatureVector> features, std::size_t k, Rng& rng)
{
    const std::size_t n = ids.size();
    if (posteriors.size() != n || features.size() != n) throw DimensionError("select_for_annotation: size mismatch");
    if (k > n) throw std::invalid_argument("select_for_annotation: K exceeds batch size");
    if (k == 0) return {};

    switch (strategy)
    {
        case SelectionStrategy::KMargin:
        {
            std::vector<WeightedEmbedding> emb;
            emb.reserve(n);
            for (std::size_t i = 0; i < n; ++i) emb.push_back(margin_weighted_embedding(posteriors[i], features[i], ids[i]));
            return kcenter_greedy(emb, k);
        }
        case SelectionStrategy::Random:
        {
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), 0);
            // partial Fisher-Yates
            std::vector<SampleId> out;
            for (std::size_t i = 0; i < k; ++i)
            {
                const auto j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
                std::swap(order[i], order[j]);
                out.push_back(ids[order[i]]);
            }
            return out;
        }
        case SelectionStrategy::Entropy:
        {
            std::vector<double> score(n);
            for (std::size_t i = 0; i < n; ++i) score[i] = entropy(posteriors[i]);
            return top_k(ids, score, k);
        }
        case SelectionStrategy::MarginOnly:
        {
            std::vector<double> score(n);
            for (std::size_t i = 0; i < n; ++i) score[i] = margin_weight(posteriors[i]);
            return top_k(ids, score, k);
        }
    }
    throw std::logic_error("select_for_annotation: unhandled strategy");
}

}  // namespace hiltta
