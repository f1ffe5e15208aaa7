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

#include "hiltta/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hiltta
{
FallbackPolicy parse_fallback(std::string_view name)
{
    if (name == "oracle") return FallbackPolicy::Oracle;
    if (name == "skip_supervised") return FallbackPolicy::SkipSupervised;
    throw std::invalid_argument("unknown fallback policy '" + std::string(name) + "'");
}

AnnotationSession::AnnotationSession(Options options) : options_(std::move(options))
{
    if (options_.class_names.size() < 2) throw std::invalid_argument("annotation session needs at least two classes");
    if (options_.projection.rows != 2) throw DimensionError("annotation session projection must have two rows");
}

Matrix AnnotationSession::make_projection(int input_dim, std::uint64_t seed)
{
    if (input_dim < 2) throw DimensionError("projection needs input_dim >= 2");
    const auto d = static_cast<std::size_t>(input_dim);
    Rng rng = Rng(seed).fork(0x70726F6AULL);
    Matrix p(2, d);
    for (double& v : p.data) v = rng.normal();
    // Gram-Schmidt on the two rows
    for (std::size_t r = 0; r < 2; ++r)
    {
        if (r == 1)
        {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += p(0, j) * p(1, j);
            for (std::size_t j = 0; j < d; ++j) p(1, j) -= dot * p(0, j);
        }
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) norm += p(r, j) * p(r, j);
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < d; ++j) p(r, j) /= norm;
    }
    return p;
}

LabelResponse AnnotationSession::request_labels(const LabelRequest& request, const GroundTruth* fallback_truth)
{
    auto project = [&](const FeatureVector& x) {
        const auto y = matvec(options_.projection, x);
        return std::array<double, 2>{y[0], y[1]};
    };

    std::vector<std::array<double, 2>> background;
    background.reserve(request.batch.size());
    std::map<SampleId, const Sample*> by_id;
    for (const auto& s : request.batch)
    {
        background.push_back(project(s.x));
        by_id.emplace(s.id, &s);
    }

    std::vector<AnnotationRequest> queued;
    for (std::size_t j = 0; j < request.selected.size(); ++j)
    {
        const SampleId id = request.selected[j];
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw std::invalid_argument("annotation: selected sample is not in the batch");
        AnnotationRequest a;
        a.sample_id = id;
        a.batch_index = request.batch_index;
        a.point = project(it->second->x);
        a.background = background;
        if (j < request.posteriors.size())
        {
            const auto& p = request.posteriors[j];
            std::vector<int> order(p.size());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](int l, int r) {
                return p[static_cast<std::size_t>(l)] > p[static_cast<std::size_t>(r)];
            });
            for (std::size_t c = 0; c < std::min<std::size_t>(3, order.size()); ++c)
                a.top.emplace_back(order[c], p[static_cast<std::size_t>(order[c])]);
        }
        queued.push_back(std::move(a));
    }

    std::unique_lock lock(mutex_);
    if (closed_) throw std::runtime_error("annotation session is closed");
    pending_ = std::move(queued);
    received_.clear();
    batch_index_ = request.batch_index;
    changed_.notify_all();

    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                               std::chrono::duration<double>(options_.timeout_s));
    changed_.wait_until(lock, deadline, [&] { return closed_ || received_.size() == request.selected.size(); });

    LabelResponse response;
    for (SampleId id : request.selected)
    {
        const auto it = received_.find(id);
        if (it != received_.end())
        {
            response.labels.emplace_back(it->second);
            continue;
        }
        response.fallback = true;
        if (options_.fallback == FallbackPolicy::Oracle)
        {
            const auto t = fallback_truth ? fallback_truth->find(id) : GroundTruth::const_iterator{};
            if (!fallback_truth || t == fallback_truth->end())
                throw std::runtime_error("annotation timeout: oracle fallback has no ground truth for sample " +
                                         std::to_string(id));
            response.labels.emplace_back(t->second);
        }
        else
            response.labels.emplace_back(std::nullopt);
    }
    pending_.clear();
    changed_.notify_all();
    return response;
}

void AnnotationSession::publish_progress(int batch_index, double overall_error_so_far)
{
    std::lock_guard lock(mutex_);
    batch_index_ = batch_index;
    error_so_far_ = overall_error_so_far;
    changed_.notify_all();
}

void AnnotationSession::close()
{
    std::lock_guard lock(mutex_);
    closed_ = true;
    changed_.notify_all();
}

SessionInfo AnnotationSession::info() const
{
    std::lock_guard lock(mutex_);
    return {options_.session_id, static_cast<int>(options_.class_names.size()), options_.class_names, batch_index_,
            options_.timeout_s};
}

std::vector<AnnotationRequest> AnnotationSession::pending() const
{
    std::lock_guard lock(mutex_);
    std::vector<AnnotationRequest> out;
    for (const auto& r : pending_)
        if (!received_.contains(r.sample_id)) out.push_back(r);
    return out;
}

Progress AnnotationSession::progress() const
{
    std::lock_guard lock(mutex_);
    Progress p;
    p.labeled = received_.size();
    p.pending = pending_.size() - std::min(pending_.size(), received_.size());
    p.batch_index = batch_index_;
    p.overall_error_so_far = error_so_far_;
    return p;
}

SubmitResult AnnotationSession::submit(SampleId sample_id, int label)
{
    std::lock_guard lock(mutex_);
    if (accepted_.contains(sample_id)) return SubmitResult::Duplicate;
    const bool is_pending = std::any_of(pending_.begin(), pending_.end(),
                                        [&](const AnnotationRequest& r) { return r.sample_id == sample_id; });
    if (!is_pending) return SubmitResult::UnknownSample;
    if (label < 0 || label >= static_cast<int>(options_.class_names.size())) return SubmitResult::LabelOutOfRange;
    accepted_.emplace(sample_id, label);
    received_.emplace(sample_id, label);
    changed_.notify_all();
    return SubmitResult::Accepted;
}

bool AnnotationSession::wait_for_pending(std::size_t count, std::chrono::milliseconds timeout) const
{
    std::unique_lock lock(mutex_);
    return changed_.wait_for(lock, timeout, [&] { return closed_ || pending_.size() >= count; }) && !closed_;
}

}  // namespace hiltta
