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

#include <array>
#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hiltta/engine.hpp"
#include "hiltta/linalg.hpp"

namespace hiltta
{
enum class FallbackPolicy
{
    Oracle,          ///< fill missing labels with the ground truth
    SkipSupervised,  ///< leave them missing; the engine skips fine-tuning
};

FallbackPolicy parse_fallback(std::string_view name);

/// One pending query as shown to the annotator.
struct AnnotationRequest
{
    SampleId sample_id = 0;
    int batch_index = 0;
    std::array<double, 2> point{};
    std::vector<std::array<double, 2>> background;  ///< whole batch, same projection
    std::vector<std::pair<int, double>> top;        ///< up to three (class, probability), descending
};

struct SessionInfo
{
    std::string session_id;
    int num_classes = 0;
    std::vector<std::string> class_names;
    int batch_index = 0;
    double timeout_s = 0.0;
};

struct Progress
{
    std::size_t labeled = 0;
    std::size_t pending = 0;
    int batch_index = 0;
    double overall_error_so_far = 0.0;
};

enum class SubmitResult
{
    Accepted,
    Duplicate,
    UnknownSample,
    LabelOutOfRange,
};

/// Meeting point between the engine thread (which blocks in request_labels)
/// and the HTTP handlers (which call submit). All members are thread-safe.
class AnnotationSession
{
public:
    struct Options
    {
        std::string session_id;
        std::vector<std::string> class_names;
        Matrix projection;  ///< 2 x D
        double timeout_s = 60.0;
        FallbackPolicy fallback = FallbackPolicy::Oracle;
    };

    explicit AnnotationSession(Options options);

    /// Fixed random orthonormal 2 x D display projection.
    static Matrix make_projection(int input_dim, std::uint64_t seed);

    /// Publish the request, block until every label arrives, the timeout
    /// fires, or close() is called, then apply the fallback policy.
    LabelResponse request_labels(const LabelRequest& request, const GroundTruth* fallback_truth);
    void publish_progress(int batch_index, double overall_error_so_far);
    /// Wake any waiter and refuse further requests.
    void close();

    [[nodiscard]] SessionInfo info() const;
    [[nodiscard]] std::vector<AnnotationRequest> pending() const;
    [[nodiscard]] Progress progress() const;
    SubmitResult submit(SampleId sample_id, int label);

    /// Test hook: block until `count` requests are pending or the timeout elapses.
    bool wait_for_pending(std::size_t count, std::chrono::milliseconds timeout) const;

private:
    Options options_;
    mutable std::mutex mutex_;
    mutable std::condition_variable changed_;
    std::vector<AnnotationRequest> pending_;
    std::map<SampleId, int> received_;  ///< current batch
    std::map<SampleId, int> accepted_;  ///< whole session
    int batch_index_ = 0;
    double error_so_far_ = 0.0;
    bool closed_ = false;
};

/// Labeler backed by a human working through an AnnotationSession.
class HumanLabeler : public Labeler
{
public:
    HumanLabeler(AnnotationSession& session, const GroundTruth* fallback_truth)
        : session_(&session), truth_(fallback_truth)
    {
    }

    LabelResponse label(const LabelRequest& request) override { return session_->request_labels(request, truth_); }
    void on_step(const StepReport& report, double overall_error_so_far) override
    {
        session_->publish_progress(report.batch_index, overall_error_so_far);
    }

private:
    AnnotationSession* session_;
    const GroundTruth* truth_;
};

}  // namespace hiltta
