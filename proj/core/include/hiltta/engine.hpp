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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hiltta/classifier.hpp"
#include "hiltta/kmargin.hpp"
#include "hiltta/model_select.hpp"
#include "hiltta/tta.hpp"

namespace hiltta
{
enum class CandidateLineage
{
    Fork,        ///< every candidate starts from the previously selected model
    Persistent,  ///< each candidate keeps its own trajectory across batches
};

CandidateLineage parse_lineage(std::string_view name);
std::string_view to_string(CandidateLineage l);

struct EngineConfig
{
    Method method = Method::Tent;
    CandidatePool pool = default_pool(Method::Tent);
    double label_rate = 0.03;
    /// Human intervention on batches 1, N+1, 2N+1, ...
    int intervention_frequency = 1;
    double beta = 0.5;
    int adapt_steps = 1;
    double pl_learning_rate = 1e-3;
    Optimizer tent_optimizer = Optimizer::Adam;
    Optimizer pl_optimizer = Optimizer::Sgd;
    double supervised_lr = 0.05;
    int supervised_steps = 1;
    CandidateLineage lineage = CandidateLineage::Fork;
    bool use_anchor = true;
    bool use_ema = true;
    bool use_supervised = true;
    SelectionStrategy selection = SelectionStrategy::KMargin;
    /// Pool index used until the first model selection happens.
    std::size_t initial_candidate = 0;
    std::uint64_t seed = 0;
    /// Wall-clock timings in reports; off keeps reports reproducible.
    bool record_timing = false;
    /// Worker threads for candidate adaptation and scoring.
    int threads = 1;

    void validate() const;
    /// ceil(label_rate * batch_size), ignoring float noise below 1e-9.
    [[nodiscard]] std::size_t labels_per_batch(std::size_t batch_size) const;
    /// batch_counter is the 0-based position of the batch in the stream.
    [[nodiscard]] bool is_intervention(int batch_counter) const;
};

/// What a labeler is asked for on an intervention batch.
struct LabelRequest
{
    int batch_index = 0;
    std::span<const Sample> batch;
    std::vector<SampleId> selected;
    std::vector<ProbVector> posteriors;  ///< current model's posterior per selected sample
};

struct LabelResponse
{
    /// One entry per requested sample; empty when no label could be obtained.
    std::vector<std::optional<int>> labels;
    /// Set when a timeout policy supplied or dropped labels.
    bool fallback = false;
};

struct StepReport;

/// Source of annotations for the selected samples.
class Labeler
{
public:
    virtual ~Labeler() = default;
    virtual LabelResponse label(const LabelRequest& request) = 0;
    /// Called after each batch so interactive labelers can publish progress.
    virtual void on_step(const StepReport& /*report*/, double /*overall_error_so_far*/) {}
};

/// Answers with the ground truth, instantly.
class OracleLabeler : public Labeler
{
public:
    explicit OracleLabeler(const GroundTruth& truth) : truth_(&truth) {}
    LabelResponse label(const LabelRequest& request) override;

private:
    const GroundTruth* truth_;
};

struct StepReport
{
    int batch_index = 0;
    int domain_index = 0;
    std::vector<SampleId> sample_ids;
    std::vector<int> predictions;
    /// -1 when no ground truth was supplied for scoring.
    int num_correct = -1;
    bool intervention = false;
    std::vector<SampleId> selected;
    std::vector<std::optional<int>> labels;
    bool fallback = false;
    std::size_t num_candidates = 0;
    std::size_t chosen_index = 0;
    std::string chosen;
    ValidationScores scores;
    std::vector<double> ema;
    std::vector<bool> disqualified;
    bool supervised = false;
    double infer_ms = 0.0;
    double adapt_ms = 0.0;

    /// Equality of everything except wall-clock timings.
    [[nodiscard]] bool same_outcome(const StepReport& other) const;
};

struct PredictionRecord
{
    SampleId sample_id = 0;
    int predicted = 0;
};

struct EngineState
{
    ModelParams current;
    /// Optimizer moments of the unsupervised step, carried with `current`.
    AdamState optimizer;
    PretrainedModel anchor;
    EmaState ema;
    std::size_t last_choice = 0;
    int batch_counter = 0;
    /// Per-candidate models, used with CandidateLineage::Persistent only.
    std::vector<AdaptedModel> trajectories;
    std::vector<PredictionRecord> predictions;

    static EngineState init(const PretrainedModel& source, const EngineConfig& config);
};

/// One round of the loop: predict with the previous model, pick samples and
/// ask for labels, adapt every candidate on the rest of the batch, score and
/// select, then fine-tune the winner on the labels. Batches without
/// intervention adapt once with the last chosen hyper-parameter.
///
/// `truth` is used only to count correct predictions in the report.
StepReport step_batch(EngineState& state, const EngineConfig& config, const Batch& batch, Labeler& labeler,
                      const GroundTruth* truth = nullptr);

struct DomainError
{
    std::size_t wrong = 0;
    std::size_t total = 0;
    [[nodiscard]] double error_pct() const { return total ? 100.0 * static_cast<double>(wrong) / static_cast<double>(total) : 0.0; }
};

struct RunSummary
{
    std::map<int, DomainError> per_domain;
    DomainError overall;
    std::size_t labels_used = 0;
    std::size_t intervention_batches = 0;
    double infer_ms = 0.0;
    double adapt_ms = 0.0;
    std::size_t fallback_batches = 0;
};

struct RunResult
{
    std::vector<StepReport> reports;
    RunSummary summary;
    std::uint64_t anchor_checksum_before = 0;
    std::uint64_t anchor_checksum_after = 0;
};

RunResult run_stream(const EngineConfig& config, const PretrainedModel& source, std::span<const Batch> batches,
                     Labeler& labeler, const GroundTruth* truth = nullptr);

}  // namespace hiltta
