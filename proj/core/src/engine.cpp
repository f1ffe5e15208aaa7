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

#include "hiltta/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <unordered_set>

namespace hiltta
{
namespace
{
using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kSelectionTag = 0x53454C454354ULL;

double elapsed_ms(Clock::time_point since)
{
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

// Runs fn(i) for i in [0, n); results are written by index so order is fixed.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn)
{
    const auto workers = static_cast<std::size_t>(std::clamp(threads, 1, 64));
    if (workers <= 1 || n <= 1)
    {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try
            {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            }
            catch (...)
            {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

bool all_finite(const ModelParams& p)
{
    for (const auto& b : p.blocks())
        for (double v : b.values)
            if (!std::isfinite(v)) return false;
    return true;
}

std::vector<ProbVector> rows_of(const Matrix& probs, std::span<const std::size_t> rows)
{
    std::vector<ProbVector> out;
    out.reserve(rows.size());
    for (std::size_t r : rows)
    {
        auto p = probs.row(r);
        out.emplace_back(p.begin(), p.end());
    }
    return out;
}

}  // namespace

CandidateLineage parse_lineage(std::string_view name)
{
    if (name == "fork") return CandidateLineage::Fork;
    if (name == "persistent") return CandidateLineage::Persistent;
    throw std::invalid_argument("unknown candidate lineage '" + std::string(name) + "' (expected fork or persistent)");
}

std::string_view to_string(CandidateLineage l) { return l == CandidateLineage::Fork ? "fork" : "persistent"; }

void EngineConfig::validate() const
{
    pool.validate();
    if (pool.method != method) throw std::invalid_argument("pool method does not match engine method");
    if (!(label_rate >= 0.0 && label_rate <= 1.0)) throw std::invalid_argument("label_rate must be in [0, 1]");
    if (intervention_frequency < 1) throw std::invalid_argument("intervention_frequency must be >= 1");
    if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("beta must be in [0, 1)");
    if (adapt_steps < 0) throw std::invalid_argument("adapt_steps must be >= 0");
    if (supervised_steps < 0) throw std::invalid_argument("supervised_steps must be >= 0");
    if (!(pl_learning_rate > 0.0)) throw std::invalid_argument("pl_learning_rate must be > 0");
    if (!(supervised_lr > 0.0)) throw std::invalid_argument("supervised_lr must be > 0");
    if (initial_candidate >= pool.size()) throw std::invalid_argument("initial_candidate is outside the pool");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

std::size_t EngineConfig::labels_per_batch(std::size_t batch_size) const
{
    const double k = std::ceil(label_rate * static_cast<double>(batch_size) - 1e-9);
    return std::min(batch_size, static_cast<std::size_t>(std::max(0.0, k)));
}

bool EngineConfig::is_intervention(int batch_counter) const { return batch_counter % intervention_frequency == 0; }

LabelResponse OracleLabeler::label(const LabelRequest& request)
{
    std::unordered_set<SampleId> in_batch;
    for (const auto& s : request.batch) in_batch.insert(s.id);
    LabelResponse out;
    for (SampleId id : request.selected)
    {
        if (!in_batch.contains(id))
            throw std::invalid_argument("oracle labeler: sample " + std::to_string(id) + " is not in the current batch");
        const auto it = truth_->find(id);
        if (it == truth_->end()) throw std::invalid_argument("oracle labeler: unknown sample " + std::to_string(id));
        out.labels.emplace_back(it->second);
    }
    return out;
}

bool StepReport::same_outcome(const StepReport& o) const
{
    auto same_doubles = [](const std::vector<double>& a, const std::vector<double>& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (!(a[i] == b[i] || (std::isnan(a[i]) && std::isnan(b[i])))) return false;
        return true;
    };
    return batch_index == o.batch_index && domain_index == o.domain_index && sample_ids == o.sample_ids &&
           predictions == o.predictions && num_correct == o.num_correct && intervention == o.intervention &&
           selected == o.selected && labels == o.labels && num_candidates == o.num_candidates &&
           chosen_index == o.chosen_index && chosen == o.chosen && same_doubles(scores.ce_raw, o.scores.ce_raw) &&
           same_doubles(scores.anchor_raw, o.scores.anchor_raw) && same_doubles(scores.s_ce, o.scores.s_ce) &&
           same_doubles(scores.s_anc, o.scores.s_anc) && same_doubles(scores.combined, o.scores.combined) &&
           same_doubles(ema, o.ema) && disqualified == o.disqualified && supervised == o.supervised;
}

EngineState EngineState::init(const PretrainedModel& source, const EngineConfig& config)
{
    config.validate();
    EngineState s;
    s.current = source.params;
    s.optimizer = AdamState::zeros_like(source.params);
    s.anchor = source;
    s.ema = EmaState::create(config.pool.size(), config.use_ema ? config.beta : 0.0);
    s.last_choice = config.initial_candidate;
    if (config.lineage == CandidateLineage::Persistent)
        s.trajectories.assign(config.pool.size(), AdaptedModel{s.current, s.optimizer});
    return s;
}

StepReport step_batch(EngineState& state, const EngineConfig& config, const Batch& batch, Labeler& labeler,
                      const GroundTruth* truth)
{
    if (batch.samples.empty()) throw std::invalid_argument("step_batch: empty batch");
    const auto start = Clock::now();
    const NormStats* running = &state.anchor.running;
    const std::size_t n = batch.size();

    std::vector<FeatureVector> xs;
    xs.reserve(n);
    for (const auto& s : batch.samples) xs.push_back(s.x);
    const Matrix inputs = stack_rows(xs);

    StepReport report;
    report.batch_index = batch.batch_index;
    report.domain_index = batch.samples.front().domain_index;

    // (1) instant predictions with the previous model
    const ForwardCache pred = forward(state.current, inputs, running);
    std::vector<ProbVector> posteriors;
    std::vector<FeatureVector> features;
    posteriors.reserve(n);
    features.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        const auto p = pred.probs.row(i);
        const auto f = pred.features.row(i);
        posteriors.emplace_back(p.begin(), p.end());
        features.emplace_back(f.begin(), f.end());
        report.sample_ids.push_back(batch.samples[i].id);
        report.predictions.push_back(argmax_class(p));
        state.predictions.push_back({batch.samples[i].id, report.predictions.back()});
    }
    if (truth != nullptr)
    {
        report.num_correct = 0;
        for (std::size_t i = 0; i < n; ++i)
        {
            const auto it = truth->find(batch.samples[i].id);
            if (it == truth->end()) throw std::invalid_argument("step_batch: no ground truth for sample");
            if (it->second == report.predictions[i]) ++report.num_correct;
        }
    }
    if (config.record_timing) report.infer_ms = elapsed_ms(start);
    const auto adapt_start = Clock::now();

    // (2) annotation
    const std::size_t k = config.labels_per_batch(n);
    report.intervention = config.is_intervention(state.batch_counter) && k > 0;
    std::vector<std::size_t> labeled_rows;
    std::vector<int> labeled_targets;
    std::vector<bool> is_selected(n, false);
    if (report.intervention)
    {
        Rng rng = Rng(config.seed).fork(kSelectionTag + static_cast<std::uint64_t>(state.batch_counter));
        report.selected = select_for_annotation(config.selection, report.sample_ids, posteriors, features, k, rng);

        std::unordered_map<SampleId, std::size_t> row_of;
        for (std::size_t i = 0; i < n; ++i) row_of.emplace(batch.samples[i].id, i);
        LabelRequest request{batch.batch_index, batch.samples, report.selected, {}};
        for (SampleId id : report.selected) request.posteriors.push_back(posteriors[row_of.at(id)]);

        LabelResponse response = labeler.label(request);
        if (response.labels.size() != report.selected.size())
            throw std::runtime_error("step_batch: labeler returned " + std::to_string(response.labels.size()) +
                                     " labels for " + std::to_string(report.selected.size()) + " requests");
        report.fallback = response.fallback;
        const int classes = state.current.num_classes();
        for (std::size_t j = 0; j < report.selected.size(); ++j)
        {
            const std::size_t row = row_of.at(report.selected[j]);
            is_selected[row] = true;
            const auto& y = response.labels[j];
            if (y && (*y < 0 || *y >= classes)) throw std::runtime_error("step_batch: labeler returned an out-of-range label");
            if (!y && !response.fallback)
                throw std::runtime_error("step_batch: labeler left a sample unlabeled without a fallback flag");
            if (y)
            {
                labeled_rows.push_back(row);
                labeled_targets.push_back(*y);
            }
        }
        report.labels = std::move(response.labels);
    }

    // (3) unsupervised adaptation on the unlabeled rest of the batch
    Matrix unlabeled(0, inputs.cols);
    for (std::size_t i = 0; i < n; ++i)
        if (!is_selected[i])
        {
            unlabeled.data.insert(unlabeled.data.end(), inputs.row(i).begin(), inputs.row(i).end());
            ++unlabeled.rows;
        }

    const bool select = report.intervention && !labeled_rows.empty();
    std::vector<std::size_t> members;
    if (select)
        for (std::size_t m = 0; m < config.pool.size(); ++m) members.push_back(m);
    else
        members.push_back(state.last_choice);

    const AdaptOptions adapt_opts{config.adapt_steps, config.pl_learning_rate, config.tent_optimizer,
                                  config.pl_optimizer};
    const bool persistent = config.lineage == CandidateLineage::Persistent;
    const AdaptedModel forked{state.current, state.optimizer};
    std::vector<AdaptedModel> candidates(members.size());
    std::vector<bool> failed(members.size(), false);
    parallel_for(members.size(), config.threads, [&](std::size_t i) {
        const AdaptedModel& base = persistent ? state.trajectories[members[i]] : forked;
        try
        {
            candidates[i] = unlabeled.rows == 0 ? base
                                                : adapt_candidate(base, unlabeled, config.pool.entries[members[i]],
                                                                  config.method, adapt_opts, running);
            failed[i] = !all_finite(candidates[i].params);
        }
        catch (const std::domain_error&)
        {
            failed[i] = true;
        }
    });
    report.num_candidates = members.size();

    // (4) scoring and selection
    std::ptrdiff_t winner_slot = 0;
    if (select)
    {
        const std::size_t nm = members.size();
        const ForwardCache anchor_pass = forward(state.anchor.params, inputs, running);
        const auto anchor_post = rows_of(anchor_pass.probs, labeled_rows);
        std::vector<double> ce(nm), anc(nm);
        parallel_for(nm, config.threads, [&](std::size_t m) {
            if (failed[m])
            {
                ce[m] = anc[m] = std::numeric_limits<double>::infinity();
                return;
            }
            const ForwardCache pass = forward(candidates[m].params, inputs, running);
            const auto post = rows_of(pass.probs, labeled_rows);
            bool finite = true;
            for (const auto& p : post)
                for (double v : p) finite = finite && std::isfinite(v);
            ce[m] = finite ? ce_validation(post, labeled_targets) : std::numeric_limits<double>::infinity();
            anc[m] = finite ? anchor_deviation(anchor_post, post) : std::numeric_limits<double>::infinity();
        });
        report.scores = combined_score(ce, anc, config.use_anchor);
        report.disqualified.resize(nm);
        for (std::size_t m = 0; m < nm; ++m) report.disqualified[m] = !std::isfinite(report.scores.combined[m]);

        auto [ema, winner] = ema_update_and_select(state.ema, report.scores.combined);
        state.ema = std::move(ema);
        report.ema = state.ema.smoothed;
        winner_slot = winner;
    }
    else if (failed.front())
        winner_slot = -1;

    AdaptedModel next;
    if (winner_slot < 0)
    {
        // every candidate diverged: keep the previous model
        next = forked;
        report.chosen_index = state.last_choice;
    }
    else
    {
        const auto slot = static_cast<std::size_t>(winner_slot);
        next = std::move(candidates[slot]);
        report.chosen_index = members[slot];
    }
    report.chosen = config.pool.entries[report.chosen_index].label();

    // (5) supervised refinement of the winner, only with the full set of K labels
    if (select && config.use_supervised && winner_slot >= 0 && config.supervised_steps > 0 &&
        labeled_rows.size() == report.selected.size())
    {
        std::vector<int> targets(n, -1);
        for (std::size_t j = 0; j < labeled_rows.size(); ++j) targets[labeled_rows[j]] = labeled_targets[j];
        for (int s = 0; s < config.supervised_steps; ++s)
            next.params = sgd_step(next.params, ce_loss_grad(next.params, inputs, targets, running).grad,
                                   config.supervised_lr);
        report.supervised = true;
    }

    if (winner_slot >= 0)
    {
        state.last_choice = report.chosen_index;
        if (persistent)
        {
            for (std::size_t m = 0; m < members.size(); ++m)
                if (m != static_cast<std::size_t>(winner_slot) && !failed[m])
                    state.trajectories[members[m]] = std::move(candidates[m]);
            state.trajectories[report.chosen_index] = next;
        }
        state.current = std::move(next.params);
        state.optimizer = std::move(next.optimizer);
    }
    ++state.batch_counter;
    if (config.record_timing) report.adapt_ms = elapsed_ms(adapt_start);
    return report;
}

RunResult run_stream(const EngineConfig& config, const PretrainedModel& source, std::span<const Batch> batches,
                     Labeler& labeler, const GroundTruth* truth)
{
    if (batches.empty()) throw std::invalid_argument("run_stream: empty stream");
    EngineState state = EngineState::init(source, config);
    RunResult result;
    result.anchor_checksum_before = checksum(state.anchor.params);
    for (const auto& batch : batches)
    {
        StepReport report = step_batch(state, config, batch, labeler, truth);
        auto& s = result.summary;
        if (report.num_correct >= 0)
        {
            const auto wrong = batch.size() - static_cast<std::size_t>(report.num_correct);
            auto& d = s.per_domain[report.domain_index];
            d.wrong += wrong;
            d.total += batch.size();
            s.overall.wrong += wrong;
            s.overall.total += batch.size();
        }
        s.labels_used += report.selected.size();
        s.intervention_batches += report.intervention ? 1 : 0;
        s.fallback_batches += report.fallback ? 1 : 0;
        s.infer_ms += report.infer_ms;
        s.adapt_ms += report.adapt_ms;
        labeler.on_step(report, s.overall.error_pct());
        result.reports.push_back(std::move(report));
    }
    result.anchor_checksum_after = checksum(state.anchor.params);
    return result;
}

}  // namespace hiltta
