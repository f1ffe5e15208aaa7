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

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hiltta/classifier.hpp"
#include "hiltta/engine.hpp"
#include "hiltta/stream.hpp"

namespace hiltta
{
/// Config validation failure; the message names the offending key.
class ConfigError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// Every knob of a benchmark run. Loaded from a flat `key = value` file with
/// `#` comments; keys not listed in config_keys() are rejected.
struct RunConfig
{
    StreamSpec stream;
    int source_per_class = 400;
    PretrainOptions pretrain;

    bool dual = false;
    /// Restrict the pool to this single entry (fixed hyper-parameter run).
    std::optional<std::size_t> fixed_index;
    /// Unset means the method's stock setting.
    std::optional<std::size_t> initial_candidate;
    EngineConfig engine;

    std::string labeler = "oracle";  ///< oracle | human
    double timeout_s = 60.0;
    std::string fallback = "oracle";  ///< oracle | skip_supervised
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string assets_dir;

    std::string out_dir = "out";
    std::string model_path;    ///< default <out_dir>/model.txt
    std::string source_path;   ///< default <out_dir>/source.csv
    std::string stream_path;   ///< default <out_dir>/stream.csv
    std::string results_path;  ///< default <out_dir>/results.csv
    std::string run_label = "HILTTA";
    /// sweep-fixed: give fixed runs the labels and the supervised step too.
    bool with_supervised = false;

    [[nodiscard]] std::filesystem::path model_file() const;
    [[nodiscard]] std::filesystem::path source_file() const;
    [[nodiscard]] std::filesystem::path stream_file() const;
    [[nodiscard]] std::filesystem::path results_file() const;
};

/// Documented keys with their defaults, in documentation order.
std::vector<std::pair<std::string, std::string>> config_keys();

void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
/// "key=value"
void apply_override(RunConfig& config, const std::string& assignment);
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

/// Resolves method, pool (default, dual, or a single fixed entry) and the
/// initial candidate into a validated engine configuration.
EngineConfig make_engine_config(const RunConfig& config);

std::vector<LabeledExample> make_source_dataset(const RunConfig& config);
/// Held-out source split from an independent stream.
std::vector<LabeledExample> make_source_test_set(const RunConfig& config);
LabeledStream make_stream(const RunConfig& config);
PretrainedModel make_pretrained(const RunConfig& config, const std::vector<LabeledExample>& source);

/// Source set, stream, and pretrained model for one seed.
struct Workspace
{
    std::vector<LabeledExample> source;
    LabeledStream stream;
    PretrainedModel model;
};

Workspace build_workspace(const RunConfig& config);

/// One CSV line: `run,domain,error_pct,labels_used,infer_ms_per_sample,adapt_ms_per_sample`.
/// domain is the domain index or "all" for the run summary.
struct ResultRow
{
    std::string run;
    std::string domain;
    double error_pct = 0.0;
    std::size_t labels_used = 0;
    double infer_ms_per_sample = 0.0;
    double adapt_ms_per_sample = 0.0;

    bool operator==(const ResultRow&) const = default;
};

inline constexpr const char* kResultsHeader = "run,domain,error_pct,labels_used,infer_ms_per_sample,adapt_ms_per_sample";

/// Per-domain rows followed by the "all" row.
std::vector<ResultRow> result_rows(const std::string& label, const RunResult& result);

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(std::istream& in);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

/// Run the engine once on a prepared workspace.
RunResult run_engine(const EngineConfig& engine, const Workspace& ws);

struct FixedSweepSummary
{
    double worst_pct = 0.0;
    std::string worst;
    double avg_pct = 0.0;
    double best_pct = 0.0;
    std::string best;
};

struct FixedSweepResult
{
    std::vector<ResultRow> rows;
    std::vector<double> overall_pct;  ///< one per pool entry
    FixedSweepSummary summary;
};

/// One run per pool entry with that entry held fixed: no labels unless
/// `with_supervised`. Worst/Avg/Best are max/mean/min of the overall errors.
FixedSweepResult sweep_fixed(const RunConfig& config, const Workspace& ws);

inline constexpr const char* kSweepSummaryHeader = "method,worst_pct,worst,avg_pct,best_pct,best";
void write_sweep_summary(std::ostream& out, const std::string& method, const FixedSweepSummary& s);

/// Concatenate result tables keyed by (run, domain), first appearance order;
/// later duplicates replace earlier ones. Throws on an empty input list.
std::vector<ResultRow> merge_results(const std::vector<std::vector<ResultRow>>& tables);

/// Series for plotting: runs labelled `<series>@<x>` contribute (x, overall
/// error) to `<series>`, sorted by x.
std::map<std::string, std::vector<std::pair<double, double>>> plot_series(const std::vector<ResultRow>& rows);

std::string format_fixed(double v, int decimals);

}  // namespace hiltta
