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

#include "hiltta/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

namespace hiltta
{
namespace
{
constexpr std::uint64_t kSourceTag = 1;
constexpr std::uint64_t kStreamTag = 2;
constexpr std::uint64_t kPretrainTag = 3;
constexpr std::uint64_t kSourceTestTag = 4;

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_num(const std::string& key, const std::string& v)
{
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": cannot parse '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

struct KeyEntry
{
    const char* key;
    const char* default_value;
    std::function<void(RunConfig&, const std::string& key, const std::string&)> set;
};

const std::vector<KeyEntry>& key_table()
{
    using C = RunConfig;
    using S = const std::string&;
    static const std::vector<KeyEntry> table = {
        {"seed", "0", [](C& c, S k, S v) { c.stream.seed = c.engine.seed = parse_num<std::uint64_t>(k, v); }},
        {"num_classes", "5", [](C& c, S k, S v) { c.stream.num_classes = parse_num<int>(k, v); }},
        {"input_dim", "16", [](C& c, S k, S v) { c.stream.input_dim = parse_num<int>(k, v); }},
        {"hidden_dim", "32", [](C& c, S k, S v) { c.pretrain.hidden_dim = parse_num<int>(k, v); }},
        {"class_separation", "6", [](C& c, S k, S v) { c.stream.class_separation = parse_num<double>(k, v); }},
        {"num_domains", "8", [](C& c, S k, S v) { c.stream.num_domains = parse_num<int>(k, v); }},
        {"batches_per_domain", "15", [](C& c, S k, S v) { c.stream.batches_per_domain = parse_num<int>(k, v); }},
        {"batch_size", "200", [](C& c, S k, S v) { c.stream.batch_size = parse_num<int>(k, v); }},
        {"corruption_strength", "1", [](C& c, S k, S v) { c.stream.corruption_strength = parse_num<double>(k, v); }},
        {"source_per_class", "400", [](C& c, S k, S v) { c.source_per_class = parse_num<int>(k, v); }},
        {"pretrain_lr", "0.5", [](C& c, S k, S v) { c.pretrain.learning_rate = parse_num<double>(k, v); }},
        {"pretrain_max_epochs", "2000", [](C& c, S k, S v) { c.pretrain.max_epochs = parse_num<int>(k, v); }},
        {"method", "tent", [](C& c, S k, S v) {
             try
             {
                 c.engine.method = parse_method(v);
             }
             catch (const std::invalid_argument& e)
             {
                 throw ConfigError(k + ": " + e.what());
             }
         }},
        {"dual", "false", [](C& c, S k, S v) { c.dual = parse_bool(k, v); }},
        {"fixed_index", "", [](C& c, S k, S v) {
             if (v.empty())
                 c.fixed_index.reset();
             else
                 c.fixed_index = parse_num<std::size_t>(k, v);
         }},
        {"initial_candidate", "", [](C& c, S k, S v) {
             if (v.empty())
                 c.initial_candidate.reset();
             else
                 c.initial_candidate = parse_num<std::size_t>(k, v);
         }},
        {"label_rate", "0.03", [](C& c, S k, S v) { c.engine.label_rate = parse_num<double>(k, v); }},
        {"intervention_frequency", "1", [](C& c, S k, S v) { c.engine.intervention_frequency = parse_num<int>(k, v); }},
        {"beta", "0.5", [](C& c, S k, S v) { c.engine.beta = parse_num<double>(k, v); }},
        {"adapt_steps", "1", [](C& c, S k, S v) { c.engine.adapt_steps = parse_num<int>(k, v); }},
        {"pl_lr", "0.001", [](C& c, S k, S v) { c.engine.pl_learning_rate = parse_num<double>(k, v); }},
        {"tent_optimizer", "adam", [](C& c, S k, S v) {
             try
             {
                 c.engine.tent_optimizer = parse_optimizer(v);
             }
             catch (const std::invalid_argument& e)
             {
                 throw ConfigError(k + ": " + e.what());
             }
         }},
        {"pl_optimizer", "sgd", [](C& c, S k, S v) {
             try
             {
                 c.engine.pl_optimizer = parse_optimizer(v);
             }
             catch (const std::invalid_argument& e)
             {
                 throw ConfigError(k + ": " + e.what());
             }
         }},
        {"supervised_lr", "0.05", [](C& c, S k, S v) { c.engine.supervised_lr = parse_num<double>(k, v); }},
        {"supervised_steps", "1", [](C& c, S k, S v) { c.engine.supervised_steps = parse_num<int>(k, v); }},
        {"candidate_lineage", "fork", [](C& c, S k, S v) {
             try
             {
                 c.engine.lineage = parse_lineage(v);
             }
             catch (const std::invalid_argument& e)
             {
                 throw ConfigError(k + ": " + e.what());
             }
         }},
        {"use_anchor", "true", [](C& c, S k, S v) { c.engine.use_anchor = parse_bool(k, v); }},
        {"use_ema", "true", [](C& c, S k, S v) { c.engine.use_ema = parse_bool(k, v); }},
        {"use_supervised", "true", [](C& c, S k, S v) { c.engine.use_supervised = parse_bool(k, v); }},
        {"selection_strategy", "kmargin", [](C& c, S k, S v) {
             try
             {
                 c.engine.selection = parse_selection_strategy(v);
             }
             catch (const std::invalid_argument& e)
             {
                 throw ConfigError(k + ": " + e.what());
             }
         }},
        {"record_timing", "false", [](C& c, S k, S v) { c.engine.record_timing = parse_bool(k, v); }},
        {"threads", "1", [](C& c, S k, S v) { c.engine.threads = parse_num<int>(k, v); }},
        {"labeler", "oracle", [](C& c, S k, S v) {
             if (v != "oracle" && v != "human") throw ConfigError(k + ": expected oracle or human");
             c.labeler = v;
         }},
        {"timeout_s", "60", [](C& c, S k, S v) { c.timeout_s = parse_num<double>(k, v); }},
        {"fallback", "oracle", [](C& c, S k, S v) {
             if (v != "oracle" && v != "skip_supervised") throw ConfigError(k + ": expected oracle or skip_supervised");
             c.fallback = v;
         }},
        {"host", "127.0.0.1", [](C& c, S, S v) { c.host = v; }},
        {"port", "8080", [](C& c, S k, S v) { c.port = parse_num<int>(k, v); }},
        {"assets_dir", "", [](C& c, S, S v) { c.assets_dir = v; }},
        {"out_dir", "out", [](C& c, S, S v) { c.out_dir = v; }},
        {"model_path", "", [](C& c, S, S v) { c.model_path = v; }},
        {"source_path", "", [](C& c, S, S v) { c.source_path = v; }},
        {"stream_path", "", [](C& c, S, S v) { c.stream_path = v; }},
        {"results_path", "", [](C& c, S, S v) { c.results_path = v; }},
        {"run_label", "HILTTA", [](C& c, S, S v) { c.run_label = v; }},
        {"with_supervised", "false", [](C& c, S k, S v) { c.with_supervised = parse_bool(k, v); }},
    };
    return table;
}

std::filesystem::path or_default(const std::string& explicit_path, const std::string& dir, const char* name)
{
    if (!explicit_path.empty()) return explicit_path;
    return std::filesystem::path(dir) / name;
}

}  // namespace

std::filesystem::path RunConfig::model_file() const { return or_default(model_path, out_dir, "model.txt"); }
std::filesystem::path RunConfig::source_file() const { return or_default(source_path, out_dir, "source.csv"); }
std::filesystem::path RunConfig::stream_file() const { return or_default(stream_path, out_dir, "stream.csv"); }
std::filesystem::path RunConfig::results_file() const { return or_default(results_path, out_dir, "results.csv"); }

std::vector<std::pair<std::string, std::string>> config_keys()
{
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : key_table()) out.emplace_back(e.key, e.default_value);
    return out;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value)
{
    for (const auto& e : key_table())
        if (key == e.key)
        {
            e.set(config, key, value);
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

void apply_override(RunConfig& config, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
    set_config_value(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig parse_config(std::istream& in)
{
    RunConfig config;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        const auto hash = line.find('#');
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        try
        {
            apply_override(config, body);
        }
        catch (const ConfigError& e)
        {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return config;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return parse_config(in);
}

EngineConfig make_engine_config(const RunConfig& config)
{
    EngineConfig e = config.engine;
    try
    {
        e.pool = config.dual ? dual_pool(e.method) : default_pool(e.method);
    }
    catch (const std::invalid_argument& ex)
    {
        throw ConfigError(std::string("dual: ") + ex.what());
    }
    std::size_t initial = 0;
    if (config.initial_candidate)
        initial = *config.initial_candidate;
    else if (config.dual)
        initial = 12;  // lr=1e-3, tau=0.4
    else
        initial = default_index(e.method);
    if (initial >= e.pool.size()) throw ConfigError("initial_candidate: index outside the pool");
    if (config.fixed_index)
    {
        if (*config.fixed_index >= e.pool.size()) throw ConfigError("fixed_index: index outside the pool");
        e.pool.entries = {e.pool.entries[*config.fixed_index]};
        initial = 0;
    }
    e.initial_candidate = initial;
    try
    {
        e.validate();
    }
    catch (const std::invalid_argument& ex)
    {
        throw ConfigError(ex.what());
    }
    return e;
}

std::vector<LabeledExample> make_source_dataset(const RunConfig& config)
{
    Rng rng = Rng(config.stream.seed).fork(kSourceTag);
    return gen_source_dataset(config.stream, config.source_per_class, rng);
}

std::vector<LabeledExample> make_source_test_set(const RunConfig& config)
{
    Rng rng = Rng(config.stream.seed).fork(kSourceTestTag);
    return gen_source_dataset(config.stream, config.source_per_class, rng);
}

LabeledStream make_stream(const RunConfig& config)
{
    Rng rng = Rng(config.stream.seed).fork(kStreamTag);
    return gen_continual_stream(config.stream, rng);
}

PretrainedModel make_pretrained(const RunConfig& config, const std::vector<LabeledExample>& source)
{
    Rng rng = Rng(config.stream.seed).fork(kPretrainTag);
    return pretrain_source(source, config.stream.num_classes, rng, config.pretrain);
}

Workspace build_workspace(const RunConfig& config)
{
    config.stream.validate();
    Workspace ws;
    ws.source = make_source_dataset(config);
    ws.stream = make_stream(config);
    ws.model = make_pretrained(config, ws.source);
    return ws;
}

std::string format_fixed(double v, int decimals)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::vector<ResultRow> result_rows(const std::string& label, const RunResult& result)
{
    struct Acc
    {
        std::size_t labels = 0;
        std::size_t samples = 0;
        double infer = 0.0;
        double adapt = 0.0;
    };
    std::map<int, Acc> per;
    Acc all;
    for (const auto& r : result.reports)
    {
        auto& a = per[r.domain_index];
        for (Acc* acc : {&a, &all})
        {
            acc->labels += r.selected.size();
            acc->samples += r.predictions.size();
            acc->infer += r.infer_ms;
            acc->adapt += r.adapt_ms;
        }
    }
    auto row = [&](std::string domain, const DomainError& err, const Acc& acc) {
        const double n = acc.samples ? static_cast<double>(acc.samples) : 1.0;
        return ResultRow{label, std::move(domain), err.error_pct(), acc.labels, acc.infer / n, acc.adapt / n};
    };
    std::vector<ResultRow> rows;
    for (const auto& [d, acc] : per)
    {
        const auto it = result.summary.per_domain.find(d);
        rows.push_back(row(std::to_string(d), it == result.summary.per_domain.end() ? DomainError{} : it->second, acc));
    }
    rows.push_back(row("all", result.summary.overall, all));
    return rows;
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows)
{
    out << kResultsHeader << '\n';
    for (const auto& r : rows)
    {
        if (r.run.find(',') != std::string::npos || r.domain.find(',') != std::string::npos)
            throw std::invalid_argument("run label '" + r.run + "' contains a comma");
        out << r.run << ',' << r.domain << ',' << format_fixed(r.error_pct, 4) << ',' << r.labels_used << ','
            << format_fixed(r.infer_ms_per_sample, 6) << ',' << format_fixed(r.adapt_ms_per_sample, 6) << '\n';
    }
}

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_results_csv(out, rows);
}

std::vector<ResultRow> read_results_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || trim(line) != kResultsHeader)
        throw ParseError(std::string("results schema mismatch: expected header '") + kResultsHeader + "'", 1);
    std::vector<ResultRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line))
    {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) f.push_back(trim(field));
        if (f.size() != 6) throw ParseError("expected 6 fields, got " + std::to_string(f.size()), lineno);
        ResultRow r;
        r.run = f[0];
        try
        {
            r.domain = f[1];
            r.error_pct = std::stod(f[2]);
            r.labels_used = static_cast<std::size_t>(std::stoull(f[3]));
            r.infer_ms_per_sample = std::stod(f[4]);
            r.adapt_ms_per_sample = std::stod(f[5]);
        }
        catch (const std::exception&)
        {
            throw ParseError("malformed numeric field", lineno);
        }
        if (!(r.error_pct >= 0.0 && r.error_pct <= 100.0)) throw ParseError("error_pct outside [0, 100]", lineno);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_results_csv(in);
}

RunResult run_engine(const EngineConfig& engine, const Workspace& ws)
{
    OracleLabeler labeler(ws.stream.truth);
    return run_stream(engine, ws.model, ws.stream.batches, labeler, &ws.stream.truth);
}

FixedSweepResult sweep_fixed(const RunConfig& config, const Workspace& ws)
{
    FixedSweepResult out;
    const EngineConfig full = make_engine_config(config);
    for (std::size_t i = 0; i < full.pool.size(); ++i)
    {
        RunConfig fixed = config;
        fixed.fixed_index = i;
        if (!config.with_supervised) fixed.engine.label_rate = 0.0;
        EngineConfig e = make_engine_config(fixed);
        const RunResult result = run_engine(e, ws);
        const std::string label = "fixed[" + e.pool.entries.front().label() + "]";
        for (auto& row : result_rows(label, result)) out.rows.push_back(std::move(row));
        out.overall_pct.push_back(result.summary.overall.error_pct());
    }
    const auto worst = std::max_element(out.overall_pct.begin(), out.overall_pct.end());
    const auto best = std::min_element(out.overall_pct.begin(), out.overall_pct.end());
    auto& s = out.summary;
    s.worst_pct = *worst;
    s.worst = full.pool.entries[static_cast<std::size_t>(worst - out.overall_pct.begin())].label();
    s.best_pct = *best;
    s.best = full.pool.entries[static_cast<std::size_t>(best - out.overall_pct.begin())].label();
    s.avg_pct = std::accumulate(out.overall_pct.begin(), out.overall_pct.end(), 0.0) /
                static_cast<double>(out.overall_pct.size());
    return out;
}

void write_sweep_summary(std::ostream& out, const std::string& method, const FixedSweepSummary& s)
{
    out << kSweepSummaryHeader << '\n'
        << method << ',' << format_fixed(s.worst_pct, 4) << ",\"" << s.worst << "\"," << format_fixed(s.avg_pct, 4)
        << ',' << format_fixed(s.best_pct, 4) << ",\"" << s.best << "\"\n";
}

std::vector<ResultRow> merge_results(const std::vector<std::vector<ResultRow>>& tables)
{
    if (tables.empty()) throw std::invalid_argument("report: no result tables given");
    std::vector<ResultRow> merged;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    for (const auto& table : tables)
        for (const auto& row : table)
        {
            const auto key = std::make_pair(row.run, row.domain);
            const auto it = index.find(key);
            if (it == index.end())
            {
                index.emplace(key, merged.size());
                merged.push_back(row);
            }
            else
                merged[it->second] = row;
        }
    return merged;
}

std::map<std::string, std::vector<std::pair<double, double>>> plot_series(const std::vector<ResultRow>& rows)
{
    std::map<std::string, std::vector<std::pair<double, double>>> out;
    for (const auto& r : rows)
    {
        if (r.domain != "all") continue;
        const auto at = r.run.rfind('@');
        if (at == std::string::npos) continue;
        double x = 0.0;
        const std::string xs = r.run.substr(at + 1);
        const auto [ptr, ec] = std::from_chars(xs.data(), xs.data() + xs.size(), x);
        if (ec != std::errc() || ptr != xs.data() + xs.size()) continue;
        out[r.run.substr(0, at)].emplace_back(x, r.error_pct);
    }
    for (auto& [name, pts] : out) std::sort(pts.begin(), pts.end());
    return out;
}

}  // namespace hiltta
