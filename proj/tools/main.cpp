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


// hiltta command line front end.

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "hiltta/annotation.hpp"
#include "hiltta/harness.hpp"
#include "hiltta/http_service.hpp"

namespace fs = std::filesystem;
using namespace hiltta;

namespace
{
struct CommonOptions
{
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string method;
    bool dual = false;
    std::optional<int> intervention;
    std::string out_dir;
    bool pretrain = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool model_options)
{
    cmd->add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", o.overrides, "override a config key (key=value); repeatable");
    cmd->add_option("--seed", o.seed, "master seed");
    cmd->add_option("--out", o.out_dir, "output directory");
    if (!model_options) return;
    cmd->add_option("--method", o.method, "tent | pl");
    cmd->add_flag("--dual", o.dual, "PL learning-rate x threshold pool");
    cmd->add_option("--intervention", o.intervention, "label every N-th batch");
    cmd->add_flag("--pretrain", o.pretrain, "pretrain the source model instead of loading it");
}

RunConfig resolve(const CommonOptions& o)
{
    RunConfig config = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
    if (o.seed) set_config_value(config, "seed", std::to_string(*o.seed));
    if (!o.method.empty()) set_config_value(config, "method", o.method);
    if (o.dual) set_config_value(config, "dual", "true");
    if (o.intervention) set_config_value(config, "intervention_frequency", std::to_string(*o.intervention));
    if (!o.out_dir.empty()) set_config_value(config, "out_dir", o.out_dir);
    for (const auto& kv : o.overrides) apply_override(config, kv);
    config.stream.validate();
    return config;
}

void ensure_parent(const fs::path& p)
{
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::vector<LabeledExample> load_source(const RunConfig& config)
{
    if (config.source_path.empty()) return make_source_dataset(config);
    DatasetFile f = read_dataset(config.source_file());
    if (f.input_dim != config.stream.input_dim || f.num_classes != config.stream.num_classes)
        throw ConfigError("source_path: file dimensions do not match input_dim/num_classes");
    return std::move(f.examples);
}

LabeledStream load_stream(const RunConfig& config)
{
    if (config.stream_path.empty()) return make_stream(config);
    DatasetFile f = read_dataset(config.stream_file());
    if (f.input_dim != config.stream.input_dim || f.num_classes != config.stream.num_classes)
        throw ConfigError("stream_path: file dimensions do not match input_dim/num_classes");
    return examples_to_stream(f.examples, config.stream.batch_size);
}

PretrainedModel pretrain_and_save(const RunConfig& config, const std::vector<LabeledExample>& source)
{
    PretrainedModel model = make_pretrained(config, source);
    ensure_parent(config.model_file());
    write_model(config.model_file(), model);
    std::cerr << "pretrained: " << model.epochs << " epochs, train accuracy "
              << format_fixed(100.0 * model.train_accuracy, 2) << "% -> " << config.model_file().string() << '\n';
    return model;
}

Workspace load_workspace(const RunConfig& config, bool pretrain)
{
    Workspace ws;
    ws.source = load_source(config);
    if (pretrain)
        ws.model = pretrain_and_save(config, ws.source);
    else
    {
        if (!fs::exists(config.model_file()))
            throw ConfigError("model_path: " + config.model_file().string() +
                              " not found (run `hiltta pretrain` or pass --pretrain)");
        ws.model = read_model(config.model_file());
        if (ws.model.params.input_dim() != config.stream.input_dim ||
            ws.model.params.num_classes() != config.stream.num_classes)
            throw ConfigError("model_path: model dimensions do not match input_dim/num_classes");
    }
    ws.stream = load_stream(config);
    return ws;
}

void print_summary(const std::string& label, const RunResult& r)
{
    std::cout << label << ": overall error " << format_fixed(r.summary.overall.error_pct(), 2) << "%, labels "
              << r.summary.labels_used << ", interventions " << r.summary.intervention_batches;
    if (r.summary.fallback_batches) std::cout << ", fallback batches " << r.summary.fallback_batches;
    std::cout << '\n';
}

void write_rows(const RunConfig& config, const std::vector<ResultRow>& rows)
{
    ensure_parent(config.results_file());
    write_results_csv(config.results_file(), rows);
    std::cerr << "results -> " << config.results_file().string() << '\n';
}

int cmd_gen_data(const CommonOptions& o)
{
    const RunConfig config = resolve(o);
    const auto source = make_source_dataset(config);
    const auto stream = make_stream(config);
    for (const fs::path& p : {config.source_file(), config.stream_file()}) ensure_parent(p);
    write_dataset(config.source_file(), source, config.stream.input_dim, config.stream.num_classes);
    write_dataset(config.stream_file(), stream_to_examples(stream), config.stream.input_dim,
                  config.stream.num_classes);
    std::cout << "source: " << source.size() << " rows -> " << config.source_file().string() << '\n'
              << "stream: " << stream.num_samples() << " rows in " << stream.batches.size() << " batches -> "
              << config.stream_file().string() << '\n';
    return 0;
}

int cmd_pretrain(const CommonOptions& o)
{
    const RunConfig config = resolve(o);
    const auto source = load_source(config);
    const PretrainedModel model = pretrain_and_save(config, source);
    const auto test = make_source_test_set(config);
    std::cout << "source test accuracy " << format_fixed(100.0 * accuracy(model.params, test, config.stream.batch_size, &model.running), 2)
              << "%\n";
    return 0;
}

int cmd_run(const CommonOptions& o, const std::vector<double>& budgets)
{
    const RunConfig config = resolve(o);
    const Workspace ws = load_workspace(config, o.pretrain);
    std::vector<ResultRow> rows;
    if (budgets.empty())
    {
        const RunResult r = run_engine(make_engine_config(config), ws);
        print_summary(config.run_label, r);
        rows = result_rows(config.run_label, r);
    }
    else
    {
        for (double pct : budgets)
        {
            RunConfig c = config;
            c.engine.label_rate = pct / 100.0;
            const std::string label = config.run_label + "@" + format_fixed(pct, 2);
            const RunResult r = run_engine(make_engine_config(c), ws);
            print_summary(label, r);
            for (auto& row : result_rows(label, r)) rows.push_back(std::move(row));
        }
    }
    write_rows(config, rows);
    return 0;
}

int cmd_sweep_fixed(const CommonOptions& o)
{
    const RunConfig config = resolve(o);
    const Workspace ws = load_workspace(config, o.pretrain);
    const FixedSweepResult sweep = sweep_fixed(config, ws);
    write_rows(config, sweep.rows);
    fs::path summary = config.results_file();
    summary.replace_filename(summary.stem().string() + "_summary.csv");
    std::ofstream out(summary);
    if (!out) throw std::runtime_error("cannot write " + summary.string());
    const std::string method(to_string(config.engine.method));
    write_sweep_summary(out, method, sweep.summary);
    write_sweep_summary(std::cout, method, sweep.summary);
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_path, const std::string& plot_dir)
{
    std::vector<std::vector<ResultRow>> tables;
    for (const auto& p : inputs)
    {
        try
        {
            tables.push_back(read_results_csv(fs::path(p)));
        }
        catch (const std::exception& e)
        {
            throw std::runtime_error(p + ": " + e.what());
        }
    }
    const auto merged = merge_results(tables);
    if (out_path.empty())
        write_results_csv(std::cout, merged);
    else
    {
        ensure_parent(out_path);
        write_results_csv(fs::path(out_path), merged);
    }
    if (!plot_dir.empty())
    {
        fs::create_directories(plot_dir);
        for (const auto& [name, points] : plot_series(merged))
        {
            const fs::path file = fs::path(plot_dir) / (name + ".dat");
            std::ofstream out(file);
            if (!out) throw std::runtime_error("cannot write " + file.string());
            out << "x,error_pct\n";
            for (const auto& [x, e] : points) out << format_fixed(x, 4) << ',' << format_fixed(e, 4) << '\n';
            std::cerr << "series " << name << " (" << points.size() << " points) -> " << file.string() << '\n';
        }
    }
    return 0;
}

int cmd_serve(const CommonOptions& o)
{
    RunConfig config = resolve(o);
    const Workspace ws = load_workspace(config, o.pretrain);
    const EngineConfig engine = make_engine_config(config);

    AnnotationSession::Options opts;
    opts.session_id = "hiltta-" + std::to_string(config.stream.seed);
    for (int c = 0; c < config.stream.num_classes; ++c) opts.class_names.push_back("class " + std::to_string(c));
    opts.projection = AnnotationSession::make_projection(config.stream.input_dim, config.stream.seed);
    opts.timeout_s = config.timeout_s;
    opts.fallback = parse_fallback(config.fallback);
    AnnotationSession session(opts);

    AnnotationServer server(session, config.assets_dir);
    const int port = server.bind(config.host, config.port);
    server.start();
    std::cerr << "annotation console at http://" << config.host << ':' << port << "/\n";

    RunResult result;
    if (config.labeler == "human")
    {
        HumanLabeler labeler(session, &ws.stream.truth);
        result = run_stream(engine, ws.model, ws.stream.batches, labeler, &ws.stream.truth);
    }
    else
    {
        OracleLabeler labeler(ws.stream.truth);
        result = run_stream(engine, ws.model, ws.stream.batches, labeler, &ws.stream.truth);
    }
    session.close();
    server.stop();
    print_summary(config.run_label, result);
    write_rows(config, result_rows(config.run_label, result));
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"hiltta: human-in-the-loop test-time adaptation"};
    app.require_subcommand(1);

    CommonOptions gen, pre, run, sweep, serve;
    std::vector<double> budgets;
    std::vector<std::string> report_inputs;
    std::string report_out, plot_dir;

    auto* c_gen = app.add_subcommand("gen-data", "write the source dataset and the test stream");
    add_common(c_gen, gen, false);
    auto* c_pre = app.add_subcommand("pretrain", "train the source model");
    add_common(c_pre, pre, false);
    auto* c_run = app.add_subcommand("run", "one HILTTA run over the stream");
    add_common(c_run, run, true);
    c_run->add_option("--budgets", budgets, "label budgets in percent; one run each, labelled <run_label>@<pct>")
        ->delimiter(',');
    auto* c_sweep = app.add_subcommand("sweep-fixed", "run every pool entry on its own");
    add_common(c_sweep, sweep, true);
    c_sweep->add_flag("--with-supervised", [&](std::int64_t) { sweep.overrides.emplace_back("with_supervised=true"); },
                      "fixed runs also get labels and the supervised step");
    auto* c_report = app.add_subcommand("report", "merge results CSVs and emit plot data");
    c_report->add_option("inputs", report_inputs, "results CSV files")->required();
    c_report->add_option("--out", report_out, "merged CSV (default stdout)");
    c_report->add_option("--plot-dir", plot_dir, "directory for <series>.dat files");
    auto* c_serve = app.add_subcommand("serve", "run with the annotation service");
    add_common(c_serve, serve, true);
    c_serve->add_flag("--human", [&](std::int64_t) { serve.overrides.emplace_back("labeler=human"); },
                      "wait for labels from the console");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        return app.exit(e);
    }

    try
    {
        if (*c_gen) return cmd_gen_data(gen);
        if (*c_pre) return cmd_pretrain(pre);
        if (*c_run) return cmd_run(run, budgets);
        if (*c_sweep) return cmd_sweep_fixed(sweep);
        if (*c_report) return cmd_report(report_inputs, report_out, plot_dir);
        if (*c_serve) return cmd_serve(serve);
    }
    catch (const std::exception& e)
    {
        std::cerr << "hiltta: error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
