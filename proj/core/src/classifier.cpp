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

#include "hiltta/classifier.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace hiltta
{
namespace
{
void add_bias(Matrix& m, std::span<const double> bias)
{
    for (std::size_t r = 0; r < m.rows; ++r)
    {
        auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols; ++c) row[c] += bias[c];
    }
}

std::vector<double> column_sums(const Matrix& m)
{
    std::vector<double> out(m.cols, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r)
    {
        auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols; ++c) out[c] += row[c];
    }
    return out;
}

void check_inputs(const ModelParams& params, const Matrix& inputs)
{
    if (inputs.rows == 0) throw DimensionError("forward: empty batch");
    if (inputs.cols != params.w1.rows)
        throw DimensionError("forward: input dimension " + std::to_string(inputs.cols) + " != model input dimension " +
                             std::to_string(params.w1.rows));
}

}  // namespace

ModelParams ModelParams::zeros(int input_dim, int hidden_dim, int num_classes)
{
    if (input_dim < 1 || hidden_dim < 1 || num_classes < 2) throw DimensionError("ModelParams::zeros: bad dimensions");
    const auto d = static_cast<std::size_t>(input_dim);
    const auto h = static_cast<std::size_t>(hidden_dim);
    const auto c = static_cast<std::size_t>(num_classes);
    ModelParams p;
    p.w1 = Matrix(d, h);
    p.b1.assign(h, 0.0);
    p.gamma.assign(h, 0.0);
    p.beta.assign(h, 0.0);
    p.w_out = Matrix(h, c);
    p.b_out.assign(c, 0.0);
    return p;
}

std::vector<ModelParams::Block> ModelParams::blocks()
{
    return {{"w1", w1.data}, {"b1", b1}, {"gamma", gamma}, {"beta", beta}, {"w_out", w_out.data}, {"b_out", b_out}};
}

std::vector<ModelParams::ConstBlock> ModelParams::blocks() const
{
    return {{"w1", w1.data}, {"b1", b1}, {"gamma", gamma}, {"beta", beta}, {"w_out", w_out.data}, {"b_out", b_out}};
}

std::size_t ModelParams::num_values() const
{
    std::size_t n = 0;
    for (const auto& b : blocks()) n += b.values.size();
    return n;
}

ForwardCache forward(const ModelParams& params, const Matrix& inputs, const NormStats* running)
{
    check_inputs(params, inputs);
    const std::size_t n = inputs.rows;
    const std::size_t h = params.w1.cols;

    ForwardCache cache;
    cache.input = inputs;
    cache.pre = matmul(inputs, params.w1);
    add_bias(cache.pre, params.b1);
    cache.hidden = cache.pre;
    for (double& v : cache.hidden.data) v = v > 0.0 ? v : 0.0;

    cache.batch_stats = n >= 2;
    if (cache.batch_stats)
    {
        cache.mean = column_sums(cache.hidden);
        for (double& m : cache.mean) m /= static_cast<double>(n);
        cache.var.assign(h, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < h; ++j)
            {
                const double d = cache.hidden(r, j) - cache.mean[j];
                cache.var[j] += d * d;
            }
        for (double& v : cache.var) v /= static_cast<double>(n);
    }
    else
    {
        if (running == nullptr || running->mean.size() != h || running->var.size() != h)
            throw std::runtime_error("forward: batch of one sample needs source running statistics");
        cache.mean = running->mean;
        cache.var = running->var;
    }

    cache.normalized = Matrix(n, h);
    cache.features = Matrix(n, h);
    for (std::size_t j = 0; j < h; ++j)
    {
        const double inv = 1.0 / std::sqrt(cache.var[j] + kNormEpsilon);
        for (std::size_t r = 0; r < n; ++r)
        {
            const double xhat = (cache.hidden(r, j) - cache.mean[j]) * inv;
            cache.normalized(r, j) = xhat;
            cache.features(r, j) = params.gamma[j] * xhat + params.beta[j];
        }
    }

    cache.logits = matmul(cache.features, params.w_out);
    add_bias(cache.logits, params.b_out);
    cache.probs = Matrix(n, cache.logits.cols);
    for (std::size_t r = 0; r < n; ++r)
    {
        const auto p = softmax(cache.logits.row(r));
        std::copy(p.begin(), p.end(), cache.probs.row(r).begin());
    }
    return cache;
}

ForwardResult forward_batch(const ModelParams& params, std::span<const FeatureVector> inputs, const NormStats* running)
{
    ForwardResult out;
    out.cache = forward(params, stack_rows(inputs), running);
    const auto& c = out.cache;
    out.posteriors.reserve(c.probs.rows);
    out.features.reserve(c.features.rows);
    for (std::size_t r = 0; r < c.probs.rows; ++r)
    {
        auto p = c.probs.row(r);
        auto f = c.features.row(r);
        out.posteriors.emplace_back(p.begin(), p.end());
        out.features.emplace_back(f.begin(), f.end());
    }
    return out;
}

ModelParams backward(const ModelParams& params, const ForwardCache& cache, const Matrix& dlogits, ParamMask mask)
{
    const std::size_t n = cache.input.rows;
    const std::size_t h = params.w1.cols;
    ModelParams grad = ModelParams::zeros(params.input_dim(), params.hidden_dim(), params.num_classes());

    if (mask == ParamMask::All)
    {
        grad.w_out = matmul_tn(cache.features, dlogits);
        grad.b_out = column_sums(dlogits);
    }

    Matrix dfeat = matmul_nt(dlogits, params.w_out);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < h; ++j)
        {
            grad.gamma[j] += dfeat(r, j) * cache.normalized(r, j);
            grad.beta[j] += dfeat(r, j);
        }
    if (mask == ParamMask::NormalizationOnly) return grad;

    // dfeat becomes d(loss)/d(pre) in place.
    const double nd = static_cast<double>(n);
    for (std::size_t j = 0; j < h; ++j)
    {
        const double inv = 1.0 / std::sqrt(cache.var[j] + kNormEpsilon);
        double sum_dx = 0.0;
        double sum_dx_xhat = 0.0;
        for (std::size_t r = 0; r < n; ++r)
        {
            const double dx = dfeat(r, j) * params.gamma[j];
            dfeat(r, j) = dx;
            sum_dx += dx;
            sum_dx_xhat += dx * cache.normalized(r, j);
        }
        for (std::size_t r = 0; r < n; ++r)
        {
            double da = cache.batch_stats
                            ? inv / nd * (nd * dfeat(r, j) - sum_dx - cache.normalized(r, j) * sum_dx_xhat)
                            : inv * dfeat(r, j);
            dfeat(r, j) = cache.pre(r, j) > 0.0 ? da : 0.0;
        }
    }
    grad.w1 = matmul_tn(cache.input, dfeat);
    grad.b1 = column_sums(dfeat);
    return grad;
}

LossGrad ce_loss_grad(const ModelParams& params, const Matrix& inputs, std::span<const int> targets,
                      const NormStats* running)
{
    if (targets.size() != inputs.rows) throw DimensionError("ce_loss_grad: one target per row required");
    const auto classes = static_cast<int>(params.w_out.cols);
    std::size_t labeled = 0;
    for (int y : targets)
    {
        if (y >= classes) throw std::invalid_argument("ce_loss_grad: label out of range");
        if (y >= 0) ++labeled;
    }
    if (labeled == 0) throw std::invalid_argument("ce_loss_grad: no labeled rows");

    const ForwardCache cache = forward(params, inputs, running);
    const double scale = 1.0 / static_cast<double>(labeled);
    Matrix dlogits(cache.probs.rows, cache.probs.cols);
    double loss = 0.0;
    for (std::size_t r = 0; r < cache.probs.rows; ++r)
    {
        const int y = targets[r];
        if (y < 0) continue;
        const auto yi = static_cast<std::size_t>(y);
        loss -= std::log(std::max(cache.probs(r, yi), kProbFloor));
        for (std::size_t c = 0; c < cache.probs.cols; ++c) dlogits(r, c) = cache.probs(r, c) * scale;
        dlogits(r, yi) -= scale;
    }
    return {loss * scale, backward(params, cache, dlogits, ParamMask::All)};
}

LossGrad ce_loss_grad(const ModelParams& params, std::span<const LabeledExample> labeled, const NormStats* running)
{
    if (labeled.empty()) throw std::invalid_argument("ce_loss_grad: no labeled examples");
    Matrix inputs(labeled.size(), labeled.front().x.size());
    std::vector<int> targets(labeled.size());
    for (std::size_t i = 0; i < labeled.size(); ++i)
    {
        if (labeled[i].x.size() != inputs.cols) throw DimensionError("ce_loss_grad: ragged inputs");
        std::copy(labeled[i].x.begin(), labeled[i].x.end(), inputs.row(i).begin());
        targets[i] = labeled[i].y;
        if (targets[i] < 0) throw std::invalid_argument("ce_loss_grad: negative label");
    }
    return ce_loss_grad(params, inputs, targets, running);
}

LossGrad entropy_loss_grad(const ModelParams& params, const Matrix& inputs, ParamMask mask, const NormStats* running)
{
    const ForwardCache cache = forward(params, inputs, running);
    const double scale = 1.0 / static_cast<double>(cache.probs.rows);
    Matrix dlogits(cache.probs.rows, cache.probs.cols);
    double loss = 0.0;
    for (std::size_t r = 0; r < cache.probs.rows; ++r)
    {
        const auto p = cache.probs.row(r);
        const double h = entropy(p);
        loss += h;
        // dH/dz_c = -p_c (ln p_c + H)
        for (std::size_t c = 0; c < p.size(); ++c)
            dlogits(r, c) = -p[c] * (std::log(std::max(p[c], kProbFloor)) + h) * scale;
    }
    return {loss * scale, backward(params, cache, dlogits, mask)};
}

LossGrad pl_loss_grad(const ModelParams& params, const Matrix& inputs, double tau, const NormStats* running)
{
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("pl_loss_grad: tau must be in (0, 1]");
    const ForwardCache cache = forward(params, inputs, running);
    const double threshold = tau * std::log(static_cast<double>(cache.probs.cols));

    std::vector<int> pseudo(cache.probs.rows, -1);
    std::size_t passing = 0;
    for (std::size_t r = 0; r < cache.probs.rows; ++r)
    {
        const auto p = cache.probs.row(r);
        if (entropy(p) <= threshold)
        {
            pseudo[r] = argmax_class(p);
            ++passing;
        }
    }
    if (passing == 0) return {0.0, ModelParams::zeros(params.input_dim(), params.hidden_dim(), params.num_classes())};

    const double scale = 1.0 / static_cast<double>(passing);
    Matrix dlogits(cache.probs.rows, cache.probs.cols);
    double loss = 0.0;
    for (std::size_t r = 0; r < cache.probs.rows; ++r)
    {
        if (pseudo[r] < 0) continue;
        const auto y = static_cast<std::size_t>(pseudo[r]);
        loss -= std::log(std::max(cache.probs(r, y), kProbFloor));
        for (std::size_t c = 0; c < cache.probs.cols; ++c) dlogits(r, c) = cache.probs(r, c) * scale;
        dlogits(r, y) -= scale;
    }
    return {loss * scale, backward(params, cache, dlogits, ParamMask::All)};
}

ModelParams sgd_step(const ModelParams& params, const ModelParams& grad, double lr)
{
    if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: learning rate must be positive");
    ModelParams out = params;
    auto dst = out.blocks();
    const auto src = grad.blocks();
    for (std::size_t b = 0; b < dst.size(); ++b)
    {
        if (dst[b].values.size() != src[b].values.size())
            throw DimensionError("sgd_step: gradient shape mismatch in " + std::string(dst[b].name));
        for (std::size_t k = 0; k < dst[b].values.size(); ++k)
        {
            const double g = src[b].values[k];
            if (!std::isfinite(g)) throw std::domain_error("sgd_step: non-finite gradient in " + std::string(dst[b].name));
            dst[b].values[k] -= lr * g;
        }
    }
    return out;
}

AdamState AdamState::zeros_like(const ModelParams& params)
{
    const auto z = ModelParams::zeros(params.input_dim(), params.hidden_dim(), params.num_classes());
    return {z, z, 0};
}

std::pair<ModelParams, AdamState> adam_step(const ModelParams& params, const ModelParams& grad, const AdamState& state,
                                            double lr, const AdamOptions& options)
{
    if (!(lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive");
    ModelParams out = params;
    AdamState next = state;
    ++next.step;
    const double c1 = 1.0 - std::pow(options.beta1, next.step);
    const double c2 = 1.0 - std::pow(options.beta2, next.step);
    auto dst = out.blocks();
    auto m = next.m.blocks();
    auto v = next.v.blocks();
    const auto src = grad.blocks();
    for (std::size_t b = 0; b < dst.size(); ++b)
    {
        if (dst[b].values.size() != src[b].values.size() || m[b].values.size() != src[b].values.size())
            throw DimensionError("adam_step: shape mismatch in " + std::string(dst[b].name));
        for (std::size_t k = 0; k < dst[b].values.size(); ++k)
        {
            const double g = src[b].values[k];
            if (!std::isfinite(g)) throw std::domain_error("adam_step: non-finite gradient in " + std::string(dst[b].name));
            double& mk = m[b].values[k];
            double& vk = v[b].values[k];
            if (g == 0.0 && mk == 0.0 && vk == 0.0) continue;
            mk = options.beta1 * mk + (1.0 - options.beta1) * g;
            vk = options.beta2 * vk + (1.0 - options.beta2) * g * g;
            dst[b].values[k] -= lr * (mk / c1) / (std::sqrt(vk / c2) + options.epsilon);
        }
    }
    return {std::move(out), std::move(next)};
}

double accuracy(const ModelParams& params, std::span<const LabeledExample> data, int batch_size, const NormStats* running)
{
    if (data.empty()) return 0.0;
    const auto chunk = static_cast<std::size_t>(std::max(batch_size, 1));
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.size(); start += chunk)
    {
        const std::size_t end = std::min(data.size(), start + chunk);
        Matrix inputs(end - start, data[start].x.size());
        for (std::size_t i = start; i < end; ++i) std::copy(data[i].x.begin(), data[i].x.end(), inputs.row(i - start).begin());
        const ForwardCache cache = forward(params, inputs, running);
        for (std::size_t i = start; i < end; ++i)
            if (argmax_class(cache.probs.row(i - start)) == data[i].y) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

PretrainedModel pretrain_source(const std::vector<LabeledExample>& dataset, int num_classes, Rng& rng,
                                const PretrainOptions& options)
{
    if (dataset.size() < 2) throw std::invalid_argument("pretrain_source: need at least two examples");
    const int d = static_cast<int>(dataset.front().x.size());
    const int h = options.hidden_dim;
    ModelParams params = ModelParams::zeros(d, h, num_classes);
    const double w1_scale = std::sqrt(2.0 / d);
    for (double& v : params.w1.data) v = w1_scale * rng.normal();
    std::fill(params.gamma.begin(), params.gamma.end(), 1.0);
    const double out_scale = std::sqrt(1.0 / h);
    for (double& v : params.w_out.data) v = out_scale * rng.normal();

    Matrix inputs(dataset.size(), static_cast<std::size_t>(d));
    std::vector<int> targets(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i)
    {
        std::copy(dataset[i].x.begin(), dataset[i].x.end(), inputs.row(i).begin());
        targets[i] = dataset[i].y;
    }

    PretrainedModel out;
    for (out.epochs = 0; out.epochs < options.max_epochs; ++out.epochs)
    {
        const ForwardCache cache = forward(params, inputs, nullptr);
        std::size_t correct = 0;
        for (std::size_t r = 0; r < cache.probs.rows; ++r)
            if (argmax_class(cache.probs.row(r)) == targets[r]) ++correct;
        out.train_accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
        if (out.train_accuracy >= options.target_accuracy) break;
        params = sgd_step(params, ce_loss_grad(params, inputs, targets).grad, options.learning_rate);
    }
    if (out.epochs == options.max_epochs)
        out.train_accuracy = accuracy(params, dataset, static_cast<int>(dataset.size()));
    if (out.train_accuracy < options.min_accuracy)
        throw std::runtime_error("pretrain_source: source accuracy " + std::to_string(out.train_accuracy) +
                                 " below " + std::to_string(options.min_accuracy));

    const ForwardCache cache = forward(params, inputs, nullptr);
    out.running.mean = cache.mean;
    out.running.var = cache.var;
    out.params = std::move(params);
    return out;
}

namespace
{
std::string fmt17(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_block(std::ostream& out, std::string_view name, std::span<const double> values, std::size_t rows,
                 std::size_t cols)
{
    out << name << ' ' << rows << ' ' << cols << '\n';
    for (std::size_t r = 0; r < rows; ++r)
    {
        for (std::size_t c = 0; c < cols; ++c)
        {
            if (c) out << ',';
            out << fmt17(values[r * cols + c]);
        }
        out << '\n';
    }
}

struct LineReader
{
    std::istream& in;
    std::size_t line = 0;

    std::string next(const char* what)
    {
        std::string s;
        if (!std::getline(in, s)) throw std::runtime_error("model file: unexpected end before " + std::string(what));
        ++line;
        return s;
    }

    [[noreturn]] void fail(const std::string& msg) const
    {
        throw std::runtime_error("model file line " + std::to_string(line) + ": " + msg);
    }
};

void read_block(LineReader& reader, std::string_view name, std::span<double> values, std::size_t rows, std::size_t cols)
{
    std::istringstream header(reader.next("block header"));
    std::string got;
    std::size_t r = 0, c = 0;
    header >> got >> r >> c;
    if (got != name || r != rows || c != cols)
        reader.fail("expected block '" + std::string(name) + " " + std::to_string(rows) + " " + std::to_string(cols) + "'");
    for (std::size_t i = 0; i < rows; ++i)
    {
        const std::string line = reader.next("block row");
        std::string_view rest(line);
        for (std::size_t j = 0; j < cols; ++j)
        {
            const auto comma = rest.find(',');
            const auto field = rest.substr(0, comma);
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
            if (ec != std::errc() || ptr != field.data() + field.size()) reader.fail("malformed value '" + std::string(field) + "'");
            values[i * cols + j] = v;
            if ((comma == std::string_view::npos) != (j + 1 == cols)) reader.fail("wrong number of values");
            if (comma != std::string_view::npos) rest.remove_prefix(comma + 1);
        }
    }
}

}  // namespace

void write_model(std::ostream& out, const PretrainedModel& model)
{
    const auto& p = model.params;
    const auto d = p.w1.rows, h = p.w1.cols, c = p.w_out.cols;
    out << "#hiltta-model v1\n";
    out << "D=" << d << " H=" << h << " C=" << c << '\n';
    out << "epochs=" << model.epochs << " train_accuracy=" << fmt17(model.train_accuracy) << '\n';
    write_block(out, "w1", p.w1.data, d, h);
    write_block(out, "b1", p.b1, 1, h);
    write_block(out, "gamma", p.gamma, 1, h);
    write_block(out, "beta", p.beta, 1, h);
    write_block(out, "w_out", p.w_out.data, h, c);
    write_block(out, "b_out", p.b_out, 1, c);
    write_block(out, "running_mean", model.running.mean, 1, h);
    write_block(out, "running_var", model.running.var, 1, h);
}

void write_model(const std::filesystem::path& path, const PretrainedModel& model)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_model(out, model);
}

PretrainedModel read_model(std::istream& in)
{
    LineReader reader{in};
    if (reader.next("header") != "#hiltta-model v1") reader.fail("expected '#hiltta-model v1'");
    int d = 0, h = 0, c = 0;
    if (std::sscanf(reader.next("dimensions").c_str(), "D=%d H=%d C=%d", &d, &h, &c) != 3) reader.fail("expected 'D=<d> H=<h> C=<c>'");
    PretrainedModel model;
    {
        const std::string meta = reader.next("metadata");
        const auto sp = meta.find(" train_accuracy=");
        if (meta.rfind("epochs=", 0) != 0 || sp == std::string::npos) reader.fail("expected 'epochs=<n> train_accuracy=<a>'");
        model.epochs = std::stoi(meta.substr(7, sp - 7));
        const std::string acc = meta.substr(sp + 16);
        std::from_chars(acc.data(), acc.data() + acc.size(), model.train_accuracy);
    }
    model.params = ModelParams::zeros(d, h, c);
    auto& p = model.params;
    const auto du = static_cast<std::size_t>(d), hu = static_cast<std::size_t>(h), cu = static_cast<std::size_t>(c);
    read_block(reader, "w1", p.w1.data, du, hu);
    read_block(reader, "b1", p.b1, 1, hu);
    read_block(reader, "gamma", p.gamma, 1, hu);
    read_block(reader, "beta", p.beta, 1, hu);
    read_block(reader, "w_out", p.w_out.data, hu, cu);
    read_block(reader, "b_out", p.b_out, 1, cu);
    model.running.mean.assign(hu, 0.0);
    model.running.var.assign(hu, 0.0);
    read_block(reader, "running_mean", model.running.mean, 1, hu);
    read_block(reader, "running_var", model.running.var, 1, hu);
    return model;
}

PretrainedModel read_model(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_model(in);
}

std::uint64_t checksum(const ModelParams& params)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& block : params.blocks())
        for (double v : block.values)
        {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof v);
            for (unsigned char b : bytes)
            {
                h ^= b;
                h *= 0x100000001b3ULL;
            }
        }
    return h;
}

}  // namespace hiltta
