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

#include "hiltta/stream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace hiltta
{
namespace
{
// Magnitudes at corruption_strength == 1.
constexpr double kRotationMix = 1.4;
constexpr double kLogScaleRange = 0.7;
constexpr double kShiftSigma = 1.0;
constexpr double kNoiseMin = 0.9;
constexpr double kNoiseMax = 1.1;

constexpr std::uint64_t kMeansTag = 0x6D65616E73ULL;
constexpr std::uint64_t kCorruptionTag = 0x636F7272ULL;

// Modified Gram-Schmidt over columns, run twice for orthogonality near 1e-15.
Matrix orthonormalize_columns(Matrix m)
{
    for (int pass = 0; pass < 2; ++pass)
        for (std::size_t j = 0; j < m.cols; ++j)
        {
            for (std::size_t k = 0; k < j; ++k)
            {
                double dot = 0.0;
                for (std::size_t i = 0; i < m.rows; ++i) dot += m(i, k) * m(i, j);
                for (std::size_t i = 0; i < m.rows; ++i) m(i, j) -= dot * m(i, k);
            }
            double norm = 0.0;
            for (std::size_t i = 0; i < m.rows; ++i) norm += m(i, j) * m(i, j);
            norm = std::sqrt(norm);
            if (norm < 1e-12) throw std::runtime_error("orthonormalize_columns: rank deficient");
            for (std::size_t i = 0; i < m.rows; ++i) m(i, j) /= norm;
        }
    return m;
}

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* what)
{
    T value{};
    const auto* begin = field.data();
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        throw ParseError(std::string("malformed ") + what + " '" + std::string(field) + "'", line);
    return value;
}

}  // namespace

void StreamSpec::validate() const
{
    if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
    if (input_dim < 2) throw std::invalid_argument("input_dim must be >= 2");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (num_domains < 1) throw std::invalid_argument("num_domains must be >= 1");
    if (batches_per_domain < 1) throw std::invalid_argument("batches_per_domain must be >= 1");
    if (!(class_separation > 0.0)) throw std::invalid_argument("class_separation must be > 0");
    if (!(corruption_strength >= 0.0)) throw std::invalid_argument("corruption_strength must be >= 0");
}

FeatureVector DomainCorruption::apply(std::span<const double> x, Rng& rng) const
{
    FeatureVector scaled(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) scaled[i] = scale[i] * x[i];
    FeatureVector out = matvec(rotation, scaled);
    for (std::size_t i = 0; i < out.size(); ++i)
    {
        out[i] += shift[i];
        if (noise_sigma > 0.0) out[i] += noise_sigma * rng.normal();
    }
    return out;
}

std::size_t LabeledStream::num_samples() const
{
    std::size_t n = 0;
    for (const auto& b : batches) n += b.size();
    return n;
}

std::vector<FeatureVector> class_means(const StreamSpec& spec)
{
    spec.validate();
    const auto dim = static_cast<std::size_t>(spec.input_dim);
    const auto classes = static_cast<std::size_t>(spec.num_classes);
    Rng rng = Rng(spec.seed).fork(kMeansTag);
    // Orthonormal directions scaled by sep/sqrt(2) are pairwise exactly sep apart.
    const double radius = spec.class_separation / std::sqrt(2.0);
    std::vector<FeatureVector> means(classes, FeatureVector(dim, 0.0));

    if (dim >= classes)
    {
        Matrix basis(dim, classes);
        for (double& v : basis.data) v = rng.normal();
        basis = orthonormalize_columns(std::move(basis));
        for (std::size_t c = 0; c < classes; ++c)
            for (std::size_t i = 0; i < dim; ++i) means[c][i] = radius * basis(i, c);
    }
    else
    {
        std::cerr << "warning: input_dim " << dim << " < num_classes " << classes
                  << "; class means use random unit directions\n";
        for (auto& m : means)
        {
            double norm = 0.0;
            for (double& v : m)
            {
                v = rng.normal();
                norm += v * v;
            }
            norm = std::sqrt(norm);
            for (double& v : m) v *= radius / norm;
        }
    }

    // Centering keeps pairwise distances and puts the mixture mean at 0.
    FeatureVector centroid(dim, 0.0);
    for (const auto& m : means)
        for (std::size_t i = 0; i < dim; ++i) centroid[i] += m[i] / static_cast<double>(classes);
    for (auto& m : means)
        for (std::size_t i = 0; i < dim; ++i) m[i] -= centroid[i];
    return means;
}

DomainCorruption make_corruption(const StreamSpec& spec, int d)
{
    const auto dim = static_cast<std::size_t>(spec.input_dim);
    const double s = spec.corruption_strength;
    Rng rng = Rng(spec.seed).fork(kCorruptionTag + static_cast<std::uint64_t>(d));

    DomainCorruption out;
    Matrix mix = Matrix::identity(dim);
    for (double& v : mix.data) v += s * kRotationMix * rng.normal() / std::sqrt(static_cast<double>(dim));
    out.rotation = orthonormalize_columns(std::move(mix));
    // Fix column signs so strength 0 gives exactly the identity.
    for (std::size_t j = 0; j < dim; ++j)
        if (out.rotation(j, j) < 0.0)
            for (std::size_t i = 0; i < dim; ++i) out.rotation(i, j) = -out.rotation(i, j);

    out.scale.resize(dim);
    for (double& v : out.scale) v = std::clamp(std::exp(s * kLogScaleRange * (2.0 * rng.uniform() - 1.0)), 0.25, 4.0);
    out.shift.resize(dim);
    for (double& v : out.shift) v = s * kShiftSigma * rng.normal();
    out.noise_sigma = s * (kNoiseMin + (kNoiseMax - kNoiseMin) * rng.uniform());
    return out;
}

std::vector<LabeledExample> gen_source_dataset(const StreamSpec& spec, int n_per_class, Rng& rng)
{
    if (n_per_class < 1) throw std::invalid_argument("gen_source_dataset: n_per_class must be >= 1");
    const auto means = class_means(spec);
    const int total = n_per_class * spec.num_classes;
    std::vector<LabeledExample> out;
    out.reserve(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i)
    {
        LabeledExample ex;
        ex.sample_id = i;
        ex.y = i % spec.num_classes;
        ex.domain_index = 0;
        const auto& mu = means[static_cast<std::size_t>(ex.y)];
        ex.x.resize(mu.size());
        for (std::size_t k = 0; k < mu.size(); ++k) ex.x[k] = mu[k] + rng.normal();
        out.push_back(std::move(ex));
    }
    return out;
}

LabeledStream gen_continual_stream(const StreamSpec& spec, Rng& rng)
{
    spec.validate();
    const auto means = class_means(spec);
    std::vector<DomainCorruption> corruptions;
    for (int d = 0; d < spec.num_domains; ++d) corruptions.push_back(make_corruption(spec, d));

    LabeledStream out;
    SampleId next_id = 0;
    for (int t = 0; t < spec.num_batches(); ++t)
    {
        const int domain = t / spec.batches_per_domain;
        Batch batch;
        batch.batch_index = t;
        batch.samples.reserve(static_cast<std::size_t>(spec.batch_size));
        for (int i = 0; i < spec.batch_size; ++i)
        {
            const int label = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.num_classes)));
            const auto& mu = means[static_cast<std::size_t>(label)];
            FeatureVector clean(mu.size());
            for (std::size_t k = 0; k < mu.size(); ++k) clean[k] = mu[k] + rng.normal();
            Sample s;
            s.id = next_id++;
            s.domain_index = domain;
            s.x = corruptions[static_cast<std::size_t>(domain)].apply(clean, rng);
            out.truth.emplace(s.id, label);
            batch.samples.push_back(std::move(s));
        }
        out.batches.push_back(std::move(batch));
    }
    return out;
}

std::vector<LabeledExample> stream_to_examples(const LabeledStream& stream)
{
    std::vector<LabeledExample> rows;
    rows.reserve(stream.num_samples());
    for (const auto& b : stream.batches)
        for (const auto& s : b.samples) rows.push_back({s.id, s.x, stream.truth.at(s.id), s.domain_index});
    return rows;
}

LabeledStream examples_to_stream(const std::vector<LabeledExample>& rows, int batch_size)
{
    if (batch_size < 1) throw std::invalid_argument("examples_to_stream: batch_size must be >= 1");
    LabeledStream out;
    for (std::size_t i = 0; i < rows.size(); ++i)
    {
        if (i % static_cast<std::size_t>(batch_size) == 0)
        {
            out.batches.emplace_back();
            out.batches.back().batch_index = static_cast<int>(out.batches.size()) - 1;
        }
        const auto& r = rows[i];
        out.batches.back().samples.push_back({r.sample_id, r.x, r.domain_index});
        out.truth[r.sample_id] = r.y;
    }
    return out;
}

void write_dataset(std::ostream& out, const std::vector<LabeledExample>& examples, int input_dim, int num_classes)
{
    out << "#hiltta-dataset v1 D=" << input_dim << " C=" << num_classes << '\n';
    for (const auto& ex : examples)
    {
        if (static_cast<int>(ex.x.size()) != input_dim)
            throw DimensionError("write_dataset: example " + std::to_string(ex.sample_id) + " has wrong dimension");
        out << ex.domain_index << ',' << ex.y;
        for (double v : ex.x) out << ',' << format_double(v);
        out << '\n';
    }
}

void write_dataset(const std::filesystem::path& path, const std::vector<LabeledExample>& examples, int input_dim,
                   int num_classes)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_dataset(out, examples, input_dim, num_classes);
}

DatasetFile read_dataset(std::istream& in)
{
    DatasetFile file;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("missing header", 1);
    ++lineno;
    {
        std::istringstream hs(line);
        std::string magic, version, dtok, ctok;
        hs >> magic >> version >> dtok >> ctok;
        if (magic != "#hiltta-dataset" || version != "v1" || dtok.rfind("D=", 0) != 0 || ctok.rfind("C=", 0) != 0)
            throw ParseError("expected '#hiltta-dataset v1 D=<d> C=<c>'", lineno);
        file.input_dim = parse_number<int>(std::string_view(dtok).substr(2), lineno, "dimension");
        file.num_classes = parse_number<int>(std::string_view(ctok).substr(2), lineno, "class count");
    }
    SampleId id = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        while (true)
        {
            const auto comma = rest.find(',');
            fields.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (fields.size() != static_cast<std::size_t>(file.input_dim) + 2)
            throw ParseError("expected " + std::to_string(file.input_dim + 2) + " fields, got " +
                                 std::to_string(fields.size()),
                             lineno);
        LabeledExample ex;
        ex.sample_id = id++;
        ex.domain_index = parse_number<int>(fields[0], lineno, "domain index");
        ex.y = parse_number<int>(fields[1], lineno, "label");
        if (ex.y < 0 || ex.y >= file.num_classes) throw ParseError("label out of range", lineno);
        ex.x.reserve(static_cast<std::size_t>(file.input_dim));
        for (std::size_t k = 2; k < fields.size(); ++k) ex.x.push_back(parse_number<double>(fields[k], lineno, "feature"));
        file.examples.push_back(std::move(ex));
    }
    return file;
}

DatasetFile read_dataset(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_dataset(in);
}

}  // namespace hiltta
