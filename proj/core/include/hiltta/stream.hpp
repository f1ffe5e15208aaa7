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
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "hiltta/domain.hpp"
#include "hiltta/linalg.hpp"

namespace hiltta
{
/// Shape of the synthetic benchmark: a Gaussian class mixture (the source
/// domain) followed by a sequence of affinely corrupted target domains.
struct StreamSpec
{
    int num_classes = 5;
    int input_dim = 16;
    double class_separation = 6.0;
    int num_domains = 8;
    int batches_per_domain = 15;
    int batch_size = 200;
    double corruption_strength = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
    [[nodiscard]] int num_batches() const { return num_domains * batches_per_domain; }
};

/// x -> rotation * (scale .* x) + shift + N(0, noise_sigma^2 I)
struct DomainCorruption
{
    Matrix rotation;
    std::vector<double> scale;
    std::vector<double> shift;
    double noise_sigma = 0.0;

    [[nodiscard]] FeatureVector apply(std::span<const double> x, Rng& rng) const;
};

/// Test stream in arrival order plus the labels only labelers and scorers see.
struct LabeledStream
{
    std::vector<Batch> batches;
    GroundTruth truth;

    [[nodiscard]] std::size_t num_samples() const;
};

class ParseError : public std::runtime_error
{
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line)
    {
    }
    [[nodiscard]] std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Class means: C points with pairwise distance class_separation, seeded by
/// spec.seed alone so the source set and the stream share them.
std::vector<FeatureVector> class_means(const StreamSpec& spec);

/// Corruption for domain `d`; identity with zero noise when strength is 0.
DomainCorruption make_corruption(const StreamSpec& spec, int d);

/// Balanced source set, classes interleaved (label of example i is i mod C).
std::vector<LabeledExample> gen_source_dataset(const StreamSpec& spec, int n_per_class, Rng& rng);

/// M * T_d batches; batch t belongs to domain t / T_d. Sample ids run 0..N-1.
LabeledStream gen_continual_stream(const StreamSpec& spec, Rng& rng);

/// Flatten a stream into dataset rows (domain, label, features) in arrival order.
std::vector<LabeledExample> stream_to_examples(const LabeledStream& stream);
/// Regroup rows into consecutive batches of `batch_size` (last may be short).
LabeledStream examples_to_stream(const std::vector<LabeledExample>& rows, int batch_size);

/// `#hiltta-dataset v1 D=<d> C=<c>` then `domain,label,f1,...,fD` per line.
void write_dataset(const std::filesystem::path& path, const std::vector<LabeledExample>& examples, int input_dim,
                   int num_classes);
void write_dataset(std::ostream& out, const std::vector<LabeledExample>& examples, int input_dim, int num_classes);

struct DatasetFile
{
    int input_dim = 0;
    int num_classes = 0;
    std::vector<LabeledExample> examples;
};

/// Rows get sample ids 0..n-1 in file order.
DatasetFile read_dataset(const std::filesystem::path& path);
DatasetFile read_dataset(std::istream& in);

}  // namespace hiltta
