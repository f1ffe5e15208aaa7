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
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "hiltta/domain.hpp"
#include "hiltta/linalg.hpp"

namespace hiltta
{
/// input -> linear -> relu -> batch normalization -> linear -> softmax
///
/// All trainable weights. The same shape doubles as the gradient container.
struct ModelParams
{
    Matrix w1;                   ///< D x H
    std::vector<double> b1;      ///< H
    std::vector<double> gamma;   ///< H, normalization scale
    std::vector<double> beta;    ///< H, normalization shift
    Matrix w_out;                ///< H x C
    std::vector<double> b_out;   ///< C

    static ModelParams zeros(int input_dim, int hidden_dim, int num_classes);

    [[nodiscard]] int input_dim() const { return static_cast<int>(w1.rows); }
    [[nodiscard]] int hidden_dim() const { return static_cast<int>(w1.cols); }
    [[nodiscard]] int num_classes() const { return static_cast<int>(w_out.cols); }

    struct Block
    {
        std::string_view name;
        std::span<double> values;
    };
    struct ConstBlock
    {
        std::string_view name;
        std::span<const double> values;
    };
    /// Blocks in checkpoint order: w1, b1, gamma, beta, w_out, b_out.
    std::vector<Block> blocks();
    [[nodiscard]] std::vector<ConstBlock> blocks() const;

    [[nodiscard]] std::size_t num_values() const;

    bool operator==(const ModelParams&) const = default;
};

/// Source-domain statistics of the hidden activations, used when a batch has a
/// single sample and batch statistics are undefined.
struct NormStats
{
    std::vector<double> mean;
    std::vector<double> var;

    bool operator==(const NormStats&) const = default;
};

inline constexpr double kNormEpsilon = 1e-5;

/// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardCache
{
    Matrix input;     ///< N x D
    Matrix pre;       ///< N x H, W1 x + b1
    Matrix hidden;    ///< N x H, relu(pre)
    std::vector<double> mean;
    std::vector<double> var;
    Matrix normalized;  ///< N x H, standardized hidden
    Matrix features;    ///< N x H, gamma * normalized + beta
    Matrix logits;      ///< N x C
    Matrix probs;       ///< N x C
    bool batch_stats = true;
};

/// Forward pass over a batch (rows of `inputs`). Batches of one sample fall
/// back to `running`; throws when that is missing.
ForwardCache forward(const ModelParams& params, const Matrix& inputs, const NormStats* running = nullptr);

struct ForwardResult
{
    std::vector<ProbVector> posteriors;
    std::vector<FeatureVector> features;
    ForwardCache cache;
};

ForwardResult forward_batch(const ModelParams& params, std::span<const FeatureVector> inputs,
                            const NormStats* running = nullptr);

/// Which parameter blocks receive gradient.
enum class ParamMask
{
    All,
    NormalizationOnly,  ///< gamma and beta
};

struct LossGrad
{
    double loss = 0.0;
    ModelParams grad;
};

/// Backpropagate d(loss)/d(logits) through the cached forward pass.
ModelParams backward(const ModelParams& params, const ForwardCache& cache, const Matrix& dlogits,
                     ParamMask mask = ParamMask::All);

/// Mean cross-entropy over rows whose target is >= 0. Rows with target -1
/// still contribute to the batch statistics.
LossGrad ce_loss_grad(const ModelParams& params, const Matrix& inputs, std::span<const int> targets,
                      const NormStats* running = nullptr);
LossGrad ce_loss_grad(const ModelParams& params, std::span<const LabeledExample> labeled,
                      const NormStats* running = nullptr);

/// Mean posterior entropy; gradient zeroed outside `mask`.
LossGrad entropy_loss_grad(const ModelParams& params, const Matrix& inputs, ParamMask mask,
                           const NormStats* running = nullptr);

/// Hard pseudo-label cross-entropy over samples with entropy <= tau * ln C.
/// Pseudo-labels and the pass mask are constants. No passing sample gives a
/// zero loss and a zero gradient.
LossGrad pl_loss_grad(const ModelParams& params, const Matrix& inputs, double tau,
                      const NormStats* running = nullptr);

/// params - lr * grad. Throws naming the block if grad holds a non-finite value.
ModelParams sgd_step(const ModelParams& params, const ModelParams& grad, double lr);

/// First and second moment estimates of Adam, shaped like the parameters.
struct AdamState
{
    ModelParams m;
    ModelParams v;
    int step = 0;

    static AdamState zeros_like(const ModelParams& params);
    bool operator==(const AdamState&) const = default;
};

struct AdamOptions
{
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// One bias-corrected Adam update. Blocks whose gradient and moments are all
/// zero do not move. Same non-finite check as sgd_step.
std::pair<ModelParams, AdamState> adam_step(const ModelParams& params, const ModelParams& grad, const AdamState& state,
                                            double lr, const AdamOptions& options = {});

struct PretrainOptions
{
    int hidden_dim = 32;
    double learning_rate = 0.5;
    int max_epochs = 2000;
    double target_accuracy = 0.98;
    double min_accuracy = 0.90;
};

struct PretrainedModel
{
    ModelParams params;
    NormStats running;
    int epochs = 0;
    double train_accuracy = 0.0;

    bool operator==(const PretrainedModel&) const = default;
};

/// Full-batch gradient descent on the source set, then capture the running
/// statistics of the hidden layer over the whole set.
PretrainedModel pretrain_source(const std::vector<LabeledExample>& dataset, int num_classes, Rng& rng,
                                const PretrainOptions& options = {});

/// Fraction of rows whose argmax matches the label, evaluated in chunks of
/// `batch_size` with batch statistics.
double accuracy(const ModelParams& params, std::span<const LabeledExample> data, int batch_size,
                const NormStats* running = nullptr);

void write_model(std::ostream& out, const PretrainedModel& model);
void write_model(const std::filesystem::path& path, const PretrainedModel& model);
PretrainedModel read_model(std::istream& in);
PretrainedModel read_model(const std::filesystem::path& path);

/// FNV-1a over the raw bytes of every parameter.
std::uint64_t checksum(const ModelParams& params);

}  // namespace hiltta
