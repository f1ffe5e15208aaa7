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

#include "hiltta/tta.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <tuple>

namespace hiltta
{
namespace
{
std::string short_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

Method parse_method(std::string_view name)
{
    if (name == "tent" || name == "TENT") return Method::Tent;
    if (name == "pl" || name == "PL") return Method::PL;
    throw std::invalid_argument("unknown method '" + std::string(name) + "' (expected tent or pl)");
}

std::string_view to_string(Method m) { return m == Method::Tent ? "tent" : "pl"; }

void HyperParam::validate() const
{
    if (!learning_rate && !entropy_threshold) throw std::invalid_argument("hyper-parameter has no value");
    if (learning_rate && !(*learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
    if (entropy_threshold && !(*entropy_threshold > 0.0 && *entropy_threshold <= 1.0))
        throw std::invalid_argument("entropy threshold must be in (0, 1]");
}

std::string HyperParam::label() const
{
    std::string out;
    if (learning_rate) out += "lr=" + short_double(*learning_rate);
    if (entropy_threshold)
    {
        if (!out.empty()) out += ';';
        out += "tau=" + short_double(*entropy_threshold);
    }
    return out;
}

void CandidatePool::validate() const
{
    if (entries.empty()) throw std::invalid_argument("candidate pool is empty");
    for (std::size_t i = 0; i < entries.size(); ++i)
    {
        entries[i].validate();
        if (method == Method::Tent && !entries[i].learning_rate)
            throw std::invalid_argument("TENT pool entry " + std::to_string(i) + " has no learning rate");
        if (method == Method::PL && !entries[i].entropy_threshold)
            throw std::invalid_argument("PL pool entry " + std::to_string(i) + " has no entropy threshold");
        for (std::size_t j = 0; j < i; ++j)
            if (entries[j] == entries[i]) throw std::invalid_argument("duplicate pool entry " + entries[i].label());
    }
}

CandidatePool default_pool(Method method)
{
    CandidatePool pool{method, {}};
    if (method == Method::Tent)
        for (double lr : {5e-5, 1e-4, 2.5e-4, 5e-4, 1e-3, 2.5e-3, 5e-3}) pool.entries.push_back({lr, std::nullopt});
    else
        for (double tau : {0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0}) pool.entries.push_back({std::nullopt, tau});
    return pool;
}

CandidatePool dual_pool(Method method)
{
    if (method != Method::PL) throw std::invalid_argument("dual selection is defined for PL only");
    CandidatePool pool{method, {}};
    for (double lr : {1e-5, 1e-4, 1e-3, 1e-2, 1e-1})
        for (double tau : {0.1, 0.2, 0.4, 0.6, 0.8}) pool.entries.push_back({lr, tau});
    return pool;
}

std::size_t default_index(Method method) { return method == Method::Tent ? 4 : 3; }

Optimizer parse_optimizer(std::string_view name)
{
    if (name == "sgd") return Optimizer::Sgd;
    if (name == "adam") return Optimizer::Adam;
    throw std::invalid_argument("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

std::string_view to_string(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "adam"; }

AdaptedModel adapt_candidate(const AdaptedModel& prev, const Matrix& unlabeled, const HyperParam& hp, Method method,
                             const AdaptOptions& options, const NormStats* running)
{
    if (unlabeled.rows == 0) throw std::invalid_argument("adapt_candidate: no unlabeled samples");
    AdaptedModel out = prev;
    if (method == Method::Tent && !hp.learning_rate)
        throw std::invalid_argument("adapt_candidate: TENT needs a learning rate");
    if (method == Method::PL && !hp.entropy_threshold)
        throw std::invalid_argument("adapt_candidate: PL needs an entropy threshold");
    const double lr = method == Method::Tent ? *hp.learning_rate : hp.learning_rate.value_or(options.pl_learning_rate);
    const Optimizer opt = method == Method::Tent ? options.tent_optimizer : options.pl_optimizer;

    for (int s = 0; s < options.steps; ++s)
    {
        const LossGrad lg = method == Method::Tent
                                ? entropy_loss_grad(out.params, unlabeled, ParamMask::NormalizationOnly, running)
                                : pl_loss_grad(out.params, unlabeled, *hp.entropy_threshold, running);
        if (opt == Optimizer::Sgd)
            out.params = sgd_step(out.params, lg.grad, lr);
        else
            std::tie(out.params, out.optimizer) = adam_step(out.params, lg.grad, out.optimizer, lr);
    }
    return out;
}

ModelParams adapt_candidate(const ModelParams& prev, const Matrix& unlabeled, const HyperParam& hp, Method method,
                            const AdaptOptions& options, const NormStats* running)
{
    return adapt_candidate(AdaptedModel{prev, AdamState::zeros_like(prev)}, unlabeled, hp, method, options, running)
        .params;
}

}  // namespace hiltta
