// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "invnorm/classifier.hpp"
#include "invnorm/dataset.hpp"
#include "invnorm/model.hpp"

namespace invnorm {

enum class ModelKind { Baseline, InvNorm };

const char* model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

struct HyperParams {
    int epochs = 30;
    double lr = 0.01;
    double momentum = 0.9;
    int batch_size = 64;
    std::uint64_t seed = 1;
    // transform sizing (InvNorm variant only)
    int flows_per_block = 5;
    int coupling_hidden = 32;
};

// Metrics of one trained model evaluated under the leave-one-domain protocol.
struct EvalReport {
    std::string model_kind;
    std::string held_out_domain;
    std::uint64_t seed = 0;
    std::map<std::string, double> per_domain_accuracy;
    double held_out_accuracy = 0.0;
    double macro_f1 = 0.0;             // on the held-out domain
    double train_accuracy = 0.0;       // over the three source domains
    double feature_style_gap = 0.0;     // of this model's transform output
    double feature_style_gap_raw = 0.0;  // of the raw images, for comparison
    double final_loss = 0.0;
    long long params_total = 0;
    int epochs = 0;

    std::string to_json() const;  // stable field order, no timestamps
    static EvalReport from_json(const std::string& text);
};

// A trained classifier plus, for the InvNorm variant, the transform in
// front of it.
struct TrainedModel {
    ModelKind kind = ModelKind::Baseline;
    std::unique_ptr<SmallCnn> classifier;
    std::unique_ptr<InvNormModel> transform;  // null for the baseline
    double final_train_loss = 0.0;

    // Applies the transform (identity for the baseline).
    Tensor transform_input(const Tensor& x);
    Tensor logits(const Tensor& x);
    long long params_total() const;
};

// Harness checkpoint ("INVH"): classifier config and weights, plus the
// embedded InvNorm checkpoint for the InvNorm variant.
void save_trained(const TrainedModel& m, const std::string& path);
TrainedModel load_trained(const std::string& path);

// Trains one variant on every domain except held_out with SGD (momentum 0.9)
// under a cosine learning-rate schedule. Throws ConfigError for an unknown
// domain or bad hyperparameters, TrainingError (with the epoch index) when
// the loss diverges.
TrainedModel train_model(ModelKind kind, const DomainDataset& ds, const std::string& held_out,
                         const HyperParams& hp,
                         const std::function<void(int, double)>& on_epoch = {});

// Mean pairwise L2 distance between per-domain centroids of per-sample
// per-channel (mean, std) statistics of the transform's output.
double feature_style_gap(const std::function<Tensor(const Tensor&)>& transform,
                         const DomainDataset& ds);

EvalReport evaluate(TrainedModel& m, const DomainDataset& ds, const std::string& held_out,
                    std::uint64_t seed);

// The full protocol step: trains baseline and InvNorm variants on the same
// split and evaluates both on the held-out domain.
std::pair<EvalReport, EvalReport> train_both(const DomainDataset& ds, const std::string& held_out,
                                             const HyperParams& hp);

}  // namespace invnorm
