// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#include "invnorm/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

#include "invnorm/kernels.hpp"
#include "invnorm/serialize.hpp"

namespace invnorm {

namespace k = kernels;
using ordered_json = nlohmann::ordered_json;

namespace {
constexpr std::uint32_t kHarnessMagic = 0x48564e49u;  // "INVH"
constexpr std::uint32_t kHarnessVersion = 1;
constexpr std::uint64_t kCnnSeedTag = 0x636e6eULL;
constexpr std::uint64_t kFlowSeedTag = 0x666c6f77ULL;
constexpr std::uint64_t kShuffleSeedTag = 0x73687566ULL;
}  // namespace

const char* model_kind_name(ModelKind kind) {
    return kind == ModelKind::Baseline ? "baseline" : "invnorm";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "baseline") return ModelKind::Baseline;
    if (name == "invnorm") return ModelKind::InvNorm;
    throw ConfigError("unknown model kind '" + name + "' (expected baseline or invnorm)");
}

Tensor TrainedModel::transform_input(const Tensor& x) {
    if (transform == nullptr) return x;
    return transform->forward(x).output;
}

Tensor TrainedModel::logits(const Tensor& x) {
    return classifier->logits(transform_input(x));
}

long long TrainedModel::params_total() const {
    long long n = static_cast<long long>(classifier->param_count());
    if (transform != nullptr) n += static_cast<long long>(transform->param_count());
    return n;
}

// Friend of SmallCnn for checkpoint IO.
class HarnessSerializer {
public:
    static void write(const TrainedModel& m, ByteWriter& w) {
        w.put_u32(kHarnessMagic);
        w.put_u32(kHarnessVersion);
        w.put_u8(m.kind == ModelKind::InvNorm ? 1 : 0);
        const ClassifierConfig& c = m.classifier->cfg_;
        w.put_u32(static_cast<std::uint32_t>(c.in_channels));
        w.put_u32(static_cast<std::uint32_t>(c.classes));
        w.put_u32(static_cast<std::uint32_t>(c.width1));
        w.put_u32(static_cast<std::uint32_t>(c.width2));
        w.put_u32(static_cast<std::uint32_t>(c.width3));
        for (const Param* p : {&m.classifier->w1_, &m.classifier->b1_, &m.classifier->w2_,
                               &m.classifier->b2_, &m.classifier->w3_, &m.classifier->b3_,
                               &m.classifier->fw_, &m.classifier->fb_}) {
            w.put_floats(p->value.data(), p->value.numel());
        }
        if (m.kind == ModelKind::InvNorm) {
            std::vector<unsigned char> blob = model_to_bytes(*m.transform);
            w.put_u64(blob.size());
            w.put_bytes(blob.data(), blob.size());
        }
    }

    static TrainedModel read(ByteReader& r) {
        if (r.get_u32() != kHarnessMagic) {
            throw FormatError("not a harness checkpoint (bad magic bytes)");
        }
        const std::uint32_t version = r.get_u32();
        if (version != kHarnessVersion) {
            throw FormatError("unsupported harness checkpoint version " +
                              std::to_string(version));
        }
        TrainedModel m;
        m.kind = r.get_u8() != 0 ? ModelKind::InvNorm : ModelKind::Baseline;
        ClassifierConfig c;
        c.in_channels = static_cast<int>(r.get_u32());
        c.classes = static_cast<int>(r.get_u32());
        c.width1 = static_cast<int>(r.get_u32());
        c.width2 = static_cast<int>(r.get_u32());
        c.width3 = static_cast<int>(r.get_u32());
        m.classifier = std::make_unique<SmallCnn>(c, 0);
        for (Param* p : {&m.classifier->w1_, &m.classifier->b1_, &m.classifier->w2_,
                         &m.classifier->b2_, &m.classifier->w3_, &m.classifier->b3_,
                         &m.classifier->fw_, &m.classifier->fb_}) {
            std::vector<float> v(p->value.numel());
            r.get_floats(v.data(), v.size());
            p->value = Tensor::from_data_unchecked(p->value.shape(), std::move(v));
        }
        if (m.kind == ModelKind::InvNorm) {
            const std::uint64_t len = r.get_u64();
            if (len > r.remaining()) throw FormatError("embedded checkpoint overruns the file");
            std::vector<unsigned char> blob(len);
            for (std::uint64_t i = 0; i < len; ++i) blob[i] = r.get_u8();
            m.transform = std::make_unique<InvNormModel>(model_from_bytes(std::move(blob)));
        }
        if (r.remaining() != 0) throw FormatError("harness checkpoint has trailing bytes");
        return m;
    }
};

void save_trained(const TrainedModel& m, const std::string& path) {
    ByteWriter w;
    HarnessSerializer::write(m, w);
    w.finish_with_crc();
    write_file_bytes(path, w.bytes());
}

TrainedModel load_trained(const std::string& path) {
    ByteReader r(read_file_bytes(path));
    r.verify_crc("harness checkpoint");
    return HarnessSerializer::read(r);
}

TrainedModel train_model(ModelKind kind, const DomainDataset& ds, const std::string& held_out,
                         const HyperParams& hp, const std::function<void(int, double)>& on_epoch) {
    const int held_id = ds.domain_id(held_out);
    if (held_id < 0) {
        throw ConfigError("held-out domain '" + held_out + "' is not in the dataset");
    }
    if (!(hp.lr > 0.0)) throw ConfigError("train: lr must be > 0");
    if (hp.epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (hp.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (hp.momentum < 0.0 || hp.momentum >= 1.0) {
        throw ConfigError("train: momentum must lie in [0, 1)");
    }

    TrainedModel m;
    m.kind = kind;
    ClassifierConfig ccfg;
    ccfg.in_channels = ds.images.shape().c;
    ccfg.classes = ds.class_count;
    m.classifier = std::make_unique<SmallCnn>(ccfg, Rng::mix(hp.seed, kCnnSeedTag));
    if (kind == ModelKind::InvNorm) {
        ModelConfig mcfg{ds.images.shape().c, hp.flows_per_block, hp.coupling_hidden};
        m.transform = std::make_unique<InvNormModel>(
            InvNormModel::random_init(mcfg, Rng::mix(hp.seed, kFlowSeedTag)));
    }

    std::vector<Param*> params = m.classifier->params();
    if (m.transform != nullptr) {
        for (Param* p : m.transform->params()) params.push_back(p);
    }
    std::vector<std::vector<float>> velocity(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i].assign(params[i]->value.numel(), 0.0f);
    }

    std::vector<int> train_idx = ds.indices_excluding_domain(held_id);
    const std::size_t n = train_idx.size();

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        // cosine schedule from lr down to 0 across the run
        const double lr_e =
            hp.lr * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(epoch) / hp.epochs));
        Rng shuffle_rng(Rng::mix(Rng::mix(hp.seed, kShuffleSeedTag),
                                 static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(shuffle_rng.uniform_int(
                0, static_cast<int>(i) - 1));
            std::swap(train_idx[i - 1], train_idx[j]);
        }

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t off = 0; off < n; off += static_cast<std::size_t>(hp.batch_size)) {
            const std::size_t count =
                std::min(static_cast<std::size_t>(hp.batch_size), n - off);
            auto [batch, labels] = ds.gather(train_idx, off, count);
            Tape t;
            Var x = t.input(std::move(batch));
            Var h = m.transform != nullptr ? m.transform->apply(t, x) : x;
            Var logits = m.classifier->apply(t, h);
            Var loss = t_softmax_cross_entropy(t, logits, labels);
            const float loss_value = t.value(loss).data()[0];
            if (!std::isfinite(loss_value)) {
                throw TrainingError("loss diverged at epoch " + std::to_string(epoch));
            }
            epoch_loss += loss_value;
            ++batches;
            t.backward(loss);
            for (std::size_t pi = 0; pi < params.size(); ++pi) {
                Param* p = params[pi];
                if (!p->has_grad()) continue;
                std::vector<float>& vel = velocity[pi];
                std::vector<float> next(p->value.numel());
                const float* val = p->value.data();
                const float* g = p->grad.data();
                for (std::size_t e = 0; e < next.size(); ++e) {
                    vel[e] = static_cast<float>(hp.momentum) * vel[e] + g[e];
                    next[e] = val[e] - static_cast<float>(lr_e) * vel[e];
                }
                p->value = Tensor::from_data_unchecked(p->value.shape(), std::move(next));
                p->zero_grad();
            }
        }
        m.final_train_loss = batches > 0 ? epoch_loss / static_cast<double>(batches) : 0.0;
        if (on_epoch) on_epoch(epoch, m.final_train_loss);
    }
    return m;
}

double feature_style_gap(const std::function<Tensor(const Tensor&)>& transform,
                         const DomainDataset& ds) {
    const int ndom = static_cast<int>(ds.domain_names.size());
    const int channels = ds.images.shape().c;
    // per-domain accumulated (mu, sigma) centroids
    std::vector<std::vector<double>> centroid(static_cast<std::size_t>(ndom),
                                              std::vector<double>(2 * channels, 0.0));
    std::vector<int> counts(static_cast<std::size_t>(ndom), 0);
    std::vector<int> all(ds.size());
    for (int i = 0; i < ds.size(); ++i) all[static_cast<std::size_t>(i)] = i;
    const std::size_t chunk = 64;
    for (std::size_t off = 0; off < all.size(); off += chunk) {
        const std::size_t count = std::min(chunk, all.size() - off);
        auto [batch, labels] = ds.gather(all, off, count);
        (void)labels;
        Tensor out = transform(batch);
        const std::size_t hw = out.shape().spatial();
        for (std::size_t bi = 0; bi < count; ++bi) {
            const int dom = ds.domain_ids[static_cast<std::size_t>(all[off + bi])];
            for (int c = 0; c < channels; ++c) {
                double s1 = 0.0, s2 = 0.0;
                const float* p =
                    out.data() + (bi * static_cast<std::size_t>(channels) + c) * hw;
                for (std::size_t j = 0; j < hw; ++j) {
                    s1 += p[j];
                    s2 += static_cast<double>(p[j]) * p[j];
                }
                const double mu = s1 / static_cast<double>(hw);
                const double sd = std::sqrt(std::max(0.0, s2 / static_cast<double>(hw) - mu * mu));
                centroid[static_cast<std::size_t>(dom)][static_cast<std::size_t>(c)] += mu;
                centroid[static_cast<std::size_t>(dom)][static_cast<std::size_t>(channels + c)] +=
                    sd;
            }
            counts[static_cast<std::size_t>(dom)]++;
        }
    }
    for (int d = 0; d < ndom; ++d) {
        if (counts[static_cast<std::size_t>(d)] == 0) continue;
        for (double& v : centroid[static_cast<std::size_t>(d)]) {
            v /= counts[static_cast<std::size_t>(d)];
        }
    }
    double acc = 0.0;
    int pairs = 0;
    for (int a = 0; a < ndom; ++a) {
        for (int b = a + 1; b < ndom; ++b) {
            double d2 = 0.0;
            for (std::size_t e = 0; e < centroid[static_cast<std::size_t>(a)].size(); ++e) {
                const double d = centroid[static_cast<std::size_t>(a)][e] -
                                 centroid[static_cast<std::size_t>(b)][e];
                d2 += d * d;
            }
            acc += std::sqrt(d2);
            ++pairs;
        }
    }
    return pairs > 0 ? acc / pairs : 0.0;
}

namespace {

// argmax predictions over a set of samples, chunked
std::vector<int> predict(TrainedModel& m, const DomainDataset& ds, const std::vector<int>& idx) {
    std::vector<int> pred(idx.size());
    const std::size_t chunk = 64;
    for (std::size_t off = 0; off < idx.size(); off += chunk) {
        const std::size_t count = std::min(chunk, idx.size() - off);
        auto [batch, labels] = ds.gather(idx, off, count);
        (void)labels;
        Tensor logits = m.logits(batch);
        for (std::size_t bi = 0; bi < count; ++bi) {
            int best = 0;
            float bv = logits.at(static_cast<int>(bi), 0, 0, 0);
            for (int c = 1; c < logits.shape().c; ++c) {
                const float v = logits.at(static_cast<int>(bi), c, 0, 0);
                if (v > bv) {
                    bv = v;
                    best = c;
                }
            }
            pred[off + bi] = best;
        }
    }
    return pred;
}

double accuracy_of(const DomainDataset& ds, const std::vector<int>& idx,
                   const std::vector<int>& pred) {
    if (idx.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (pred[i] == ds.labels[static_cast<std::size_t>(idx[i])]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(idx.size());
}

}  // namespace

EvalReport evaluate(TrainedModel& m, const DomainDataset& ds, const std::string& held_out,
                    std::uint64_t seed) {
    const int held_id = ds.domain_id(held_out);
    if (held_id < 0) {
        throw ConfigError("held-out domain '" + held_out + "' is not in the dataset");
    }
    EvalReport r;
    r.model_kind = model_kind_name(m.kind);
    r.held_out_domain = held_out;
    r.seed = seed;
    r.params_total = m.params_total();
    r.final_loss = m.final_train_loss;

    for (int d = 0; d < static_cast<int>(ds.domain_names.size()); ++d) {
        std::vector<int> idx = ds.indices_of_domain(d);
        std::vector<int> pred = predict(m, ds, idx);
        r.per_domain_accuracy[ds.domain_names[static_cast<std::size_t>(d)]] =
            accuracy_of(ds, idx, pred);
    }
    r.held_out_accuracy = r.per_domain_accuracy.at(held_out);

    // train accuracy: weighted over the source domains
    {
        std::vector<int> idx = ds.indices_excluding_domain(held_id);
        std::vector<int> pred = predict(m, ds, idx);
        r.train_accuracy = accuracy_of(ds, idx, pred);
    }

    // macro-F1 on the held-out domain: unweighted mean of per-class F1
    {
        std::vector<int> idx = ds.indices_of_domain(held_id);
        std::vector<int> pred = predict(m, ds, idx);
        double f1_sum = 0.0;
        for (int c = 0; c < ds.class_count; ++c) {
            long tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const int y = ds.labels[static_cast<std::size_t>(idx[i])];
                const int p = pred[i];
                if (p == c && y == c) ++tp;
                if (p == c && y != c) ++fp;
                if (p != c && y == c) ++fn;
            }
            const long denom = 2 * tp + fp + fn;
            f1_sum += denom > 0 ? 2.0 * tp / static_cast<double>(denom) : 0.0;
        }
        r.macro_f1 = f1_sum / ds.class_count;
    }

    r.feature_style_gap_raw = feature_style_gap([](const Tensor& t) { return t; }, ds);
    if (m.kind == ModelKind::InvNorm) {
        r.feature_style_gap = feature_style_gap(
            [&m](const Tensor& t) { return m.transform->forward(t).output; }, ds);
    } else {
        r.feature_style_gap = r.feature_style_gap_raw;
    }
    return r;
}

std::pair<EvalReport, EvalReport> train_both(const DomainDataset& ds, const std::string& held_out,
                                             const HyperParams& hp) {
    TrainedModel baseline = train_model(ModelKind::Baseline, ds, held_out, hp);
    EvalReport rb = evaluate(baseline, ds, held_out, hp.seed);
    rb.epochs = hp.epochs;
    TrainedModel inv = train_model(ModelKind::InvNorm, ds, held_out, hp);
    EvalReport ri = evaluate(inv, ds, held_out, hp.seed);
    ri.epochs = hp.epochs;
    return {std::move(rb), std::move(ri)};
}

std::string EvalReport::to_json() const {
    ordered_json j;
    j["model_kind"] = model_kind;
    j["held_out_domain"] = held_out_domain;
    j["seed"] = seed;
    ordered_json acc = ordered_json::object();
    for (const auto& [name, value] : per_domain_accuracy) acc[name] = value;
    j["per_domain_accuracy"] = acc;
    j["held_out_accuracy"] = held_out_accuracy;
    j["macro_f1"] = macro_f1;
    j["train_accuracy"] = train_accuracy;
    j["feature_style_gap"] = feature_style_gap;
    j["feature_style_gap_raw"] = feature_style_gap_raw;
    j["final_loss"] = final_loss;
    j["params_total"] = params_total;
    j["epochs"] = epochs;
    return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw FormatError(std::string("invalid report JSON: ") + e.what());
    }
    EvalReport r;
    try {
        r.model_kind = j.at("model_kind").get<std::string>();
        r.held_out_domain = j.at("held_out_domain").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& [name, value] : j.at("per_domain_accuracy").items()) {
            r.per_domain_accuracy[name] = value.get<double>();
        }
        r.held_out_accuracy = j.at("held_out_accuracy").get<double>();
        r.macro_f1 = j.at("macro_f1").get<double>();
        r.train_accuracy = j.at("train_accuracy").get<double>();
        r.feature_style_gap = j.at("feature_style_gap").get<double>();
        r.feature_style_gap_raw = j.at("feature_style_gap_raw").get<double>();
        r.final_loss = j.at("final_loss").get<double>();
        r.params_total = j.at("params_total").get<long long>();
        r.epochs = j.at("epochs").get<int>();
    } catch (const std::exception& e) {
        throw FormatError(std::string("report JSON is missing fields: ") + e.what());
    }
    return r;
}

}  // namespace invnorm
