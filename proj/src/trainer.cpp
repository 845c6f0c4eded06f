#include "licda/trainer.hpp"

#include <cmath>
#include <sstream>

namespace licda {

std::string record_line(const EpochRecord& r) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["split"] = r.split;
    j["loss"] = r.loss;
    j["mse"] = r.mse;
    j["ce"] = r.ce;
    j["gate_acc"] = r.gate_acc;
    j["bpp"] = r.bpp;
    j["lr"] = r.lr;
    return j.dump();
}

Adam::Adam(std::vector<Parameter<float>*> params, double lr) : params_(std::move(params)), lr_(lr) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i]->values().size(), 0.0f);
        v_[i].assign(params_[i]->values().size(), 0.0f);
    }
}

void Adam::step() {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i]->trainable()) continue;
        auto& p = params_[i]->values();
        auto& g = params_[i]->grad();
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = static_cast<double>(g[j]);
            m_[i][j] = static_cast<float>(b1 * m_[i][j] + (1.0 - b1) * gj);
            v_[i][j] = static_cast<float>(b2 * v_[i][j] + (1.0 - b2) * gj * gj);
            const double mhat = static_cast<double>(m_[i][j]) / c1;
            const double vhat = static_cast<double>(v_[i][j]) / c2;
            p[j] = static_cast<float>(p[j] - lr_ * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

void Adam::zero_grad() {
    for (auto* p : params_) p->zero_grad();
}

void Adam::persist(Checkpoint& ck) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        ck.add("optim.m/" + params_[i]->name(), params_[i]->tensor().shape(), m_[i]);
        ck.add("optim.v/" + params_[i]->name(), params_[i]->tensor().shape(), v_[i]);
    }
    ck.meta["optim"] = {{"t", t_}, {"lr", lr_}};
}

void Adam::restore(const Checkpoint& ck) {
    if (!ck.meta.contains("optim")) throw DataError("checkpoint holds no optimizer state");
    t_ = ck.meta["optim"].at("t").get<std::int64_t>();
    lr_ = ck.meta["optim"].at("lr").get<double>();
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto* m = ck.find("optim.m/" + params_[i]->name());
        const auto* v = ck.find("optim.v/" + params_[i]->name());
        if (!m || !v) throw DataError("optimizer state missing for " + params_[i]->name());
        m_[i] = m->second;
        v_[i] = v->second;
    }
}

// ---------------------------------------------------------------------------

Trainer::Trainer(CodecModel<float>& model, TrainConfig tc, Stage stage, PolicyKind policy)
    : model_(model), tc_(tc), stage_(stage), policy_(policy) {
    validate_train_config(tc_);
    sched_.patience = tc_.patience;
    if (stage_ == Stage::kAdapt) {
        if (!model_.bank || !model_.gate) throw ConfigError("adaptation needs adapters and a gate attached");
        model_.set_backbone_trainable(false);
        model_.train_policy = policy_;
        opt_ = Adam(model_.adaptation_parameters(), tc_.lr);
    } else {
        opt_ = Adam(model_.backbone_parameters(), tc_.lr);
    }
}

namespace {

double batch_gate_accuracy(const Tensor<float>& v, const std::vector<int>& labels) {
    const int N = v.dim(0), C = v.dim(1);
    int hit = 0;
    for (int n = 0; n < N; ++n) {
        const float* row = v.values().data() + static_cast<std::size_t>(n) * C;
        int best = 0;
        for (int c = 1; c < C; ++c)
            if (row[c] > row[best]) best = c;
        if (best == labels[static_cast<std::size_t>(n)]) ++hit;
    }
    return static_cast<double>(hit) / N;
}

}  // namespace

EpochRecord Trainer::train_epoch(const DomainSplits& data, ImageCache& cache) {
    auto batches = epoch_batches(data.train, cache, tc_.batch_size, tc_.crop_size, tc_.augment, tc_.seed, epoch_);
    EpochRecord rec;
    rec.epoch = epoch_;
    rec.split = "train";
    rec.lr = opt_.lr();
    int step = 0;
    try {
        for (auto& batch : batches) {
            Tensor<float> x = batch.images;
            Tensor<float> y = model_.encoder.forward(x);
            Tensor<float> loss;
            if (stage_ == Stage::kPretrain) {
                Rng noise_rng = make_rng(tc_.seed, "noise/" + std::to_string(epoch_) + "/" + std::to_string(step));
                Tensor<float> noise = Tensor<float>::uniform(y.shape(), noise_rng, -0.5f, 0.5f);
                Tensor<float> y_tilde = add(y, noise);
                Tensor<float> rate = model_.entropy.rate_bits(y_tilde);
                Tensor<float> x_hat = decode_with_adapters<float>(model_.decoder, y_tilde, nullptr, nullptr);
                Tensor<float> m = mse(x, x_hat);
                const double npix = static_cast<double>(x.dim(0)) * x.dim(2) * x.dim(3);
                loss = add(mul_scalar(m, static_cast<float>(model_.cfg.lambda_rd * 255.0 * 255.0)),
                           mul_scalar(rate, static_cast<float>(1.0 / npix)));
                rec.mse += m.scalar();
                rec.bpp += rate.scalar() / npix;
            } else {
                Tensor<float> y_hat = round_ties_away(y);
                auto gate_out = model_.gate->forward(tc_.gate_on_quantized ? y_hat : y);
                Tensor<float> v = apply_policy(gate_out.v, &batch.labels, policy_);
                Tensor<float> x_hat = decode_with_adapters(model_.decoder, y_hat, &*model_.bank, &v);
                Tensor<float> m = mse(x, x_hat);
                Tensor<float> m_scaled = tc_.mse_on_255_scale ? mul_scalar(m, 255.0f * 255.0f) : m;
                Tensor<float> ce = cross_entropy_with_logits(gate_out.logits, batch.labels);
                loss = add(mul_scalar(m_scaled, static_cast<float>(tc_.gamma)), ce);
                rec.mse += m_scaled.scalar();
                rec.ce += ce.scalar();
                rec.gate_acc += batch_gate_accuracy(gate_out.v, batch.labels);
            }
            rec.loss += loss.scalar();
            backward(loss);
            opt_.step();
            if (stage_ == Stage::kPretrain) model_.entropy.project_scales();
            opt_.zero_grad();
            ++step;
        }
    } catch (const CodecError& e) {
        throw CodecError("training diverged at epoch " + std::to_string(epoch_) + " step " + std::to_string(step) +
                         ": " + e.what());
    }
    const double inv = 1.0 / std::max(1, step);
    rec.loss *= inv;
    rec.mse *= inv;
    rec.ce *= inv;
    rec.gate_acc *= inv;
    rec.bpp *= inv;
    return rec;
}

EpochRecord Trainer::validate(const DomainSplits& data, ImageCache& cache) {
    // Fixed epoch tag so validation crops are identical across epochs.
    auto batches = epoch_batches(data.val, cache, tc_.batch_size, tc_.crop_size, false, tc_.seed, 0);
    EpochRecord rec;
    rec.epoch = epoch_;
    rec.split = "val";
    rec.lr = opt_.lr();
    NoGradGuard ng;
    int step = 0;
    for (auto& batch : batches) {
        Tensor<float> x = batch.images;
        Tensor<float> y = model_.encoder.forward(x);
        Tensor<float> y_hat = round_ties_away(y);
        if (stage_ == Stage::kPretrain) {
            Tensor<float> rate = model_.entropy.rate_bits(y_hat);
            Tensor<float> x_hat = decode_with_adapters<float>(model_.decoder, y_hat, nullptr, nullptr);
            Tensor<float> m = mse(x, x_hat);
            const double npix = static_cast<double>(x.dim(0)) * x.dim(2) * x.dim(3);
            rec.mse += m.scalar();
            rec.bpp += rate.scalar() / npix;
            rec.loss += model_.cfg.lambda_rd * 255.0 * 255.0 * m.scalar() + rate.scalar() / npix;
        } else {
            auto gate_out = model_.gate->forward(tc_.gate_on_quantized ? y_hat : y);
            Tensor<float> v = apply_policy(gate_out.v, &batch.labels, policy_);
            Tensor<float> x_hat = decode_with_adapters(model_.decoder, y_hat, &*model_.bank, &v);
            Tensor<float> m = mse(x, x_hat);
            Tensor<float> m_scaled = tc_.mse_on_255_scale ? mul_scalar(m, 255.0f * 255.0f) : m;
            Tensor<float> ce = cross_entropy_with_logits(gate_out.logits, batch.labels);
            rec.mse += m_scaled.scalar();
            rec.ce += ce.scalar();
            rec.gate_acc += batch_gate_accuracy(gate_out.v, batch.labels);
            rec.loss += tc_.gamma * m_scaled.scalar() + ce.scalar();
        }
        ++step;
    }
    const double inv = 1.0 / std::max(1, step);
    rec.loss *= inv;
    rec.mse *= inv;
    rec.ce *= inv;
    rec.gate_acc *= inv;
    rec.bpp *= inv;
    return rec;
}

const std::vector<EpochRecord>& Trainer::run(const DomainSplits& data, ImageCache& cache) {
    if (data.train.items.empty()) throw ConfigError("training split is empty");
    while (epoch_ < tc_.epochs) {
        log_.push_back(train_epoch(data, cache));
        EpochRecord val = validate(data, cache);
        log_.push_back(val);
        opt_.set_lr(sched_.observe(val.loss, opt_.lr()));
        ++epoch_;
    }
    return log_;
}

void Trainer::persist(Checkpoint& ck) const {
    opt_.persist(ck);
    ck.meta["train_state"] = {{"stage", stage_ == Stage::kPretrain ? "pretrain" : "adapt"},
                              {"epoch", epoch_},
                              {"lr", opt_.lr()},
                              {"sched_best", sched_.best},
                              {"sched_bad", sched_.bad},
                              {"seed", tc_.seed},
                              {"policy", to_string(policy_)}};
    nlohmann::ordered_json lines = nlohmann::ordered_json::array();
    for (const auto& r : log_) lines.push_back(record_line(r));
    ck.meta["metric_log"] = lines;
}

void Trainer::restore(const Checkpoint& ck) {
    opt_.restore(ck);
    if (!ck.meta.contains("train_state")) throw DataError("checkpoint holds no train state");
    const auto& ts = ck.meta["train_state"];
    epoch_ = ts.at("epoch").get<int>();
    sched_.best = ts.at("sched_best").get<double>();
    sched_.bad = ts.at("sched_bad").get<int>();
}

}  // namespace licda
