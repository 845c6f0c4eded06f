#pragma once

#include <limits>
#include <string>
#include <vector>

#include "licda/checkpoint.hpp"
#include "licda/data.hpp"
#include "licda/model.hpp"

namespace licda {

struct TrainConfig {
    double gamma = 0.5;  // MSE weight in the adaptation loss
    double lr = 1e-4;
    int batch_size = 8;
    int epochs = 30;
    int patience = 15;
    std::uint64_t seed = 1;
    int crop_size = 64;
    bool mse_on_255_scale = false;  // adaptation MSE in 8-bit-squared units
    bool augment = true;
    bool gate_on_quantized = false;  // feed the gate y-hat instead of y
};

inline void validate_train_config(const TrainConfig& tc) {
    if (!(tc.gamma > 0)) throw ConfigError("gamma must be positive");
    if (tc.patience < 1) throw ConfigError("patience must be >= 1");
    if (tc.epochs < 1 || tc.batch_size < 1 || tc.crop_size < 1 || !(tc.lr > 0))
        throw ConfigError("bad training configuration");
}

// gamma * MSE(x, x_hat) + CE(label, logits); no rate term.
template <class S>
Tensor<S> adapter_loss(const Tensor<S>& x, const Tensor<S>& x_hat, const Tensor<S>& logits,
                       const std::vector<int>& labels, double gamma, bool mse_255 = false) {
    if (!(gamma > 0)) throw ConfigError("gamma must be positive");
    Tensor<S> m = mse(x, x_hat);
    if (mse_255) m = mul_scalar(m, static_cast<S>(255.0 * 255.0));
    return add(mul_scalar(m, static_cast<S>(gamma)), cross_entropy_with_logits(logits, labels));
}

struct EpochRecord {
    int epoch = 0;
    std::string split;  // "train" | "val"
    double loss = 0, mse = 0, ce = 0, gate_acc = 0, bpp = 0, lr = 0;
};

// One newline-delimited JSON record.
std::string record_line(const EpochRecord& r);

class Adam {
public:
    Adam() = default;
    Adam(std::vector<Parameter<float>*> params, double lr);

    void step();
    void zero_grad();
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

    void persist(Checkpoint& ck) const;
    void restore(const Checkpoint& ck);

private:
    std::vector<Parameter<float>*> params_;
    std::vector<std::vector<float>> m_, v_;
    double lr_ = 1e-4;
    std::int64_t t_ = 0;
};

// Halves the learning rate after `patience` epochs without improvement.
struct PlateauScheduler {
    double best = std::numeric_limits<double>::infinity();
    int bad = 0;
    int patience = 15;

    double observe(double val_loss, double lr) {
        if (val_loss < best) {
            best = val_loss;
            bad = 0;
        } else if (++bad >= patience) {
            bad = 0;
            return lr * 0.5;
        }
        return lr;
    }
};

enum class Stage { kPretrain, kAdapt };

// Drives one training stage over a model. Stage A (pretrain) optimizes the
// backbone with the rate-distortion objective under noise-relaxed
// quantization; stage B (adapt) freezes the backbone and jointly trains the
// adapter bank and gate with the distortion + domain-mismatch loss.
class Trainer {
public:
    Trainer(CodecModel<float>& model, TrainConfig tc, Stage stage, PolicyKind policy = PolicyKind::kProposed);

    // Runs epochs [current, tc.epochs). Appends two records (train, val) per
    // epoch to the log and returns it.
    const std::vector<EpochRecord>& run(const DomainSplits& data, ImageCache& cache);

    void persist(Checkpoint& ck) const;   // optimizer + schedule state
    void restore(const Checkpoint& ck);   // resume bit-exactly

    const std::vector<EpochRecord>& log() const { return log_; }
    int epoch() const { return epoch_; }
    double current_lr() const { return opt_.lr(); }

private:
    EpochRecord train_epoch(const DomainSplits& data, ImageCache& cache);
    EpochRecord validate(const DomainSplits& data, ImageCache& cache);

    CodecModel<float>& model_;
    TrainConfig tc_;
    Stage stage_;
    PolicyKind policy_;
    Adam opt_;
    PlateauScheduler sched_;
    int epoch_ = 0;
    std::vector<EpochRecord> log_;
};

}  // namespace licda
