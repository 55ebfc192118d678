#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "holobench/dataset.hpp"
#include "holobench/models/losses.hpp"
#include "holobench/models/networks.hpp"
#include "holobench/nn/checkpoint.hpp"
#include "holobench/nn/optim.hpp"

namespace holo::models {

enum class ModelKind { cvae, cgan, cvae_forward };

inline std::string to_string(ModelKind k) {
    switch (k) {
    case ModelKind::cvae: return "cvae";
    case ModelKind::cgan: return "cgan";
    case ModelKind::cvae_forward: return "cvae-forward";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "cvae") return ModelKind::cvae;
    if (s == "cgan") return ModelKind::cgan;
    if (s == "cvae-forward" || s == "cvae_forward") return ModelKind::cvae_forward;
    throw ConfigError("unknown model kind '" + s + "'");
}

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 100;
    int epochs = 20;
    nn::OptimizerKind optimizer = nn::OptimizerKind::rmsprop;
    std::uint64_t seed = 42;
    int latent_dim = kLatentDim;
    double beta = 1.0;
    double alpha = 1.0;
    int disc_updates_per_gen = 5;
    double dropout_rate = 0.3;
    bool encoder_sees_intensity = false; // ablation: q(z | f, I) instead of q(z | f)
    // Surrogate U: pretraining length and ADAM step for both of its phases.
    int forward_epochs = 20;
    double forward_learning_rate = 1e-3;

    static TrainConfig defaults(ModelKind kind) {
        TrainConfig c;
        if (kind == ModelKind::cgan) c.optimizer = nn::OptimizerKind::adam;
        return c;
    }

    void validate() const {
        if (!(learning_rate > 0.0) || !(forward_learning_rate > 0.0))
            throw ConfigError("learning rates must be positive");
        if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
        if (epochs < 0 || forward_epochs < 0) throw ConfigError("epoch counts must be non-negative");
        if (latent_dim != kLatentDim) throw ConfigError("latent_dim is fixed at 16 by the architecture");
        if (!(beta >= 0.0) || !(alpha >= 0.0)) throw ConfigError("beta and alpha must be non-negative");
        if (disc_updates_per_gen < 1) throw ConfigError("disc_updates_per_gen must be positive");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
    }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"optimizer", nn::to_string(c.optimizer)},
            {"seed", c.seed},
            {"latent_dim", c.latent_dim},
            {"beta", c.beta},
            {"alpha", c.alpha},
            {"disc_updates_per_gen", c.disc_updates_per_gen},
            {"dropout_rate", c.dropout_rate},
            {"encoder_sees_intensity", c.encoder_sees_intensity},
            {"forward_epochs", c.forward_epochs},
            {"forward_learning_rate", c.forward_learning_rate}};
}

// Overlays the keys present in `j` on `base`; unknown keys are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "learning_rate") base.learning_rate = value.get<double>();
            else if (key == "batch_size") base.batch_size = value.get<int>();
            else if (key == "epochs") base.epochs = value.get<int>();
            else if (key == "optimizer") base.optimizer = nn::optimizer_from_string(value.get<std::string>());
            else if (key == "seed") base.seed = value.get<std::uint64_t>();
            else if (key == "latent_dim") base.latent_dim = value.get<int>();
            else if (key == "beta") base.beta = value.get<double>();
            else if (key == "alpha") base.alpha = value.get<double>();
            else if (key == "disc_updates_per_gen") base.disc_updates_per_gen = value.get<int>();
            else if (key == "dropout_rate") base.dropout_rate = value.get<double>();
            else if (key == "encoder_sees_intensity") base.encoder_sees_intensity = value.get<bool>();
            else if (key == "forward_epochs") base.forward_epochs = value.get<int>();
            else if (key == "forward_learning_rate") base.forward_learning_rate = value.get<double>();
            else throw ConfigError("unknown train config key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("train config key '" + key + "': " + e.what());
        }
    }
    base.validate();
    return base;
}

// Row-stacked network inputs: Cartesian f (N x 128) and intensity (N x 10000).
struct Batch {
    Matrix f;
    Matrix intensity;
};

inline void require_model_geometry(const DatasetHeader& h) {
    if (h.grid.crop_size != kImageSide)
        throw InvalidArgument("dataset/grid mismatch: models expect a " + std::to_string(kImageSide) + " px crop");
}

inline Batch make_batch(const Dataset& ds, std::span<const std::size_t> idx) {
    require_model_geometry(ds.header());
    const auto n = static_cast<Eigen::Index>(idx.size());
    Batch b{Matrix(n, kFeatures), Matrix(n, kImagePixels)};
    for (Eigen::Index r = 0; r < n; ++r) {
        const std::size_t rec = idx[static_cast<std::size_t>(r)];
        const auto cart = ds.fmatrix(rec).to_cartesian();
        for (int k = 0; k < kFeatures; ++k) b.f(r, k) = cart[static_cast<std::size_t>(k)];
        const auto px = ds.intensity_f32(rec);
        for (int k = 0; k < kImagePixels; ++k) b.intensity(r, k) = px[static_cast<std::size_t>(k)];
    }
    return b;
}

inline Matrix intensity_row(const IntensityImage& img) {
    if (img.size != kImageSide) throw InvalidArgument("intensity must be 100x100");
    Matrix m(1, kImagePixels);
    std::copy(img.val.begin(), img.val.end(), m.data());
    return m;
}

// Training and held-out record indices. Held-out records are the last ones in
// the file; training uses only patterns that share no record with them.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> holdout;
};

inline Split split_holdout(const DatasetHeader& h, std::size_t n_holdout) {
    const std::size_t n = h.record_count;
    if (n_holdout >= n) throw InvalidArgument("holdout must be smaller than the dataset");
    const std::size_t per = std::max<std::size_t>(1, h.sampler.phase_redraws);
    const std::size_t first_holdout = n - n_holdout;
    Split s;
    for (std::size_t r = 0; r < (first_holdout / per) * per; ++r) s.train.push_back(r);
    for (std::size_t r = first_holdout; r < n; ++r) s.holdout.push_back(r);
    return s;
}

struct EpochLog {
    std::string phase;
    int epoch = 0;
    nlohmann::json metrics;

    nlohmann::json to_json() const {
        nlohmann::json j = {{"phase", phase}, {"epoch", epoch}};
        j.update(metrics);
        return j;
    }
};

using EpochCallback = std::function<void(const EpochLog&)>;

namespace detail {
inline constexpr std::uint64_t kInitTag = 0x1a17;
inline constexpr std::uint64_t kNoiseTag = 0x2b0e;
inline constexpr std::uint64_t kShuffleTag = 0x5f1e;
inline constexpr std::uint64_t kDropoutTag = 0xd40f;
} // namespace detail

// One of the three conditional generative models with everything needed to
// train it: generator/decoder, encoder or discriminator, optional surrogate
// forward net, and their optimizers.
class GenerativeModel {
public:
    GenerativeModel(ModelKind kind, TrainConfig cfg)
        : kind_(kind), cfg_((cfg.validate(), cfg)), init_rng_(substream(cfg.seed, 0, detail::kInitTag)),
          noise_(substream(cfg.seed, 0, detail::kNoiseTag)),
          generator_(init_rng_, cfg.dropout_rate, substream(cfg.seed, 0, detail::kDropoutTag)()) {
        std::vector<nn::Param*> gen_params;
        generator_.collect_params(gen_params);
        if (kind_ == ModelKind::cgan) {
            discriminator_.emplace(init_rng_);
        } else {
            encoder_.emplace(init_rng_, cfg_.encoder_sees_intensity);
            encoder_->collect_params(gen_params);
        }
        if (kind_ == ModelKind::cvae_forward) forward_.emplace(init_rng_);
        gen_opt_.emplace(gen_params, optimizer_config(cfg_.optimizer, cfg_.learning_rate));
        if (discriminator_) {
            std::vector<nn::Param*> p;
            discriminator_->collect_params(p);
            disc_opt_.emplace(p, optimizer_config(cfg_.optimizer, cfg_.learning_rate));
        }
        if (forward_) {
            std::vector<nn::Param*> p;
            forward_->collect_params(p);
            fwd_opt_.emplace(p, optimizer_config(nn::OptimizerKind::adam, cfg_.forward_learning_rate));
        }
    }

    GenerativeModel(const GenerativeModel&) = delete;
    GenerativeModel& operator=(const GenerativeModel&) = delete;

    ModelKind kind() const { return kind_; }
    const TrainConfig& config() const { return cfg_; }
    int epochs_completed() const { return epochs_done_; }
    bool forward_pretrained() const { return forward_ready_; }

    Generator& generator() { return generator_; }
    Encoder* encoder() { return encoder_ ? &*encoder_ : nullptr; }
    Discriminator* discriminator() { return discriminator_ ? &*discriminator_ : nullptr; }
    ForwardNet* forward_net() { return forward_ ? &*forward_ : nullptr; }

    // z ~ N(0, 1) for the cVAE kinds, U[0, 1) for the cGAN.
    Matrix sample_latent(Eigen::Index n, Rng& rng) const {
        Matrix z(n, kLatentDim);
        for (Eigen::Index k = 0; k < z.size(); ++k)
            z.data()[k] = kind_ == ModelKind::cgan ? uniform01(rng) : standard_normal(rng);
        return z;
    }

    // Inference: Cartesian f-hat rows for intensity rows and latent rows.
    Matrix generate(const Matrix& intensity, const Matrix& z) {
        if (intensity.rows() != z.rows()) throw InvalidArgument("generate: intensity and latent batch sizes differ");
        const Matrix out = generator_.forward(intensity, z, Mode::eval);
        nn::check_finite(out, "generator output");
        return out;
    }

    FMatrix generate(const IntensityImage& img, const Matrix& z) {
        if (z.rows() != 1) throw InvalidArgument("generate: expected one latent row");
        const Matrix out = generate(intensity_row(img), z);
        return FMatrix::from_cartesian(std::span<const double>(out.data(), kFeatures));
    }

    // ---- objectives: forward + backward with gradients accumulated ----

    struct CvaeTerms {
        double total = 0.0;
        double rec = 0.0;
        double kl = 0.0;
        double forward = 0.0;
    };

    // beta E_rec + E_KL (+ alpha E_fwd through a frozen U for cvae-forward),
    // with z' = mu + sigma * eps.
    CvaeTerms cvae_objective(const Batch& b, const Matrix& eps, Mode mode = Mode::train) {
        if (!encoder_) throw InvalidArgument("cvae objective needs an encoder");
        const EncoderOutput q = encoder_->forward(b.f, b.intensity, mode);
        const Matrix sigma = (0.5 * q.log_var.array()).exp().matrix();
        const Matrix z = q.mu + sigma.cwiseProduct(eps);
        const Matrix fhat = generator_.forward(b.intensity, z, mode);

        CvaeTerms t;
        t.rec = squared_error(b.f, fhat);
        t.kl = kl_divergence(q.mu, q.log_var);
        Matrix d_fhat = cfg_.beta * squared_error_grad(b.f, fhat);
        if (kind_ == ModelKind::cvae_forward && cfg_.alpha != 0.0) {
            const Matrix ihat = forward_->forward(fhat, Mode::eval);
            t.forward = squared_error(b.intensity, ihat);
            d_fhat += forward_->backward(cfg_.alpha * squared_error_grad(b.intensity, ihat));
        }
        t.total = cfg_.beta * t.rec + t.kl + cfg_.alpha * t.forward;
        if (!std::isfinite(t.total)) throw NumericError("non-finite cVAE loss");

        const Matrix dz = generator_.backward(d_fhat);
        const KlGrad kg = kl_divergence_grad(q.mu, q.log_var);
        const Matrix d_mu = dz + kg.d_mu;
        const Matrix d_log_var = kg.d_log_var + (0.5 * dz.cwiseProduct(sigma).cwiseProduct(eps));
        encoder_->backward(d_mu, d_log_var);
        return t;
    }

    // Discriminator BCE on real (f, I) against generated (fake, I).
    double discriminator_objective(const Batch& b, const Matrix& fake, Mode mode = Mode::train) {
        Matrix both(2 * b.f.rows(), kFeatures);
        both << b.f, fake;
        const Matrix logits = discriminator_->forward(both, b.intensity, mode);
        const Eigen::Index n = b.f.rows();
        const Matrix real_l = logits.topRows(n), fake_l = logits.bottomRows(n);
        const double loss = bce_with_logits(real_l, true) + bce_with_logits(fake_l, false);
        if (!std::isfinite(loss)) throw NumericError("non-finite discriminator loss");
        Matrix g(2 * n, 1);
        g << bce_with_logits_grad(real_l, true), bce_with_logits_grad(fake_l, false);
        discriminator_->backward(g);
        return loss;
    }

    struct GanTerms {
        double total = 0.0;
        double adversarial = 0.0;
        double rec = 0.0;
    };

    // mean[-log s(D(G(z, I), I))] + beta E_rec with the same z for both terms.
    // The discriminator runs in evaluation mode; its gradients are discarded.
    GanTerms generator_objective(const Batch& b, const Matrix& z, Mode mode = Mode::train) {
        const Matrix fhat = generator_.forward(b.intensity, z, mode);
        return generator_objective_from(b, fhat);
    }

    // ---- training ----

    // Step (1): encoder and decoder only; U stays fixed even though the
    // forward term back-propagates through it.
    void cvae_update(const Batch& b) {
        const Matrix eps = gaussian(b.f.rows(), kLatentDim, noise_);
        gen_opt_->zero_grad();
        last_cvae_ = cvae_objective(b, eps);
        gen_opt_->step();
    }

    // Step (2): U alone, on ground-truth (f, I).
    void forward_update(const Batch& b) {
        if (!forward_) throw InvalidArgument("model has no forward net");
        fwd_opt_->zero_grad();
        last_forward_ = forward_objective(b);
        fwd_opt_->step();
    }

    void cvae_step(const Batch& b) {
        cvae_update(b);
        if (kind_ == ModelKind::cvae_forward) forward_update(b);
    }

    void cgan_step(const Batch& b) {
        const Matrix z = sample_latent(b.f.rows(), noise_);
        const Matrix fake = generator_.forward(b.intensity, z, Mode::train);
        for (int k = 0; k < cfg_.disc_updates_per_gen; ++k) {
            disc_opt_->zero_grad();
            last_disc_ = discriminator_objective(b, fake);
            disc_opt_->step();
        }
        gen_opt_->zero_grad();
        last_gan_ = generator_objective_from(b, fake);
        gen_opt_->step();
    }

    // mean ||U(f) - I||^2 in training mode.
    double forward_objective(const Batch& b, Mode mode = Mode::train) {
        const Matrix ihat = forward_->forward(b.f, mode);
        const double loss = squared_error(b.intensity, ihat);
        if (!std::isfinite(loss)) throw NumericError("non-finite forward loss");
        forward_->backward(squared_error_grad(b.intensity, ihat));
        return loss;
    }

    // Mean of ||U(f) - I||^2 / sum(I) over records.
    double forward_relative_error(const Dataset& ds, std::span<const std::size_t> idx) {
        double sum = 0.0;
        for (std::size_t start = 0; start < idx.size(); start += 100) {
            const auto part = idx.subspan(start, std::min<std::size_t>(100, idx.size() - start));
            const Batch b = make_batch(ds, part);
            const Matrix ihat = forward_->forward(b.f, Mode::eval);
            for (Eigen::Index r = 0; r < b.f.rows(); ++r)
                sum += (ihat.row(r) - b.intensity.row(r)).squaredNorm() / b.intensity.row(r).sum();
        }
        return sum / static_cast<double>(idx.size());
    }

    // Minimizes the forward error of U on the training records; the last tenth
    // of them is kept aside for the reported validation error.
    void pretrain_forward(const Dataset& ds, std::span<const std::size_t> records, const EpochCallback& log = {}) {
        if (!forward_) throw InvalidArgument("model has no forward net");
        const std::size_t n_val = std::max<std::size_t>(1, records.size() / 10);
        const auto train = records.first(records.size() - n_val);
        const auto val = records.last(n_val);
        std::vector<double> history;
        for (int e = 0; e < cfg_.forward_epochs; ++e) {
            double sum = 0.0;
            std::size_t steps = 0;
            for_each_batch(ds, train, e, 0x7f0d, [&](const Batch& b) {
                fwd_opt_->zero_grad();
                sum += forward_objective(b);
                fwd_opt_->step();
                ++steps;
            });
            const double mean = sum / static_cast<double>(std::max<std::size_t>(1, steps));
            history.push_back(mean);
            const double rel = forward_relative_error(ds, val);
            if (log) log({"pretrain_forward", e + 1, {{"forward_loss", mean}, {"val_relative_error", rel}}});
            if (history.size() >= 4) {
                const auto h = history.end();
                if (h[-1] > h[-2] && h[-2] > h[-3] && h[-3] > h[-4])
                    throw NumericError("forward pretraining diverged: loss rose for 3 consecutive epochs");
            }
        }
        forward_ready_ = true;
    }

    // Runs the configured number of epochs (pretraining U first when needed).
    void train(const Dataset& ds, std::span<const std::size_t> records, const EpochCallback& log = {}) {
        if (records.empty()) throw InvalidArgument("no training records");
        if (kind_ == ModelKind::cvae_forward && !forward_ready_) pretrain_forward(ds, records, log);
        for (int e = 0; e < cfg_.epochs; ++e) {
            nlohmann::json sums = nlohmann::json::object();
            std::size_t steps = 0;
            auto add = [&](const char* key, double v) { sums[key] = sums.value(key, 0.0) + v; };
            for_each_batch(ds, records, epochs_done_, detail::kShuffleTag, [&](const Batch& b) {
                if (kind_ == ModelKind::cgan) {
                    cgan_step(b);
                    add("disc_loss", last_disc_);
                    add("gen_loss", last_gan_.total);
                    add("adversarial", last_gan_.adversarial);
                    add("rec", last_gan_.rec);
                } else {
                    cvae_step(b);
                    add("loss", last_cvae_.total);
                    add("rec", last_cvae_.rec);
                    add("kl", last_cvae_.kl);
                    if (kind_ == ModelKind::cvae_forward) {
                        add("forward_term", last_cvae_.forward);
                        add("forward_net_loss", last_forward_);
                    }
                }
                ++steps;
            });
            for (auto& [key, value] : sums.items()) value = value.get<double>() / static_cast<double>(steps);
            ++epochs_done_;
            if (log) log({"train", epochs_done_, sums});
        }
    }

    // ---- persistence ----

    void visit_state(const nn::StateVisitor& visit) {
        generator_.visit_state("generator", visit);
        if (encoder_) encoder_->visit_state("encoder", visit);
        if (discriminator_) discriminator_->visit_state("discriminator", visit);
        if (forward_) forward_->visit_state("forward", visit);
        gen_opt_->visit_state("opt.generator", visit);
        if (disc_opt_) disc_opt_->visit_state("opt.discriminator", visit);
        if (fwd_opt_) fwd_opt_->visit_state("opt.forward", visit);
        Matrix meta(1, 2);
        meta << epochs_done_, forward_ready_ ? 1.0 : 0.0;
        visit("meta", meta);
        epochs_done_ = static_cast<int>(meta(0, 0));
        forward_ready_ = meta(0, 1) != 0.0;
    }

    void save(const std::filesystem::path& path) {
        nn::Checkpoint ck;
        ck.kind = to_string(kind_);
        ck.config_json = models::to_json(cfg_).dump();
        ck.capture(*this);
        ck.save(path);
    }

    static std::unique_ptr<GenerativeModel> load(const std::filesystem::path& path) {
        const nn::Checkpoint ck = nn::Checkpoint::load(path);
        ModelKind kind{};
        try {
            kind = model_kind_from_string(ck.kind);
        } catch (const ConfigError&) {
            throw IoError("unknown checkpoint kind '" + ck.kind + "'");
        }
        nlohmann::json cfg_json;
        try {
            cfg_json = nlohmann::json::parse(ck.config_json);
        } catch (const nlohmann::json::exception& e) {
            throw IoError(std::string("corrupt checkpoint config: ") + e.what());
        }
        auto model = std::make_unique<GenerativeModel>(kind, train_config_from_json(cfg_json, TrainConfig::defaults(kind)));
        ck.restore(*model);
        return model;
    }

private:
    static nn::OptimizerConfig optimizer_config(nn::OptimizerKind kind, double lr) {
        nn::OptimizerConfig c;
        c.kind = kind;
        c.learning_rate = lr;
        return c;
    }

    static Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
        Matrix m(rows, cols);
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = standard_normal(rng);
        return m;
    }

    // Continues from a generator forward pass already run on b.intensity.
    GanTerms generator_objective_from(const Batch& b, const Matrix& fhat) {
        const Matrix logits = discriminator_->forward(fhat, b.intensity, Mode::eval);
        GanTerms t;
        t.adversarial = bce_with_logits(logits, true);
        t.rec = squared_error(b.f, fhat);
        t.total = t.adversarial + cfg_.beta * t.rec;
        if (!std::isfinite(t.total)) throw NumericError("non-finite generator loss");
        Matrix d_fhat = discriminator_->backward(bce_with_logits_grad(logits, true));
        d_fhat += cfg_.beta * squared_error_grad(b.f, fhat);
        generator_.backward(d_fhat);
        return t;
    }

    // Shuffled mini-batches for one epoch; a trailing partial batch is kept if
    // it holds at least two records.
    template <typename Fn>
    void for_each_batch(const Dataset& ds, std::span<const std::size_t> records, int epoch, std::uint64_t tag,
                        Fn&& fn) const {
        std::vector<std::size_t> order(records.begin(), records.end());
        Rng rng(substream(cfg_.seed, static_cast<std::uint64_t>(epoch), tag));
        std::shuffle(order.begin(), order.end(), rng);
        const auto bs = static_cast<std::size_t>(cfg_.batch_size);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t len = std::min(bs, order.size() - start);
            if (len < 2) break;
            fn(make_batch(ds, std::span<const std::size_t>(order.data() + start, len)));
        }
    }

    ModelKind kind_;
    TrainConfig cfg_;
    Rng init_rng_;
    Rng noise_;
    Generator generator_;
    std::optional<Encoder> encoder_;
    std::optional<Discriminator> discriminator_;
    std::optional<ForwardNet> forward_;
    std::optional<nn::Optimizer> gen_opt_;
    std::optional<nn::Optimizer> disc_opt_;
    std::optional<nn::Optimizer> fwd_opt_;
    int epochs_done_ = 0;
    bool forward_ready_ = false;
    CvaeTerms last_cvae_;
    GanTerms last_gan_;
    double last_disc_ = 0.0;
    double last_forward_ = 0.0;
};

} // namespace holo::models
