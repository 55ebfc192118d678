#pragma once

// JSON run configuration shared by every CLI command. Sections: bench,
// sampler, train (keyed by model kind), expert, eval, toy; plus a global seed
// and output directory. Any key not listed here is a ConfigError.

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "holobench/dataset.hpp"
#include "holobench/expert.hpp"
#include "holobench/models/model.hpp"
#include "holobench/toy.hpp"

namespace holo {

struct ExpertSettings {
    double c = 1.0;
    double threshold_fraction = 0.5;
};

struct EvalConfig {
    int k = 5;
    std::size_t n_holdout = 200;
    std::size_t n_synthetic = 200;
    std::uint64_t seed = 42;
    std::size_t gallery = 12;

    void validate() const {
        if (k < 1) throw ConfigError("eval.k must be positive");
        if (n_holdout < 1 || n_synthetic < 1) throw ConfigError("eval target counts must be positive");
    }
};

struct RunConfig {
    std::uint64_t seed = 42;
    std::string out_dir = "runs";
    BenchConfig bench{};
    SamplerConfig sampler{};
    std::map<models::ModelKind, models::TrainConfig> train;
    ExpertSettings expert{};
    EvalConfig eval{};
    toy::ToyConfig toy{};

    RunConfig() { apply_seed(seed); }

    const models::TrainConfig& train_config(models::ModelKind k) const { return train.at(k); }

    // Points every per-module seed at `s`.
    void apply_seed(std::uint64_t s) {
        seed = s;
        sampler.rng_seed = s;
        eval.seed = s;
        toy.seed = s;
        for (auto k : {models::ModelKind::cvae, models::ModelKind::cgan, models::ModelKind::cvae_forward}) {
            auto c = train.contains(k) ? train.at(k) : models::TrainConfig::defaults(k);
            c.seed = s;
            train[k] = c;
        }
    }
};

namespace detail {

// Reads known keys from one JSON object and rejects the rest.
class Section {
public:
    Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
    }

    template <typename T>
    bool get(const std::string& key, T& out) {
        if (!j_.contains(key)) return false;
        seen_.insert(key);
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config key '" + path(key) + "': " + e.what());
        }
        return true;
    }

    const nlohmann::json* child(const std::string& key) {
        if (!j_.contains(key)) return nullptr;
        seen_.insert(key);
        return &j_.at(key);
    }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.contains(key)) throw ConfigError("unknown config key '" + path(key) + "'");
    }

    std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

private:
    const nlohmann::json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

} // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    detail::Section root(j, "");
    std::uint64_t seed = cfg.seed;
    root.get("seed", seed);
    cfg.apply_seed(seed);
    root.get("out_dir", cfg.out_dir);

    if (const auto* b = root.child("bench")) {
        detail::Section s(*b, "bench");
        if (const auto* g = s.child("grid")) {
            detail::Section gs(*g, "bench.grid");
            gs.get("pad_size", cfg.bench.grid.pad_size);
            gs.get("bins", cfg.bench.grid.bin);
            gs.get("slm_size", cfg.bench.grid.slm_size);
            gs.get("crop_size", cfg.bench.grid.crop_size);
            gs.finish();
        }
        s.get("jitter_amplitude", cfg.bench.jitter_amplitude);
        s.get("quantize_8bit", cfg.bench.quantize_8bit);
        s.get("rng_seed", cfg.bench.rng_seed);
        s.finish();
    }
    if (const auto* sm = root.child("sampler")) {
        detail::Section s(*sm, "sampler");
        s.get("sparseness_threshold", cfg.sampler.sparseness_threshold);
        s.get("n_patterns", cfg.sampler.n_patterns);
        s.get("phase_redraws", cfg.sampler.phase_redraws);
        s.get("rng_seed", cfg.sampler.rng_seed);
        s.finish();
    }
    if (const auto* t = root.child("train")) {
        if (!t->is_object()) throw ConfigError("config section 'train' must be an object");
        for (const auto& [key, value] : t->items()) {
            const auto kind = models::model_kind_from_string(key);
            cfg.train[kind] = models::train_config_from_json(value, cfg.train.at(kind));
        }
    }
    if (const auto* e = root.child("expert")) {
        detail::Section s(*e, "expert");
        s.get("c", cfg.expert.c);
        s.get("threshold_fraction", cfg.expert.threshold_fraction);
        s.finish();
    }
    if (const auto* e = root.child("eval")) {
        detail::Section s(*e, "eval");
        s.get("k", cfg.eval.k);
        s.get("n_holdout", cfg.eval.n_holdout);
        s.get("n_synthetic", cfg.eval.n_synthetic);
        s.get("seed", cfg.eval.seed);
        s.get("gallery", cfg.eval.gallery);
        s.finish();
    }
    if (const auto* ty = root.child("toy")) {
        detail::Section s(*ty, "toy");
        auto& c = cfg.toy;
        s.get("sigma", c.sigma);
        s.get("n_train", c.n_train);
        s.get("n_test", c.n_test);
        s.get("latent_dim", c.latent_dim);
        s.get("alpha", c.alpha);
        s.get("beta", c.beta);
        s.get("seed", c.seed);
        s.get("symmetric_domain", c.symmetric_domain);
        s.get("epochs", c.epochs);
        s.get("forward_epochs", c.forward_epochs);
        s.get("batch_size", c.batch_size);
        s.get("learning_rate", c.learning_rate);
        s.get("final_lr_fraction", c.final_lr_fraction);
        s.get("hidden", c.hidden);
        s.get("disc_updates_per_gen", c.disc_updates_per_gen);
        s.finish();
    }
    root.finish();

    cfg.bench.validate();
    cfg.sampler.validate();
    ExpertCalibration{.c = cfg.expert.c, .threshold_fraction = cfg.expert.threshold_fraction}.validate();
    cfg.eval.validate();
    cfg.toy.validate();
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json train = nlohmann::json::object();
    for (const auto& [kind, tc] : c.train) train[models::to_string(kind)] = models::to_json(tc);
    const auto& t = c.toy;
    nlohmann::json bench = bench_to_json(c.bench);
    return {{"seed", c.seed},
            {"out_dir", c.out_dir},
            {"bench", bench},
            {"sampler", sampler_to_json(c.sampler)},
            {"train", train},
            {"expert", {{"c", c.expert.c}, {"threshold_fraction", c.expert.threshold_fraction}}},
            {"eval",
             {{"k", c.eval.k},
              {"n_holdout", c.eval.n_holdout},
              {"n_synthetic", c.eval.n_synthetic},
              {"seed", c.eval.seed},
              {"gallery", c.eval.gallery}}},
            {"toy",
             {{"sigma", t.sigma},
              {"n_train", t.n_train},
              {"n_test", t.n_test},
              {"latent_dim", t.latent_dim},
              {"alpha", t.alpha},
              {"beta", t.beta},
              {"seed", t.seed},
              {"symmetric_domain", t.symmetric_domain},
              {"epochs", t.epochs},
              {"forward_epochs", t.forward_epochs},
              {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"final_lr_fraction", t.final_lr_fraction},
              {"hidden", t.hidden},
              {"disc_updates_per_gen", t.disc_updates_per_gen}}}};
}

// Held-out records used by both training and the test suite: the last
// min(n_holdout, N / 5) records of the file.
inline models::Split holdout_split(const DatasetHeader& h, const EvalConfig& e) {
    const std::size_t n = std::min<std::size_t>(e.n_holdout, h.record_count / 5);
    if (n == 0) throw InvalidArgument("dataset too small to hold out any records");
    return models::split_holdout(h, n);
}

} // namespace holo
