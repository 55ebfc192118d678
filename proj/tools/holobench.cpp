#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "holobench/core/alloc.hpp"
#include "holobench/eval.hpp"
#include "holobench/expert.hpp"
#include "holobench/pgm.hpp"
#include "holobench/run_config.hpp"
#include "holobench/toy.hpp"

namespace fs = std::filesystem;
using holo::models::GenerativeModel;
using holo::models::ModelKind;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
    std::string config;
    unsigned threads = 0;
    std::optional<std::uint64_t> seed;

    holo::RunConfig resolve() const {
        holo::RunConfig cfg = config.empty() ? holo::RunConfig{} : holo::load_run_config(config);
        if (seed) cfg.apply_seed(*seed);
        return cfg;
    }
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "JSON run configuration");
    cmd->add_option("--threads", c.threads, "worker cap (falls back to HOLOBENCH_THREADS)");
    cmd->add_option("--seed", c.seed, "overrides every seed in the configuration");
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw holo::IoError("cannot open " + path.string());
    os << j.dump(2) << '\n';
    if (!os.flush()) throw holo::IoError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw holo::IoError("cannot open " + path.string());
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw holo::ConfigError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

bool is_expert_file(const fs::path& path) {
    std::ifstream is(path);
    char c = 0;
    is >> c;
    return c == '{';
}

// ---- gen-data ----

int gen_data(const Common& common, const std::string& out) {
    const holo::RunConfig cfg = common.resolve();
    const unsigned threads = holo::resolve_threads(common.threads);
    const auto header = holo::build_dataset(cfg.sampler, cfg.bench, out, threads);
    const std::string hash = holo::file_hash(out);
    json manifest = holo::dataset_manifest(header, hash);
    manifest["resolved_config"] = holo::to_json(cfg);
    write_json(out + ".json", manifest);
    std::cout << "records " << header.record_count << "\nhash " << hash << '\n';
    return 0;
}

// ---- train ----

int train(const Common& common, const std::string& model, const std::string& data, const std::string& out,
          std::optional<int> epochs) {
    holo::RunConfig cfg = common.resolve();
    const holo::Dataset ds = holo::Dataset::load(data);
    const fs::path out_path(out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());

    if (model == "expert") {
        const auto cal = holo::calibrate(ds.header().bench(), cfg.expert.c, cfg.expert.threshold_fraction);
        json j = holo::to_json(cal);
        j["kind"] = "expert";
        write_json(out_path, j);
        write_json(out + ".json", {{"kind", "expert"}, {"dataset_hash", holo::file_hash(data)},
                                   {"resolved_config", holo::to_json(cfg)}, {"created_utc", holo::utc_timestamp()}});
        std::cout << "expert calibration residual " << cal.residual << '\n';
        return 0;
    }

    const ModelKind kind = holo::models::model_kind_from_string(model);
    holo::models::TrainConfig tc = cfg.train.at(kind);
    if (epochs) tc.epochs = *epochs;
    tc.validate();
    cfg.train[kind] = tc;

    const auto split = holo::holdout_split(ds.header(), cfg.eval);
    GenerativeModel m(kind, tc);
    std::ofstream log(out + ".log.jsonl");
    if (!log) throw holo::IoError("cannot open " + out + ".log.jsonl");
    m.train(ds, split.train, [&](const holo::models::EpochLog& e) {
        const std::string line = e.to_json().dump();
        log << line << '\n' << std::flush;
        std::cerr << line << '\n';
    });
    m.save(out_path);
    write_json(out + ".json", {{"kind", holo::models::to_string(kind)},
                               {"dataset_hash", holo::file_hash(data)},
                               {"train_records", split.train.size()},
                               {"holdout_records", split.holdout.size()},
                               {"resolved_config", holo::to_json(cfg)},
                               {"created_utc", holo::utc_timestamp()}});
    std::cout << "checkpoint " << out << '\n';
    return 0;
}

// ---- eval ----

int eval(const Common& common, const std::string& model, const std::string& suite, std::optional<int> k,
         const std::string& data, const std::string& out_dir, bool gallery) {
    holo::RunConfig cfg = common.resolve();
    if (k) cfg.eval.k = *k;
    cfg.eval.validate();
    if (suite != "test" && suite != "synthetic") throw holo::ConfigError("unknown suite '" + suite + "'");

    std::optional<holo::Dataset> ds;
    if (!data.empty()) ds = holo::Dataset::load(data);
    const holo::BenchConfig bench = ds ? ds->header().bench() : cfg.bench;

    std::vector<holo::EvalTarget> targets;
    if (suite == "test") {
        if (!ds) throw holo::ConfigError("--suite test needs --data");
        targets = holo::test_targets(*ds, holo::holdout_split(ds->header(), cfg.eval).holdout);
    } else {
        holo::Rng rng(holo::substream(cfg.eval.seed, 0, 0x5e7));
        targets = holo::make_synthetic_targets(cfg.eval.n_synthetic, rng);
    }

    std::unique_ptr<GenerativeModel> net;
    holo::Proposer proposer;
    if (model == "identity") {
        proposer = holo::identity_replay_proposer();
    } else if (is_expert_file(model)) {
        proposer = holo::expert_proposer(holo::expert_calibration_from_json(read_json(model)));
    } else {
        net = GenerativeModel::load(model);
        proposer = holo::model_proposer(*net);
    }

    const auto rep = holo::evaluate_suite(proposer, targets, bench, cfg.eval.k, cfg.eval.seed, suite);
    const fs::path dir(out_dir);
    holo::write_report_csv(rep, dir / "report.csv");
    json summary = holo::report_summary(rep);
    summary["resolved_config"] = holo::to_json(cfg);
    write_json(dir / "summary.json", summary);
    if (gallery) holo::write_gallery(rep, targets, dir / "gallery", cfg.eval.gallery);
    const auto m = rep.e_i_min();
    std::printf("%s %s k=%d mean best E_I %.6g +- %.2g over %zu targets\n", rep.model.c_str(), suite.c_str(), rep.k,
                m.mean, m.sem, rep.records.size());
    return 0;
}

// ---- toy ----

int toy_cmd(const Common& common, std::vector<double> sigmas, int seeds, std::vector<std::string> kinds,
            const std::string& out, const std::string& scatter_out) {
    const holo::RunConfig cfg = common.resolve();
    if (sigmas.empty()) sigmas.push_back(cfg.toy.sigma);
    if (seeds < 1) throw holo::ConfigError("--seeds must be positive");
    std::ofstream os(out);
    if (!os) throw holo::IoError("cannot open " + out);
    os.precision(17);
    os << "sigma,seed,model,e_y\n";
    std::optional<std::ofstream> sc;
    if (!scatter_out.empty()) {
        sc.emplace(scatter_out);
        if (!*sc) throw holo::IoError("cannot open " + scatter_out);
        sc->precision(17);
        *sc << "sigma,seed,model,y,z,x_hat,e_y\n";
    }
    for (double sigma : sigmas) {
        for (int s = 0; s < seeds; ++s) {
            holo::toy::ToyConfig tc = cfg.toy;
            tc.sigma = sigma;
            tc.seed = cfg.toy.seed + static_cast<std::uint64_t>(s);
            for (const auto& name : kinds) {
                std::vector<holo::toy::ToyPoint> pts;
                const double e = holo::toy::run_toy(holo::toy::toy_kind_from_string(name), tc, sc ? &pts : nullptr);
                os << sigma << ',' << tc.seed << ',' << name << ',' << e << '\n';
                for (const auto& p : pts)
                    *sc << sigma << ',' << tc.seed << ',' << name << ',' << p.y << ',' << p.z << ',' << p.xhat << ','
                        << p.e_y << '\n';
                std::printf("sigma %g seed %llu %s E_y %.6g\n", sigma, static_cast<unsigned long long>(tc.seed),
                            name.c_str(), e);
            }
        }
    }
    if (!os.flush()) throw holo::IoError("write failed: " + out);
    return 0;
}

// ---- simulate ----

holo::FMatrix fmatrix_from_json(const json& j) {
    holo::FMatrix f;
    try {
        if (j.is_object()) {
            const auto amp = j.at("amp").get<std::vector<double>>();
            const auto phase = j.at("phase").get<std::vector<double>>();
            if (amp.size() != holo::kGridCells || phase.size() != holo::kGridCells)
                throw holo::ConfigError("f JSON: amp and phase need 64 entries each");
            std::copy(amp.begin(), amp.end(), f.amp.begin());
            std::copy(phase.begin(), phase.end(), f.phase.begin());
        } else {
            const auto pairs = j.get<std::vector<std::array<double, 2>>>();
            if (pairs.size() != holo::kGridCells) throw holo::ConfigError("f JSON: expected 64 [amp, phase] pairs");
            for (int k = 0; k < holo::kGridCells; ++k) {
                f.amp[k] = pairs[k][0];
                f.phase[k] = pairs[k][1];
            }
        }
        f.validate();
    } catch (const json::exception& e) {
        throw holo::ConfigError(std::string("malformed f JSON: ") + e.what());
    } catch (const holo::InvalidArgument& e) {
        throw holo::ConfigError(std::string("malformed f JSON: ") + e.what());
    }
    return f;
}

int simulate(const Common& common, const std::string& f_path, const std::string& out_dir) {
    const holo::RunConfig cfg = common.resolve();
    const holo::FMatrix f = fmatrix_from_json(read_json(f_path));
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    const holo::Hologram h = holo::compute_hologram(f, cfg.bench.grid);
    const holo::IntensityImage img = holo::simulate_intensity(h, cfg.bench);
    holo::write_pgm(dir / "f_amplitude.pgm", f.amp, holo::kGridSide, holo::kGridSide);
    holo::write_pgm(dir / "hologram.pgm", h);
    holo::write_pgm(dir / "intensity.pgm", img);
    const auto [r, c] = img.argmax();
    std::printf("brightest pixel row %d col %d value %.9g\n", r, c, img.max());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    holo::tune_allocator();
    CLI::App app{"Holography phase retrieval benchmark"};
    app.require_subcommand(1);

    Common common;
    std::string out, data, model, suite = "test", f_path, out_dir, scatter;
    std::optional<int> epochs, k;
    bool gallery = false;
    std::vector<double> sigmas;
    int seeds = 5;
    std::vector<std::string> toy_models{"cvae", "cvae-forward"};

    auto* gen = app.add_subcommand("gen-data", "simulate a dataset of (f, I) records");
    add_common(gen, common);
    gen->add_option("--out", out, "dataset path")->required();

    auto* tr = app.add_subcommand("train", "train a generative model or calibrate the expert system");
    add_common(tr, common);
    tr->add_option("--model", model, "cvae | cgan | cvae-forward | expert")
        ->required()
        ->check(CLI::IsMember({"cvae", "cgan", "cvae-forward", "expert"}));
    tr->add_option("--data", data, "dataset path")->required();
    tr->add_option("--out", out, "checkpoint path")->required();
    tr->add_option("--epochs", epochs, "overrides the configured epoch count");

    auto* ev = app.add_subcommand("eval", "best-of-k evaluation on the test or synthetic suite");
    add_common(ev, common);
    ev->add_option("--model", model, "checkpoint, expert calibration, or 'identity'")->required();
    ev->add_option("--suite", suite, "test | synthetic")->check(CLI::IsMember({"test", "synthetic"}));
    ev->add_option("--k", k, "latent draws per target");
    ev->add_option("--data", data, "dataset path (test suite)");
    ev->add_option("--out", out_dir, "report directory")->required();
    ev->add_flag("--gallery", gallery, "write target / best reconstruction PGM pairs");

    auto* ty = app.add_subcommand("toy", "noisy-square toy study");
    add_common(ty, common);
    ty->add_option("--sigma", sigmas, "noise level(s)");
    ty->add_option("--seeds", seeds, "training seeds per sigma");
    ty->add_option("--models", toy_models, "toy model kinds")->delimiter(',');
    ty->add_option("--out", out, "CSV path")->required();
    ty->add_option("--scatter", scatter, "per-target CSV path");

    auto* sim = app.add_subcommand("simulate", "render f -> hologram -> intensity");
    add_common(sim, common);
    sim->add_option("--f", f_path, "f-matrix JSON")->required();
    sim->add_option("--out-dir", out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*gen) return gen_data(common, out);
        if (*tr) return train(common, model, data, out, epochs);
        if (*ev) return eval(common, model, suite, k, data, out_dir, gallery);
        if (*ty) return toy_cmd(common, sigmas, seeds, toy_models, out, scatter);
        if (*sim) return simulate(common, f_path, out_dir);
    } catch (const holo::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitConfig;
}
