#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "holobench/models/model.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "holobench_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

struct Result {
    int code = -1;
    std::string out;
};

Result run(const std::string& args) {
    const fs::path out = work_dir() / "stdout.txt";
    const std::string cmd = std::string(HOLOBENCH_CLI) + " " + args + " > " + out.string() + " 2> /dev/null";
    const int status = std::system(cmd.c_str());
    std::ifstream is(out);
    std::stringstream ss;
    ss << is.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string write_file(const std::string& name, const std::string& body) {
    const fs::path p = work_dir() / name;
    std::ofstream os(p);
    os << body;
    return p.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// 34 patterns x 3 redraws = 102 records, built once for the whole suite.
const std::string& small_dataset() {
    static const std::string path = [] {
        const std::string cfg = write_file("small.json", R"({"sampler": {"n_patterns": 34}})");
        const std::string p = (work_dir() / "small.holo").string();
        EXPECT_EQ(run("gen-data --config " + cfg + " --out " + p).code, 0);
        return p;
    }();
    return path;
}

std::string single_spot_json(int i, int j) {
    nlohmann::json pairs = nlohmann::json::array();
    for (int k = 0; k < 64; ++k) pairs.push_back({k == i * 8 + j ? 1.0 : 0.0, 0.0});
    return write_file("f.json", pairs.dump());
}

} // namespace

TEST(Cli, SimulateSingleSpot) {
    const auto r = run("simulate --f " + single_spot_json(2, 5) + " --out-dir " + (work_dir() / "sim").string());
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("row 35 col 65 value 1"), std::string::npos) << r.out;
    EXPECT_TRUE(fs::exists(work_dir() / "sim" / "hologram.pgm"));
    EXPECT_TRUE(fs::exists(work_dir() / "sim" / "intensity.pgm"));
}

TEST(Cli, GenDataIsReproducible) {
    const std::string& a = small_dataset();
    const std::string cfg = work_dir() / "small.json";
    const std::string b = (work_dir() / "small_again.holo").string();
    const auto r = run("gen-data --config " + cfg + " --out " + b);
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("records 102"), std::string::npos);
    EXPECT_EQ(slurp(a), slurp(b));
    const auto manifest = read_json(a + ".json");
    EXPECT_EQ(manifest.at("resolved_config").at("sampler").at("n_patterns"), 34);
}

TEST(Cli, TrainOneEpochWritesLoadableCheckpoint) {
    const std::string ckpt = (work_dir() / "cvae.ckpt").string();
    ASSERT_EQ(run("train --model cvae --epochs 1 --data " + small_dataset() + " --out " + ckpt).code, 0);
    const auto m = holo::models::GenerativeModel::load(ckpt);
    EXPECT_EQ(m->kind(), holo::models::ModelKind::cvae);
    EXPECT_EQ(m->epochs_completed(), 1);
    const auto manifest = read_json(ckpt + ".json");
    EXPECT_EQ(manifest.at("resolved_config").at("train").at("cvae").at("epochs"), 1);
    EXPECT_EQ(manifest.at("holdout_records"), 20);
    EXPECT_TRUE(fs::exists(ckpt + ".log.jsonl"));
}

TEST(Cli, EvalIdentityReplay) {
    const fs::path dir = work_dir() / "ev_identity";
    ASSERT_EQ(run("eval --model identity --data " + small_dataset() + " --out " + dir.string()).code, 0);
    const auto s = read_json(dir / "summary.json");
    EXPECT_LE(s.at("e_i_min").at("mean").get<double>(), 1e-9);
    EXPECT_EQ(s.at("targets"), 20);
    EXPECT_TRUE(fs::exists(dir / "report.csv"));
}

TEST(Cli, ExpertCalibrationAndEval) {
    const std::string cal = (work_dir() / "expert.json").string();
    ASSERT_EQ(run("train --model expert --data " + small_dataset() + " --out " + cal).code, 0);
    EXPECT_LT(read_json(cal).at("residual").get<double>(), 1e-6);
    const fs::path dir = work_dir() / "ev_expert";
    ASSERT_EQ(run("eval --model " + cal + " --suite synthetic --k 2 --out " + dir.string() + " --gallery").code, 0);
    EXPECT_EQ(read_json(dir / "summary.json").at("k"), 2);
    EXPECT_FALSE(fs::is_empty(dir / "gallery"));
}

TEST(Cli, ToyWritesOneRowPerRun) {
    const std::string cfg =
        write_file("toy.json", R"({"toy": {"n_train": 200, "n_test": 50, "epochs": 2, "forward_epochs": 2}})");
    const std::string csv = (work_dir() / "toy.csv").string();
    ASSERT_EQ(run("toy --config " + cfg + " --sigma 0.01 --sigma 0.1 --seeds 2 --out " + csv).code, 0);
    std::ifstream is(csv);
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "sigma,seed,model,e_y");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 2 * 2 * 2);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("train --model vae --data x --out y").code, 2);
    const std::string bad_key = write_file("bad_key.json", R"({"sampler": {"patterns": 3}})");
    EXPECT_EQ(run("gen-data --config " + bad_key + " --out " + (work_dir() / "x.holo").string()).code, 2);
    const std::string zero = write_file("zero.json", R"({"sampler": {"n_patterns": 0}})");
    EXPECT_EQ(run("gen-data --config " + zero + " --out " + (work_dir() / "x.holo").string()).code, 2);
    const std::string bad_f = write_file("bad_f.json", "[[1, 0]]");
    EXPECT_EQ(run("simulate --f " + bad_f + " --out-dir " + work_dir().string()).code, 2);
    EXPECT_EQ(run("eval --model identity --data " + (work_dir() / "missing.holo").string() + " --out " +
                  work_dir().string())
                  .code,
              3);
}
