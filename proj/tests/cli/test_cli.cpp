// SPDX-License-Identifier: Apache-2.0
//
// Runs the resadapt executable end to end on synthetic data.

#include "resadapt/io.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = RESADAPT_CLI_PATH;
const std::string kSignFlip = RESADAPT_SIGNFLIP_PATH;

struct Workspace {
    fs::path root;
    explicit Workspace(const std::string& name) : root(fs::temp_directory_path() / ("resadapt_cli_" + name)) {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~Workspace() { fs::remove_all(root); }
    std::string operator/(const std::string& p) const { return (root / p).string(); }
};

struct Run {
    int status;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Run run(const Workspace& ws, const std::string& args, const std::string& env = "") {
    const std::string out = ws / ".stdout";
    const std::string err = ws / ".stderr";
    const std::string cmd = env + " " + args + " >" + out + " 2>" + err;
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

json load(const std::string& path) {
    std::ifstream in(path);
    return json::parse(in);
}

std::string synth(const Workspace& ws, const std::string& dir, const std::string& flags) {
    const auto r = run(ws, kCli + " synth --out " + (ws / dir) + " " + flags);
    REQUIRE(r.status == 0);
    return ws / (dir + "/manifest.json");
}

const std::string kModerate = "--noise 0.4 --anchor-noise 0.3 --shift 0.3 --seed 7";

} // namespace

TEST_CASE("synth is reproducible file for file") {
    Workspace ws("synth");
    synth(ws, "a", kModerate + " --samples 30");
    synth(ws, "b", kModerate + " --samples 30");
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(ws.root / "a")) {
        const auto twin = ws.root / "b" / entry.path().filename();
        REQUIRE(fs::exists(twin));
        CHECK(slurp(entry.path()) == slurp(twin));
        ++files;
    }
    CHECK(files == 1 + 1 + 3 * 2);
    CHECK(run(ws, kCli + " synth --out " + (ws / "c") + " --classes 1").status == 1);
}

TEST_CASE("zeroshot") {
    Workspace ws("zeroshot");
    const auto clean = synth(ws, "clean", "--samples 20");
    auto r = run(ws, kCli + " zeroshot --manifest " + clean + " --json " + (ws / "z.json"));
    REQUIRE(r.status == 0);
    const auto report = load(ws / "z.json");
    CHECK(report["method"] == "zero-shot");
    CHECK(report["hyperparameters"]["tau"] == 0.01);
    REQUIRE(report["splits"].size() == 3);
    for (const auto& s : report["splits"]) {
        CHECK(s["accuracy"] == 100.0);
    }
    CHECK(r.out.find("domain1") != std::string::npos);

    run(ws, kCli + " zeroshot --manifest " + clean + " --json " + (ws / "z2.json"));
    CHECK(slurp(ws / "z.json") == slurp(ws / "z2.json"));

    r = run(ws, kCli + " zeroshot --manifest " + clean + " --domain-prior");
    CHECK(r.status == 2);
    CHECK(r.err.find("ManifestInvalid") != std::string::npos);
    CHECK(r.err.find("domain_anchor_bank_path") != std::string::npos);

    CHECK(run(ws, kCli + " zeroshot --manifest " + clean + " --split nowhere").status == 1);
    CHECK(run(ws, kCli + " zeroshot --manifest " + clean + " --tau 0").status == 1);
    CHECK(run(ws, kCli + " zeroshot --manifest " + (ws / "missing.json")).status == 2);
    CHECK(run(ws, kCli + " zeroshot").status == 1);
    CHECK(run(ws, kCli + " frobnicate").status == 1);

    auto manifest = resadapt::io::load_manifest(clean);
    manifest.splits[1].labels_path.reset();
    resadapt::io::save_manifest(manifest, ws / "clean/unlabeled.json");
    r = run(ws, kCli + " zeroshot --manifest " + (ws / "clean/unlabeled.json"));
    CHECK(r.status == 2);
    CHECK(r.err.find("MissingLabels") != std::string::npos);
}

TEST_CASE("zeroshot with domain-decorated anchors") {
    Workspace ws("prior");
    const auto path = synth(ws, "p", kModerate + " --samples 20");
    auto manifest = resadapt::io::load_manifest(path);
    manifest.domain_anchor_bank_path = manifest.anchor_bank_path;
    resadapt::io::save_manifest(manifest, ws / "p/prior.json");
    const auto a = run(ws, kCli + " zeroshot --manifest " + (ws / "p/prior.json") + " --domain-prior --json " +
                               (ws / "a.json"));
    REQUIRE(a.status == 0);
    run(ws, kCli + " zeroshot --manifest " + path + " --json " + (ws / "b.json"));
    const auto ja = load(ws / "a.json");
    CHECK(ja["method"] == "domain-prior");
    CHECK(ja["splits"] == load(ws / "b.json")["splits"]);
}

TEST_CASE("selftrain") {
    Workspace ws("selftrain");
    const auto m = synth(ws, "s", kModerate);

    auto r = run(ws, kCli + " selftrain --manifest " + m + " --epochs 0 --json " + (ws / "e0.json"));
    REQUIRE(r.status == 0);
    for (const auto& s : load(ws / "e0.json")["splits"]) {
        CHECK(s["accuracy"] == s["accuracy_before"]);
    }

    CHECK(run(ws, kCli + " selftrain --manifest " + m + " --gamma 1.1").status == 1);
    CHECK(run(ws, kCli + " selftrain --manifest " + m + " --batch 0").status == 1);

    r = run(ws, kCli + " selftrain --manifest " + m + " --gamma 1 --tau 1");
    CHECK(r.status == 2);
    CHECK(r.err.find("NoRetainedSamples") != std::string::npos);
    CHECK(r.err.find("gamma=1") != std::string::npos);
    CHECK(r.err.find("max confidence") != std::string::npos);

    r = run(ws, kCli + " selftrain --manifest " + m + " --seed 7 --out " + (ws / "res") + " --json " +
                    (ws / "st.json"));
    REQUIRE(r.status == 0);
    CHECK(r.out.find("domain0 epoch 4 retained") != std::string::npos);
    const auto report = load(ws / "st.json");
    CHECK(report["method"] == "self-training");
    const auto& h = report["hyperparameters"];
    CHECK(h["gamma"] == 0.5);
    CHECK(h["learning_rate"] == 3e-4);
    CHECK(h["batch_size"] == 64);
    CHECK(h["epochs"] == 5);
    CHECK(h["seed"] == 7);
    CHECK(report["mean_accuracy"].get<double>() >= report["mean_accuracy_before"].get<double>());
    for (const auto& s : report["splits"]) {
        CHECK(s["retained"].get<int>() > 0);
        CHECK(s["epochs"].size() == 5);
        CHECK(fs::exists(s["output"].get<std::string>()));
    }
    CHECK(resadapt::io::read_residual(ws / "res/domain2.emb").values.rows() == 5);

    run(ws, kCli + " selftrain --manifest " + m + " --seed 7 --json " + (ws / "t1.json"), "RESADAPT_THREADS=1");
    run(ws, kCli + " selftrain --manifest " + m + " --seed 7 --json " + (ws / "t8.json"), "RESADAPT_THREADS=8");
    CHECK(slurp(ws / "t1.json") == slurp(ws / "t8.json"));
}

TEST_CASE("dgtrain") {
    Workspace ws("dgtrain");
    const auto m = synth(ws, "d", kModerate + " --samples 60");

    auto r = run(ws, kCli + " dgtrain --manifest " + m + " --seed 11 --out " + (ws / "dis") + " --json " +
                    (ws / "dis.json"));
    REQUIRE(r.status == 0);
    const auto dis = load(ws / "dis.json");
    CHECK(dis["method"] == "dg-shared");
    REQUIRE(dis["splits"].size() == 3);
    CHECK(dis["splits"][0]["retained_by_domain"].size() == 2);
    CHECK(dis["splits"][0]["retained_by_domain"].contains("domain1"));

    r = run(ws, kCli + " dgtrain --manifest " + m + " --seed 11 --out " + (ws / "dis") + " --eval-only --json " +
                (ws / "eval1.json"));
    REQUIRE(r.status == 0);
    for (const auto& entry : fs::recursive_directory_iterator(ws.root / "dis")) {
        if (entry.path().filename().string().rfind("specific_", 0) == 0) {
            fs::remove(entry.path());
        }
    }
    r = run(ws, kCli + " dgtrain --manifest " + m + " --seed 11 --out " + (ws / "dis") + " --eval-only --json " +
                (ws / "eval2.json"));
    REQUIRE(r.status == 0);
    CHECK(slurp(ws / "eval1.json") == slurp(ws / "eval2.json"));
    const auto eval = load(ws / "eval1.json");
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(eval["splits"][i]["accuracy"] == dis["splits"][i]["accuracy"]);
    }

    r = run(ws, kCli + " dgtrain --manifest " + m + " --baseline common --seed 11 --holdout domain1 --json " +
                (ws / "com.json"));
    REQUIRE(r.status == 0);
    const auto com = load(ws / "com.json");
    CHECK(com["method"] == "dg-common-baseline");
    CHECK(com["splits"].size() == 1);

    CHECK(run(ws, kCli + " dgtrain --manifest " + m + " --baseline shared").status == 1);
    CHECK(run(ws, kCli + " dgtrain --manifest " + m + " --eval-only").status == 1);
}

TEST_CASE("dgtrain common on one source domain matches selftrain") {
    Workspace ws("pooled");
    const auto full = synth(ws, "p", kModerate + " --samples 40");
    auto manifest = resadapt::io::load_manifest(full);
    manifest.splits.resize(2);
    resadapt::io::save_manifest(manifest, ws / "p/two.json");
    const std::string two = ws / "p/two.json";

    REQUIRE(run(ws, kCli + " dgtrain --manifest " + two + " --baseline common --holdout domain1 --seed 3 --out " +
                        (ws / "dg")).status == 0);
    REQUIRE(run(ws, kCli + " selftrain --manifest " + two + " --target domain0 --seed 3 --out " + (ws / "st"))
                .status == 0);
    CHECK(slurp(ws / "dg/domain1.emb") == slurp(ws / "st/domain0.emb"));

    CHECK(run(ws, kCli + " dgtrain --manifest " + two + " --holdout domain1").status == 1);
}

TEST_CASE("gradcheck") {
    Workspace ws("gradcheck");
    auto r = run(ws, kCli + " gradcheck --json " + (ws / "g.json"));
    CHECK(r.status == 0);
    CHECK(r.out.find("violations 0") != std::string::npos);
    CHECK(r.out.find("rel_error") != std::string::npos);
    CHECK(load(ws / "g.json")["worst"]["relative_error"].get<double>() < 1e-4);

    r = run(ws, kSignFlip + " gradcheck");
    CHECK(r.status == 3);
    CHECK(r.err.find("GradientMismatch") != std::string::npos);
}
