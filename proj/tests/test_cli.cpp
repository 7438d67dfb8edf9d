#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "gridcrf/bench.hpp"
#include "gridcrf/model_io.hpp"
#include "gridcrf/pgm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli_path() {
    const char* p = std::getenv("GRIDCRF_CLI");
    REQUIRE_MESSAGE(p != nullptr, "GRIDCRF_CLI must point at the built binary");
    return p;
}

struct RunResult {
    int exit_code;
    std::string out;
};

RunResult run(const std::string& args, bool keep_stderr = false) {
    const std::string cmd = cli_path() + " " + args + (keep_stderr ? " 2>&1" : " 2>/dev/null");
    std::FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe);
    std::string out;
    char buf[4096];
    size_t got;
    while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, got);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("gridcrf_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

} // namespace

TEST_CASE("cli usage errors exit with code 2") {
    CHECK(run("nonsense").exit_code == 2);
    CHECK(run("generate --no-such-flag x").exit_code == 2);
    CHECK(run("train --out /tmp/x.json").exit_code == 2); // missing --data
    CHECK(run("--help").exit_code == 0);
}

TEST_CASE("generate is deterministic and honors counts") {
    const fs::path dir = fresh_dir("gen");
    write_file(dir / "spec.json",
               R"({"height":8,"width":8,"num_train":2,"num_test":1,"snr":0.5,"seed":11})");

    const RunResult first = run("generate --spec " + (dir / "spec.json").string() + " --out " +
                                (dir / "a").string());
    CHECK(first.exit_code == 0);
    const json manifest = json::parse(first.out);
    CHECK(manifest.at("train").size() == 2);
    CHECK(manifest.at("test").size() == 1);
    CHECK(fs::exists(dir / "a/train/img_0001.pgm"));
    CHECK(fs::exists(dir / "a/train/truth_0001.pgm"));
    CHECK(fs::exists(dir / "a/manifest.json"));

    const RunResult second = run("generate --spec " + (dir / "spec.json").string() + " --out " +
                                 (dir / "b").string());
    CHECK(second.exit_code == 0);
    CHECK(slurp(dir / "a/train/img_0000.pgm") == slurp(dir / "b/train/img_0000.pgm"));
    CHECK(slurp(dir / "a/test/truth_0000.pgm") == slurp(dir / "b/test/truth_0000.pgm"));

    // --seed overrides the spec seed
    const RunResult reseeded = run("generate --spec " + (dir / "spec.json").string() + " --out " +
                                   (dir / "c").string() + " --seed 99");
    CHECK(reseeded.exit_code == 0);
    CHECK(slurp(dir / "a/train/img_0000.pgm") != slurp(dir / "c/train/img_0000.pgm"));

    // invalid spec values are a usage error
    write_file(dir / "bad.json", R"({"height":8,"width":8,"num_train":0,"num_test":1})");
    CHECK(run("generate --spec " + (dir / "bad.json").string() + " --out " + (dir / "d").string())
              .exit_code == 2);
}

TEST_CASE("json config file mirrors flags and flags win") {
    const fs::path dir = fresh_dir("cfg");
    write_file(dir / "spec.json",
               R"({"height":8,"width":8,"num_train":1,"num_test":1,"snr":0.5,"seed":3})");
    write_file(dir / "gen.json", json{{"spec", (dir / "spec.json").string()},
                                      {"out", (dir / "from_config").string()},
                                      {"seed", 42}}
                                     .dump());

    CHECK(run("generate --config " + (dir / "gen.json").string()).exit_code == 0);
    CHECK(fs::exists(dir / "from_config/manifest.json"));

    // the explicit flag beats the config value
    CHECK(run("generate --config " + (dir / "gen.json").string() + " --out " +
              (dir / "flag_wins").string())
              .exit_code == 0);
    CHECK(fs::exists(dir / "flag_wins/manifest.json"));
    const json m = json::parse(slurp(dir / "flag_wins/manifest.json"));
    CHECK(m.at("spec").at("seed").get<int>() == 42);
}

TEST_CASE("train writes a monotone trace and a round-trippable model") {
    const fs::path dir = fresh_dir("train");
    write_file(dir / "spec.json",
               R"({"height":8,"width":8,"num_train":4,"num_test":1,"snr":0.6,"seed":5})");
    REQUIRE(run("generate --spec " + (dir / "spec.json").string() + " --out " +
                (dir / "data").string())
                .exit_code == 0);

    const RunResult trained = run("train --data " + (dir / "data").string() + " --out " +
                                  (dir / "model.json").string() +
                                  " --lr 0.001 --iters 40 --grad-tol 0");
    CHECK(trained.exit_code == 0);
    const json info = json::parse(trained.out);
    CHECK(info.at("iterations").get<int>() == 40);

    // trace: header + iters+1 rows, objective non-decreasing for full batch
    const std::string trace = slurp(dir / "model.trace.csv");
    std::vector<double> objectives;
    size_t pos = trace.find('\n') + 1;
    while (pos < trace.size() && pos != 0) {
        const size_t c1 = trace.find(',', pos);
        const size_t c2 = trace.find(',', c1 + 1);
        objectives.push_back(std::stod(trace.substr(c1 + 1, c2 - c1 - 1)));
        const size_t nl = trace.find('\n', pos);
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    CHECK(objectives.size() == 41);
    for (size_t i = 1; i < objectives.size(); ++i) CHECK(objectives[i] >= objectives[i - 1]);

    // the model document round-trips bit-exactly
    const std::string text = slurp(dir / "model.json");
    auto [model, weights] = gridcrf::model_from_json(text);
    CHECK(gridcrf::model_to_json(model, weights) + "\n" == text);
}

TEST_CASE("infer writes maps and is reproducible") {
    const fs::path dir = fresh_dir("infer");
    write_file(dir / "spec.json",
               R"({"height":8,"width":8,"num_train":3,"num_test":2,"snr":0.5,"seed":7})");
    REQUIRE(run("generate --spec " + (dir / "spec.json").string() + " --out " +
                (dir / "data").string())
                .exit_code == 0);
    REQUIRE(run("train --data " + (dir / "data").string() + " --out " +
                (dir / "model.json").string() + " --lr 0.002 --iters 50")
                .exit_code == 0);
    const std::string model = (dir / "model.json").string();
    const std::string image = (dir / "data/test/img_0000.pgm").string();

    SUBCASE("unknown method exits 2 and lists the valid ones") {
        const RunResult r = run("infer --model " + model + " --image " + image +
                                    " --method magic --out-labels " + (dir / "x.pgm").string(),
                                true);
        CHECK(r.exit_code == 2);
        CHECK(r.out.find("locpmap") != std::string::npos);
        CHECK(r.out.find("gibbs") != std::string::npos);
    }

    SUBCASE("icm labels with a one-hot probability map") {
        const RunResult r = run("infer --model " + model + " --image " + image +
                                " --method icm --out-labels " + (dir / "icm.pgm").string() +
                                " --out-prob " + (dir / "icm_prob.pgm").string());
        CHECK(r.exit_code == 0);
        const gridcrf::PgmImage prob = gridcrf::read_pgm(dir / "icm_prob.pgm");
        for (int v : prob.pixels) CHECK(v == 255); // predicted label has probability 1
    }

    SUBCASE("locpmap writes all three maps deterministically") {
        const std::string flags = "infer --model " + model + " --image " + image +
                                  " --method locpmap --samples 50 --seed 9 --out-labels " +
                                  (dir / "l1.pgm").string() + " --out-prob " +
                                  (dir / "p1.pgm").string() + " --out-var " +
                                  (dir / "v1.pgm").string();
        CHECK(run(flags).exit_code == 0);
        const std::string flags2 = "infer --model " + model + " --image " + image +
                                   " --method locpmap --samples 50 --seed 9 --out-labels " +
                                   (dir / "l2.pgm").string() + " --out-prob " +
                                   (dir / "p2.pgm").string() + " --out-var " +
                                   (dir / "v2.pgm").string();
        CHECK(run(flags2).exit_code == 0);
        CHECK(slurp(dir / "l1.pgm") == slurp(dir / "l2.pgm"));
        CHECK(slurp(dir / "p1.pgm") == slurp(dir / "p2.pgm"));
        CHECK(slurp(dir / "v1.pgm") == slurp(dir / "v2.pgm"));
    }
}

TEST_CASE("eval scores predictions") {
    const fs::path dir = fresh_dir("eval");
    write_file(dir / "spec.json",
               R"({"height":8,"width":8,"num_train":1,"num_test":3,"snr":0.5,"seed":2})");
    REQUIRE(run("generate --spec " + (dir / "spec.json").string() + " --out " +
                (dir / "data").string())
                .exit_code == 0);

    SUBCASE("truth against itself is exactly 1") {
        const RunResult r = run("eval --pred " + (dir / "data/test").string() + " --truth " +
                                (dir / "data/test").string());
        CHECK(r.exit_code == 0);
        CHECK(r.out.find("overall,0,1,1") != std::string::npos);
        CHECK(r.out.find("overall,1,1,1") != std::string::npos);
    }

    SUBCASE("hand case matches the library iou") {
        fs::create_directories(dir / "pred");
        fs::create_directories(dir / "truth");
        gridcrf::PgmImage t;
        t.width = 4;
        t.height = 1;
        t.maxval = 1;
        t.pixels = {0, 0, 1, 1};
        gridcrf::PgmImage p = t;
        p.pixels = {0, 1, 1, 1};
        gridcrf::write_pgm_p2(dir / "truth/truth_0000.pgm", t);
        gridcrf::write_pgm_p2(dir / "pred/pred_0000.pgm", p);
        const RunResult r = run("eval --pred " + (dir / "pred").string() + " --truth " +
                                (dir / "truth").string() + " --out " + (dir / "scores").string());
        CHECK(r.exit_code == 0);
        CHECK(r.out.find("pred_0000.pgm,0,0.5,") != std::string::npos);
        const json doc = json::parse(slurp(dir / "scores.json"));
        CHECK(doc.at("overall").at("per_class_iou")[1].get<double>() ==
              doctest::Approx(2.0 / 3.0));
    }

    SUBCASE("mismatched sizes exit 2") {
        fs::create_directories(dir / "small");
        gridcrf::PgmImage s;
        s.width = 2;
        s.height = 2;
        s.maxval = 1;
        s.pixels = {0, 1, 0, 1};
        for (int i = 0; i < 3; ++i)
            gridcrf::write_pgm_p2(dir / ("small/pred_000" + std::to_string(i) + ".pgm"), s);
        CHECK(run("eval --pred " + (dir / "small").string() + " --truth " +
                  (dir / "data/test").string())
                  .exit_code == 2);
    }
}

TEST_CASE("verify emits a deterministic json report") {
    const RunResult a = run("verify --check gradcheck --seed 3");
    CHECK(a.exit_code == 0);
    const RunResult b = run("verify --check gradcheck --seed 3");
    CHECK(a.out == b.out);
    const json doc = json::parse(a.out);
    CHECK(doc.at("all_pass").get<bool>());
    CHECK(doc.at("checks").size() == 2);

    // tiny draw counts still compute, with a warning
    const RunResult tiny = run("verify --check theorem1 --draws 10 --seed 3");
    const json tiny_doc = json::parse(tiny.out);
    CHECK(tiny_doc.contains("warning"));
    CHECK(tiny_doc.at("checks").size() == 2);

    CHECK(run("verify --check bogus").exit_code == 2);
}

TEST_CASE("bench summary has one row per method and seed") {
    const fs::path dir = fresh_dir("bench");
    write_file(dir / "spec.json",
               R"({"height":8,"width":8,"num_train":6,"num_test":3,"snr":0.5,"seed":0})");
    const RunResult r = run("bench --spec " + (dir / "spec.json").string() +
                            " --methods icm,locpmap --seeds 4,5 --out " + (dir / "out").string() +
                            " --samples 8 --iters 40 --gibbs-samples 100 --threads 2");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("icm,4,") != std::string::npos);
    CHECK(r.out.find("icm,5,") != std::string::npos);
    CHECK(r.out.find("locpmap,4,") != std::string::npos);
    CHECK(r.out.find("locpmap,5,") != std::string::npos);
    CHECK(fs::exists(dir / "out/results_seed4.csv"));
    CHECK(fs::exists(dir / "out/timings.csv"));

    // wallclock column is positive
    const json results = json::parse(slurp(dir / "out/results.json"));
    for (const auto& run_doc : results.at("runs"))
        for (const auto& m : run_doc.at("methods"))
            CHECK(m.at("wallclock_ms").get<double>() > 0.0);

    // unknown method in the list
    CHECK(run("bench --spec " + (dir / "spec.json").string() +
              " --methods icm,wat --seeds 1 --out " + (dir / "out2").string())
              .exit_code == 2);
}
