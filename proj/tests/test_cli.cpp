#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "stereobias/cli.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace stereobias;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<fs::path> files_in(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) out.push_back(entry.path().filename());
    std::sort(out.begin(), out.end());
    return out;
}

void check_identical_dirs(const fs::path& a, const fs::path& b) {
    const auto names = files_in(a);
    CHECK(names == files_in(b));
    for (const auto& name : names) {
        INFO(name.string());
        CHECK(testing::slurp(a / name) == testing::slurp(b / name));
    }
}

}  // namespace

TEST_CASE("help lists every subcommand") {
    const auto result = run({"--help"});
    CHECK(result.code == cli::kExitOk);
    for (const char* sub : {"ingest", "disagree", "rasch", "stereotype", "associate", "audit", "simulate"})
        CHECK(result.out.find(sub) != std::string::npos);
}

TEST_CASE("usage errors exit with code 2") {
    CHECK(run({}).code == cli::kExitInvalidInput);
    const auto unknown = run({"frobnicate"});
    CHECK(unknown.code == cli::kExitInvalidInput);
    CHECK(unknown.err.find("frobnicate") != std::string::npos);
    CHECK(run({"rasch", "--bogus"}).code == cli::kExitInvalidInput);
}

TEST_CASE("simulate then rasch") {
    testing::TempDir dir;
    const auto data = dir / "d";
    REQUIRE(run({"simulate", "--seed", "7", "--out", data.string(), "--participants", "60"}).code == cli::kExitOk);
    CHECK(fs::exists(data / "responses.csv"));
    CHECK(fs::exists(data / "truth.json"));
    const auto fit = dir / "fit";
    REQUIRE(run({"rasch", "--in", (data / "responses.csv").string(), "--out", fit.string()}).code == cli::kExitOk);
    CHECK(fs::exists(fit / "difficulties.csv"));
    CHECK(fs::exists(fit / "tendencies.csv"));
    const auto report = testing::slurp(fit / "rasch_report.json");
    CHECK(report.find("\"seed\"") != std::string::npos);
    CHECK(report.find("\"converged\": true") != std::string::npos);
}

TEST_CASE("missing input names the path and exits 2") {
    testing::TempDir dir;
    const auto missing = (dir / "nope.csv").string();
    const auto result = run({"rasch", "--in", missing, "--out", (dir / "o").string()});
    CHECK(result.code == cli::kExitInvalidInput);
    CHECK(result.err.find("nope.csv") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "o"));
}

TEST_CASE("invalid rows report file and line, and leave no partial outputs") {
    testing::TempDir dir;
    const auto bad = dir.write("bad.csv", "item_id,annotator_id,label\nt1,a,1\nt1,b,7\n");
    const auto out = dir / "o";
    const auto result = run({"disagree", "--annotations", bad.string(), "--out", out.string()});
    CHECK(result.code == cli::kExitInvalidInput);
    CHECK(result.err.find("bad.csv:3") != std::string::npos);
    CHECK_FALSE(fs::exists(out));

    fs::create_directories(dir / "kept");
    dir.write("kept/other.txt", "x");
    CHECK(run({"disagree", "--annotations", bad.string(), "--out", (dir / "kept").string()}).code ==
          cli::kExitInvalidInput);
    CHECK(files_in(dir / "kept") == std::vector<fs::path>{"other.txt"});
}

TEST_CASE("every subcommand reproduces its outputs byte for byte") {
    testing::TempDir dir;
    const auto study = (dir / "study").string();
    const auto audit = (dir / "audit").string();
    REQUIRE(run({"simulate", "--seed", "3", "--out", study, "--participants", "40", "--annotators-per-item", "15"})
                .code == cli::kExitOk);
    REQUIRE(run({"simulate", "--scenario", "audit", "--seed", "3", "--out", audit, "--audit-items", "400"}).code ==
            cli::kExitOk);

    const std::vector<std::vector<std::string>> commands{
        {"simulate", "--seed", "3", "--participants", "40"},
        {"ingest", "--annotations", study + "/annotations.csv", "--posts", study + "/posts.jsonl", "--lexicon",
         study + "/lexicon.tsv"},
        {"disagree", "--seed", "5", "--annotations", study + "/annotations.csv", "--posts", study + "/posts.jsonl",
         "--lexicon", study + "/lexicon.tsv", "--survey", study + "/survey.csv", "--permutations", "200"},
        {"rasch", "--in", study + "/responses.csv"},
        {"stereotype", "--embeddings", audit + "/embeddings.txt", "--warmth", audit + "/warmth.txt", "--competence",
         audit + "/competence.txt", "--lexicon", audit + "/lexicon.tsv"},
        {"audit", "--seed", "9", "--posts", audit + "/posts.jsonl", "--lexicon", audit + "/lexicon.tsv",
         "--annotations", audit + "/annotations.csv", "--embeddings", audit + "/embeddings.txt", "--warmth",
         audit + "/warmth.txt", "--competence", audit + "/competence.txt", "--iterations", "3"},
    };
    for (const auto& command : commands) {
        INFO(command.front());
        auto first = command;
        first.insert(first.end(), {"--out", (dir / (command.front() + "_1")).string()});
        auto second = command;
        second.insert(second.end(), {"--out", (dir / (command.front() + "_2")).string()});
        const auto a = run(first);
        REQUIRE_MESSAGE(a.code == cli::kExitOk, a.err);
        REQUIRE(run(second).code == cli::kExitOk);
        check_identical_dirs(dir / (command.front() + "_1"), dir / (command.front() + "_2"));
    }

    const auto table = dir.write("t.csv", "y,x,g,n\n2,0.5,a,1\n1,-1.2,b,2\n4,0.3,a,3\n9,2.0,b,1\n3,1.1,a,2\n"
                                          "2,-0.4,b,3\n5,0.9,a,1\n0,-2.1,b,2\n11,1.5,a,3\n3,0.0,b,2\n");
    for (const char* suffix : {"_1", "_2"})
        REQUIRE(run({"associate", "--in", table.string(), "--model", "y ~ x", "--family", "poisson", "--exposure",
                     "n", "--cluster", "g", "--out", (dir / (std::string("assoc") + suffix)).string()})
                    .code == cli::kExitOk);
    check_identical_dirs(dir / "assoc_1", dir / "assoc_2");
}

TEST_CASE("thread count does not change audit outputs") {
    testing::TempDir dir;
    const auto audit = (dir / "audit").string();
    REQUIRE(run({"simulate", "--scenario", "audit", "--seed", "4", "--out", audit, "--audit-items", "300"}).code ==
            cli::kExitOk);
    for (const char* threads : {"1", "3"})
        REQUIRE(run({"audit", "--threads", threads, "--posts", audit + "/posts.jsonl", "--lexicon",
                     audit + "/lexicon.tsv", "--annotations", audit + "/annotations.csv", "--embeddings",
                     audit + "/embeddings.txt", "--warmth", audit + "/warmth.txt", "--competence",
                     audit + "/competence.txt", "--iterations", "4", "--out",
                     (dir / (std::string("t") + threads)).string()})
                    .code == cli::kExitOk);
    for (const char* name : {"predictions.csv", "sgt_error_stats.csv"})
        CHECK(testing::slurp(dir / "t1" / name) == testing::slurp(dir / "t3" / name));
}

TEST_CASE("config file supplies options and flags override it") {
    testing::TempDir dir;
    const auto data = dir / "d";
    REQUIRE(run({"simulate", "--scenario", "rasch", "--out", data.string(), "--persons", "80", "--items", "5"}).code ==
            cli::kExitOk);
    const auto config = dir.write("run.ini", "seed = 21\n[rasch]\nmax-iterations = 50\n");
    const auto out = dir / "fit";
    REQUIRE(run({"rasch", "--config", config.string(), "--in", (data / "responses.csv").string(), "--out",
                 out.string()})
                .code == cli::kExitOk);
    const auto report = testing::slurp(out / "rasch_report.json");
    CHECK(report.find("\"seed\": 21") != std::string::npos);
    CHECK(report.find("\"max-iterations\": 50") != std::string::npos);

    const auto override_out = dir / "fit2";
    REQUIRE(run({"rasch", "--config", config.string(), "--seed", "4", "--in", (data / "responses.csv").string(),
                 "--out", override_out.string()})
                .code == cli::kExitOk);
    CHECK(testing::slurp(override_out / "rasch_report.json").find("\"seed\": 4") != std::string::npos);

    const auto bad = dir.write("bad.ini", "[rasch]\nunknown-key = 1\n");
    CHECK(run({"rasch", "--config", bad.string(), "--in", (data / "responses.csv").string(), "--out",
               (dir / "fit3").string()})
              .code == cli::kExitInvalidInput);
}
