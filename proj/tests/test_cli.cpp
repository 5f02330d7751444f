#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
    static const fs::path d = [] {
        fs::path p = fs::temp_directory_path() / "capita_cli_test";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return d;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

int run(const std::string& args) {
    std::string cmd = std::string(CAPITA_CLI) + " " + args + " >/dev/null 2>" + path("stderr.txt");
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void make_tasks() {
    static bool done = false;
    if (done) return;
    REQUIRE(run("gen --scenes 2 --seed 1 --out " + path("tasks.jsonl")) == 0);
    done = true;
}

}  // namespace

TEST_CASE("unknown flags are usage errors") {
    CHECK(run("eval --bogus") == 2);
    CHECK(run("no-such-command") == 2);
    CHECK(slurp(path("stderr.txt")).find("\"error\"") != std::string::npos);
}

TEST_CASE("eval reports regenerate byte for byte") {
    make_tasks();
    std::string common = "eval --expert --tasks " + path("tasks.jsonl") + " --seed 7 --p-og 0.2 --p-es 0.1 ";
    REQUIRE(run(common + "--report " + path("r1.csv") + " --summary " + path("s1.json")) == 0);
    REQUIRE(run(common + "--report " + path("r2.csv") + " --summary " + path("s2.json")) == 0);
    CHECK(slurp(path("r1.csv")) == slurp(path("r2.csv")));
    CHECK(slurp(path("s1.json")) == slurp(path("s2.json")));
    CHECK_FALSE(slurp(path("r1.csv")).empty());
}

TEST_CASE("config file and environment fallbacks") {
    make_tasks();
    {
        std::ofstream cfg(path("eval.cfg"));
        cfg << "seed = 7\np-og = 0.2\np-es = 0.1\n";
    }
    REQUIRE(run("eval --expert --tasks " + path("tasks.jsonl") + " --config " + path("eval.cfg") + " --report " +
                path("r3.csv")) == 0);
    REQUIRE(run("eval --expert --tasks " + path("tasks.jsonl") + " --seed 7 --p-og 0.2 --p-es 0.1 --report " +
                path("r4.csv")) == 0);
    CHECK(slurp(path("r3.csv")) == slurp(path("r4.csv")));
    std::string env = "CAPITA_SEED=7 ";
    std::string cmd = env + CAPITA_CLI + " eval --expert --tasks " + path("tasks.jsonl") +
                      " --p-og 0.2 --p-es 0.1 --report " + path("r5.csv") + " >/dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(slurp(path("r5.csv")) == slurp(path("r4.csv")));
    {
        std::ofstream cfg(path("bad.cfg"));
        cfg << "colour = blue\n";
    }
    CHECK(run("eval --expert --tasks " + path("tasks.jsonl") + " --config " + path("bad.cfg")) == 2);
}

TEST_CASE("transcripts replay, digests are enforced") {
    make_tasks();
    REQUIRE(run("build-data --stage 3 --seed 2 --tasks " + path("tasks.jsonl") + " --out " + path("d3.jsonl")) == 0);
    REQUIRE(run("train --algo bc --iterations 5 --batch 32 --probe-every 5 --seed 3 --data " + path("d3.jsonl") +
                " --out " + path("bc.json")) == 0);
    CHECK(run("train --algo eipo --iterations 2 --seed 3 --hash-buckets 256 --data " + path("d3.jsonl") + " --out " +
              path("x.json")) == 3);

    fs::create_directories(path("tr"));
    REQUIRE(run("eval --policy " + path("bc.json") + " --tasks " + path("tasks.jsonl") + " --seed 4 --transcripts " +
                path("tr")) == 0);
    fs::path first;
    for (const auto& e : fs::directory_iterator(path("tr")))
        if (first.empty() || e.path() < first) first = e.path();
    REQUIRE_FALSE(first.empty());
    CHECK(run("replay --transcript " + first.string() + " --policy " + path("bc.json") + " --out " + path("re.jsonl")) == 0);
    CHECK(slurp(path("re.jsonl")) == slurp(first.string()));
    CHECK(run("replay --transcript " + first.string()) != 0);
}
