#include <doctest.h>

#include <filesystem>

#include "capita/harness.hpp"
#include "test_util.hpp"

using namespace capita;

namespace {

// Manipulates the first plan object before exploring it, then stops.
struct Hasty : SchedulerPolicy {
    int turn = 0;
    SchedulerAction act(const SchedulerState&, const TaskSpec& task, Rng&) override {
        if (turn++ > 0) return SchedulerAction::halt();
        for (const auto& s : decompose(task).steps)
            if (s.kind == SubPlanKind::Manipulation) return SchedulerAction::manipulate(render(s.command));
        return SchedulerAction::halt();
    }
    Json descriptor() const override { return Json{{"kind", "hasty"}}; }
};

struct Stopper : SchedulerPolicy {
    SchedulerAction act(const SchedulerState&, const TaskSpec&, Rng&) override { return SchedulerAction::halt(); }
    Json descriptor() const override { return Json{{"kind", "stop"}}; }
};

ErrorCategory attribute(SchedulerPolicy& p, const CapabilitySuite& b, const TaskSpec& t, EpisodeLimits lim, std::uint64_t seed) {
    auto r = run_episode(t, p, b, lim, seed);
    REQUIRE_FALSE(r.success);
    return attribute_error(r.transcript).category;
}

std::vector<TaskSpec> few() {
    const auto& all = testing::small_tasks();
    return {all.begin(), all.begin() + 24};
}

}  // namespace

TEST_CASE("config files") {
    Config c = Config::parse("# comment\nseed = 7\n  p_og=0.2 # inline\n\nname = eval run\nflag = true\n");
    CHECK(c.get_u64("seed", 0) == 7);
    CHECK(c.get_double("p_og", 0.0) == 0.2);
    CHECK(c.get("name", "") == "eval run");
    CHECK(c.get_bool("flag", false));
    CHECK(c.get_int("missing", 4) == 4);
    CHECK_THROWS_AS(Config::parse("a = 1\na = 2\n"), Error);
    CHECK_THROWS_AS(Config::parse("just words\n"), Error);
    CHECK_THROWS_AS(c.require_known({"seed", "p_og"}), Error);
    CHECK_NOTHROW(c.require_known({"seed", "p_og", "name", "flag"}));
    Config d = Config::parse("flag=true\nname=eval run\nseed=7\np_og=0.2\n");
    CHECK(c.digest() == d.digest());
    d.set("seed", "8");
    CHECK(c.digest() != d.digest());
    Config bad = Config::parse("seed = seven\n");
    CHECK_THROWS_AS(bad.get_u64("seed", 0), Error);
}

TEST_CASE("error attribution rules") {
    const TaskSpec& t = testing::small_tasks()[1];
    EpisodeLimits lim = default_limits(t);

    ExpertScheduler a;
    CHECK(attribute(a, CapabilitySuite::noisy(0, 1.0, 0), t, lim, 1) == ErrorCategory::Exploration);

    ExpertScheduler b;
    EpisodeLimits tight = lim;
    tight.step_budget = 12;
    tight.max_sweeps = 100;
    CHECK(attribute(b, CapabilitySuite::noisy(0, 0.95, 0), t, tight, 2) == ErrorCategory::ObjectRecognition);

    ExpertScheduler c;
    CHECK(attribute(c, CapabilitySuite::noisy(0, 0, 1.0), t, lim, 3) == ErrorCategory::HistorySummarization);

    Hasty h;
    CHECK(attribute(h, CapabilitySuite::oracle(), t, lim, 4) == ErrorCategory::ActionPrecondition);

    Stopper s;
    CHECK(attribute(s, CapabilitySuite::oracle(), t, lim, 5) == ErrorCategory::InstructionUnderstanding);

    ExpertScheduler ok;
    auto r = run_episode(t, ok, CapabilitySuite::oracle(), lim, 6);
    CHECK_THROWS_AS(attribute_error(r.transcript), Error);
}

TEST_CASE("reports are reproducible and seed sensitive") {
    PolicyFactory f = [] { return std::make_unique<ExpertScheduler>(); };
    auto noisy = CapabilitySuite::noisy(0.2, 0.3, 0.2);
    auto a = evaluate(f, noisy, few(), {7, 8}, "cfg");
    auto b = evaluate(f, noisy, few(), {7, 8}, "cfg");
    CHECK(a.csv() == b.csv());
    CHECK(a.summary_json().dump() == b.summary_json().dump());
    EvalOptions serial;
    serial.parallel = false;
    CHECK(evaluate(f, noisy, few(), {7, 8}, "cfg", serial).csv() == a.csv());
    CHECK(a.aggregate.episodes == 48);
    int attributed = 0;
    for (auto& [k, v] : a.attribution) attributed += v;
    CHECK(attributed == a.aggregate.episodes - a.aggregate.successes);
    CHECK(a.summary_json().at("error_attribution").size() == error_categories().size());
    CHECK(a.csv().rfind("category,episodes,successes,sr,ssr\n", 0) == 0);
}

TEST_CASE("uniform policy does worse than the expert") {
    PolicyFactory expert = [] { return std::make_unique<ExpertScheduler>(); };
    static const ParametricPolicy uniform = uniform_policy();
    PolicyFactory random = [] { return std::make_unique<LearnedScheduler>(uniform, false); };
    auto e = evaluate(expert, CapabilitySuite::oracle(), few(), {1}, "");
    auto u = evaluate(random, CapabilitySuite::oracle(), few(), {1}, "");
    CHECK(e.aggregate.sr() == 1.0);
    CHECK(u.aggregate.sr() < e.aggregate.sr());
    auto blind = evaluate(expert, CapabilitySuite::noisy(0, 1.0, 0), few(), {1}, "");
    CHECK(blind.aggregate.sr() == 0.0);
}

TEST_CASE("expert and learned episodes replay identically") {
    const TaskSpec& t = testing::small_tasks()[5];
    ExpertScheduler ex;
    auto r = run_episode(t, ex, CapabilitySuite::noisy(0.3, 0.3, 0.2), default_limits(t), 77);
    auto text = r.transcript.to_jsonl();
    auto rep = replay(Transcript::from_jsonl(text));
    CHECK(rep.identical);
    CHECK(rep.regenerated == text);

    Rng rng(5);
    ParametricPolicy p = testing::random_policy(rng, 0.05);
    LearnedScheduler ls(p, false);
    auto lr = run_episode(t, ls, CapabilitySuite::noisy(0, 0.2, 0.1), default_limits(t), 78);
    auto lt = Transcript::from_jsonl(lr.transcript.to_jsonl());
    CHECK(replay(lt, &p).identical);
    CHECK_THROWS_AS(replay(lt), Error);
    ParametricPolicy other = testing::random_policy(rng, 0.05);
    try {
        replay(lt, &other);
        FAIL("mismatched snapshot accepted");
    } catch (const Error& e) {
        CHECK(e.code() == "digest");
    }

    // Edited transcripts are caught.
    std::string edited = text;
    auto pos = edited.find("\"success\":true");
    if (pos != std::string::npos) {
        edited.replace(pos, 14, "\"success\":fals");
        edited.insert(pos + 14, "e");
        auto bad = replay(Transcript::from_jsonl(edited));
        CHECK_FALSE(bad.identical);
        CHECK(bad.first_difference >= 0);
    }
}

TEST_CASE("task files round trip") {
    auto path = (std::filesystem::temp_directory_path() / "capita_test_tasks.jsonl").string();
    write_tasks(few(), path);
    CHECK(read_tasks(path) == few());
    std::filesystem::remove(path);
}
