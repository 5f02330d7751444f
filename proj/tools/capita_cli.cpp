#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "capita/datagen.hpp"
#include "capita/harness.hpp"

using namespace capita;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDigest = 3;

void error_line(const std::string& code, const std::string& message) {
    std::cerr << Json{{"error", {{"code", code}, {"message", message}}}}.dump() << std::endl;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io", "cannot write " + path);
    out << text;
    if (!out) throw Error("io", "write failed: " + path);
}

std::vector<ActionProfile> parse_profiles(const std::string& list) {
    std::vector<ActionProfile> out;
    for (const auto& p : split(list, ',')) out.push_back(parse_profile(trim(p)));
    if (out.empty()) throw Error("config", "no action profiles given");
    return out;
}

struct Features {
    int slots = 6;
    int buckets = 1024;
    int hidden = 0;
    void add(CLI::App* app) {
        app->add_option("--slots", slots, "key-object slots");
        app->add_option("--hash-buckets", buckets, "buckets per probe of the hashed cross feature");
        app->add_option("--hidden", hidden, "hidden units (0 = linear)");
    }
    FeatureConfig config() const { return FeatureConfig{slots, buckets, hidden}; }
};

struct Noise {
    double p_eg = 0.0, p_og = 0.0, p_es = 0.0;
    void add(CLI::App* app) {
        app->add_option("--p-eg", p_eg, "EG perturbation probability");
        app->add_option("--p-og", p_og, "OG false-negative probability");
        app->add_option("--p-es", p_es, "ES flip probability");
    }
    CapabilitySuite suite() const {
        if (p_eg == 0.0 && p_og == 0.0 && p_es == 0.0) return CapabilitySuite::oracle();
        return CapabilitySuite::noisy(p_eg, p_og, p_es);
    }
};

// Config keys name options without the leading dashes; '_' and '-' are interchangeable.
void apply_config(CLI::App* sub, const Config& cfg) {
    for (const auto& [key, value] : cfg.values()) {
        std::string name = key;
        std::replace(name.begin(), name.end(), '_', '-');
        CLI::Option* opt = sub->get_option_no_throw("--" + name);
        if (!opt) throw Error("usage", "config key is not an option of '" + sub->get_name() + "': " + key);
        if (opt->count() > 0) continue;
        opt->add_result(value);
        opt->run_callback();
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"capita: capability scheduling toolkit"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    std::string config_path;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "master seed (falls back to CAPITA_SEED)");
        sub->add_option("--config", config_path, "flat key = value file supplying option defaults");
    };

    // gen
    auto* gen = app.add_subcommand("gen", "generate tasks");
    common(gen);
    int scenes = 30;
    std::uint64_t first_seed = 0;
    std::string profiles = "atomic,composite";
    bool no_composites = false;
    std::string out_path;
    gen->add_option("--scenes", scenes, "number of scenes");
    gen->add_option("--first-seed", first_seed, "seed of the first scene");
    gen->add_option("--profiles", profiles, "comma-separated action profiles");
    gen->add_flag("--no-composites", no_composites, "skip composite tasks");
    gen->add_option("--out", out_path, "task file (JSONL)")->required();

    // expert-run and eval
    std::string tasks_path, report_path, summary_path, transcript_dir, policy_path;
    std::vector<std::uint64_t> seeds;
    bool use_expert = false, use_uniform = false, sample_actions = false;
    Noise noise;
    Features features;
    auto eval_options = [&](CLI::App* sub) {
        common(sub);
        sub->add_option("--tasks", tasks_path, "task file (JSONL)")->required();
        sub->add_option("--seeds", seeds, "report seeds (default: --seed)")->delimiter(',');
        sub->add_option("--report", report_path, "per-category CSV report");
        sub->add_option("--summary", summary_path, "JSON summary with the error-attribution histogram");
        sub->add_option("--transcripts", transcript_dir, "directory for per-episode transcripts");
        noise.add(sub);
    };
    auto* expert_run = app.add_subcommand("expert-run", "run the expert scheduler");
    eval_options(expert_run);
    auto* eval = app.add_subcommand("eval", "evaluate a policy");
    eval_options(eval);
    eval->add_option("--policy", policy_path, "policy snapshot");
    eval->add_flag("--expert", use_expert, "evaluate the expert scheduler");
    eval->add_flag("--uniform", use_uniform, "evaluate the uniform random policy");
    eval->add_flag("--sample", sample_actions, "sample instead of greedy decoding");
    features.add(eval);

    // build-data
    auto* build = app.add_subcommand("build-data", "build a training dataset");
    common(build);
    int stage = 1;
    double tau = 0.5, p_eg = 0.3, p_og = 0.2, p_es = 0.1;
    int aug_factor = 0, length_cap = 200;
    std::string merge_path;
    build->add_option("--stage", stage, "1, 2 or 3")->required()->check(CLI::Range(1, 3));
    build->add_option("--tasks", tasks_path, "task file (JSONL)")->required();
    build->add_option("--out", out_path, "dataset file")->required();
    build->add_option("--tau", tau, "query similarity threshold (stage 2)");
    build->add_option("--p-eg", p_eg, "EG perturbation probability (stage 1)");
    build->add_option("--p-og", p_og, "OG NotFound probability (stages 2, 3)");
    build->add_option("--p-es", p_es, "ES failure probability (stages 2, 3)");
    build->add_option("--aug-factor", aug_factor, "augmented copies per eligible sample");
    build->add_option("--length-cap", length_cap, "turn cap of synthesized trajectories (stage 3)");
    build->add_option("--policy", policy_path, "policy snapshot (stage 2)");
    build->add_option("--merge", merge_path, "dataset merged into the output (stage 2 aggregation)");
    features.add(build);

    // train
    auto* trn = app.add_subcommand("train", "train a scheduler policy");
    common(trn);
    TrainConfig tc;
    std::string algo = "eipo", reward_mode = "manip-only", data_path, probe_path, init_path, metrics_path;
    trn->add_option("--algo", algo, "eipo | grpo-return | grpo-reward | bc")
        ->check(CLI::IsMember({"eipo", "grpo-return", "grpo-reward", "bc"}));
    trn->add_option("--data", data_path, "dataset file")->required();
    trn->add_option("--probe", probe_path, "probe task file (JSONL)");
    trn->add_option("--init", init_path, "initial policy snapshot");
    trn->add_option("--out", out_path, "policy snapshot output")->required();
    trn->add_option("--metrics", metrics_path, "metrics CSV output");
    trn->add_option("--gamma", tc.gamma, "discount");
    trn->add_option("--epsilon", tc.epsilon, "clip range");
    trn->add_option("--group", tc.group, "group size G");
    trn->add_option("--batch", tc.batch, "states (or rollout tasks) per iteration");
    trn->add_option("--lr", tc.lr, "learning rate");
    trn->add_option("--iterations", tc.iterations, "policy-update iterations");
    trn->add_option("--inner-epochs", tc.inner_epochs, "optimizer steps per batch");
    trn->add_option("--reward-mode", reward_mode, "manip-only | all-subplans")
        ->check(CLI::IsMember({"manip-only", "all-subplans"}));
    trn->add_option("--probe-every", tc.probe_every, "probe interval in iterations");
    trn->add_option("--probe-p-og", tc.probe_p_og, "probe OG noise");
    trn->add_option("--probe-p-es", tc.probe_p_es, "probe ES noise");
    trn->add_option("--rollout-p-og", tc.rollout_p_og, "online rollout OG noise");
    trn->add_option("--rollout-p-es", tc.rollout_p_es, "online rollout ES noise");
    features.add(trn);

    // replay
    auto* rep = app.add_subcommand("replay", "re-simulate a logged episode");
    common(rep);
    std::string transcript_path;
    rep->add_option("--transcript", transcript_path, "episode transcript (JSONL)")->required();
    rep->add_option("--policy", policy_path, "policy snapshot for learned-policy transcripts");
    rep->add_option("--out", out_path, "regenerated transcript output");
    features.add(rep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        error_line("usage", e.what());
        return kExitUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        if (!config_path.empty()) apply_config(sub, Config::load(config_path));
        if (sub->get_option("--seed")->count() == 0)
            if (const char* env = std::getenv("CAPITA_SEED")) {
                Config c;
                c.set("seed", env);
                seed = c.get_u64("seed", 0);
            }
        if (seeds.empty()) seeds.push_back(seed);
        tc.features = features.config();

        if (sub == gen) {
            auto tasks = generate_tasks(first_seed, scenes, parse_profiles(profiles), !no_composites, seed);
            write_tasks(tasks, out_path);
            std::cout << Json{{"tasks", tasks.size()}, {"out", out_path}}.dump() << std::endl;
            return 0;
        }

        if (sub == expert_run || sub == eval) {
            auto tasks = read_tasks(tasks_path);
            std::optional<ParametricPolicy> policy;
            PolicyFactory factory;
            const int chosen = (sub == expert_run || use_expert) + use_uniform + !policy_path.empty();
            if (chosen != 1) throw Error("usage", "choose exactly one of --policy, --expert, --uniform");
            if (sub == expert_run || use_expert) {
                factory = [] { return std::make_unique<ExpertScheduler>(); };
            } else {
                policy = use_uniform ? uniform_policy(features.config()) : ParametricPolicy::load(policy_path, features.config());
                factory = [&] { return std::make_unique<LearnedScheduler>(*policy, !sample_actions); };
            }
            Config digest_cfg;
            digest_cfg.set("command", sub->get_name());
            digest_cfg.set("tasks", hex64(fnv1a(read_file(tasks_path))));
            digest_cfg.set("backends", noise.suite().to_json().dump());
            digest_cfg.set("policy", factory()->descriptor().dump());
            EvalOptions opts;
            opts.keep_episodes = !transcript_dir.empty();
            EvalReport r = evaluate(factory, noise.suite(), tasks, seeds, digest_cfg.digest(), opts);
            if (!report_path.empty()) write_file(report_path, r.csv());
            if (!summary_path.empty()) write_file(summary_path, r.summary_json().dump(2) + "\n");
            if (!transcript_dir.empty()) {
                std::filesystem::create_directories(transcript_dir);
                for (std::size_t i = 0; i < r.episodes.size(); ++i)
                    write_file(transcript_dir + "/episode-" + std::to_string(i) + ".jsonl", r.episodes[i].transcript.to_jsonl());
            }
            std::cout << r.summary_json().dump() << std::endl;
            return 0;
        }

        if (sub == build) {
            auto tasks = read_tasks(tasks_path);
            Dataset d;
            if (stage == 1) {
                d = build_stage1(tasks, p_eg, seed);
            } else if (stage == 2) {
                if (policy_path.empty()) throw Error("usage", "stage 2 needs --policy");
                ParametricPolicy policy = ParametricPolicy::load(policy_path, features.config());
                d = build_stage2(policy, tasks, tau, CapabilitySuite::noisy(0.0, p_og, p_es), seed);
            } else {
                d = build_stage3(tasks, Stage3Config{p_og, p_es, length_cap}, seed);
            }
            if (aug_factor > 0) {
                Rng rng(derive_seed(seed, 30));
                d = augment(d, AugmentationTables::load_default(), aug_factor, rng);
            }
            if (!merge_path.empty()) {
                Dataset merged = read_dataset(merge_path, features.config());
                merged.append(d);
                d = std::move(merged);
            }
            write_dataset(d, out_path, features.config());
            Json counts = Json::object();
            for (const auto& [k, v] : d.counts()) counts[k] = v;
            std::cout << Json{{"samples", d.samples.size()}, {"dropped_tasks", d.dropped_tasks}, {"counts", counts}}.dump()
                      << std::endl;
            return 0;
        }

        if (sub == trn) {
            tc.algo = parse_algo(algo);
            tc.reward_mode = parse_reward_mode(reward_mode);
            Dataset d = read_dataset(data_path, tc.features);
            TrainingSet data = to_training_set(d, tc.features, false);
            if (tc.algo == Algo::GrpoReturn) {
                std::set<std::string> have;
                for (const auto& t : data.tasks) have.insert(t.id);
                for (const auto& t : d.tasks)
                    if (!is_validation(t.id) && !have.count(t.id)) data.add_task(t), have.insert(t.id);
            }
            std::vector<TaskSpec> probe = probe_path.empty() ? std::vector<TaskSpec>{} : read_tasks(probe_path);
            std::optional<ParametricPolicy> init;
            if (!init_path.empty()) init = ParametricPolicy::load(init_path, tc.features);
            TrainResult r = train(tc, data, probe, seed, init ? &*init : nullptr);
            r.policy.save(out_path);
            if (!metrics_path.empty()) write_file(metrics_path, metrics_csv(r.metrics));
            std::cout << Json{{"algo", algo},
                              {"states", data.states.size()},
                              {"final_probe_sr", r.final_probe_sr},
                              {"action_match", action_match(r.policy, data)},
                              {"param_digest", r.policy.param_digest()}}
                             .dump()
                      << std::endl;
            return 0;
        }

        if (sub == rep) {
            Transcript t = Transcript::from_jsonl(read_file(transcript_path));
            std::optional<ParametricPolicy> policy;
            if (!policy_path.empty()) policy = ParametricPolicy::load(policy_path, features.config());
            ReplayResult r = replay(t, policy ? &*policy : nullptr);
            if (!out_path.empty()) write_file(out_path, r.regenerated);
            if (!r.identical) {
                error_line("replay", "regenerated transcript differs at line " + std::to_string(r.first_difference));
                return kExitFailure;
            }
            std::cout << Json{{"identical", true}, {"lines", t.lines.size()}}.dump() << std::endl;
            return 0;
        }
    } catch (const Error& e) {
        error_line(e.code(), e.what());
        if (e.code() == "usage") return kExitUsage;
        if (e.code() == "digest") return kExitDigest;
        return kExitFailure;
    } catch (const std::exception& e) {
        error_line("internal", e.what());
        return kExitFailure;
    }
    return kExitFailure;
}
