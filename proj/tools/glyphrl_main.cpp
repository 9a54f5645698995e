#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "glyphrl/errors.hpp"
#include "glyphrl/eval_bench.hpp"
#include "glyphrl/glyph_env.hpp"
#include "glyphrl/policy_net.hpp"
#include "glyphrl/ppo_trainer.hpp"
#include "glyphrl/prompt_layout.hpp"
#include "glyphrl/run_config.hpp"
#include "glyphrl/text_format.hpp"

namespace {

using namespace glyphrl;
namespace fs = std::filesystem;

/// Registers options for RunConfig fields and remembers which ones the user
/// actually passed, so config-file values only fill the gaps.
struct OptionBinder {
    CLI::App* cmd;
    RunConfig& rc;
    std::map<std::string, CLI::Option*> by_field;

    void add_env_options() {
        by_field["window_size"] = cmd->add_option("--window-size", rc.env.window_size,
                                                  "Canvas side length in pixels");
        by_field["num_rectan"] =
            cmd->add_option("--num-rectan", rc.env.num_rectan, "Number of boxes to lay out");
        by_field["min_area"] =
            cmd->add_option("--min-area", rc.env.min_area, "Box area enforced at initialization");
        by_field["w_min"] = cmd->add_option("--w-min", rc.env.w_min, "Minimum box width");
        by_field["h_min"] = cmd->add_option("--h-min", rc.env.h_min, "Minimum box height");
        by_field["min_overlap"] = cmd->add_option("--min-overlap", rc.env.min_overlap,
                                                  "Success threshold on total overlap");
        by_field["max_steps"] =
            cmd->add_option("--max-steps", rc.env.max_steps, "Episode truncation horizon");
        by_field["action_scale"] =
            cmd->add_option("--action-scale", rc.env.action_scale, "Pixels per unit action");
    }

    void add_ppo_options() {
        by_field["learning_rate"] =
            cmd->add_option("--learning-rate", rc.ppo.learning_rate, "Adam learning rate");
        by_field["rollout_horizon"] = cmd->add_option("--rollout-horizon", rc.ppo.rollout_horizon,
                                                      "Steps collected per update");
        by_field["minibatch_size"] =
            cmd->add_option("--minibatch-size", rc.ppo.minibatch_size, "SGD minibatch size");
        by_field["epochs_per_update"] = cmd->add_option("--epochs-per-update",
                                                        rc.ppo.epochs_per_update,
                                                        "Optimization epochs per rollout");
        by_field["gamma"] = cmd->add_option("--gamma", rc.ppo.gamma, "Discount factor");
        by_field["gae_lambda"] = cmd->add_option("--gae-lambda", rc.ppo.gae_lambda, "GAE lambda");
        by_field["clip_range"] =
            cmd->add_option("--clip-range", rc.ppo.clip_range, "PPO clip range epsilon");
        by_field["entropy_coef"] =
            cmd->add_option("--entropy-coef", rc.ppo.entropy_coef, "Entropy bonus coefficient");
        by_field["vf_coef"] =
            cmd->add_option("--vf-coef", rc.ppo.vf_coef, "Value loss coefficient");
        by_field["max_grad_norm"] = cmd->add_option("--max-grad-norm", rc.ppo.max_grad_norm,
                                                    "Global gradient norm clip");
        by_field["normalize_advantages"] = cmd->add_flag(
            "--normalize-advantages", rc.ppo.normalize_advantages, "Normalize minibatch advantages");
        by_field["total_timesteps"] = cmd->add_option("--total-timesteps", rc.ppo.total_timesteps,
                                                      "Environment steps to train for");
        by_field["num_envs"] =
            cmd->add_option("--num-envs", rc.ppo.num_envs, "Parallel environment count");
        by_field["checkpoint_interval"] =
            cmd->add_option("--checkpoint-interval", rc.ppo.checkpoint_interval,
                            "Updates between periodic checkpoints (0 = final only)");
    }

    void add_workers_option() {
        by_field["workers"] =
            cmd->add_option("--workers", rc.ppo.workers, "OpenMP worker cap for parallel kernels");
    }

    void add_run_options(bool with_protocol) {
        by_field["seed"] =
            cmd->add_option("--seed", rc.seed, "Run seed; every random stream derives from it");
        by_field["out_dir"] = cmd->add_option("--out-dir", rc.out_dir, "Output directory");
        if (with_protocol) {
            by_field["episodes"] =
                cmd->add_option("--episodes", rc.episodes, "Evaluation episode count");
            by_field["deterministic"] = cmd->add_flag("--deterministic", rc.deterministic,
                                                      "Act with tanh(mean) instead of sampling");
        }
    }

    std::set<std::string> given() const {
        std::set<std::string> fields;
        for (const auto& [name, option] : by_field) {
            if (option->count() > 0) fields.insert(name);
        }
        return fields;
    }
};

void resolve_with_file(RunConfig& rc, const OptionBinder& binder, const std::string& config_path) {
    if (config_path.empty()) return;
    apply_config_file(rc, parse_flat_config(config_path), binder.given());
}

void print_resolved(const RunConfig& rc) {
    std::cout << "resolved configuration:\n";
    for (const auto& [name, value] : resolved_entries(rc)) {
        std::cout << "  " << name << " = " << value << '\n';
    }
}

ConfigEcho echo_of(const RunConfig& rc) {
    ConfigEcho echo;
    for (const auto& [name, value] : resolved_entries(rc)) echo.emplace_back(name, value);
    return echo;
}

void print_report(const std::string& label, const BenchReport& report) {
    std::cout << label << ": episodes=" << report.episodes
              << " mean_reward=" << format_double(report.mean_reward)
              << " reward_std=" << format_double(report.reward_std)
              << " mean_final_overlap=" << format_double(report.mean_final_overlap)
              << " success_rate=" << format_double(report.success_rate)
              << " mean_steps=" << format_double(report.mean_steps) << '\n';
}

/// Copies the env fields the user pinned on the command line over a
/// checkpoint's stored environment config.
void overlay_given_env(const RunConfig& rc, const std::set<std::string>& given, EnvConfig& target) {
    RunConfig source = rc;
    RunConfig dest;
    dest.env = target;
    auto src_fields = config_fields(source);
    auto dst_fields = config_fields(dest);
    for (std::size_t i = 0; i < src_fields.size(); ++i) {
        if (given.contains(src_fields[i].name)) dst_fields[i].set(src_fields[i].get());
    }
    target = dest.env;
}

int cmd_train(RunConfig& rc, bool dry_run) {
    print_resolved(rc);
    rc.env.validate();
    rc.ppo.validate();
    if (dry_run) {
        std::cout << "dry run: configuration valid, nothing executed\n";
        return 0;
    }
    const TrainResult result = train(rc.env, rc.ppo, rc.out_dir, rc.seed, &std::cout);
    std::cout << "final ep_reward_mean " << format_double(result.final_ep_reward_mean) << '\n';
    std::cout << "checkpoint " << result.final_checkpoint.string() << '\n';
    std::cout << "metrics " << result.metrics_csv.string() << '\n';
    return 0;
}

int cmd_eval(RunConfig& rc, const std::set<std::string>& given, const std::string& checkpoint_path,
             const std::string& baseline, bool timing, bool dry_run) {
    print_resolved(rc);
    EvalProtocol protocol;
    protocol.episodes = rc.episodes;
    protocol.deterministic = rc.deterministic;
    protocol.seed = rc.seed;
    protocol.workers = rc.ppo.workers;

    const fs::path out_dir(rc.out_dir);
    ConfigEcho echo = echo_of(rc);

    if (!baseline.empty()) {
        if (baseline != "random") {
            throw InvalidConfigError("unknown --baseline '" + baseline + "' (supported: random)");
        }
        rc.env.validate();
        if (dry_run) {
            std::cout << "dry run: configuration valid, nothing executed\n";
            return 0;
        }
        std::vector<EpisodeMetrics> episodes;
        const BenchReport report = random_baseline(rc.env, protocol, &episodes);
        fs::create_directories(out_dir);
        write_episodes_csv(out_dir / "baseline_episodes.csv", episodes, echo);
        write_report_csv(out_dir / "baseline_report.csv", report, echo);
        print_report("random baseline", report);
        return 0;
    }

    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    EnvConfig env_cfg = ckpt.env_cfg;
    overlay_given_env(rc, given, env_cfg);
    env_cfg.validate();
    echo.emplace_back("checkpoint", checkpoint_path);
    if (dry_run) {
        std::cout << "dry run: configuration valid, nothing executed\n";
        return 0;
    }
    std::vector<EpisodeMetrics> episodes;
    const BenchReport report = evaluate_policy(env_cfg, ckpt.params, protocol, &episodes);
    fs::create_directories(out_dir);
    write_episodes_csv(out_dir / "eval_episodes.csv", episodes, echo);
    write_report_csv(out_dir / "eval_report.csv", report, echo);
    print_report("policy", report);
    std::cout << "policy_bytes " << report.policy_bytes << '\n';

    if (timing) {
        const InferenceTiming t = measure_inference(env_cfg, ckpt.params, protocol.episodes,
                                                    derive_seed(rc.seed, "timing"));
        std::cout << "timing: ms_per_layout=" << format_double(t.ms_per_layout)
                  << " policy_bytes=" << t.policy_bytes
                  << " peak_rss_delta_kb=" << t.peak_rss_delta_kb << '\n';
        // Wall-clock numbers vary run to run, so they live in their own file
        // outside the deterministic outputs.
        std::ofstream tf(out_dir / "timing.csv");
        tf << "ms_per_layout,policy_bytes,peak_rss_delta_kb\n"
           << format_double(t.ms_per_layout) << ',' << t.policy_bytes << ',' << t.peak_rss_delta_kb
           << '\n';
    }
    return 0;
}

int run_ablation(const std::string& kind, const std::vector<AblationRow>& rows, RunConfig& rc) {
    const fs::path out_dir(rc.out_dir);
    fs::create_directories(out_dir);
    const fs::path csv = out_dir / ("ablate_" + kind + ".csv");
    write_ablation_csv(csv, rows, echo_of(rc));
    for (const AblationRow& row : rows) {
        if (row.ok) {
            std::cout << row.sweep_key << '=' << format_double(row.setting)
                      << " mean_reward=" << format_double(row.report.mean_reward)
                      << " reward_std=" << format_double(row.report.reward_std)
                      << " mean_final_overlap=" << format_double(row.report.mean_final_overlap)
                      << '\n';
        } else {
            std::cout << row.sweep_key << '=' << format_double(row.setting) << " error: " << row.error
                      << '\n';
        }
    }
    std::cout << "table " << csv.string() << '\n';
    return 0;
}

int cmd_generate(RunConfig& rc, const std::string& prompt, const std::string& checkpoint_path,
                 std::string layout_path, const std::string& svg_path, double scale,
                 bool reading_order, bool dry_run) {
    print_resolved(rc);
    const PromptSpec spec = extract_keywords(prompt);
    std::cout << "keywords: " << spec.keyword_string << '\n';
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    if (dry_run) {
        std::cout << "dry run: configuration valid, nothing executed\n";
        return 0;
    }
    const Layout layout = generate_layout(spec, ckpt, checkpoint_path, rc.seed, reading_order);
    if (layout_path.empty()) {
        fs::create_directories(rc.out_dir);
        layout_path = (fs::path(rc.out_dir) / "layout.json").string();
    }
    save_layout(layout_path, layout);
    std::cout << "layout " << layout_path << '\n';
    if (!svg_path.empty()) {
        std::ofstream out(svg_path);
        if (!out) throw std::runtime_error("cannot open SVG for writing: " + svg_path);
        out << render_svg(layout, scale);
        std::cout << "svg " << svg_path << '\n';
    }
    std::cout << "final_overlap " << format_double(layout.final_overlap) << " steps "
              << layout.steps_used << '\n';
    return 0;
}

int cmd_render(const std::string& layout_path, const std::string& svg_path, double scale) {
    std::cout << "resolved configuration:\n  layout = " << layout_path << "\n  svg = " << svg_path
              << "\n  scale = " << format_double(scale) << '\n';
    const Layout layout = load_layout(layout_path);
    std::ofstream out(svg_path);
    if (!out) throw std::runtime_error("cannot open SVG for writing: " + svg_path);
    out << render_svg(layout, scale);
    std::cout << "svg " << svg_path << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"glyphrl: reinforcement-learned text-layout bounding boxes"};
    app.require_subcommand(1);

    RunConfig rc;
    std::string config_path;
    bool dry_run = false;

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a PPO policy on the layout environment");
    OptionBinder train_binder{train_cmd, rc, {}};
    train_binder.add_env_options();
    train_binder.add_ppo_options();
    train_binder.add_workers_option();
    train_binder.add_run_options(false);
    train_cmd->add_option("--config", config_path, "Flat key = value config file");
    train_cmd->add_flag("--dry-run", dry_run, "Validate and print the config, then exit");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or the random baseline");
    std::string checkpoint_path = "policy_final.json";
    std::string baseline;
    bool timing = false;
    OptionBinder eval_binder{eval_cmd, rc, {}};
    eval_binder.add_env_options();
    eval_binder.add_workers_option();
    eval_binder.add_run_options(true);
    eval_cmd->add_option("--checkpoint", checkpoint_path, "Policy checkpoint to evaluate");
    eval_cmd->add_option("--baseline", baseline, "Evaluate a baseline instead (random)");
    eval_cmd->add_flag("--timing", timing, "Also measure per-layout latency and memory");
    eval_cmd->add_option("--config", config_path, "Flat key = value config file");
    eval_cmd->add_flag("--dry-run", dry_run, "Validate and print the config, then exit");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "Sweep a parameter, training one policy per row");
    ablate_cmd->require_subcommand(1);
    ablate_cmd->fallthrough();
    std::int64_t budget = 100000;
    bool keep_checkpoints = false;
    std::vector<int> rect_counts{4, 5, 6, 7};
    std::vector<double> areas{1300.0, 1500.0, 1800.0, 2000.0};
    std::vector<std::uint64_t> study_seeds{0, 42, 123, 551, 999};

    auto* rect_cmd = ablate_cmd->add_subcommand("rectangles", "Sweep the box count");
    rect_cmd->add_option("--counts", rect_counts, "Box counts to sweep")->delimiter(',');
    rect_cmd->fallthrough();
    auto* area_cmd = ablate_cmd->add_subcommand("min-area", "Sweep the minimum box area");
    area_cmd->add_option("--areas", areas, "Minimum areas to sweep")->delimiter(',');
    area_cmd->fallthrough();
    auto* seeds_cmd = ablate_cmd->add_subcommand("seeds", "Re-train across run seeds");
    seeds_cmd->add_option("--seeds", study_seeds, "Run seeds to sweep")->delimiter(',');
    seeds_cmd->fallthrough();

    OptionBinder ablate_binder{ablate_cmd, rc, {}};
    ablate_binder.add_env_options();
    ablate_binder.add_ppo_options();
    ablate_binder.add_workers_option();
    ablate_binder.add_run_options(true);
    ablate_cmd->add_option("--budget", budget, "Training timesteps per row");
    ablate_cmd->add_flag("--keep-checkpoints", keep_checkpoints, "Keep per-row training outputs");
    ablate_cmd->add_option("--config", config_path, "Flat key = value config file");
    ablate_cmd->add_flag("--dry-run", dry_run, "Validate and print the config, then exit");

    // generate
    auto* generate_cmd =
        app.add_subcommand("generate", "Turn a prompt with quoted text into a layout");
    std::string prompt;
    std::string layout_out;
    std::string svg_out;
    double svg_scale = 4.0;
    bool reading_order = false;
    generate_cmd->add_option("--prompt", prompt, "Prompt; double-quoted spans become keywords")
        ->required();
    generate_cmd->add_option("--checkpoint", checkpoint_path, "Trained policy checkpoint");
    generate_cmd->add_option("--out", layout_out, "Layout JSON path (default <out-dir>/layout.json)");
    generate_cmd->add_option("--svg", svg_out, "Also render the layout to this SVG path");
    generate_cmd->add_option("--scale", svg_scale, "SVG pixels per window unit");
    generate_cmd->add_flag("--reading-order", reading_order,
                           "Assign keywords to boxes top-to-bottom, left-to-right");
    OptionBinder generate_binder{generate_cmd, rc, {}};
    generate_binder.add_run_options(false);
    generate_cmd->add_flag("--dry-run", dry_run, "Validate and print the config, then exit");

    // render
    auto* render_cmd = app.add_subcommand("render", "Render a saved layout document to SVG");
    std::string layout_in;
    render_cmd->add_option("--layout", layout_in, "Layout JSON document")->required();
    render_cmd->add_option("--svg", svg_out, "Output SVG path")->required();
    render_cmd->add_option("--scale", svg_scale, "SVG pixels per window unit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*train_cmd) {
            resolve_with_file(rc, train_binder, config_path);
            return cmd_train(rc, dry_run);
        }
        if (*eval_cmd) {
            resolve_with_file(rc, eval_binder, config_path);
            return cmd_eval(rc, eval_binder.given(), checkpoint_path, baseline, timing, dry_run);
        }
        if (*ablate_cmd) {
            resolve_with_file(rc, ablate_binder, config_path);
            print_resolved(rc);
            std::cout << "  budget = " << budget << '\n';
            rc.env.validate();
            AblationProtocol protocol;
            protocol.ppo = rc.ppo;
            protocol.ppo.total_timesteps = budget;
            protocol.ppo.validate();
            protocol.episodes = rc.episodes;
            protocol.seed = rc.seed;
            protocol.keep_checkpoints = keep_checkpoints;
            if (dry_run) {
                std::cout << "dry run: configuration valid, nothing executed\n";
                return 0;
            }
            const fs::path work_dir = fs::path(rc.out_dir) / "work";
            std::vector<AblationRow> rows;
            std::string kind;
            if (*rect_cmd) {
                kind = "rectangles";
                rows = ablate_rectangles(rect_counts, rc.env, protocol, work_dir / kind, &std::cout);
            } else if (*area_cmd) {
                kind = "min_area";
                rows = ablate_min_area(areas, rc.env, protocol, work_dir / kind, &std::cout);
            } else {
                kind = "seeds";
                rows = seed_study(study_seeds, rc.env, protocol, work_dir / kind, &std::cout);
            }
            if (!keep_checkpoints) {
                std::error_code ec;
                fs::remove_all(work_dir, ec);
            }
            return run_ablation(kind, rows, rc);
        }
        if (*generate_cmd) {
            return cmd_generate(rc, prompt, checkpoint_path, layout_out, svg_out, svg_scale,
                                reading_order, dry_run);
        }
        if (*render_cmd) {
            return cmd_render(layout_in, svg_out, svg_scale);
        }
    } catch (const InvalidConfigError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const EmptyLayoutError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const TrainingDivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
