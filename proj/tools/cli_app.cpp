// SPDX-License-Identifier: Apache-2.0

#include "cli_app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "markboard/artifact.hpp"
#include "markboard/attack.hpp"
#include "markboard/mint.hpp"
#include "markboard/training.hpp"
#include "markboard/verify.hpp"

namespace markboard::cli {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

VerificationPolicy policy_for(const ModelPair& pair, double epsilon_override, int tau_override) {
    double eps = pair.config.policy.epsilon;
    if (epsilon_override >= 0.0) eps = epsilon_override;
    int tau = pair.config.policy.tau;
    if (tau_override >= 0) tau = tau_override;
    if (tau < 0) tau = pair.n;  // default: exact match
    VerificationPolicy p = VerificationPolicy::uniform(pair.n, eps, tau, pair.config.policy.probe_count);
    p.validate(pair.topo.classes());
    return p;
}

ForwardFn forward_of(const DistributedModel& model) {
    return [&model](const Tensor& x) { return model.forward(x); };
}

struct TrainArgs {
    std::string config_path;
    std::string out_path;
    std::string metrics_path;
};

int run_train(const TrainArgs& args) {
    RunConfig config = args.config_path.empty() ? default_run_config() : load_run_config(args.config_path);
    const std::string metrics_path =
        args.metrics_path.empty() ? args.out_path + ".metrics.jsonl" : args.metrics_path;
    std::ofstream metrics(metrics_path, std::ios::trunc);
    if (!metrics) {
        std::cerr << "cannot open metrics log " << metrics_path << "\n";
        return 2;
    }
    MetricsSink sink = [&metrics](const std::string& line) { metrics << line << "\n"; };
    ModelPair pair = train_pair(config, sink);
    Artifact artifact = artifact_from_pair(pair);
    save_artifact(artifact, args.out_path);
    json summary;
    summary["pair"] = args.out_path;
    summary["checksum"] = artifact_checksum(artifact);
    summary["train_seconds"] = pair.train_seconds;
    summary["metrics"] = metrics_path;
    std::cout << summary.dump() << "\n";
    std::cerr << "trained pair -> " << args.out_path << " (" << pair.train_seconds << "s)\n";
    return 0;
}

struct MintArgs {
    std::string pair_path;
    std::string registry_path;
    std::string user;
    int count = 1;
    std::string outdir = ".";
    std::uint64_t mint_seed = 0;
    bool seeded = false;
};

int run_mint(const MintArgs& args) {
    ModelPair pair = pair_from_artifact(load_artifact(args.pair_path));
    RegistryLock lock(args.registry_path);
    SignatureRegistry registry = std::filesystem::exists(args.registry_path)
                                     ? SignatureRegistry::load(args.registry_path)
                                     : SignatureRegistry(pair.n);
    if (registry.n() != pair.n) {
        std::cerr << "registry n=" << registry.n() << " does not match pair n=" << pair.n << "\n";
        return 2;
    }
    std::vector<std::string> users;
    if (args.count == 1) {
        users.push_back(args.user);
    } else {
        for (int i = 0; i < args.count; ++i) users.push_back(args.user + "_" + std::to_string(i));
    }
    const std::uint64_t seed = args.seeded
                                   ? args.mint_seed
                                   : static_cast<std::uint64_t>(
                                         std::chrono::system_clock::now().time_since_epoch().count());
    Rng rng(seed, 11);
    const std::string now = rfc3339_now();
    const auto t0 = Clock::now();
    std::vector<Minted> minted = mint_batch(pair, registry, users, rng, now);
    const double mint_ms = ms_since(t0);
    std::filesystem::create_directories(args.outdir);
    std::vector<std::string> written;
    try {
        for (const Minted& m : minted) {
            const std::string path = args.outdir + "/" + m.record.user_id + ".mbu";
            save_artifact(m.artifact, path);
            written.push_back(path);
        }
        registry.save(args.registry_path);
    } catch (...) {
        for (const std::string& path : written) std::filesystem::remove(path);
        throw;
    }
    json summary;
    summary["minted"] = users.size();
    summary["registry"] = args.registry_path;
    summary["per_model_ms"] = mint_ms / static_cast<double>(users.size());
    std::cout << summary.dump() << "\n";
    std::cerr << "minted " << users.size() << " model(s) in " << mint_ms << " ms ("
              << mint_ms / static_cast<double>(users.size()) << " ms/model)\n";
    return 0;
}

struct VerifyArgs {
    std::string model_path;
    std::string pair_path;
    std::string registry_path;
    double epsilon = -1.0;
    int tau = -1;
};

int run_verify(const VerifyArgs& args) {
    ModelPair pair = pair_from_artifact(load_artifact(args.pair_path));
    Artifact suspect = load_artifact(args.model_path);
    if (suspect.n != pair.n) {
        std::cerr << "suspect model n=" << suspect.n << " does not match trigger bank n=" << pair.n
                  << "\n";
        return 2;
    }
    DistributedModel model = distributed_from_artifact(suspect);
    SignatureRegistry registry = SignatureRegistry::load(args.registry_path);
    VerificationPolicy policy = policy_for(pair, args.epsilon, args.tau);
    VerificationReport report = verify_model(forward_of(model), pair.bank, registry, policy);
    std::cout << report.to_json() << "\n";
    std::cerr << (report.flagged ? "FLAGGED" : "not flagged") << " best=" << report.best_user
              << " score=" << report.best_score << "/" << pair.n << "\n";
    return report.flagged ? 0 : 1;
}

struct AttackArgs {
    std::string kind;
    std::string model_path;
    std::string pair_path;
    std::string registry_path;
    std::string report_path;
    std::string other_path;
    std::string branches_csv;
    std::string save_model;
    double rate = -1.0;
    double fraction = 0.3;
    int epochs = 100;
    std::string sweep;
};

std::vector<int> parse_int_csv(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

int run_attack(const AttackArgs& args) {
    ModelPair pair = pair_from_artifact(load_artifact(args.pair_path));
    Artifact suspect_artifact = load_artifact(args.model_path);
    DistributedModel model = distributed_from_artifact(suspect_artifact);
    SignatureRegistry registry = SignatureRegistry::load(args.registry_path);
    VerificationPolicy policy = policy_for(pair, -1.0, -1);
    DatasetBundle bundle = make_bundle_from_config(pair.config);

    const MintRecord* record = registry.find_by_checksum(artifact_checksum(suspect_artifact));
    std::string true_user = record ? record->user_id : "";
    std::string notes;
    if (true_user.empty()) {
        // fall back to the best-matching registered user
        const auto pre = extract_signature(forward_of(model), pair.bank, policy);
        true_user = attribute(pre, registry).user;
        notes = "model checksum not in registry; metrics computed against best match " + true_user;
    }

    const EvalResult before =
        evaluate(forward_of(model), bundle.clean_test, pair.bank, registry, policy, true_user);

    auto finish = [&](const DistributedModel& attacked, AttackReport report) -> int {
        const EvalResult after = evaluate(forward_of(attacked), bundle.clean_test, pair.bank,
                                          registry, policy, true_user);
        report.kind = args.kind;
        report.cdp_before = before.cdp;
        report.cdp_after = after.cdp;
        report.bit_acc = after.bit_acc;
        report.id_acc = after.id_acc;
        Signature s;
        s.bits = after.extracted;
        report.extracted = s.to_string();
        if (!notes.empty()) report.notes = report.notes.empty() ? notes : report.notes + "; " + notes;
        std::ofstream out(args.report_path, std::ios::trunc);
        if (!out) {
            std::cerr << "cannot write report " << args.report_path << "\n";
            return 2;
        }
        out << report.to_json();
        if (!args.save_model.empty()) {
            save_artifact(artifact_from_user_model(attacked, rfc3339_now()), args.save_model);
        }
        std::cerr << args.kind << ": cdp " << before.cdp << " -> " << after.cdp << ", bit_acc "
                  << report.bit_acc << ", id_acc " << report.id_acc << "\n";
        return 0;
    };

    if (args.kind == "escape") {
        return finish(escape_attack(model), {});
    }
    if (args.kind == "collude") {
        if (args.other_path.empty() || args.branches_csv.empty()) {
            std::cerr << "collude requires --other and --branches\n";
            return 2;
        }
        DistributedModel other = distributed_from_artifact(load_artifact(args.other_path));
        AttackReport report;
        const auto branches = parse_int_csv(args.branches_csv);
        report.params["branches_swapped"] = static_cast<double>(branches.size());
        return finish(collusion_swap(model, other, branches), std::move(report));
    }
    if (args.kind == "prune") {
        if (!args.sweep.empty()) {
            std::ofstream out(args.report_path, std::ios::trunc);
            if (!out) {
                std::cerr << "cannot write report " << args.report_path << "\n";
                return 2;
            }
            out << AttackReport::csv_header() << "\n";
            double lo = 0.1, hi = 0.9, step = 0.1;
            if (std::sscanf(args.sweep.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 || step <= 0) {
                std::cerr << "--sweep expects lo:hi:step\n";
                return 2;
            }
            for (double r = lo; r <= hi + 1e-9; r += step) {
                const EvalResult after = evaluate(forward_of(prune_model(model, r)),
                                                  bundle.clean_test, pair.bank, registry, policy,
                                                  true_user);
                AttackReport row;
                row.kind = "prune";
                row.params["rate"] = r;
                row.cdp_before = before.cdp;
                row.cdp_after = after.cdp;
                row.bit_acc = after.bit_acc;
                row.id_acc = after.id_acc;
                out << row.to_csv_row("rate") << "\n";
                std::cerr << "prune rate " << r << ": cdp " << after.cdp << ", bit_acc "
                          << after.bit_acc << "\n";
            }
            return 0;
        }
        if (args.rate < 0.0) {
            std::cerr << "prune requires --rate (or --sweep)\n";
            return 2;
        }
        AttackReport report;
        report.params["rate"] = args.rate;
        return finish(prune_model(model, args.rate), std::move(report));
    }
    if (args.kind == "finetune") {
        AttackReport report;
        report.params["fraction"] = args.fraction;
        report.params["epochs"] = args.epochs;
        return finish(finetune_model(model, bundle.clean_train, args.fraction, args.epochs,
                                     pair.config.train, pair.config.seed + 99),
                      std::move(report));
    }
    std::cerr << "unknown attack kind " << args.kind << "\n";
    return 2;
}

struct BenchArgs {
    std::string pair_path;
    std::string pair2_path;
    int models = 100;
};

json bench_pair(const ModelPair& pair, int models) {
    json out;
    out["n"] = pair.n;
    out["models"] = models;
    if (models == 0) return out;
    SignatureRegistry scratch(pair.n);
    Rng rng(12345, 17);
    std::vector<double> cumulative;
    cumulative.reserve(static_cast<std::size_t>(models));
    std::vector<double> each;
    each.reserve(static_cast<std::size_t>(models));
    const std::string now = rfc3339_now();
    const std::uint64_t space = (pair.n < 62) ? ((1ULL << pair.n) - 2) : ~0ULL;
    const auto t0 = Clock::now();
    for (int i = 0; i < models; ++i) {
        if (scratch.size() + 8 >= space) scratch = SignatureRegistry(pair.n);  // recycle throwaways
        const auto s0 = Clock::now();
        const Signature sig = sample_signature(pair.n, scratch, rng);
        const std::uint64_t psi_seed = (static_cast<std::uint64_t>(rng.next_u32()) << 32) | rng.next_u32();
        Artifact a = mint(pair, sig, psi_seed, now);
        const std::string bytes = serialize_artifact(a);
        each.push_back(ms_since(s0));
        cumulative.push_back(ms_since(t0));
        MintRecord rec{"bench_" + std::to_string(i), sig, now, psi_seed, artifact_checksum(a)};
        scratch.add(rec);
        (void)bytes;
    }
    std::vector<double> sorted = each;
    std::sort(sorted.begin(), sorted.end());
    auto pct = [&](double q) {
        const std::size_t idx = std::min(sorted.size() - 1,
                                         static_cast<std::size_t>(q * static_cast<double>(sorted.size())));
        return sorted[idx];
    };
    double mean = 0.0;
    for (double v : each) mean += v;
    mean /= static_cast<double>(each.size());
    // R^2 of cumulative time against model index: linear when per-model cost
    // is constant.
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < cumulative.size(); ++i) {
        const double x = static_cast<double>(i + 1);
        const double y = cumulative[i];
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    const double m = static_cast<double>(cumulative.size());
    const double cov = sxy - sx * sy / m;
    const double vx = sxx - sx * sx / m;
    const double vy = syy - sy * sy / m;
    out["mean_ms"] = mean;
    out["p50_ms"] = pct(0.50);
    out["p90_ms"] = pct(0.90);
    out["p99_ms"] = pct(0.99);
    out["total_ms"] = cumulative.back();
    out["r2_linear"] = (vx > 0 && vy > 0) ? (cov * cov) / (vx * vy) : 1.0;
    return out;
}

int run_bench(const BenchArgs& args) {
    ModelPair pair = pair_from_artifact(load_artifact(args.pair_path));
    json doc;
    doc["pair"] = bench_pair(pair, args.models);
    if (!args.pair2_path.empty()) {
        ModelPair pair2 = pair_from_artifact(load_artifact(args.pair2_path));
        doc["pair2"] = bench_pair(pair2, args.models);
        if (args.models > 0) {
            const double t1 = doc["pair"]["mean_ms"].get<double>();
            const double t2 = doc["pair2"]["mean_ms"].get<double>();
            doc["scaling"] = {{"n_ratio", static_cast<double>(pair2.n) / pair.n},
                              {"time_ratio", t2 / t1}};
        }
    }
    std::cout << doc.dump() << "\n";
    return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"Hot-swap multi-bit model watermarking toolkit"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train a complementary model pair");
    train->add_option("--config", train_args.config_path, "Run config JSON (defaults when omitted)");
    train->add_option("--out", train_args.out_path, "Output pair artifact path")->required();
    train->add_option("--metrics", train_args.metrics_path, "Metrics log path (default <out>.metrics.jsonl)");

    MintArgs mint_args;
    auto* mint_cmd = app.add_subcommand("mint", "Mint user models by branch swapping");
    mint_cmd->add_option("--pair", mint_args.pair_path, "Pair artifact")->required();
    mint_cmd->add_option("--registry", mint_args.registry_path, "Registry JSON path")->required();
    mint_cmd->add_option("--user", mint_args.user, "User id (prefix with --count > 1)")->required();
    mint_cmd->add_option("--count", mint_args.count, "Number of models to mint")->check(CLI::PositiveNumber);
    mint_cmd->add_option("--outdir", mint_args.outdir, "Artifact output directory");
    mint_cmd->add_option("--mint-seed", mint_args.mint_seed, "Deterministic signature/psi sampling seed")
        ->each([&mint_args](const std::string&) { mint_args.seeded = true; });

    VerifyArgs verify_args;
    auto* verify = app.add_subcommand("verify", "Black-box verification of a suspect model");
    verify->add_option("--model", verify_args.model_path, "Suspect user-model artifact")->required();
    verify->add_option("--pair", verify_args.pair_path, "Pair artifact (carries the trigger bank)")->required();
    verify->add_option("--registry", verify_args.registry_path, "Registry JSON")->required();
    verify->add_option("--tau", verify_args.tau, "Leak threshold (default: n, exact match)");
    verify->add_option("--epsilon", verify_args.epsilon, "Per-bit activation threshold override");

    AttackArgs attack_args;
    auto* attack = app.add_subcommand("attack", "Run a robustness attack and report metrics");
    attack->add_option("--kind", attack_args.kind, "escape|collude|prune|finetune")
        ->required()
        ->check(CLI::IsMember({"escape", "collude", "prune", "finetune"}));
    attack->add_option("--model", attack_args.model_path, "Victim user-model artifact")->required();
    attack->add_option("--pair", attack_args.pair_path, "Pair artifact")->required();
    attack->add_option("--registry", attack_args.registry_path, "Registry JSON")->required();
    attack->add_option("--report", attack_args.report_path, "Report output path")->required();
    attack->add_option("--other", attack_args.other_path, "Second model (collude)");
    attack->add_option("--branches", attack_args.branches_csv, "Branch indices to swap, e.g. 0,3");
    attack->add_option("--rate", attack_args.rate, "Prune rate in [0,1)");
    attack->add_option("--sweep", attack_args.sweep, "Prune sweep lo:hi:step, writes CSV");
    attack->add_option("--fraction", attack_args.fraction, "Clean-data fraction (finetune)");
    attack->add_option("--epochs", attack_args.epochs, "Fine-tuning epochs");
    attack->add_option("--save-model", attack_args.save_model, "Also save the attacked model");

    BenchArgs bench_args;
    auto* bench = app.add_subcommand("bench", "Mint-latency benchmark");
    bench->add_option("--pair", bench_args.pair_path, "Pair artifact")->required();
    bench->add_option("--pair2", bench_args.pair2_path, "Second pair (different n) for scaling check");
    bench->add_option("--models", bench_args.models, "Models to mint")->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*train) return run_train(train_args);
        if (*mint_cmd) return run_mint(mint_args);
        if (*verify) return run_verify(verify_args);
        if (*attack) return run_attack(attack_args);
        if (*bench) return run_bench(bench_args);
    } catch (const TrainingFailure& e) {
        std::cerr << "training failure: " << e.what() << "\n";
        return 1;
    } catch (const DuplicateUserError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const SignatureSpaceExhausted& e) {
        std::cerr << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    return 2;
}

int cli_main(const std::vector<std::string>& args) {
    std::vector<std::string> full;
    full.reserve(args.size() + 1);
    full.push_back("markboard");
    full.insert(full.end(), args.begin(), args.end());
    std::vector<char*> argv;
    argv.reserve(full.size());
    for (std::string& s : full) argv.push_back(s.data());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace markboard::cli
