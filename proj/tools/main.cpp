// SPDX-License-Identifier: Apache-2.0
//
// resadapt: zero-shot evaluation, self-training and domain generalization
// over precomputed embedding banks.

#include "report.hpp"

#include "resadapt/error.hpp"
#include "resadapt/gradcheck.hpp"
#include "resadapt/io.hpp"
#include "resadapt/residual_dg.hpp"
#include "resadapt/self_training.hpp"
#include "resadapt/synth.hpp"
#include "resadapt/zeroshot.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace resadapt::cli {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;

struct CommonOptions {
    std::string manifest;
    std::string json;
    double tau = TrainConfig{}.tau;
};

struct TrainOptions {
    TrainConfig cfg;
    std::string optimizer = "adam";
};

struct ZeroshotOptions {
    CommonOptions common;
    bool domain_prior = false;
    std::vector<std::string> splits;
};

struct SelftrainOptions {
    CommonOptions common;
    TrainOptions train;
    bool domain_prior = false;
    std::vector<std::string> targets;
    std::string out;
};

struct DgOptionsCli {
    CommonOptions common;
    TrainOptions train;
    std::string baseline = "disentangled";
    std::vector<std::string> holdouts;
    std::string out;
    bool eval_only = false;
};

struct SynthOptions {
    SynthConfig cfg;
    std::string out;
    std::string json;
};

struct GradcheckCli {
    verify::GradcheckOptions opts;
    std::string stencil = "five";
    std::string json;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--manifest", o.manifest, "Dataset manifest (JSON)")->required();
    cmd->add_option("--tau", o.tau, "Softmax temperature")->check(CLI::PositiveNumber);
    cmd->add_option("--json", o.json, "Write the machine-readable report here");
}

void add_train(CLI::App* cmd, TrainOptions& o) {
    auto& c = o.cfg;
    cmd->add_option("--gamma", c.gamma, "Pseudo-label confidence threshold")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--lr", c.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--batch", c.batch_size, "Batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--epochs", c.epochs, "Training epochs");
    cmd->add_option("--seed", c.seed, "Shuffle seed");
    cmd->add_option("--beta1", c.adam_beta1, "Adam first-moment decay");
    cmd->add_option("--beta2", c.adam_beta2, "Adam second-moment decay");
    cmd->add_option("--adam-eps", c.adam_epsilon, "Adam epsilon");
    cmd->add_option("--optimizer", o.optimizer, "adam or sgd")->check(CLI::IsMember({"adam", "sgd"}));
    cmd->add_flag("--refresh-pseudo-labels", c.refresh_pseudo_labels_each_epoch,
                  "Regenerate pseudo-labels from the current residual every epoch");
}

TrainConfig finish_train(const TrainOptions& o, double tau) {
    TrainConfig cfg = o.cfg;
    cfg.tau = tau;
    cfg.optimizer = o.optimizer == "sgd" ? Optimizer::sgd : Optimizer::adam;
    cfg.validate();
    return cfg;
}

Json train_hyperparameters(const TrainConfig& cfg, const std::string& optimizer) {
    Json h;
    h["gamma"] = cfg.gamma;
    h["tau"] = cfg.tau;
    h["learning_rate"] = cfg.learning_rate;
    h["batch_size"] = cfg.batch_size;
    h["epochs"] = cfg.epochs;
    h["seed"] = cfg.seed;
    h["optimizer"] = optimizer;
    h["adam_beta1"] = cfg.adam_beta1;
    h["adam_beta2"] = cfg.adam_beta2;
    h["adam_epsilon"] = cfg.adam_epsilon;
    h["refresh_pseudo_labels"] = cfg.refresh_pseudo_labels_each_epoch;
    return h;
}

ClassAnchorSet normalized(ClassAnchorSet anchors) {
    anchors.anchors = normalize_rows(anchors.anchors);
    return anchors;
}

io::LoadedSplit load_normalized(const io::Manifest& m, const io::SplitEntry& s) {
    auto loaded = io::load_split(m, s);
    loaded.bank = normalize_rows(loaded.bank);
    return loaded;
}

std::vector<const io::SplitEntry*> select_splits(const io::Manifest& m,
                                                 const std::vector<std::string>& names) {
    std::vector<const io::SplitEntry*> out;
    if (names.empty()) {
        for (const auto& s : m.splits) {
            out.push_back(&s);
        }
        return out;
    }
    std::set<std::string> seen;
    for (const auto& name : names) {
        if (!seen.insert(name).second) {
            throw Error(ErrorCode::InvalidArgument, "split \"" + name + "\" given twice");
        }
        const io::SplitEntry* found = nullptr;
        for (const auto& s : m.splits) {
            if (s.name == name) {
                found = &s;
            }
        }
        if (!found) {
            throw Error(ErrorCode::InvalidArgument, "manifest has no split \"" + name + "\"");
        }
        out.push_back(found);
    }
    return out;
}

double evaluate(const Matrix& bank, const ClassAnchorSet& anchors, Temperature tau,
                const std::vector<ClassIndex>& labels) {
    return percent(accuracy(classify_batch(bank, anchors, tau), labels));
}

void emit(const RunReport& report, const std::string& json_path) {
    report.print(std::cout);
    if (!json_path.empty()) {
        write_json(report.to_json(), json_path);
    }
}

int run_zeroshot(const ZeroshotOptions& o) {
    const auto manifest = io::load_manifest(o.common.manifest);
    const Temperature tau(o.common.tau);

    RunReport report;
    report.command = "zeroshot";
    report.method = o.domain_prior ? Method::domain_prior : Method::zero_shot;
    report.hyperparameters["tau"] = tau.value();
    report.hyperparameters["domain_prior"] = o.domain_prior;

    for (const auto* split : select_splits(manifest, o.splits)) {
        const auto data = load_normalized(manifest, *split);
        if (!data.labels) {
            throw Error(ErrorCode::MissingLabels, "split \"" + split->name + "\" has no labels to evaluate");
        }
        const auto anchors = normalized(io::load_anchors(manifest, o.domain_prior, split));
        SplitRow row;
        row.split = split->name;
        row.domain = split->domain_name;
        row.samples = data.bank.rows();
        row.after = evaluate(data.bank, anchors, tau, *data.labels);
        report.rows.push_back(std::move(row));
    }
    emit(report, o.common.json);
    return kExitOk;
}

void print_epochs(const std::string& split, const TrainLog& log) {
    for (const auto& e : log.epochs) {
        std::printf("%s epoch %zu retained %zu loss %.6f\n", split.c_str(), e.epoch, e.retained,
                    e.mean_loss);
    }
}

int run_selftrain(const SelftrainOptions& o) {
    const auto manifest = io::load_manifest(o.common.manifest);
    const TrainConfig cfg = finish_train(o.train, o.common.tau);
    const Temperature tau(cfg.tau);

    RunReport report;
    report.command = "selftrain";
    report.method = Method::self_training;
    report.hyperparameters = train_hyperparameters(cfg, o.train.optimizer);
    report.hyperparameters["domain_prior"] = o.domain_prior;

    if (!o.out.empty()) {
        fs::create_directories(o.out);
    }
    for (const auto* split : select_splits(manifest, o.targets)) {
        const auto data = load_normalized(manifest, *split);
        const auto anchors = normalized(io::load_anchors(manifest, o.domain_prior, split));
        const auto result = train_task_residual(data.bank, anchors, cfg);
        print_epochs(split->name, result.log);

        SplitRow row;
        row.split = split->name;
        row.domain = split->domain_name;
        row.samples = data.bank.rows();
        row.retained = result.initial_pseudo_labels.size();
        row.epochs = result.log.epochs;
        if (data.labels) {
            row.before = evaluate(data.bank, anchors, tau, *data.labels);
            row.after = evaluate(data.bank, adapted_anchors(anchors, result.residual), tau, *data.labels);
        }
        if (!o.out.empty()) {
            const auto path = fs::path(o.out) / (split->name + ".emb");
            io::write_residual(result.residual, path);
            row.output = path.string();
        }
        for (const auto& w : result.log.warnings) {
            report.warnings.push_back(split->name + ": " + w);
        }
        report.rows.push_back(std::move(row));
    }
    emit(report, o.common.json);
    return kExitOk;
}

int run_dgtrain(const DgOptionsCli& o) {
    const auto manifest = io::load_manifest(o.common.manifest);
    const TrainConfig cfg = finish_train(o.train, o.common.tau);
    const Temperature tau(cfg.tau);
    const bool disentangled = o.baseline == "disentangled";
    if (o.eval_only && o.out.empty()) {
        throw Error(ErrorCode::InvalidArgument, "--eval-only needs --out pointing at trained residuals");
    }

    RunReport report;
    report.command = "dgtrain";
    report.method = disentangled ? Method::dg_shared : Method::dg_common_baseline;
    report.hyperparameters = train_hyperparameters(cfg, o.train.optimizer);
    report.hyperparameters["baseline"] = o.baseline;
    report.hyperparameters["eval_only"] = o.eval_only;

    const auto anchors = normalized(io::load_anchors(manifest, false));
    const auto holdouts = select_splits(manifest, o.holdouts);
    const std::size_t needed = disentangled ? 2 : 1;
    if (manifest.splits.size() < needed + 1) {
        throw Error(ErrorCode::InvalidArgument,
                    "manifest needs at least " + std::to_string(needed) +
                        " training domains besides the held-out one");
    }
    if (!o.out.empty() && !o.eval_only) {
        fs::create_directories(o.out);
    }

    for (const auto* holdout : holdouts) {
        const auto target = load_normalized(manifest, *holdout);
        SplitRow row;
        row.split = holdout->name;
        row.domain = holdout->domain_name;
        row.samples = target.bank.rows();

        ClassAnchorSet adapted;
        if (o.eval_only) {
            if (disentangled) {
                adapted = inference_anchors(anchors, io::read_dg_shared(fs::path(o.out) / holdout->name));
            } else {
                adapted = adapted_anchors(anchors, io::read_residual(fs::path(o.out) / (holdout->name + ".emb")));
            }
        } else {
            MultiDomainBank sources;
            for (const auto& s : manifest.splits) {
                if (&s == holdout) {
                    continue;
                }
                sources.banks.push_back(load_normalized(manifest, s).bank);
                sources.domain_names.push_back(s.domain_name);
            }
            const TrainLog* log = nullptr;
            if (disentangled) {
                auto result = train_disentangled(sources, anchors, cfg);
                for (std::size_t n = 0; n < sources.domain_names.size(); ++n) {
                    row.retained_by_domain.emplace_back(sources.domain_names[n],
                                                        result.pseudo_labels[n].size());
                }
                adapted = inference_anchors(anchors, result.residual);
                if (!o.out.empty()) {
                    const auto dir = fs::path(o.out) / holdout->name;
                    io::write_dg_residual(result.residual, dir);
                    row.output = dir.string();
                }
                for (const auto& w : result.log.warnings) {
                    report.warnings.push_back(holdout->name + ": " + w);
                }
                row.epochs = result.log.epochs;
                log = &result.log;
                print_epochs(holdout->name, *log);
            } else {
                auto result = sources.banks.size() == 1
                                  ? train_task_residual(sources.banks.front(), anchors, cfg)
                                  : train_common_baseline(sources, anchors, cfg);
                for (std::size_t n = 0; n < sources.domain_names.size(); ++n) {
                    row.retained_by_domain.emplace_back(
                        sources.domain_names[n],
                        generate_pseudo_labels(sources.banks[n], anchors, tau, cfg.gamma).size());
                }
                adapted = adapted_anchors(anchors, result.residual);
                if (!o.out.empty()) {
                    const auto path = fs::path(o.out) / (holdout->name + ".emb");
                    io::write_residual(result.residual, path);
                    row.output = path.string();
                }
                for (const auto& w : result.log.warnings) {
                    report.warnings.push_back(holdout->name + ": " + w);
                }
                row.epochs = result.log.epochs;
                print_epochs(holdout->name, result.log);
            }
            std::size_t total = 0;
            for (const auto& [name, count] : row.retained_by_domain) {
                total += count;
            }
            row.retained = total;
        }
        if (target.labels) {
            row.before = evaluate(target.bank, anchors, tau, *target.labels);
            row.after = evaluate(target.bank, adapted, tau, *target.labels);
        }
        report.rows.push_back(std::move(row));
    }
    emit(report, o.common.json);
    return kExitOk;
}

int run_synth(const SynthOptions& o) {
    const auto problem = generate(o.cfg);
    const fs::path dir(o.out);
    fs::create_directories(dir);

    io::Manifest manifest;
    manifest.class_names = problem.anchors.class_names;
    manifest.prompt_template = std::string(kSynthPromptTemplate);
    manifest.anchor_bank_path = dir / "anchors.emb";
    io::write_bank(problem.anchors.anchors, manifest.anchor_bank_path);

    Json doc;
    doc["command"] = "synth";
    doc["config"] = {{"num_classes", o.cfg.num_classes},
                     {"dim", o.cfg.dim},
                     {"num_domains", o.cfg.num_domains},
                     {"samples_per_class_per_domain", o.cfg.samples_per_class_per_domain},
                     {"class_separation", o.cfg.class_separation},
                     {"domain_shift", o.cfg.domain_shift},
                     {"noise", o.cfg.noise},
                     {"anchor_noise", o.cfg.anchor_noise},
                     {"seed", o.cfg.seed}};
    Json domains = Json::array();
    const Temperature tau(TrainConfig{}.tau);
    std::printf("%-12s%-10s%-12s%s\n", "domain", "samples", "zero-shot%", "oracle%");
    for (std::size_t n = 0; n < problem.domains.banks.size(); ++n) {
        const auto& name = problem.domains.domain_names[n];
        io::SplitEntry split;
        split.name = name;
        split.domain_name = name;
        split.bank_path = dir / (name + ".emb");
        split.labels_path = dir / (name + ".lbl");
        io::write_bank(problem.domains.banks[n], split.bank_path);
        io::write_labels(problem.labels[n], *split.labels_path);
        manifest.splits.push_back(std::move(split));

        const double zs = percent(zero_shot_accuracy(problem, n, tau));
        const double oracle = percent(oracle_accuracy(problem, n));
        std::printf("%-12s%-10zu%-12.2f%.2f\n", name.c_str(), problem.domains.banks[n].rows(), zs, oracle);
        domains.push_back({{"domain", name},
                           {"samples", problem.domains.banks[n].rows()},
                           {"zero_shot_accuracy", zs},
                           {"oracle_accuracy", oracle}});
    }
    doc["domains"] = std::move(domains);
    io::save_manifest(manifest, dir / "manifest.json");
    if (!o.json.empty()) {
        write_json(doc, o.json);
    }
    return kExitOk;
}

int run_gradcheck(const GradcheckCli& o) {
    auto opts = o.opts;
    opts.stencil = o.stencil == "three" ? verify::FdStencil::three_point : verify::FdStencil::five_point;
#ifdef RESADAPT_GRADCHECK_INJECT_SIGN_FLIP
    opts.inject_sign_flip = true;
#endif
    const auto report = verify::run_gradcheck(opts);
    const auto& w = report.worst;
    std::printf("instances %zu coordinates %zu violations %zu\n", report.instances,
                report.coordinates_checked, report.violations);
    std::printf("worst: instance %zu row %zu col %zu analytic %.9e fd %.9e rel_error %.3e\n", w.instance,
                w.row, w.col, w.analytic, w.numeric, w.relative_error);
    if (!o.json.empty()) {
        Json doc;
        doc["command"] = "gradcheck";
        doc["seed"] = opts.seed;
        doc["instances"] = report.instances;
        doc["max_classes"] = opts.max_classes;
        doc["max_dim"] = opts.max_dim;
        doc["max_samples"] = opts.max_samples;
        doc["step"] = opts.step;
        doc["stencil"] = o.stencil;
        doc["tolerance"] = opts.tolerance;
        doc["coordinates_checked"] = report.coordinates_checked;
        doc["violations"] = report.violations;
        doc["worst"] = {{"instance", w.instance}, {"row", w.row}, {"col", w.col},
                        {"analytic", w.analytic}, {"fd", w.numeric},
                        {"relative_error", w.relative_error}};
        write_json(doc, o.json);
    }
    if (!report.passed()) {
        std::fprintf(stderr, "%s: %zu coordinates exceed relative error %g\n",
                     std::string(to_string(ErrorCode::GradientMismatch)).c_str(), report.violations,
                     opts.tolerance);
        return kExitVerification;
    }
    return kExitOk;
}

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::ConfigInvalid:
    case ErrorCode::MalformedTemplate:
        return kExitValidation;
    case ErrorCode::GradientMismatch:
        return kExitVerification;
    default:
        return kExitData;
    }
}

} // namespace

int run(int argc, char** argv) {
    CLI::App app{"Task-residual adaptation of vision-language class anchors"};
    app.require_subcommand(1);

    ZeroshotOptions zs;
    auto* zs_cmd = app.add_subcommand("zeroshot", "Evaluate zero-shot accuracy per split");
    add_common(zs_cmd, zs.common);
    zs_cmd->add_flag("--domain-prior", zs.domain_prior, "Use the domain-decorated anchors");
    zs_cmd->add_option("--split", zs.splits, "Evaluate only these splits");

    SelftrainOptions st;
    auto* st_cmd = app.add_subcommand("selftrain", "Self-train a task residual on each target split");
    add_common(st_cmd, st.common);
    add_train(st_cmd, st.train);
    st_cmd->add_flag("--domain-prior", st.domain_prior, "Use the domain-decorated anchors");
    st_cmd->add_option("--target", st.targets, "Target splits (default: all)");
    st_cmd->add_option("--out", st.out, "Directory receiving <split>.emb residuals");

    DgOptionsCli dg;
    auto* dg_cmd = app.add_subcommand("dgtrain", "Leave-one-domain-out domain generalization");
    add_common(dg_cmd, dg.common);
    add_train(dg_cmd, dg.train);
    dg_cmd->add_option("--baseline", dg.baseline, "disentangled or common")
        ->check(CLI::IsMember({"disentangled", "common"}));
    dg_cmd->add_option("--holdout", dg.holdouts, "Held-out splits (default: each split in turn)");
    dg_cmd->add_option("--out", dg.out, "Directory receiving trained residuals");
    dg_cmd->add_flag("--eval-only", dg.eval_only, "Evaluate residuals already in --out");

    SynthOptions sy;
    auto* sy_cmd = app.add_subcommand("synth", "Write a synthetic problem as manifest and files");
    sy_cmd->add_option("--classes", sy.cfg.num_classes, "Number of classes");
    sy_cmd->add_option("--dim", sy.cfg.dim, "Embedding dimension");
    sy_cmd->add_option("--domains", sy.cfg.num_domains, "Number of domains");
    sy_cmd->add_option("--samples", sy.cfg.samples_per_class_per_domain, "Samples per class per domain");
    sy_cmd->add_option("--separation", sy.cfg.class_separation, "Class prototype spread");
    sy_cmd->add_option("--shift", sy.cfg.domain_shift, "Per-domain prototype offset norm");
    sy_cmd->add_option("--noise", sy.cfg.noise, "Within-class dispersion");
    sy_cmd->add_option("--anchor-noise", sy.cfg.anchor_noise, "Anchor offset from true prototypes");
    sy_cmd->add_option("--seed", sy.cfg.seed, "Generator seed");
    sy_cmd->add_option("--out", sy.out, "Output directory")->required();
    sy_cmd->add_option("--json", sy.json, "Write the machine-readable summary here");

    GradcheckCli gc;
    auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
    gc_cmd->add_option("--seed", gc.opts.seed, "Instance seed");
    gc_cmd->add_option("--instances", gc.opts.instances, "Number of random instances");
    gc_cmd->add_option("--max-classes", gc.opts.max_classes, "Largest class count");
    gc_cmd->add_option("--max-dim", gc.opts.max_dim, "Largest dimension");
    gc_cmd->add_option("--max-samples", gc.opts.max_samples, "Largest sample count");
    gc_cmd->add_option("--step", gc.opts.step, "Finite-difference step")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--tolerance", gc.opts.tolerance, "Relative error bound")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--stencil", gc.stencil, "five or three")->check(CLI::IsMember({"five", "three"}));
    gc_cmd->add_option("--json", gc.json, "Write the machine-readable summary here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (zs_cmd->parsed()) {
            return run_zeroshot(zs);
        }
        if (st_cmd->parsed()) {
            return run_selftrain(st);
        }
        if (dg_cmd->parsed()) {
            return run_dgtrain(dg);
        }
        if (sy_cmd->parsed()) {
            return run_synth(sy);
        }
        return run_gradcheck(gc);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
}

} // namespace resadapt::cli

int main(int argc, char** argv) {
    return resadapt::cli::run(argc, argv);
}
