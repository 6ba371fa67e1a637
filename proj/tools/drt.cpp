// drt: command-line front end for the rock-typing pipeline.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "drt/pipeline.hpp"

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    unsigned threads = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
    cmd->add_option("--config", c.config, "pipeline configuration JSON")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "random seed (overrides the config)");
    if (with_out) cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::Range(1u, 1024u));
}

drt::PipelineConfig config_for(const Common& c) {
    auto cfg = drt::load_config(c.config.empty() ? std::nullopt : std::optional<std::filesystem::path>(c.config));
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Digital rock typing from micro-CT volumes"};
    app.require_subcommand(1);
    Common common;

    std::string labels_csv, volume, model, labels_raw, input, run_dir;

    auto* train = app.add_subcommand("train", "train a voxel classifier from labeled voxels");
    train->add_option("--labels", labels_csv, "CSV of x,y,z,class_id")->required()->check(CLI::ExistingFile);
    train->add_option("--volume", volume, "grayscale RAW volume (JSON sidecar alongside)")->required()->check(CLI::ExistingFile);
    add_common(train, common);

    auto* segment = app.add_subcommand("segment", "label every voxel of a volume");
    segment->add_option("--model", model, "model.json from train")->required()->check(CLI::ExistingFile);
    segment->add_option("--volume", volume, "grayscale RAW volume")->required()->check(CLI::ExistingFile);
    add_common(segment, common);

    auto* analyze = app.add_subcommand("analyze", "porosity, throat sizes, permeability and capillary curve");
    analyze->add_option("--labels", labels_raw, "label RAW volume from segment")->required()->check(CLI::ExistingFile);
    add_common(analyze, common);

    auto* classify = app.add_subcommand("classify", "assign rock-type codes");
    classify->add_option("--input", input, "properties.json or CSV of k,p_cd,p_cu,s_wi,phi,class")
        ->required()
        ->check(CLI::ExistingFile);
    add_common(classify, common);

    auto* report = app.add_subcommand("report", "summarize a run directory as Markdown");
    report->add_option("--run", run_dir, "run directory (defaults to --out)");
    add_common(report, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const drt::Parallel par{common.threads};
    try {
        if (*train) {
            const auto cfg = config_for(common);
            const auto r = drt::cmd_train(labels_csv, volume, cfg, common.out, par);
            std::printf("trained %zu trees on %zu samples\n", cfg.forest.n_trees, r.samples);
            if (std::isnan(r.oob_accuracy))
                std::printf("oob_accuracy: n/a\n");
            else
                std::printf("oob_accuracy: %.4f\n", r.oob_accuracy);
            std::printf("model: %s\n", r.model_path.string().c_str());
        } else if (*segment) {
            const auto r = drt::cmd_segment(model, volume, common.out, par);
            for (std::size_t c = 0; c < r.class_names.size(); ++c)
                std::printf("%s: %zu\n", r.class_names[c].c_str(), r.class_counts[c]);
        } else if (*analyze) {
            const auto cfg = config_for(common);
            const auto r = drt::cmd_analyze(labels_raw, cfg, common.out, par);
            std::printf("porosity: %.4f\n", r.porosity);
            std::printf("modality: %s (%s)\n", drt::to_string(r.modality.modality).c_str(), r.modality.archetype.c_str());
            std::printf("k_mD: %.6g (%s)\n", r.rock.k_md, drt::to_string(r.rock.morphology).c_str());
            std::printf("p_cd: %.6g psi  p_cu: %.6g psi  s_wi: %.4f\n", r.rock.p_cd_psi, r.rock.p_cu_psi, r.rock.s_wi);
        } else if (*classify) {
            const auto cfg = config_for(common);
            for (const auto& r : drt::cmd_classify(input, cfg, common.out))
                std::printf("row %zu: %s%s\n", r.row, r.result.code_string().c_str(),
                            r.camo.consistent ? "" : " (CAMO inconsistent)");
        } else if (*report) {
            const std::string dir = run_dir.empty() ? common.out : run_dir;
            drt::cmd_report(dir);
            std::printf("report: %s\n", (std::filesystem::path(dir) / "report.md").string().c_str());
        }
    } catch (const drt::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return drt::exit_code(e.code());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
