#include <functional>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "clfa/cli/commands.hpp"
#include "clfa/core/errors.hpp"

namespace clfa::cli {

using nlohmann::json;

namespace {

// flags override individual config-file keys, so overrides merge on top
void deep_merge(json& base, const json& overlay) {
    for (const auto& item : overlay.items()) {
        if (item.value().is_object() && base.contains(item.key()) && base[item.key()].is_object())
            deep_merge(base[item.key()], item.value());
        else
            base[item.key()] = item.value();
    }
}

struct SubState {
    std::string config_path;
    json overrides = json::object();
};

std::shared_ptr<SubState> wire(CLI::App* sc, std::function<void()>& task,
                               void (*cmd)(const json&)) {
    auto st = std::make_shared<SubState>();
    sc->add_option("--config", st->config_path, "JSON config file")->check(CLI::ExistingFile);
    sc->callback([st, &task, cmd] {
        task = [st, cmd] {
            json cfg = st->config_path.empty() ? json::object() : load_config_file(st->config_path);
            deep_merge(cfg, st->overrides);
            cmd(cfg);
        };
    });
    return st;
}

template <class T>
void opt(CLI::App* sc, const std::shared_ptr<SubState>& st, const std::string& flag,
         std::vector<std::string> keys, const std::string& desc) {
    sc->add_option_function<T>(
        flag,
        [st, keys = std::move(keys)](const T& v) {
            json* slot = &st->overrides;
            for (size_t i = 0; i + 1 < keys.size(); ++i) slot = &(*slot)[keys[i]];
            (*slot)[keys.back()] = v;
        },
        desc);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"cross-laterality feature alignment: synthetic-data experiments"};
    app.require_subcommand(1);
    std::function<void()> task;

    {
        auto* sc = app.add_subcommand("gen-data", "generate a paired two-camera fundus dataset");
        auto st = wire(sc, task, &cmd_gen_data);
        opt<std::string>(sc, st, "--out", {"out_dir"}, "dataset directory");
        opt<int>(sc, st, "--n-patients", {"n_patients"}, "number of patients");
        opt<int>(sc, st, "--image-size", {"image_size"}, "square image side");
        opt<double>(sc, st, "--train-fraction", {"train_fraction"}, "train split fraction");
        opt<uint64_t>(sc, st, "--seed", {"seed"}, "generator seed");
    }
    {
        auto* sc = app.add_subcommand("pretrain", "pre-train a backbone on the source camera");
        auto st = wire(sc, task, &cmd_pretrain);
        opt<std::string>(sc, st, "--data", {"data_dir"}, "dataset directory");
        opt<std::string>(sc, st, "--out", {"checkpoint_out"}, "checkpoint path");
        opt<std::string>(sc, st, "--history", {"history_out"}, "history JSONL path");
        opt<std::string>(sc, st, "--resume", {"resume"}, "checkpoint to resume from");
        opt<std::string>(sc, st, "--variant", {"variant"},
                         "branch variant: supervised_only|clfa|simsiam");
        opt<int>(sc, st, "--epochs", {"epochs"}, "training epochs");
        opt<int>(sc, st, "--batch-size", {"batch_size"}, "patients per batch");
        opt<double>(sc, st, "--lr", {"learning_rate"}, "Adam learning rate");
        opt<uint64_t>(sc, st, "--seed", {"seed"}, "training seed");
        opt<int>(sc, st, "--image-size", {"model", "image_size"}, "model input size");
        opt<int>(sc, st, "--patch-size", {"model", "patch_size"}, "patch side");
        opt<int>(sc, st, "--embed-dim", {"model", "embed_dim"}, "token width");
        opt<int>(sc, st, "--depth", {"model", "depth"}, "transformer blocks");
        opt<int>(sc, st, "--heads", {"model", "heads"}, "attention heads");
    }
    {
        auto* sc = app.add_subcommand("adapt", "train a camera adaptor against a frozen backbone");
        auto st = wire(sc, task, &cmd_adapt);
        opt<std::string>(sc, st, "--data", {"data_dir"}, "dataset directory");
        opt<std::string>(sc, st, "--backbone", {"backbone"}, "backbone checkpoint");
        opt<std::string>(sc, st, "--out", {"checkpoint_out"}, "adaptor checkpoint path");
        opt<std::string>(sc, st, "--history", {"history_out"}, "history JSONL path");
        opt<std::string>(sc, st, "--variant", {"variant"},
                         "adaptor variant: mlp_only|sa_only|sa_plus_mlp");
        opt<std::string>(sc, st, "--loss", {"loss"},
                         "adaptation loss: cvd|feature|mkmmd|cvd_plus_feature");
        opt<int>(sc, st, "--epochs", {"epochs"}, "training epochs");
        opt<int>(sc, st, "--batch-size", {"batch_size"}, "pairs per batch");
        opt<double>(sc, st, "--lr", {"learning_rate"}, "Adam learning rate");
        opt<uint64_t>(sc, st, "--seed", {"seed"}, "training seed");
    }
    {
        auto* sc = app.add_subcommand("eval", "task R2, consistency R2 and MK-MMD report");
        auto st = wire(sc, task, &cmd_eval);
        opt<std::string>(sc, st, "--data", {"data_dir"}, "dataset directory");
        opt<std::string>(sc, st, "--backbone", {"backbone"}, "backbone checkpoint");
        opt<std::string>(sc, st, "--report", {"report_out"}, "JSON report path");
        opt<std::string>(sc, st, "--split", {"split"}, "train|val|all (default val)");
        auto* o = sc->add_option_function<std::vector<std::string>>(
            "--adaptor",
            [st](const std::vector<std::string>& v) {
                for (const auto& p : v) st->overrides["adaptors"].push_back(p);
            },
            "adaptor checkpoint (repeatable)");
        o->take_all();
    }
    {
        auto* sc = app.add_subcommand("export-features", "dump cls features per image to CSV");
        auto st = wire(sc, task, &cmd_export_features);
        opt<std::string>(sc, st, "--data", {"data_dir"}, "dataset directory");
        opt<std::string>(sc, st, "--backbone", {"backbone"}, "backbone checkpoint");
        opt<std::string>(sc, st, "--adaptor", {"adaptor"},
                         "adaptor checkpoint; target rows become adapted features");
        opt<std::string>(sc, st, "--out", {"out"}, "CSV path");
        opt<std::string>(sc, st, "--split", {"split"}, "train|val|all (default all)");
    }
    {
        auto* sc = app.add_subcommand("probe", "linear probes for laterality and camera AUC");
        auto st = wire(sc, task, &cmd_probe);
        opt<std::string>(sc, st, "--features", {"features"}, "features CSV from export-features");
        opt<std::string>(sc, st, "--report", {"report_out"}, "JSON report path");
        opt<int>(sc, st, "--steps", {"steps"}, "gradient steps");
        opt<double>(sc, st, "--lr", {"learning_rate"}, "probe learning rate");
        opt<double>(sc, st, "--train-fraction", {"train_fraction"}, "patient-level train fraction");
        opt<uint64_t>(sc, st, "--seed", {"seed"}, "probe split seed");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        task();
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ArgumentError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace clfa::cli
