#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "clfa/adapt/adaptor.hpp"
#include "clfa/cli/commands.hpp"
#include "clfa/core/errors.hpp"
#include "clfa/metrics/metrics.hpp"

namespace clfa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class T>
T jget(const json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: key '" + key + "': " + e.what());
    }
}

std::string req_path(const json& cfg, const std::string& key, const std::string& ctx) {
    if (!cfg.contains(key)) throw ConfigError(ctx + ": missing required key '" + key + "'");
    return jget<std::string>(cfg, key, "");
}

void require_input_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw DataError(what + " not found: " + path);
}

void ensure_parent_dir(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (parent.empty()) return;
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec) throw IoError("cannot create directory " + parent.string() + ": " + ec.message());
}

void write_json_report(const std::string& path, const json& report) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << report.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path);
}

std::string history_path_for(const json& cfg, const std::string& checkpoint_out) {
    return jget<std::string>(cfg, "history_out", checkpoint_out + ".history.jsonl");
}

// "train" | "val" | "all" -> predicate input; anything else is rejected
std::string split_arg(const json& cfg, const std::string& fallback) {
    const auto s = jget<std::string>(cfg, "split", fallback);
    if (s != "train" && s != "val" && s != "all")
        throw ConfigError("split must be one of train|val|all, got '" + s + "'");
    return s;
}

bool in_split(const synth::DatasetBundle& data, int patient_id, const std::string& split) {
    if (split == "all") return true;
    const int want = split == "train" ? 0 : 1;
    return data.split.at(size_t(patient_id)) == want;
}

core::Checkpoint load_checkpoint(const std::string& path, const std::string& what) {
    require_input_file(path, what);
    return core::Checkpoint::load(path);
}

model::ViT<float> load_backbone(const json& cfg, const std::string& ctx,
                                core::Checkpoint* out_ckpt = nullptr) {
    const auto path = req_path(cfg, "backbone", ctx);
    core::Checkpoint ckpt = load_checkpoint(path, "backbone checkpoint");
    if (ckpt.header.value("kind", "") != "backbone")
        throw DataError(ctx + ": " + path + " is not a backbone checkpoint");
    if (out_ckpt != nullptr) *out_ckpt = ckpt;
    return model::ViT<float>::from_checkpoint(ckpt);
}

void check_image_size(const synth::DatasetBundle& data, int model_size, const std::string& ctx) {
    if (data.gen.image_size != model_size)
        throw ConfigError(ctx + ": model image_size " + std::to_string(model_size) +
                          " != dataset image_size " + std::to_string(data.gen.image_size));
}

// Adaptors only ever run against the backbone they were trained on.
adapt::Adaptor<float> load_adaptor_for(const model::ViT<float>& backbone, const std::string& path,
                                       const std::string& ctx, std::string* loss_out = nullptr) {
    core::Checkpoint ckpt = load_checkpoint(path, "adaptor checkpoint");
    if (ckpt.header.value("kind", "") != "adaptor")
        throw DataError(ctx + ": " + path + " is not an adaptor checkpoint");
    const std::string want = core::hash_hex(adapt::backbone_param_hash(backbone));
    const std::string got = ckpt.header.value("backbone_hash", "");
    if (got != want)
        throw DataError(ctx + ": adaptor " + path + " was trained against backbone " + got +
                        ", refusing to evaluate against backbone " + want);
    if (loss_out != nullptr)
        *loss_out = ckpt.header.contains("train_config")
                        ? ckpt.header.at("train_config").value("loss", "unknown")
                        : "unknown";
    return adapt::Adaptor<float>::from_checkpoint(ckpt);
}

std::vector<std::string> adaptor_paths(const json& cfg) {
    std::vector<std::string> out;
    if (cfg.contains("adaptor")) out.push_back(jget<std::string>(cfg, "adaptor", ""));
    if (cfg.contains("adaptors"))
        for (const auto& p : jget<std::vector<std::string>>(cfg, "adaptors", {}))
            out.push_back(p);
    return out;
}

}  // namespace

void cmd_gen_data(const json& cfg) {
    require_keys(cfg,
                 {"out_dir", "n_patients", "image_size", "train_fraction", "seed",
                  "profile_source", "profile_target"},
                 "gen-data");
    const auto out_dir = req_path(cfg, "out_dir", "gen-data");
    const int n = jget(cfg, "n_patients", 227);
    const int image_size = jget(cfg, "image_size", 64);
    const double train_fraction = jget(cfg, "train_fraction", 0.8);
    uint64_t seed = jget<uint64_t>(cfg, "seed", 0);
    if (auto s = env_seed_override()) seed = *s;
    if (n < 1) throw ConfigError("gen-data: n_patients must be >= 1");
    if (train_fraction < 0.0 || train_fraction > 1.0)
        throw ConfigError("gen-data: train_fraction must be in [0,1]");

    synth::CameraProfile ps;
    synth::CameraProfile pt = default_target_profile();
    if (cfg.contains("profile_source"))
        ps = profile_from_json_strict(cfg.at("profile_source"), "profile_source");
    if (cfg.contains("profile_target"))
        pt = profile_from_json_strict(cfg.at("profile_target"), "profile_target");

    synth::GeneratorConfig gen;
    gen.image_size = image_size;
    const auto data = synth::make_paired_dataset(n, ps, pt, seed, gen, train_fraction);
    synth::write_dataset(out_dir, data);

    int n_train = 0;
    for (int s : data.split) n_train += s == 0 ? 1 : 0;
    std::cout << "gen-data: " << n << " patients (" << n_train << " train / " << (n - n_train)
              << " val), " << data.pairs.size() << " pairs -> " << out_dir << "\n";
}

void cmd_pretrain(const json& cfg) {
    require_keys(cfg,
                 {"data_dir", "checkpoint_out", "history_out", "resume", "model", "batch_size",
                  "learning_rate", "epochs", "beta1", "beta2", "weight_decay", "cosine_lr",
                  "augment", "variant", "weights", "seed"},
                 "pretrain");
    const auto data_dir = req_path(cfg, "data_dir", "pretrain");
    const auto checkpoint_out = req_path(cfg, "checkpoint_out", "pretrain");

    train::PretrainConfig pc = pretrain_config_from_json(cfg);
    pc.validate();

    require_input_file(data_dir, "dataset");
    const auto data = synth::load_dataset(data_dir);
    check_image_size(data, pc.model.image_size, "pretrain");

    core::Checkpoint resume;
    const core::Checkpoint* resume_ptr = nullptr;
    if (cfg.contains("resume")) {
        resume = load_checkpoint(jget<std::string>(cfg, "resume", ""), "resume checkpoint");
        resume_ptr = &resume;
    }

    const auto res = train::pretrain(data, pc, resume_ptr);
    ensure_parent_dir(checkpoint_out);
    res.checkpoint.save(checkpoint_out);
    const auto history_out = history_path_for(cfg, checkpoint_out);
    ensure_parent_dir(history_out);
    train::write_history_jsonl(history_out, res.history);

    double last_loss = 0;
    for (const auto& r : res.history)
        if (r.split == "train" && r.task == "loss_total") last_loss = r.value;
    std::cout << "pretrain: " << to_string(pc.variant) << ", " << pc.epochs
              << " epochs, final train loss " << last_loss << " -> " << checkpoint_out << "\n";
}

void cmd_adapt(const json& cfg) {
    require_keys(cfg,
                 {"data_dir", "backbone", "checkpoint_out", "history_out", "variant", "loss",
                  "batch_size", "learning_rate", "epochs", "beta1", "beta2", "weight_decay",
                  "passthrough_init", "seed"},
                 "adapt");
    const auto data_dir = req_path(cfg, "data_dir", "adapt");
    const auto checkpoint_out = req_path(cfg, "checkpoint_out", "adapt");

    adapt::AdaptConfig ac = adapt_config_from_json(cfg);
    ac.validate();

    require_input_file(data_dir, "dataset");
    const auto backbone = load_backbone(cfg, "adapt");
    const auto data = synth::load_dataset(data_dir);
    check_image_size(data, backbone.cfg.image_size, "adapt");

    std::vector<synth::PairedSample> train_pairs, val_pairs;
    for (const auto& p : data.pairs)
        (in_split(data, p.patient_id, "train") ? train_pairs : val_pairs).push_back(p);
    if (train_pairs.empty()) throw DataError("adapt: dataset has no training pairs");

    auto res = adapt::train_adaptor(train_pairs, backbone, ac, val_pairs);
    ensure_parent_dir(checkpoint_out);
    res.checkpoint.save(checkpoint_out);
    const auto history_out = history_path_for(cfg, checkpoint_out);
    ensure_parent_dir(history_out);
    train::write_history_jsonl(history_out, res.history);

    double pre = 0, post = 0;
    for (const auto& r : res.history)
        if (r.split == "val" && r.task == "consistency_r2") (r.epoch == 0 ? pre : post) = r.value;
    std::cout << "adapt: " << to_string(ac.variant) << " + " << to_string(ac.loss)
              << ", consistency " << pre << " -> " << post << " -> " << checkpoint_out << "\n";
}

void cmd_eval(const json& cfg) {
    require_keys(cfg, {"data_dir", "backbone", "adaptor", "adaptors", "report_out", "split"},
                 "eval");
    const auto data_dir = req_path(cfg, "data_dir", "eval");
    const auto report_out = req_path(cfg, "report_out", "eval");
    const auto split = split_arg(cfg, "val");
    require_input_file(data_dir, "dataset");

    core::Checkpoint backbone_ckpt;
    const auto backbone = load_backbone(cfg, "eval", &backbone_ckpt);
    const auto data = synth::load_dataset(data_dir);
    check_image_size(data, backbone.cfg.image_size, "eval");

    // one backbone forward per image; adaptors reuse the target-side tokens
    std::vector<const synth::PairedSample*> rows;
    for (const auto& p : data.pairs)
        if (in_split(data, p.patient_id, split)) rows.push_back(&p);
    if (rows.empty()) throw DataError("eval: no pairs in split '" + split + "'");

    const int D = backbone.cfg.embed_dim;
    std::vector<model::TokenSet> tokens_t;
    std::vector<model::Predictions> preds_s, preds_t;
    metrics::FeatureBatch zs{D}, zt{D};
    tokens_t.reserve(rows.size());
    for (const auto* p : rows) {
        const auto ts = backbone.extract_features(p->source_image);
        auto tt = backbone.extract_features(p->target_image);
        preds_s.push_back(backbone.predict(ts));
        preds_t.push_back(backbone.predict(tt));
        const metrics::FeatureMeta meta{p->patient_id, p->laterality, 0};
        zs.add_row(ts.cls.data(), meta);
        zt.add_row(tt.cls.data(), {p->patient_id, p->laterality, 1});
        tokens_t.push_back(std::move(tt));
    }

    static const char* kTasks[5] = {"who_cvd_log", "age", "sbp", "tc", "bmi"};
    json r2_by_task;
    for (int k = 0; k < 5; ++k) {
        std::vector<double> y_true, y_pred;
        for (size_t i = 0; i < rows.size(); ++i) {
            const auto t = train::regression_targets(data.records[size_t(rows[i]->patient_id)].labels);
            y_true.push_back(t[size_t(k)]);
            y_pred.push_back(double(preds_s[i].regression[size_t(k)]));
        }
        // a one-patient split leaves y_true constant and R2 undefined
        const bool constant =
            std::all_of(y_true.begin(), y_true.end(), [&](double v) { return v == y_true[0]; });
        r2_by_task[kTasks[k]] = constant ? json() : json(metrics::r2(y_true, y_pred));
    }

    std::vector<metrics::PredRow> rows_s, rows_t;
    for (size_t i = 0; i < rows.size(); ++i) {
        rows_s.push_back({rows[i]->patient_id, rows[i]->laterality, double(preds_s[i].regression[0])});
        rows_t.push_back({rows[i]->patient_id, rows[i]->laterality, double(preds_t[i].regression[0])});
    }

    json report{{"model_variant", backbone_ckpt.header.contains("train_config")
                                      ? backbone_ckpt.header.at("train_config").value("variant", "unknown")
                                      : "unknown"},
                {"split", split},
                {"n_pairs", rows.size()},
                {"r2", r2_by_task},
                {"consistency_pre", metrics::consistency_r2(rows_s, rows_t)},
                {"mkmmd_pre", metrics::mk_mmd(zs, zt)},
                {"runs", json::array()}};

    for (const auto& path : adaptor_paths(cfg)) {
        std::string loss_variant;
        const auto adaptor = load_adaptor_for(backbone, path, "eval", &loss_variant);
        if (adaptor.dim != D) throw DataError("eval: adaptor dim mismatch: " + path);
        metrics::FeatureBatch za{D};
        std::vector<metrics::PredRow> rows_a;
        for (size_t i = 0; i < rows.size(); ++i) {
            const auto z = adaptor.adapt(tokens_t[i]);
            za.add_row(z.data(), {rows[i]->patient_id, rows[i]->laterality, 1});
            rows_a.push_back({rows[i]->patient_id, rows[i]->laterality,
                              double(backbone.predict_cls(z.data()).regression[0])});
        }
        report["runs"].push_back({{"adaptor", path},
                                  {"adaptor_variant", to_string(adaptor.variant)},
                                  {"loss_variant", loss_variant},
                                  {"consistency_post", metrics::consistency_r2(rows_s, rows_a)},
                                  {"mkmmd_post", metrics::mk_mmd(zs, za)}});
    }

    write_json_report(report_out, report);
    std::cout << "eval: split=" << split << " consistency_pre="
              << report["consistency_pre"].get<double>() << " runs=" << report["runs"].size()
              << " -> " << report_out << "\n";
}

void cmd_export_features(const json& cfg) {
    require_keys(cfg, {"data_dir", "backbone", "adaptor", "out", "split"}, "export-features");
    const auto data_dir = req_path(cfg, "data_dir", "export-features");
    const auto out = req_path(cfg, "out", "export-features");
    const auto split = split_arg(cfg, "all");
    require_input_file(data_dir, "dataset");

    const auto backbone = load_backbone(cfg, "export-features");
    const auto data = synth::load_dataset(data_dir);
    check_image_size(data, backbone.cfg.image_size, "export-features");

    std::optional<adapt::Adaptor<float>> adaptor;
    if (cfg.contains("adaptor"))
        adaptor = load_adaptor_for(backbone, jget<std::string>(cfg, "adaptor", ""),
                                   "export-features");

    metrics::FeatureBatch batch{backbone.cfg.embed_dim};
    for (const auto& p : data.pairs) {
        if (!in_split(data, p.patient_id, split)) continue;
        const auto ts = backbone.extract_features(p.source_image);
        const auto tt = backbone.extract_features(p.target_image);
        batch.add_row(ts.cls.data(), {p.patient_id, p.laterality, 0});
        if (adaptor) {
            const auto z = adaptor->adapt(tt);
            batch.add_row(z.data(), {p.patient_id, p.laterality, 1});
        } else {
            batch.add_row(tt.cls.data(), {p.patient_id, p.laterality, 1});
        }
    }
    if (batch.n() == 0) throw DataError("export-features: no pairs in split '" + split + "'");

    ensure_parent_dir(out);
    metrics::write_features_csv(out, batch);
    std::cout << "export-features: " << batch.n() << " rows (split=" << split << ") -> " << out
              << "\n";
}

void cmd_probe(const json& cfg) {
    require_keys(cfg,
                 {"features", "report_out", "steps", "learning_rate", "train_fraction", "seed"},
                 "probe");
    const auto features = req_path(cfg, "features", "probe");
    require_input_file(features, "features csv");

    metrics::ProbeConfig pc;
    pc.steps = jget(cfg, "steps", pc.steps);
    pc.lr = jget(cfg, "learning_rate", pc.lr);
    pc.train_fraction = jget(cfg, "train_fraction", pc.train_fraction);
    pc.seed = jget<uint64_t>(cfg, "seed", pc.seed);
    if (auto s = env_seed_override()) pc.seed = *s;
    if (pc.steps < 1) throw ConfigError("probe: steps must be >= 1");
    if (!(pc.lr > 0)) throw ConfigError("probe: learning_rate must be positive");
    if (!(pc.train_fraction > 0.0 && pc.train_fraction < 1.0))
        throw ConfigError("probe: train_fraction must be in (0,1)");

    const auto batch = metrics::read_features_csv(features);
    json report{{"n_rows", batch.n()},
                {"auc_laterality", metrics::linear_probe_auc(batch, "laterality", pc)},
                {"auc_camera", metrics::linear_probe_auc(batch, "camera", pc)},
                {"probe", {{"steps", pc.steps},
                           {"learning_rate", pc.lr},
                           {"train_fraction", pc.train_fraction},
                           {"seed", pc.seed}}}};

    if (cfg.contains("report_out")) write_json_report(jget<std::string>(cfg, "report_out", ""), report);
    std::cout << "probe: auc_laterality=" << report["auc_laterality"].get<double>()
              << " auc_camera=" << report["auc_camera"].get<double>() << " (n=" << batch.n()
              << ")\n";
}

}  // namespace clfa::cli
