#include "clfa/synth/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "clfa/core/errors.hpp"
#include "clfa/synth/png.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace clfa::synth {

namespace {

constexpr uint64_t kSplitTag = 0x53504C49;  // split shuffle stream

std::string image_name(long long patient, int laterality, const char* camera) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04lld_%s_%s.png", patient, laterality == 0 ? "left" : "right",
                  camera);
    return buf;
}

std::string fmt_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", double(v));
    return buf;
}

json profile_json(const CameraProfile& p) {
    return json{{"color_matrix", p.color_matrix},
                {"blur_sigma", p.blur_sigma},
                {"vignette_strength", p.vignette_strength},
                {"gamma", p.gamma},
                {"noise_sigma", p.noise_sigma},
                {"seed_offset", p.seed_offset}};
}

CameraProfile profile_from_json(const json& j) {
    CameraProfile p;
    auto cm = j.at("color_matrix").get<std::vector<float>>();
    if (cm.size() != 9) throw DataError("manifest: color_matrix must have 9 entries");
    std::copy(cm.begin(), cm.end(), p.color_matrix.begin());
    p.blur_sigma = j.at("blur_sigma").get<float>();
    p.vignette_strength = j.at("vignette_strength").get<float>();
    p.gamma = j.at("gamma").get<float>();
    p.noise_sigma = j.at("noise_sigma").get<float>();
    p.seed_offset = j.at("seed_offset").get<long long>();
    return p;
}

}  // namespace

DatasetBundle make_paired_dataset(int n, const CameraProfile& profile_s,
                                  const CameraProfile& profile_t, uint64_t seed,
                                  const GeneratorConfig& gen, double train_fraction) {
    if (n <= 0) throw ArgumentError("make_paired_dataset: n must be >= 1");
    validate_profile(profile_s);
    validate_profile(profile_t);
    if (train_fraction < 0.0 || train_fraction > 1.0)
        throw ArgumentError("make_paired_dataset: train_fraction must be in [0,1]");

    DatasetBundle d;
    d.gen = gen;
    d.profile_s = profile_s;
    d.profile_t = profile_t;
    d.seed = seed;
    d.train_fraction = train_fraction;
    d.records.reserve(size_t(n));
    d.pairs.reserve(size_t(n) * 2);

    for (int i = 0; i < n; ++i) {
        PatientRecord rec = generate_patient(seed + uint64_t(i), gen);
        rec.patient_id = i;
        // both cameras photograph the same underlying rendering; the noise
        // stream depends only on (seed, patient, eye) plus the profile's own
        // seed_offset, so equal profiles give byte-equal pairs
        const Image raw[2] = {rec.left, rec.right};
        for (int eye = 0; eye < 2; ++eye) {
            const uint64_t shot_seed = core::derive_seed(seed, uint64_t(i), uint64_t(eye));
            PairedSample pair;
            pair.patient_id = i;
            pair.laterality = eye;
            pair.source_image = apply_camera_profile(raw[eye], profile_s, shot_seed);
            pair.target_image = apply_camera_profile(raw[eye], profile_t, shot_seed);
            if (eye == 0)
                rec.left = pair.source_image;
            else
                rec.right = pair.source_image;
            d.pairs.push_back(std::move(pair));
        }
        d.records.push_back(std::move(rec));
    }

    const int n_train = int(std::lround(train_fraction * n));
    std::vector<int> order(size_t(n), 0);
    std::iota(order.begin(), order.end(), 0);
    core::Rng rng(core::derive_seed(seed, kSplitTag));
    for (int i = n - 1; i > 0; --i) std::swap(order[size_t(i)], order[rng.uniform_index(size_t(i) + 1)]);
    d.split.assign(size_t(n), 1);
    for (int i = 0; i < n_train; ++i) d.split[size_t(order[size_t(i)])] = 0;
    return d;
}

void write_dataset(const std::string& dir, const DatasetBundle& d) {
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "images", ec);
    if (ec) throw IoError("dataset: cannot create " + dir + ": " + ec.message());

    for (const auto& pair : d.pairs) {
        write_png((fs::path(dir) / "images" / image_name(pair.patient_id, pair.laterality, "source")).string(),
                  pair.source_image);
        write_png((fs::path(dir) / "images" / image_name(pair.patient_id, pair.laterality, "target")).string(),
                  pair.target_image);
    }

    std::ofstream csv(fs::path(dir) / "labels.csv", std::ios::trunc);
    if (!csv) throw IoError("dataset: cannot write labels.csv");
    csv << "patient_id,who_cvd_log,age,sbp,tc,bmi,gender,smoking,diabetes,split\n";
    for (size_t i = 0; i < d.records.size(); ++i) {
        const auto& L = d.records[i].labels;
        std::ostringstream row;
        row << d.records[i].patient_id << ',' << fmt_float(L.who_cvd_log) << ',' << fmt_float(L.age)
            << ',' << fmt_float(L.sbp) << ',' << fmt_float(L.tc) << ',' << fmt_float(L.bmi) << ','
            << L.gender << ',' << L.smoking << ',' << L.diabetes << ','
            << (d.split[i] == 0 ? "train" : "val");
        // one row per eye sample; labels and split are patient-level, so the
        // left and right rows are identical
        csv << row.str() << '\n' << row.str() << '\n';
    }
    csv.close();

    json manifest{{"seed", d.seed},
                  {"n_patients", d.records.size()},
                  {"train_fraction", d.train_fraction},
                  {"generator", {{"image_size", d.gen.image_size}}},
                  {"profiles", {{"source", profile_json(d.profile_s)}, {"target", profile_json(d.profile_t)}}},
                  {"cameras", {"source", "target"}}};
    std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!mf) throw IoError("dataset: cannot write manifest.json");
    mf << manifest.dump(2) << '\n';
}

DatasetBundle load_dataset(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw DataError("dataset: missing manifest.json in " + dir);
    json manifest = json::parse(mf, nullptr, true);

    DatasetBundle d;
    d.seed = manifest.at("seed").get<uint64_t>();
    d.train_fraction = manifest.at("train_fraction").get<double>();
    d.gen.image_size = manifest.at("generator").at("image_size").get<int>();
    d.profile_s = profile_from_json(manifest.at("profiles").at("source"));
    d.profile_t = profile_from_json(manifest.at("profiles").at("target"));

    std::ifstream csv(fs::path(dir) / "labels.csv");
    if (!csv) throw DataError("dataset: missing labels.csv in " + dir);
    std::string line;
    if (!std::getline(csv, line)) throw DataError("dataset: empty labels.csv");
    if (line != "patient_id,who_cvd_log,age,sbp,tc,bmi,gender,smoking,diabetes,split")
        throw DataError("dataset: unexpected labels.csv header: " + line);

    std::string pending;  // first-eye row awaiting its duplicate
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        if (!pending.empty()) {
            if (line != pending)
                throw DataError("dataset: per-eye label rows differ: " + line);
            pending.clear();
            continue;
        }
        pending = line;
        std::stringstream ss(line);
        std::string tok;
        std::vector<std::string> cols;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
        if (cols.size() != 10) throw DataError("dataset: malformed labels.csv row: " + line);
        PatientRecord rec;
        rec.patient_id = std::stoll(cols[0]);
        rec.labels.who_cvd_log = std::stof(cols[1]);
        rec.labels.age = std::stof(cols[2]);
        rec.labels.sbp = std::stof(cols[3]);
        rec.labels.tc = std::stof(cols[4]);
        rec.labels.bmi = std::stof(cols[5]);
        rec.labels.gender = std::stoi(cols[6]);
        rec.labels.smoking = std::stoi(cols[7]);
        rec.labels.diabetes = std::stoi(cols[8]);
        if (cols[9] != "train" && cols[9] != "val")
            throw DataError("dataset: bad split value: " + cols[9]);
        d.split.push_back(cols[9] == "train" ? 0 : 1);
        d.records.push_back(std::move(rec));
    }
    if (!pending.empty()) throw DataError("dataset: odd labels.csv row count");

    for (auto& rec : d.records) {
        for (int eye = 0; eye < 2; ++eye) {
            const auto src =
                (fs::path(dir) / "images" / image_name(rec.patient_id, eye, "source")).string();
            const auto tgt =
                (fs::path(dir) / "images" / image_name(rec.patient_id, eye, "target")).string();
            PairedSample pair;
            pair.patient_id = rec.patient_id;
            pair.laterality = eye;
            pair.source_image = read_png(src);
            pair.target_image = read_png(tgt);
            if (pair.source_image.h != d.gen.image_size || pair.source_image.w != d.gen.image_size)
                throw DataError("dataset: image size mismatch in " + src);
            if (eye == 0)
                rec.left = pair.source_image;
            else
                rec.right = pair.source_image;
            d.pairs.push_back(std::move(pair));
        }
    }
    return d;
}

}  // namespace clfa::synth
