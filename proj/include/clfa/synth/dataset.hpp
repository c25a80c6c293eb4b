#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clfa/synth/camera.hpp"
#include "clfa/synth/generator.hpp"

namespace clfa::synth {

struct PairedSample {
    long long patient_id = 0;
    int laterality = 0;  // 0 = left, 1 = right
    Image source_image, target_image;
};

struct DatasetBundle {
    GeneratorConfig gen;
    CameraProfile profile_s, profile_t;
    uint64_t seed = 0;
    double train_fraction = 0.8;
    std::vector<PatientRecord> records;  // images under the source camera
    std::vector<PairedSample> pairs;     // 2 per patient (left + right)
    std::vector<int> split;              // per patient: 0 = train, 1 = val
};

DatasetBundle make_paired_dataset(int n, const CameraProfile& profile_s,
                                  const CameraProfile& profile_t, uint64_t seed,
                                  const GeneratorConfig& gen = {}, double train_fraction = 0.8);

// Directory layout: images/<patient>_<laterality>_<camera>.png + labels.csv
// (patient_id, who_cvd_log, age, sbp, tc, bmi, gender, smoking, diabetes,
// split) + manifest.json with generator config, profiles and seed.
void write_dataset(const std::string& dir, const DatasetBundle& data);
DatasetBundle load_dataset(const std::string& dir);

}  // namespace clfa::synth
