#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmae/rng.hpp"
#include "fmae/tensor.hpp"

namespace fmae::synth {

// Simulated plant conditions. Poor contact is the anomaly (label 1); worker
// steps and acid mist are the single-modality distractors (label 0).
enum class Scenario {
    Normal,
    PoorContact,
    WorkerDisturbance,
    MistOcclusion,
    PoorContactWithMist,
};

Scenario scenario_from_string(const std::string& s);
std::string to_string(Scenario s);
int scenario_label(Scenario s);

struct GeneratorConfig {
    uint64_t seed = 0;
    int n_samples = 100;
    double anomaly_rate = 0.3;
    double distractor_rate = 0.3;
    double base_voltage_lo = 3.0, base_voltage_hi = 3.4;   // volts
    double jitter_amp_lo = 0.05, jitter_amp_hi = 0.2;      // volts
    double hotspot_gain_lo = 0.3, hotspot_gain_hi = 0.6;   // intensity
    int t_steps = 60;
    int n_cells = 16;
    int img_h = 64, img_w = 64;

    void validate() const;
};

struct SampleRecord {
    std::string id;
    std::string seq_path;  // relative to the dataset directory
    std::string img_path;
    int label = 0;
    Scenario scenario = Scenario::Normal;
};

// One voltage window: per-column baseline + slow drift + white noise, plus
// the scenario signature. cell_index targets the poor-contact column and is
// ignored otherwise (-1 for none). The background consumes the same rng
// draws in every scenario, so distractors stay modality-local.
Tensor synth_voltage(Rng& rng, Scenario scenario, int cell_index, const GeneratorConfig& cfg);

// One thermal image: banded background + ambient gradient + noise, plus
// hotspot and/or mist depending on the scenario. Values clamped to [0,1].
Tensor synth_image(Rng& rng, Scenario scenario, int cell_index, const GeneratorConfig& cfg);

// Writes seq_*.csv / img_*.pgm pairs plus manifest.jsonl under out_dir.
// Fully determined by cfg.seed; per-sample substreams make the content
// independent of generation order.
std::vector<SampleRecord> generate_dataset(const GeneratorConfig& cfg, const std::string& out_dir);

}  // namespace fmae::synth
