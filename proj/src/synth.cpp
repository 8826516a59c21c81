#include "fmae/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fmae/errors.hpp"
#include "fmae/io.hpp"

namespace fmae::synth {

namespace {
constexpr double kTwoPi = 6.283185307179586477;
constexpr uint64_t kSeqTag = 0x736571;       // voltage substream
constexpr uint64_t kImgTag = 0x696d67;       // image substream
constexpr uint64_t kScenarioTag = 0x7363656e;  // scenario/cell draw substream

// Gaussian noise clipped at 5 sigma so the stated output bounds hold by
// construction.
double clipped_normal(Rng& rng, double sigma) {
    double v = rng.normal() * sigma;
    const double lim = 5.0 * sigma;
    return v < -lim ? -lim : (v > lim ? lim : v);
}

bool has_jitter(Scenario s) {
    return s == Scenario::PoorContact || s == Scenario::PoorContactWithMist;
}
bool has_hotspot(Scenario s) {
    return s == Scenario::PoorContact || s == Scenario::PoorContactWithMist;
}
bool has_mist(Scenario s) {
    return s == Scenario::MistOcclusion || s == Scenario::PoorContactWithMist;
}

}  // namespace

Scenario scenario_from_string(const std::string& s) {
    if (s == "normal") return Scenario::Normal;
    if (s == "poor_contact") return Scenario::PoorContact;
    if (s == "worker_disturbance") return Scenario::WorkerDisturbance;
    if (s == "mist_occlusion") return Scenario::MistOcclusion;
    if (s == "poor_contact_with_mist") return Scenario::PoorContactWithMist;
    throw ParamError("unknown scenario: " + s);
}

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::Normal: return "normal";
        case Scenario::PoorContact: return "poor_contact";
        case Scenario::WorkerDisturbance: return "worker_disturbance";
        case Scenario::MistOcclusion: return "mist_occlusion";
        default: return "poor_contact_with_mist";
    }
}

int scenario_label(Scenario s) { return has_jitter(s) ? 1 : 0; }

void GeneratorConfig::validate() const {
    if (n_samples < 1) throw ParamError("GeneratorConfig: n_samples must be positive");
    if (anomaly_rate < 0.0 || anomaly_rate > 1.0 || distractor_rate < 0.0 || distractor_rate > 1.0)
        throw ParamError("GeneratorConfig: rates must lie in [0,1]");
    if (base_voltage_lo >= base_voltage_hi || jitter_amp_lo >= jitter_amp_hi ||
        hotspot_gain_lo >= hotspot_gain_hi)
        throw ParamError("GeneratorConfig: ranges must be ordered low < high");
    if (t_steps < 1 || n_cells < 1 || img_h < 1 || img_w < 1)
        throw ParamError("GeneratorConfig: extents must be positive");
}

Tensor synth_voltage(Rng& rng, Scenario scenario, int cell_index, const GeneratorConfig& cfg) {
    if (has_jitter(scenario) && (cell_index < 0 || cell_index >= cfg.n_cells))
        throw ParamError("synth_voltage: poor contact requires a target cell in [0," +
                         std::to_string(cfg.n_cells) + ")");
    const int t_len = cfg.t_steps, n = cfg.n_cells;
    Tensor v = Tensor::zeros({t_len, n});

    // Background: identical draw sequence for every scenario.
    for (int c = 0; c < n; ++c) {
        const double base = rng.uniform(cfg.base_voltage_lo, cfg.base_voltage_hi);
        const double phase = rng.uniform(0.0, kTwoPi);
        for (int t = 0; t < t_len; ++t) {
            const double drift = 0.02 * std::sin(kTwoPi * t / t_len + phase);
            v.data()[t * n + c] = base + drift + clipped_normal(rng, 0.005);
        }
    }

    if (has_jitter(scenario)) {
        const double offset = rng.uniform(0.05, 0.3);
        const double amp = rng.uniform(cfg.jitter_amp_lo, cfg.jitter_amp_hi);
        for (int t = 0; t < t_len; ++t) {
            const double jitter = amp * (t % 2 == 0 ? 1.0 : -1.0);
            v.data()[t * n + cell_index] += offset + jitter;
        }
    } else if (scenario == Scenario::WorkerDisturbance) {
        const int n_pulses = rng.uniform_int(1, 3);
        std::vector<int> used;
        for (int p = 0; p < n_pulses; ++p) {
            int col = rng.uniform_int(0, n - 1);
            while (std::find(used.begin(), used.end(), col) != used.end())
                col = rng.uniform_int(0, n - 1);
            used.push_back(col);
            const double height = rng.uniform(0.1, 0.3);
            const int width = rng.uniform_int(3, 8);
            const int start = rng.uniform_int(0, t_len - width);
            for (int t = start; t < start + width; ++t) v.data()[t * n + col] += height;
        }
    }
    return v;
}

Tensor synth_image(Rng& rng, Scenario scenario, int cell_index, const GeneratorConfig& cfg) {
    if (has_hotspot(scenario) && (cell_index < 0 || cell_index >= cfg.n_cells))
        throw ParamError("synth_image: poor contact requires a target cell in [0," +
                         std::to_string(cfg.n_cells) + ")");
    const int h = cfg.img_h, w = cfg.img_w;
    Tensor img = Tensor::zeros({1, h, w});

    // Background: 16 vertical cell bands at base intensity, left-to-right
    // ambient gradient, pixel noise. Same draws in every scenario.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gradient = 0.05 * (2.0 * x / (w - 1) - 1.0);
            img.data()[y * w + x] = 0.35 + gradient + clipped_normal(rng, 0.02);
        }

    if (has_hotspot(scenario)) {
        const double gain = rng.uniform(cfg.hotspot_gain_lo, cfg.hotspot_gain_hi);
        const double band_w = static_cast<double>(w) / cfg.n_cells;
        const double cx = (cell_index + 0.5) * band_w;
        const double cy = rng.uniform(0.15 * h, 0.85 * h);
        const double sigma = 3.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                img.data()[y * w + x] += gain * std::exp(-d2 / (2.0 * sigma * sigma));
            }
    }
    if (has_mist(scenario)) {
        const double ax = rng.uniform(0.05, 0.2) * w;  // ellipse covers 10-40% of width
        const double ay = rng.uniform(0.05, 0.2) * h;
        const double cx = rng.uniform(0.0, w - 1.0);
        const double cy = rng.uniform(0.0, h - 1.0);
        const double factor = rng.uniform(0.2, 0.6);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double dx = (x - cx) / ax, dy = (y - cy) / ay;
                if (dx * dx + dy * dy <= 1.0) {
                    double& px = img.data()[y * w + x];
                    px = px * factor + 0.1;
                }
            }
    }

    for (int64_t i = 0; i < img.numel(); ++i) {
        double& px = img.data()[i];
        px = px < 0.0 ? 0.0 : (px > 1.0 ? 1.0 : px);
    }
    return img;
}

std::vector<SampleRecord> generate_dataset(const GeneratorConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("generate_dataset: cannot create " + out_dir + ": " + ec.message());

    std::vector<SampleRecord> records;
    records.reserve(static_cast<size_t>(cfg.n_samples));
    for (int i = 0; i < cfg.n_samples; ++i) {
        Rng sc_rng = Rng::substream(cfg.seed, static_cast<uint64_t>(i), kScenarioTag);
        Scenario sc;
        const double u = sc_rng.next_double();
        if (u < cfg.anomaly_rate) {
            sc = sc_rng.next_double() < 0.5 ? Scenario::PoorContactWithMist
                                            : Scenario::PoorContact;
        } else if (sc_rng.next_double() < cfg.distractor_rate) {
            sc = sc_rng.next_double() < 0.5 ? Scenario::WorkerDisturbance
                                            : Scenario::MistOcclusion;
        } else {
            sc = Scenario::Normal;
        }
        const int cell = has_jitter(sc) ? sc_rng.uniform_int(0, cfg.n_cells - 1) : -1;

        Rng seq_rng = Rng::substream(cfg.seed, static_cast<uint64_t>(i), kSeqTag);
        Rng img_rng = Rng::substream(cfg.seed, static_cast<uint64_t>(i), kImgTag);
        Tensor voltage = synth_voltage(seq_rng, sc, cell, cfg);
        Tensor image = synth_image(img_rng, sc, cell, cfg);

        char id[16];
        std::snprintf(id, sizeof(id), "s%06d", i);
        SampleRecord rec;
        rec.id = id;
        rec.seq_path = std::string("seq_") + id + ".csv";
        rec.img_path = std::string("img_") + id + ".pgm";
        rec.label = scenario_label(sc);
        rec.scenario = sc;

        io::write_sequence_csv(out_dir + "/" + rec.seq_path, voltage);
        io::write_image_pgm(out_dir + "/" + rec.img_path, image);
        records.push_back(std::move(rec));
    }
    io::write_manifest(out_dir + "/manifest.jsonl", records);
    return records;
}

}  // namespace fmae::synth
