#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fmae/model.hpp"
#include "fmae/synth.hpp"
#include "fmae/tensor.hpp"

namespace fmae::io {

// Voltage matrix as bare CSV: t_steps lines, n_cells comma-separated fields,
// LF terminators, 17 significant digits. Round trips bit-exactly.
void write_sequence_csv(const std::string& path, const Tensor& v);
Tensor read_sequence_csv(const std::string& path, int t_steps = 60, int n_cells = 16);

// Single-channel image as binary PGM (P5, maxval 255); byte = round(v*255).
void write_image_pgm(const std::string& path, const Tensor& img);
Tensor read_image_pgm(const std::string& path);

// Dataset manifest as JSON Lines with fields {id, seq_path, img_path, label,
// scenario}.
void write_manifest(const std::string& path, const std::vector<synth::SampleRecord>& records);
std::vector<synth::SampleRecord> read_manifest(const std::string& path);

// Binary checkpoint: "FMAE" magic, u32 version, JSON header table
// ({name, shape, offset, nbytes} per parameter plus model config and stage),
// then the parameter payload as little-endian doubles.
inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr char kStagePretrained[] = "pretrained";
inline constexpr char kStageDetector[] = "detector";

struct Checkpoint {
    uint32_t version = kCheckpointVersion;
    ModelConfig config;
    std::string stage;
    std::vector<std::pair<std::string, Tensor>> params;
};

void save_checkpoint(const std::string& path, const ModelConfig& config, const std::string& stage,
                     const ParameterStore& params);
Checkpoint load_checkpoint(const std::string& path);
// Copies checkpoint data into a matching store; every name must exist with
// the same shape.
void apply_checkpoint(const Checkpoint& ckpt, ParameterStore& params);

}  // namespace fmae::io
