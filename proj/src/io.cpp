#include "fmae/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fmae/errors.hpp"

namespace fmae::io {

namespace {

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream f(path, mode);
    if (!f) throw IoError("cannot open for writing: " + path);
    return f;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream f(path, mode);
    if (!f) throw IoError("cannot open for reading: " + path);
    return f;
}

void put_u32_le(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void put_f64_le(std::string& out, double v) {
    const uint64_t bits = std::bit_cast<uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64_le(const unsigned char* p) {
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

// ---------------------------------------------------------------------------
// sequence CSV
// ---------------------------------------------------------------------------

void write_sequence_csv(const std::string& path, const Tensor& v) {
    if (v.ndim() != 2)
        throw ShapeError("write_sequence_csv: expected a matrix, got " + shape_str(v.shape()));
    std::ofstream f = open_out(path);
    const int rows = v.dim(0), cols = v.dim(1);
    char buf[40];
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", v.data()[r * cols + c]);
            f << (c ? "," : "") << buf;
        }
        f << '\n';
    }
    if (!f) throw IoError("write failed: " + path);
}

Tensor read_sequence_csv(const std::string& path, int t_steps, int n_cells) {
    std::ifstream f = open_in(path);
    Tensor out = Tensor::zeros({t_steps, n_cells});
    std::string line;
    int row = 0;
    while (std::getline(f, line)) {
        if (row >= t_steps)
            throw FormatError(path + ": expected " + std::to_string(t_steps) + " rows, found more");
        std::stringstream ss(line);
        std::string field;
        int col = 0;
        while (std::getline(ss, field, ',')) {
            if (col >= n_cells)
                throw FormatError(path + ": row " + std::to_string(row + 1) + ": expected " +
                                  std::to_string(n_cells) + " fields, found more");
            char* end = nullptr;
            const double value = std::strtod(field.c_str(), &end);
            if (end == field.c_str() || *end != '\0')
                throw FormatError(path + ": row " + std::to_string(row + 1) + ", column " +
                                  std::to_string(col + 1) + ": not a number: \"" + field + "\"");
            out.data()[row * n_cells + col] = value;
            ++col;
        }
        if (col != n_cells)
            throw FormatError(path + ": row " + std::to_string(row + 1) + ": expected " +
                              std::to_string(n_cells) + " fields, got " + std::to_string(col));
        ++row;
    }
    if (row != t_steps)
        throw FormatError(path + ": expected " + std::to_string(t_steps) + " rows, got " +
                          std::to_string(row));
    return out;
}

// ---------------------------------------------------------------------------
// image PGM
// ---------------------------------------------------------------------------

void write_image_pgm(const std::string& path, const Tensor& img) {
    if (img.ndim() != 3 || img.dim(0) != 1)
        throw ShapeError("write_image_pgm: expected a 1xHxW image, got " + shape_str(img.shape()));
    const int h = img.dim(1), w = img.dim(2);
    std::ofstream f = open_out(path, std::ios::binary);
    f << "P5\n" << w << " " << h << "\n255\n";
    std::string bytes(static_cast<size_t>(h) * w, '\0');
    for (int64_t i = 0; i < img.numel(); ++i)
        bytes[static_cast<size_t>(i)] = static_cast<char>(
            static_cast<unsigned char>(std::lround(img.data()[i] * 255.0)));
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

Tensor read_image_pgm(const std::string& path) {
    std::ifstream f = open_in(path, std::ios::binary);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw FormatError(path + ": not a binary PGM (magic \"" + magic + "\")");
    int w = 0, h = 0, maxval = 0;
    f >> w >> h >> maxval;
    if (!f || w < 1 || h < 1) throw FormatError(path + ": bad PGM dimensions");
    if (maxval != 255) throw FormatError(path + ": maxval must be 255, got " + std::to_string(maxval));
    f.get();  // single whitespace after the header
    std::string bytes(static_cast<size_t>(h) * w, '\0');
    f.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (f.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw FormatError(path + ": truncated pixel data");
    Tensor img = Tensor::zeros({1, h, w});
    for (int64_t i = 0; i < img.numel(); ++i)
        img.data()[i] = static_cast<unsigned char>(bytes[static_cast<size_t>(i)]) / 255.0;
    return img;
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

void write_manifest(const std::string& path, const std::vector<synth::SampleRecord>& records) {
    std::ofstream f = open_out(path);
    for (const auto& r : records) {
        nlohmann::json j;
        j["id"] = r.id;
        j["seq_path"] = r.seq_path;
        j["img_path"] = r.img_path;
        j["label"] = r.label;
        j["scenario"] = synth::to_string(r.scenario);
        f << j.dump() << '\n';
    }
    if (!f) throw IoError("write failed: " + path);
}

std::vector<synth::SampleRecord> read_manifest(const std::string& path) {
    std::ifstream f = open_in(path);
    std::vector<synth::SampleRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        synth::SampleRecord r;
        try {
            r.id = j.at("id").get<std::string>();
            r.seq_path = j.at("seq_path").get<std::string>();
            r.img_path = j.at("img_path").get<std::string>();
            r.label = j.at("label").get<int>();
            r.scenario = synth::scenario_from_string(j.at("scenario").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        if (r.label != 0 && r.label != 1)
            throw FormatError(path + ": line " + std::to_string(line_no) + ": label must be 0 or 1");
        records.push_back(std::move(r));
    }
    return records;
}

// ---------------------------------------------------------------------------
// checkpoint
// ---------------------------------------------------------------------------

namespace {

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"t_steps", c.t_steps}, {"n_cells", c.n_cells}, {"img_h", c.img_h},
            {"img_w", c.img_w},     {"img_c", c.img_c},     {"d_h", c.d_h},
            {"d_img", c.d_img},     {"n_m", c.n_m},         {"mask_scale_b", c.mask_scale_b}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.t_steps = j.at("t_steps").get<int>();
    c.n_cells = j.at("n_cells").get<int>();
    c.img_h = j.at("img_h").get<int>();
    c.img_w = j.at("img_w").get<int>();
    c.img_c = j.at("img_c").get<int>();
    c.d_h = j.at("d_h").get<int>();
    c.d_img = j.at("d_img").get<int>();
    c.n_m = j.at("n_m").get<int>();
    c.mask_scale_b = j.at("mask_scale_b").get<double>();
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config, const std::string& stage,
                     const ParameterStore& params) {
    if (stage != kStagePretrained && stage != kStageDetector)
        throw ContractError("save_checkpoint: unknown stage \"" + stage + "\"");
    nlohmann::json table = nlohmann::json::array();
    int64_t offset = 0;
    for (const auto& p : params) {
        const int64_t nbytes = p.tensor.numel() * 8;
        table.push_back({{"name", p.name},
                         {"shape", p.tensor.shape()},
                         {"offset", offset},
                         {"nbytes", nbytes}});
        offset += nbytes;
    }
    nlohmann::json header = {{"config", config_to_json(config)}, {"stage", stage},
                             {"params", table}};
    const std::string header_text = header.dump();

    std::string blob;
    blob.reserve(12 + header_text.size() + static_cast<size_t>(offset));
    blob += "FMAE";
    put_u32_le(blob, kCheckpointVersion);
    put_u32_le(blob, static_cast<uint32_t>(header_text.size()));
    blob += header_text;
    for (const auto& p : params)
        for (int64_t i = 0; i < p.tensor.numel(); ++i) put_f64_le(blob, p.tensor.data()[i]);

    std::ofstream f = open_out(path, std::ios::binary);
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!f) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f = open_in(path, std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    if (blob.size() < 12 || blob.compare(0, 4, "FMAE") != 0)
        throw FormatError(path + ": not a FMAE checkpoint (bad magic)");
    Checkpoint ckpt;
    ckpt.version = get_u32_le(bytes + 4);
    if (ckpt.version != kCheckpointVersion)
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(ckpt.version));
    const uint32_t header_len = get_u32_le(bytes + 8);
    if (blob.size() < 12 + static_cast<size_t>(header_len))
        throw FormatError(path + ": truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(blob.substr(12, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": bad header: " + e.what());
    }
    ckpt.config = config_from_json(header.at("config"));
    ckpt.stage = header.at("stage").get<std::string>();
    if (ckpt.stage != kStagePretrained && ckpt.stage != kStageDetector)
        throw FormatError(path + ": unknown stage \"" + ckpt.stage + "\"");

    const size_t payload_base = 12 + header_len;
    const size_t payload_len = blob.size() - payload_base;
    int64_t expected_offset = 0;
    for (const auto& entry : header.at("params")) {
        const std::string name = entry.at("name").get<std::string>();
        const Shape shape = entry.at("shape").get<Shape>();
        const int64_t offset = entry.at("offset").get<int64_t>();
        const int64_t nbytes = entry.at("nbytes").get<int64_t>();
        if (offset != expected_offset)
            throw FormatError(path + ": parameter " + name + ": overlapping or unordered offsets");
        if (nbytes != shape_numel(shape) * 8)
            throw FormatError(path + ": parameter " + name + ": byte length does not match shape");
        if (static_cast<size_t>(offset + nbytes) > payload_len)
            throw FormatError(path + ": parameter " + name + ": payload truncated (need " +
                              std::to_string(offset + nbytes) + " bytes, have " +
                              std::to_string(payload_len) + ")");
        Tensor t = Tensor::zeros(shape);
        for (int64_t i = 0; i < t.numel(); ++i)
            t.data()[i] = get_f64_le(bytes + payload_base + offset + i * 8);
        ckpt.params.emplace_back(name, std::move(t));
        expected_offset = offset + nbytes;
    }
    if (static_cast<size_t>(expected_offset) != payload_len)
        throw FormatError(path + ": payload length " + std::to_string(payload_len) +
                          " does not match table total " + std::to_string(expected_offset));
    return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, ParameterStore& params) {
    if (ckpt.params.size() != params.size())
        throw FormatError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                          " parameters, model expects " + std::to_string(params.size()));
    for (const auto& [name, tensor] : ckpt.params) {
        if (!params.contains(name)) throw FormatError("checkpoint parameter unknown to model: " + name);
        Parameter& p = params.at(name);
        if (p.tensor.shape() != tensor.shape())
            throw FormatError("checkpoint parameter " + name + ": shape " +
                              shape_str(tensor.shape()) + " does not match model " +
                              shape_str(p.tensor.shape()));
        p.tensor.vec() = tensor.vec();
    }
}

}  // namespace fmae::io
