#include "nn/model.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "json.hpp"
#include "support/bytes.hpp"
#include "support/errors.hpp"
#include "support/hash.hpp"
#include "support/rng.hpp"

namespace fiplab::nn {

using nlohmann::json;

MlpModel MlpModel::init(const std::vector<int>& widths, std::uint64_t seed) {
    if (widths.size() < 2) {
        raise(ErrorCode::invalid_argument, "model needs at least input and output widths");
    }
    for (int w : widths) {
        if (w < 1) {
            raise(ErrorCode::invalid_argument, "model widths must be positive");
        }
    }
    MlpModel model;
    model.seed_ = seed;
    model.layers_.resize(widths.size() - 1);
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        const int in = widths[k];
        const int out = widths[k + 1];
        rng::Xoshiro256pp gen(rng::derive_seed(seed, 0x1a17, k));
        const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        Layer& layer = model.layers_[k];
        layer.weights = linalg::Matrix(out, in);
        for (double& w : layer.weights.data) {
            w = gen.uniform(-bound, bound);
        }
        layer.bias.assign(out, 0.0);
    }
    return model;
}

int MlpModel::input_width() const {
    return layers_.empty() ? 0 : static_cast<int>(layers_.front().weights.cols);
}

int MlpModel::class_count() const {
    return layers_.empty() ? 0 : static_cast<int>(layers_.back().weights.rows);
}

std::size_t MlpModel::param_count() const {
    std::size_t n = 0;
    for (const Layer& layer : layers_) {
        n += layer.weights.data.size() + layer.bias.size();
    }
    return n;
}

std::vector<int> MlpModel::widths() const {
    std::vector<int> w;
    if (layers_.empty()) {
        return w;
    }
    w.push_back(static_cast<int>(layers_.front().weights.cols));
    for (const Layer& layer : layers_) {
        w.push_back(static_cast<int>(layer.weights.rows));
    }
    return w;
}

void MlpModel::validate() const {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const Layer& layer = layers_[k];
        if (layer.bias.size() != layer.weights.rows) {
            raise(ErrorCode::invalid_argument,
                  "layer " + std::to_string(k) + ": bias length does not match weight rows");
        }
        if (k > 0 && layer.weights.cols != layers_[k - 1].weights.rows) {
            raise(ErrorCode::invalid_argument,
                  "layer " + std::to_string(k) + ": input width does not chain with layer " +
                      std::to_string(k - 1));
        }
        for (double v : layer.weights.data) {
            if (!std::isfinite(v)) {
                raise(ErrorCode::invalid_argument,
                      "layer " + std::to_string(k) + ": non-finite weight");
            }
        }
        for (double v : layer.bias) {
            if (!std::isfinite(v)) {
                raise(ErrorCode::invalid_argument,
                      "layer " + std::to_string(k) + ": non-finite bias");
            }
        }
    }
}

std::vector<ParamBlock> layout_blocks(const std::vector<int>& widths) {
    std::vector<ParamBlock> blocks;
    std::size_t offset = 0;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        const auto rows = static_cast<std::size_t>(widths[k + 1]);
        const auto cols = static_cast<std::size_t>(widths[k]);
        blocks.push_back({offset, rows, cols, false, k});
        offset += rows * cols;
        blocks.push_back({offset, rows, 1, true, k});
        offset += rows;
    }
    return blocks;
}

std::size_t param_count_for(const std::vector<int>& widths) {
    std::size_t n = 0;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        n += static_cast<std::size_t>(widths[k + 1]) * (static_cast<std::size_t>(widths[k]) + 1);
    }
    return n;
}

ParamVector flatten(const MlpModel& model) {
    ParamVector pv;
    pv.widths = model.widths();
    pv.values.reserve(model.param_count());
    for (const Layer& layer : model.layers()) {
        pv.values.insert(pv.values.end(), layer.weights.data.begin(), layer.weights.data.end());
        pv.values.insert(pv.values.end(), layer.bias.begin(), layer.bias.end());
    }
    return pv;
}

MlpModel unflatten(const ParamVector& params) {
    if (params.widths.size() < 2) {
        raise(ErrorCode::invalid_argument, "unflatten: missing layout widths");
    }
    if (params.values.size() != param_count_for(params.widths)) {
        raise(ErrorCode::invalid_argument, "unflatten: value count does not match layout");
    }
    MlpModel model;
    model.layers().resize(params.widths.size() - 1);
    std::size_t offset = 0;
    for (std::size_t k = 0; k + 1 < params.widths.size(); ++k) {
        const auto rows = static_cast<std::size_t>(params.widths[k + 1]);
        const auto cols = static_cast<std::size_t>(params.widths[k]);
        Layer& layer = model.layers()[k];
        layer.weights = linalg::Matrix(rows, cols);
        std::copy(params.values.begin() + offset, params.values.begin() + offset + rows * cols,
                  layer.weights.data.begin());
        offset += rows * cols;
        layer.bias.assign(params.values.begin() + offset, params.values.begin() + offset + rows);
        offset += rows;
    }
    return model;
}

void set_params(MlpModel& model, std::span<const double> values) {
    if (values.size() != model.param_count()) {
        raise(ErrorCode::invalid_argument, "set_params: value count mismatch");
    }
    std::size_t offset = 0;
    for (Layer& layer : model.layers()) {
        std::copy(values.begin() + offset, values.begin() + offset + layer.weights.data.size(),
                  layer.weights.data.begin());
        offset += layer.weights.data.size();
        std::copy(values.begin() + offset, values.begin() + offset + layer.bias.size(),
                  layer.bias.begin());
        offset += layer.bias.size();
    }
}

namespace {
constexpr char kMagic[8] = {'F', 'I', 'P', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(const MlpModel& model, const std::filesystem::path& path) {
    model.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        raise(ErrorCode::io, "cannot open checkpoint for writing: " + path.string());
    }
    json header;
    header["version"] = 1;
    json dims = json::array();
    for (const Layer& layer : model.layers()) {
        dims.push_back({layer.weights.cols, layer.weights.rows});
    }
    header["layer_dims"] = dims;
    header["class_count"] = model.class_count();
    header["seed"] = model.init_seed();
    const std::string header_text = header.dump();

    out.write(kMagic, sizeof(kMagic));
    bytes::write_u32_le(out, static_cast<std::uint32_t>(header_text.size()));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const Layer& layer : model.layers()) {
        for (double v : layer.weights.data) {
            bytes::write_f64_le(out, v);
        }
        for (double v : layer.bias) {
            bytes::write_f64_le(out, v);
        }
    }
    if (!out) {
        raise(ErrorCode::io, "checkpoint write failed: " + path.string());
    }
}

MlpModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(ErrorCode::io, "cannot open checkpoint: " + path.string());
    }
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + 8, kMagic)) {
        raise(ErrorCode::format, "not a FIPCKPT1 checkpoint: " + path.string());
    }
    std::uint32_t header_len = 0;
    if (!bytes::read_u32_le(in, header_len)) {
        raise(ErrorCode::format, "truncated checkpoint header: " + path.string());
    }
    std::string header_text(header_len, '\0');
    if (!in.read(header_text.data(), header_len)) {
        raise(ErrorCode::format, "truncated checkpoint header: " + path.string());
    }
    json header = json::parse(header_text, nullptr, false);
    if (header.is_discarded()) {
        raise(ErrorCode::format, "checkpoint header is not valid JSON: " + path.string());
    }
    if (!header.contains("version") || header["version"].get<int>() != 1) {
        raise(ErrorCode::format, "unsupported checkpoint version: " + path.string());
    }

    std::vector<int> widths;
    for (const auto& pair : header.at("layer_dims")) {
        const int in_w = pair.at(0).get<int>();
        const int out_w = pair.at(1).get<int>();
        if (widths.empty()) {
            widths.push_back(in_w);
        } else if (widths.back() != in_w) {
            raise(ErrorCode::format, "checkpoint layer dimensions do not chain");
        }
        widths.push_back(out_w);
    }
    if (widths.size() < 2) {
        raise(ErrorCode::format, "checkpoint has no layers");
    }
    if (header.contains("class_count") && header["class_count"].get<int>() != widths.back()) {
        raise(ErrorCode::format, "checkpoint class_count does not match last layer");
    }

    ParamVector pv;
    pv.widths = widths;
    pv.values.resize(param_count_for(widths));
    for (double& v : pv.values) {
        if (!bytes::read_f64_le(in, v)) {
            raise(ErrorCode::format, "truncated checkpoint payload: " + path.string());
        }
    }
    char extra;
    if (in.read(&extra, 1)) {
        raise(ErrorCode::format, "trailing bytes after checkpoint payload: " + path.string());
    }
    MlpModel model = unflatten(pv);
    if (header.contains("seed")) {
        model.set_init_seed(header["seed"].get<std::uint64_t>());
    }
    model.validate();
    return model;
}

std::uint64_t param_checksum(const MlpModel& model) {
    return hash::fnv1a64(flatten(model).values);
}

}  // namespace fiplab::nn
