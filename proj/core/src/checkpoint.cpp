#include "soda2/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "soda2/error.hpp"

namespace soda2 {

namespace {

using nlohmann::json;

struct NamedTensorRef {
    std::string name;
    const Tensor* tensor;
};

json arch_to_json(const ArchConfig& a) {
    return {{"spe_hidden", a.spe_hidden},     {"spa_hidden", a.spa_hidden},
            {"feature_channels", a.feature_channels}, {"kernel", a.kernel},
            {"reduction", a.reduction}};
}

ArchConfig arch_from_json(const json& j) {
    ArchConfig a;
    a.spe_hidden = j.at("spe_hidden").get<std::size_t>();
    a.spa_hidden = j.at("spa_hidden").get<std::size_t>();
    a.feature_channels = j.at("feature_channels").get<std::size_t>();
    a.kernel = j.at("kernel").get<std::size_t>();
    a.reduction = j.at("reduction").get<std::size_t>();
    return a;
}

json config_to_json(const TrainConfig& c) {
    return {{"alpha", c.alpha},
            {"learning_rate", c.learning_rate},
            {"momentum", c.momentum},
            {"weight_decay", c.weight_decay},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"k", c.gmm_components},
            {"patch", c.patch},
            {"arch", arch_to_json(c.arch)}};
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.alpha = j.at("alpha").get<double>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.momentum = j.at("momentum").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.gmm_components = j.at("k").get<int>();
    c.patch = j.at("patch").get<std::size_t>();
    c.arch = arch_from_json(j.at("arch"));
    return c;
}

void put_u32le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64le(std::string& out, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64le(const std::string& d, std::size_t off) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(d[off + i])) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const TrainState& state, const TrainConfig& cfg,
                     const std::string& path) {
    std::vector<NamedTensorRef> layers;
    for (const auto& [n, t] : state.aligned.named_params())
        layers.push_back({"aligned/" + n, t});
    layers.push_back({"classifier.w", &state.classifier.w});
    layers.push_back({"classifier.b", &state.classifier.b});
    for (const auto& [n, t] : state.intrinsic.named_params())
        layers.push_back({"intrinsic/" + n, t});

    json manifest;
    manifest["format"] = "soda2-checkpoint";
    manifest["version"] = 1;
    manifest["seed"] = cfg.seed;
    manifest["known_classes"] = state.known_classes;
    manifest["epoch"] = state.epoch;
    manifest["config"] = config_to_json(cfg);
    json jl = json::array();
    for (const auto& l : layers)
        jl.push_back({{"name", l.name}, {"shape", l.tensor->shape}});
    manifest["layers"] = jl;
    manifest["momentum_sizes"] = [&] {
        std::vector<std::size_t> sizes;
        for (const auto& m : state.momentum) sizes.push_back(m.size());
        return sizes;
    }();

    const std::string header = manifest.dump();
    std::string out = "SDC1";
    put_u32le(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    for (const auto& l : layers)
        for (double v : l.tensor->values) put_f64le(out, v);
    for (const auto& m : state.momentum)
        for (double v : m) put_f64le(out, v);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write checkpoint " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("short write to " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() < 8 || std::memcmp(data.data(), "SDC1", 4) != 0)
        throw FormatError(path + ": bad checkpoint magic");
    std::uint32_t hlen = 0;
    for (int i = 0; i < 4; ++i)
        hlen |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[4 + i])) << (8 * i);
    if (data.size() < 8 + hlen) throw FormatError(path + ": truncated manifest");
    json manifest;
    try {
        manifest = json::parse(data.substr(8, hlen));
    } catch (const json::exception& e) {
        throw FormatError(path + ": manifest JSON invalid: " + e.what());
    }

    LoadedCheckpoint out;
    try {
        out.config = config_from_json(manifest.at("config"));
    } catch (const json::exception& e) {
        throw FormatError(path + ": manifest fields invalid: " + e.what());
    }
    out.state = init_train_state(out.config, manifest.at("known_classes").get<int>());
    out.state.epoch = manifest.at("epoch").get<std::size_t>();

    std::vector<NamedTensorRef> layers;
    for (const auto& [n, t] : out.state.aligned.named_params())
        layers.push_back({"aligned/" + n, t});
    layers.push_back({"classifier.w", &out.state.classifier.w});
    layers.push_back({"classifier.b", &out.state.classifier.b});
    for (const auto& [n, t] : out.state.intrinsic.named_params())
        layers.push_back({"intrinsic/" + n, t});

    const json& jl = manifest.at("layers");
    if (jl.size() != layers.size())
        throw FormatError(path + ": layer count mismatch with this build");
    std::size_t off = 8 + hlen;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto shape = jl[i].at("shape").get<std::vector<std::size_t>>();
        if (jl[i].at("name").get<std::string>() != layers[i].name ||
            shape != layers[i].tensor->shape)
            throw FormatError(path + ": layer " + layers[i].name +
                              " does not match manifest entry");
        Tensor* t = const_cast<Tensor*>(layers[i].tensor);
        if (data.size() < off + 8 * t->numel())
            throw FormatError(path + ": payload truncated at offset " +
                              std::to_string(data.size()));
        for (std::size_t j = 0; j < t->numel(); ++j, off += 8)
            t->values[j] = get_f64le(data, off);
    }
    const auto msizes = manifest.at("momentum_sizes").get<std::vector<std::size_t>>();
    if (msizes.size() != out.state.momentum.size())
        throw FormatError(path + ": momentum buffer count mismatch");
    for (std::size_t i = 0; i < msizes.size(); ++i) {
        if (msizes[i] != out.state.momentum[i].size())
            throw FormatError(path + ": momentum buffer size mismatch");
        if (data.size() < off + 8 * msizes[i])
            throw FormatError(path + ": payload truncated in momentum block");
        for (std::size_t j = 0; j < msizes[i]; ++j, off += 8)
            out.state.momentum[i][j] = get_f64le(data, off);
    }
    if (off != data.size()) throw FormatError(path + ": trailing bytes after payload");
    return out;
}

}  // namespace soda2
