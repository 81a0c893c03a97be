#include "dbd/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace dbd {

namespace {

constexpr char kMagic[8] = {'D', 'B', 'D', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw LoadError("archive: truncated file");
    return v;
}

} // namespace

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    return nlohmann::json{{"backbone_id", cfg.backbone_id},
                          {"num_decoder_levels", cfg.num_decoder_levels},
                          {"base_channels", cfg.base_channels},
                          {"input_size", {cfg.input_h, cfg.input_w}},
                          {"variant", cfg.variant},
                          {"depth_heads", cfg.depth_heads}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.backbone_id = j.value("backbone_id", cfg.backbone_id);
    cfg.num_decoder_levels = j.value("num_decoder_levels", cfg.num_decoder_levels);
    cfg.base_channels = j.value("base_channels", cfg.base_channels);
    if (j.contains("input_size")) {
        cfg.input_h = j["input_size"].at(0).get<std::int64_t>();
        cfg.input_w = j["input_size"].at(1).get<std::int64_t>();
    }
    cfg.variant = j.value("variant", cfg.variant);
    cfg.depth_heads = j.value("depth_heads", cfg.depth_heads);
    return cfg;
}

const Tensor* Archive::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write archive: " + path.string());
    os.write(kMagic, sizeof(kMagic));
    std::string meta = archive.meta.dump();
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(meta.size()));
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    write_pod<std::uint64_t>(os, archive.tensors.size());
    for (const auto& [name, tensor] : archive.tensors) {
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        const Shape s = tensor.shape();
        write_pod<std::int64_t>(os, s.n);
        write_pod<std::int64_t>(os, s.c);
        write_pod<std::int64_t>(os, s.h);
        write_pod<std::int64_t>(os, s.w);
        os.write(reinterpret_cast<const char*>(tensor.data()),
                 static_cast<std::streamsize>(tensor.numel() * static_cast<std::int64_t>(sizeof(double))));
    }
    if (!os) throw IoError("failed writing archive: " + path.string());
}

Archive read_archive(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LoadError("cannot open archive: " + path.string());
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw LoadError("not a checkpoint archive: " + path.string());
    auto meta_len = read_pod<std::uint32_t>(is);
    std::string meta(meta_len, '\0');
    is.read(meta.data(), meta_len);
    if (!is) throw LoadError("archive: truncated metadata in " + path.string());
    Archive archive;
    try {
        archive.meta = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("archive: bad metadata in " + path.string() + ": " + e.what());
    }
    auto count = read_pod<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < count; ++i) {
        auto name_len = read_pod<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        Shape s;
        s.n = read_pod<std::int64_t>(is);
        s.c = read_pod<std::int64_t>(is);
        s.h = read_pod<std::int64_t>(is);
        s.w = read_pod<std::int64_t>(is);
        Tensor t(s);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * static_cast<std::int64_t>(sizeof(double))));
        if (!is) throw LoadError("archive: truncated tensor '" + name + "' in " + path.string());
        archive.tensors.emplace_back(std::move(name), std::move(t));
    }
    return archive;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, nlohmann::json extra_meta,
                     const AdamOptimizer* optimizer, int epoch) {
    Archive archive;
    archive.meta = std::move(extra_meta);
    archive.meta["kind"] = "model_checkpoint";
    archive.meta["model"] = model_config_to_json(model.config());
    archive.meta["epoch"] = epoch;
    for (const auto& p : model.params().all()) archive.tensors.emplace_back(p->name, p->value);
    if (optimizer) {
        archive.meta["adam_step"] = optimizer->step_count();
        const auto& params = optimizer->params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            archive.tensors.emplace_back("__adam_m__" + params[i]->name, optimizer->moment1(i));
            archive.tensors.emplace_back("__adam_v__" + params[i]->name, optimizer->moment2(i));
        }
    }
    write_archive(path, archive);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
    Archive archive = read_archive(path);
    if (!archive.meta.contains("model"))
        throw LoadError("checkpoint " + path.string() + " carries no model config");
    ModelConfig stored = model_config_from_json(archive.meta["model"]);
    if (expected && !(*expected == stored))
        throw ConfigError("checkpoint config mismatch for " + path.string() + ": stored " +
                          model_config_to_json(stored).dump() + " vs expected " +
                          model_config_to_json(*expected).dump());

    Model model = Model::build(stored, 0);
    for (const auto& p : model.params().all()) {
        const Tensor* t = archive.find(p->name);
        if (!t) throw LoadError("checkpoint " + path.string() + " is missing parameter " + p->name);
        if (!(t->shape() == p->value.shape()))
            throw LoadError("checkpoint " + path.string() + ": parameter " + p->name + " has shape " +
                            t->shape().str() + ", expected " + p->value.shape().str());
        p->value = *t;
    }

    LoadedCheckpoint out{std::move(model), archive.meta, archive.meta.value("epoch", 0), std::move(archive)};
    return out;
}

void restore_optimizer(AdamOptimizer& optimizer, const LoadedCheckpoint& ckpt, const Model& model) {
    if (!ckpt.meta.contains("adam_step"))
        throw LoadError("checkpoint carries no optimizer state");
    const auto& params = model.params().all();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor* m = ckpt.raw.find("__adam_m__" + params[i]->name);
        const Tensor* v = ckpt.raw.find("__adam_v__" + params[i]->name);
        if (!m || !v) throw LoadError("checkpoint missing optimizer moments for " + params[i]->name);
        optimizer.restore_state(i, *m, *v);
    }
    optimizer.set_step_count(ckpt.meta["adam_step"].get<std::int64_t>());
}

std::uint64_t model_param_hash(const Model& model) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : model.params().all()) {
        std::uint64_t th = tensor_hash(p->value);
        h ^= th;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace dbd
