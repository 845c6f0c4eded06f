#include "licda/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace licda {

namespace {

constexpr char kMagic[4] = {'L', 'I', 'C', 'K'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("truncated checkpoint");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint " + path);
    os.write(kMagic, 4);
    os.put(static_cast<char>(kCheckpointVersion));
    const std::string meta = ck.meta.dump();
    put_u32(os, static_cast<std::uint32_t>(meta.size()));
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put_u32(os, static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& [name, t] : ck.tensors) {
        const auto& [shape, values] = t;
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        os.put(0);  // dtype: float32
        os.put(static_cast<char>(shape.size()));
        for (int d : shape) put_u32(os, static_cast<std::uint32_t>(d));
        static_assert(sizeof(float) == 4);
        os.write(reinterpret_cast<const char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(float)));
    }
    if (!os) throw DataError("write failed for checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw DataError("not a checkpoint file: " + path);
    const int version = is.get();
    if (version != kCheckpointVersion)
        throw CompatError("checkpoint format version " + std::to_string(version) + " != " +
                          std::to_string(kCheckpointVersion));
    Checkpoint ck;
    const std::uint32_t metalen = get_u32(is);
    std::string meta(metalen, '\0');
    is.read(meta.data(), metalen);
    if (!is) throw DataError("truncated checkpoint metadata");
    ck.meta = nlohmann::ordered_json::parse(meta, nullptr, false);
    if (ck.meta.is_discarded()) throw DataError("corrupt checkpoint metadata");
    const std::uint32_t count = get_u32(is);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t namelen = get_u32(is);
        std::string name(namelen, '\0');
        is.read(name.data(), namelen);
        const int dtype = is.get();
        if (dtype != 0) throw CompatError("unsupported tensor dtype in checkpoint");
        const int ndim = is.get();
        if (ndim < 0 || ndim > 8) throw DataError("corrupt tensor header");
        Shape shape(static_cast<std::size_t>(ndim));
        std::int64_t numel = 1;
        for (int d = 0; d < ndim; ++d) {
            shape[static_cast<std::size_t>(d)] = static_cast<int>(get_u32(is));
            numel *= shape[static_cast<std::size_t>(d)];
        }
        if (numel < 0 || numel > (1ll << 31)) throw DataError("corrupt tensor size");
        std::vector<float> values(static_cast<std::size_t>(numel));
        is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
        if (!is) throw DataError("truncated tensor data in checkpoint");
        ck.add(name, std::move(shape), std::move(values));
    }
    return ck;
}

Checkpoint snapshot_model(CodecModel<float>& model) {
    Checkpoint ck;
    ck.meta["codec"] = {{"latent_channels", model.cfg.latent_channels},
                        {"hidden_channels", model.cfg.hidden_channels},
                        {"lambda_rd", model.cfg.lambda_rd},
                        {"quality_index", model.cfg.quality_index}};
    if (model.bank) ck.meta["K"] = model.bank->K;
    if (model.gate)
        ck.meta["gate"] = {{"conv_channels", model.gate->cfg.conv_channels},
                           {"pool_kernel", model.gate->cfg.pool_kernel},
                           {"adaptive_out", model.gate->cfg.adaptive_out},
                           {"K", model.gate->cfg.K}};
    ck.meta["train_policy"] = to_string(model.train_policy);
    model.visit_all([&ck](Parameter<float>& p) { ck.add(p.name(), p.tensor().shape(), p.values()); });
    return ck;
}

CodecModel<float> restore_model(const Checkpoint& ck) {
    if (!ck.meta.contains("codec")) throw DataError("checkpoint has no codec config");
    const auto& c = ck.meta["codec"];
    CodecConfig cfg;
    cfg.latent_channels = c.at("latent_channels").get<int>();
    cfg.hidden_channels = c.at("hidden_channels").get<int>();
    cfg.lambda_rd = c.at("lambda_rd").get<double>();
    cfg.quality_index = c.at("quality_index").get<int>();

    CodecModel<float> model = make_codec_model<float>(cfg, 0);
    if (ck.meta.contains("K")) attach_adapters(model, ck.meta["K"].get<int>(), AdapterInit::kZero, 0);
    if (ck.meta.contains("gate")) {
        const auto& g = ck.meta["gate"];
        GateConfig gc;
        gc.conv_channels = g.at("conv_channels").get<int>();
        gc.pool_kernel = g.at("pool_kernel").get<int>();
        gc.adaptive_out = g.at("adaptive_out").get<int>();
        gc.K = g.at("K").get<int>();
        attach_gate(model, gc, 0);
    }
    if (ck.meta.contains("train_policy")) model.train_policy = policy_from_string(ck.meta["train_policy"]);

    model.visit_all([&ck](Parameter<float>& p) {
        const auto* t = ck.find(p.name());
        if (!t) throw DataError("checkpoint is missing tensor " + p.name());
        if (t->first != p.tensor().shape())
            throw DataError("checkpoint tensor " + p.name() + " has shape " + shape_str(t->first) + ", expected " +
                            shape_str(p.tensor().shape()));
        p.values() = t->second;
    });
    return model;
}

}  // namespace licda
