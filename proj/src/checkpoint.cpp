#include "cgar/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace cgar {

namespace {

constexpr char kMagic[8] = {'C', 'G', 'A', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

// Little-endian scalar append; this codebase only targets little-endian
// hosts, enforced at load by the magic check plus checksum.
template <typename T>
void put(std::string& buf, T v) {
    char tmp[sizeof(T)];
    std::memcpy(tmp, &v, sizeof(T));
    buf.append(tmp, sizeof(T));
}

void put_str(std::string& buf, const std::string& s) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(s.size()));
    buf += s;
}

void put_f64s(std::string& buf, std::span<const real> vals) {
    put<std::uint64_t>(buf, vals.size());
    for (real v : vals) put<double>(buf, static_cast<double>(v));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    template <typename T>
    T get() {
        if (pos + sizeof(T) > buf.size())
            throw IoError("checkpoint payload truncated");
        T v;
        std::memcpy(&v, buf.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }

    std::string get_str() {
        auto n = get<std::uint32_t>();
        if (pos + n > buf.size()) throw IoError("checkpoint payload truncated");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }

    std::vector<real> get_f64s() {
        auto n = get<std::uint64_t>();
        std::vector<real> out(n);
        for (std::uint64_t i = 0; i < n; ++i) out[i] = static_cast<real>(get<double>());
        return out;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointRecord& rec) {
    std::string payload;
    put<std::int32_t>(payload, rec.dims.seq_len);
    put<std::int32_t>(payload, rec.dims.vocab);
    put<std::int32_t>(payload, rec.dims.d_model);
    put<std::int32_t>(payload, rec.dims.n_layers);
    put<std::int32_t>(payload, rec.dims.heads);
    put<std::int32_t>(payload, rec.dims.d_ffn);
    put<std::int64_t>(payload, rec.epoch);
    put<std::int64_t>(payload, rec.cum_block_apps);
    put_str(payload, rec.rng_state);
    put_str(payload, rec.config_echo);

    put<std::uint32_t>(payload, static_cast<std::uint32_t>(rec.params.size()));
    for (const auto& [name, t] : rec.params) {
        put_str(payload, name);
        put<std::uint32_t>(payload, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape()) put<std::int32_t>(payload, d);
        put_f64s(payload, t.values());
    }

    put<std::int64_t>(payload, rec.opt.step);
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(rec.opt.slots.size()));
    for (const auto& [name, mom] : rec.opt.slots) {
        put_str(payload, name);
        put_f64s(payload, mom.m);
        put_f64s(payload, mom.v);
    }

    std::string file;
    file.append(kMagic, sizeof(kMagic));
    put<std::uint32_t>(file, kVersion);
    put<std::uint64_t>(file, payload.size());
    file += payload;
    put<std::uint64_t>(file, fnv1a64(payload));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint '" + path + "' for writing");
    out.write(file.data(), static_cast<std::streamsize>(file.size()));
    if (!out) throw IoError("write to checkpoint '" + path + "' failed");
}

CheckpointRecord load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    std::string file((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    if (file.size() < sizeof(kMagic) + 12) throw IoError("checkpoint file truncated");
    if (std::memcmp(file.data(), kMagic, sizeof(kMagic)) != 0)
        throw IoError("'" + path + "' is not a checkpoint (bad magic)");

    Reader hdr{file, sizeof(kMagic)};
    const auto version = hdr.get<std::uint32_t>();
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version) +
                      " (expected " + std::to_string(kVersion) + ")");
    const auto payload_len = hdr.get<std::uint64_t>();
    if (hdr.pos + payload_len + 8 != file.size())
        throw IoError("checkpoint length mismatch (file corrupt or truncated)");
    const std::string payload = file.substr(hdr.pos, payload_len);
    Reader tail{file, hdr.pos + payload_len};
    if (tail.get<std::uint64_t>() != fnv1a64(payload))
        throw IoError("checkpoint checksum mismatch (file corrupt)");

    Reader r{payload};
    CheckpointRecord rec;
    rec.dims.seq_len = r.get<std::int32_t>();
    rec.dims.vocab = r.get<std::int32_t>();
    rec.dims.d_model = r.get<std::int32_t>();
    rec.dims.n_layers = r.get<std::int32_t>();
    rec.dims.heads = r.get<std::int32_t>();
    rec.dims.d_ffn = r.get<std::int32_t>();
    rec.epoch = r.get<std::int64_t>();
    rec.cum_block_apps = r.get<std::int64_t>();
    rec.rng_state = r.get_str();
    rec.config_echo = r.get_str();

    const auto n_params = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_params; ++i) {
        std::string name = r.get_str();
        const auto rank = r.get<std::uint32_t>();
        Shape shape(rank);
        for (auto& d : shape) d = r.get<std::int32_t>();
        auto values = r.get_f64s();
        rec.params.emplace_back(std::move(name),
                                Tensor::from(std::move(shape), std::move(values)));
    }

    rec.opt.step = r.get<std::int64_t>();
    const auto n_slots = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_slots; ++i) {
        std::string name = r.get_str();
        OptimizerState::Moments mom;
        mom.m = r.get_f64s();
        mom.v = r.get_f64s();
        rec.opt.slots.emplace(std::move(name), std::move(mom));
    }
    if (r.pos != payload.size()) throw IoError("checkpoint has trailing bytes");
    return rec;
}

CheckpointRecord snapshot(const Model& model, const OptimizerState& opt, long epoch,
                          long cum_block_apps, const std::string& rng_state,
                          const std::string& config_echo) {
    CheckpointRecord rec;
    rec.dims = model.dims();
    for (const auto& [name, t] : model.params())
        rec.params.emplace_back(name, detach(t));
    rec.opt = opt;
    rec.epoch = epoch;
    rec.cum_block_apps = cum_block_apps;
    rec.rng_state = rng_state;
    rec.config_echo = config_echo;
    return rec;
}

}  // namespace cgar
