#include <cstring>
#include <fstream>
#include <map>

#include "usfg/checkpoint.hpp"

namespace usfg {

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

void put_f32(std::vector<uint8_t>& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

void put_tensor(std::vector<uint8_t>& out, const std::string& name,
                const Tensor<float>& t) {
    put_u16(out, static_cast<uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<uint8_t>(t.dims.size()));
    for (int d : t.dims) put_u32(out, static_cast<uint32_t>(d));
    for (float v : t.data) put_f32(out, v);
}

struct Reader {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;

    void need(size_t n) const {
        if (bytes.size() - pos < n)
            throw DecodeError("checkpoint: truncated", bytes.size());
    }
    uint16_t u16() {
        need(2);
        uint16_t v = bytes[pos] | (bytes[pos + 1] << 8);
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

Tensor<float> read_tensor(Reader& r, std::string& name) {
    uint16_t len = r.u16();
    r.need(len);
    name.assign(reinterpret_cast<const char*>(r.bytes.data()) + r.pos, len);
    r.pos += len;
    uint8_t rank = r.u8();
    if (rank > 4) throw DecodeError("checkpoint: tensor rank > 4", r.pos - 1);
    std::vector<int> dims(rank);
    for (auto& d : dims) {
        uint32_t v = r.u32();
        if (v == 0 || v > (1u << 28)) throw DecodeError("checkpoint: bad extent", r.pos - 4);
        d = static_cast<int>(v);
    }
    Tensor<float> t(dims);
    for (float& v : t.data) v = r.f32();
    return t;
}

}  // namespace

std::vector<uint8_t> serialize_checkpoint(const NetworkParams<float>& params,
                                          const AdamState<float>* state) {
    std::vector<uint8_t> out;
    out.insert(out.end(), {'U', 'S', 'F', 'G'});
    put_u32(out, kCheckpointVersion);

    const ArchDescriptor& a = params.arch;
    Tensor<float> arch_t({11});
    arch_t.data = {static_cast<float>(a.input_size),  static_cast<float>(a.input_channels),
                   static_cast<float>(a.conv_channels[0]), static_cast<float>(a.conv_channels[1]),
                   static_cast<float>(a.conv_channels[2]), static_cast<float>(a.conv_channels[3]),
                   static_cast<float>(a.conv_channels[4]), static_cast<float>(a.conv_channels[5]),
                   static_cast<float>(a.conv_channels[6]), static_cast<float>(a.kernel),
                   static_cast<float>(a.skip_conv)};

    uint32_t count = 1 + 16;  // arch + 7*(w,b) + fc w,b
    if (state) count += 1 + 2 * 16;
    put_u32(out, count);
    put_tensor(out, "arch", arch_t);

    auto& p = const_cast<NetworkParams<float>&>(params);
    for_each_tensor(p, [&](const std::string& name, Tensor<float>& t) {
        put_tensor(out, name, t);
    });
    if (state) {
        Tensor<float> step({1});
        step.data[0] = static_cast<float>(state->t);
        put_tensor(out, "adam.t", step);
        size_t slot = 0;
        for_each_tensor(p, [&](const std::string& name, Tensor<float>&) {
            put_tensor(out, "adam.m." + name, state->m[slot]);
            put_tensor(out, "adam.v." + name, state->v[slot]);
            ++slot;
        });
    }
    return out;
}

Checkpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes) {
    Reader r{bytes};
    r.need(4);
    if (std::memcmp(bytes.data(), "USFG", 4) != 0)
        throw DecodeError("checkpoint: bad magic", 0);
    r.pos = 4;
    uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw DecodeError("checkpoint: unsupported version " + std::to_string(version), 4);
    uint32_t count = r.u32();

    std::map<std::string, Tensor<float>> tensors;
    for (uint32_t i = 0; i < count; ++i) {
        std::string name;
        Tensor<float> t = read_tensor(r, name);
        if (!tensors.emplace(name, std::move(t)).second)
            throw DecodeError("checkpoint: duplicate tensor " + name, r.pos);
    }

    auto take = [&](const std::string& name) -> Tensor<float> {
        auto it = tensors.find(name);
        if (it == tensors.end())
            throw DecodeError("checkpoint: missing tensor " + name, bytes.size());
        return std::move(it->second);
    };

    Tensor<float> arch_t = take("arch");
    if (arch_t.data.size() != 11) throw DecodeError("checkpoint: bad arch record", 0);
    ArchDescriptor arch;
    arch.input_size = static_cast<int>(arch_t.data[0]);
    arch.input_channels = static_cast<int>(arch_t.data[1]);
    for (int i = 0; i < 7; ++i) arch.conv_channels[i] = static_cast<int>(arch_t.data[2 + i]);
    arch.kernel = static_cast<int>(arch_t.data[9]);
    arch.skip_conv = static_cast<int>(arch_t.data[10]);
    arch.validate();

    Checkpoint ck;
    ck.params = zero_params<float>(arch);
    for_each_tensor(ck.params, [&](const std::string& name, Tensor<float>& t) {
        Tensor<float> loaded = take(name);
        if (loaded.dims != t.dims)
            throw DecodeError("checkpoint: shape mismatch for " + name, bytes.size());
        t = std::move(loaded);
    });

    if (tensors.count("adam.t")) {
        AdamState<float> adam = AdamState<float>::make(ck.params);
        adam.t = static_cast<int64_t>(take("adam.t").data[0]);
        size_t slot = 0;
        for_each_tensor(ck.params, [&](const std::string& name, Tensor<float>& t) {
            Tensor<float> m = take("adam.m." + name);
            Tensor<float> v = take("adam.v." + name);
            if (m.dims != t.dims || v.dims != t.dims)
                throw DecodeError("checkpoint: adam shape mismatch for " + name, bytes.size());
            adam.m[slot] = std::move(m);
            adam.v[slot] = std::move(v);
            ++slot;
        });
        ck.adam = std::move(adam);
    }
    return ck;
}

void save_checkpoint(const NetworkParams<float>& params, const AdamState<float>* state,
                     const std::string& path) {
    std::vector<uint8_t> bytes = serialize_checkpoint(params, state);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace usfg
