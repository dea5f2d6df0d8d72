// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "lftrank/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace lftrank {

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u16(std::uint16_t v) { little(v, 2); }
    void u32(std::uint32_t v) { little(v, 4); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(const std::string& s) { bytes.insert(bytes.end(), s.begin(), s.end()); }

    std::vector<std::uint8_t> bytes;

private:
    void little(std::uint32_t v, int width) {
        for (int i = 0; i < width; ++i) {
            bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    void set_context(std::string context) { context_ = std::move(context); }

    std::uint8_t u8() { return static_cast<std::uint8_t>(little(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(little(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(little(4)); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string raw(std::size_t n) {
        need(n);
        std::string out(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                        bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return out;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) {
            throw FormatError("checkpoint truncated " + context_ + " (needed " + std::to_string(n) +
                              " bytes at offset " + std::to_string(pos_) + ")");
        }
    }
    std::uint32_t little(int width) {
        need(static_cast<std::size_t>(width));
        std::uint32_t v = 0;
        for (int i = 0; i < width; ++i) {
            v |= static_cast<std::uint32_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(width);
        return v;
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
    std::string context_ = "in header";
};

}  // namespace

std::vector<std::uint8_t> encode_container(const std::vector<NamedTensor>& tensors) {
    Writer w;
    w.raw("LFTR");
    w.u16(checkpoint_version);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        if (name.size() > 0xFFFF) {
            throw FormatError("tensor name too long: " + name.substr(0, 64) + "...");
        }
        if (tensor.rank() > 0xFF) {
            throw FormatError("tensor '" + name + "' has too many dimensions");
        }
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.raw(name);
        w.u8(static_cast<std::uint8_t>(tensor.rank()));
        for (std::size_t dim : tensor.shape()) {
            w.u32(static_cast<std::uint32_t>(dim));
        }
        for (float v : tensor.values()) {
            w.f32(v);
        }
    }
    return std::move(w.bytes);
}

std::vector<NamedTensor> decode_container(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    if (r.raw(4) != "LFTR") {
        throw FormatError("not a checkpoint: bad magic bytes");
    }
    const std::uint16_t version = r.u16();
    if (version != checkpoint_version) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(checkpoint_version) + ")");
    }
    const std::uint32_t count = r.u32();
    std::vector<NamedTensor> out;
    std::set<std::string> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        r.set_context("in name of tensor #" + std::to_string(i));
        const std::uint16_t len = r.u16();
        std::string name = r.raw(len);
        r.set_context("while reading tensor '" + name + "'");
        if (!seen.insert(name).second) {
            throw FormatError("duplicate tensor '" + name + "' in checkpoint");
        }
        const std::uint8_t rank = r.u8();
        Shape shape(rank);
        for (auto& dim : shape) {
            dim = r.u32();
        }
        Tensor<float> t(shape);
        for (float& v : t.values()) {
            v = r.f32();
        }
        out.push_back({std::move(name), std::move(t)});
    }
    if (!r.done()) {
        throw FormatError("trailing bytes after the last tensor");
    }
    return out;
}

void write_container(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    const auto bytes = encode_container(tensors);
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot open " + tmp.string() + " for writing");
        }
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw DataError("failed writing " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

std::vector<NamedTensor> read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open checkpoint " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_container(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::filesystem::path& path,
                     const std::vector<std::string>& prefixes) {
    std::vector<NamedTensor> tensors;
    for (const auto& [name, entry] : store.entries()) {
        bool keep = prefixes.empty();
        for (const auto& p : prefixes) {
            keep = keep || name.rfind(p, 0) == 0;
        }
        if (keep) {
            tensors.push_back({name, entry.tensor.template cast<float>()});
        }
    }
    write_container(path, tensors);
}

template <typename T>
ParamStore<T> load_encoder_checkpoint(const std::filesystem::path& path, const EncoderConfig& config) {
    std::map<std::string, Shape> expected;
    for (auto& [name, shape] : encoder_layout(config)) {
        expected.emplace(name, shape);
    }
    ParamStore<T> store;
    for (auto& [name, tensor] : read_container(path)) {
        auto it = expected.find(name);
        if (it == expected.end()) {
            throw FormatError(path.string() + ": unknown tensor '" + name + "' for this encoder config");
        }
        if (it->second != tensor.shape()) {
            throw FormatError(path.string() + ": tensor '" + name + "' has shape " + shape_string(tensor.shape()) +
                              ", config expects " + shape_string(it->second));
        }
        store.add(name, tensor.template cast<T>());
    }
    for (const auto& [name, _] : expected) {
        if (!store.contains(name)) {
            throw FormatError(path.string() + ": missing tensor '" + name + "'");
        }
    }
    return store;
}

template <typename T>
void load_into(ParamStore<T>& store, const std::filesystem::path& path) {
    auto tensors = read_container(path);
    for (const auto& [name, tensor] : tensors) {
        if (!store.contains(name)) {
            throw FormatError(path.string() + ": unknown tensor '" + name + "'");
        }
        if (store.get(name).shape() != tensor.shape()) {
            throw FormatError(path.string() + ": tensor '" + name + "' has shape " + shape_string(tensor.shape()) +
                              ", model expects " + shape_string(store.get(name).shape()));
        }
    }
    for (const auto& [name, tensor] : tensors) {
        store.mutable_tensor(name) = tensor.template cast<T>();
    }
}

template void save_checkpoint(const ParamStore<float>&, const std::filesystem::path&, const std::vector<std::string>&);
template void save_checkpoint(const ParamStore<double>&, const std::filesystem::path&, const std::vector<std::string>&);
template ParamStore<float> load_encoder_checkpoint(const std::filesystem::path&, const EncoderConfig&);
template ParamStore<double> load_encoder_checkpoint(const std::filesystem::path&, const EncoderConfig&);
template void load_into(ParamStore<float>&, const std::filesystem::path&);
template void load_into(ParamStore<double>&, const std::filesystem::path&);

}  // namespace lftrank
