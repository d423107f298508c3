#include "volta/checkpoint.hpp"

#include <array>
#include <bit>
#include <string>

namespace volta {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'V', 'V', 'C', 'K'};

std::uint8_t role_id(std::string_view role)
{
    if (role == "weight") return 1;
    if (role == "bias") return 2;
    if (role == "gamma") return 3;
    if (role == "beta") return 4;
    if (role == "running_mean") return 5;
    if (role == "running_var") return 6;
    throw Error("unknown tensor role " + std::string(role));
}

class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    void patch_u32(std::size_t at, std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i) out_[at + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
    }
    std::size_t size() const { return out_.size(); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint8_t u8() { return need(1)[0]; }
    std::uint32_t u32()
    {
        const auto b = need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
        return v;
    }
    std::uint64_t u64()
    {
        const auto b = need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::span<const std::uint8_t> take(std::size_t n) { return need(n); }

    /// A u32 element count, rejected when the rest of the input cannot hold
    /// that many elements of at least `min_bytes` each.
    std::size_t count(std::size_t min_bytes)
    {
        const std::size_t n = u32();
        if (n > remaining() / min_bytes) {
            throw CheckpointError(CheckpointError::Kind::truncated_blob, "checkpoint ends inside its header");
        }
        return n;
    }
    std::size_t remaining() const { return in_.size() - pos_; }
    std::size_t position() const { return pos_; }

private:
    std::span<const std::uint8_t> need(std::size_t n)
    {
        if (remaining() < n) {
            throw CheckpointError(CheckpointError::Kind::truncated_blob,
                                  "checkpoint truncated at byte " + std::to_string(in_.size()) + " (needed " +
                                      std::to_string(pos_ + n) + ")");
        }
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

struct ManifestTensor {
    std::uint8_t role;
    std::vector<std::uint32_t> dims;
    friend bool operator==(const ManifestTensor&, const ManifestTensor&) = default;
};

struct ManifestLayer {
    std::uint8_t kind;
    std::vector<ManifestTensor> tensors;
    friend bool operator==(const ManifestLayer&, const ManifestLayer&) = default;
};

std::vector<ManifestLayer> manifest_of(const ModelGraph& model)
{
    std::vector<ManifestLayer> layers;
    for (const auto& node : model.layers()) layers.push_back({static_cast<std::uint8_t>(kind_of(node)), {}});
    for (const auto& e : model.tensor_entries()) {
        const Shape4 s = e.tensor->shape();
        const std::array<std::size_t, 4> all{s.n, s.c, s.h, s.w};
        ManifestTensor t{role_id(e.role), {}};
        for (std::size_t r = 0; r < e.rank; ++r) t.dims.push_back(static_cast<std::uint32_t>(all[r]));
        layers[e.layer].tensors.push_back(std::move(t));
    }
    return layers;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelGraph& model)
{
    ByteWriter w;
    w.bytes(kMagic);
    w.u8(kCheckpointVersion);
    w.u8(0);
    w.u8(0);
    w.u8(0);
    const std::size_t header_len_at = w.size();
    w.u32(0);
    const std::size_t header_start = w.size();

    const ArchitectureConfig& c = model.config();
    for (std::size_t v : {c.input_channels, c.input_h, c.input_w, c.conv_filters[0], c.conv_filters[1],
                          c.conv_filters[2], c.kernel, c.stride, c.padding, c.pool_kernel, c.pool_stride,
                          c.num_classes}) {
        w.u32(static_cast<std::uint32_t>(v));
    }
    w.f64(c.bn_eps);
    w.f64(c.bn_momentum);
    w.u32(static_cast<std::uint32_t>(model.provenance.size()));
    w.bytes({reinterpret_cast<const std::uint8_t*>(model.provenance.data()), model.provenance.size()});
    w.u32(static_cast<std::uint32_t>(model.class_names.size()));
    for (const auto& name : model.class_names) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes({reinterpret_cast<const std::uint8_t*>(name.data()), name.size()});
    }

    const auto manifest = manifest_of(model);
    w.u32(static_cast<std::uint32_t>(manifest.size()));
    for (const auto& layer : manifest) {
        w.u8(layer.kind);
        w.u8(static_cast<std::uint8_t>(layer.tensors.size()));
        for (const auto& t : layer.tensors) {
            w.u8(t.role);
            w.u8(static_cast<std::uint8_t>(t.dims.size()));
            for (auto d : t.dims) w.u32(d);
        }
    }
    std::uint64_t floats = 0;
    const auto entries = model.tensor_entries();
    for (const auto& e : entries) floats += e.tensor->size();
    w.u64(floats);
    w.patch_u32(header_len_at, static_cast<std::uint32_t>(w.size() - header_start));

    for (const auto& e : entries)
        for (float v : e.tensor->data()) w.f32(v);
    return w.take();
}

ModelGraph deserialize_checkpoint(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 4 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw CheckpointError(CheckpointError::Kind::bad_magic, "not a checkpoint file (bad magic)");
    }
    ByteReader r(bytes);
    (void)r.take(4);
    const std::uint8_t version = r.u8();
    if (version != kCheckpointVersion) {
        throw CheckpointError(CheckpointError::Kind::version_mismatch,
                              "checkpoint version " + std::to_string(version) + " unsupported (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
    }
    (void)r.take(3);
    const std::uint32_t header_len = r.u32();
    const std::size_t header_start = r.position();

    ArchitectureConfig c;
    c.input_channels = r.u32();
    c.input_h = r.u32();
    c.input_w = r.u32();
    for (auto& f : c.conv_filters) f = r.u32();
    c.kernel = r.u32();
    c.stride = r.u32();
    c.padding = r.u32();
    c.pool_kernel = r.u32();
    c.pool_stride = r.u32();
    c.num_classes = r.u32();
    c.bn_eps = r.f64();
    c.bn_momentum = r.f64();
    const std::uint32_t prov_len = r.u32();
    const auto prov = r.take(prov_len);
    std::vector<std::string> class_names(r.count(4));
    for (auto& name : class_names) {
        const auto text = r.take(r.u32());
        name.assign(reinterpret_cast<const char*>(text.data()), text.size());
    }

    std::vector<ManifestLayer> manifest(r.count(2));
    for (auto& layer : manifest) {
        layer.kind = r.u8();
        layer.tensors.resize(r.u8());
        for (auto& t : layer.tensors) {
            t.role = r.u8();
            t.dims.resize(r.u8());
            for (auto& d : t.dims) d = r.u32();
        }
    }
    const std::uint64_t floats = r.u64();
    if (r.position() - header_start != header_len) {
        throw CheckpointError(CheckpointError::Kind::manifest_mismatch,
                              "checkpoint header length field disagrees with header content");
    }

    ModelGraph model = [&] {
        try {
            return ModelGraph(c);
        } catch (const ConfigError& e) {
            throw CheckpointError(CheckpointError::Kind::manifest_mismatch,
                                  std::string("checkpoint architecture is invalid: ") + e.what());
        }
    }();
    model.provenance.assign(reinterpret_cast<const char*>(prov.data()), prov.size());
    if (!class_names.empty() && class_names.size() != c.num_classes) {
        throw CheckpointError(CheckpointError::Kind::manifest_mismatch,
                              "checkpoint lists " + std::to_string(class_names.size()) + " class names for " +
                                  std::to_string(c.num_classes) + " outputs");
    }
    model.class_names = std::move(class_names);

    if (manifest != manifest_of(model)) {
        throw CheckpointError(CheckpointError::Kind::manifest_mismatch,
                              "checkpoint layer manifest does not match its architecture config");
    }
    std::uint64_t expected = 0;
    for (const auto& e : model.tensor_entries()) expected += e.tensor->size();
    if (floats != expected) {
        throw CheckpointError(CheckpointError::Kind::manifest_mismatch,
                              "checkpoint blob declares " + std::to_string(floats) + " floats, manifest needs " +
                                  std::to_string(expected));
    }
    if (r.remaining() < floats * 4) {
        throw CheckpointError(CheckpointError::Kind::truncated_blob,
                              "checkpoint blob truncated: " + std::to_string(r.remaining()) + " bytes for " +
                                  std::to_string(floats) + " floats");
    }
    if (r.remaining() > floats * 4) {
        throw CheckpointError(CheckpointError::Kind::manifest_mismatch,
                              "checkpoint has " + std::to_string(r.remaining() - floats * 4) +
                                  " trailing bytes after the blob");
    }
    for (const auto& e : model.tensor_entries()) {
        auto* t = const_cast<Tensor*>(e.tensor);
        for (auto& v : t->data()) v = r.f32();
    }
    return model;
}

std::size_t save_checkpoint(const ModelGraph& model, const std::filesystem::path& path)
{
    const auto bytes = serialize_checkpoint(model);
    write_file_bytes(path, bytes);
    return bytes.size();
}

ModelGraph load_checkpoint(const std::filesystem::path& path)
{
    return deserialize_checkpoint(read_file_bytes(path));
}

}  // namespace volta
