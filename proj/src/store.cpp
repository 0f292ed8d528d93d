#include "bc/store.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <vector>

namespace bc {

namespace {

constexpr char kMagic[4] = {'B', 'C', 'M', 'P'};

std::array<std::uint64_t, 256> make_crc_table() {
    std::array<std::uint64_t, 256> table{};
    constexpr std::uint64_t poly = 0x42F0E1EBA9EA3693ULL; // ECMA-182
    for (std::uint64_t i = 0; i < 256; ++i) {
        std::uint64_t crc = i << 56;
        for (int b = 0; b < 8; ++b)
            crc = (crc & 0x8000000000000000ULL) ? (crc << 1) ^ poly : crc << 1;
        table[i] = crc;
    }
    return table;
}

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    const std::vector<unsigned char>& data() const { return buf_; }

private:
    std::vector<unsigned char> buf_;
};

class Reader {
public:
    Reader(const unsigned char* p, std::size_t n, std::string path)
        : p_(p), n_(n), path_(std::move(path)) {}

    std::uint8_t u8() { return take(1)[0]; }
    std::uint32_t u32() {
        const unsigned char* b = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        const unsigned char* b = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    const unsigned char* take(std::size_t n) {
        if (pos_ + n > n_) throw IoError("truncated model file: " + path_);
        const unsigned char* p = p_ + pos_;
        pos_ += n;
        return p;
    }

private:
    const unsigned char* p_;
    std::size_t n_, pos_ = 0;
    std::string path_;
};

} // namespace

std::uint64_t crc64(const unsigned char* data, std::size_t n) {
    static const auto table = make_crc_table();
    std::uint64_t crc = 0;
    for (std::size_t i = 0; i < n; ++i)
        crc = table[((crc >> 56) ^ data[i]) & 0xFF] ^ (crc << 8);
    return crc;
}

void save_model(const Network& net, const std::string& path, const ModelMask* masks) {
    Writer w;
    w.bytes(kMagic, 4);
    w.u32(kModelFormatVersion);
    w.u8(net.prior == PriorKind::GNJ ? 0 : 1);
    std::string arch = net.arch.to_string();
    w.u32(static_cast<std::uint32_t>(arch.size()));
    w.bytes(arch.data(), arch.size());
    w.f64(net.tau0);
    w.u32(static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& l : net.layers) {
        auto params = static_cast<const Layer&>(*l).params();
        w.u32(static_cast<std::uint32_t>(params.size()));
        for (const Tensor* t : params) {
            w.u32(static_cast<std::uint32_t>(t->rank()));
            for (std::size_t d : t->shape) w.u64(d);
            for (double v : t->data) w.f64(v);
        }
    }
    w.u8(masks ? 1 : 0);
    if (masks) {
        for (const auto& m : *masks) {
            w.u64(m.size());
            w.bytes(m.data(), m.size());
        }
    }
    std::uint64_t crc = crc64(w.data().data(), w.data().size());

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(w.data().data()),
              static_cast<std::streamsize>(w.data().size()));
    for (int i = 0; i < 8; ++i) {
        char b = static_cast<char>(crc >> (8 * i));
        out.write(&b, 1);
    }
    if (!out) throw IoError("write failed: " + path);
}

LoadedModel load_model(const std::string& path, std::size_t max_bytes) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open " + path);
    auto size = static_cast<std::size_t>(in.tellg());
    if (size > max_bytes)
        throw IoError("model file exceeds size cap: " + path + " (" +
                      std::to_string(size) + " bytes)");
    if (size < 12) throw IoError("truncated model file: " + path);
    std::vector<unsigned char> buf(size);
    in.seekg(0);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size)))
        throw IoError("read failed: " + path);

    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) stored |= std::uint64_t(buf[size - 8 + i]) << (8 * i);
    if (crc64(buf.data(), size - 8) != stored)
        throw IoError("checksum mismatch in model file: " + path);

    Reader r(buf.data(), size - 8, path);
    if (std::memcmp(r.take(4), kMagic, 4) != 0)
        throw IoError("bad magic in model file: " + path);
    std::uint32_t version = r.u32();
    if (version != kModelFormatVersion)
        throw IoError("unsupported model format version " + std::to_string(version) +
                      " in " + path);
    std::uint8_t prior = r.u8();
    if (prior > 1) throw IoError("bad prior tag in model file: " + path);
    std::uint32_t arch_len = r.u32();
    std::string arch(reinterpret_cast<const char*>(r.take(arch_len)), arch_len);
    double tau0 = r.f64();

    LoadedModel lm;
    lm.net = make_network(Arch::parse(arch), prior == 0 ? PriorKind::GNJ : PriorKind::GHS,
                          tau0);
    std::uint32_t n_layers = r.u32();
    if (n_layers != lm.net.layers.size())
        throw IoError("layer count does not match architecture in " + path);
    for (auto& l : lm.net.layers) {
        auto params = l->params();
        std::uint32_t n_params = r.u32();
        if (n_params != params.size())
            throw IoError("parameter count does not match architecture in " + path);
        for (Tensor* t : params) {
            std::uint32_t rank = r.u32();
            if (rank != t->rank())
                throw IoError("parameter rank does not match architecture in " + path);
            for (std::size_t d = 0; d < rank; ++d)
                if (r.u64() != t->shape[d])
                    throw IoError("parameter shape does not match architecture in " + path);
            for (double& v : t->data) v = r.f64();
        }
    }
    if (r.u8() == 1) {
        ModelMask masks;
        for (const auto& l : lm.net.layers) {
            std::uint64_t len = r.u64();
            if (len != l->groups())
                throw IoError("mask length does not match architecture in " + path);
            const unsigned char* p = r.take(len);
            masks.emplace_back(p, p + len);
        }
        lm.masks = std::move(masks);
    }
    return lm;
}

} // namespace bc
