#include "lowfp/tensorio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lowfp/error.hpp"

namespace lowfp {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

std::string_view to_string(DType d) {
    switch (d) {
        case DType::f32: return "f32";
        case DType::f64: return "f64";
        case DType::code4: return "code4";
        case DType::code8: return "code8";
    }
    return "unknown";
}

const Shape& TensorFile::shape() const {
    return std::visit([](const auto& t) -> const Shape& { return t.shape(); }, data);
}

TensorD TensorFile::as_f64() const {
    if (const auto* f = std::get_if<TensorF>(&data)) return tensor_cast<double>(*f);
    if (const auto* d = std::get_if<TensorD>(&data)) return *d;
    throw InputError("expected a floating-point tensor, got " + std::string(to_string(dtype)));
}

const Tensor<std::uint8_t>& TensorFile::codes() const {
    if (const auto* c = std::get_if<Tensor<std::uint8_t>>(&data)) return *c;
    throw InputError("expected a code tensor, got " + std::string(to_string(dtype)));
}

TensorFile TensorFile::from_codes(Tensor<std::uint8_t> t, int bits) {
    if (bits == 4) {
        for (auto c : t.values()) {
            if (c > 0x0f) throw InputError("code4 tensor holds a value wider than 4 bits");
        }
        return {DType::code4, std::move(t)};
    }
    if (bits == 8) return {DType::code8, std::move(t)};
    throw InputError("code tensors are 4 or 8 bits wide");
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(std::string("truncated ") + what + ": expected " + std::to_string(n) +
                                  " bytes, found " + std::to_string(bytes_.size() - pos_),
                              pos_);
        }
    }

    std::size_t pos() const { return pos_; }
    const std::uint8_t* here() const { return bytes_.data() + pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

std::size_t payload_bytes(DType d, std::size_t n) {
    switch (d) {
        case DType::f32: return n * 4;
        case DType::f64: return n * 8;
        case DType::code4: return (n + 1) / 2;
        case DType::code8: return n;
    }
    return 0;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const TensorFile& t) {
    const Shape& shape = t.shape();
    if (shape.size() > 255) throw InputError("tensor rank exceeds 255");
    std::vector<std::uint8_t> out = {'F', 'P', 'Q', 'T'};
    put<std::uint16_t>(out, kTensorFileVersion);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
    for (std::size_t d : shape) put<std::uint64_t>(out, d);
    switch (t.dtype) {
        case DType::f32: {
            const auto& v = std::get<TensorF>(t.data).values();
            for (float x : v) put(out, x);
            break;
        }
        case DType::f64: {
            const auto& v = std::get<TensorD>(t.data).values();
            for (double x : v) put(out, x);
            break;
        }
        case DType::code8: {
            const auto& v = std::get<Tensor<std::uint8_t>>(t.data).values();
            out.insert(out.end(), v.begin(), v.end());
            break;
        }
        case DType::code4: {
            const auto& v = std::get<Tensor<std::uint8_t>>(t.data).values();
            for (std::size_t i = 0; i < v.size(); i += 2) {
                const std::uint8_t lo = v[i] & 0x0f;
                const std::uint8_t hi = i + 1 < v.size() ? (v[i + 1] & 0x0f) : 0;
                out.push_back(static_cast<std::uint8_t>(lo | (hi << 4)));
            }
            break;
        }
    }
    return out;
}

TensorFile decode_tensor(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    r.need(4, "magic");
    if (std::memcmp(r.here(), "FPQT", 4) != 0) throw FormatError("bad magic, expected \"FPQT\"", 0);
    r.get<std::uint32_t>("magic");
    const std::size_t version_at = r.pos();
    const auto version = r.get<std::uint16_t>("version");
    if (version != kTensorFileVersion) {
        throw FormatError("unsupported version " + std::to_string(version), version_at);
    }
    const std::size_t dtype_at = r.pos();
    const auto raw_dtype = r.get<std::uint8_t>("dtype");
    if (raw_dtype > 3) throw FormatError("unknown dtype " + std::to_string(raw_dtype), dtype_at);
    const auto dtype = static_cast<DType>(raw_dtype);
    const auto ndim = r.get<std::uint8_t>("rank");
    Shape shape;
    std::size_t n = 1;
    for (unsigned i = 0; i < ndim; ++i) {
        const auto d = r.get<std::uint64_t>("shape");
        shape.push_back(static_cast<std::size_t>(d));
        n *= static_cast<std::size_t>(d);
    }
    const std::size_t expected = payload_bytes(dtype, n);
    if (r.remaining() != expected) {
        throw FormatError("payload length mismatch: expected " + std::to_string(expected) + " bytes, found " +
                              std::to_string(r.remaining()),
                          r.pos());
    }
    const std::uint8_t* p = r.here();
    switch (dtype) {
        case DType::f32: {
            std::vector<float> v(n);
            std::memcpy(v.data(), p, expected);
            return {dtype, TensorF(std::move(shape), std::move(v))};
        }
        case DType::f64: {
            std::vector<double> v(n);
            std::memcpy(v.data(), p, expected);
            return {dtype, TensorD(std::move(shape), std::move(v))};
        }
        case DType::code8:
            return {dtype, Tensor<std::uint8_t>(std::move(shape), std::vector<std::uint8_t>(p, p + n))};
        case DType::code4: {
            std::vector<std::uint8_t> v(n);
            for (std::size_t i = 0; i < n; ++i) v[i] = (p[i / 2] >> ((i % 2) * 4)) & 0x0f;
            if (n % 2 == 1 && (p[n / 2] >> 4) != 0) {
                throw FormatError("nonzero padding nibble in code4 payload", r.pos() + n / 2);
            }
            return {dtype, Tensor<std::uint8_t>(std::move(shape), std::move(v))};
        }
    }
    throw FormatError("unknown dtype", dtype_at);
}

TensorFile read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open tensor file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_tensor(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.detail(), e.offset());
    }
}

namespace {

void write_bytes_atomic(const std::filesystem::path& path, const char* data, std::size_t size) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write " + tmp.string());
        out.write(data, static_cast<std::streamsize>(size));
        if (!out) throw InputError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const TensorFile& t) {
    const auto bytes = encode_tensor(t);
    write_bytes_atomic(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_bytes_atomic(path, text.data(), text.size());
}

}  // namespace lowfp
