#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lowfp/tensor.hpp"

namespace lowfp {

// On-disk layout (all integers little-endian):
//   magic   "FPQT"            4 bytes
//   version u16               currently 1
//   dtype   u8                0=f32 1=f64 2=code4 3=code8
//   ndim    u8
//   shape   ndim x u64
//   payload row-major values; code4 packs two codes per byte, earlier
//           element in the low nibble, odd counts pad the last high nibble
//           with zero.
enum class DType : std::uint8_t { f32 = 0, f64 = 1, code4 = 2, code8 = 3 };

inline constexpr std::uint16_t kTensorFileVersion = 1;

std::string_view to_string(DType d);

struct TensorFile {
    DType dtype = DType::f64;
    std::variant<TensorF, TensorD, Tensor<std::uint8_t>> data;

    const Shape& shape() const;
    /// Widened copy of float payloads; codes are rejected.
    TensorD as_f64() const;
    const Tensor<std::uint8_t>& codes() const;

    static TensorFile from(TensorF t) { return {DType::f32, std::move(t)}; }
    static TensorFile from(TensorD t) { return {DType::f64, std::move(t)}; }
    static TensorFile from_codes(Tensor<std::uint8_t> t, int bits);
};

std::vector<std::uint8_t> encode_tensor(const TensorFile& t);
/// Throws FormatError carrying the failing byte offset.
TensorFile decode_tensor(const std::vector<std::uint8_t>& bytes);

TensorFile read_tensor(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it into place.
void write_tensor(const std::filesystem::path& path, const TensorFile& t);

/// Atomic text write (temp file + rename).
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace lowfp
