#pragma once

// Binary tensor files ("GSRT", version 1) and CSV report rows.
//
// Layout, all integers little-endian:
//   magic "GSRT" | u32 version | u8 dtype | u32 metadata length | metadata (UTF-8 JSON)
//   | u8 ndim | u64 dims[ndim] | payload (row-major, little-endian)
// dtype codes: 0 = f64, 1 = f32, 2 = i8. A file may hold several records back to back.

#include "gsr/quant.hpp"
#include "gsr/transform.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace gsr {

enum class DType : std::uint8_t { F64 = 0, F32 = 1, I8 = 2 };

std::size_t dtype_size(DType dtype) noexcept;

struct Tensor {
    DType dtype = DType::F64;
    std::vector<std::uint64_t> dims;
    std::variant<std::vector<double>, std::vector<float>, std::vector<std::int8_t>> data;
    /// Kept as the exact bytes written, so unknown keys survive a round trip.
    std::string metadata = "{}";

    std::uint64_t element_count() const noexcept;
    nlohmann::json metadata_json() const;

    bool operator==(const Tensor&) const = default;
};

inline constexpr std::uint32_t kTensorFormatVersion = 1;

std::vector<std::byte> encode_tensor(const Tensor& tensor);
/// Decodes one record starting at `offset` and advances it past the record.
Tensor decode_tensor(std::span<const std::byte> bytes, std::size_t& offset);

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
void write_tensors(const std::filesystem::path& path, std::span<const Tensor> tensors);
Tensor read_tensor(const std::filesystem::path& path);
std::vector<Tensor> read_tensors(const std::filesystem::path& path);

Tensor tensor_from_matrix(const Matrix& m, DType dtype, const nlohmann::json& metadata = nlohmann::json::object());
/// 2-D f64/f32 tensors only.
Matrix matrix_from_tensor(const Tensor& tensor);

Tensor ortho_to_tensor(const OrthoMatrix& matrix);
OrthoMatrix ortho_from_tensor(const Tensor& tensor);

nlohmann::json spec_to_json(const QuantSpec& spec);
QuantSpec spec_from_json(const nlohmann::json& j);

/// Codes (i8), scales (f64) and zero points (f64, empty when symmetric).
std::vector<Tensor> quantized_to_tensors(const QuantizedTensor& q);
QuantizedTensor quantized_from_tensors(std::span<const Tensor> tensors);

struct ReportRow {
    std::string variant;
    int tensor_id = 0;
    std::string metric;
    double value = 0.0;
    bool operator==(const ReportRow&) const = default;
};

/// Header "variant,tensor_id,metric,value"; values use 17 significant digits.
std::string format_report_csv(std::span<const ReportRow> rows);
void write_report_csv(const std::filesystem::path& path, std::span<const ReportRow> rows);
std::vector<ReportRow> parse_report_csv(const std::string& text);
std::vector<ReportRow> read_report_csv(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames, so failures leave no partial file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace gsr
