#include "gsr/tensor_io.hpp"

#include "gsr/errors.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace gsr {

namespace {

constexpr char kMagic[4] = {'G', 'S', 'R', 'T'};

class ByteWriter {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::byte*>(data);
        out_.insert(out_.end(), p, p + n);
    }
    void u8(std::uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::byte> take() { return std::move(out_); }

private:
    std::vector<std::byte> out_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::byte> bytes, std::size_t offset) : bytes_(bytes), pos_(offset) {}

    std::span<const std::byte> take(std::size_t n) {
        if (n > bytes_.size() - pos_) throw Error(Errc::TruncatedPayload, "record ends before its declared size");
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() {
        const auto s = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(s[i]);
        return v;
    }
    std::uint64_t u64() {
        const auto s = take(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(s[i]);
        return v;
    }
    std::size_t offset() const noexcept { return pos_; }

private:
    std::span<const std::byte> bytes_;
    std::size_t pos_;
};

std::vector<std::byte> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> bytes(raw.size());
    std::memcpy(bytes.data(), raw.data(), raw.size());
    return bytes;
}

void check_metadata(const std::string& metadata) {
    if (!nlohmann::json::accept(metadata)) throw Error(Errc::BadMetadata, "metadata is not valid JSON");
}

std::string quote_csv(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<std::vector<std::string>> split_csv(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            record.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                record.push_back(std::move(field));
                records.push_back(std::move(record));
            }
            field.clear();
            record.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw Error(Errc::TruncatedPayload, "unterminated quoted CSV field");
    if (any || !field.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }
    return records;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::size_t dtype_size(DType dtype) noexcept {
    switch (dtype) {
        case DType::F64: return 8;
        case DType::F32: return 4;
        case DType::I8: return 1;
    }
    return 0;
}

std::uint64_t Tensor::element_count() const noexcept {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

nlohmann::json Tensor::metadata_json() const {
    try {
        return nlohmann::json::parse(metadata);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::BadMetadata, e.what());
    }
}

std::vector<std::byte> encode_tensor(const Tensor& tensor) {
    const std::size_t expected_index = static_cast<std::size_t>(tensor.dtype);
    if (dtype_size(tensor.dtype) == 0 || tensor.data.index() != expected_index) {
        throw Error(Errc::UnsupportedDtype, "dtype code does not match the payload type");
    }
    if (tensor.dims.size() > 255) throw Error(Errc::UnsupportedDtype, "more than 255 dimensions");
    const std::uint64_t count = tensor.element_count();
    const std::size_t stored = std::visit([](const auto& v) { return v.size(); }, tensor.data);
    if (count != stored) throw Error(Errc::ShapeMismatch, "payload length differs from the product of dims");
    check_metadata(tensor.metadata);

    ByteWriter w;
    w.bytes(kMagic, 4);
    w.u32(kTensorFormatVersion);
    w.u8(static_cast<std::uint8_t>(tensor.dtype));
    w.u32(static_cast<std::uint32_t>(tensor.metadata.size()));
    w.bytes(tensor.metadata.data(), tensor.metadata.size());
    w.u8(static_cast<std::uint8_t>(tensor.dims.size()));
    for (auto d : tensor.dims) w.u64(d);
    std::visit(
        [&](const auto& values) {
            using T = typename std::decay_t<decltype(values)>::value_type;
            for (T v : values) {
                if constexpr (std::is_same_v<T, double>) {
                    w.u64(std::bit_cast<std::uint64_t>(v));
                } else if constexpr (std::is_same_v<T, float>) {
                    w.u32(std::bit_cast<std::uint32_t>(v));
                } else {
                    w.u8(static_cast<std::uint8_t>(v));
                }
            }
        },
        tensor.data);
    return w.take();
}

Tensor decode_tensor(std::span<const std::byte> bytes, std::size_t& offset) {
    ByteReader r(bytes, offset);
    const auto magic = r.take(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) throw Error(Errc::BadMagic, "not a GSRT tensor record");
    const std::uint32_t version = r.u32();
    if (version != kTensorFormatVersion) {
        throw Error(Errc::VersionUnsupported, "tensor format version " + std::to_string(version));
    }
    Tensor t;
    const std::uint8_t dtype = r.u8();
    if (dtype > 2) throw Error(Errc::UnsupportedDtype, "dtype code " + std::to_string(dtype));
    t.dtype = static_cast<DType>(dtype);
    const std::uint32_t meta_len = r.u32();
    const auto meta = r.take(meta_len);
    t.metadata.assign(reinterpret_cast<const char*>(meta.data()), meta.size());
    check_metadata(t.metadata);
    const std::uint8_t ndim = r.u8();
    t.dims.resize(ndim);
    std::uint64_t count = 1;
    for (auto& d : t.dims) {
        d = r.u64();
        if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / d) {
            throw Error(Errc::TruncatedPayload, "dims overflow");
        }
        count *= d;
    }
    const std::uint64_t size = dtype_size(t.dtype);
    if (count > (bytes.size() - r.offset()) / size) {
        throw Error(Errc::TruncatedPayload, "payload shorter than dims require");
    }
    const auto payload = r.take(static_cast<std::size_t>(count * size));
    const auto byte_at = [&](std::size_t i) { return static_cast<std::uint64_t>(static_cast<std::uint8_t>(payload[i])); };
    switch (t.dtype) {
        case DType::F64: {
            std::vector<double> v(count);
            for (std::size_t i = 0; i < count; ++i) {
                std::uint64_t bits = 0;
                for (int b = 7; b >= 0; --b) bits = (bits << 8) | byte_at(i * 8 + b);
                v[i] = std::bit_cast<double>(bits);
            }
            t.data = std::move(v);
            break;
        }
        case DType::F32: {
            std::vector<float> v(count);
            for (std::size_t i = 0; i < count; ++i) {
                std::uint32_t bits = 0;
                for (int b = 3; b >= 0; --b) bits = (bits << 8) | static_cast<std::uint32_t>(byte_at(i * 4 + b));
                v[i] = std::bit_cast<float>(bits);
            }
            t.data = std::move(v);
            break;
        }
        case DType::I8: {
            std::vector<std::int8_t> v(count);
            for (std::size_t i = 0; i < count; ++i) v[i] = static_cast<std::int8_t>(byte_at(i));
            t.data = std::move(v);
            break;
        }
    }
    offset = r.offset();
    return t;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes) {
    std::filesystem::path tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::IoFailure, "cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            out.close();
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw Error(Errc::IoFailure, "write to " + tmp.string() + " failed");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(Errc::IoFailure, "cannot rename onto " + path.string());
    }
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
    write_tensors(path, std::span<const Tensor>(&tensor, 1));
}

void write_tensors(const std::filesystem::path& path, std::span<const Tensor> tensors) {
    std::vector<std::byte> all;
    for (const Tensor& t : tensors) {
        const auto bytes = encode_tensor(t);
        all.insert(all.end(), bytes.begin(), bytes.end());
    }
    write_file_atomic(path, all);
}

Tensor read_tensor(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    std::size_t offset = 0;
    return decode_tensor(bytes, offset);
}

std::vector<Tensor> read_tensors(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    std::vector<Tensor> out;
    std::size_t offset = 0;
    do {
        out.push_back(decode_tensor(bytes, offset));
    } while (offset < bytes.size());
    return out;
}

Tensor tensor_from_matrix(const Matrix& m, DType dtype, const nlohmann::json& metadata) {
    Tensor t;
    t.dtype = dtype;
    t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    t.metadata = metadata.dump();
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    switch (dtype) {
        case DType::F64:
            t.data = std::vector<double>(rm.data(), rm.data() + rm.size());
            break;
        case DType::F32: {
            std::vector<float> v(static_cast<std::size_t>(rm.size()));
            for (Eigen::Index i = 0; i < rm.size(); ++i) v[i] = static_cast<float>(rm.data()[i]);
            t.data = std::move(v);
            break;
        }
        case DType::I8:
            throw Error(Errc::UnsupportedDtype, "real matrices are stored as f64 or f32");
    }
    return t;
}

Matrix matrix_from_tensor(const Tensor& tensor) {
    if (tensor.dims.size() != 2) throw Error(Errc::ShapeMismatch, "expected a 2-D tensor");
    const auto rows = static_cast<Eigen::Index>(tensor.dims[0]);
    const auto cols = static_cast<Eigen::Index>(tensor.dims[1]);
    Matrix m(rows, cols);
    std::visit(
        [&](const auto& v) {
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<double>(v[r * cols + c]);
            }
        },
        tensor.data);
    return m;
}

Tensor ortho_to_tensor(const OrthoMatrix& matrix) {
    nlohmann::json meta = {
        {"type", "rotation"},
        {"kind", std::string(kind_name(matrix.kind()))},
        {"block_kind", std::string(block_kind_name(matrix.block_kind()))},
        {"group_size", matrix.group_size()},
        {"scale", matrix.scale()},
    };
    meta["seed"] = matrix.seed() ? nlohmann::json(*matrix.seed()) : nlohmann::json(nullptr);
    Tensor t;
    t.dtype = DType::I8;
    t.dims = {static_cast<std::uint64_t>(matrix.order()), static_cast<std::uint64_t>(matrix.order())};
    t.data = std::vector<std::int8_t>(matrix.signs().data(), matrix.signs().data() + matrix.signs().size());
    t.metadata = meta.dump();
    return t;
}

OrthoMatrix ortho_from_tensor(const Tensor& tensor) {
    if (tensor.dtype != DType::I8 || tensor.dims.size() != 2 || tensor.dims[0] != tensor.dims[1]) {
        throw Error(Errc::ShapeMismatch, "rotation tensors are square i8 sign matrices");
    }
    const auto meta = tensor.metadata_json();
    try {
        const std::string kind = meta.at("kind").get<std::string>();
        MatrixKind mk = MatrixKind::HadamardNatural;
        if (kind == kind_name(MatrixKind::WalshSequency)) {
            mk = MatrixKind::WalshSequency;
        } else if (kind == kind_name(MatrixKind::GroupedBlockDiagonal)) {
            mk = MatrixKind::GroupedBlockDiagonal;
        } else if (kind != kind_name(MatrixKind::HadamardNatural)) {
            throw Error(Errc::BadMetadata, "unknown rotation kind " + kind);
        }
        const BlockKind bk = meta.at("block_kind").get<std::string>() == "walsh" ? BlockKind::Walsh
                                                                                 : BlockKind::HadamardNatural;
        std::optional<std::uint64_t> seed;
        if (meta.contains("seed") && !meta.at("seed").is_null()) seed = meta.at("seed").get<std::uint64_t>();
        const auto n = static_cast<Eigen::Index>(tensor.dims[0]);
        const auto& v = std::get<std::vector<std::int8_t>>(tensor.data);
        SignMatrix signs(n, n);
        std::memcpy(signs.data(), v.data(), v.size());
        return OrthoMatrix(std::move(signs), meta.at("scale").get<double>(), mk, meta.at("group_size").get<int>(), bk,
                           seed);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::BadMetadata, e.what());
    }
}

nlohmann::json spec_to_json(const QuantSpec& spec) {
    nlohmann::json j = {{"bits", spec.bits}, {"group_size", spec.group_size}, {"symmetric", spec.symmetric}};
    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, ClipNone>) {
                j["clip"] = {{"type", "none"}};
            } else if constexpr (std::is_same_v<T, ClipFixed>) {
                j["clip"] = {{"type", "ratio"}, {"ratio", c.ratio}};
            } else {
                j["clip"] = {{"type", "mse"}, {"grid", c.grid}};
            }
        },
        spec.clip);
    return j;
}

QuantSpec spec_from_json(const nlohmann::json& j) {
    try {
        QuantSpec spec;
        spec.bits = j.at("bits").get<int>();
        spec.group_size = j.at("group_size").get<int>();
        spec.symmetric = j.at("symmetric").get<bool>();
        const auto& clip = j.at("clip");
        const std::string type = clip.at("type").get<std::string>();
        if (type == "none") {
            spec.clip = ClipNone{};
        } else if (type == "ratio") {
            spec.clip = ClipFixed{clip.at("ratio").get<double>()};
        } else if (type == "mse") {
            spec.clip = ClipMse{clip.at("grid").get<std::vector<double>>()};
        } else {
            throw Error(Errc::BadMetadata, "unknown clip type " + type);
        }
        spec.validate();
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::BadMetadata, e.what());
    }
}

std::vector<Tensor> quantized_to_tensors(const QuantizedTensor& q) {
    // i8 holds every symmetric code; asymmetric codes are shifted by 2^(bits-1).
    const int offset = q.spec.symmetric ? 0 : (1 << (q.spec.bits - 1));
    Tensor codes;
    codes.dtype = DType::I8;
    codes.dims = {static_cast<std::uint64_t>(q.rows()), static_cast<std::uint64_t>(q.cols())};
    std::vector<std::int8_t> stored(static_cast<std::size_t>(q.codes.size()));
    for (Eigen::Index i = 0; i < q.codes.size(); ++i) stored[i] = static_cast<std::int8_t>(q.codes.data()[i] - offset);
    codes.data = std::move(stored);
    codes.metadata = nlohmann::json{{"type", "quantized_codes"}, {"spec", spec_to_json(q.spec)}, {"code_offset", offset}}
                         .dump();

    Tensor scales = tensor_from_matrix(q.scales, DType::F64, {{"type", "quantized_scales"}});
    Tensor zeros;
    if (q.spec.symmetric) {
        zeros.dtype = DType::F64;
        zeros.dims = {0, 0};
        zeros.data = std::vector<double>{};
        zeros.metadata = nlohmann::json{{"type", "quantized_zero_points"}}.dump();
    } else {
        zeros = tensor_from_matrix(q.zero_points.cast<double>(), DType::F64, {{"type", "quantized_zero_points"}});
    }
    return {codes, scales, zeros};
}

QuantizedTensor quantized_from_tensors(std::span<const Tensor> tensors) {
    if (tensors.size() != 3) throw Error(Errc::ShapeMismatch, "a quantized tensor is stored as three records");
    const Tensor& codes = tensors[0];
    if (codes.dtype != DType::I8 || codes.dims.size() != 2) throw Error(Errc::UnsupportedDtype, "codes must be 2-D i8");
    const auto meta = codes.metadata_json();
    QuantizedTensor q;
    try {
        q.spec = spec_from_json(meta.at("spec"));
        const int offset = meta.at("code_offset").get<int>();
        const auto rows = static_cast<Eigen::Index>(codes.dims[0]);
        const auto cols = static_cast<Eigen::Index>(codes.dims[1]);
        const auto& v = std::get<std::vector<std::int8_t>>(codes.data);
        q.codes.resize(rows, cols);
        for (Eigen::Index i = 0; i < q.codes.size(); ++i) q.codes.data()[i] = static_cast<std::int16_t>(v[i] + offset);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::BadMetadata, e.what());
    }
    q.scales = matrix_from_tensor(tensors[1]);
    if (!q.spec.symmetric) {
        const Matrix zeros = matrix_from_tensor(tensors[2]);
        q.zero_points = zeros.array().round().cast<std::int32_t>().matrix();
    }
    const int groups = q.cols() / q.spec.group_length(q.cols());
    if (q.scales.rows() != q.rows() || q.scales.cols() != groups ||
        (!q.spec.symmetric && (q.zero_points.rows() != q.rows() || q.zero_points.cols() != groups))) {
        throw Error(Errc::ShapeMismatch, "scale/zero-point shape does not match the codes");
    }
    q.check_code_range();
    return q;
}

std::string format_report_csv(std::span<const ReportRow> rows) {
    std::string out = "variant,tensor_id,metric,value\r\n";
    for (const ReportRow& row : rows) {
        out += quote_csv(row.variant) + ',' + std::to_string(row.tensor_id) + ',' + quote_csv(row.metric) + ',' +
               format_double(row.value) + "\r\n";
    }
    return out;
}

void write_report_csv(const std::filesystem::path& path, std::span<const ReportRow> rows) {
    const std::string text = format_report_csv(rows);
    write_file_atomic(path, std::as_bytes(std::span<const char>(text.data(), text.size())));
}

std::vector<ReportRow> parse_report_csv(const std::string& text) {
    const auto records = split_csv(text);
    if (records.empty() || records[0] != std::vector<std::string>{"variant", "tensor_id", "metric", "value"}) {
        throw Error(Errc::BadMetadata, "CSV header must be variant,tensor_id,metric,value");
    }
    std::vector<ReportRow> rows;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (rec.size() != 4) throw Error(Errc::BadMetadata, "CSV row " + std::to_string(i) + " has wrong arity");
        ReportRow row;
        row.variant = rec[0];
        row.metric = rec[2];
        const auto id = std::from_chars(rec[1].data(), rec[1].data() + rec[1].size(), row.tensor_id);
        if (id.ec != std::errc{}) throw Error(Errc::BadMetadata, "bad tensor_id " + rec[1]);
        char* end = nullptr;
        row.value = std::strtod(rec[3].c_str(), &end);
        if (end == rec[3].c_str()) throw Error(Errc::BadMetadata, "bad value " + rec[3]);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<ReportRow> read_report_csv(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return parse_report_csv(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace gsr
