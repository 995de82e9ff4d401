#include "gsr/errors.hpp"
#include "gsr/random.hpp"
#include "gsr/tensor_io.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace gsr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("gsr_io_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)) + "_" +
                std::to_string(derive_seed(static_cast<std::uint64_t>(std::time(nullptr)), 7)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::vector<std::byte> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> out(raw.size());
    std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

void put_file(const fs::path& p, std::span<const std::byte> bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

template <typename Fn>
Errc error_code_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return Errc::IoFailure;
}

}  // namespace

TEST_CASE("2x2 f64 identity has the documented byte layout") {
    TempDir dir;
    const Tensor t = tensor_from_matrix(Matrix::Identity(2, 2), DType::F64);
    const fs::path p = dir.path / "eye.gsrt";
    write_tensor(p, t);
    const auto bytes = file_bytes(p);
    const std::size_t len = t.metadata.size();
    REQUIRE(bytes.size() == 4 + 4 + 1 + (4 + len) + 1 + 16 + 32);

    // Independent hand assembly of the expected file.
    std::vector<unsigned char> expected{'G', 'S', 'R', 'T', 1, 0, 0, 0, 0};
    for (int i = 0; i < 4; ++i) expected.push_back(static_cast<unsigned char>((len >> (8 * i)) & 0xff));
    for (char c : t.metadata) expected.push_back(static_cast<unsigned char>(c));
    expected.push_back(2);
    for (int d = 0; d < 2; ++d) {
        expected.push_back(2);
        for (int i = 1; i < 8; ++i) expected.push_back(0);
    }
    const std::vector<unsigned char> one{0, 0, 0, 0, 0, 0, 0xf0, 0x3f};
    const std::vector<unsigned char> zero(8, 0);
    for (const auto* v : {&one, &zero, &zero, &one}) expected.insert(expected.end(), v->begin(), v->end());
    REQUIRE(expected.size() == bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) CHECK(static_cast<unsigned char>(bytes[i]) == expected[i]);

    const Tensor back = read_tensor(p);
    CHECK(back == t);
    CHECK(matrix_from_tensor(back) == Matrix::Identity(2, 2));
    CHECK_FALSE(fs::exists(dir.path / "eye.gsrt.partial"));
}

TEST_CASE("round trips are bit-exact for every dtype") {
    TempDir dir;
    Rng rng(8);
    SUBCASE("f32") {
        Tensor t;
        t.dtype = DType::F32;
        t.dims = {3, 5, 7};
        std::vector<float> v(105);
        for (auto& x : v) x = static_cast<float>(rng.normal() * 1e3);
        v[0] = std::numeric_limits<float>::denorm_min();
        v[1] = -0.0f;
        v[2] = std::numeric_limits<float>::infinity();
        t.data = v;
        write_tensor(dir.path / "f.gsrt", t);
        const Tensor back = read_tensor(dir.path / "f.gsrt");
        const auto& bv = std::get<std::vector<float>>(back.data);
        CHECK(std::memcmp(bv.data(), v.data(), v.size() * sizeof(float)) == 0);
        CHECK(back.dims == t.dims);
    }
    SUBCASE("f64 with NaN payload") {
        Matrix m(4, 3);
        for (int i = 0; i < 12; ++i) m.data()[i] = rng.normal();
        m(1, 1) = std::numeric_limits<double>::quiet_NaN();
        const Tensor t = tensor_from_matrix(m, DType::F64);
        write_tensor(dir.path / "d.gsrt", t);
        const Matrix back = matrix_from_tensor(read_tensor(dir.path / "d.gsrt"));
        CHECK(std::memcmp(back.data(), m.data(), sizeof(double) * 12) == 0);
    }
    SUBCASE("i8 and zero-sized tensors") {
        Tensor t;
        t.dtype = DType::I8;
        t.dims = {256};
        std::vector<std::int8_t> v(256);
        for (int i = 0; i < 256; ++i) v[i] = static_cast<std::int8_t>(i - 128);
        t.data = v;
        Tensor empty;
        empty.dims = {0, 0};
        empty.data = std::vector<double>{};
        const std::vector<Tensor> both{t, empty};
        write_tensors(dir.path / "multi.gsrt", both);
        CHECK(read_tensors(dir.path / "multi.gsrt") == both);
        CHECK(read_tensor(dir.path / "multi.gsrt") == t);
    }
    SUBCASE("f32 matrix via tensor_from_matrix") {
        const Matrix m = Matrix::Constant(2, 3, 0.1);
        const Matrix back = matrix_from_tensor(tensor_from_matrix(m, DType::F32));
        CHECK(back(0, 0) == static_cast<double>(0.1f));
        CHECK_THROWS_AS(tensor_from_matrix(m, DType::I8), Error);
    }
}

TEST_CASE("metadata with unknown keys is preserved verbatim") {
    TempDir dir;
    Tensor t = tensor_from_matrix(Matrix::Ones(1, 1), DType::F64);
    t.metadata = R"({"zeta": [1, 2,  3], "kind":"custom", "nested": {"a": null}})";
    write_tensor(dir.path / "m.gsrt", t);
    const Tensor back = read_tensor(dir.path / "m.gsrt");
    CHECK(back.metadata == t.metadata);
    CHECK(back.metadata_json()["zeta"][2] == 3);
}

TEST_CASE("corrupt inputs") {
    TempDir dir;
    const Tensor t = tensor_from_matrix(Matrix::Identity(3, 3), DType::F64);
    const auto good = encode_tensor(t);

    SUBCASE("truncation anywhere fails without data") {
        for (std::size_t cut = 0; cut < good.size(); ++cut) {
            put_file(dir.path / "t.gsrt", std::span(good).first(cut));
            CHECK(error_code_of([&] { read_tensor(dir.path / "t.gsrt"); }) == Errc::TruncatedPayload);
        }
    }
    SUBCASE("bad magic") {
        auto bad = good;
        bad[0] = std::byte{'X'};
        put_file(dir.path / "b.gsrt", bad);
        CHECK(error_code_of([&] { read_tensor(dir.path / "b.gsrt"); }) == Errc::BadMagic);
    }
    SUBCASE("unsupported version") {
        auto bad = good;
        bad[4] = std::byte{2};
        put_file(dir.path / "v.gsrt", bad);
        CHECK(error_code_of([&] { read_tensor(dir.path / "v.gsrt"); }) == Errc::VersionUnsupported);
    }
    SUBCASE("unknown dtype") {
        auto bad = good;
        bad[8] = std::byte{7};
        put_file(dir.path / "d.gsrt", bad);
        CHECK(error_code_of([&] { read_tensor(dir.path / "d.gsrt"); }) == Errc::UnsupportedDtype);
    }
    SUBCASE("metadata that is not JSON") {
        Tensor m = t;
        m.metadata = "{not json";
        CHECK(error_code_of([&] { encode_tensor(m); }) == Errc::BadMetadata);
    }
    SUBCASE("missing file") {
        CHECK(error_code_of([&] { read_tensor(dir.path / "nope.gsrt"); }) == Errc::IoFailure);
    }
    SUBCASE("data/dims disagreement") {
        Tensor m = t;
        m.dims = {4, 4};
        CHECK_THROWS_AS(encode_tensor(m), Error);
    }
    SUBCASE("unwritable destination leaves nothing behind") {
        CHECK(error_code_of([&] { write_tensor(dir.path / "missing_dir" / "x.gsrt", t); }) == Errc::IoFailure);
        CHECK_FALSE(fs::exists(dir.path / "missing_dir"));
    }
}

TEST_CASE("orthogonal matrices survive the file round trip") {
    TempDir dir;
    for (const OrthoMatrix& m : {gsr::gsr(8, 4), randomize_signs(hadamard_sylvester(16), 3),
                                 walsh_from_hadamard(hadamard_sylvester(32)),
                                 gsr::gsr(16, 4, {.base = BlockKind::HadamardNatural, .seed = 2})}) {
        write_tensor(dir.path / "r.gsrt", ortho_to_tensor(m));
        const Tensor raw = read_tensor(dir.path / "r.gsrt");
        CHECK(raw.dtype == DType::I8);
        CHECK(raw.metadata_json()["scale"].get<double>() == m.scale());
        const OrthoMatrix back = ortho_from_tensor(raw);
        CHECK(back == m);
        const Matrix d = back.dense();
        CHECK((d * d.transpose() - Matrix::Identity(d.rows(), d.cols())).cwiseAbs().maxCoeff() < 1e-12);
    }
    Tensor not_ortho = tensor_from_matrix(Matrix::Identity(2, 2), DType::F64);
    CHECK_THROWS_AS(ortho_from_tensor(not_ortho), Error);
}

TEST_CASE("quantized tensors round trip") {
    TempDir dir;
    Rng rng(4);
    Matrix w(6, 32);
    for (int i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
    for (const QuantSpec& spec :
         {QuantSpec{.bits = 2, .group_size = 16, .clip = ClipMse{default_mse_grid()}},
          QuantSpec{.bits = 8, .group_size = 8}, QuantSpec{.bits = 4, .group_size = 0, .symmetric = true, .clip = ClipFixed{0.9}},
          QuantSpec{.bits = 8, .group_size = 32, .symmetric = true}}) {
        const QuantizedTensor q = rtn_quantize(w, spec);
        const auto records = quantized_to_tensors(q);
        REQUIRE(records.size() == 3);
        write_tensors(dir.path / "q.gsrt", records);
        const QuantizedTensor back = quantized_from_tensors(read_tensors(dir.path / "q.gsrt"));
        CHECK(back == q);
        CHECK(dequantize(back) == dequantize(q));
        CHECK(spec_from_json(spec_to_json(spec)) == spec);
    }
}

TEST_CASE("report CSV") {
    std::vector<ReportRow> rows;
    for (const char* v : {"gh", "gsr"}) {
        for (int t = 0; t < 3; ++t) {
            for (const char* m : {"max_abs", "mse", "proxy"}) rows.push_back({v, t, m, std::sqrt(2.0) * (t + 1) / 3.0});
        }
    }
    const std::string text = format_report_csv(rows);
    CHECK(text.rfind("variant,tensor_id,metric,value\r\n", 0) == 0);
    std::size_t lines = 0;
    for (std::size_t i = 0; i + 1 < text.size(); ++i) lines += text[i] == '\r' && text[i + 1] == '\n';
    CHECK(lines == 2 * 3 * 3 + 1);

    const auto parsed = parse_report_csv(text);
    CHECK(parsed == rows);

    SUBCASE("quoting") {
        const std::vector<ReportRow> odd{{"a,\"b\"", 1, "mse", -1.5e-300}};
        const std::string t = format_report_csv(odd);
        CHECK(t.find("\"a,\"\"b\"\"\"") != std::string::npos);
        CHECK(parse_report_csv(t) == odd);
    }
    SUBCASE("17 significant digits") {
        const std::vector<ReportRow> one{{"x", 0, "mse", 0.1}};
        CHECK(format_report_csv(one).find("0.10000000000000001") != std::string::npos);
    }
    SUBCASE("file round trip") {
        TempDir dir;
        write_report_csv(dir.path / "r.csv", rows);
        CHECK(read_report_csv(dir.path / "r.csv") == rows);
    }
    CHECK_THROWS_AS(parse_report_csv("a,b\r\n"), Error);
    CHECK_THROWS_AS(parse_report_csv("variant,tensor_id,metric,value\r\nx,notanint,mse,1\r\n"), Error);
}
