#include "gsr/errors.hpp"
#include "gsr/random.hpp"
#include "gsr/transform.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace gsr;

namespace {

// Independent oracle: H_2n = H_2 (x) H_n by explicit Kronecker products.
Eigen::MatrixXi kronecker_hadamard(int n) {
    Eigen::MatrixXi h(1, 1);
    h(0, 0) = 1;
    Eigen::Matrix2i h2;
    h2 << 1, 1, 1, -1;
    while (h.rows() < n) {
        const auto m = h.rows();
        Eigen::MatrixXi next(2 * m, 2 * m);
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) next.block(a * m, b * m, m, m) = h2(a, b) * h;
        }
        h = next;
    }
    return h;
}

int count_flips(const Eigen::RowVectorXi& row) {
    int flips = 0;
    for (Eigen::Index j = 1; j < row.size(); ++j) flips += row(j) != row(j - 1);
    return flips;
}

std::vector<int> sequency_sort_permutation(const Eigen::MatrixXi& h) {
    std::vector<int> perm(static_cast<std::size_t>(h.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    std::sort(perm.begin(), perm.end(), [&](int a, int b) { return count_flips(h.row(a)) < count_flips(h.row(b)); });
    return perm;
}

std::vector<int> sequencies(const OrthoMatrix& m) {
    std::vector<int> s;
    for (int i = 0; i < m.order(); ++i) {
        s.push_back(row_sequency({m.signs().data() + static_cast<std::ptrdiff_t>(i) * m.order(),
                                  static_cast<std::size_t>(m.order())}));
    }
    return s;
}

double dense_residual(const OrthoMatrix& m) {
    const Eigen::MatrixXd r = m.dense();
    return (r * r.transpose() - Eigen::MatrixXd::Identity(m.order(), m.order())).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("hadamard_sylvester order 2 and 4") {
    const OrthoMatrix h2 = hadamard_sylvester(2);
    CHECK(h2.signs()(0, 0) == 1);
    CHECK(h2.signs()(0, 1) == 1);
    CHECK(h2.signs()(1, 0) == 1);
    CHECK(h2.signs()(1, 1) == -1);
    CHECK(h2.scale() == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(h2.kind() == MatrixKind::HadamardNatural);

    const OrthoMatrix h4 = hadamard_sylvester(4);
    SignMatrix expected(4, 4);
    expected << 1, 1, 1, 1, 1, -1, 1, -1, 1, 1, -1, -1, 1, -1, -1, 1;
    CHECK(h4.signs() == expected);
}

TEST_CASE("hadamard_sylvester matches the Kronecker oracle and has a +1 first row and column") {
    for (int n = 2; n <= 256; n *= 2) {
        const OrthoMatrix h = hadamard_sylvester(n);
        CHECK(h.signs().cast<int>() == kronecker_hadamard(n));
        CHECK((h.signs().row(0).array() == 1).all());
        CHECK((h.signs().col(0).array() == 1).all());
    }
}

TEST_CASE("hadamard_sylvester order 8 sequencies are 0,7,3,4,1,6,2,5") {
    CHECK(sequencies(hadamard_sylvester(8)) == std::vector<int>{0, 7, 3, 4, 1, 6, 2, 5});
}

TEST_CASE("hadamard_sylvester rejects bad orders") {
    for (int n : {0, 3, 6, 12, 100}) {
        try {
            hadamard_sylvester(n);
            FAIL("expected NonPowerOfTwo");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::NonPowerOfTwo);
        }
    }
    try {
        hadamard_sylvester(1 << 17);
        FAIL("expected OrderTooLarge");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::OrderTooLarge);
    }
}

TEST_CASE("row_sequency") {
    const std::vector<std::int8_t> constant{1, 1, 1, 1};
    const std::vector<std::int8_t> alternating{1, -1, 1, -1};
    CHECK(row_sequency(constant) == 0);
    CHECK(row_sequency(alternating) == 3);
    const OrthoMatrix h8 = hadamard_sylvester(8);
    CHECK(row_sequency({h8.signs().data() + 3 * 8, 8}) == 4);

    CHECK_THROWS_AS(row_sequency({}), Error);
    try {
        row_sequency({});
    } catch (const Error& e) {
        CHECK(e.code() == Errc::EmptyRow);
    }
    const std::vector<std::int8_t> bad{1, 0, 1};
    CHECK_THROWS_AS(row_sequency(bad), Error);
}

TEST_CASE("closed-form natural sequency gray_to_binary(bit_reverse(i)) matches counting") {
    for (int bits = 1; bits <= 10; ++bits) {
        const int n = 1 << bits;
        const auto s = sequencies(hadamard_sylvester(n));
        for (int i = 0; i < n; ++i) CHECK(natural_row_sequency(static_cast<std::uint32_t>(i), bits) == s[i]);
    }
}

TEST_CASE("gray code helpers are inverse") {
    for (std::uint32_t v = 0; v < 4096; ++v) {
        CHECK(gray_to_binary(binary_to_gray(v)) == v);
        CHECK(bit_reverse(bit_reverse(v, 12), 12) == v);
    }
}

TEST_CASE("walsh_from_hadamard permutation examples") {
    CHECK(walsh_permutation(8) == std::vector<int>{0, 4, 6, 2, 3, 7, 5, 1});
    CHECK(walsh_permutation(2) == std::vector<int>{0, 1});
    CHECK(walsh_permutation(4) == std::vector<int>{0, 2, 3, 1});

    const OrthoMatrix w4 = walsh_from_hadamard(hadamard_sylvester(4));
    SignMatrix expected(4, 4);
    expected << 1, 1, 1, 1, 1, 1, -1, -1, 1, -1, -1, 1, 1, -1, 1, -1;
    CHECK(w4.signs() == expected);
    CHECK(w4.kind() == MatrixKind::WalshSequency);

    const OrthoMatrix w2 = walsh_from_hadamard(hadamard_sylvester(2));
    CHECK(w2.signs() == hadamard_sylvester(2).signs());
}

TEST_CASE("walsh permutation equals the sequency-sorted Kronecker rows") {
    for (int n = 2; n <= 1024; n *= 2) {
        CHECK(walsh_permutation(n) == sequency_sort_permutation(kronecker_hadamard(n)));
        const auto s = sequencies(walsh_from_hadamard(hadamard_sylvester(n)));
        for (int k = 0; k < n; ++k) CHECK(s[k] == k);
    }
}

TEST_CASE("walsh matrix is symmetric") {
    for (int n = 2; n <= 256; n *= 2) {
        const OrthoMatrix w = walsh_from_hadamard(hadamard_sylvester(n));
        CHECK(w.signs() == SignMatrix(w.signs().transpose()));
    }
}

TEST_CASE("walsh_from_hadamard rejects non-Hadamard inputs") {
    const OrthoMatrix w = walsh_from_hadamard(hadamard_sylvester(8));
    try {
        walsh_from_hadamard(w);
        FAIL("expected NotHadamard");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::NotHadamard);
    }
    CHECK_THROWS_AS(walsh_from_hadamard(randomize_signs(hadamard_sylvester(8), 3)), Error);
    CHECK_THROWS_AS(walsh_from_hadamard(gsr::gsr(8, 4)), Error);
}

TEST_CASE("sign_diagonal follows splitmix64 top bits") {
    SplitMix64 gen(42);
    const auto d = sign_diagonal(42, 16);
    for (int j = 0; j < 16; ++j) CHECK(d[j] == ((gen.next() >> 63) ? -1 : 1));
}

TEST_CASE("randomize_signs") {
    const OrthoMatrix h = hadamard_sylvester(64);
    SUBCASE("same seed gives identical output") {
        CHECK(randomize_signs(h, 11) == randomize_signs(h, 11));
        CHECK(randomize_signs(h, 11).seed() == std::optional<std::uint64_t>(11));
        CHECK_FALSE(randomize_signs(h, 11).signs() == randomize_signs(h, 12).signs());
    }
    SUBCASE("identity diagonal leaves the matrix unchanged") {
        const std::vector<std::int8_t> ones(64, 1);
        CHECK(apply_sign_diagonal(h, ones, std::nullopt).signs() == h.signs());
    }
    SUBCASE("output is M D") {
        const auto d = sign_diagonal(5, 64);
        const OrthoMatrix r = randomize_signs(h, 5);
        for (int i = 0; i < 64; ++i) {
            for (int j = 0; j < 64; ++j) CHECK(r.signs()(i, j) == h.signs()(i, j) * d[j]);
        }
    }
    SUBCASE("orthogonality holds for 20 seeds") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const OrthoMatrix r = randomize_signs(h, seed);
            CHECK(dense_residual(r) < 1e-10);
            CHECK(r.orthogonality_residual() < 1e-10);
        }
    }
}

TEST_CASE("gsr block structure") {
    SUBCASE("C=8 G=4 Walsh has two Walsh_4 blocks") {
        const OrthoMatrix m = gsr::gsr(8, 4);
        const OrthoMatrix w4 = walsh_from_hadamard(hadamard_sylvester(4));
        CHECK(m.kind() == MatrixKind::GroupedBlockDiagonal);
        CHECK(m.group_size() == 4);
        CHECK(m.scale() == doctest::Approx(0.5));
        CHECK(m.signs().block(0, 0, 4, 4) == w4.signs());
        CHECK(m.signs().block(4, 4, 4, 4) == w4.signs());
        CHECK((m.signs().block(0, 4, 4, 4).array() == 0).all());
        CHECK((m.signs().block(4, 0, 4, 4).array() == 0).all());
    }
    SUBCASE("C=G is the full Walsh matrix") {
        for (int g = 2; g <= 64; g *= 2) {
            const OrthoMatrix m = gsr::gsr(g, g);
            const OrthoMatrix w = walsh_from_hadamard(hadamard_sylvester(g));
            CHECK(m.signs() == w.signs());
            CHECK(m.scale() == w.scale());
        }
    }
    SUBCASE("C=8 G=2 is four H_2 blocks") {
        const OrthoMatrix m = gsr::gsr(8, 2);
        for (int b = 0; b < 4; ++b) CHECK(m.signs().block(2 * b, 2 * b, 2, 2) == hadamard_sylvester(2).signs());
        CHECK(m.signs().cwiseAbs().cast<int>().sum() == 16);
    }
    SUBCASE("errors") {
        try {
            gsr::gsr(8, 3);
            FAIL("expected NonPowerOfTwo");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::NonPowerOfTwo);
        }
        try {
            gsr::gsr(8, 16);
            FAIL("expected GroupDoesNotDivide");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::GroupDoesNotDivide);
        }
        CHECK_THROWS_AS(gsr::gsr(12, 4), Error);
    }
}

TEST_CASE("gsr randomization keeps identical blocks by default") {
    const OrthoMatrix shared = gsr::gsr(64, 16, {.base = BlockKind::Walsh, .seed = 9});
    for (int b = 1; b < 4; ++b) CHECK(shared.signs().block(16 * b, 16 * b, 16, 16) == shared.signs().block(0, 0, 16, 16));
    CHECK(shared.orthogonality_residual() < 1e-10);

    const OrthoMatrix independent =
        gsr::gsr(64, 16, {.base = BlockKind::Walsh, .seed = 9, .independent_block_signs = true});
    bool any_differs = false;
    for (int b = 1; b < 4; ++b) {
        any_differs |= !(independent.signs().block(16 * b, 16 * b, 16, 16) == independent.signs().block(0, 0, 16, 16));
    }
    CHECK(any_differs);
    CHECK(independent.orthogonality_residual() < 1e-10);
    CHECK(dense_residual(independent) < 1e-10);
}

TEST_CASE("orthogonality_residual agrees with the dense product") {
    for (int n = 2; n <= 128; n *= 2) {
        for (const OrthoMatrix& m : {hadamard_sylvester(n), walsh_from_hadamard(hadamard_sylvester(n)),
                                     randomize_signs(hadamard_sylvester(n), 77), gsr::gsr(n, std::min(n, 8))}) {
            CHECK(std::abs(m.orthogonality_residual() - dense_residual(m)) < 1e-14);
        }
    }
    // A broken matrix must show up.
    SignMatrix s = hadamard_sylvester(8).signs();
    s(2, 3) = static_cast<std::int8_t>(-s(2, 3));
    const OrthoMatrix broken(s, 1.0 / std::sqrt(8.0), MatrixKind::HadamardNatural, 8, BlockKind::HadamardNatural,
                             std::nullopt);
    CHECK(broken.orthogonality_residual() == doctest::Approx(0.25));
}

TEST_CASE("sequency_profile") {
    SUBCASE("Walsh 128 / 32 has variance 85.25 in every group") {
        const SequencyProfile p = sequency_profile(walsh_from_hadamard(hadamard_sylvester(128)), 32);
        REQUIRE(p.per_group_variance.size() == 4);
        for (double v : p.per_group_variance) CHECK(v == 85.25);
        CHECK(p.per_group_mean[0] == 15.5);
    }
    SUBCASE("Hadamard 8 / 4 groups") {
        const SequencyProfile p = sequency_profile(hadamard_sylvester(8), 4);
        std::vector<int> g0(p.per_row_sequency.begin(), p.per_row_sequency.begin() + 4);
        std::vector<int> g1(p.per_row_sequency.begin() + 4, p.per_row_sequency.end());
        std::sort(g0.begin(), g0.end());
        std::sort(g1.begin(), g1.end());
        CHECK(g0 == std::vector<int>{0, 3, 4, 7});
        CHECK(g1 == std::vector<int>{1, 2, 5, 6});
        // {0,7,3,4}: mean 3.5, deviations 3.5,3.5,0.5,0.5. {1,6,2,5}: 2.5,2.5,1.5,1.5.
        CHECK(p.per_group_variance[0] == 6.25);
        CHECK(p.per_group_variance[1] == 4.25);
    }
    SUBCASE("per-row sequency is a permutation for full matrices") {
        for (int n = 2; n <= 512; n *= 2) {
            auto s = sequency_profile(hadamard_sylvester(n), n).per_row_sequency;
            std::sort(s.begin(), s.end());
            for (int i = 0; i < n; ++i) CHECK(s[i] == i);
        }
    }
    SUBCASE("mean Walsh group variance is below Hadamard for n in 8..1024, G in 8..n") {
        for (int n = 8; n <= 1024; n *= 2) {
            const OrthoMatrix h = hadamard_sylvester(n);
            const OrthoMatrix w = walsh_from_hadamard(h);
            for (int g = 8; g < n; g *= 2) {
                const auto hv = sequency_profile(h, g).per_group_variance;
                const auto wv = sequency_profile(w, g).per_group_variance;
                const double hm = std::accumulate(hv.begin(), hv.end(), 0.0) / static_cast<double>(hv.size());
                const double wm = std::accumulate(wv.begin(), wv.end(), 0.0) / static_cast<double>(wv.size());
                CHECK(wm < hm);
            }
        }
    }
    SUBCASE("block-diagonal rows count flips inside their block") {
        const SequencyProfile p = sequency_profile(gsr::gsr(16, 4), 4);
        for (int i = 0; i < 16; ++i) CHECK(p.per_row_sequency[i] == i % 4);
    }
    CHECK_THROWS_AS(sequency_profile(hadamard_sylvester(8), 3), Error);
}

TEST_CASE("fwht matches dense multiplication") {
    SUBCASE("e0 maps to the constant 1/sqrt(n)") {
        std::vector<double> e0(16, 0.0);
        e0[0] = 1.0;
        for (double v : fwht(e0, Ordering::Natural)) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    }
    Rng rng(2024);
    for (int n : {2, 8, 64, 1024}) {
        std::vector<double> x(static_cast<std::size_t>(n));
        for (auto& v : x) v = rng.normal();
        const Eigen::Map<const Eigen::VectorXd> xv(x.data(), n);
        const Eigen::VectorXd natural = hadamard_sylvester(n).dense() * xv;
        const Eigen::VectorXd sequency = walsh_from_hadamard(hadamard_sylvester(n)).dense() * xv;
        const auto fn = fwht(x, Ordering::Natural);
        const auto fs = fwht(x, Ordering::Sequency);
        const Eigen::Map<const Eigen::VectorXd> fnv(fn.data(), n);
        const Eigen::Map<const Eigen::VectorXd> fsv(fs.data(), n);
        CHECK((fnv - natural).norm() / natural.norm() < 1e-10);
        CHECK((fsv - sequency).norm() / sequency.norm() < 1e-10);
    }
    const std::vector<double> bad(6, 1.0);
    CHECK_THROWS_AS(fwht(bad, Ordering::Natural), Error);
}
