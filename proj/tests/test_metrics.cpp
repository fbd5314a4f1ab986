#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "lrnmt/analysis.hpp"
#include "lrnmt/common.hpp"
#include "lrnmt/metrics.hpp"

using namespace lrnmt;

namespace {

// Cyclic Jacobi eigensolver, the independent oracle for pca2: returns all
// eigenvalues of a symmetric matrix, descending.
std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t d) {
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (std::abs(apq) < 1e-18) continue;
                const double app = a[p * d + p], aqq = a[q * d + q];
                const double theta = 0.5 * (aqq - app) / apq;
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = a[k * d + p], akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = a[p * d + k], aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> eig(d);
    for (std::size_t i = 0; i < d; ++i) eig[i] = a[i * d + i];
    std::sort(eig.begin(), eig.end(), std::greater<>());
    return eig;
}

std::vector<double> covariance_of(const std::vector<double>& data, std::size_t n, std::size_t d) {
    std::vector<double> centered = data;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0;
        for (std::size_t i = 0; i < n; ++i) mean += centered[i * d + j];
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) centered[i * d + j] -= mean;
    }
    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
                cov[a * d + b] += centered[i * d + a] * centered[i * d + b];
    for (double& x : cov) x /= static_cast<double>(n - 1);
    return cov;
}

}  // namespace

TEST_CASE("bleu identity is exactly 100") {
    std::vector<std::string> text{"i ni ce", "a ka kene wa", "o ye tiɲɛ ye"};
    EvalReport r = bleu(text, text);
    CHECK(r.bleu_percent == 100.0);
    CHECK(r.brevity_penalty == 1.0);
    for (double p : r.precisions) CHECK(p == 1.0);
}

TEST_CASE("bleu clipped unigram fixture: 2/7") {
    EvalReport r = bleu({"the the the the the the the"}, {"the cat is on the mat"});
    CHECK(r.precisions[0] == 2.0 / 7.0);  // exact in double
    CHECK(r.bleu_percent == 0.0);         // no bigram matches, no smoothing
}

TEST_CASE("bleu disjoint vocabularies give 0") {
    CHECK(bleu({"a b c"}, {"x y z"}).bleu_percent == 0.0);
}

TEST_CASE("brevity penalty punishes short hypotheses") {
    // hyp length 2, ref length 4 -> BP = exp(1 - 4/2) = exp(-1)
    EvalReport r = bleu({"a b"}, {"a b a b"});
    CHECK(r.brevity_penalty == doctest::Approx(std::exp(-1.0)));
    CHECK(r.bleu_percent < 100.0);
}

TEST_CASE("bleu and chrf are symmetric under permutation of the pair list") {
    std::vector<std::string> hyp{"un deux trois", "le chat dort", "il fait beau aujourd'hui"};
    std::vector<std::string> ref{"un deux quatre", "le chien dort", "il fait beau ce soir"};
    EvalReport forward = bleu(hyp, ref);
    std::vector<std::string> hyp_perm{hyp[2], hyp[0], hyp[1]};
    std::vector<std::string> ref_perm{ref[2], ref[0], ref[1]};
    EvalReport permuted = bleu(hyp_perm, ref_perm);
    CHECK(forward.bleu_percent == doctest::Approx(permuted.bleu_percent).epsilon(1e-12));
    CHECK(chrf(hyp, ref) == doctest::Approx(chrf(hyp_perm, ref_perm)).epsilon(1e-12));
}

TEST_CASE("bleu input validation") {
    CHECK_THROWS_AS(bleu({}, {}), DataError);
    CHECK_THROWS_AS(bleu({"a"}, {"a", "b"}), DataError);
}

TEST_CASE("chrf identity and disjoint extremes") {
    std::vector<std::string> text{"bonjour monde", "a ni ce"};
    CHECK(chrf(text, text) == 100.0);
    CHECK(chrf({"abc"}, {"xyz"}) == 0.0);
}

TEST_CASE("chrf hand fixture: abcd vs abce") {
    ChrfDetail d = chrf_detail({"abcd"}, {"abce"});
    CHECK(d.precision[0] == 0.75);
    CHECK(d.recall[0] == 0.75);
    // bigrams: ab bc cd vs ab bc ce -> 2/3 each
    CHECK(d.precision[1] == doctest::Approx(2.0 / 3.0));
    CHECK(d.recall[1] == doctest::Approx(2.0 / 3.0));
    CHECK(d.order_present[3]);        // 4-grams exist
    CHECK_FALSE(d.order_present[4]);  // no 5-grams in 4-char words
}

TEST_CASE("chrf ignores trailing whitespace differences") {
    CHECK(chrf({"bonjour monde  "}, {"bonjour monde"}) == 100.0);
    CHECK(chrf({" bonjour  monde"}, {"bonjour monde"}) == 100.0);
}

TEST_CASE("sentence bleu smoothing keeps short matches nonzero") {
    CHECK(bleu_sentence("le chat", "le chat", false) == 100.0);
    CHECK(bleu_sentence("le chat", "le chien", true) > 0.0);
    CHECK(bleu_sentence("le chat", "le chien", false) == 0.0);
}

TEST_CASE("evaluate_corpus fills both metrics") {
    EvalReport r = evaluate_corpus({"a b c d"}, {"a b c d"}, true);
    CHECK(r.bleu_percent == 100.0);
    CHECK(r.chrf_score == 100.0);
    CHECK(r.n_sentences == 1);
    REQUIRE(r.per_sentence_bleu.size() == 1);
    CHECK(r.per_sentence_bleu[0] == 100.0);
}

TEST_CASE("pca2 on collinear points embedded in 10 dimensions") {
    RngStream rng(21);
    const std::size_t n = 40, d = 10;
    std::vector<double> direction(d), data(n * d);
    for (double& x : direction) x = rng.next_uniform(-1, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = rng.next_uniform(-3, 3);
        for (std::size_t j = 0; j < d; ++j) data[i * d + j] = t * direction[j];
    }
    PcaResult r = pca2(data, n, d);
    CHECK(r.explained_variance_ratio[0] >= 0.999);
    CHECK(r.second_degenerate);
}

TEST_CASE("pca2 explained ratios match the Jacobi oracle on a 50x5 cloud") {
    RngStream rng(33);
    const std::size_t n = 50, d = 5;
    std::vector<double> data(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            data[i * d + j] = rng.next_normal() * (1.0 + static_cast<double>(j));
    PcaResult r = pca2(data, n, d);

    std::vector<double> eig = jacobi_eigenvalues(covariance_of(data, n, d), d);
    double trace = 0;
    for (double e : eig) trace += e;
    CHECK(r.explained_variance_ratio[0] == doctest::Approx(eig[0] / trace).epsilon(1e-6));
    CHECK(r.explained_variance_ratio[1] == doctest::Approx(eig[1] / trace).epsilon(1e-6));
}

TEST_CASE("pca2 projections are centered and components orthonormal") {
    RngStream rng(8);
    const std::size_t n = 30, d = 6;
    std::vector<double> data(n * d);
    for (double& x : data) x = rng.next_uniform(-2, 2);
    PcaResult r = pca2(data, n, d);
    for (int c = 0; c < 2; ++c) {
        double mean = 0;
        for (std::size_t i = 0; i < n; ++i) mean += r.projections[i * 2 + c];
        CHECK(std::abs(mean / static_cast<double>(n)) < 1e-9);
    }
    double norm0 = 0, norm1 = 0, dot = 0;
    for (std::size_t j = 0; j < d; ++j) {
        norm0 += r.components[j] * r.components[j];
        norm1 += r.components[d + j] * r.components[d + j];
        dot += r.components[j] * r.components[d + j];
    }
    CHECK(norm0 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(norm1 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(dot) < 1e-6);
}

TEST_CASE("pca2 is row-order invariant up to the sign convention") {
    RngStream rng(14);
    const std::size_t n = 25, d = 4;
    std::vector<double> data(n * d);
    for (double& x : data) x = rng.next_uniform(-1, 1);
    PcaResult a = pca2(data, n, d);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);
    std::vector<double> shuffled(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) shuffled[i * d + j] = data[order[i] * d + j];
    PcaResult b = pca2(shuffled, n, d);

    for (std::size_t j = 0; j < 2 * d; ++j)
        CHECK(a.components[j] == doctest::Approx(b.components[j]).epsilon(1e-6));
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 2; ++c)
            CHECK(a.projections[order[i] * 2 + c] ==
                  doctest::Approx(b.projections[i * 2 + c]).epsilon(1e-6));
}

TEST_CASE("pca2 input validation") {
    CHECK_THROWS_AS(pca2(std::vector<double>(4, 0.0), 2, 2), DataError);
    CHECK_THROWS_AS(pca2(std::vector<double>(3, 0.0), 3, 1), DataError);
}

TEST_CASE("cosine_hist extremes and conservation") {
    const std::size_t n = 8, d = 3;
    RngStream rng(2);
    std::vector<double> a(n * d);
    for (double& x : a) x = rng.next_uniform(-1, 1);

    SUBCASE("identical sets put all mass in the top bin") {
        CosineHistogram h = cosine_hist(a, a, n, d);
        CHECK(h.counts.back() == n);
        CHECK(h.mean == doctest::Approx(1.0));
        CHECK(h.median == doctest::Approx(1.0));
    }
    SUBCASE("orthogonal pairs land in the bin containing zero") {
        std::vector<double> x(n * d, 0.0), y(n * d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            x[i * d + 0] = 1.0;
            y[i * d + 1] = 1.0;
        }
        CosineHistogram h = cosine_hist(x, y, n, d);
        CHECK(h.counts[25] == n);  // bin [0, 0.04) with 50 bins
        CHECK(h.mean == doctest::Approx(0.0));
    }
    SUBCASE("zero vectors are flagged and excluded") {
        std::vector<double> b = a;
        for (std::size_t j = 0; j < d; ++j) b[0 * d + j] = 0.0;
        CosineHistogram h = cosine_hist(a, b, n, d);
        CHECK(h.flagged == 1);
        std::size_t total = 0;
        for (std::size_t c : h.counts) total += c;
        CHECK(total == n - 1);
    }
}

TEST_CASE("embedding matrix round trip with sidecar") {
    EmbeddingMatrix m;
    m.rows = 3;
    m.dim = 4;
    m.language = "bm";
    m.data = {1.f, 2.f, 3.f, 4.f, 5.f, 6.f, 7.f, 8.f, 9.f, 10.f, 11.f, 12.f};
    save_embeddings(m, "emb_test.bin");
    EmbeddingMatrix back = load_embeddings("emb_test.bin");
    CHECK(back.rows == 3);
    CHECK(back.dim == 4);
    CHECK(back.language == "bm");
    CHECK(back.data == m.data);
    std::remove("emb_test.bin");
    std::remove("emb_test.bin.json");
}
