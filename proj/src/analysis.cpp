#include "lrnmt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "lrnmt/common.hpp"

namespace lrnmt {

namespace {

constexpr double kPowerTolerance = 1e-9;
constexpr int kPowerMaxIterations = 1000;

// Largest eigenpair of the symmetric matrix c (d x d).
std::pair<double, std::vector<double>> power_iteration(const std::vector<double>& c,
                                                       std::size_t d) {
    RngStream rng(0x9E3779B9u);
    std::vector<double> v(d);
    for (double& x : v) x = rng.next_uniform(-1.0, 1.0);
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;

    std::vector<double> w(d);
    double eigenvalue = 0.0;
    for (int iter = 0; iter < kPowerMaxIterations; ++iter) {
        for (std::size_t i = 0; i < d; ++i) {
            double acc = 0;
            for (std::size_t j = 0; j < d; ++j) acc += c[i * d + j] * v[j];
            w[i] = acc;
        }
        double wnorm = 0;
        for (double x : w) wnorm += x * x;
        wnorm = std::sqrt(wnorm);
        if (wnorm < 1e-300) return {0.0, v};  // null matrix: any unit vector works
        double diff = 0;
        eigenvalue = 0;
        for (std::size_t i = 0; i < d; ++i) {
            eigenvalue += v[i] * w[i];
            const double next = w[i] / wnorm;
            diff += std::abs(next - v[i]);
            v[i] = next;
        }
        if (diff < kPowerTolerance) break;
    }
    return {eigenvalue, v};
}

void fix_sign(std::vector<double>& v) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
    if (v[arg] < 0)
        for (double& x : v) x = -x;
}

}  // namespace

PcaResult pca2(const std::vector<double>& data, std::size_t n, std::size_t d) {
    if (n < 3) throw DataError("pca2 needs at least 3 rows, got " + std::to_string(n));
    if (d < 2) throw DataError("pca2 needs dimension >= 2, got " + std::to_string(d));
    if (data.size() != n * d)
        throw DataError("pca2: data size " + std::to_string(data.size()) + " is not n*d");

    std::vector<double> centered = data;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0;
        for (std::size_t i = 0; i < n; ++i) mean += centered[i * d + j];
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) centered[i * d + j] -= mean;
    }

    // covariance, normalized by n - 1
    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = centered.data() + i * d;
        for (std::size_t a = 0; a < d; ++a) {
            const double va = row[a];
            if (va == 0.0) continue;
            for (std::size_t b = 0; b < d; ++b) cov[a * d + b] += va * row[b];
        }
    }
    const double denom = static_cast<double>(n - 1);
    for (double& x : cov) x /= denom;
    double total_variance = 0;
    for (std::size_t j = 0; j < d; ++j) total_variance += cov[j * d + j];

    PcaResult result;
    result.n = n;
    result.d = d;
    result.components.resize(2 * d);
    result.projections.assign(n * 2, 0.0);

    std::vector<double> deflated = cov;
    for (int comp = 0; comp < 2; ++comp) {
        auto [eigenvalue, v] = power_iteration(deflated, d);
        if (eigenvalue < 0) eigenvalue = 0;  // covariance is PSD up to roundoff
        fix_sign(v);
        result.eigenvalues[comp] = eigenvalue;
        result.explained_variance_ratio[comp] =
            total_variance > 0 ? eigenvalue / total_variance : 0.0;
        std::copy(v.begin(), v.end(), result.components.begin() + comp * d);
        for (std::size_t i = 0; i < n; ++i) {
            double proj = 0;
            for (std::size_t j = 0; j < d; ++j) proj += centered[i * d + j] * v[j];
            result.projections[i * 2 + comp] = proj;
        }
        if (comp == 0) {
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t b = 0; b < d; ++b) deflated[a * d + b] -= eigenvalue * v[a] * v[b];
        }
    }
    result.second_degenerate =
        result.eigenvalues[1] <= 1e-12 * std::max(1.0, result.eigenvalues[0]);
    return result;
}

std::vector<double> pairwise_cosine(const std::vector<double>& a, const std::vector<double>& b,
                                    std::size_t n, std::size_t d, std::size_t* flagged) {
    if (a.size() != n * d || b.size() != n * d)
        throw DataError("pairwise_cosine: embedding sizes do not match n*d");
    std::vector<double> cosines;
    cosines.reserve(n);
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = a.data() + i * d;
        const double* y = b.data() + i * d;
        double dot = 0, nx = 0, ny = 0;
        for (std::size_t j = 0; j < d; ++j) {
            dot += x[j] * y[j];
            nx += x[j] * x[j];
            ny += y[j] * y[j];
        }
        if (nx < 1e-24 || ny < 1e-24) {
            ++skipped;
            continue;
        }
        double c = dot / (std::sqrt(nx) * std::sqrt(ny));
        cosines.push_back(std::clamp(c, -1.0, 1.0));
    }
    if (flagged) *flagged = skipped;
    return cosines;
}

CosineHistogram cosine_hist(const std::vector<double>& a, const std::vector<double>& b,
                            std::size_t n, std::size_t d, std::size_t bins) {
    if (bins == 0) throw ConfigError("cosine_hist needs at least one bin");
    CosineHistogram hist;
    std::vector<double> cosines = pairwise_cosine(a, b, n, d, &hist.flagged);
    hist.counts.assign(bins, 0);
    hist.bin_edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i)
        hist.bin_edges[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(bins);
    double sum = 0;
    for (double c : cosines) {
        auto idx = static_cast<std::size_t>((c + 1.0) / 2.0 * static_cast<double>(bins));
        if (idx >= bins) idx = bins - 1;  // c == 1 lands in the top bin
        ++hist.counts[idx];
        sum += c;
    }
    if (!cosines.empty()) {
        hist.mean = sum / static_cast<double>(cosines.size());
        std::vector<double> sorted = cosines;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t mid = sorted.size() / 2;
        hist.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    }
    return hist;
}

void save_embeddings(const EmbeddingMatrix& m, const std::string& path) {
    if (m.data.size() != m.rows * m.dim)
        throw DataError("embedding matrix data does not match rows*dim");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    if (!out) throw IoError("short write: " + path);

    nlohmann::json sidecar{{"dim", m.dim}, {"count", m.rows}, {"language", m.language}};
    write_text_file(path + ".json", sidecar.dump(2) + "\n");
}

EmbeddingMatrix load_embeddings(const std::string& path) {
    nlohmann::json sidecar = nlohmann::json::parse(read_text_file(path + ".json"));
    EmbeddingMatrix m;
    m.dim = sidecar.at("dim").get<std::size_t>();
    m.rows = sidecar.at("count").get<std::size_t>();
    m.language = sidecar.value("language", "");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    m.data.resize(m.rows * m.dim);
    in.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != m.data.size() * sizeof(float))
        throw DataError(path + ": embedding file shorter than sidecar promises");
    return m;
}

}  // namespace lrnmt
