#include "diffseg/baselines.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <random>
#include <string_view>
#include <unordered_map>

#include "diffseg/errors.hpp"
#include "diffseg/interp.hpp"

namespace diffseg {

namespace {

double squared_distance(const double* a, const double* b, std::size_t dim) {
    double acc = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
        const double d = a[c] - b[c];
        acc += d * d;
    }
    return acc;
}

// Uniform double in [0, 1) from the top 53 bits, independent of the
// standard library's distribution implementations.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t count_distinct_rows(std::span<const double> rows, std::size_t dim, std::size_t n) {
    std::unordered_map<std::size_t, std::vector<std::size_t>> buckets;
    std::size_t distinct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = rows.data() + i * dim;
        const std::string_view bytes(reinterpret_cast<const char*>(row), dim * sizeof(double));
        auto& bucket = buckets[std::hash<std::string_view>{}(bytes)];
        const bool seen = std::any_of(bucket.begin(), bucket.end(), [&](std::size_t j) {
            return std::memcmp(rows.data() + j * dim, row, dim * sizeof(double)) == 0;
        });
        if (!seen) {
            bucket.push_back(i);
            ++distinct;
        }
    }
    return distinct;
}

struct Run {
    std::vector<int> assignment;
    std::vector<double> centers;
    std::vector<double> history;
    int iterations = 0;
};

std::vector<double> plus_plus_seeds(std::span<const double> rows, std::size_t dim, std::size_t n,
                                    int k, std::mt19937_64& rng) {
    std::vector<double> centers;
    centers.reserve(static_cast<std::size_t>(k) * dim);
    std::size_t first = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n));
    first = std::min(first, n - 1);
    centers.insert(centers.end(), rows.begin() + first * dim, rows.begin() + (first + 1) * dim);

    std::vector<double> closest(n);
    for (std::size_t i = 0; i < n; ++i) {
        closest[i] = squared_distance(rows.data() + i * dim, centers.data(), dim);
    }
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (double d : closest) total += d;
        std::size_t pick = n - 1;
        if (total > 0.0) {
            const double target = unit_uniform(rng) * total;
            double running = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                running += closest[i];
                if (running > target && closest[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
            if (closest[pick] == 0.0) {
                // rounding pushed past the end; take the last row with mass
                for (std::size_t i = n; i-- > 0;) {
                    if (closest[i] > 0.0) {
                        pick = i;
                        break;
                    }
                }
            }
        }
        const double* chosen = rows.data() + pick * dim;
        centers.insert(centers.end(), chosen, chosen + dim);
        for (std::size_t i = 0; i < n; ++i) {
            closest[i] = std::min(closest[i], squared_distance(rows.data() + i * dim, chosen, dim));
        }
    }
    return centers;
}

double assign(std::span<const double> rows, std::size_t dim, std::size_t n,
              const std::vector<double>& centers, int k, std::vector<int>& assignment,
              std::vector<double>& cost) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = rows.data() + i * dim;
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            const double d = squared_distance(row, centers.data() + static_cast<std::size_t>(c) * dim, dim);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        assignment[i] = best;
        cost[i] = best_d;
        inertia += best_d;
    }
    return inertia;
}

Run lloyd(std::span<const double> rows, std::size_t dim, std::size_t n, int k, int max_iters,
          std::mt19937_64& rng) {
    Run run;
    run.centers = plus_plus_seeds(rows, dim, n, k, rng);
    run.assignment.assign(n, -1);
    std::vector<double> cost(n);
    run.history.push_back(assign(rows, dim, n, run.centers, k, run.assignment, cost));

    std::vector<double> sums(static_cast<std::size_t>(k) * dim);
    std::vector<std::size_t> sizes(k);
    std::vector<int> previous;
    for (int it = 0; it < max_iters; ++it) {
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(sizes.begin(), sizes.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const int c = run.assignment[i];
            const double* row = rows.data() + i * dim;
            double* s = sums.data() + static_cast<std::size_t>(c) * dim;
            for (std::size_t d = 0; d < dim; ++d) s[d] += row[d];
            ++sizes[c];
        }
        for (int c = 0; c < k; ++c) {
            double* center = run.centers.data() + static_cast<std::size_t>(c) * dim;
            if (sizes[c] == 0) {
                // Empty cluster: move it onto the worst-served row.
                const auto far = static_cast<std::size_t>(
                    std::max_element(cost.begin(), cost.end()) - cost.begin());
                std::copy_n(rows.data() + far * dim, dim, center);
                cost[far] = 0.0;
                continue;
            }
            const double* s = sums.data() + static_cast<std::size_t>(c) * dim;
            for (std::size_t d = 0; d < dim; ++d) center[d] = s[d] / static_cast<double>(sizes[c]);
        }
        previous = run.assignment;
        run.history.push_back(assign(rows, dim, n, run.centers, k, run.assignment, cost));
        run.iterations = it + 1;
        if (run.assignment == previous) break;
    }
    return run;
}

}  // namespace

void KMeansConfig::validate() const {
    if (k < 1) throw ValidationError("k-means: k must be >= 1");
    if (max_iters < 1) throw ValidationError("k-means: max_iters must be >= 1");
    if (restarts < 1) throw ValidationError("k-means: restarts must be >= 1");
}

KMeansResult kmeans_cluster(std::span<const double> rows, std::size_t dim, const KMeansConfig& config) {
    config.validate();
    if (dim == 0 || rows.empty() || rows.size() % dim != 0) {
        throw ValidationError("k-means: data must be a non-empty n x dim matrix");
    }
    const std::size_t n = rows.size() / dim;

    KMeansResult result;
    int k = config.k;
    const std::size_t distinct = count_distinct_rows(rows, dim, n);
    if (static_cast<std::size_t>(k) > distinct) {
        result.warnings.push_back("k=" + std::to_string(k) + " exceeds the " +
                                  std::to_string(distinct) + " distinct vectors; using k=" +
                                  std::to_string(distinct));
        k = static_cast<int>(distinct);
    }

    std::mt19937_64 rng(config.seed);
    bool have_best = false;
    for (int r = 0; r < config.restarts; ++r) {
        Run run = lloyd(rows, dim, n, k, config.max_iters, rng);
        const double inertia = run.history.back();
        if (!have_best || inertia < result.inertia) {
            have_best = true;
            result.assignment = std::move(run.assignment);
            result.centers = std::move(run.centers);
            result.inertia_history = std::move(run.history);
            result.inertia = inertia;
            result.iterations = run.iterations;
        }
    }
    result.k_used = k;
    return result;
}

SegmentationMask kmeans_segment(const AggregatedTensor& field, const KMeansConfig& config,
                                int out_h, int out_w, KMeansResult* details) {
    if (field.w_max <= 0) throw ValidationError("k-means: empty field");
    if (out_h <= 0 || out_w <= 0) throw ValidationError("k-means: output size must be positive");
    KMeansResult result = kmeans_cluster(field.data, field.map_size(), config);

    const int w = field.w_max;
    std::vector<std::int32_t> grid(result.assignment.begin(), result.assignment.end());
    std::vector<std::int32_t> resized = nearest_resize(grid, w, w, out_h, out_w);
    SegmentationMask mask = compact_labels(out_h, out_w, std::move(resized), result.k_used);
    if (details) *details = std::move(result);
    return mask;
}

}  // namespace diffseg
