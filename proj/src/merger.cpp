#include "diffseg/merger.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>

#include "diffseg/errors.hpp"

namespace diffseg {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Floored logarithm, vectorised. Values pass through a fixed-size aligned
// buffer so that every element takes the same code path whatever the
// alignment or length of the caller's arrays; all distance routes then see
// bit-identical logs.
void log_into(std::span<const double> p, std::span<double> out) {
    constexpr std::size_t kChunk = 256;
    alignas(64) double buf[kChunk];
    for (std::size_t start = 0; start < p.size(); start += kChunk) {
        const std::size_t len = std::min(kChunk, p.size() - start);
        for (std::size_t i = 0; i < len; ++i) buf[i] = std::max(p[start + i], kLogFloor);
        std::fill(buf + len, buf + kChunk, 1.0);
        Eigen::Map<Eigen::Array<double, kChunk, 1>, Eigen::Aligned64> chunk(buf);
        chunk = chunk.log();
        std::copy(buf, buf + len, out.begin() + static_cast<std::ptrdiff_t>(start));
    }
}

std::vector<double> log_map(std::span<const double> p) {
    std::vector<double> out(p.size());
    log_into(p, out);
    return out;
}

double distance_with_logs(std::span<const double> p, std::span<const double> lp,
                          std::span<const double> q, std::span<const double> lq) {
    double acc = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) acc += (p[c] - q[c]) * (lp[c] - lq[c]);
    return 0.5 * acc;
}

// Bound on the error of a float32 dot product of length n, inputs rounded
// from double: gamma_{n+2} = (n + 2) u / (1 - (n + 2) u), u = 2^-24.
double float_dot_gamma(std::size_t n) {
    const double nu = static_cast<double>(n + 2) * 0x1.0p-24;
    return nu / (1.0 - nu);
}

void renormalize(std::vector<double>& m) {
    double sum = 0.0;
    for (double v : m) sum += v;
    if (sum > 0.0) {
        for (double& v : m) v /= sum;
    }
}

}  // namespace

AnchorGrid generate_anchor_grid(int m, int w_max) {
    if (w_max <= 0) throw ValidationError("anchor grid: w_max must be positive");
    if (m < 1 || m > w_max) {
        throw ValidationError("anchor grid: M must lie in [1, " + std::to_string(w_max) +
                              "], got " + std::to_string(m));
    }
    std::vector<int> coords(m);
    for (int r = 0; r < m; ++r) {
        // floor((r + 0.5) * w_max / M) in integer arithmetic
        coords[r] = static_cast<int>(((2LL * r + 1) * w_max) / (2LL * m));
    }
    AnchorGrid grid{m, w_max, {}};
    grid.points.reserve(static_cast<std::size_t>(m) * m);
    for (int r : coords) {
        for (int c : coords) grid.points.push_back({r, c});
    }
    return grid;
}

void MergeConfig::validate() const {
    if (!(tau > 0.0)) throw ValidationError("merge: tau must be positive");
    if (iterations < 1) throw ValidationError("merge: iterations must be >= 1");
}

double kl_distance(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ValidationError("kl_distance: shape mismatch");
    const auto lp = log_map(p);
    const auto lq = log_map(q);
    return distance_with_logs(p, lp, q, lq);
}

ProposalList sample_anchors(const AggregatedTensor& field, const AnchorGrid& grid) {
    if (grid.w_max != field.w_max) {
        throw ValidationError("anchor grid was built for a different resolution");
    }
    ProposalList anchors{field.w_max, {}};
    anchors.maps.reserve(grid.points.size());
    for (const auto& pt : grid.points) {
        const auto m = field.map(pt.row, pt.col);
        anchors.maps.emplace_back(m.begin(), m.end());
    }
    return anchors;
}

ProposalList first_merge(const ProposalList& anchors, const AggregatedTensor& field,
                         const MergeConfig& config) {
    config.validate();
    if (anchors.empty()) throw ValidationError("first_merge: no anchors");
    const auto n = static_cast<Eigen::Index>(field.map_size());
    const auto locations = static_cast<Eigen::Index>(field.map_count());
    const auto count = static_cast<Eigen::Index>(anchors.size());
    for (const auto& a : anchors.maps) {
        if (static_cast<Eigen::Index>(a.size()) != n) {
            throw ValidationError("first_merge: anchor map size does not match the field");
        }
    }

    // 2D(p, q) = sum p log p + sum q log q - p . log q - q . log p. The cross
    // terms for all (anchor, location) pairs come from two float GEMMs; pairs
    // whose screened value lies within the rounding bound of tau are decided
    // by the direct double-precision sum.
    Eigen::Map<const RowMatrix> values(field.data.data(), locations, n);
    RowMatrixF values_f(locations, n);
    RowMatrixF logs_f(locations, n);
    Eigen::VectorXd self_field(locations);
    Eigen::VectorXd max_log_field(locations);
    std::vector<double> row_log(static_cast<std::size_t>(n));
    for (Eigen::Index loc = 0; loc < locations; ++loc) {
        std::span<const double> q(values.row(loc).data(), static_cast<std::size_t>(n));
        log_into(q, row_log);
        Eigen::Map<const Eigen::RowVectorXd> lq(row_log.data(), n);
        self_field[loc] = values.row(loc).dot(lq);
        max_log_field[loc] = lq.cwiseAbs().maxCoeff();
        values_f.row(loc) = values.row(loc).cast<float>();
        logs_f.row(loc) = lq.cast<float>();
    }

    RowMatrix anchor_values(count, n);
    RowMatrix anchor_logs(count, n);
    for (Eigen::Index v = 0; v < count; ++v) {
        std::copy(anchors.maps[v].begin(), anchors.maps[v].end(), anchor_values.row(v).data());
        log_into(anchors.maps[v], std::span<double>(anchor_logs.row(v).data(), static_cast<std::size_t>(n)));
    }
    const Eigen::VectorXd self_anchor = anchor_values.cwiseProduct(anchor_logs).rowwise().sum();
    const Eigen::VectorXd max_log_anchor = anchor_logs.cwiseAbs().rowwise().maxCoeff();
    RowMatrixF cross = anchor_values.cast<float>() * logs_f.transpose();
    cross.noalias() += anchor_logs.cast<float>() * values_f.transpose();

    // |p . log q| <= max|log q| for a distribution p, so the float error of the
    // two cross terms is at most gamma * (max|log q| + max|log p|); the double
    // self terms and the final additions get a small relative slack.
    const double gamma = float_dot_gamma(static_cast<std::size_t>(2 * n));
    const double tau = config.tau;
    // Member sets as bitmaps; anchors with identical sets share one accumulation.
    std::vector<std::vector<std::uint64_t>> member_bits(
        static_cast<std::size_t>(count),
        std::vector<std::uint64_t>(static_cast<std::size_t>((locations + 63) / 64), 0));
    std::vector<double> members(static_cast<std::size_t>(count), 0.0);
    for (Eigen::Index v = 0; v < count; ++v) {
        std::span<const double> p(anchor_values.row(v).data(), static_cast<std::size_t>(n));
        std::span<const double> lp(anchor_logs.row(v).data(), static_cast<std::size_t>(n));
        for (Eigen::Index loc = 0; loc < locations; ++loc) {
            const double approx =
                0.5 * (self_anchor[v] + self_field[loc] - static_cast<double>(cross(v, loc)));
            const double margin =
                0.5 * gamma * (max_log_field[loc] + max_log_anchor[v]) * 1.001 + 1e-9;
            bool member = approx < tau - margin;
            if (!member && approx <= tau + margin) {
                std::span<const double> q(values.row(loc).data(), static_cast<std::size_t>(n));
                log_into(q, row_log);
                member = distance_with_logs(p, lp, q, row_log) < tau;
            }
            if (member) {
                member_bits[v][loc / 64] |= std::uint64_t{1} << (loc % 64);
                members[v] += 1.0;
            }
        }
    }

    std::map<std::vector<std::uint64_t>, Eigen::Index> distinct_sets;
    std::vector<Eigen::Index> set_of(static_cast<std::size_t>(count));
    for (Eigen::Index v = 0; v < count; ++v) {
        set_of[v] = distinct_sets.try_emplace(member_bits[v], static_cast<Eigen::Index>(distinct_sets.size()))
                        .first->second;
    }
    RowMatrix membership = RowMatrix::Zero(static_cast<Eigen::Index>(distinct_sets.size()), locations);
    for (const auto& [bits, row] : distinct_sets) {
        for (Eigen::Index loc = 0; loc < locations; ++loc) {
            if (bits[loc / 64] >> (loc % 64) & 1) membership(row, loc) = 1.0;
        }
    }
    const RowMatrix sums = membership * values;

    ProposalList out{anchors.side, {}};
    out.maps.reserve(anchors.size());
    for (Eigen::Index v = 0; v < count; ++v) {
        // An anchor taken from the field is its own member, so members >= 1
        // whenever anchors come from sample_anchors.
        if (members[v] == 0.0) {
            out.maps.push_back(anchors.maps[v]);
            continue;
        }
        const double* row = sums.row(set_of[v]).data();
        std::vector<double> proposal(row, row + n);
        for (double& x : proposal) x /= members[v];
        renormalize(proposal);
        out.maps.push_back(std::move(proposal));
    }
    return out;
}

ProposalList merge_iteration(const ProposalList& proposals, const MergeConfig& config) {
    config.validate();
    if (proposals.empty()) throw ValidationError("merge_iteration: empty proposal list");
    const std::size_t count = proposals.size();
    const std::size_t n = proposals.maps.front().size();

    std::vector<std::vector<double>> logs;
    logs.reserve(count);
    for (const auto& m : proposals.maps) {
        if (m.size() != n) throw ValidationError("merge_iteration: inconsistent map sizes");
        logs.push_back(log_map(m));
    }

    ProposalList out{proposals.side, {}};
    std::vector<bool> consumed(count, false);
    for (std::size_t a = 0; a < count; ++a) {
        if (consumed[a]) continue;
        std::vector<double> merged(n, 0.0);
        std::size_t members = 0;
        for (std::size_t v = a; v < count; ++v) {
            if (consumed[v]) continue;
            const double d = v == a ? 0.0
                                    : distance_with_logs(proposals.maps[a], logs[a],
                                                         proposals.maps[v], logs[v]);
            if (!(d < config.tau)) continue;
            consumed[v] = true;
            const auto& m = proposals.maps[v];
            for (std::size_t c = 0; c < n; ++c) merged[c] += m[c];
            ++members;
        }
        for (double& x : merged) x /= static_cast<double>(members);
        renormalize(merged);
        out.maps.push_back(std::move(merged));
    }
    return out;
}

ProposalList run_merging(const AggregatedTensor& field, const AnchorGrid& grid,
                         const MergeConfig& config, MergeTrace* trace) {
    config.validate();
    const ProposalList anchors = sample_anchors(field, grid);
    ProposalList proposals = first_merge(anchors, field, config);
    if (trace) trace->counts = {proposals.size()};
    for (int it = 1; it < config.iterations; ++it) {
        proposals = merge_iteration(proposals, config);
        if (trace) trace->counts.push_back(proposals.size());
    }
    return proposals;
}

}  // namespace diffseg
