#include "diffseg/evaluator.hpp"

#include <algorithm>
#include <limits>

#include "diffseg/errors.hpp"

namespace diffseg {

namespace {

std::vector<std::int32_t> sorted_unique(std::vector<std::int32_t> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

int index_of(const std::vector<std::int32_t>& ids, std::int32_t id) {
    return static_cast<int>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
}

// Minimum-cost assignment for an n x m cost matrix with n <= m; every row is
// assigned. Returns row -> column.
std::vector<int> min_cost_rows(const std::vector<std::int64_t>& cost, int n, int m) {
    constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
    std::vector<std::int64_t> u(n + 1, 0), v(m + 1, 0), minv(m + 1);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    std::vector<char> used(m + 1);
    auto a = [&](int i, int j) { return cost[static_cast<std::size_t>(i - 1) * m + (j - 1)]; };

    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            std::int64_t delta = kInf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const std::int64_t cur = a(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= m; ++j) {
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    }
    return row_to_col;
}

}  // namespace

Confusion confusion(std::span<const std::int32_t> pred, std::span<const std::int32_t> gt,
                    std::int32_t ignore_label) {
    if (pred.size() != gt.size()) throw ValidationError("confusion: shape mismatch");
    std::vector<std::int32_t> pred_seen;
    std::vector<std::int32_t> gt_seen;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] == ignore_label) continue;
        pred_seen.push_back(pred[i]);
        gt_seen.push_back(gt[i]);
    }
    Confusion conf;
    conf.pred_ids = sorted_unique(pred_seen);
    conf.gt_ids = sorted_unique(gt_seen);
    conf.matrix = CountMatrix(static_cast<int>(conf.pred_ids.size()),
                              static_cast<int>(conf.gt_ids.size()));
    for (std::size_t i = 0; i < pred_seen.size(); ++i) {
        ++conf.matrix.at(index_of(conf.pred_ids, pred_seen[i]), index_of(conf.gt_ids, gt_seen[i]));
    }
    conf.total = static_cast<std::int64_t>(pred_seen.size());
    return conf;
}

Confusion confusion(const SegmentationMask& pred, const LabelImage& gt, std::int32_t ignore_label) {
    if (pred.height != gt.height || pred.width != gt.width) {
        throw ValidationError("confusion: prediction is " + std::to_string(pred.height) + "x" +
                              std::to_string(pred.width) + " but ground truth is " +
                              std::to_string(gt.height) + "x" + std::to_string(gt.width));
    }
    return confusion(pred.labels, gt.labels, ignore_label);
}

std::vector<int> hungarian_match(const CountMatrix& counts) {
    const int rows = counts.rows;
    const int cols = counts.cols;
    if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);
    for (auto c : counts.counts) {
        if (c < 0) throw ValidationError("hungarian_match: counts must be non-negative");
    }

    std::int64_t peak = 0;
    for (auto c : counts.counts) peak = std::max(peak, c);

    if (rows <= cols) {
        std::vector<std::int64_t> cost(counts.counts.size());
        for (std::size_t i = 0; i < cost.size(); ++i) cost[i] = peak - counts.counts[i];
        return min_cost_rows(cost, rows, cols);
    }
    // More rows than columns: solve on the transpose and invert.
    std::vector<std::int64_t> cost(counts.counts.size());
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            cost[static_cast<std::size_t>(c) * rows + r] = peak - counts.at(r, c);
        }
    }
    const auto col_to_row = min_cost_rows(cost, cols, rows);
    std::vector<int> row_to_col(rows, -1);
    for (int c = 0; c < cols; ++c) row_to_col[col_to_row[c]] = c;
    return row_to_col;
}

Score score(const Confusion& conf, std::span<const int> assignment) {
    const auto& m = conf.matrix;
    if (static_cast<int>(assignment.size()) != m.rows) {
        throw ValidationError("score: assignment does not match the confusion matrix");
    }
    if (conf.total == 0) return {};

    std::vector<std::int64_t> pred_total(m.rows, 0), gt_total(m.cols, 0);
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            pred_total[r] += m.at(r, c);
            gt_total[c] += m.at(r, c);
        }
    }
    std::vector<int> col_owner(m.cols, -1);
    std::int64_t matched = 0;
    for (int r = 0; r < m.rows; ++r) {
        const int c = assignment[r];
        if (c < 0) continue;
        if (c >= m.cols || col_owner[c] != -1) {
            throw ValidationError("score: assignment is not one-to-one");
        }
        col_owner[c] = r;
        matched += m.at(r, c);
    }

    double iou_sum = 0.0;
    for (int c = 0; c < m.cols; ++c) {
        const int r = col_owner[c];
        if (r < 0) continue;
        const std::int64_t inter = m.at(r, c);
        const std::int64_t uni = pred_total[r] + gt_total[c] - inter;
        if (uni > 0) iou_sum += static_cast<double>(inter) / static_cast<double>(uni);
    }
    Score s;
    s.acc = static_cast<double>(matched) / static_cast<double>(conf.total);
    s.miou = m.cols > 0 ? iou_sum / m.cols : 0.0;
    return s;
}

ImageResult evaluate_image(const std::string& source_id, const SegmentationMask& pred,
                           const LabelImage& gt, std::int32_t ignore_label) {
    const Confusion conf = confusion(pred, gt, ignore_label);
    ImageResult result;
    result.source_id = source_id;
    result.pixels = conf.total;
    if (conf.total == 0) {
        result.skipped = true;
        return result;
    }
    const auto assignment = hungarian_match(conf.matrix);
    const Score s = score(conf, assignment);
    result.acc = s.acc;
    result.miou = s.miou;
    for (int r = 0; r < conf.matrix.rows; ++r) {
        if (assignment[r] < 0) continue;
        result.assignment[conf.pred_ids[r]] = conf.gt_ids[assignment[r]];
        result.matched += conf.matrix.at(r, assignment[r]);
    }
    return result;
}

EvalReport summarize(std::vector<ImageResult> results) {
    EvalReport report;
    std::int64_t pixels = 0;
    std::int64_t matched = 0;
    double miou_sum = 0.0;
    for (const auto& r : results) {
        if (r.skipped) continue;
        pixels += r.pixels;
        matched += r.matched;
        miou_sum += r.miou;
        ++report.images;
    }
    if (report.images > 0) {
        report.acc = static_cast<double>(matched) / static_cast<double>(pixels);
        report.miou = miou_sum / report.images;
    }
    report.per_image = std::move(results);
    return report;
}

EvalReport evaluate_dataset(const std::vector<EvalPair>& pairs, std::int32_t ignore_label) {
    std::vector<ImageResult> results;
    results.reserve(pairs.size());
    for (const auto& pair : pairs) {
        results.push_back(evaluate_image(pair.source_id, pair.pred, pair.gt, ignore_label));
    }
    return summarize(std::move(results));
}

}  // namespace diffseg
