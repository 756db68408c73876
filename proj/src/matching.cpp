#include "yoro/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "yoro/errors.hpp"

namespace yoro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest-augmenting-path Kuhn–Munkres with potentials. `a` is n x m with
// n <= m; returns the column assigned to each row.
std::vector<std::size_t> solve_rows_to_cols(const std::vector<double>& a, std::size_t n, std::size_t m) {
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    std::vector<char> used(m + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = a[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
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
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n);
    for (std::size_t j = 1; j <= m; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

// Optimal cost of assigning every listed ground truth to a distinct listed
// detection; +inf when there are fewer detections than ground truths.
double optimal_cost(const CostMatrix& cost, const std::vector<std::size_t>& dets,
                    const std::vector<std::size_t>& gts) {
    if (gts.empty()) return 0.0;
    if (dets.size() < gts.size()) return kInf;
    std::vector<double> a(gts.size() * dets.size());
    for (std::size_t r = 0; r < gts.size(); ++r)
        for (std::size_t c = 0; c < dets.size(); ++c) a[r * dets.size() + c] = cost.at(dets[c], gts[r]);
    const auto cols = solve_rows_to_cols(a, gts.size(), dets.size());
    double total = 0.0;
    for (std::size_t r = 0; r < gts.size(); ++r) total += a[r * dets.size() + cols[r]];
    return total;
}

}  // namespace

std::size_t Assignment::detection_for(std::size_t k) const {
    for (const auto& [i, gk] : pairs)
        if (gk == k) return i;
    throw ContractError("no detection matched to ground truth " + std::to_string(k));
}

Assignment hungarian(const CostMatrix& cost) {
    const std::size_t q = cost.rows, g = cost.cols;
    if (g == 0) throw ContractError("hungarian: no ground-truth columns");
    if (g > q)
        throw ContractError("hungarian: " + std::to_string(g) + " ground truths exceed " + std::to_string(q) +
                            " detections");
    for (double c : cost.values)
        if (!std::isfinite(c)) throw NumericError("hungarian: non-finite cost entry");

    std::vector<std::size_t> all_dets(q), all_gts(g);
    for (std::size_t i = 0; i < q; ++i) all_dets[i] = i;
    for (std::size_t k = 0; k < g; ++k) all_gts[k] = k;
    const double best = optimal_cost(cost, all_dets, all_gts);
    const double slack = 1e-12 * std::max(1.0, std::fabs(best));

    // Canonical optimum: walk detections in index order, give each the lowest
    // ground truth (or none) that still admits an optimal completion.
    Assignment out;
    std::vector<std::size_t> remaining_gts = all_gts;
    double committed = 0.0;
    // Detections that find no such ground truth stay unmatched.
    for (std::size_t i = 0; i < q && !remaining_gts.empty(); ++i) {
        std::vector<std::size_t> later_dets;
        for (std::size_t j = i + 1; j < q; ++j) later_dets.push_back(j);
        for (std::size_t idx = 0; idx < remaining_gts.size(); ++idx) {
            const std::size_t k = remaining_gts[idx];
            std::vector<std::size_t> rest = remaining_gts;
            rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(idx));
            const double c = committed + cost.at(i, k) + optimal_cost(cost, later_dets, rest);
            if (c <= best + slack) {
                out.pairs.emplace_back(i, k);
                committed += cost.at(i, k);
                remaining_gts = std::move(rest);
                break;
            }
        }
    }
    std::sort(out.pairs.begin(), out.pairs.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    out.total_cost = 0.0;
    for (const auto& [i, k] : out.pairs) out.total_cost += cost.at(i, k);
    return out;
}

double box_cost(const Box& pred, const Box& gt, double lambda_l1, double lambda_giou) {
    const double l1 = std::fabs(pred.cx - gt.cx) + std::fabs(pred.cy - gt.cy) + std::fabs(pred.w - gt.w) +
                      std::fabs(pred.h - gt.h);
    return lambda_l1 * l1 + lambda_giou * (1.0 - giou(pred, gt));
}

double soft_cross_entropy(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw DimensionError("soft_cross_entropy: size mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < pred.size(); ++j)
        if (target[j] != 0.0) s -= target[j] * std::log(std::max(pred[j], 1e-12));
    return s;
}

CostMatrix build_cost(std::span<const Box> pred_boxes, std::span<const double> class_probs,
                      const GroundTruth& gt, const ModelConfig& config) {
    const std::size_t q = pred_boxes.size(), K = config.classes();
    if (class_probs.size() != q * K) throw DimensionError("build_cost: class distribution size mismatch");
    CostMatrix cost(q, gt.objects());
    for (std::size_t k = 0; k < gt.objects(); ++k) {
        const auto target = gt.class_target(k, K);
        for (std::size_t i = 0; i < q; ++i)
            cost.at(i, k) = box_cost(pred_boxes[i], gt.boxes[k], config.lambda_l1, config.lambda_giou) +
                            soft_cross_entropy(class_probs.subspan(i * K, K), target);
    }
    return cost;
}

}  // namespace yoro
