#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "nescl/common.hpp"
#include "nescl/mat.hpp"

namespace nescl {

// ----------------------------------------------------------------------------
// Pairwise ranking loss
// ----------------------------------------------------------------------------

// -log sigmoid(x) evaluated as softplus(-x); total in both directions.
inline double bpr_pair_loss(double diff) {
    return diff > 0 ? std::log1p(std::exp(-diff)) : -diff + std::log1p(std::exp(diff));
}

// d/d(diff) of the pair loss: -sigmoid(-diff).
inline double bpr_pair_grad(double diff) {
    if (diff > 0) {
        const double t = std::exp(-diff);
        return -t / (1.0 + t);
    }
    return -1.0 / (1.0 + std::exp(diff));
}

inline double bpr_loss(std::span<const double> scores_pos, std::span<const double> scores_neg) {
    if (scores_pos.size() != scores_neg.size() || scores_pos.empty())
        throw ShapeError("bpr_loss: need equal, non-empty score lists");
    std::vector<double> terms(scores_pos.size());
    for (std::size_t i = 0; i < terms.size(); ++i)
        terms[i] = bpr_pair_loss(scores_pos[i] - scores_neg[i]);
    return pairwise_sum(terms);
}

// Per-pair gradient w.r.t. the score difference.
inline std::vector<double> bpr_grad(std::span<const double> scores_pos,
                                    std::span<const double> scores_neg) {
    if (scores_pos.size() != scores_neg.size() || scores_pos.empty())
        throw ShapeError("bpr_grad: need equal, non-empty score lists");
    std::vector<double> g(scores_pos.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = bpr_pair_grad(scores_pos[i] - scores_neg[i]);
    return g;
}

inline double combined_loss(double ranking, double contrastive, double alpha,
                            bool drop_ranking = false) {
    if (alpha < 0.0) throw ConfigError("combined_loss: alpha must be >= 0");
    return (drop_ranking ? 0.0 : ranking) + alpha * contrastive;
}

// ----------------------------------------------------------------------------
// Contrastive batch
// ----------------------------------------------------------------------------

enum class ContrastKind { infonce_self, nescl_in, nescl_out, supcon_in, supcon_out };

struct PositiveRef {
    std::uint32_t id;
    double weight;  // similarity for nearest neighbors, 1 elsewhere
};

struct AnchorPositives {
    std::uint32_t anchor = 0;
    std::vector<PositiveRef> nearest;     // same-side KNN positives
    std::vector<PositiveRef> interacted;  // opposite-side interacted positives
};

// The anchor's own second-view row is always the first positive; the lists
// above are whatever the selection strategy resolved for this step. Every
// anchor must appear in the denominator support.
struct ContrastiveBatch {
    MatView view_a;  // first-view rows (positive side)
    MatView view_b;  // second-view rows (anchor and denominator side)
    std::vector<std::uint32_t> support;
    std::vector<AnchorPositives> anchors;
};

namespace detail {

inline double logsumexp(std::span<const double> xs) {
    double m = xs[0];
    for (double x : xs) m = std::max(m, x);
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

// Per distinct first-view row used as a positive: its logits against every
// support row, plus the shifted partition sum.
struct SourceStats {
    std::uint32_t id = 0;
    std::vector<double> logits;  // dot / tau over support
    double max_logit = 0.0;
    double shifted_sum = 0.0;    // sum_j exp(logit_j - max)
    double log_partition = 0.0;  // max + log(shifted_sum)
};

struct ContrastContext {
    std::vector<std::ptrdiff_t> support_pos;  // node id -> index in support, or -1
    std::vector<std::ptrdiff_t> source_pos;   // node id -> index in sources, or -1
    std::vector<SourceStats> sources;
};

inline void validate_batch(const ContrastiveBatch& batch, double tau) {
    if (!(tau > 0.0)) throw ConfigError("contrastive loss: tau must be > 0");
    if (batch.support.empty()) throw ConfigError("contrastive loss: empty denominator support");
}

inline ContrastContext build_context(const ContrastiveBatch& batch, double tau,
                                     bool need_nearest_interacted) {
    ContrastContext ctx;
    ctx.support_pos.assign(batch.view_b.rows, -1);
    for (std::size_t j = 0; j < batch.support.size(); ++j) {
        const std::uint32_t id = batch.support[j];
        if (id >= batch.view_b.rows) throw ShapeError("support id out of range");
        ctx.support_pos[id] = static_cast<std::ptrdiff_t>(j);
    }

    ctx.source_pos.assign(batch.view_a.rows, -1);
    auto add_source = [&](std::uint32_t id) {
        if (id >= batch.view_a.rows) throw ShapeError("positive id out of range");
        if (ctx.source_pos[id] >= 0) return;
        ctx.source_pos[id] = static_cast<std::ptrdiff_t>(ctx.sources.size());
        ctx.sources.push_back({id, {}, 0.0, 0.0, 0.0});
    };
    for (const AnchorPositives& ap : batch.anchors) {
        if (ctx.support_pos[ap.anchor] < 0)
            throw ConfigError("contrastive loss: anchor missing from denominator support");
        add_source(ap.anchor);
        if (need_nearest_interacted) {
            for (const PositiveRef& p : ap.nearest) add_source(p.id);
            for (const PositiveRef& p : ap.interacted) add_source(p.id);
        }
    }

    const std::size_t s = batch.support.size();
    const std::size_t w = batch.view_a.cols;
    for (SourceStats& src : ctx.sources) {
        src.logits.resize(s);
        const double* arow = batch.view_a.row(src.id);
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < s; ++j) {
            src.logits[j] = dot(arow, batch.view_b.row(batch.support[j]), w) / tau;
            m = std::max(m, src.logits[j]);
        }
        src.max_logit = m;
        double sum = 0.0;
        for (std::size_t j = 0; j < s; ++j) sum += std::exp(src.logits[j] - m);
        src.shifted_sum = sum;
        src.log_partition = m + std::log(sum);
    }
    return ctx;
}

// One resolved positive of some anchor. `list` records where it came from
// (0 self, 1 nearest, 2 interacted) and `list_index` its slot there.
struct Term {
    std::size_t source;
    double weight;
    int list;
    std::size_t list_index;
};

// Positive groups of an anchor under the given variant. infonce_self keeps
// only the two-view group; the "in" variant one group per positive source;
// the "out" variant a single merged group.
inline std::vector<std::vector<Term>> anchor_groups(ContrastKind kind, const AnchorPositives& ap,
                                                    const ContrastContext& ctx) {
    const Term self{static_cast<std::size_t>(ctx.source_pos[ap.anchor]), 1.0, 0, 0};
    auto terms_of = [&](const std::vector<PositiveRef>& list, int label) {
        std::vector<Term> ts;
        ts.reserve(list.size());
        for (std::size_t i = 0; i < list.size(); ++i)
            ts.push_back({static_cast<std::size_t>(ctx.source_pos[list[i].id]), list[i].weight,
                          label, i});
        return ts;
    };
    std::vector<std::vector<Term>> groups;
    if (kind == ContrastKind::infonce_self) {
        groups.push_back({self});
        return groups;
    }
    if (kind == ContrastKind::nescl_in) {
        groups.push_back({self});
        if (!ap.nearest.empty()) groups.push_back(terms_of(ap.nearest, 1));
        if (!ap.interacted.empty()) groups.push_back(terms_of(ap.interacted, 2));
        return groups;
    }
    // nescl_out: single log over the summed ratios
    std::vector<Term> all{self};
    for (const Term& t : terms_of(ap.nearest, 1)) all.push_back(t);
    for (const Term& t : terms_of(ap.interacted, 2)) all.push_back(t);
    groups.push_back(std::move(all));
    return groups;
}

// Forward value and, optionally, full gradients for the per-positive
// denominator family (two-view InfoNCE and both neighborhood variants).
inline double eval_ratio_family(ContrastKind kind, const ContrastiveBatch& batch, double tau,
                                Mat* grad_a, Mat* grad_b) {
    validate_batch(batch, tau);
    ContrastContext ctx = build_context(batch, tau, kind != ContrastKind::infonce_self);

    const std::size_t s = batch.support.size();
    const std::size_t w = batch.view_a.cols;
    std::vector<double> anchor_losses;
    anchor_losses.reserve(batch.anchors.size());
    std::vector<double> source_gain(ctx.sources.size(), 0.0);
    std::vector<double> scratch;

    for (const AnchorPositives& ap : batch.anchors) {
        const std::size_t ii = static_cast<std::size_t>(ctx.support_pos[ap.anchor]);
        double loss = 0.0;
        for (const auto& group : anchor_groups(kind, ap, ctx)) {
            scratch.clear();
            for (const Term& t : group) {
                const SourceStats& src = ctx.sources[t.source];
                // log of (weight * softmax ratio); never -inf since the
                // anchor sits inside the partition sum
                scratch.push_back(std::log(t.weight) + src.logits[ii] - src.log_partition);
            }
            const double group_log = logsumexp(scratch);
            loss -= group_log;
            if (grad_a != nullptr || grad_b != nullptr) {
                for (std::size_t t = 0; t < group.size(); ++t) {
                    const double share = std::exp(scratch[t] - group_log);
                    const std::size_t src_idx = group[t].source;
                    const std::uint32_t src_id = ctx.sources[src_idx].id;
                    source_gain[src_idx] += share;
                    if (grad_b != nullptr)
                        axpy(-share / tau, batch.view_a.row(src_id), grad_b->row(ap.anchor), w);
                    if (grad_a != nullptr)
                        axpy(-share / tau, batch.view_b.row(ap.anchor), grad_a->row(src_id), w);
                }
            }
        }
        anchor_losses.push_back(loss);
    }

    if (grad_a != nullptr || grad_b != nullptr) {
        std::vector<double> mean_row(w);
        for (std::size_t si = 0; si < ctx.sources.size(); ++si) {
            const SourceStats& src = ctx.sources[si];
            const double gain = source_gain[si];
            if (gain == 0.0) continue;
            std::fill(mean_row.begin(), mean_row.end(), 0.0);
            for (std::size_t j = 0; j < s; ++j) {
                const double prob = std::exp(src.logits[j] - src.log_partition);
                if (grad_b != nullptr)
                    axpy(gain * prob / tau, batch.view_a.row(src.id),
                         grad_b->row(batch.support[j]), w);
                axpy(prob, batch.view_b.row(batch.support[j]), mean_row.data(), w);
            }
            if (grad_a != nullptr) axpy(gain / tau, mean_row.data(), grad_a->row(src.id), w);
        }
    }

    const double total = pairwise_sum(anchor_losses);
    if (!std::isfinite(total)) throw NumericError("contrastive loss is not finite");
    return total;
}

// The anchor-denominator family: every positive term shares the anchor's own
// partition sum, positives averaged inside (in) or outside (out) the log.
inline double eval_anchor_family(ContrastKind kind, const ContrastiveBatch& batch, double tau,
                                 Mat* grad_a, Mat* grad_b) {
    validate_batch(batch, tau);
    const std::size_t s = batch.support.size();
    const std::size_t w = batch.view_a.cols;

    std::vector<std::ptrdiff_t> support_pos(batch.view_b.rows, -1);
    for (std::size_t j = 0; j < s; ++j) support_pos[batch.support[j]] = static_cast<std::ptrdiff_t>(j);

    std::vector<double> anchor_losses;
    anchor_losses.reserve(batch.anchors.size());
    std::vector<double> logits(s);
    std::vector<double> pos_logits;
    std::vector<std::uint32_t> pos_ids;

    for (const AnchorPositives& ap : batch.anchors) {
        if (ap.anchor >= batch.view_a.rows || support_pos[ap.anchor] < 0)
            throw ConfigError("contrastive loss: anchor missing from denominator support");
        const double* arow = batch.view_a.row(ap.anchor);
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < s; ++j) {
            logits[j] = dot(arow, batch.view_b.row(batch.support[j]), w) / tau;
            m = std::max(m, logits[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < s; ++j) sum += std::exp(logits[j] - m);
        const double log_partition = m + std::log(sum);

        pos_ids.clear();
        pos_ids.push_back(ap.anchor);
        for (const PositiveRef& p : ap.nearest) pos_ids.push_back(p.id);
        for (const PositiveRef& p : ap.interacted) pos_ids.push_back(p.id);
        pos_logits.resize(pos_ids.size());
        for (std::size_t t = 0; t < pos_ids.size(); ++t) {
            if (pos_ids[t] >= batch.view_b.rows) throw ShapeError("positive id out of range");
            pos_logits[t] = dot(arow, batch.view_b.row(pos_ids[t]), w) / tau;
        }
        const double count = static_cast<double>(pos_ids.size());

        double loss;
        if (kind == ContrastKind::supcon_in) {
            loss = std::log(count) - detail::logsumexp(pos_logits) + log_partition;
        } else {
            double mean = 0.0;
            for (double x : pos_logits) mean += x;
            mean /= count;
            loss = log_partition - mean;
        }
        anchor_losses.push_back(loss);

        if (grad_a != nullptr || grad_b != nullptr) {
            std::vector<double> a_grad(w, 0.0);
            for (std::size_t j = 0; j < s; ++j) {
                const double prob = std::exp(logits[j] - log_partition);
                if (grad_b != nullptr)
                    axpy(prob / tau, arow, grad_b->row(batch.support[j]), w);
                axpy(prob, batch.view_b.row(batch.support[j]), a_grad.data(), w);
            }
            const double pos_log = (kind == ContrastKind::supcon_in)
                                       ? detail::logsumexp(pos_logits)
                                       : 0.0;
            for (std::size_t t = 0; t < pos_ids.size(); ++t) {
                const double share = (kind == ContrastKind::supcon_in)
                                         ? std::exp(pos_logits[t] - pos_log)
                                         : 1.0 / count;
                if (grad_b != nullptr) axpy(-share / tau, arow, grad_b->row(pos_ids[t]), w);
                axpy(-share, batch.view_b.row(pos_ids[t]), a_grad.data(), w);
            }
            if (grad_a != nullptr) axpy(1.0 / tau, a_grad.data(), grad_a->row(ap.anchor), w);
        }
    }

    const double total = pairwise_sum(anchor_losses);
    if (!std::isfinite(total)) throw NumericError("contrastive loss is not finite");
    return total;
}

}  // namespace detail

inline double contrastive_loss(ContrastKind kind, const ContrastiveBatch& batch, double tau) {
    if (kind == ContrastKind::supcon_in || kind == ContrastKind::supcon_out)
        return detail::eval_anchor_family(kind, batch, tau, nullptr, nullptr);
    return detail::eval_ratio_family(kind, batch, tau, nullptr, nullptr);
}

// Forward value plus gradients w.r.t. every row of both views, accumulated
// into grad_a / grad_b (sized like the view matrices).
inline double contrastive_loss_grad(ContrastKind kind, const ContrastiveBatch& batch, double tau,
                                    Mat& grad_a, Mat& grad_b) {
    if (grad_a.rows != batch.view_a.rows || grad_a.cols != batch.view_a.cols ||
        grad_b.rows != batch.view_b.rows || grad_b.cols != batch.view_b.cols)
        throw ShapeError("contrastive_loss_grad: gradient shape mismatch");
    if (kind == ContrastKind::supcon_in || kind == ContrastKind::supcon_out)
        return detail::eval_anchor_family(kind, batch, tau, &grad_a, &grad_b);
    return detail::eval_ratio_family(kind, batch, tau, &grad_a, &grad_b);
}

inline double infonce_self(const ContrastiveBatch& batch, double tau) {
    return contrastive_loss(ContrastKind::infonce_self, batch, tau);
}
inline double nescl_in_loss(const ContrastiveBatch& batch, double tau) {
    return contrastive_loss(ContrastKind::nescl_in, batch, tau);
}
inline double nescl_out_loss(const ContrastiveBatch& batch, double tau) {
    return contrastive_loss(ContrastKind::nescl_out, batch, tau);
}
inline double supcon_in_loss(const ContrastiveBatch& batch, double tau) {
    return contrastive_loss(ContrastKind::supcon_in, batch, tau);
}
inline double supcon_out_loss(const ContrastiveBatch& batch, double tau) {
    return contrastive_loss(ContrastKind::supcon_out, batch, tau);
}

// ----------------------------------------------------------------------------
// Closed-form anchor-row gradients
// ----------------------------------------------------------------------------

struct PositiveCoeff {
    std::uint32_t id;
    double coeff;
};

// Per-anchor influence coefficients: the anchor-row gradient decomposes into
// coeff_self * h'_i + sum coeff_k * h'_k + sum coeff_a * h'_a. All values are
// strictly negative whenever a distinct negative is present.
struct AnchorCoeffs {
    std::uint32_t anchor = 0;
    double self_coeff = 0.0;
    std::vector<PositiveCoeff> nearest;
    std::vector<PositiveCoeff> interacted;
    std::vector<double> grad_row;
};

struct AnalyticGradient {
    ContrastKind kind = ContrastKind::nescl_in;
    std::vector<AnchorCoeffs> per_anchor;
};

// Assembles the anchor gradient from the closed forms directly: each
// coefficient is (ratio - 1)/tau scaled by the positive's share of its log
// group, the share expressed through the same shifted exponentials the
// forward pass uses. For the "out" variant the share is evaluated through
// the literal partition products, which is the second, independent route the
// tests compare against the generic backprop path.
inline AnalyticGradient nescl_grad_anchor(ContrastKind kind, const ContrastiveBatch& batch,
                                          double tau) {
    if (kind != ContrastKind::nescl_in && kind != ContrastKind::nescl_out)
        throw ConfigError("nescl_grad_anchor: variant must be nescl_in or nescl_out");
    detail::validate_batch(batch, tau);
    detail::ContrastContext ctx = detail::build_context(batch, tau, true);

    AnalyticGradient out;
    out.kind = kind;
    out.per_anchor.reserve(batch.anchors.size());
    const std::size_t w = batch.view_a.cols;

    for (const AnchorPositives& ap : batch.anchors) {
        const std::size_t ii = static_cast<std::size_t>(ctx.support_pos[ap.anchor]);
        AnchorCoeffs ac;
        ac.anchor = ap.anchor;
        ac.grad_row.assign(w, 0.0);

        const auto groups = detail::anchor_groups(kind, ap, ctx);
        // ratio and base coefficient per positive, group by group
        std::vector<std::vector<double>> ratios(groups.size());
        std::vector<double> group_totals(groups.size(), 0.0);
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            for (const detail::Term& t : groups[gi]) {
                const detail::SourceStats& src = ctx.sources[t.source];
                const double numer = std::exp(src.logits[ii] - src.max_logit);
                const double ratio = numer / src.shifted_sum;
                ratios[gi].push_back(ratio);
                group_totals[gi] += t.weight * ratio;
            }
        }

        // For the merged variant: share_p = w_p e_p prod_{q != p} X_q / Y.
        std::vector<double> merged_share;
        if (kind == ContrastKind::nescl_out) {
            const auto& group = groups[0];
            const std::size_t count = group.size();
            std::vector<double> numer(count), partition(count);
            for (std::size_t t = 0; t < count; ++t) {
                const detail::SourceStats& src = ctx.sources[group[t].source];
                numer[t] = group[t].weight * std::exp(src.logits[ii] - src.max_logit);
                partition[t] = src.shifted_sum;
            }
            std::vector<double> weighted(count);
            double denom = 0.0;
            for (std::size_t t = 0; t < count; ++t) {
                double prod = 1.0;
                for (std::size_t q = 0; q < count; ++q)
                    if (q != t) prod *= partition[q];
                weighted[t] = numer[t] * prod;
                denom += weighted[t];
            }
            merged_share.resize(count);
            for (std::size_t t = 0; t < count; ++t)
                merged_share[t] = denom > 0.0 ? weighted[t] / denom : 0.0;
        }

        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            const auto& group = groups[gi];
            for (std::size_t t = 0; t < group.size(); ++t) {
                const detail::Term& term = group[t];
                const detail::SourceStats& src = ctx.sources[term.source];
                const double ratio = ratios[gi][t];
                const double base = (ratio - 1.0) / tau;
                double share;
                if (kind == ContrastKind::nescl_out) {
                    share = merged_share[t];
                } else {
                    const double weighted = term.weight * ratio;
                    share = group_totals[gi] > 0.0 ? weighted / group_totals[gi] : 0.0;
                }
                const double coeff = base * share;
                axpy(coeff, batch.view_a.row(src.id), ac.grad_row.data(), w);

                if (term.list == 0)
                    ac.self_coeff = coeff;
                else if (term.list == 1)
                    ac.nearest.push_back({ap.nearest[term.list_index].id, coeff});
                else
                    ac.interacted.push_back({ap.interacted[term.list_index].id, coeff});
            }
        }
        out.per_anchor.push_back(std::move(ac));
    }
    return out;
}

inline AnalyticGradient nescl_in_grad_anchor(const ContrastiveBatch& batch, double tau) {
    return nescl_grad_anchor(ContrastKind::nescl_in, batch, tau);
}
inline AnalyticGradient nescl_out_grad_anchor(const ContrastiveBatch& batch, double tau) {
    return nescl_grad_anchor(ContrastKind::nescl_out, batch, tau);
}

}  // namespace nescl
