#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nescl/losses.hpp"
#include "support/batches.hpp"
#include "support/oracles.hpp"

using namespace nescl;
using testsupport::BatchInstance;
using testsupport::make_instance;

namespace {

// All-equal embeddings: every softmax over a support of size n is uniform.
BatchInstance uniform_instance(std::size_t n_nodes, std::size_t dim, std::size_t n_nearest,
                               std::size_t n_interacted) {
    Rng rng(99);
    BatchInstance inst = make_instance(rng, n_nodes, dim, 1, n_nearest, n_interacted, true, false);
    for (std::size_t i = 0; i < n_nodes; ++i)
        for (std::size_t j = 0; j < dim; ++j) {
            inst.view_a.at(i, j) = 0.3;
            inst.view_b.at(i, j) = 0.3;
        }
    inst.batch.view_a = inst.view_a;
    inst.batch.view_b = inst.view_b;
    return inst;
}

double anchor_row_max_diff(const std::vector<double>& a, const double* b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

// FD of the batch loss w.r.t. the anchor's second-view row, against a grad row.
double fd_row_error(ContrastKind kind, const BatchInstance& inst, double tau,
                    std::uint32_t row, const std::vector<double>& grad_row, Rng& rng) {
    (void)rng;
    auto f = [&](const Mat& b) {
        ContrastiveBatch probe = inst.batch;
        probe.view_b = b;
        return contrastive_loss(kind, probe, tau);
    };
    double worst_abs = 0.0, scale = 1e-12;
    for (std::size_t c = 0; c < grad_row.size(); ++c) {
        const double fd = testsupport::finite_diff(f, inst.view_b, row, c);
        worst_abs = std::max(worst_abs, std::abs(fd - grad_row[c]));
        scale = std::max({scale, std::abs(fd), std::abs(grad_row[c])});
    }
    return worst_abs / scale;
}

}  // namespace

TEST_CASE("bpr values") {
    std::vector<double> pos{1.0}, neg{1.0};
    CHECK(bpr_loss(pos, neg) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    pos = {41.0};
    neg = {1.0};
    CHECK(bpr_loss(pos, neg) <= 1e-17);

    pos = {2.0};
    neg = {1.0};
    CHECK(bpr_loss(pos, neg) == doctest::Approx(0.3132616875182228).epsilon(1e-12));

    const auto g = bpr_grad(pos, neg);
    // -sigmoid(-1)
    CHECK(g[0] == doctest::Approx(-1.0 / (1.0 + std::exp(1.0))).epsilon(1e-12));

    CHECK_THROWS_AS(bpr_loss(std::vector<double>{1.0}, std::vector<double>{}), ShapeError);
}

TEST_CASE("combined loss") {
    CHECK(combined_loss(0.5, 0.25, 0.0) == 0.5);
    CHECK(combined_loss(0.5, 0.25, 1.0) == 0.75);
    CHECK(combined_loss(0.5, 0.25, 0.3) == doctest::Approx(0.575).epsilon(1e-15));
    CHECK(combined_loss(0.5, 0.25, 1.0, true) == 0.25);
    CHECK_THROWS_AS(combined_loss(0.0, 0.0, -1.0), ConfigError);
}

TEST_CASE("two-view term on hand instances") {
    // uniform softmax: loss = ln(support size) per anchor
    for (const std::size_t n : {2ul, 5ul, 9ul}) {
        BatchInstance inst = uniform_instance(n, 3, 0, 0);
        CHECK(infonce_self(inst.batch, 0.5) == doctest::Approx(std::log(double(n))).epsilon(1e-12));
    }

    // tau=1, positive dot 1, one negative dot 0: -ln(e/(e+1))
    Mat a(2, 2), b(2, 2);
    a.at(0, 0) = 1.0;
    b.at(0, 0) = 1.0;
    b.at(1, 1) = 1.0;  // dot(a0,b0) = 1, dot(a0,b1) = 0
    ContrastiveBatch batch;
    batch.view_a = a;
    batch.view_b = b;
    batch.support = {0, 1};
    batch.anchors.push_back({0, {}, {}});
    CHECK(infonce_self(batch, 1.0) == doctest::Approx(0.3132616875182228).epsilon(1e-12));

    // support of one: softmax of a single entry
    batch.support = {0};
    CHECK(infonce_self(batch, 1.0) == doctest::Approx(0.0));

    CHECK_THROWS_AS(infonce_self(batch, 0.0), ConfigError);
    CHECK_THROWS_AS(infonce_self(batch, -1.0), ConfigError);
}

TEST_CASE("neighborhood terms reduce to the two-view term without positives") {
    Rng rng(5);
    BatchInstance inst = make_instance(rng, 8, 4, 3, 0, 0);
    const double base = infonce_self(inst.batch, 0.2);
    CHECK(nescl_in_loss(inst.batch, 0.2) == doctest::Approx(base).epsilon(1e-15));
    CHECK(nescl_out_loss(inst.batch, 0.2) == doctest::Approx(base).epsilon(1e-15));
    CHECK(supcon_in_loss(inst.batch, 0.2) == doctest::Approx(base).epsilon(1e-15));
    CHECK(supcon_out_loss(inst.batch, 0.2) == doctest::Approx(base).epsilon(1e-15));
}

TEST_CASE("a unit-similarity neighbor alias of the anchor doubles the self term") {
    Rng rng(6);
    BatchInstance inst = make_instance(rng, 6, 3, 1, 0, 0);
    const std::uint32_t anchor = inst.batch.anchors[0].anchor;
    const std::uint32_t alias = anchor == 0 ? 1 : 0;
    for (std::size_t j = 0; j < 3; ++j) inst.view_a.at(alias, j) = inst.view_a.at(anchor, j);
    inst.batch.view_a = inst.view_a;
    const double self_only = nescl_in_loss(inst.batch, 0.2);
    inst.batch.anchors[0].nearest.push_back({alias, 1.0});
    CHECK(nescl_in_loss(inst.batch, 0.2) == doctest::Approx(2.0 * self_only).epsilon(1e-12));
}

TEST_CASE("merged variant equals the split variant on a single positive source") {
    Rng rng(7);
    for (int rep = 0; rep < 4; ++rep) {
        BatchInstance self_only = make_instance(rng, 7, 3, 2, 0, 0);
        CHECK(nescl_out_loss(self_only.batch, 0.15) ==
              doctest::Approx(nescl_in_loss(self_only.batch, 0.15)).epsilon(1e-14));
    }
}

TEST_CASE("merged variant with three equal ratios is -log(3r)") {
    BatchInstance inst = uniform_instance(10, 3, 1, 1);
    // all rows identical: self, nearest, interacted ratios all equal 1/10
    const double r = 1.0 / 10.0;
    const double out_loss = nescl_out_loss(inst.batch, 0.1);
    CHECK(out_loss == doctest::Approx(-std::log(3.0 * r)).epsilon(1e-12));
    // Jensen equality point: log-sum == sum-of-logs/3 + log 3
    const double in_loss = nescl_in_loss(inst.batch, 0.1);
    CHECK(out_loss == doctest::Approx(in_loss / 3.0 - std::log(3.0)).epsilon(1e-10));

    // the relation holds with >= on the raw group ratios of a random instance
    // (out <= in itself is deliberately not asserted)
    Rng rng(8);
    BatchInstance rand_inst = make_instance(rng, 9, 4, 1, 1, 1, true, false);
    const auto& ap = rand_inst.batch.anchors[0];
    const double r1 = testsupport::oracle_ratio(rand_inst.batch, ap.anchor, ap.anchor, 0.2);
    const double r2 = testsupport::oracle_ratio(rand_inst.batch, ap.nearest[0].id, ap.anchor, 0.2);
    const double r3 =
        testsupport::oracle_ratio(rand_inst.batch, ap.interacted[0].id, ap.anchor, 0.2);
    CHECK(std::log(r1 + r2 + r3) >=
          (std::log(r1) + std::log(r2) + std::log(r3)) / 3.0 + std::log(3.0) - 1e-12);
}

TEST_CASE("losses match the literal transcription oracle") {
    Rng rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 6 + rng.below(6);
        BatchInstance inst = make_instance(rng, n, 4, 2 + rng.below(3), 1 + rng.below(2),
                                           1 + rng.below(2), rep % 2 == 0);
        const double tau = 0.2;
        CHECK(testsupport::rel_err(nescl_in_loss(inst.batch, tau),
                                   testsupport::oracle_nescl_loss(false, inst.batch, tau)) <= 1e-10);
        CHECK(testsupport::rel_err(nescl_out_loss(inst.batch, tau),
                                   testsupport::oracle_nescl_loss(true, inst.batch, tau)) <= 1e-10);
        CHECK(testsupport::rel_err(supcon_in_loss(inst.batch, tau),
                                   testsupport::oracle_supcon_loss(true, inst.batch, tau)) <= 1e-10);
        CHECK(testsupport::rel_err(supcon_out_loss(inst.batch, tau),
                                   testsupport::oracle_supcon_loss(false, inst.batch, tau)) <= 1e-10);
    }
}

TEST_CASE("supcon reductions") {
    Rng rng(12);
    // all positives identical rows: in == out
    BatchInstance inst = make_instance(rng, 8, 3, 1, 2, 1, true, false);
    const auto& ap = inst.batch.anchors[0];
    for (const auto& p : ap.nearest)
        for (std::size_t j = 0; j < 3; ++j) inst.view_b.at(p.id, j) = inst.view_b.at(ap.anchor, j);
    for (const auto& p : ap.interacted)
        for (std::size_t j = 0; j < 3; ++j) inst.view_b.at(p.id, j) = inst.view_b.at(ap.anchor, j);
    inst.batch.view_b = inst.view_b;
    CHECK(supcon_in_loss(inst.batch, 0.2) ==
          doctest::Approx(supcon_out_loss(inst.batch, 0.2)).epsilon(1e-12));
}

TEST_CASE("closed-form coefficients on hand instances") {
    // support of two with all dots equal at tau = 0.1: coeff = -(1/0.1)(1/2)
    BatchInstance inst = uniform_instance(2, 3, 0, 0);
    const AnalyticGradient g = nescl_in_grad_anchor(inst.batch, 0.1);
    CHECK(g.per_anchor[0].self_coeff == doctest::Approx(-5.0).epsilon(1e-12));

    // support of the anchor alone: no negatives, zero gradient
    BatchInstance solo = uniform_instance(5, 3, 1, 1);
    solo.batch.support = {solo.batch.anchors[0].anchor};
    for (const ContrastKind kind : {ContrastKind::nescl_in, ContrastKind::nescl_out}) {
        const AnalyticGradient gs = nescl_grad_anchor(kind, solo.batch, 0.1);
        CHECK(gs.per_anchor[0].self_coeff == 0.0);
        for (const auto& c : gs.per_anchor[0].nearest) CHECK(c.coeff == 0.0);
        for (const auto& c : gs.per_anchor[0].interacted) CHECK(c.coeff == 0.0);
        for (double v : gs.per_anchor[0].grad_row) CHECK(v == 0.0);
    }
}

TEST_CASE("coefficients are strictly negative with a distinct negative") {
    Rng rng(13);
    for (int rep = 0; rep < 25; ++rep) {
        BatchInstance inst = make_instance(rng, 10, 3, 1, 2, 2);
        for (const ContrastKind kind : {ContrastKind::nescl_in, ContrastKind::nescl_out}) {
            const AnalyticGradient g = nescl_grad_anchor(kind, inst.batch, 0.1);
            CHECK(g.per_anchor[0].self_coeff < 0.0);
            for (const auto& c : g.per_anchor[0].nearest) CHECK(c.coeff < 0.0);
            for (const auto& c : g.per_anchor[0].interacted) CHECK(c.coeff < 0.0);
        }
    }
}

TEST_CASE("closed form agrees with the generic gradient path to 1e-10") {
    Rng rng(14);
    for (int rep = 0; rep < 40; ++rep) {
        BatchInstance inst =
            make_instance(rng, 6 + rng.below(8), 2 + rng.below(6), 1, rng.below(3), rng.below(3));
        for (const ContrastKind kind : {ContrastKind::nescl_in, ContrastKind::nescl_out}) {
            const AnalyticGradient g = nescl_grad_anchor(kind, inst.batch, 0.1);
            Mat ga(inst.view_a.rows, inst.view_a.cols), gb(inst.view_b.rows, inst.view_b.cols);
            contrastive_loss_grad(kind, inst.batch, 0.1, ga, gb);
            const double diff = anchor_row_max_diff(g.per_anchor[0].grad_row,
                                                    gb.row(inst.batch.anchors[0].anchor));
            CHECK(diff <= 1e-10);
        }
    }
}

TEST_CASE("anchor gradient matches finite differences") {
    Rng rng(15);
    for (int rep = 0; rep < 12; ++rep) {
        BatchInstance inst =
            make_instance(rng, 6 + rng.below(6), 2 + rng.below(4), 1, 1 + rng.below(2), 1 + rng.below(2));
        const double tau = rep % 2 == 0 ? 0.1 : 0.5;
        for (const ContrastKind kind : {ContrastKind::nescl_in, ContrastKind::nescl_out}) {
            const AnalyticGradient g = nescl_grad_anchor(kind, inst.batch, tau);
            const double err = fd_row_error(kind, inst, tau, inst.batch.anchors[0].anchor,
                                            g.per_anchor[0].grad_row, rng);
            CHECK(err <= 1e-4);
        }
    }
}

TEST_CASE("full gradients match finite differences for every loss") {
    Rng rng(16);
    const ContrastKind kinds[] = {ContrastKind::infonce_self, ContrastKind::nescl_in,
                                  ContrastKind::nescl_out, ContrastKind::supcon_in,
                                  ContrastKind::supcon_out};
    int seeds_checked = 0;
    for (int rep = 0; rep < 60; ++rep) {
        const std::size_t n = 5 + rng.below(6);
        BatchInstance inst =
            make_instance(rng, n, 2 + rng.below(3), 1 + rng.below(3), rng.below(3), rng.below(3),
                          rep % 3 != 0);
        const ContrastKind kind = kinds[rep % 5];
        const double tau = 0.15 + 0.2 * rng.uniform01();

        Mat ga(inst.view_a.rows, inst.view_a.cols), gb(inst.view_b.rows, inst.view_b.cols);
        contrastive_loss_grad(kind, inst.batch, tau, ga, gb);

        auto fa = [&](const Mat& m) {
            ContrastiveBatch probe = inst.batch;
            probe.view_a = m;
            return contrastive_loss(kind, probe, tau);
        };
        auto fb = [&](const Mat& m) {
            ContrastiveBatch probe = inst.batch;
            probe.view_b = m;
            return contrastive_loss(kind, probe, tau);
        };
        double worst = 0.0, scale = 1e-9;
        for (int probe = 0; probe < 8; ++probe) {
            const std::size_t r = rng.below(n);
            const std::size_t c = rng.below(inst.view_a.cols);
            const double fda = testsupport::finite_diff(fa, inst.view_a, r, c);
            const double fdb = testsupport::finite_diff(fb, inst.view_b, r, c);
            worst = std::max({worst, std::abs(fda - ga.at(r, c)), std::abs(fdb - gb.at(r, c))});
            scale = std::max({scale, std::abs(fda), std::abs(fdb), 1.0});
        }
        CHECK(worst / scale <= 1e-4);
        ++seeds_checked;
    }
    CHECK(seeds_checked >= 50);
}

TEST_CASE("influence ratio identity") {
    Rng rng(17);
    // canonical case: one nearest and one interacted positive, unit weights
    for (int rep = 0; rep < 30; ++rep) {
        BatchInstance inst = make_instance(rng, 5 + rng.below(8), 3, 1, 1, 1, true, false);
        const double tau = 0.2;
        const AnalyticGradient gin = nescl_in_grad_anchor(inst.batch, tau);
        const AnalyticGradient gout = nescl_out_grad_anchor(inst.batch, tau);
        const auto& ap = inst.batch.anchors[0];

        // literal identity, raw exponentials
        auto odds = [&](std::uint32_t row) {
            const ContrastiveBatch& b = inst.batch;
            const double numer =
                std::exp(nescl::dot(b.view_a.row(row), b.view_b.row(ap.anchor), b.view_a.cols) / tau);
            double off = 0.0;
            for (std::uint32_t j : b.support)
                if (j != ap.anchor)
                    off += std::exp(nescl::dot(b.view_a.row(row), b.view_b.row(j), b.view_a.cols) / tau);
            return off / numer;
        };
        const double k_term = 1.0 + odds(ap.nearest[0].id);
        const double expect = 1.0 + k_term / (1.0 + odds(ap.anchor)) +
                              k_term / (1.0 + odds(ap.interacted[0].id));
        const double got =
            gin.per_anchor[0].nearest[0].coeff / gout.per_anchor[0].nearest[0].coeff;
        CHECK(testsupport::rel_err(got, expect) <= 1e-8);
    }

    // degenerate: self is the only positive, ratio exactly one
    BatchInstance solo = make_instance(rng, 6, 3, 1, 0, 0);
    const AnalyticGradient gin = nescl_in_grad_anchor(solo.batch, 0.1);
    const AnalyticGradient gout = nescl_out_grad_anchor(solo.batch, 0.1);
    CHECK(gin.per_anchor[0].self_coeff / gout.per_anchor[0].self_coeff == 1.0);
}

TEST_CASE("shifting every logit leaves losses and coefficients unchanged") {
    Rng rng(18);
    BatchInstance inst = make_instance(rng, 8, 4, 2, 1, 1);
    const double tau = 0.2;

    // append one coordinate: 1 on the first view, c*tau on the second, so
    // every dot gains the same constant c*tau and every logit gains c
    const double shift = 3.7;
    BatchInstance shifted = inst;
    shifted.view_a = Mat(8, 5);
    shifted.view_b = Mat(8, 5);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            shifted.view_a.at(i, j) = inst.view_a.at(i, j);
            shifted.view_b.at(i, j) = inst.view_b.at(i, j);
        }
        shifted.view_a.at(i, 4) = 1.0;
        shifted.view_b.at(i, 4) = shift * tau;
    }
    shifted.batch.view_a = shifted.view_a;
    shifted.batch.view_b = shifted.view_b;

    for (const ContrastKind kind :
         {ContrastKind::infonce_self, ContrastKind::nescl_in, ContrastKind::nescl_out,
          ContrastKind::supcon_in, ContrastKind::supcon_out}) {
        CHECK(testsupport::rel_err(contrastive_loss(kind, inst.batch, tau),
                                   contrastive_loss(kind, shifted.batch, tau)) <= 1e-10);
    }
    for (const ContrastKind kind : {ContrastKind::nescl_in, ContrastKind::nescl_out}) {
        const AnalyticGradient g0 = nescl_grad_anchor(kind, inst.batch, tau);
        const AnalyticGradient g1 = nescl_grad_anchor(kind, shifted.batch, tau);
        for (std::size_t a = 0; a < g0.per_anchor.size(); ++a) {
            CHECK(testsupport::rel_err(g0.per_anchor[a].self_coeff, g1.per_anchor[a].self_coeff) <=
                  1e-10);
            for (std::size_t t = 0; t < g0.per_anchor[a].nearest.size(); ++t)
                CHECK(testsupport::rel_err(g0.per_anchor[a].nearest[t].coeff,
                                           g1.per_anchor[a].nearest[t].coeff) <= 1e-10);
        }
    }
}

TEST_CASE("batch invariants are enforced") {
    Rng rng(19);
    BatchInstance inst = make_instance(rng, 6, 3, 1, 1, 1);

    // anchor must sit inside the denominator support
    ContrastiveBatch no_anchor = inst.batch;
    no_anchor.support.clear();
    for (std::uint32_t j = 0; j < 6; ++j)
        if (j != inst.batch.anchors[0].anchor) no_anchor.support.push_back(j);
    CHECK_THROWS_AS(nescl_in_loss(no_anchor, 0.2), ConfigError);
    CHECK_THROWS_AS(supcon_in_loss(no_anchor, 0.2), ConfigError);

    // non-finite rows surface as a numeric failure
    BatchInstance poisoned = inst;
    poisoned.view_b.at(inst.batch.anchors[0].anchor, 0) =
        std::numeric_limits<double>::quiet_NaN();
    poisoned.batch.view_a = poisoned.view_a;
    poisoned.batch.view_b = poisoned.view_b;
    CHECK_THROWS_AS(nescl_out_loss(poisoned.batch, 0.2), NumericError);
}

TEST_CASE("uniform-logit coefficient scales exactly as 1/tau") {
    BatchInstance inst = uniform_instance(6, 3, 0, 0);
    double reference = 0.0;
    for (const double tau : {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 1.0}) {
        const AnalyticGradient g = nescl_in_grad_anchor(inst.batch, tau);
        const double scaled = std::abs(g.per_anchor[0].self_coeff) * tau;
        if (reference == 0.0) reference = scaled;
        CHECK(std::abs(scaled - reference) <= 1e-10);
    }
}
