#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "tokann/evalkit.hpp"

using namespace tokann;

namespace {

BoundingBox box(double x_min, double y_min, double x_max, double y_max, std::string category,
                std::optional<double> score = std::nullopt) {
    BoundingBox b;
    b.x_min = x_min;
    b.y_min = y_min;
    b.x_max = x_max;
    b.y_max = y_max;
    b.category = std::move(category);
    b.score = score;
    return b;
}

ProductRecord make_record(std::string id, Embedding embedding, std::string category) {
    ProductRecord record;
    record.id = std::move(id);
    record.embedding = std::move(embedding);
    record.attributes.emplace("category", std::move(category));
    return record;
}

LabelEvent event(std::string question, std::string labeler, std::string answer) {
    return LabelEvent{std::move(question), std::move(labeler), std::move(answer)};
}

}  // namespace

// ===========================================================================
// Retrieval P@K
// ===========================================================================

TEST_CASE("self-identical queries give perfect precision", "[evalkit][retrieval-eval]") {
    testsupport::Rng rng(11);
    std::vector<ProductRecord> records;
    std::vector<MatchPair> pairs;
    for (int i = 0; i < 10; ++i) {
        Embedding center = testsupport::random_embedding(rng, 16);
        for (auto& v : center) v *= 4.0f;  // well-separated clusters
        records.push_back(make_record("gt" + std::to_string(i), center, "item"));
        MatchPair pair;
        pair.query = QueryObject{center, "item", std::nullopt};
        pair.ground_truth_id = "gt" + std::to_string(i);
        pairs.push_back(std::move(pair));
    }
    // Pad with distractors.
    for (int i = 0; i < 100; ++i)
        records.push_back(
            make_record("dx" + std::to_string(i), testsupport::random_embedding(rng, 16), "item"));

    SearchConfig config;
    config.k = 1;
    const double p = retrieval_precision_at_k(
        pairs, records, LshConfig{.dim = 16, .num_bands = 16, .bits_per_band = 4, .seed = 5},
        config);
    CHECK(p == 1.0);
}

TEST_CASE("precision rejects bad inputs", "[evalkit][retrieval-eval]") {
    const std::vector<ProductRecord> records = {make_record("gt", {1, 2, 3, 4}, "item")};
    MatchPair pair;
    pair.query = QueryObject{{1, 2, 3, 4}, "item", std::nullopt};
    pair.ground_truth_id = "gt";

    SearchConfig bad;
    bad.k = 0;
    CHECK_THROWS_AS(retrieval_precision_at_k({pair}, records, LshConfig{.dim = 4}, bad),
                    ConfigError);

    CHECK_THROWS_WITH(
        retrieval_precision_at_k({}, records, LshConfig{.dim = 4}, SearchConfig{}),
        Catch::Matchers::ContainsSubstring("no match pairs"));

    MatchPair ghost1 = pair, ghost2 = pair;
    ghost1.ground_truth_id = "ghost-a";
    ghost2.ground_truth_id = "ghost-b";
    CHECK_THROWS_WITH(retrieval_precision_at_k({ghost1, ghost2}, records, LshConfig{.dim = 4},
                                               SearchConfig{}),
                      Catch::Matchers::ContainsSubstring("missing from the corpus") &&
                          Catch::Matchers::ContainsSubstring("ghost-a, ghost-b"));
}

TEST_CASE("precision tracks an exhaustive oracle through distractors",
          "[evalkit][retrieval-eval]") {
    testsupport::Rng rng(20260819);
    const std::size_t dim = 32;
    const std::size_t n_pairs = 50;
    const std::size_t n_distractors = 5000;

    std::vector<ProductRecord> records;
    std::vector<MatchPair> pairs;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < n_pairs; ++i) {
        const Embedding center = testsupport::random_embedding(rng, dim);
        records.push_back(make_record("gt" + std::to_string(i), center, "item"));
        Embedding query(dim);
        for (std::size_t d = 0; d < dim; ++d)
            query[d] = center[d] + static_cast<float>(0.3 * normal(rng));
        MatchPair pair;
        pair.query = QueryObject{query, "item", std::nullopt};
        pair.ground_truth_id = "gt" + std::to_string(i);
        pairs.push_back(std::move(pair));
    }
    for (std::size_t i = 0; i < n_distractors; ++i)
        records.push_back(
            make_record("dx" + std::to_string(i), testsupport::random_embedding(rng, dim), "item"));

    SearchConfig config;
    config.k = 3;
    config.max_candidates = 500;
    const LshConfig lsh{.dim = 32, .num_bands = 16, .bits_per_band = 4, .seed = 99};
    const double engine_rate = retrieval_precision_at_k(pairs, records, lsh, config);

    // Oracle hit: fewer than k other documents strictly closer (hamming).
    std::size_t oracle_hits = 0;
    for (const MatchPair& pair : pairs) {
        const auto query_code = testsupport::naive_sign_code(pair.query.embedding);
        std::size_t gt_dist = 0;
        std::vector<std::size_t> other_dists;
        other_dists.reserve(records.size());
        for (const ProductRecord& record : records) {
            const std::size_t d =
                testsupport::naive_hamming(query_code, testsupport::naive_sign_code(record.embedding));
            if (record.id == pair.ground_truth_id) {
                gt_dist = d;
            } else {
                other_dists.push_back(d);
            }
        }
        const std::size_t closer =
            std::count_if(other_dists.begin(), other_dists.end(),
                          [&](std::size_t d) { return d < gt_dist; });
        oracle_hits += closer < config.k;
    }
    const double oracle_rate = static_cast<double>(oracle_hits) / n_pairs;

    INFO("engine " << engine_rate << " oracle " << oracle_rate);
    // The engine sees only token-sharing candidates, so it may keep a planted
    // match in its top-k even when the exhaustive scan finds k closer codes;
    // allow a few of the 50 pairs to disagree.
    CHECK(std::abs(engine_rate - oracle_rate) <= 0.06 + 1e-9);
}

TEST_CASE("precision is non-decreasing in k", "[evalkit][retrieval-eval]") {
    testsupport::Rng rng(333);
    std::vector<ProductRecord> records;
    std::vector<MatchPair> pairs;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        const Embedding center = testsupport::random_embedding(rng, 16);
        records.push_back(make_record("gt" + std::to_string(i), center, "item"));
        Embedding query(16);
        for (int d = 0; d < 16; ++d) query[d] = center[d] + static_cast<float>(0.8 * normal(rng));
        MatchPair pair;
        pair.query = QueryObject{query, "item", std::nullopt};
        pair.ground_truth_id = "gt" + std::to_string(i);
        pairs.push_back(std::move(pair));
    }
    for (int i = 0; i < 200; ++i)
        records.push_back(
            make_record("dx" + std::to_string(i), testsupport::random_embedding(rng, 16), "item"));

    const LshConfig lsh{.dim = 16, .num_bands = 8, .bits_per_band = 4, .seed = 4};
    double previous = -1.0;
    for (std::uint32_t k = 1; k <= 8; ++k) {
        SearchConfig config;
        config.k = k;
        config.max_candidates = 221;  // fixed: the full corpus
        const double rate = retrieval_precision_at_k(pairs, records, lsh, config);
        CHECK(rate >= previous);
        previous = rate;
    }
}

// ===========================================================================
// IoU and detection PR
// ===========================================================================

TEST_CASE("iou on documented examples", "[evalkit][detection]") {
    const auto a = box(0, 0, 2, 2, "c");
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, box(5, 5, 7, 7, "c")) == 0.0);
    CHECK(iou(box(0, 0, 2, 2, "c"), box(1, 0, 3, 2, "c")) == Catch::Approx(1.0 / 3.0));
    // Degenerate boxes never divide by zero.
    CHECK(iou(box(1, 1, 1, 1, "c"), box(1, 1, 1, 1, "c")) == 0.0);
}

TEST_CASE("perfect predictions give perfect PR", "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa"), box(20, 20, 30, 30, "Lamp")};
    DetectionSet pred;
    pred["img1"] = {box(0, 0, 10, 10, "Sofa", 1.0), box(20, 20, 30, 30, "Lamp", 1.0)};
    const auto pr = detection_pr(gt, pred, 0.5, 0.5);
    CHECK(pr.precision == 1.0);
    CHECK(pr.recall == 1.0);
    CHECK(pr.f1 == 1.0);
}

TEST_CASE("no surviving predictions means zero precision by convention", "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa")};
    DetectionSet pred;
    pred["img1"] = {box(0, 0, 10, 10, "Sofa", 0.2)};
    const auto pr = detection_pr(gt, pred, 0.5, 0.5);  // 0.2 < 0.5 threshold
    CHECK(pr.precision == 0.0);
    CHECK(pr.recall == 0.0);
    CHECK(pr.f1 == 0.0);
}

TEST_CASE("duplicate detections count as false positives", "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa"), box(20, 20, 30, 30, "Sofa")};
    DetectionSet pred;
    pred["img1"] = {
        box(0, 0, 10, 10, "Sofa", 0.9),    // matches first GT
        box(0, 1, 10, 11, "Sofa", 0.8),    // duplicate of first GT: FP
        box(20, 20, 30, 30, "Sofa", 0.7),  // matches second GT
    };
    const auto pr = detection_pr(gt, pred, 0.0, 0.5);
    CHECK(pr.precision == Catch::Approx(2.0 / 3.0));
    CHECK(pr.recall == 1.0);
    CHECK(pr.f1 == Catch::Approx(0.8));
}

TEST_CASE("matching requires the same category", "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa")};
    DetectionSet pred;
    pred["img1"] = {box(0, 0, 10, 10, "Lamp", 0.9)};
    const auto pr = detection_pr(gt, pred, 0.0, 0.5);
    CHECK(pr.precision == 0.0);
    CHECK(pr.recall == 0.0);
}

TEST_CASE("greedy matching consumes ground truths in score order", "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa")};
    DetectionSet pred;
    pred["img1"] = {
        box(0, 0, 10, 16, "Sofa", 0.9),  // IoU 10/16 = 0.625, higher score
        box(0, 0, 10, 10, "Sofa", 0.5),  // IoU 1.0, lower score: arrives too late
    };
    const auto pr = detection_pr(gt, pred, 0.0, 0.5);
    CHECK(pr.precision == 0.5);
    CHECK(pr.recall == 1.0);
}

TEST_CASE("equal-IoU ties go to the earlier ground-truth box", "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa"), box(0, 0, 10, 10, "Sofa")};
    DetectionSet pred;
    pred["img1"] = {box(0, 0, 10, 10, "Sofa", 0.9), box(0, 0, 10, 10, "Sofa", 0.8)};
    const auto pr = detection_pr(gt, pred, 0.0, 0.5);
    // Both predictions match (first claims GT[0], second claims GT[1]).
    CHECK(pr.precision == 1.0);
    CHECK(pr.recall == 1.0);
}

TEST_CASE("matches never cross images", "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa")};
    DetectionSet pred;
    pred["img2"] = {box(0, 0, 10, 10, "Sofa", 0.9)};
    const auto pr = detection_pr(gt, pred, 0.0, 0.5);
    CHECK(pr.precision == 0.0);
    CHECK(pr.recall == 0.0);
}

// ===========================================================================
// Operating threshold
// ===========================================================================

TEST_CASE("all-correct predictions pick the lowest score by the tie rule",
          "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa"), box(20, 20, 30, 30, "Sofa")};
    DetectionSet pred;
    pred["img1"] = {box(0, 0, 10, 10, "Sofa", 0.9), box(20, 20, 30, 30, "Sofa", 0.4)};
    CHECK(select_operating_threshold(gt, pred, 0.5) == 0.4);
}

TEST_CASE("a single correct prediction selects its own score", "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa")};
    DetectionSet pred;
    pred["img1"] = {box(0, 0, 10, 10, "Sofa", 0.35)};
    CHECK(select_operating_threshold(gt, pred, 0.5) == 0.35);
}

TEST_CASE("dropping a low-score false positive raises the threshold", "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa"), box(20, 20, 30, 30, "Sofa")};
    DetectionSet pred;
    pred["img1"] = {
        box(0, 0, 10, 10, "Sofa", 0.9),
        box(20, 20, 30, 30, "Sofa", 0.8),
        box(50, 50, 60, 60, "Sofa", 0.1),  // false positive
    };
    // At 0.1: P=2/3, R=1, F1=0.8. At 0.8: P=1, R=1, F1=1.
    CHECK(select_operating_threshold(gt, pred, 0.5) == 0.8);
}

TEST_CASE("threshold selection requires predictions", "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa")};
    CHECK_THROWS_WITH(select_operating_threshold(gt, {}, 0.5),
                      Catch::Matchers::ContainsSubstring("no predictions"));
}

TEST_CASE("threshold selection agrees with an exhaustive scan on random fixtures",
          "[evalkit][detection]") {
    testsupport::Rng rng(13579);
    std::uniform_real_distribution<double> coord(0.0, 80.0);
    std::uniform_real_distribution<double> size(5.0, 20.0);
    std::uniform_real_distribution<double> score(0.0, 1.0);
    std::uniform_int_distribution<int> count(1, 6);
    std::uniform_int_distribution<int> flip(0, 3);
    const std::vector<std::string> classes = {"Sofa", "Lamp"};

    for (int round = 0; round < 60; ++round) {
        DetectionSet gt, pred;
        const int images = count(rng);
        for (int i = 0; i < images; ++i) {
            const std::string image = "img" + std::to_string(i);
            const int boxes = count(rng);
            for (int b = 0; b < boxes; ++b) {
                const double x = coord(rng), y = coord(rng), w = size(rng), h = size(rng);
                const std::string category = classes[flip(rng) % 2];
                gt[image].push_back(box(x, y, x + w, y + h, category));
                if (flip(rng) != 0) {  // usually predict near the truth
                    const double jx = flip(rng) * 1.5, jy = flip(rng) * 1.5;
                    pred[image].push_back(
                        box(x + jx, y + jy, x + w + jx, y + h + jy, category, score(rng)));
                }
                if (flip(rng) == 0) {  // sometimes a stray false positive
                    const double fx = coord(rng), fy = coord(rng);
                    pred[image].push_back(
                        box(fx, fy, fx + size(rng), fy + size(rng), category, score(rng)));
                }
            }
        }
        if (pred.empty()) continue;

        const double chosen = select_operating_threshold(gt, pred, 0.5);
        const auto [oracle_threshold, oracle_f1] =
            testsupport::exhaustive_best_f1_threshold(gt, pred, 0.5);
        CHECK(chosen == oracle_threshold);
        CHECK(detection_pr(gt, pred, chosen, 0.5).f1 == Catch::Approx(oracle_f1).margin(1e-12));
    }
}

TEST_CASE("per-class thresholds are selected independently", "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa"), box(20, 20, 30, 30, "Lamp")};
    DetectionSet pred;
    pred["img1"] = {
        box(0, 0, 10, 10, "Sofa", 0.9),
        box(40, 40, 50, 50, "Sofa", 0.2),   // Sofa FP: per-class threshold climbs to 0.9
        box(20, 20, 30, 30, "Lamp", 0.3),   // only Lamp prediction, correct
    };
    const auto thresholds = select_operating_thresholds_per_class(gt, pred, 0.5);
    REQUIRE(thresholds.size() == 2);
    CHECK(thresholds.at("Sofa") == 0.9);
    CHECK(thresholds.at("Lamp") == 0.3);
}

// ===========================================================================
// mAP
// ===========================================================================

TEST_CASE("perfect predictions give unit mAP", "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa"), box(20, 20, 30, 30, "Sofa")};
    DetectionSet pred;
    pred["img1"] = {box(0, 0, 10, 10, "Sofa", 0.9), box(20, 20, 30, 30, "Sofa", 0.8)};
    CHECK(detection_map(gt, pred, 0.5) == 1.0);
}

TEST_CASE("zero predictions give zero mAP", "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa")};
    CHECK(detection_map(gt, {}, 0.5) == 0.0);
    // No ground truth at all also yields 0 (no classes to average).
    CHECK(detection_map({}, {}, 0.5) == 0.0);
}

TEST_CASE("the hand-traced three-prediction AP", "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa"), box(20, 20, 30, 30, "Sofa")};
    DetectionSet pred;
    pred["img1"] = {
        box(0, 0, 10, 10, "Sofa", 0.9),    // correct
        box(50, 50, 60, 60, "Sofa", 0.8),  // wrong
        box(20, 20, 30, 30, "Sofa", 0.7),  // correct
    };
    // Sweep: ranks (TP, FP, TP) -> precision 1, 1/2, 2/3; recall 0.5, 0.5, 1.
    // Envelope: 1, 2/3, 2/3. AP = 0.5*1 + 0.5*(2/3).
    const double expected = 0.5 * 1.0 + 0.5 * (2.0 / 3.0);
    CHECK(detection_map(gt, pred, 0.5) == Catch::Approx(expected).margin(1e-9));
    CHECK(detection_map(gt, pred, 0.5) == Catch::Approx(0.833333333333).margin(1e-9));
}

TEST_CASE("mAP averages over ground-truth classes only", "[evalkit][detection]") {
    DetectionSet gt;
    gt["img1"] = {box(0, 0, 10, 10, "Sofa"), box(20, 20, 30, 30, "Lamp")};
    DetectionSet pred;
    pred["img1"] = {
        box(0, 0, 10, 10, "Sofa", 0.9),        // Sofa perfect: AP 1
        box(70, 70, 80, 80, "Mirror", 0.8),    // class absent from GT: ignored
    };                                         // Lamp has no predictions: AP 0
    CHECK(detection_map(gt, pred, 0.5) == 0.5);
}

TEST_CASE("mAP depends only on score ordering", "[evalkit][detection]") {
    testsupport::Rng rng(24680);
    std::uniform_real_distribution<double> coord(0.0, 80.0);
    std::uniform_real_distribution<double> size(5.0, 20.0);
    std::uniform_real_distribution<double> score(0.01, 0.99);
    std::uniform_int_distribution<int> count(1, 5);
    std::uniform_int_distribution<int> flip(0, 2);

    for (int round = 0; round < 30; ++round) {
        DetectionSet gt, pred;
        for (int i = 0; i < count(rng); ++i) {
            const std::string image = "img" + std::to_string(i);
            for (int b = 0; b < count(rng); ++b) {
                const double x = coord(rng), y = coord(rng), w = size(rng), h = size(rng);
                gt[image].push_back(box(x, y, x + w, y + h, "Sofa"));
                if (flip(rng) != 0)
                    pred[image].push_back(box(x, y, x + w, y + h, "Sofa", score(rng)));
                if (flip(rng) == 0) {
                    const double fx = coord(rng), fy = coord(rng);
                    pred[image].push_back(
                        box(fx, fy, fx + size(rng), fy + size(rng), "Sofa", score(rng)));
                }
            }
        }
        const double base = detection_map(gt, pred, 0.5);

        DetectionSet transformed = pred;
        for (auto& [image, boxes] : transformed)
            for (auto& b : boxes) b.score = 0.1 + 0.8 * std::pow(*b.score, 3.0);  // monotone
        CHECK(detection_map(gt, transformed, 0.5) == base);
    }
}

// ===========================================================================
// Category rollup
// ===========================================================================

TEST_CASE("rollup maps fine categories to coarse ones", "[evalkit][detection]") {
    DetectionSet set;
    set["img1"] = {box(0, 0, 10, 10, "Sofa", 0.5), box(20, 20, 30, 30, "Chair", 0.6)};

    const std::map<std::string, std::string> identity = {{"Sofa", "Sofa"}, {"Chair", "Chair"}};
    CHECK(rollup_categories(set, identity) == set);

    const std::map<std::string, std::string> coarse = {{"Sofa", "Furniture"},
                                                       {"Chair", "Furniture"}};
    const auto rolled = rollup_categories(set, coarse);
    for (const auto& [image, boxes] : rolled)
        for (const auto& b : boxes) CHECK(b.category == "Furniture");
    // Geometry and scores are untouched.
    CHECK(rolled.at("img1")[0].x_max == 10.0);
    CHECK(rolled.at("img1")[1].score == 0.6);

    const std::map<std::string, std::string> partial = {{"Sofa", "Furniture"}};
    CHECK_THROWS_WITH(rollup_categories(set, partial),
                      Catch::Matchers::ContainsSubstring("no rollup mapping for category: Chair"));
}

// ===========================================================================
// Relevance@K
// ===========================================================================

TEST_CASE("uniform rating sheets hit the documented extremes", "[evalkit][relevance]") {
    std::vector<RelevanceRating> all_extreme, all_bad;
    for (int q = 0; q < 3; ++q) {
        for (std::uint32_t r = 1; r <= 5; ++r) {
            all_extreme.push_back({"q" + std::to_string(q), r, Rating::ExtremelySimilar});
            all_bad.push_back({"q" + std::to_string(q), r, Rating::DidNotLoad});
        }
    }
    const auto top = relevance_at_k(all_extreme, 5);
    CHECK(top.similar_p_at_k == 1.0);
    CHECK(top.extremely_similar_p_at_k == 1.0);
    CHECK(top.bad_rate == 0.0);
    CHECK(top.coverage == 1.0);

    const auto bottom = relevance_at_k(all_bad, 5);
    CHECK(bottom.similar_p_at_k == 0.0);
    CHECK(bottom.extremely_similar_p_at_k == 0.0);
    CHECK(bottom.bad_rate == 1.0);
}

TEST_CASE("the documented mixed sheet computes (0.8, 0.2, 0.2)", "[evalkit][relevance]") {
    // 2 queries x 5 slots: 6 Similar, 2 ExtremelySimilar, 2 NotSimilar.
    std::vector<RelevanceRating> ratings = {
        {"q1", 1, Rating::Similar},          {"q1", 2, Rating::Similar},
        {"q1", 3, Rating::Similar},          {"q1", 4, Rating::ExtremelySimilar},
        {"q1", 5, Rating::NotSimilar},       {"q2", 1, Rating::Similar},
        {"q2", 2, Rating::Similar},          {"q2", 3, Rating::Similar},
        {"q2", 4, Rating::ExtremelySimilar}, {"q2", 5, Rating::NotSimilar},
    };
    const auto summary = relevance_at_k(ratings, 5);
    CHECK(summary.similar_p_at_k == Catch::Approx(0.8));
    CHECK(summary.extremely_similar_p_at_k == Catch::Approx(0.2));
    CHECK(summary.bad_rate == Catch::Approx(0.2));
    CHECK(summary.similar_exclusive_p_at_k == Catch::Approx(0.6));
    CHECK(summary.rated_slots == 10);
    CHECK(summary.total_slots == 10);
    CHECK(summary.coverage == 1.0);
    // Invariants over fully rated slots.
    CHECK(summary.extremely_similar_p_at_k <= summary.similar_p_at_k);
    CHECK(summary.similar_p_at_k + summary.bad_rate == Catch::Approx(1.0));
}

TEST_CASE("unrated slots lower coverage but not the fractions", "[evalkit][relevance]") {
    std::vector<RelevanceRating> ratings = {
        {"q1", 1, Rating::Similar},
        {"q1", 2, Rating::NotSimilar},
        // ranks 3..5 of q1 unrated; q2 fully unrated is simply absent
    };
    const auto summary = relevance_at_k(ratings, 5);
    CHECK(summary.rated_slots == 2);
    CHECK(summary.total_slots == 5);  // one query seen
    CHECK(summary.coverage == Catch::Approx(0.4));
    CHECK(summary.similar_p_at_k == Catch::Approx(0.5));
    CHECK(summary.bad_rate == Catch::Approx(0.5));
}

TEST_CASE("ratings beyond rank k are ignored", "[evalkit][relevance]") {
    std::vector<RelevanceRating> ratings = {
        {"q1", 1, Rating::Similar},
        {"q1", 2, Rating::Similar},
        {"q1", 3, Rating::NotSimilar},  // beyond k=2
    };
    const auto summary = relevance_at_k(ratings, 2);
    CHECK(summary.similar_p_at_k == 1.0);
    CHECK(summary.rated_slots == 2);
    CHECK(summary.total_slots == 2);
}

TEST_CASE("relevance rejects bad inputs", "[evalkit][relevance]") {
    CHECK_THROWS_AS(relevance_at_k({{"q1", 1, Rating::Similar}}, 0), ConfigError);
    CHECK_THROWS_WITH(relevance_at_k({}, 5),
                      Catch::Matchers::ContainsSubstring("no relevance ratings"));
    const std::vector<RelevanceRating> dupes = {
        {"q1", 1, Rating::Similar},
        {"q1", 1, Rating::NotSimilar},
    };
    CHECK_THROWS_WITH(relevance_at_k(dupes, 5),
                      Catch::Matchers::ContainsSubstring("duplicate rating") &&
                          Catch::Matchers::ContainsSubstring("q1"));
}

// ===========================================================================
// Label metrics
// ===========================================================================

TEST_CASE("unanimous labelers are perfectly consistent", "[evalkit][labels]") {
    const std::vector<LabelEvent> events = {
        event("q1", "alice", "A"), event("q1", "bob", "A"),
        event("q2", "alice", "B"), event("q2", "bob", "B"),
    };
    CHECK(label_consistency(events) == 1.0);
    CHECK(calibration_rate(events) == 1.0);
}

TEST_CASE("one dissenter among three labelers gives two-thirds", "[evalkit][labels]") {
    const std::vector<LabelEvent> events = {
        event("q1", "alice", "A"),
        event("q1", "bob", "A"),
        event("q1", "carol", "B"),
    };
    CHECK(label_consistency(events) == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("consistency is the unweighted mean over questions", "[evalkit][labels]") {
    const std::vector<LabelEvent> events = {
        event("q1", "alice", "A"), event("q1", "bob", "A"),    // agreement 1.0
        event("q2", "alice", "A"), event("q2", "bob", "B"),    // agreement 0.5
    };
    CHECK(label_consistency(events) == Catch::Approx(0.75));
}

TEST_CASE("accuracy counts events matching the golden answer", "[evalkit][labels]") {
    const std::vector<LabelEvent> events = {
        event("q1", "alice", "A"),
        event("q1", "bob", "A"),
        event("q1", "carol", "B"),
        event("q2", "alice", "X"),
    };
    const std::map<std::string, std::string> golden = {{"q1", "A"}, {"q2", "X"}};
    CHECK(label_accuracy(events, golden) == Catch::Approx(0.75));

    const std::map<std::string, std::string> wrong = {{"q1", "Z"}, {"q2", "Z"}};
    CHECK(label_accuracy(events, wrong) == 0.0);

    const std::map<std::string, std::string> partial = {{"q1", "A"}};
    CHECK_THROWS_WITH(label_accuracy(events, partial),
                      Catch::Matchers::ContainsSubstring("no golden answer for question: q2"));
}

TEST_CASE("calibration threshold is inclusive", "[evalkit][labels]") {
    // One question with exactly 4-of-5 agreement (0.8).
    const std::vector<LabelEvent> at_threshold = {
        event("q1", "l1", "A"), event("q1", "l2", "A"), event("q1", "l3", "A"),
        event("q1", "l4", "A"), event("q1", "l5", "B"),
    };
    CHECK(calibration_rate(at_threshold, 0.8) == 1.0);

    // Agreements {1.0, 0.6, 0.9} -> 2/3 at threshold 0.8.
    std::vector<LabelEvent> mixed;
    for (int l = 0; l < 5; ++l) mixed.push_back(event("q1", "l" + std::to_string(l), "A"));
    for (int l = 0; l < 3; ++l) mixed.push_back(event("q2", "l" + std::to_string(l), "A"));
    mixed.push_back(event("q2", "l3", "B"));
    mixed.push_back(event("q2", "l4", "C"));  // q2: 3/5 = 0.6
    for (int l = 0; l < 9; ++l) mixed.push_back(event("q3", "l" + std::to_string(l), "A"));
    mixed.push_back(event("q3", "l9", "B"));  // q3: 9/10 = 0.9
    CHECK(calibration_rate(mixed, 0.8) == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("duplicate answers from one labeler are rejected", "[evalkit][labels]") {
    const std::vector<LabelEvent> events = {
        event("q1", "alice", "A"),
        event("q1", "alice", "B"),
    };
    CHECK_THROWS_WITH(label_consistency(events),
                      Catch::Matchers::ContainsSubstring("duplicate answer") &&
                          Catch::Matchers::ContainsSubstring("alice"));
    CHECK_THROWS_WITH(label_consistency({}),
                      Catch::Matchers::ContainsSubstring("no label events"));
}

TEST_CASE("label metrics ignore event order", "[evalkit][labels]") {
    testsupport::Rng rng(97531);
    std::vector<LabelEvent> events;
    std::uniform_int_distribution<int> answer(0, 2);
    for (int q = 0; q < 8; ++q)
        for (int l = 0; l < 5; ++l)
            events.push_back(event("q" + std::to_string(q), "l" + std::to_string(l),
                                   std::string(1, static_cast<char>('A' + answer(rng)))));
    std::map<std::string, std::string> golden;
    for (int q = 0; q < 8; ++q) golden["q" + std::to_string(q)] = "A";

    const double consistency = label_consistency(events);
    const double calibration = calibration_rate(events, 0.6);
    const double accuracy = label_accuracy(events, golden);
    for (int round = 0; round < 5; ++round) {
        std::shuffle(events.begin(), events.end(), rng);
        CHECK(label_consistency(events) == consistency);
        CHECK(calibration_rate(events, 0.6) == calibration);
        CHECK(label_accuracy(events, golden) == accuracy);
    }
}

// ===========================================================================
// JSONL parsers
// ===========================================================================

TEST_CASE("match pairs parse and validate", "[evalkit][parsers]") {
    std::istringstream good(
        R"({"query_embedding":[0.5,-1.5],"predicted_category":"Sofa","ground_truth_id":"p1"})"
        "\n");
    const auto pairs = parse_match_pairs(good);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].query.embedding == Embedding{0.5f, -1.5f});
    CHECK(pairs[0].query.predicted_category == "Sofa");
    CHECK(pairs[0].ground_truth_id == "p1");

    std::istringstream bad_dim(
        R"({"query_embedding":[1,2],"predicted_category":"a","ground_truth_id":"x"})" "\n"
        R"({"query_embedding":[1,2,3],"predicted_category":"a","ground_truth_id":"y"})" "\n");
    CHECK_THROWS_WITH(parse_match_pairs(bad_dim),
                      Catch::Matchers::ContainsSubstring("match pairs line 2") &&
                          Catch::Matchers::ContainsSubstring("dimension 3, expected 2"));

    std::istringstream missing(R"({"predicted_category":"a","ground_truth_id":"x"})" "\n");
    CHECK_THROWS_WITH(parse_match_pairs(missing),
                      Catch::Matchers::ContainsSubstring("query_embedding"));

    std::istringstream not_json("not json\n");
    CHECK_THROWS_WITH(parse_match_pairs(not_json),
                      Catch::Matchers::ContainsSubstring("invalid JSON"));
}

TEST_CASE("detection sets parse with score discipline", "[evalkit][parsers]") {
    std::istringstream gt_good(
        R"({"image_id":"img1","boxes":[{"x_min":0,"y_min":0,"x_max":10,"y_max":10,"category":"Sofa"}]})"
        "\n"
        R"({"image_id":"img1","boxes":[{"x_min":5,"y_min":5,"x_max":15,"y_max":15,"category":"Lamp"}]})"
        "\n");
    const auto gt = parse_detection_set(gt_good, false);
    REQUIRE(gt.size() == 1);
    CHECK(gt.at("img1").size() == 2);  // repeated image ids accumulate

    std::istringstream gt_scored(
        R"({"image_id":"i","boxes":[{"x_min":0,"y_min":0,"x_max":1,"y_max":1,"category":"c","score":0.5}]})"
        "\n");
    CHECK_THROWS_WITH(parse_detection_set(gt_scored, false),
                      Catch::Matchers::ContainsSubstring("must not carry a score"));

    std::istringstream pred_unscored(
        R"({"image_id":"i","boxes":[{"x_min":0,"y_min":0,"x_max":1,"y_max":1,"category":"c"}]})"
        "\n");
    CHECK_THROWS_WITH(parse_detection_set(pred_unscored, true),
                      Catch::Matchers::ContainsSubstring("missing its score"));

    std::istringstream out_of_range(
        R"({"image_id":"i","boxes":[{"x_min":0,"y_min":0,"x_max":1,"y_max":1,"category":"c","score":1.5}]})"
        "\n");
    CHECK_THROWS_WITH(parse_detection_set(out_of_range, true),
                      Catch::Matchers::ContainsSubstring("score must be in [0, 1]"));

    std::istringstream inverted(
        R"({"image_id":"i","boxes":[{"x_min":5,"y_min":0,"x_max":1,"y_max":1,"category":"c"}]})"
        "\n");
    CHECK_THROWS_WITH(parse_detection_set(inverted, false),
                      Catch::Matchers::ContainsSubstring("x_min < x_max"));

    std::istringstream negative(
        R"({"image_id":"i","boxes":[{"x_min":-1,"y_min":0,"x_max":1,"y_max":1,"category":"c"}]})"
        "\n");
    CHECK_THROWS_WITH(parse_detection_set(negative, false),
                      Catch::Matchers::ContainsSubstring("non-negative"));
}

TEST_CASE("relevance ratings parse", "[evalkit][parsers]") {
    std::istringstream good(
        R"({"query_id":"q1","rank":1,"rating":"ExtremelySimilar"})" "\n"
        R"({"query_id":"q1","rank":2,"rating":"DidNotLoad"})" "\n");
    const auto ratings = parse_relevance_ratings(good);
    REQUIRE(ratings.size() == 2);
    CHECK(ratings[0].rating == Rating::ExtremelySimilar);
    CHECK(ratings[1].rank == 2);

    std::istringstream zero_rank(R"({"query_id":"q1","rank":0,"rating":"Similar"})" "\n");
    CHECK_THROWS_WITH(parse_relevance_ratings(zero_rank),
                      Catch::Matchers::ContainsSubstring("positive integer"));

    std::istringstream bad_rating(R"({"query_id":"q1","rank":1,"rating":"Great"})" "\n");
    CHECK_THROWS_WITH(parse_relevance_ratings(bad_rating),
                      Catch::Matchers::ContainsSubstring("unknown rating: Great"));
}

TEST_CASE("label events and golden answers parse", "[evalkit][parsers]") {
    std::istringstream events_in(
        R"({"question_id":"q1","labeler_id":"alice","answer":"A"})" "\n");
    const auto events = parse_label_events(events_in);
    REQUIRE(events.size() == 1);
    CHECK(events[0] == event("q1", "alice", "A"));

    std::istringstream golden_in(
        R"({"question_id":"q1","answer":"A"})" "\n"
        R"({"question_id":"q2","answer":"B"})" "\n");
    const auto golden = parse_golden_answers(golden_in);
    CHECK(golden.size() == 2);
    CHECK(golden.at("q2") == "B");

    std::istringstream dupes(
        R"({"question_id":"q1","answer":"A"})" "\n"
        R"({"question_id":"q1","answer":"B"})" "\n");
    CHECK_THROWS_WITH(parse_golden_answers(dupes),
                      Catch::Matchers::ContainsSubstring("golden answers line 2") &&
                          Catch::Matchers::ContainsSubstring("duplicate golden answer"));
}

TEST_CASE("rating labels round-trip through text", "[evalkit]") {
    for (Rating rating : {Rating::ExtremelySimilar, Rating::Similar, Rating::MarginallySimilar,
                          Rating::NotSimilar, Rating::DidNotLoad})
        CHECK(rating_from_text(rating_text(rating)) == rating);
    CHECK_THROWS_AS(rating_from_text("similar"), DataError);  // case-sensitive
}
