#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokann/error.hpp"
#include "tokann/index.hpp"
#include "tokann/retrieval.hpp"
#include "tokann/types.hpp"

namespace tokann {

// ===========================================================================
// Retrieval evaluation: P@K over a ground-truth + distractor corpus
// ===========================================================================

/// One evaluation query paired with the id of its true product.
struct MatchPair {
    QueryObject query;
    std::string ground_truth_id;

    friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

/// Fraction of pairs whose ground-truth id appears in the top config.k
/// results when searching an index built over `records` (ground truths plus
/// distractors). Restrictions are not applied; routing follows each query's
/// predicted category.
inline double retrieval_precision_at_k(const std::vector<MatchPair>& pairs,
                                       const std::vector<ProductRecord>& records,
                                       const LshConfig& lsh_config,
                                       const SearchConfig& search_config) {
    search_config.validate();
    if (pairs.empty()) throw DataError("no match pairs to evaluate");

    std::set<std::string_view> ids;
    for (const ProductRecord& record : records) ids.insert(record.id);
    std::string missing;
    for (const MatchPair& pair : pairs) {
        if (!ids.contains(pair.ground_truth_id)) {
            if (!missing.empty()) missing += ", ";
            missing += pair.ground_truth_id;
        }
    }
    if (!missing.empty())
        throw DataError("ground truth ids missing from the corpus: " + missing);

    const IndexShardSet set = build_index(records, lsh_config);
    const RestrictionPtr match_all = make_match_all();
    std::size_t hits = 0;
    for (const MatchPair& pair : pairs) {
        const std::vector<SearchResult> results =
            search(set, pair.query, match_all, search_config);
        for (const SearchResult& result : results) {
            if (result.id == pair.ground_truth_id) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

// ===========================================================================
// Detection evaluation: IoU, P/R/F1, operating threshold, mAP
// ===========================================================================

/// Boxes grouped by image id. Ground-truth boxes carry no score; predicted
/// boxes carry a score in [0, 1].
using DetectionSet = std::map<std::string, std::vector<BoundingBox>, std::less<>>;

/// Intersection-over-union of two boxes. Degenerate (zero-area) inputs with
/// no overlap yield 0.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
    const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    const double intersection = ix * iy;
    const double uni = a.area() + b.area() - intersection;
    return uni > 0.0 ? intersection / uni : 0.0;
}

struct DetectionPr {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    friend bool operator==(const DetectionPr&, const DetectionPr&) = default;
};

namespace detail {

struct RankedPrediction {
    double score = 0.0;
    const std::string* image_id = nullptr;
    const BoundingBox* box = nullptr;
    std::size_t index = 0;  ///< position within its image's box list
};

/// All predictions in the canonical ranking order: score descending, ties by
/// image id then original list position, so every sweep is deterministic.
inline std::vector<RankedPrediction> ranked_predictions(const DetectionSet& predictions) {
    std::vector<RankedPrediction> ranked;
    for (const auto& [image_id, boxes] : predictions) {
        for (std::size_t i = 0; i < boxes.size(); ++i)
            ranked.push_back(RankedPrediction{boxes[i].score.value_or(0.0), &image_id,
                                              &boxes[i], i});
    }
    std::sort(ranked.begin(), ranked.end(),
              [](const RankedPrediction& a, const RankedPrediction& b) {
                  if (a.score != b.score) return a.score > b.score;
                  if (*a.image_id != *b.image_id) return *a.image_id < *b.image_id;
                  return a.index < b.index;
              });
    return ranked;
}

/// Greedy matcher over one ranked prediction sweep. Each prediction claims
/// the unmatched same-image, same-category ground-truth box with the highest
/// IoU >= iou_threshold (ties toward the earlier box). Returns per-prediction
/// true/false-positive flags.
class GreedyMatcher {
public:
    explicit GreedyMatcher(const DetectionSet& ground_truth) : ground_truth_(&ground_truth) {}

    bool try_match(const RankedPrediction& prediction, double iou_threshold) {
        auto gt_it = ground_truth_->find(*prediction.image_id);
        if (gt_it == ground_truth_->end()) return false;
        const std::vector<BoundingBox>& gt_boxes = gt_it->second;
        std::vector<bool>& used = used_[*prediction.image_id];
        used.resize(gt_boxes.size(), false);
        double best_iou = 0.0;
        std::size_t best = gt_boxes.size();
        for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
            if (used[g] || gt_boxes[g].category != prediction.box->category) continue;
            const double overlap = iou(*prediction.box, gt_boxes[g]);
            if (overlap >= iou_threshold && overlap > best_iou) {
                best_iou = overlap;
                best = g;
            }
        }
        if (best == gt_boxes.size()) return false;
        used[best] = true;
        return true;
    }

private:
    const DetectionSet* ground_truth_;
    std::map<std::string, std::vector<bool>, std::less<>> used_;
};

inline std::size_t count_boxes(const DetectionSet& set) {
    std::size_t n = 0;
    for (const auto& [_, boxes] : set) n += boxes.size();
    return n;
}

}  // namespace detail

/// Precision/recall/F1 at one operating point. Predictions scoring below
/// score_threshold are dropped; the rest are matched greedily in descending
/// score order. With no surviving predictions, precision is 0 by convention
/// (keeping F1 total); with no ground-truth boxes, recall is 0.
inline DetectionPr detection_pr(const DetectionSet& ground_truth, const DetectionSet& predictions,
                                double score_threshold, double iou_threshold) {
    detail::GreedyMatcher matcher(ground_truth);
    std::size_t tp = 0;
    std::size_t considered = 0;
    for (const detail::RankedPrediction& prediction : detail::ranked_predictions(predictions)) {
        if (prediction.score < score_threshold) continue;
        ++considered;
        if (matcher.try_match(prediction, iou_threshold)) ++tp;
    }
    const std::size_t total_gt = detail::count_boxes(ground_truth);
    DetectionPr pr;
    pr.precision = considered > 0 ? static_cast<double>(tp) / considered : 0.0;
    pr.recall = total_gt > 0 ? static_cast<double>(tp) / total_gt : 0.0;
    pr.f1 = (pr.precision + pr.recall) > 0.0
                ? 2.0 * pr.precision * pr.recall / (pr.precision + pr.recall)
                : 0.0;
    return pr;
}

/// Scans the sorted distinct prediction scores as candidate thresholds and
/// returns the one maximizing F1; ties resolve to the lowest threshold
/// (favoring recall).
inline double select_operating_threshold(const DetectionSet& ground_truth,
                                         const DetectionSet& predictions,
                                         double iou_threshold) {
    std::set<double> scores;
    for (const auto& [_, boxes] : predictions)
        for (const BoundingBox& box : boxes) scores.insert(box.score.value_or(0.0));
    if (scores.empty())
        throw DataError("cannot select an operating threshold: no predictions");
    double best_threshold = 0.0;
    double best_f1 = -1.0;
    for (double threshold : scores) {
        const double f1 = detection_pr(ground_truth, predictions, threshold, iou_threshold).f1;
        if (f1 > best_f1) {
            best_f1 = f1;
            best_threshold = threshold;
        }
    }
    return best_threshold;
}

/// The subset of a detection set whose boxes carry the given category.
/// Images left with no boxes are dropped.
inline DetectionSet filter_detections_by_category(const DetectionSet& set,
                                                  const std::string& category) {
    DetectionSet out;
    for (const auto& [image_id, boxes] : set) {
        std::vector<BoundingBox> kept;
        for (const BoundingBox& box : boxes)
            if (box.category == category) kept.push_back(box);
        if (!kept.empty()) out.emplace(image_id, std::move(kept));
    }
    return out;
}

/// Per-class operating thresholds (classes = categories present in the
/// predictions), each selected independently by the global rule.
inline std::map<std::string, double> select_operating_thresholds_per_class(
    const DetectionSet& ground_truth, const DetectionSet& predictions, double iou_threshold) {
    std::set<std::string> classes;
    for (const auto& [_, boxes] : predictions)
        for (const BoundingBox& box : boxes) classes.insert(box.category);
    if (classes.empty())
        throw DataError("cannot select an operating threshold: no predictions");
    std::map<std::string, double> out;
    for (const std::string& category : classes) {
        out[category] =
            select_operating_threshold(filter_detections_by_category(ground_truth, category),
                                       filter_detections_by_category(predictions, category),
                                       iou_threshold);
    }
    return out;
}

/// Mean average precision over classes with at least one ground-truth box.
/// Per class, AP is the area under the precision-recall curve swept over the
/// ranked predictions, with precision made monotonically non-increasing from
/// right to left (all-points interpolation).
inline double detection_map(const DetectionSet& ground_truth, const DetectionSet& predictions,
                            double iou_threshold) {
    std::set<std::string> classes;
    for (const auto& [_, boxes] : ground_truth)
        for (const BoundingBox& box : boxes) classes.insert(box.category);
    if (classes.empty()) return 0.0;

    double ap_sum = 0.0;
    for (const std::string& category : classes) {
        const DetectionSet class_gt = filter_detections_by_category(ground_truth, category);
        const DetectionSet class_pred = filter_detections_by_category(predictions, category);
        const std::size_t total_gt = detail::count_boxes(class_gt);

        detail::GreedyMatcher matcher(class_gt);
        std::vector<double> precision;
        std::vector<double> recall;
        std::size_t tp = 0;
        std::size_t seen = 0;
        for (const detail::RankedPrediction& prediction :
             detail::ranked_predictions(class_pred)) {
            ++seen;
            if (matcher.try_match(prediction, iou_threshold)) ++tp;
            precision.push_back(static_cast<double>(tp) / seen);
            recall.push_back(static_cast<double>(tp) / total_gt);
        }
        // Monotone envelope, then sum precision over recall increments.
        for (std::size_t i = precision.size(); i-- > 1;)
            precision[i - 1] = std::max(precision[i - 1], precision[i]);
        double ap = 0.0;
        double previous_recall = 0.0;
        for (std::size_t i = 0; i < precision.size(); ++i) {
            ap += (recall[i] - previous_recall) * precision[i];
            previous_recall = recall[i];
        }
        ap_sum += ap;
    }
    return ap_sum / static_cast<double>(classes.size());
}

/// Replaces every box's category by its coarse category. Any category
/// without a mapping entry is an error.
inline DetectionSet rollup_categories(const DetectionSet& set,
                                      const std::map<std::string, std::string>& mapping) {
    DetectionSet out;
    for (const auto& [image_id, boxes] : set) {
        std::vector<BoundingBox> mapped = boxes;
        for (BoundingBox& box : mapped) {
            auto it = mapping.find(box.category);
            if (it == mapping.end())
                throw DataError("no rollup mapping for category: " + box.category);
            box.category = it->second;
        }
        out.emplace(image_id, std::move(mapped));
    }
    return out;
}

// ===========================================================================
// End-to-end relevance ratings
// ===========================================================================

enum class Rating { ExtremelySimilar, Similar, MarginallySimilar, NotSimilar, DidNotLoad };

inline Rating rating_from_text(std::string_view text) {
    if (text == "ExtremelySimilar") return Rating::ExtremelySimilar;
    if (text == "Similar") return Rating::Similar;
    if (text == "MarginallySimilar") return Rating::MarginallySimilar;
    if (text == "NotSimilar") return Rating::NotSimilar;
    if (text == "DidNotLoad") return Rating::DidNotLoad;
    throw DataError("unknown rating: " + std::string(text));
}

inline std::string_view rating_text(Rating rating) {
    switch (rating) {
        case Rating::ExtremelySimilar: return "ExtremelySimilar";
        case Rating::Similar: return "Similar";
        case Rating::MarginallySimilar: return "MarginallySimilar";
        case Rating::NotSimilar: return "NotSimilar";
        case Rating::DidNotLoad: return "DidNotLoad";
    }
    return "?";
}

struct RelevanceRating {
    std::string query_id;
    std::uint32_t rank = 1;  ///< 1-based result position
    Rating rating = Rating::NotSimilar;

    friend bool operator==(const RelevanceRating&, const RelevanceRating&) = default;
};

struct RelevanceSummary {
    double similar_p_at_k = 0.0;             ///< Similar or ExtremelySimilar
    double extremely_similar_p_at_k = 0.0;
    double bad_rate = 0.0;                   ///< MarginallySimilar/NotSimilar/DidNotLoad
    double similar_exclusive_p_at_k = 0.0;   ///< Similar only
    std::size_t rated_slots = 0;
    std::size_t total_slots = 0;             ///< queries x k
    double coverage = 0.0;                   ///< rated_slots / total_slots

    friend bool operator==(const RelevanceSummary&, const RelevanceSummary&) = default;
};

/// Aggregates ratings over all (query, rank <= k) slots. Fractions are over
/// rated slots only; unrated slots appear in coverage.
inline RelevanceSummary relevance_at_k(const std::vector<RelevanceRating>& ratings,
                                       std::uint32_t k) {
    if (k == 0) throw ConfigError("relevance_at_k: k must be positive");
    if (ratings.empty()) throw DataError("no relevance ratings to evaluate");
    std::set<std::pair<std::string_view, std::uint32_t>> seen;
    std::set<std::string_view> queries;
    std::size_t similar = 0, extremely = 0, bad = 0, exclusive = 0, rated = 0;
    for (const RelevanceRating& rating : ratings) {
        if (rating.rank == 0) throw DataError("rating rank must be at least 1");
        if (!seen.emplace(rating.query_id, rating.rank).second)
            throw DataError("duplicate rating for query \"" + rating.query_id + "\" rank " +
                            std::to_string(rating.rank));
        queries.insert(rating.query_id);
        if (rating.rank > k) continue;
        ++rated;
        switch (rating.rating) {
            case Rating::ExtremelySimilar:
                ++similar;
                ++extremely;
                break;
            case Rating::Similar:
                ++similar;
                ++exclusive;
                break;
            default:
                ++bad;
                break;
        }
    }
    RelevanceSummary summary;
    summary.rated_slots = rated;
    summary.total_slots = queries.size() * k;
    summary.coverage = summary.total_slots > 0
                           ? static_cast<double>(rated) / summary.total_slots
                           : 0.0;
    if (rated > 0) {
        summary.similar_p_at_k = static_cast<double>(similar) / rated;
        summary.extremely_similar_p_at_k = static_cast<double>(extremely) / rated;
        summary.bad_rate = static_cast<double>(bad) / rated;
        summary.similar_exclusive_p_at_k = static_cast<double>(exclusive) / rated;
    }
    return summary;
}

// ===========================================================================
// Labeling-quality metrics
// ===========================================================================

struct LabelEvent {
    std::string question_id;
    std::string labeler_id;
    std::string answer;

    friend bool operator==(const LabelEvent&, const LabelEvent&) = default;
};

namespace detail {

/// question -> (answer -> count), with duplicate (question, labeler) rejected.
inline std::map<std::string, std::map<std::string, std::size_t>> answer_counts(
    const std::vector<LabelEvent>& events) {
    if (events.empty()) throw DataError("no label events to evaluate");
    std::set<std::pair<std::string_view, std::string_view>> seen;
    std::map<std::string, std::map<std::string, std::size_t>> counts;
    for (const LabelEvent& event : events) {
        if (!seen.emplace(event.question_id, event.labeler_id).second)
            throw DataError("duplicate answer from labeler \"" + event.labeler_id +
                            "\" on question \"" + event.question_id + "\"");
        ++counts[event.question_id][event.answer];
    }
    return counts;
}

inline double modal_agreement(const std::map<std::string, std::size_t>& answers) {
    std::size_t total = 0;
    std::size_t modal = 0;
    for (const auto& [_, count] : answers) {
        total += count;
        modal = std::max(modal, count);
    }
    return static_cast<double>(modal) / static_cast<double>(total);
}

}  // namespace detail

/// Unweighted mean over questions of (modal answer count) / (total answers).
inline double label_consistency(const std::vector<LabelEvent>& events) {
    const auto counts = detail::answer_counts(events);
    double sum = 0.0;
    for (const auto& [_, answers] : counts) sum += detail::modal_agreement(answers);
    return sum / static_cast<double>(counts.size());
}

/// Fraction of individual label events matching the golden answer for their
/// question. Every question present must have a golden answer.
inline double label_accuracy(const std::vector<LabelEvent>& events,
                             const std::map<std::string, std::string>& golden) {
    if (events.empty()) throw DataError("no label events to evaluate");
    std::size_t matches = 0;
    for (const LabelEvent& event : events) {
        auto it = golden.find(event.question_id);
        if (it == golden.end())
            throw DataError("no golden answer for question: " + event.question_id);
        if (event.answer == it->second) ++matches;
    }
    return static_cast<double>(matches) / static_cast<double>(events.size());
}

/// Fraction of questions whose modal-answer agreement is at least the
/// threshold (inclusive).
inline double calibration_rate(const std::vector<LabelEvent>& events,
                               double agreement_threshold = 0.8) {
    const auto counts = detail::answer_counts(events);
    std::size_t calibrated = 0;
    for (const auto& [_, answers] : counts)
        if (detail::modal_agreement(answers) >= agreement_threshold) ++calibrated;
    return static_cast<double>(calibrated) / static_cast<double>(counts.size());
}

// ===========================================================================
// JSONL parsers
// ===========================================================================

namespace detail {

/// Runs `parse_line` per non-blank line, wrapping thrown DataErrors with
/// "<what> line <n>: ".
template <typename PerLine>
inline void for_each_jsonl_line(std::istream& in, std::string_view what, PerLine parse_line) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where =
            std::string(what) + " line " + std::to_string(line_no) + ": ";
        nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) throw DataError(where + "invalid JSON");
        try {
            parse_line(doc);
        } catch (const DataError& e) {
            throw DataError(where + e.what());
        }
    }
}

inline std::string require_string(const nlohmann::json& doc, const char* field) {
    auto it = doc.find(field);
    if (it == doc.end() || !it->is_string())
        throw DataError(std::string("missing string field: ") + field);
    const std::string value = it->get<std::string>();
    if (value.empty()) throw DataError(std::string("empty field: ") + field);
    return value;
}

inline double require_number(const nlohmann::json& doc, const char* field) {
    auto it = doc.find(field);
    if (it == doc.end() || !it->is_number())
        throw DataError(std::string("missing numeric field: ") + field);
    return it->get<double>();
}

}  // namespace detail

/// JSONL: {"query_embedding": [...], "predicted_category": "...",
/// "ground_truth_id": "..."} per line. The first line fixes the embedding
/// dimension.
inline std::vector<MatchPair> parse_match_pairs(std::istream& in) {
    std::vector<MatchPair> pairs;
    std::size_t dim = 0;
    detail::for_each_jsonl_line(in, "match pairs", [&](const nlohmann::json& doc) {
        MatchPair pair;
        auto emb_it = doc.find("query_embedding");
        if (emb_it == doc.end() || !emb_it->is_array() || emb_it->empty())
            throw DataError("missing array field: query_embedding");
        for (const auto& v : *emb_it) {
            if (!v.is_number())
                throw DataError("query_embedding contains a non-numeric element");
            pair.query.embedding.push_back(static_cast<float>(v.get<double>()));
        }
        for (float v : pair.query.embedding)
            if (!std::isfinite(v)) throw DataError("non-finite embedding value");
        if (dim != 0 && pair.query.embedding.size() != dim)
            throw DataError("query_embedding has dimension " +
                            std::to_string(pair.query.embedding.size()) + ", expected " +
                            std::to_string(dim));
        dim = pair.query.embedding.size();
        pair.query.predicted_category = detail::require_string(doc, "predicted_category");
        pair.ground_truth_id = detail::require_string(doc, "ground_truth_id");
        pairs.push_back(std::move(pair));
    });
    return pairs;
}

/// JSONL: {"image_id": "...", "boxes": [{x_min, y_min, x_max, y_max,
/// category, score?}]} per line. Prediction files (expect_scores = true)
/// require a score in [0, 1] on every box; ground-truth files must omit it.
/// Repeated image ids accumulate boxes.
inline DetectionSet parse_detection_set(std::istream& in, bool expect_scores,
                                        std::string_view what = "detections") {
    DetectionSet set;
    detail::for_each_jsonl_line(in, what, [&](const nlohmann::json& doc) {
        const std::string image_id = detail::require_string(doc, "image_id");
        auto boxes_it = doc.find("boxes");
        if (boxes_it == doc.end() || !boxes_it->is_array())
            throw DataError("missing array field: boxes");
        std::vector<BoundingBox>& boxes = set[image_id];
        for (const auto& item : *boxes_it) {
            if (!item.is_object()) throw DataError("box is not an object");
            BoundingBox box;
            box.x_min = detail::require_number(item, "x_min");
            box.y_min = detail::require_number(item, "y_min");
            box.x_max = detail::require_number(item, "x_max");
            box.y_max = detail::require_number(item, "y_max");
            box.category = detail::require_string(item, "category");
            if (box.x_min < 0 || box.y_min < 0)
                throw DataError("box coordinates must be non-negative");
            if (!(box.x_min < box.x_max) || !(box.y_min < box.y_max))
                throw DataError("box must satisfy x_min < x_max and y_min < y_max");
            if (auto score_it = item.find("score"); score_it != item.end()) {
                if (!expect_scores)
                    throw DataError("ground-truth box must not carry a score");
                if (!score_it->is_number())
                    throw DataError("box score must be a number");
                box.score = score_it->get<double>();
                if (!(*box.score >= 0.0 && *box.score <= 1.0))
                    throw DataError("box score must be in [0, 1]");
            } else if (expect_scores) {
                throw DataError("prediction box is missing its score");
            }
            boxes.push_back(std::move(box));
        }
    });
    return set;
}

/// JSONL: {"query_id": "...", "rank": n, "rating": "..."} per line.
inline std::vector<RelevanceRating> parse_relevance_ratings(std::istream& in) {
    std::vector<RelevanceRating> ratings;
    detail::for_each_jsonl_line(in, "ratings", [&](const nlohmann::json& doc) {
        RelevanceRating rating;
        rating.query_id = detail::require_string(doc, "query_id");
        auto rank_it = doc.find("rank");
        if (rank_it == doc.end() || !rank_it->is_number_unsigned() || rank_it->get<double>() < 1)
            throw DataError("rank must be a positive integer");
        rating.rank = rank_it->get<std::uint32_t>();
        rating.rating = rating_from_text(detail::require_string(doc, "rating"));
        ratings.push_back(std::move(rating));
    });
    return ratings;
}

/// JSONL: {"question_id": "...", "labeler_id": "...", "answer": "..."} per line.
inline std::vector<LabelEvent> parse_label_events(std::istream& in) {
    std::vector<LabelEvent> events;
    detail::for_each_jsonl_line(in, "label events", [&](const nlohmann::json& doc) {
        LabelEvent event;
        event.question_id = detail::require_string(doc, "question_id");
        event.labeler_id = detail::require_string(doc, "labeler_id");
        event.answer = detail::require_string(doc, "answer");
        events.push_back(std::move(event));
    });
    return events;
}

/// JSONL: {"question_id": "...", "answer": "..."} per line.
inline std::map<std::string, std::string> parse_golden_answers(std::istream& in) {
    std::map<std::string, std::string> golden;
    detail::for_each_jsonl_line(in, "golden answers", [&](const nlohmann::json& doc) {
        const std::string question = detail::require_string(doc, "question_id");
        if (!golden.emplace(question, detail::require_string(doc, "answer")).second)
            throw DataError("duplicate golden answer for question: " + question);
    });
    return golden;
}

}  // namespace tokann
