#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokann/error.hpp"
#include "tokann/evalkit.hpp"
#include "tokann/types.hpp"

namespace tokann {

/// One input item for single-product dataset generation. Detector and
/// background-classifier outputs are pre-supplied fields so the selection
/// logic itself stays exact and testable.
struct CorpusItem {
    std::string id;
    double image_width = 0;
    double image_height = 0;
    std::optional<std::string> category;  ///< merchant-provided iff merchant_provided
    bool merchant_provided = false;
    bool white_background = false;
    std::vector<BoundingBox> detected_boxes;

    friend bool operator==(const CorpusItem&, const CorpusItem&) = default;
};

/// Per-category caps on how many examples to admit.
struct SceneDistribution {
    std::map<std::string, std::uint64_t> caps;

    bool contains(const std::string& category) const { return caps.count(category) > 0; }
};

struct GeneratedExample {
    std::string id;
    std::string category;
    BoundingBox box;

    friend bool operator==(const GeneratedExample&, const GeneratedExample&) = default;
};

/// Why each non-admitted item was skipped, one bucket per item: the first
/// failing admission test claims it. Items whose category is missing from
/// the distribution count as cap rejections (a category with no cap admits
/// nothing).
struct GenerationSummary {
    std::uint64_t admitted = 0;
    std::uint64_t rejected_no_merchant_cat = 0;
    std::uint64_t rejected_not_white = 0;
    std::uint64_t rejected_small_box = 0;
    std::uint64_t rejected_cap = 0;

    friend bool operator==(const GenerationSummary&, const GenerationSummary&) = default;
};

struct GenerationResult {
    std::vector<GeneratedExample> examples;
    GenerationSummary summary;
};

/// A box dominates its image when it covers at least 80% of the image area.
inline bool is_dominant_box(const BoundingBox& box, double image_width, double image_height) {
    return box.area() >= 0.8 * (image_width * image_height);
}

/// Two-pass single-product selection. Pass 1 admits items with a
/// merchant-provided category, a white background, and a largest detected box
/// (max by area, ties toward the earlier list position) dominating the
/// image. Pass 2 walks pass-1 survivors in corpus order and keeps an item
/// only while its category's cap has room. Fully deterministic; output order
/// equals corpus order.
inline GenerationResult generate_single_product_dataset(const std::vector<CorpusItem>& corpus,
                                                        const SceneDistribution& dist) {
    GenerationResult result;
    std::vector<const CorpusItem*> pass1;
    std::vector<const BoundingBox*> pass1_boxes;

    for (const CorpusItem& item : corpus) {
        if (!item.merchant_provided || !item.category.has_value()) {
            ++result.summary.rejected_no_merchant_cat;
            continue;
        }
        if (!item.white_background) {
            ++result.summary.rejected_not_white;
            continue;
        }
        const BoundingBox* largest = nullptr;
        for (const BoundingBox& box : item.detected_boxes) {
            if (largest == nullptr || box.area() > largest->area()) largest = &box;
        }
        if (largest == nullptr || !is_dominant_box(*largest, item.image_width, item.image_height)) {
            ++result.summary.rejected_small_box;
            continue;
        }
        pass1.push_back(&item);
        pass1_boxes.push_back(largest);
    }

    std::map<std::string, std::uint64_t> taken;
    for (std::size_t i = 0; i < pass1.size(); ++i) {
        const CorpusItem& item = *pass1[i];
        const std::string& category = *item.category;
        if (!dist.contains(category) || taken[category] >= dist.caps.at(category)) {
            ++result.summary.rejected_cap;
            continue;
        }
        ++taken[category];
        ++result.summary.admitted;
        result.examples.push_back(GeneratedExample{item.id, category, *pass1_boxes[i]});
    }
    return result;
}

// ---------------------------------------------------------------------------
// JSONL / JSON IO
// ---------------------------------------------------------------------------

/// JSONL: {"id", "image_width", "image_height", "category"?,
/// "merchant_provided", "white_background", "detected_boxes"?: [{x_min,
/// y_min, x_max, y_max, category?, score?}]} per line. Box coordinates must
/// lie within the image bounds.
inline std::vector<CorpusItem> parse_generation_corpus(std::istream& in) {
    std::vector<CorpusItem> corpus;
    detail::for_each_jsonl_line(in, "generation corpus", [&](const nlohmann::json& doc) {
        CorpusItem item;
        item.id = detail::require_string(doc, "id");
        item.image_width = detail::require_number(doc, "image_width");
        item.image_height = detail::require_number(doc, "image_height");
        if (!(item.image_width > 0) || !(item.image_height > 0))
            throw DataError("image dimensions must be positive");
        if (auto it = doc.find("category"); it != doc.end() && !it->is_null())
            item.category = detail::require_string(doc, "category");
        auto flag = [&](const char* field) {
            auto it = doc.find(field);
            if (it == doc.end() || !it->is_boolean())
                throw DataError(std::string("missing boolean field: ") + field);
            return it->get<bool>();
        };
        item.merchant_provided = flag("merchant_provided");
        item.white_background = flag("white_background");
        if (auto boxes_it = doc.find("detected_boxes"); boxes_it != doc.end()) {
            if (!boxes_it->is_array()) throw DataError("detected_boxes must be an array");
            for (const auto& entry : *boxes_it) {
                if (!entry.is_object()) throw DataError("detected box is not an object");
                BoundingBox box;
                box.x_min = detail::require_number(entry, "x_min");
                box.y_min = detail::require_number(entry, "y_min");
                box.x_max = detail::require_number(entry, "x_max");
                box.y_max = detail::require_number(entry, "y_max");
                if (auto it = entry.find("category"); it != entry.end() && !it->is_null())
                    box.category = detail::require_string(entry, "category");
                if (auto it = entry.find("score"); it != entry.end() && !it->is_null()) {
                    if (!it->is_number()) throw DataError("box score must be a number");
                    box.score = it->get<double>();
                }
                if (!(box.x_min < box.x_max) || !(box.y_min < box.y_max))
                    throw DataError("box must satisfy x_min < x_max and y_min < y_max");
                if (box.x_min < 0 || box.y_min < 0 || box.x_max > item.image_width ||
                    box.y_max > item.image_height)
                    throw DataError("box coordinates must lie within the image bounds");
                item.detected_boxes.push_back(std::move(box));
            }
        }
        corpus.push_back(std::move(item));
    });
    return corpus;
}

/// JSON object {"<category>": <cap>, ...} with non-negative integer caps.
inline SceneDistribution parse_scene_distribution(std::istream& in) {
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw DataError("scene distribution must be a JSON object of category caps");
    SceneDistribution dist;
    for (const auto& [category, cap] : doc.items()) {
        if (category.empty()) throw DataError("scene distribution has an empty category name");
        if (!cap.is_number_unsigned())
            throw DataError("cap for category \"" + category +
                            "\" must be a non-negative integer");
        dist.caps.emplace(category, cap.get<std::uint64_t>());
    }
    return dist;
}

/// JSONL output: {"id", "category", "box": {x_min, y_min, x_max, y_max}} per
/// example, in admission order.
inline void write_generated_examples(std::ostream& out,
                                     const std::vector<GeneratedExample>& examples) {
    for (const GeneratedExample& example : examples) {
        nlohmann::json doc{{"id", example.id},
                           {"category", example.category},
                           {"box",
                            {{"x_min", example.box.x_min},
                             {"y_min", example.box.y_min},
                             {"x_max", example.box.x_max},
                             {"y_max", example.box.y_max}}}};
        out << doc.dump() << "\n";
    }
}

inline nlohmann::json summary_to_json(const GenerationSummary& summary) {
    return nlohmann::json{{"admitted", summary.admitted},
                          {"rejected_no_merchant_cat", summary.rejected_no_merchant_cat},
                          {"rejected_not_white", summary.rejected_not_white},
                          {"rejected_small_box", summary.rejected_small_box},
                          {"rejected_cap", summary.rejected_cap}};
}

}  // namespace tokann
