#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tokann/error.hpp"

namespace tokann {

/// Dense embedding vector. The corpus-wide dimension D is fixed by the first
/// record of a corpus; values are stored at 32-bit precision.
using Embedding = std::vector<float>;

/// An attribute value is either a string label or a finite number.
using AttributeValue = std::variant<std::string, double>;

/// Attribute name -> value. Names and string values are case-sensitive.
/// Ordered so that serialization is deterministic.
using AttributeMap = std::map<std::string, AttributeValue, std::less<>>;

/// Reserved attribute names.
inline constexpr std::string_view kCategoryAttribute = "category";
inline constexpr std::string_view kGenderAttribute = "gender";

/// Closed label set for the gender attribute.
inline constexpr std::array<std::string_view, 3> kGenderLabels = {"Men", "Women", "unisex"};
inline constexpr std::string_view kUnisexLabel = "unisex";

inline bool is_known_gender_label(std::string_view label) {
    for (auto known : kGenderLabels) {
        if (label == known) return true;
    }
    return false;
}

/// Fixed-length bit sequence, one bit per embedding dimension.
class BinaryCode {
public:
    BinaryCode() = default;
    explicit BinaryCode(std::uint32_t bit_count)
        : bit_count_(bit_count), words_((bit_count + 63) / 64, 0) {}

    std::uint32_t size() const noexcept { return bit_count_; }
    std::span<const std::uint64_t> words() const noexcept { return words_; }

    void set(std::uint32_t i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
    bool test(std::uint32_t i) const { return (words_[i >> 6] >> (i & 63)) & 1; }

    friend bool operator==(const BinaryCode&, const BinaryCode&) = default;

private:
    std::uint32_t bit_count_ = 0;
    std::vector<std::uint64_t> words_;
};

/// One indexable item: unique id, embedding, and attribute map.
struct ProductRecord {
    std::string id;
    Embedding embedding;
    AttributeMap attributes;

    const std::string* string_attribute(std::string_view name) const {
        auto it = attributes.find(name);
        if (it == attributes.end()) return nullptr;
        return std::get_if<std::string>(&it->second);
    }

    const double* numeric_attribute(std::string_view name) const {
        auto it = attributes.find(name);
        if (it == attributes.end()) return nullptr;
        return std::get_if<double>(&it->second);
    }

    /// Category label, or nullptr if absent or not a string.
    const std::string* category() const { return string_attribute(kCategoryAttribute); }

    friend bool operator==(const ProductRecord&, const ProductRecord&) = default;
};

/// A query object produced by scene decomposition: the crop's embedding plus
/// the predicted category (and optionally gender) used for routing.
struct QueryObject {
    Embedding embedding;
    std::string predicted_category;
    std::optional<std::string> predicted_gender;

    friend bool operator==(const QueryObject&, const QueryObject&) = default;
};

/// Axis-aligned box in pixel coordinates with a category label and an
/// optional detection score.
struct BoundingBox {
    double x_min = 0;
    double y_min = 0;
    double x_max = 0;
    double y_max = 0;
    std::string category;
    std::optional<double> score;

    double width() const noexcept { return x_max - x_min; }
    double height() const noexcept { return y_max - y_min; }
    double area() const noexcept { return width() * height(); }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

}  // namespace tokann
