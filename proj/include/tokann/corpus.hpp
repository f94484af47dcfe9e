#pragma once

#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokann/error.hpp"
#include "tokann/types.hpp"

namespace tokann {

/// Validates one record against the corpus rules, returning one entry per
/// violated invariant (empty report iff the record is valid). Dimension is
/// checked only when expected_dim is nonzero.
inline std::vector<std::string> validate_record(const ProductRecord& record,
                                                std::size_t expected_dim = 0) {
    std::vector<std::string> report;
    if (record.id.empty()) report.push_back("empty id");
    if (record.embedding.empty()) {
        report.push_back("empty embedding");
    } else if (expected_dim != 0 && record.embedding.size() != expected_dim) {
        report.push_back("embedding has dimension " + std::to_string(record.embedding.size()) +
                         ", expected " + std::to_string(expected_dim));
    }
    for (float v : record.embedding) {
        if (!std::isfinite(v)) {
            report.push_back("non-finite embedding value");
            break;
        }
    }
    auto category_it = record.attributes.find(kCategoryAttribute);
    if (category_it == record.attributes.end()) {
        report.push_back("missing category");
    } else if (const std::string* c = std::get_if<std::string>(&category_it->second);
               c == nullptr) {
        report.push_back("category must be a string");
    } else if (c->empty()) {
        report.push_back("empty category");
    }
    if (auto gender_it = record.attributes.find(kGenderAttribute);
        gender_it != record.attributes.end()) {
        if (const std::string* g = std::get_if<std::string>(&gender_it->second); g == nullptr) {
            report.push_back("gender must be a string");
        } else if (!is_known_gender_label(*g)) {
            report.push_back("unknown gender label: " + *g);
        }
    }
    for (const auto& [name, value] : record.attributes) {
        if (name.empty()) report.push_back("empty attribute name");
        if (const double* num = std::get_if<double>(&value); num && !std::isfinite(*num))
            report.push_back("non-finite attribute value: " + name);
    }
    return report;
}

namespace detail {

inline std::string join_report(const std::vector<std::string>& report) {
    std::string out;
    for (const std::string& entry : report) {
        if (!out.empty()) out += "; ";
        out += entry;
    }
    return out;
}

}  // namespace detail

namespace detail {

inline ProductRecord record_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw DataError("record is not a JSON object");
    ProductRecord record;

    auto id_it = doc.find("id");
    if (id_it == doc.end() || !id_it->is_string()) throw DataError("missing string field: id");
    record.id = id_it->get<std::string>();

    auto emb_it = doc.find("embedding");
    if (emb_it == doc.end() || !emb_it->is_array())
        throw DataError("missing array field: embedding");
    record.embedding.reserve(emb_it->size());
    for (const auto& v : *emb_it) {
        if (!v.is_number()) throw DataError("embedding contains a non-numeric element");
        record.embedding.push_back(static_cast<float>(v.get<double>()));
    }

    auto attrs_it = doc.find("attributes");
    if (attrs_it == doc.end() || !attrs_it->is_object())
        throw DataError("missing object field: attributes");
    for (const auto& [name, value] : attrs_it->items()) {
        if (value.is_string()) {
            record.attributes.emplace(name, value.get<std::string>());
        } else if (value.is_number()) {
            record.attributes.emplace(name, value.get<double>());
        } else {
            throw DataError("attribute is neither a string nor a number: " + name);
        }
    }
    return record;
}

}  // namespace detail

/// Parses a JSONL product corpus. One JSON object per line; blank lines are
/// skipped. The first record fixes the embedding dimension. Throws DataError
/// with a 1-based line number on any malformed or invalid record.
inline std::vector<ProductRecord> parse_product_corpus(std::istream& in) {
    std::vector<ProductRecord> records;
    std::unordered_set<std::string> seen_ids;
    std::size_t dim = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "corpus line " + std::to_string(line_no) + ": ";
        nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded()) throw DataError(where + "invalid JSON");
        ProductRecord record;
        try {
            record = detail::record_from_json(doc);
        } catch (const DataError& e) {
            throw DataError(where + e.what());
        }
        if (auto report = validate_record(record, dim); !report.empty()) {
            const std::string who = record.id.empty() ? "" : "record \"" + record.id + "\": ";
            throw DataError(where + who + detail::join_report(report));
        }
        if (!seen_ids.insert(record.id).second)
            throw DataError(where + "duplicate id: " + record.id);
        if (dim == 0) dim = record.embedding.size();
        records.push_back(std::move(record));
    }
    return records;
}

namespace detail {

inline nlohmann::json record_to_json(const ProductRecord& record) {
    nlohmann::json attrs = nlohmann::json::object();
    for (const auto& [name, value] : record.attributes) {
        if (const std::string* s = std::get_if<std::string>(&value)) {
            attrs[name] = *s;
        } else {
            attrs[name] = std::get<double>(value);
        }
    }
    return nlohmann::json{
        {"id", record.id}, {"embedding", record.embedding}, {"attributes", std::move(attrs)}};
}

}  // namespace detail

/// Writes records back out as JSONL, one object per line.
inline void write_product_corpus(std::ostream& out, const std::vector<ProductRecord>& records) {
    for (const auto& record : records) out << detail::record_to_json(record).dump() << "\n";
}

}  // namespace tokann
