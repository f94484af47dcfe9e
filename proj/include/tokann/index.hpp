#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "tokann/corpus.hpp"
#include "tokann/error.hpp"
#include "tokann/lsh.hpp"
#include "tokann/types.hpp"

namespace tokann {

/// Ascending document ordinals within one shard.
using PostingList = std::vector<std::uint32_t>;

/// Posting key for a string attribute: "attr:<name>=<value>". '%' and '=' in
/// the name are percent-escaped so the key parses unambiguously at the first
/// unescaped '='. Values are kept verbatim.
inline std::string attribute_posting_key(std::string_view name, std::string_view value) {
    std::string key = "attr:";
    key.reserve(key.size() + name.size() + value.size() + 1);
    for (char c : name) {
        if (c == '%') {
            key += "%25";
        } else if (c == '=') {
            key += "%3D";
        } else {
            key.push_back(c);
        }
    }
    key.push_back('=');
    key.append(value);
    return key;
}

/// Column-oriented store of everything needed to rerank and filter: ids,
/// embeddings, binary codes, and full attribute maps, indexed by ordinal.
struct ForwardIndex {
    std::vector<std::string> ids;
    std::vector<float> embeddings;        ///< size() == ids.size() * dim
    std::vector<std::uint64_t> codes;     ///< size() == ids.size() * words_per_code
    std::vector<AttributeMap> attributes;

    std::size_t size() const noexcept { return ids.size(); }

    friend bool operator==(const ForwardIndex&, const ForwardIndex&) = default;
};

/// One per-category shard: a forward index plus an inverted index over LSH
/// tokens and string attributes. The category itself is realized purely by
/// sharding and is never posted.
struct IndexShard {
    std::string category;
    ForwardIndex forward;
    std::map<std::string, PostingList, std::less<>> inverted;

    std::size_t size() const noexcept { return forward.size(); }

    friend bool operator==(const IndexShard&, const IndexShard&) = default;
};

/// Empty list returned for missing keys.
inline std::span<const std::uint32_t> posting_lookup(const IndexShard& shard,
                                                     std::string_view key) {
    auto it = shard.inverted.find(key);
    if (it == shard.inverted.end()) return {};
    return it->second;
}

/// The full engine state: LSH configuration (with resolved dimension), the
/// deterministic hasher derived from it, and one shard per category.
class IndexShardSet {
public:
    IndexShardSet() = default;
    explicit IndexShardSet(const LshConfig& config) : config_(config), hasher_(config) {}

    const LshConfig& config() const noexcept { return config_; }
    const LshHasher& hasher() const { return *hasher_; }

    std::uint32_t dim() const noexcept { return config_.dim; }
    /// Binary codes are per-dimension sign codes, so one bit per dimension.
    std::uint32_t code_bits() const noexcept { return config_.dim; }
    std::uint32_t words_per_code() const noexcept { return (code_bits() + 63) / 64; }

    std::map<std::string, IndexShard, std::less<>>& shards() noexcept { return shards_; }
    const std::map<std::string, IndexShard, std::less<>>& shards() const noexcept {
        return shards_;
    }

    const IndexShard* shard(std::string_view category) const {
        auto it = shards_.find(category);
        return it == shards_.end() ? nullptr : &it->second;
    }

    std::size_t total_docs() const noexcept {
        std::size_t n = 0;
        for (const auto& [_, shard] : shards_) n += shard.size();
        return n;
    }

    /// Structural equality: same config and shard contents (the hasher is
    /// derived from the config, so it is not compared).
    friend bool operator==(const IndexShardSet& a, const IndexShardSet& b) {
        return a.config_ == b.config_ && a.shards_ == b.shards_;
    }

private:
    LshConfig config_;
    std::optional<LshHasher> hasher_;
    std::map<std::string, IndexShard, std::less<>> shards_;
};

namespace detail {

/// Appends one validated record to its shard. Ordinal = arrival order within
/// the shard, so per-key posting lists stay sorted by construction.
inline void index_record(IndexShard& shard, const ProductRecord& record,
                         const LshHasher& hasher, std::uint32_t words_per_code) {
    const auto ordinal = static_cast<std::uint32_t>(shard.forward.size());
    shard.forward.ids.push_back(record.id);
    shard.forward.embeddings.insert(shard.forward.embeddings.end(), record.embedding.begin(),
                                    record.embedding.end());
    const BinaryCode code = binarize(record.embedding);
    auto words = code.words();
    shard.forward.codes.insert(shard.forward.codes.end(), words.begin(), words.end());
    for (std::size_t i = words.size(); i < words_per_code; ++i)
        shard.forward.codes.push_back(0);
    shard.forward.attributes.push_back(record.attributes);

    for (const LshToken& token : hasher.tokens(record.embedding))
        shard.inverted[token_text(token)].push_back(ordinal);
    for (const auto& [name, value] : record.attributes) {
        if (name == kCategoryAttribute) continue;
        if (const std::string* s = std::get_if<std::string>(&value))
            shard.inverted[attribute_posting_key(name, *s)].push_back(ordinal);
    }
}

}  // namespace detail

/// Builds the sharded index from validated records. config.dim == 0 means
/// infer the dimension from the first record; an empty corpus with no
/// configured dimension produces a queryable empty shard set with dim 1.
inline IndexShardSet build_index(const std::vector<ProductRecord>& records, LshConfig config) {
    if (config.dim == 0)
        config.dim = records.empty() ? 1 : static_cast<std::uint32_t>(records[0].embedding.size());

    std::unordered_set<std::string> seen_ids;
    seen_ids.reserve(records.size());
    for (const ProductRecord& record : records) {
        if (auto report = validate_record(record, config.dim); !report.empty())
            throw DataError("record \"" + record.id + "\": " + detail::join_report(report));
        if (!seen_ids.insert(record.id).second)
            throw DataError("duplicate id: " + record.id);
    }

    IndexShardSet set(config);
    for (const ProductRecord& record : records) {
        const std::string& category = *record.category();
        IndexShard& shard = set.shards()[category];
        if (shard.category.empty()) shard.category = category;
        detail::index_record(shard, record, set.hasher(), set.words_per_code());
    }
    return set;
}

}  // namespace tokann
