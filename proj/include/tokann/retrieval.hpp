#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tokann/error.hpp"
#include "tokann/index.hpp"
#include "tokann/lsh.hpp"
#include "tokann/querylang.hpp"
#include "tokann/types.hpp"

namespace tokann {

/// Exact distance used for reranking: hamming over binary codes, or cosine
/// over the raw embeddings kept in the forward index.
enum class Metric { hamming, cosine };

inline Metric metric_from_text(std::string_view text) {
    if (text == "hamming") return Metric::hamming;
    if (text == "cosine") return Metric::cosine;
    throw ConfigError("unknown metric: " + std::string(text));
}

inline std::string_view metric_text(Metric metric) {
    switch (metric) {
        case Metric::hamming: return "hamming";
        case Metric::cosine: return "cosine";
    }
    throw ConfigError("unknown metric");
}

struct SearchConfig {
    std::uint32_t k = 5;
    /// Cap on documents entering rerank; defaults to max(100, 10*k).
    std::optional<std::uint32_t> max_candidates;
    Metric metric = Metric::hamming;

    std::uint32_t resolved_max_candidates() const {
        return max_candidates ? *max_candidates : std::max<std::uint32_t>(100, 10 * k);
    }

    void validate() const {
        if (k == 0) throw ConfigError("search: k must be positive");
        if (k > resolved_max_candidates())
            throw ConfigError("search: k must not exceed max_candidates");
    }
};

struct SearchResult {
    std::string id;
    double distance = 0.0;
    std::uint32_t token_matches = 0;

    friend bool operator==(const SearchResult&, const SearchResult&) = default;
};

/// Candidate surviving token matching, before exact reranking.
struct Candidate {
    std::uint32_t ordinal = 0;
    std::uint32_t token_matches = 0;

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Among documents in `allowed` (ascending ordinals) with at least one
/// matching token, returns the top max_candidates by match count; ties break
/// toward the lower ordinal. Runs in O(postings + shard size + bands):
/// match counts are bounded by the band count, so selection uses a count
/// histogram rather than a sort.
inline std::vector<Candidate> candidate_generation(std::span<const LshToken> query_tokens,
                                                   std::span<const std::uint32_t> allowed,
                                                   const IndexShard& shard,
                                                   std::uint32_t max_candidates) {
    if (allowed.empty() || max_candidates == 0) return {};
    const auto n = static_cast<std::uint32_t>(shard.size());
    std::vector<std::uint8_t> allowed_mask(n, 0);
    for (std::uint32_t ordinal : allowed) allowed_mask[ordinal] = 1;

    std::vector<std::uint32_t> counts(n, 0);
    std::uint32_t max_count = 0;
    for (const LshToken& token : query_tokens) {
        for (std::uint32_t ordinal : posting_lookup(shard, token_text(token))) {
            if (!allowed_mask[ordinal]) continue;
            max_count = std::max(max_count, ++counts[ordinal]);
        }
    }
    if (max_count == 0) return {};

    // Histogram over match counts, then find the cutoff: take everything
    // above it and a prefix (lowest ordinals) of the cutoff bucket.
    std::vector<std::uint32_t> histogram(max_count + 1, 0);
    for (std::uint32_t d = 0; d < n; ++d)
        if (counts[d] > 0) ++histogram[counts[d]];

    std::uint32_t remaining = max_candidates;
    std::uint32_t cutoff = 1;
    std::uint32_t take_at_cutoff = 0;
    for (std::uint32_t c = max_count; c >= 1; --c) {
        if (histogram[c] >= remaining) {
            cutoff = c;
            take_at_cutoff = remaining;
            remaining = 0;
            break;
        }
        remaining -= histogram[c];
        if (c == 1) {
            cutoff = 1;
            take_at_cutoff = histogram[1];
        }
    }

    std::vector<Candidate> out;
    out.reserve(std::min<std::size_t>(max_candidates, n));
    for (std::uint32_t d = 0; d < n && out.size() < max_candidates; ++d) {
        const std::uint32_t c = counts[d];
        if (c > cutoff) {
            out.push_back(Candidate{d, c});
        } else if (c == cutoff && take_at_cutoff > 0) {
            out.push_back(Candidate{d, c});
            --take_at_cutoff;
        }
    }
    return out;
}

/// Computes the exact metric distance for each candidate and sorts by
/// (distance asc, token_matches desc, id asc).
inline std::vector<SearchResult> rerank(std::span<const Candidate> candidates,
                                        std::span<const float> query_embedding,
                                        const IndexShardSet& set, const IndexShard& shard,
                                        Metric metric) {
    if (query_embedding.size() != set.dim())
        throw ConfigError("rerank: query embedding has dimension " +
                          std::to_string(query_embedding.size()) + ", expected " +
                          std::to_string(set.dim()));
    std::vector<SearchResult> results;
    results.reserve(candidates.size());
    if (metric == Metric::hamming) {
        const BinaryCode query_code = binarize(query_embedding);
        const auto query_words = query_code.words();
        const std::uint32_t stride = set.words_per_code();
        for (const Candidate& candidate : candidates) {
            const std::uint64_t* doc_words =
                shard.forward.codes.data() + std::size_t{candidate.ordinal} * stride;
            std::uint32_t dist = 0;
            for (std::uint32_t w = 0; w < stride; ++w)
                dist += static_cast<std::uint32_t>(std::popcount(query_words[w] ^ doc_words[w]));
            results.push_back(SearchResult{shard.forward.ids[candidate.ordinal],
                                           static_cast<double>(dist),
                                           candidate.token_matches});
        }
    } else if (metric == Metric::cosine) {
        const std::uint32_t dim = set.dim();
        for (const Candidate& candidate : candidates) {
            std::span<const float> doc{
                shard.forward.embeddings.data() + std::size_t{candidate.ordinal} * dim, dim};
            results.push_back(SearchResult{shard.forward.ids[candidate.ordinal],
                                           cosine_distance(query_embedding, doc),
                                           candidate.token_matches});
        }
    } else {
        throw ConfigError("unknown metric");
    }
    std::sort(results.begin(), results.end(), [](const SearchResult& a, const SearchResult& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        if (a.token_matches != b.token_matches) return a.token_matches > b.token_matches;
        return a.id < b.id;
    });
    return results;
}

/// Full query path: route to the shard named by the predicted category (no
/// shard -> empty result), resolve the restriction to an allowed set, gather
/// token-match candidates, rerank exactly, truncate to k. Every returned id
/// satisfies the restriction.
inline std::vector<SearchResult> search(const IndexShardSet& set, const QueryObject& query,
                                        const RestrictionPtr& restriction,
                                        const SearchConfig& config) {
    config.validate();
    const IndexShard* shard = set.shard(query.predicted_category);
    if (shard == nullptr) return {};
    const std::vector<LshToken> tokens = set.hasher().tokens(query.embedding);
    const std::vector<std::uint32_t> allowed = resolve_candidates(restriction, *shard);
    if (allowed.empty()) return {};
    const std::vector<Candidate> candidates =
        candidate_generation(tokens, allowed, *shard, config.resolved_max_candidates());
    std::vector<SearchResult> results =
        rerank(candidates, query.embedding, set, *shard, config.metric);
    if (results.size() > config.k) results.resize(config.k);
    return results;
}

/// Widens a gender restriction so unisex products are never excluded:
/// And[base, Or[gender:<g>, gender:unisex]]. A MatchAll base reduces to the
/// Or clause alone, and predicted gender "unisex" collapses the Or to a
/// single Pair.
inline RestrictionPtr expand_gender_restriction(const RestrictionPtr& base,
                                                std::string_view predicted_gender) {
    if (predicted_gender.empty())
        throw ConfigError("gender expansion requires a non-empty gender");
    if (!is_known_gender_label(predicted_gender))
        throw DataError("unknown gender label: " + std::string(predicted_gender));
    RestrictionPtr clause;
    if (predicted_gender == kUnisexLabel) {
        clause = make_pair(std::string(kGenderAttribute), std::string(kUnisexLabel));
    } else {
        clause = make_or({make_pair(std::string(kGenderAttribute), std::string(predicted_gender)),
                          make_pair(std::string(kGenderAttribute), std::string(kUnisexLabel))});
    }
    if (base->get_if<Restriction::MatchAll>()) return clause;
    return make_and({base, clause});
}

}  // namespace tokann
