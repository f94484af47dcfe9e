#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "tokann/engine_config.hpp"
#include "tokann/error.hpp"
#include "tokann/index.hpp"
#include "tokann/querylang.hpp"
#include "tokann/retrieval.hpp"
#include "tokann/snapshot.hpp"

namespace tokann {

/// One search invocation as carried by the HTTP body and the CLI `query`
/// input file — shared so both frontends behave identically.
struct SearchRequest {
    Embedding embedding;
    std::string category;
    std::optional<std::string> gender;
    std::string restrict_text;  ///< restriction grammar; empty = match all
    std::optional<std::uint32_t> k;
};

/// Parses {embedding:[...], category:"...", gender?, restrict?, k?}.
/// Unknown keys are rejected so misspelled fields cannot silently change
/// results.
inline SearchRequest parse_search_request(const nlohmann::json& doc) {
    if (!doc.is_object()) throw DataError("search request must be a JSON object");
    detail::reject_unknown_keys(doc, "(request)",
                                {"embedding", "category", "gender", "restrict", "k"});
    SearchRequest request;

    auto emb_it = doc.find("embedding");
    if (emb_it == doc.end() || !emb_it->is_array() || emb_it->empty())
        throw DataError("missing array field: embedding");
    for (const auto& v : *emb_it) {
        if (!v.is_number()) throw DataError("embedding contains a non-numeric element");
        request.embedding.push_back(static_cast<float>(v.get<double>()));
    }
    for (float v : request.embedding)
        if (!std::isfinite(v)) throw DataError("non-finite embedding value");

    auto cat_it = doc.find("category");
    if (cat_it == doc.end() || !cat_it->is_string() || cat_it->get<std::string>().empty())
        throw DataError("missing string field: category");
    request.category = cat_it->get<std::string>();

    if (auto it = doc.find("gender"); it != doc.end() && !it->is_null()) {
        if (!it->is_string() || it->get<std::string>().empty())
            throw DataError("gender must be a non-empty string");
        request.gender = it->get<std::string>();
    }
    if (auto it = doc.find("restrict"); it != doc.end() && !it->is_null()) {
        if (!it->is_string()) throw DataError("restrict must be a string");
        request.restrict_text = it->get<std::string>();
    }
    if (auto it = doc.find("k"); it != doc.end() && !it->is_null()) {
        if (!it->is_number_integer() || it->get<std::int64_t>() <= 0 ||
            it->get<std::int64_t>() > 0xFFFFFFFFLL)
            throw DataError("k must be a positive integer");
        request.k = static_cast<std::uint32_t>(it->get<std::int64_t>());
    }
    return request;
}

/// Runs one request against a loaded index: parse the restriction, apply
/// gender expansion when a gender is present, route and search.
inline std::vector<SearchResult> execute_search_request(const IndexShardSet& set,
                                                        const SearchRequest& request,
                                                        SearchConfig config) {
    if (request.k) config.k = *request.k;
    RestrictionPtr restriction = parse_restriction(request.restrict_text);
    if (request.gender) restriction = expand_gender_restriction(restriction, *request.gender);
    QueryObject query{request.embedding, request.category, request.gender};
    return search(set, query, restriction, config);
}

inline nlohmann::json results_to_json(const std::vector<SearchResult>& results) {
    nlohmann::json out = nlohmann::json::array();
    for (const SearchResult& result : results)
        out.push_back({{"id", result.id},
                       {"distance", result.distance},
                       {"token_matches", result.token_matches}});
    return out;
}

/// Index stats served by GET /v1/health.
inline nlohmann::json index_stats_json(const IndexShardSet& set) {
    nlohmann::json shards = nlohmann::json::array();
    for (const auto& [category, shard] : set.shards())
        shards.push_back({{"category", category}, {"documents", shard.size()}});
    return nlohmann::json{{"status", "ok"},
                          {"format_version", kSnapshotFormatVersion},
                          {"shards", std::move(shards)},
                          {"total_documents", set.total_docs()}};
}

/// JSON-over-HTTP search frontend over an immutable loaded index.
///   POST /v1/search  {embedding, category, gender?, restrict?, k?}
///                    -> {results: [{id, distance, token_matches}], took_ms}
///   GET  /v1/health  -> index stats
/// Errors: 400 with {error} for malformed bodies/restrictions, 404 for
/// unknown routes. Unknown categories are not errors (200, empty results).
class SearchService {
public:
    SearchService(IndexShardSet set, SearchConfig search_defaults)
        : set_(std::move(set)), defaults_(search_defaults) {
        setup_routes();
    }

    /// Blocking listen on a fixed port.
    bool listen(const std::string& address, std::uint16_t port) {
        return server_.listen(address, port);
    }

    /// Binds to an OS-assigned port and returns it; serve with
    /// listen_after_bind() (used by tests to avoid port collisions).
    int bind_any_port(const std::string& address) { return server_.bind_to_any_port(address); }
    bool listen_after_bind() { return server_.listen_after_bind(); }

    void stop() { server_.stop(); }
    bool is_running() const { return server_.is_running(); }
    void wait_until_ready() const { server_.wait_until_ready(); }

    const IndexShardSet& index() const noexcept { return set_; }

private:
    static void reply_json(httplib::Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    void setup_routes() {
        server_.Post("/v1/search", [this](const httplib::Request& req, httplib::Response& res) {
            const auto started = std::chrono::steady_clock::now();
            nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
            if (body.is_discarded()) {
                reply_json(res, 400, {{"error", "request body is not valid JSON"}});
                return;
            }
            try {
                const SearchRequest request = parse_search_request(body);
                const std::vector<SearchResult> results =
                    execute_search_request(set_, request, defaults_);
                const double took_ms =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              started)
                        .count();
                reply_json(res, 200,
                           {{"results", results_to_json(results)}, {"took_ms", took_ms}});
            } catch (const Error& e) {
                reply_json(res, 400, {{"error", e.what()}});
            }
        });

        server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
            reply_json(res, 200, index_stats_json(set_));
        });

        server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty())
                res.set_content(nlohmann::json{{"error", "unknown route"}}.dump(),
                                "application/json");
        });
    }

    IndexShardSet set_;
    SearchConfig defaults_;
    httplib::Server server_;
};

}  // namespace tokann
