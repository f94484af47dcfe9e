#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "support/generators.hpp"
#include "tokann/index.hpp"
#include "tokann/service.hpp"

using namespace tokann;
using nlohmann::json;

namespace {

constexpr std::uint32_t kDim = 8;

std::vector<ProductRecord> service_corpus() {
    testsupport::Rng rng(7741);
    testsupport::CorpusOptions options;
    options.dim = kDim;
    auto records = testsupport::random_corpus(rng, 80, options);
    // A deterministic gender quartet used by the expansion test.
    auto add = [&](std::string id, std::optional<std::string> gender) {
        ProductRecord record;
        record.id = std::move(id);
        record.embedding = Embedding(kDim, 1.0f);
        record.attributes.emplace("category", "Shirt");
        if (gender) record.attributes.emplace("gender", *gender);
        records.push_back(std::move(record));
    };
    add("men1", "Men");
    add("women1", "Women");
    add("uni1", "unisex");
    add("bare1", std::nullopt);
    return records;
}

/// Serves a fixed corpus on an OS-assigned port for the lifetime of the test.
struct LiveService {
    SearchService service;
    int port = 0;
    std::thread thread;

    explicit LiveService(SearchConfig defaults = {})
        : service(build_index(service_corpus(), LshConfig{.dim = kDim, .seed = 21}), defaults) {
        port = service.bind_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { service.listen_after_bind(); });
        service.wait_until_ready();
    }
    ~LiveService() {
        service.stop();
        thread.join();
    }

    httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

json search_body(const Embedding& embedding, const std::string& category) {
    json body;
    body["embedding"] = embedding;
    body["category"] = category;
    return body;
}

}  // namespace

TEST_CASE("request parsing is strict about shape", "[service]") {
    const json good{{"embedding", {1.0, 2.0}}, {"category", "Sofa"}};
    const SearchRequest request = parse_search_request(good);
    CHECK(request.embedding == Embedding{1.0f, 2.0f});
    CHECK(request.category == "Sofa");
    CHECK_FALSE(request.gender.has_value());
    CHECK(request.restrict_text.empty());
    CHECK_FALSE(request.k.has_value());

    json full = good;
    full["gender"] = "Men";
    full["restrict"] = "color:red";
    full["k"] = 3;
    const SearchRequest rich = parse_search_request(full);
    CHECK(rich.gender == "Men");
    CHECK(rich.restrict_text == "color:red");
    CHECK(rich.k == 3u);

    CHECK_THROWS_WITH(parse_search_request(json{{"category", "Sofa"}}),
                      Catch::Matchers::ContainsSubstring("missing array field: embedding"));
    CHECK_THROWS_WITH(parse_search_request(json{{"embedding", {1.0}}}),
                      Catch::Matchers::ContainsSubstring("missing string field: category"));
    CHECK_THROWS_WITH(
        parse_search_request(json{{"embedding", {1.0, "x"}}, {"category", "a"}}),
        Catch::Matchers::ContainsSubstring("non-numeric"));

    json typo = good;
    typo["restrikt"] = "color:red";
    CHECK_THROWS_WITH(parse_search_request(typo),
                      Catch::Matchers::ContainsSubstring("unknown config key") &&
                          Catch::Matchers::ContainsSubstring("restrikt"));

    json zero_k = good;
    zero_k["k"] = 0;
    CHECK_THROWS_WITH(parse_search_request(zero_k),
                      Catch::Matchers::ContainsSubstring("k must be a positive integer"));
    json negative_k = good;
    negative_k["k"] = -2;
    CHECK_THROWS_AS(parse_search_request(negative_k), DataError);
    CHECK_THROWS_AS(parse_search_request(json::array()), DataError);
}

TEST_CASE("health endpoint reports per-shard stats", "[service][http]") {
    LiveService live;
    auto client = live.client();
    const auto res = client.Get("/v1/health");
    REQUIRE(res);
    CHECK(res->status == 200);
    const json body = json::parse(res->body);
    CHECK(body.at("status") == "ok");
    CHECK(body.at("format_version").get<std::uint32_t>() == 1);
    std::uint64_t total = 0;
    for (const auto& shard : body.at("shards")) total += shard.at("documents").get<std::uint64_t>();
    CHECK(total == body.at("total_documents").get<std::uint64_t>());
    CHECK(total == 84);  // 80 random + the gender quartet
}

TEST_CASE("search over HTTP matches the library exactly", "[service][http]") {
    LiveService live;
    auto client = live.client();
    testsupport::Rng rng(5280);
    const std::vector<std::string> categories = {"Sofa", "Rug", "Lamp", "Shirt"};
    const std::vector<std::string> restrictions = {"", "color:red OR price < 100",
                                                   "NOT color:blue"};

    for (int round = 0; round < 25; ++round) {
        const Embedding embedding = testsupport::random_embedding(rng, kDim);
        SearchRequest request;
        request.embedding = embedding;
        request.category = categories[round % categories.size()];
        request.restrict_text = restrictions[round % restrictions.size()];

        json body = search_body(embedding, request.category);
        if (!request.restrict_text.empty()) body["restrict"] = request.restrict_text;

        const auto res = client.Post("/v1/search", body.dump(), "application/json");
        REQUIRE(res);
        REQUIRE(res->status == 200);
        const json reply = json::parse(res->body);
        REQUIRE(reply.contains("took_ms"));
        CHECK(reply.at("took_ms").get<double>() >= 0.0);

        const auto expected = execute_search_request(live.service.index(), request, SearchConfig{});
        const json& results = reply.at("results");
        REQUIRE(results.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK(results[i].at("id").get<std::string>() == expected[i].id);
            CHECK(results[i].at("distance").get<double>() == expected[i].distance);
            CHECK(results[i].at("token_matches").get<std::uint32_t>() ==
                  expected[i].token_matches);
        }
    }
}

TEST_CASE("gender in the request expands the restriction", "[service][http]") {
    LiveService live;
    auto client = live.client();
    json body = search_body(Embedding(kDim, 1.0f), "Shirt");
    body["gender"] = "Men";
    body["k"] = 10;
    const auto res = client.Post("/v1/search", body.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    INFO("response: " << res->body);
    std::vector<std::string> ids;
    const json doc = json::parse(res->body);
    for (const auto& r : doc.at("results"))
        ids.push_back(r.at("id").get<std::string>());
    std::sort(ids.begin(), ids.end());
    CHECK(ids == std::vector<std::string>{"men1", "uni1"});
}

TEST_CASE("unknown categories return empty results, not errors", "[service][http]") {
    LiveService live;
    auto client = live.client();
    const auto res = client.Post("/v1/search",
                                 search_body(Embedding(kDim, 0.5f), "Spaceship").dump(),
                                 "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body).at("results").empty());
}

TEST_CASE("k in the request overrides the default", "[service][http]") {
    LiveService live;
    auto client = live.client();
    json body = search_body(Embedding(kDim, 0.5f), "Sofa");
    body["k"] = 2;
    const auto res = client.Post("/v1/search", body.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    CHECK(json::parse(res->body).at("results").size() == 2);
}

TEST_CASE("malformed requests get structured 400 replies", "[service][http]") {
    LiveService live;
    auto client = live.client();

    SECTION("body is not JSON") {
        const auto res = client.Post("/v1/search", "{not json", "application/json");
        REQUIRE(res);
        CHECK(res->status == 400);
        CHECK(json::parse(res->body).at("error") == "request body is not valid JSON");
    }
    SECTION("missing fields") {
        const auto res = client.Post("/v1/search", R"({"category":"Sofa"})", "application/json");
        REQUIRE(res);
        CHECK(res->status == 400);
        CHECK_THAT(json::parse(res->body).at("error").get<std::string>(),
                   Catch::Matchers::ContainsSubstring("embedding"));
    }
    SECTION("restriction syntax errors carry the byte offset") {
        json body = search_body(Embedding(kDim, 0.5f), "Sofa");
        body["restrict"] = "price <";
        const auto res = client.Post("/v1/search", body.dump(), "application/json");
        REQUIRE(res);
        CHECK(res->status == 400);
        CHECK_THAT(json::parse(res->body).at("error").get<std::string>(),
                   Catch::Matchers::ContainsSubstring("syntax error at byte 7") &&
                       Catch::Matchers::ContainsSubstring("expected number"));
    }
    SECTION("dimension mismatches are reported") {
        const auto res = client.Post("/v1/search",
                                     search_body(Embedding(3, 0.5f), "Sofa").dump(),
                                     "application/json");
        REQUIRE(res);
        CHECK(res->status == 400);
        CHECK_THAT(json::parse(res->body).at("error").get<std::string>(),
                   Catch::Matchers::ContainsSubstring("dimension 3, expected 8"));
    }
    SECTION("unknown gender label") {
        json body = search_body(Embedding(kDim, 0.5f), "Shirt");
        body["gender"] = "Martian";
        const auto res = client.Post("/v1/search", body.dump(), "application/json");
        REQUIRE(res);
        CHECK(res->status == 400);
        CHECK_THAT(json::parse(res->body).at("error").get<std::string>(),
                   Catch::Matchers::ContainsSubstring("unknown gender label: Martian"));
    }
}

TEST_CASE("unknown routes answer 404 with a JSON error", "[service][http]") {
    LiveService live;
    auto client = live.client();
    const auto res = client.Get("/v1/nothing-here");
    REQUIRE(res);
    CHECK(res->status == 404);
    CHECK(json::parse(res->body).at("error") == "unknown route");
}

TEST_CASE("concurrent clients get identical answers", "[service][http]") {
    LiveService live;
    const json body = search_body(Embedding(kDim, 0.25f), "Sofa");
    const std::string payload = body.dump();

    // Reference answer from a single request.
    std::string reference;
    {
        auto client = live.client();
        const auto res = client.Post("/v1/search", payload, "application/json");
        REQUIRE(res);
        REQUIRE(res->status == 200);
        reference = json::parse(res->body).at("results").dump();
    }

    std::atomic<int> mismatches{0}, failures{0};
    std::vector<std::thread> workers;
    for (int t = 0; t < 4; ++t) {
        workers.emplace_back([&] {
            httplib::Client client("127.0.0.1", live.port);
            for (int i = 0; i < 25; ++i) {
                const auto res = client.Post("/v1/search", payload, "application/json");
                if (!res || res->status != 200) {
                    ++failures;
                    continue;
                }
                if (json::parse(res->body).at("results").dump() != reference) ++mismatches;
            }
        });
    }
    for (auto& worker : workers) worker.join();
    CHECK(failures == 0);
    CHECK(mismatches == 0);
}
