#pragma once

#include <cstdint>
#include <initializer_list>
#include <istream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "tokann/error.hpp"
#include "tokann/lsh.hpp"
#include "tokann/retrieval.hpp"

namespace tokann {

/// Whole-engine configuration: hashing parameters, search defaults, and
/// service binding. Loaded from JSON; unknown keys are rejected so typos
/// fail loudly instead of silently using defaults.
struct EngineConfig {
    LshConfig hasher;            ///< hasher.dim == 0 means infer at build time
    SearchConfig search;
    std::string bind_address = "127.0.0.1";
    std::uint16_t port = 8080;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& object, std::string_view where,
                                std::initializer_list<std::string_view> known) {
    for (const auto& [key, _] : object.items()) {
        bool found = false;
        for (std::string_view k : known) {
            if (key == k) {
                found = true;
                break;
            }
        }
        if (!found)
            throw ConfigError("unknown config key: " + std::string(where) + "." + key);
    }
}

template <typename T>
inline T config_number(const nlohmann::json& object, const char* key, T fallback,
                       std::string_view where) {
    auto it = object.find(key);
    if (it == object.end()) return fallback;
    if (!it->is_number_unsigned())
        throw ConfigError("config key " + std::string(where) + "." + key +
                          " must be a non-negative integer");
    return it->get<T>();
}

}  // namespace detail

/// Parses an EngineConfig from a JSON document like
///   {"hasher": {"dim", "num_bands", "bits_per_band", "seed"},
///    "search": {"k", "max_candidates", "metric"},
///    "service": {"bind_address", "port"}}
/// Every section and key is optional; unknown keys are errors.
inline EngineConfig engine_config_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    detail::reject_unknown_keys(doc, "(top level)", {"hasher", "search", "service"});
    EngineConfig config;

    if (auto it = doc.find("hasher"); it != doc.end()) {
        if (!it->is_object()) throw ConfigError("config key hasher must be an object");
        detail::reject_unknown_keys(*it, "hasher", {"dim", "num_bands", "bits_per_band", "seed"});
        config.hasher.dim = detail::config_number<std::uint32_t>(*it, "dim", 0, "hasher");
        config.hasher.num_bands = detail::config_number<std::uint32_t>(
            *it, "num_bands", config.hasher.num_bands, "hasher");
        config.hasher.bits_per_band = detail::config_number<std::uint32_t>(
            *it, "bits_per_band", config.hasher.bits_per_band, "hasher");
        config.hasher.seed =
            detail::config_number<std::uint64_t>(*it, "seed", config.hasher.seed, "hasher");
    }

    if (auto it = doc.find("search"); it != doc.end()) {
        if (!it->is_object()) throw ConfigError("config key search must be an object");
        detail::reject_unknown_keys(*it, "search", {"k", "max_candidates", "metric"});
        config.search.k =
            detail::config_number<std::uint32_t>(*it, "k", config.search.k, "search");
        if (it->contains("max_candidates"))
            config.search.max_candidates =
                detail::config_number<std::uint32_t>(*it, "max_candidates", 0, "search");
        if (auto metric_it = it->find("metric"); metric_it != it->end()) {
            if (!metric_it->is_string())
                throw ConfigError("config key search.metric must be a string");
            config.search.metric = metric_from_text(metric_it->get<std::string>());
        }
        config.search.validate();
    }

    if (auto it = doc.find("service"); it != doc.end()) {
        if (!it->is_object()) throw ConfigError("config key service must be an object");
        detail::reject_unknown_keys(*it, "service", {"bind_address", "port"});
        if (auto addr_it = it->find("bind_address"); addr_it != it->end()) {
            if (!addr_it->is_string() || addr_it->get<std::string>().empty())
                throw ConfigError("config key service.bind_address must be a non-empty string");
            config.bind_address = addr_it->get<std::string>();
        }
        const auto port = detail::config_number<std::uint32_t>(*it, "port", config.port, "service");
        if (port > 65535) throw ConfigError("config key service.port must be at most 65535");
        config.port = static_cast<std::uint16_t>(port);
    }

    return config;
}

inline EngineConfig load_engine_config(std::istream& in) {
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config file is not valid JSON");
    return engine_config_from_json(doc);
}

}  // namespace tokann
