#pragma once

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokann/error.hpp"
#include "tokann/index.hpp"
#include "tokann/lsh.hpp"

namespace tokann {

/// Snapshot format version written and accepted by this build.
inline constexpr int kSnapshotFormatVersion = 1;

inline constexpr std::string_view kManifestFileName = "manifest.json";
inline constexpr char kForwardMagic[4] = {'T', 'K', 'F', '1'};
inline constexpr char kInvertedMagic[4] = {'T', 'K', 'I', '1'};

static_assert(std::endian::native == std::endian::little,
              "snapshot code assumes a little-endian host");

namespace detail {

inline std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
    std::uint64_t hash = 14695981039346656037ULL;
    for (std::size_t i = 0; i < size; ++i) {
        hash ^= data[i];
        hash *= 1099511628211ULL;
    }
    return hash;
}

// --- byte buffer helpers ----------------------------------------------------

struct ByteWriter {
    std::vector<std::uint8_t> bytes;

    void u8(std::uint8_t v) { bytes.push_back(v); }

    void u64(std::uint64_t v) {
        const std::size_t at = bytes.size();
        bytes.resize(at + 8);
        std::memcpy(bytes.data() + at, &v, 8);
    }

    void varint(std::uint64_t v) {
        while (v >= 0x80) {
            u8(static_cast<std::uint8_t>(v) | 0x80);
            v >>= 7;
        }
        u8(static_cast<std::uint8_t>(v));
    }

    void raw(const void* data, std::size_t size) {
        const std::size_t at = bytes.size();
        bytes.resize(at + size);
        std::memcpy(bytes.data() + at, data, size);
    }
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size, std::string context)
        : data_(data), size_(size), context_(std::move(context)) {}

    std::size_t remaining() const noexcept { return size_ - pos_; }

    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, data_ + pos_, 8);
        pos_ += 8;
        return v;
    }

    std::uint64_t varint() {
        std::uint64_t v = 0;
        int shift = 0;
        while (true) {
            const std::uint8_t byte = u8();
            if (shift >= 64 || (shift == 63 && (byte & 0x7E)))
                throw IntegrityError(context_ + ": varint overflow");
            v |= static_cast<std::uint64_t>(byte & 0x7F) << shift;
            if ((byte & 0x80) == 0) return v;
            shift += 7;
        }
    }

    const std::uint8_t* raw(std::size_t size) {
        need(size);
        const std::uint8_t* at = data_ + pos_;
        pos_ += size;
        return at;
    }

private:
    void need(std::size_t size) const {
        if (size > remaining())
            throw IntegrityError(context_ + ": unexpected end of data");
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::string context_;
};

// --- section framing: u64 length, payload, u64 fnv1a checksum ---------------

inline void write_section(ByteWriter& out, const ByteWriter& payload) {
    out.u64(payload.bytes.size());
    out.raw(payload.bytes.data(), payload.bytes.size());
    out.u64(fnv1a64(payload.bytes.data(), payload.bytes.size()));
}

inline ByteReader read_section(ByteReader& in, const std::string& file,
                               const std::string& section) {
    const std::string context = file + ": " + section + " section";
    if (in.remaining() < 8) throw IntegrityError(context + ": truncated");
    const std::uint64_t length = in.u64();
    if (length > in.remaining() || in.remaining() - length < 8)
        throw IntegrityError(context + ": truncated");
    const std::uint8_t* payload = in.raw(length);
    const std::uint64_t stored = in.u64();
    if (stored != fnv1a64(payload, length))
        throw IntegrityError(context + ": checksum mismatch");
    return ByteReader(payload, length, context);
}

// --- file IO -----------------------------------------------------------------

inline void write_file(const std::filesystem::path& path, const ByteWriter& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(content.bytes.data()),
              static_cast<std::streamsize>(content.bytes.size()));
    if (!out) throw DataError("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw DataError("cannot open snapshot file: " + path.string());
    const std::streamsize size = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw DataError("read failed: " + path.string());
    return bytes;
}

// --- shard file naming --------------------------------------------------------

/// Filesystem-safe stem for a category; collisions between sanitized names
/// are resolved deterministically by a numeric suffix (map order is sorted).
inline std::map<std::string, std::string> shard_stems(const IndexShardSet& set) {
    std::map<std::string, std::string> stems;
    std::map<std::string, int> used;
    for (const auto& [category, _] : set.shards()) {
        std::string stem;
        for (char c : category) {
            const bool safe = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
            stem.push_back(safe ? c : '_');
            if (stem.size() >= 64) break;
        }
        if (stem.empty()) stem = "_";
        int& n = used[stem];
        ++n;
        if (n > 1) stem += "_" + std::to_string(n);
        stems.emplace(category, std::move(stem));
    }
    return stems;
}

// --- per-doc metadata (id + attributes) as compact JSON ------------------------

inline nlohmann::json attributes_to_json(const AttributeMap& attributes) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [name, value] : attributes) {
        if (const std::string* s = std::get_if<std::string>(&value)) {
            out[name] = *s;
        } else {
            out[name] = std::get<double>(value);
        }
    }
    return out;
}

inline AttributeMap attributes_from_json(const nlohmann::json& doc, const std::string& context) {
    if (!doc.is_object()) throw IntegrityError(context + ": attributes is not an object");
    AttributeMap out;
    for (const auto& [name, value] : doc.items()) {
        if (value.is_string()) {
            out.emplace(name, value.get<std::string>());
        } else if (value.is_number()) {
            out.emplace(name, value.get<double>());
        } else {
            throw IntegrityError(context + ": attribute is neither a string nor a number");
        }
    }
    return out;
}

// --- shard serialization --------------------------------------------------------

inline void save_shard(const IndexShard& shard, const std::filesystem::path& fwd_path,
                       const std::filesystem::path& inv_path) {
    const std::size_t n = shard.size();

    ByteWriter meta;
    meta.varint(n);
    for (std::size_t d = 0; d < n; ++d) {
        nlohmann::json doc{{"id", shard.forward.ids[d]},
                           {"attributes", attributes_to_json(shard.forward.attributes[d])}};
        const std::string text = doc.dump();
        meta.varint(text.size());
        meta.raw(text.data(), text.size());
    }

    ByteWriter embeddings;
    embeddings.raw(shard.forward.embeddings.data(), shard.forward.embeddings.size() * 4);

    ByteWriter codes;
    codes.raw(shard.forward.codes.data(), shard.forward.codes.size() * 8);

    ByteWriter fwd;
    fwd.raw(kForwardMagic, 4);
    write_section(fwd, meta);
    write_section(fwd, embeddings);
    write_section(fwd, codes);
    write_file(fwd_path, fwd);

    ByteWriter postings;
    postings.varint(shard.inverted.size());
    for (const auto& [key, list] : shard.inverted) {
        postings.varint(key.size());
        postings.raw(key.data(), key.size());
        postings.varint(list.size());
        std::uint32_t previous = 0;
        for (std::size_t i = 0; i < list.size(); ++i) {
            postings.varint(i == 0 ? list[0] : list[i] - previous);
            previous = list[i];
        }
    }

    ByteWriter inv;
    inv.raw(kInvertedMagic, 4);
    write_section(inv, postings);
    write_file(inv_path, inv);
}

inline void check_magic(ByteReader& in, const char (&magic)[4], const std::string& file) {
    const std::uint8_t* got = nullptr;
    try {
        got = in.raw(4);
    } catch (const IntegrityError&) {
        throw IntegrityError(file + ": truncated header");
    }
    if (std::memcmp(got, magic, 4) != 0)
        throw IntegrityError(file + ": bad magic (not a snapshot shard file)");
}

inline IndexShard load_shard(const std::string& category, const IndexShardSet& set,
                             const std::filesystem::path& fwd_path,
                             const std::filesystem::path& inv_path) {
    IndexShard shard;
    shard.category = category;

    const std::vector<std::uint8_t> fwd_bytes = read_file(fwd_path);
    const std::string fwd_name = fwd_path.filename().string();
    ByteReader fwd(fwd_bytes.data(), fwd_bytes.size(), fwd_name);
    check_magic(fwd, kForwardMagic, fwd_name);

    ByteReader meta = read_section(fwd, fwd_name, "meta");
    const std::uint64_t n = meta.varint();
    shard.forward.ids.reserve(n);
    shard.forward.attributes.reserve(n);
    for (std::uint64_t d = 0; d < n; ++d) {
        const std::uint64_t len = meta.varint();
        const std::uint8_t* text = meta.raw(len);
        const std::string context = fwd_name + ": meta section, document " + std::to_string(d);
        nlohmann::json doc = nlohmann::json::parse(text, text + len, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            throw IntegrityError(context + ": invalid JSON");
        auto id_it = doc.find("id");
        if (id_it == doc.end() || !id_it->is_string())
            throw IntegrityError(context + ": missing id");
        shard.forward.ids.push_back(id_it->get<std::string>());
        auto attrs_it = doc.find("attributes");
        if (attrs_it == doc.end())
            throw IntegrityError(context + ": missing attributes");
        shard.forward.attributes.push_back(attributes_from_json(*attrs_it, context));
    }
    if (meta.remaining() != 0)
        throw IntegrityError(fwd_name + ": meta section: trailing bytes");

    ByteReader embeddings = read_section(fwd, fwd_name, "embeddings");
    const std::size_t embedding_bytes = static_cast<std::size_t>(n) * set.dim() * 4;
    if (embeddings.remaining() != embedding_bytes)
        throw IntegrityError(fwd_name + ": embeddings section: size does not match " +
                             std::to_string(n) + " documents of dimension " +
                             std::to_string(set.dim()));
    shard.forward.embeddings.resize(static_cast<std::size_t>(n) * set.dim());
    if (embedding_bytes > 0)
        std::memcpy(shard.forward.embeddings.data(), embeddings.raw(embedding_bytes),
                    embedding_bytes);

    ByteReader codes = read_section(fwd, fwd_name, "codes");
    const std::size_t code_bytes = static_cast<std::size_t>(n) * set.words_per_code() * 8;
    if (codes.remaining() != code_bytes)
        throw IntegrityError(fwd_name + ": codes section: size does not match " +
                             std::to_string(n) + " documents");
    shard.forward.codes.resize(static_cast<std::size_t>(n) * set.words_per_code());
    if (code_bytes > 0)
        std::memcpy(shard.forward.codes.data(), codes.raw(code_bytes), code_bytes);

    const std::vector<std::uint8_t> inv_bytes = read_file(inv_path);
    const std::string inv_name = inv_path.filename().string();
    ByteReader inv(inv_bytes.data(), inv_bytes.size(), inv_name);
    check_magic(inv, kInvertedMagic, inv_name);

    ByteReader postings = read_section(inv, inv_name, "postings");
    const std::uint64_t key_count = postings.varint();
    for (std::uint64_t i = 0; i < key_count; ++i) {
        const std::uint64_t key_len = postings.varint();
        const std::uint8_t* key_bytes = postings.raw(key_len);
        std::string key(reinterpret_cast<const char*>(key_bytes), key_len);
        const std::uint64_t list_len = postings.varint();
        PostingList list;
        list.reserve(list_len);
        std::uint64_t previous = 0;
        for (std::uint64_t j = 0; j < list_len; ++j) {
            const std::uint64_t delta = postings.varint();
            const std::uint64_t ordinal = (j == 0) ? delta : previous + delta;
            if (ordinal >= n || (j > 0 && delta == 0))
                throw IntegrityError(inv_name + ": postings section: invalid ordinal for key " +
                                     key);
            list.push_back(static_cast<std::uint32_t>(ordinal));
            previous = ordinal;
        }
        if (!shard.inverted.emplace(std::move(key), std::move(list)).second)
            throw IntegrityError(inv_name + ": postings section: duplicate key");
    }
    if (postings.remaining() != 0)
        throw IntegrityError(inv_name + ": postings section: trailing bytes");

    return shard;
}

}  // namespace detail

/// Writes a snapshot directory: manifest.json plus shard_<category>.fwd and
/// shard_<category>.inv per shard. Rewriting the same set produces
/// byte-identical files.
inline void save_index(const IndexShardSet& set, const std::filesystem::path& directory) {
    std::filesystem::create_directories(directory);
    const std::map<std::string, std::string> stems = detail::shard_stems(set);

    nlohmann::json shard_list = nlohmann::json::array();
    for (const auto& [category, stem] : stems)
        shard_list.push_back({{"category", category}, {"stem", stem}});
    const LshConfig& config = set.config();
    nlohmann::json manifest{{"format_version", kSnapshotFormatVersion},
                            {"hasher",
                             {{"dim", config.dim},
                              {"num_bands", config.num_bands},
                              {"bits_per_band", config.bits_per_band},
                              {"seed", config.seed}}},
                            {"shards", std::move(shard_list)}};

    std::ofstream manifest_out(directory / kManifestFileName, std::ios::trunc);
    if (!manifest_out)
        throw DataError("cannot open for writing: " + (directory / kManifestFileName).string());
    manifest_out << manifest.dump(2) << "\n";
    if (!manifest_out)
        throw DataError("write failed: " + (directory / kManifestFileName).string());

    for (const auto& [category, stem] : stems) {
        const IndexShard& shard = *set.shard(category);
        detail::save_shard(shard, directory / ("shard_" + stem + ".fwd"),
                           directory / ("shard_" + stem + ".inv"));
    }
}

/// Loads a snapshot directory written by save_index. Throws VersionError for
/// an unsupported format_version, IntegrityError for damaged files, and
/// DataError for missing files or malformed manifests.
inline IndexShardSet load_index(const std::filesystem::path& directory) {
    const std::filesystem::path manifest_path = directory / kManifestFileName;
    std::ifstream manifest_in(manifest_path);
    if (!manifest_in) throw DataError("cannot open snapshot manifest: " + manifest_path.string());
    nlohmann::json manifest = nlohmann::json::parse(manifest_in, nullptr, false);
    if (manifest.is_discarded() || !manifest.is_object())
        throw DataError("snapshot manifest is not valid JSON: " + manifest_path.string());

    auto version_it = manifest.find("format_version");
    if (version_it == manifest.end() || !version_it->is_number_integer())
        throw DataError("snapshot manifest missing format_version");
    if (version_it->get<int>() != kSnapshotFormatVersion)
        throw VersionError("unsupported snapshot format_version " + version_it->dump() +
                           " (supported: " + std::to_string(kSnapshotFormatVersion) + ")");

    auto hasher_it = manifest.find("hasher");
    if (hasher_it == manifest.end() || !hasher_it->is_object())
        throw DataError("snapshot manifest missing hasher config");
    LshConfig config;
    try {
        config.dim = hasher_it->at("dim").get<std::uint32_t>();
        config.num_bands = hasher_it->at("num_bands").get<std::uint32_t>();
        config.bits_per_band = hasher_it->at("bits_per_band").get<std::uint32_t>();
        config.seed = hasher_it->at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception&) {
        throw DataError("snapshot manifest hasher config is malformed");
    }

    auto shards_it = manifest.find("shards");
    if (shards_it == manifest.end() || !shards_it->is_array())
        throw DataError("snapshot manifest missing shards list");

    IndexShardSet set(config);
    for (const auto& entry : *shards_it) {
        if (!entry.is_object() || !entry.contains("category") || !entry.contains("stem"))
            throw DataError("snapshot manifest shard entry is malformed");
        const std::string category = entry["category"].get<std::string>();
        const std::string stem = entry["stem"].get<std::string>();
        IndexShard shard = detail::load_shard(category, set,
                                              directory / ("shard_" + stem + ".fwd"),
                                              directory / ("shard_" + stem + ".inv"));
        if (!set.shards().emplace(category, std::move(shard)).second)
            throw DataError("snapshot manifest lists category twice: " + category);
    }
    return set;
}

}  // namespace tokann
