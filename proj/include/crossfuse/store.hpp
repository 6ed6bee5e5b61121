#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crossfuse/error.hpp"
#include "crossfuse/matrix.hpp"

namespace crossfuse {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// feature binary format
// ---------------------------------------------------------------------------
// 16-byte header: magic "CFV1", u32 LE row count, u32 LE dim, u32 reserved=0,
// then rows*dim little-endian float32, row-major. Bit-exact round trips.

inline constexpr char kFeatureMagic[4] = {'C', 'F', 'V', '1'};

struct FeatureMatrix {
    std::uint32_t rows = 0;
    std::uint32_t dim = 0;
    std::vector<float> data;  // rows * dim
};

namespace detail {

inline void put_u32le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32le(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32le(out, bits);
}

inline float get_f32le(std::istream& in) {
    const std::uint32_t bits = get_u32le(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace detail

inline void write_feature_file(const fs::path& path, const FeatureMatrix& m) {
    require(m.data.size() ==
                static_cast<std::size_t>(m.rows) * static_cast<std::size_t>(m.dim),
            ErrKind::dimension, "feature write: data size disagrees with header");
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrKind::io, "cannot open " + path.string() + " for writing");
    out.write(kFeatureMagic, 4);
    detail::put_u32le(out, m.rows);
    detail::put_u32le(out, m.dim);
    detail::put_u32le(out, 0);  // reserved
    for (float v : m.data) detail::put_f32le(out, v);
    out.flush();
    require(out.good(), ErrKind::io, "write failed for " + path.string());
}

inline FeatureMatrix read_feature_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrKind::io, "cannot open feature file " + path.string());
    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0);
    require(file_size >= 16, ErrKind::io,
            "feature file " + path.string() + " too short for a header (" +
                std::to_string(file_size) + " bytes)");
    char magic[4];
    in.read(magic, 4);
    require(std::memcmp(magic, kFeatureMagic, 4) == 0, ErrKind::io,
            "feature file " + path.string() + " has wrong magic");
    FeatureMatrix m;
    m.rows = detail::get_u32le(in);
    m.dim = detail::get_u32le(in);
    const std::uint32_t reserved = detail::get_u32le(in);
    require(reserved == 0, ErrKind::io,
            "feature file " + path.string() + " has nonzero reserved field");
    const std::uint64_t want =
        16 + 4ull * static_cast<std::uint64_t>(m.rows) * m.dim;
    require(file_size == want, ErrKind::io,
            "feature file " + path.string() + " truncated or padded: header implies " +
                std::to_string(want) + " bytes, file has " + std::to_string(file_size) +
                " (payload ends at byte offset " + std::to_string(file_size) + ")");
    m.data.resize(static_cast<std::size_t>(m.rows) * m.dim);
    for (float& v : m.data) v = detail::get_f32le(in);
    require(in.good(), ErrKind::io, "read failed for " + path.string());
    return m;
}

// Mean over unmasked rows; masked (padding) rows are excluded entirely.
inline Vec frame_aggregate(const FeatureMatrix& frames, const std::vector<bool>& pad_mask) {
    require(frames.rows >= 1, ErrKind::input, "frame_aggregate: no rows");
    require(pad_mask.size() == frames.rows, ErrKind::dimension,
            "frame_aggregate: mask length disagrees with row count");
    Vec acc(frames.dim, 0.0);
    std::size_t used = 0;
    for (std::uint32_t r = 0; r < frames.rows; ++r) {
        if (pad_mask[r]) continue;
        for (std::uint32_t c = 0; c < frames.dim; ++c)
            acc[c] += static_cast<double>(frames.data[static_cast<std::size_t>(r) * frames.dim + c]);
        ++used;
    }
    require(used > 0, ErrKind::input, "frame_aggregate: every row is masked");
    for (double& v : acc) v /= static_cast<double>(used);
    return acc;
}

// ---------------------------------------------------------------------------
// manifest + records
// ---------------------------------------------------------------------------

struct FeatureRecord {
    std::string sample_id;
    std::size_t label = 0;  // 0 = none, 1 = implicit, 2 = explicit
    Vec f_image;            // d
    Vec f_text;             // d
    Vec f_audio;            // d
    std::optional<std::string> transcript;
    Vec f_caption;  // d_c; zero-filled when the sample ships no caption feature
    bool has_caption = false;
};

struct FeatureStore {
    std::size_t dim_d = 0;
    std::size_t dim_dc = 0;
    std::vector<FeatureRecord> records;
};

inline constexpr int kManifestSchemaVersion = 1;

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj,
                                std::initializer_list<const char*> allowed,
                                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        require(ok, ErrKind::config, where + ": unknown key '" + it.key() + "'");
    }
}

// Aggregates multi-row files (frame dumps) to one vector; single-row files
// pass through. All rows count (no mask in the on-disk format; explicit
// padding masks only exist on the in-memory aggregation path).
inline Vec load_vector(const fs::path& path, std::size_t want_dim,
                       const std::string& sample_id) {
    FeatureMatrix m = read_feature_file(path);
    require(m.dim == want_dim, ErrKind::io,
            "sample " + sample_id + ": " + path.filename().string() + " has dim " +
                std::to_string(m.dim) + ", manifest declares " + std::to_string(want_dim));
    require(m.rows >= 1, ErrKind::io,
            "sample " + sample_id + ": " + path.filename().string() + " has no rows");
    Vec v;
    if (m.rows == 1) {
        v.assign(m.data.begin(), m.data.end());
    } else {
        v = frame_aggregate(m, std::vector<bool>(m.rows, false));
    }
    require(all_finite(v), ErrKind::io,
            "sample " + sample_id + ": non-finite value in " + path.filename().string());
    return v;
}

}  // namespace detail

inline FeatureStore load_feature_store(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    require(in.good(), ErrKind::io, "cannot open manifest " + manifest_path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrKind::io, "manifest " + manifest_path.string() + ": " + e.what());
    }
    require(j.is_object(), ErrKind::io, "manifest root must be an object");
    detail::reject_unknown_keys(j, {"schema_version", "dim_d", "dim_dc", "samples"},
                                "manifest");
    require(j.contains("schema_version") && j["schema_version"].is_number_integer(),
            ErrKind::io, "manifest: missing integer schema_version");
    require(j["schema_version"].get<int>() == kManifestSchemaVersion, ErrKind::io,
            "manifest: unsupported schema_version " + j["schema_version"].dump());
    require(j.contains("dim_d") && j.contains("dim_dc") && j.contains("samples"),
            ErrKind::io, "manifest: need dim_d, dim_dc and samples");

    FeatureStore store;
    store.dim_d = j["dim_d"].get<std::size_t>();
    store.dim_dc = j["dim_dc"].get<std::size_t>();
    require(store.dim_d >= 1 && store.dim_dc >= 1, ErrKind::io,
            "manifest: dimensions must be positive");
    require(j["samples"].is_array() && !j["samples"].empty(), ErrKind::io,
            "manifest: samples must be a nonempty array");

    const fs::path base = manifest_path.parent_path();
    for (const auto& s : j["samples"]) {
        require(s.is_object(), ErrKind::io, "manifest: sample entries must be objects");
        detail::reject_unknown_keys(s,
                                    {"id", "label", "image_file", "text_file",
                                     "audio_file", "caption_file", "transcript"},
                                    "manifest sample");
        require(s.contains("id") && s["id"].is_string(), ErrKind::io,
                "manifest: sample missing string id");
        FeatureRecord rec;
        rec.sample_id = s["id"].get<std::string>();
        require(s.contains("label") && s["label"].is_number_unsigned(), ErrKind::io,
                "sample " + rec.sample_id + ": missing nonnegative integer label");
        rec.label = s["label"].get<std::size_t>();
        require(rec.label <= 2, ErrKind::io,
                "sample " + rec.sample_id + ": label must be 0, 1 or 2, got " +
                    std::to_string(rec.label));
        for (const char* key : {"image_file", "text_file", "audio_file"})
            require(s.contains(key) && s[key].is_string(), ErrKind::io,
                    "sample " + rec.sample_id + ": missing " + std::string(key));
        rec.f_image =
            detail::load_vector(base / s["image_file"].get<std::string>(), store.dim_d,
                                rec.sample_id);
        rec.f_text =
            detail::load_vector(base / s["text_file"].get<std::string>(), store.dim_d,
                                rec.sample_id);
        rec.f_audio =
            detail::load_vector(base / s["audio_file"].get<std::string>(), store.dim_d,
                                rec.sample_id);
        if (s.contains("caption_file")) {
            require(s["caption_file"].is_string(), ErrKind::io,
                    "sample " + rec.sample_id + ": caption_file must be a string");
            rec.f_caption =
                detail::load_vector(base / s["caption_file"].get<std::string>(),
                                    store.dim_dc, rec.sample_id);
            rec.has_caption = true;
        } else {
            rec.f_caption.assign(store.dim_dc, 0.0);
        }
        if (s.contains("transcript")) {
            require(s["transcript"].is_string(), ErrKind::io,
                    "sample " + rec.sample_id + ": transcript must be a string");
            rec.transcript = s["transcript"].get<std::string>();
        }
        store.records.push_back(std::move(rec));
    }
    return store;
}

// Writes one store: manifest.json plus one single-row feature file per
// modality per sample. Doubles are quantized to float32 by the format.
inline void write_feature_store(const fs::path& dir, const FeatureStore& store) {
    require(!store.records.empty(), ErrKind::input, "refusing to write an empty store");
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrKind::io, "cannot create store directory " + dir.string());

    nlohmann::json samples = nlohmann::json::array();
    auto write_vec = [&](const std::string& name, const Vec& v, std::size_t want) {
        require(v.size() == want, ErrKind::dimension,
                "store write: " + name + " has length " + std::to_string(v.size()) +
                    ", expected " + std::to_string(want));
        FeatureMatrix m;
        m.rows = 1;
        m.dim = static_cast<std::uint32_t>(v.size());
        m.data.reserve(v.size());
        for (double x : v) m.data.push_back(static_cast<float>(x));
        write_feature_file(dir / name, m);
    };
    for (const FeatureRecord& rec : store.records) {
        nlohmann::json s;
        s["id"] = rec.sample_id;
        s["label"] = rec.label;
        s["image_file"] = rec.sample_id + ".img.cfv";
        s["text_file"] = rec.sample_id + ".txt.cfv";
        s["audio_file"] = rec.sample_id + ".aud.cfv";
        write_vec(s["image_file"].get<std::string>(), rec.f_image, store.dim_d);
        write_vec(s["text_file"].get<std::string>(), rec.f_text, store.dim_d);
        write_vec(s["audio_file"].get<std::string>(), rec.f_audio, store.dim_d);
        if (rec.has_caption) {
            s["caption_file"] = rec.sample_id + ".cap.cfv";
            write_vec(s["caption_file"].get<std::string>(), rec.f_caption, store.dim_dc);
        }
        if (rec.transcript) s["transcript"] = *rec.transcript;
        samples.push_back(std::move(s));
    }
    nlohmann::json manifest;
    manifest["schema_version"] = kManifestSchemaVersion;
    manifest["dim_d"] = store.dim_d;
    manifest["dim_dc"] = store.dim_dc;
    manifest["samples"] = std::move(samples);

    std::ofstream out(dir / "manifest.json", std::ios::binary);
    require(out.good(), ErrKind::io,
            "cannot open " + (dir / "manifest.json").string() + " for writing");
    out << manifest.dump(2) << "\n";
    out.flush();
    require(out.good(), ErrKind::io, "write failed for manifest.json");
}

}  // namespace crossfuse
