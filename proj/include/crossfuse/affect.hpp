#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "crossfuse/error.hpp"
#include "crossfuse/matrix.hpp"

namespace crossfuse {

// Fixed category order: eight emotions plus the two polarity tags.
inline constexpr std::array<const char*, 10> kEmotionCategories = {
    "anger",    "anticipation", "disgust", "fear",     "joy",
    "negative", "positive",     "sadness", "surprise", "trust"};

inline int emotion_category_index(const std::string& name) {
    for (std::size_t i = 0; i < kEmotionCategories.size(); ++i)
        if (name == kEmotionCategories[i]) return static_cast<int>(i);
    return -1;
}

struct AffectLexicon {
    struct Entry {
        std::uint16_t categories = 0;  // bit k = category k
        double valence = 0.0;
    };
    std::unordered_map<std::string, Entry> entries;
};

inline std::string lowercase_ascii(const std::string& s) {
    std::string out = s;
    for (char& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

// Lowercased alphanumeric runs; everything else separates tokens.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

// Line format: token<TAB>comma-separated-categories<TAB>valence.
// The category field may be empty; valence must be finite and in [-4, 4].
inline AffectLexicon parse_lexicon(std::istream& in, const std::string& origin) {
    AffectLexicon lex;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto where = origin + ":" + std::to_string(line_no);
        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string::npos ? std::string::npos
                                                    : line.find('\t', tab1 + 1);
        require(tab1 != std::string::npos && tab2 != std::string::npos,
                ErrKind::io, "lexicon " + where + ": expected 3 tab-separated fields");
        const std::string token = lowercase_ascii(line.substr(0, tab1));
        const std::string cats = line.substr(tab1 + 1, tab2 - tab1 - 1);
        const std::string val_text = line.substr(tab2 + 1);
        require(!token.empty(), ErrKind::io, "lexicon " + where + ": empty token");
        require(!lex.entries.contains(token), ErrKind::io,
                "lexicon " + where + ": duplicate token '" + token + "'");

        AffectLexicon::Entry entry;
        std::stringstream cs(cats);
        std::string cat;
        while (std::getline(cs, cat, ',')) {
            if (cat.empty()) continue;
            const int idx = emotion_category_index(cat);
            require(idx >= 0, ErrKind::io,
                    "lexicon " + where + ": unknown category '" + cat + "'");
            entry.categories |= static_cast<std::uint16_t>(1u << idx);
        }
        try {
            std::size_t used = 0;
            entry.valence = std::stod(val_text, &used);
            require(used == val_text.size(), ErrKind::io,
                    "lexicon " + where + ": trailing junk after valence");
        } catch (const CfError&) {
            throw;
        } catch (const std::exception&) {
            fail(ErrKind::io, "lexicon " + where + ": bad valence '" + val_text + "'");
        }
        require(std::isfinite(entry.valence) && entry.valence >= -4.0 &&
                    entry.valence <= 4.0,
                ErrKind::io,
                "lexicon " + where + ": valence must lie in [-4, 4], got " + val_text);
        lex.entries.emplace(token, entry);
    }
    return lex;
}

inline AffectLexicon load_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrKind::io, "cannot open lexicon file " + path.string());
    return parse_lexicon(in, path.filename().string());
}

// Component k = (tokens tagged with category k) / (total tokens), in [0,1].
inline Vec emotion_vector(const std::string& text, const AffectLexicon& lex) {
    Vec e(kEmotionCategories.size(), 0.0);
    const std::vector<std::string> tokens = tokenize(text);
    if (tokens.empty()) return e;
    std::array<std::size_t, 10> counts{};
    for (const std::string& t : tokens) {
        auto it = lex.entries.find(t);
        if (it == lex.entries.end()) continue;
        for (std::size_t k = 0; k < counts.size(); ++k)
            if (it->second.categories & (1u << k)) ++counts[k];
    }
    for (std::size_t k = 0; k < counts.size(); ++k) {
        e[k] = static_cast<double>(counts[k]) / static_cast<double>(tokens.size());
        e[k] = std::min(1.0, std::max(0.0, e[k]));
    }
    return e;
}

// Sum of matched valences S mapped through S/sqrt(S^2+15), always in (-1,1).
inline double sentiment_score(const std::string& text, const AffectLexicon& lex) {
    double s = 0.0;
    for (const std::string& t : tokenize(text)) {
        auto it = lex.entries.find(t);
        if (it != lex.entries.end()) s += it->second.valence;
    }
    return s / std::sqrt(s * s + 15.0);
}

// f_ES = [e, s], length 11.
inline Vec build_affect(const std::string& text, const AffectLexicon& lex) {
    Vec out = emotion_vector(text, lex);
    out.push_back(sentiment_score(text, lex));
    return out;
}

inline constexpr std::size_t kAffectDim = 11;

}  // namespace crossfuse
