#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "crossfuse/affect.hpp"
#include "crossfuse/error.hpp"
#include "crossfuse/matrix.hpp"
#include "crossfuse/rng.hpp"
#include "crossfuse/store.hpp"

namespace crossfuse {

// Class-conditional Gaussian features: per modality, class means are scaled
// so their minimum pairwise distance is exactly delta * noise_std; the three
// modality vectors of one sample share a latent draw mixed in by rho.
struct SynthSpec {
    std::size_t classes = 3;
    std::vector<std::size_t> per_class = {100, 100, 100};
    std::size_t d = 32;
    std::size_t d_c = 32;
    double delta = 4.0;
    double rho = 0.9;
    double noise_std = 1.0;
    std::uint64_t seed = 0;
};

inline void validate(const SynthSpec& s) {
    require(s.classes == 2 || s.classes == 3, ErrKind::config,
            "synth: classes must be 2 or 3, got " + std::to_string(s.classes));
    require(s.per_class.size() == s.classes, ErrKind::config,
            "synth: need one per-class count per class");
    for (std::size_t c = 0; c < s.classes; ++c)
        require(s.per_class[c] >= 4, ErrKind::config,
                "synth: class " + std::to_string(c) + " needs at least 4 samples");
    require(s.d >= 2, ErrKind::config, "synth: feature dim must be >= 2");
    require(s.d_c >= 1, ErrKind::config, "synth: caption dim must be >= 1");
    require(s.delta >= 0.0 && std::isfinite(s.delta), ErrKind::config,
            "synth: separation delta must be >= 0");
    require(s.rho >= 0.0 && s.rho <= 1.0, ErrKind::config,
            "synth: consistency rho must lie in [0, 1]");
    require(s.noise_std > 0.0 && std::isfinite(s.noise_std), ErrKind::config,
            "synth: noise std must be positive");
}

namespace detail {

// Gaussian directions rescaled so the closest pair of class means sits at
// distance exactly delta * noise_std (all zeros when delta is 0).
inline std::vector<Vec> synth_means(Rng& rng, std::size_t classes, std::size_t dim,
                                    double delta, double noise_std) {
    std::vector<Vec> means(classes, Vec(dim));
    for (auto& mu : means)
        for (double& v : mu) v = rng.normal();
    double min_dist = 0.0;
    bool first = true;
    for (std::size_t a = 0; a < classes; ++a)
        for (std::size_t b = a + 1; b < classes; ++b) {
            double s = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double diff = means[a][k] - means[b][k];
                s += diff * diff;
            }
            const double dist = std::sqrt(s);
            if (first || dist < min_dist) {
                min_dist = dist;
                first = false;
            }
        }
    require(min_dist > 0.0, ErrKind::numeric, "synth: degenerate mean draw");
    const double scale = delta * noise_std / min_dist;
    for (auto& mu : means)
        for (double& v : mu) v *= scale;
    return means;
}

// One shared transcript pool grouped into three affect flavors. Every class
// draws from every flavor; the class only tilts the odds (see make_store), so
// affect features correlate with the label without identifying it. Keyed
// harder than this, the transcripts alone would defeat the class-blind
// (delta=0, rho=0) chance-level contract.
inline const std::array<std::vector<std::string>, 3>& transcript_pools() {
    static const std::array<std::vector<std::string>, 3> pools = {{
        {"we love our calm friend", "hope and love for a friend",
         "the calm friend brings hope", "love and hope and calm"},
        {"they hate the enemy", "the enemy will attack with hate",
         "fear the attack of the enemy", "hate and fear the enemy attack"},
        {"a surprise full of grief", "grief after the surprise",
         "the surprise brings grief", "grief and surprise and grief"},
    }};
    return pools;
}

// Probability that a class draws a transcript from its own flavor; the other
// two flavors split the remainder evenly. At 0.4 a single transcript pins the
// class with at most 0.4 posterior, keeping the affect channel weak.
inline constexpr double kOwnFlavorOdds = 0.4;

inline const char* synth_lexicon_tsv() {
    return
        "love\tjoy,positive\t3.2\n"
        "hate\tanger,disgust,negative\t-2.7\n"
        "fear\tfear,negative\t-1.8\n"
        "hope\tanticipation,joy,positive\t1.9\n"
        "calm\tjoy,positive,trust\t1.3\n"
        "attack\tanger,fear,negative\t-2.1\n"
        "friend\tjoy,positive,trust\t2.2\n"
        "enemy\tanger,disgust,fear,negative\t-2.4\n"
        "surprise\tsurprise\t0.9\n"
        "grief\tsadness,negative\t-2.9\n";
}

inline double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace detail

// In-memory generation; every feature value is float32-quantized so the
// in-memory store and its on-disk form agree bit for bit.
inline FeatureStore make_store(const SynthSpec& spec) {
    validate(spec);
    Rng rng(mix_seed(spec.seed, 0x73796e74));

    const auto mu_img = detail::synth_means(rng, spec.classes, spec.d, spec.delta,
                                            spec.noise_std);
    const auto mu_txt = detail::synth_means(rng, spec.classes, spec.d, spec.delta,
                                            spec.noise_std);
    const auto mu_aud = detail::synth_means(rng, spec.classes, spec.d, spec.delta,
                                            spec.noise_std);
    const auto mu_cap = detail::synth_means(rng, spec.classes, spec.d_c, spec.delta,
                                            spec.noise_std);

    const double mix_shared = spec.rho;
    const double mix_own = std::sqrt(1.0 - spec.rho * spec.rho);
    const auto& pools = detail::transcript_pools();

    FeatureStore st;
    st.dim_d = spec.d;
    st.dim_dc = spec.d_c;
    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::size_t i = 0; i < spec.per_class[c]; ++i) {
            Vec g(spec.d);
            for (double& v : g) v = rng.normal();
            auto modality = [&](const Vec& mu) {
                Vec x(spec.d);
                for (std::size_t k = 0; k < spec.d; ++k)
                    x[k] = detail::quantize(mu[k] + spec.noise_std *
                                                        (mix_shared * g[k] +
                                                         mix_own * rng.normal()));
                return x;
            };
            FeatureRecord r;
            r.sample_id = "s" + std::to_string(c) + "_" + std::to_string(i);
            r.label = c;
            r.f_image = modality(mu_img[c]);
            r.f_text = modality(mu_txt[c]);
            r.f_audio = modality(mu_aud[c]);
            r.f_caption.resize(spec.d_c);
            for (std::size_t k = 0; k < spec.d_c; ++k)
                r.f_caption[k] =
                    detail::quantize(mu_cap[c][k] + spec.noise_std * rng.normal());
            r.has_caption = true;
            const std::size_t own = c % pools.size();
            const double u = rng.uniform(0.0, 1.0);
            const double other = (1.0 - detail::kOwnFlavorOdds) / 2.0;
            const std::size_t flavor =
                u < detail::kOwnFlavorOdds
                    ? own
                    : (u < detail::kOwnFlavorOdds + other ? (own + 1) % pools.size()
                                                          : (own + 2) % pools.size());
            const auto& pool = pools[flavor];
            r.transcript = pool[rng.below(pool.size())];
            st.records.push_back(std::move(r));
        }
    }
    return st;
}

// Generates the store and writes it plus the matching affect lexicon; returns
// the manifest path.
inline std::filesystem::path generate(const SynthSpec& spec,
                                      const std::filesystem::path& out_dir) {
    FeatureStore st = make_store(spec);
    write_feature_store(out_dir, st);
    std::ofstream lex(out_dir / "lexicon.tsv", std::ios::binary);
    require(lex.good(), ErrKind::io,
            "cannot write " + (out_dir / "lexicon.tsv").string());
    lex << detail::synth_lexicon_tsv();
    lex.flush();
    require(lex.good(), ErrKind::io,
            "write failed for " + (out_dir / "lexicon.tsv").string());
    return out_dir / "manifest.json";
}

struct CorpusStats {
    std::size_t total = 0;
    std::size_t dim_d = 0;
    std::size_t dim_dc = 0;
    std::map<std::size_t, std::size_t> class_counts;
    double mean_transcript_tokens = 0.0;

    std::string format() const {
        std::ostringstream os;
        os << "samples " << total << "\n";
        os << "dim_d " << dim_d << "\n";
        os << "dim_dc " << dim_dc << "\n";
        for (const auto& [c, n] : class_counts)
            os << "class " << c << ": " << n << "\n";
        os << "mean transcript tokens " << mean_transcript_tokens << "\n";
        return os.str();
    }
};

// Missing transcripts count as zero tokens in the mean.
inline CorpusStats describe(const FeatureStore& st) {
    require(!st.records.empty(), ErrKind::input, "describe: store has no samples");
    CorpusStats out;
    out.total = st.records.size();
    out.dim_d = st.dim_d;
    out.dim_dc = st.dim_dc;
    double token_sum = 0.0;
    for (const FeatureRecord& r : st.records) {
        ++out.class_counts[r.label];
        if (r.transcript)
            token_sum += static_cast<double>(tokenize(*r.transcript).size());
    }
    out.mean_transcript_tokens = token_sum / static_cast<double>(out.total);
    return out;
}

}  // namespace crossfuse
