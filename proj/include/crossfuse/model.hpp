#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "crossfuse/affect.hpp"
#include "crossfuse/error.hpp"
#include "crossfuse/matrix.hpp"
#include "crossfuse/nn.hpp"
#include "crossfuse/rng.hpp"
#include "crossfuse/tape.hpp"

namespace crossfuse {

// ---------------------------------------------------------------------------
// shapes
// ---------------------------------------------------------------------------

struct ModelDims {
    std::size_t d = 1024;     // modality feature width
    std::size_t d_prime = 256;  // projection width (contrastive space)
    std::size_t d_x = 1024;   // cross-encoder width
    std::size_t h = 128;      // ES/CP encoder width
    std::size_t d_c = 768;    // caption feature width
    std::size_t classes = 3;
    std::size_t encoder_depth = 1;
    std::vector<std::size_t> classifier_widths = {512, 256, 128, 64};
    double dropout = 0.3;
    bool fuse_projected = false;  // fuse z_XY (projected) instead of raw f_XY
};

inline void validate(const ModelDims& m) {
    require(m.d >= 1 && m.d_prime >= 1 && m.d_x >= 1 && m.h >= 1 && m.d_c >= 1,
            ErrKind::config, "model dims must all be positive");
    require(m.classes == 2 || m.classes == 3, ErrKind::config,
            "classifier supports 2 or 3 classes, got " + std::to_string(m.classes));
    require(m.encoder_depth >= 1, ErrKind::config, "encoder depth must be >= 1");
    require(!m.classifier_widths.empty(), ErrKind::config,
            "classifier needs at least one hidden width");
    require(m.dropout >= 0.0 && m.dropout < 1.0, ErrKind::config,
            "dropout must lie in [0, 1)");
    for (std::size_t w : m.classifier_widths)
        require(w >= 1, ErrKind::config, "classifier widths must be positive");
}

// The width of the fused vector F: six cross-encoder outputs plus the two
// affect/caption encodings.
inline std::size_t fused_dim(const ModelDims& m) {
    const std::size_t part = m.fuse_projected ? m.d_prime : m.d_x;
    return 6 * part + 2 * m.h;
}

// ---------------------------------------------------------------------------
// parameter containers
// ---------------------------------------------------------------------------

// A stack of dense layers, ReLU after each; layer 0 maps in->out, the rest
// keep the output width.
struct Encoder {
    std::vector<DenseLayer> layers;
};

inline Encoder make_encoder(std::size_t in, std::size_t out, std::size_t depth) {
    Encoder e;
    e.layers.emplace_back(out, in);
    for (std::size_t i = 1; i < depth; ++i) e.layers.emplace_back(out, out);
    return e;
}

inline Vec encode(const Encoder& e, Vec x) {
    for (const DenseLayer& layer : e.layers) x = relu(dense_forward(layer, x));
    return x;
}

struct StageOneEncoders {
    Encoder enc_II, enc_TT, enc_AA;  // d -> d
    DenseLayer proj_ITA;             // 3d -> d', ReLU
};

struct AuxEncoders {
    Encoder enc_ES;       // 11 -> h
    DenseLayer proj_ES;   // h -> d'
    Encoder enc_CP;       // d_c -> h
    DenseLayer proj_CP;   // h -> d'
};

struct CrossEncoders {
    Encoder enc_IT, enc_TI, enc_IA, enc_AI, enc_TA, enc_AT;  // d -> d_x
    DenseLayer proj_IT, proj_IA, proj_TA;  // d_x -> d', shared per pair
};

struct ClassifierHead {
    std::vector<DenseLayer> hidden;  // widths 512/256/128/64 by default
    DenseLayer out;                  // last width -> C
    double dropout_rate = 0.3;
};

struct Model {
    ModelDims dims;
    StageOneEncoders s1;
    AuxEncoders aux;
    CrossEncoders cross;
    ClassifierHead head;
};

// Canonical layer enumeration; construction, initialization, gradients,
// optimizer state and checkpoints all follow this one order.
template <class ModelT, class Fn>
void visit_dense(ModelT& m, Fn&& fn) {
    auto stack = [&](auto& enc, const std::string& name) {
        for (std::size_t i = 0; i < enc.layers.size(); ++i)
            fn(name + "." + std::to_string(i), enc.layers[i]);
    };
    stack(m.s1.enc_II, "s1.enc_II");
    stack(m.s1.enc_TT, "s1.enc_TT");
    stack(m.s1.enc_AA, "s1.enc_AA");
    fn("s1.proj_ITA", m.s1.proj_ITA);
    stack(m.aux.enc_ES, "aux.enc_ES");
    fn("aux.proj_ES", m.aux.proj_ES);
    stack(m.aux.enc_CP, "aux.enc_CP");
    fn("aux.proj_CP", m.aux.proj_CP);
    stack(m.cross.enc_IT, "cross.enc_IT");
    stack(m.cross.enc_TI, "cross.enc_TI");
    stack(m.cross.enc_IA, "cross.enc_IA");
    stack(m.cross.enc_AI, "cross.enc_AI");
    stack(m.cross.enc_TA, "cross.enc_TA");
    stack(m.cross.enc_AT, "cross.enc_AT");
    fn("cross.proj_IT", m.cross.proj_IT);
    fn("cross.proj_IA", m.cross.proj_IA);
    fn("cross.proj_TA", m.cross.proj_TA);
    for (std::size_t i = 0; i < m.head.hidden.size(); ++i)
        fn("head.hidden." + std::to_string(i), m.head.hidden[i]);
    fn("head.out", m.head.out);
}

inline Model make_model(const ModelDims& dims, std::uint64_t seed) {
    validate(dims);
    Model m;
    m.dims = dims;
    m.s1.enc_II = make_encoder(dims.d, dims.d, dims.encoder_depth);
    m.s1.enc_TT = make_encoder(dims.d, dims.d, dims.encoder_depth);
    m.s1.enc_AA = make_encoder(dims.d, dims.d, dims.encoder_depth);
    m.s1.proj_ITA = DenseLayer(dims.d_prime, 3 * dims.d);
    m.aux.enc_ES = make_encoder(kAffectDim, dims.h, dims.encoder_depth);
    m.aux.proj_ES = DenseLayer(dims.d_prime, dims.h);
    m.aux.enc_CP = make_encoder(dims.d_c, dims.h, dims.encoder_depth);
    m.aux.proj_CP = DenseLayer(dims.d_prime, dims.h);
    for (Encoder* e : {&m.cross.enc_IT, &m.cross.enc_TI, &m.cross.enc_IA,
                       &m.cross.enc_AI, &m.cross.enc_TA, &m.cross.enc_AT})
        *e = make_encoder(dims.d, dims.d_x, dims.encoder_depth);
    for (DenseLayer* p : {&m.cross.proj_IT, &m.cross.proj_IA, &m.cross.proj_TA})
        *p = DenseLayer(dims.d_prime, dims.d_x);
    std::size_t in = fused_dim(dims);
    for (std::size_t w : dims.classifier_widths) {
        m.head.hidden.emplace_back(w, in);
        in = w;
    }
    m.head.out = DenseLayer(dims.classes, in);
    m.head.dropout_rate = dims.dropout;

    Rng rng(mix_seed(seed, 0x696e6974));  // "init" stream
    visit_dense(m, [&](const std::string&, DenseLayer& layer) { init_dense(layer, rng); });
    return m;
}

// One gradient buffer per layer, keyed by the canonical name.
using GradMap = std::map<std::string, DenseGrad>;

inline GradMap make_grads(Model& m) {
    GradMap g;
    visit_dense(m, [&](const std::string& name, DenseLayer& layer) {
        g.emplace(name, DenseGrad(layer));
    });
    return g;
}

inline void zero(GradMap& g) {
    for (auto& [name, dg] : g) dg.zero();
}

// nullptr map (or a name outside the map) means the layer is frozen.
inline DenseGrad* grad_for(GradMap* g, const std::string& name) {
    if (g == nullptr) return nullptr;
    auto it = g->find(name);
    return it == g->end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// plain forward passes (eval path)
// ---------------------------------------------------------------------------

struct Stage1Out {
    Vec f_II, f_TT, f_AA;  // d
    Vec z_ITA;             // d'
};

inline Stage1Out stage1_forward(const Vec& f_image, const Vec& f_text,
                                const Vec& f_audio, const Model& m) {
    require(f_image.size() == m.dims.d && f_text.size() == m.dims.d &&
                f_audio.size() == m.dims.d,
            ErrKind::input, "stage 1: modality vectors must all have width " +
                                std::to_string(m.dims.d));
    Stage1Out o;
    o.f_II = encode(m.s1.enc_II, f_image);
    o.f_TT = encode(m.s1.enc_TT, f_text);
    o.f_AA = encode(m.s1.enc_AA, f_audio);
    std::vector<Vec> parts{o.f_II, o.f_TT, o.f_AA};
    o.z_ITA = relu(dense_forward(m.s1.proj_ITA, concat(parts)));
    return o;
}

struct AuxOut {
    Vec g_ES, z_ES;  // h, d'
    Vec g_CP, z_CP;  // h, d'
};

inline AuxOut aux_forward(const Vec& f_es, const Vec& f_caption, const Model& m) {
    AuxOut o;
    o.g_ES = encode(m.aux.enc_ES, f_es);
    o.z_ES = relu(dense_forward(m.aux.proj_ES, o.g_ES));
    o.g_CP = encode(m.aux.enc_CP, f_caption);
    o.z_CP = relu(dense_forward(m.aux.proj_CP, o.g_CP));
    return o;
}

struct CrossOut {
    Vec f_IT, f_TI, f_IA, f_AI, f_TA, f_AT;  // d_x
    Vec z_IT, z_TI, z_IA, z_AI, z_TA, z_AT;  // d'
};

inline CrossOut stage2_forward(const Vec& f_II, const Vec& f_TT, const Vec& f_AA,
                               const Model& m) {
    require(f_II.size() == m.dims.d && f_TT.size() == m.dims.d &&
                f_AA.size() == m.dims.d,
            ErrKind::config, "stage 2: inputs must have width " +
                                 std::to_string(m.dims.d));
    CrossOut o;
    o.f_IT = encode(m.cross.enc_IT, f_II);
    o.f_TI = encode(m.cross.enc_TI, f_TT);
    o.f_IA = encode(m.cross.enc_IA, f_II);
    o.f_AI = encode(m.cross.enc_AI, f_AA);
    o.f_TA = encode(m.cross.enc_TA, f_TT);
    o.f_AT = encode(m.cross.enc_AT, f_AA);
    o.z_IT = relu(dense_forward(m.cross.proj_IT, o.f_IT));
    o.z_TI = relu(dense_forward(m.cross.proj_IT, o.f_TI));
    o.z_IA = relu(dense_forward(m.cross.proj_IA, o.f_IA));
    o.z_AI = relu(dense_forward(m.cross.proj_IA, o.f_AI));
    o.z_TA = relu(dense_forward(m.cross.proj_TA, o.f_TA));
    o.z_AT = relu(dense_forward(m.cross.proj_TA, o.f_AT));
    return o;
}

// F = [f_IT | f_IA | f_TI | f_TA | f_AI | f_AT | g_ES | g_CP]; the order is
// part of the contract, not a convenience.
inline Vec fuse_features(const Vec& f_IT, const Vec& f_IA, const Vec& f_TI,
                         const Vec& f_TA, const Vec& f_AI, const Vec& f_AT,
                         const Vec& g_ES, const Vec& g_CP) {
    const std::vector<const Vec*> parts{&f_IT, &f_IA, &f_TI, &f_TA,
                                        &f_AI, &f_AT, &g_ES, &g_CP};
    Vec out;
    for (const Vec* p : parts) {
        require(!p->empty(), ErrKind::input, "fuse: missing component");
        require(all_finite(*p), ErrKind::input, "fuse: non-finite component");
        out.insert(out.end(), p->begin(), p->end());
    }
    return out;
}

// Byte offsets of each fused component, in the same fixed order.
inline std::array<std::size_t, 8> fuse_offsets(std::size_t part_dim, std::size_t h) {
    std::array<std::size_t, 8> off{};
    std::size_t cur = 0;
    for (int i = 0; i < 6; ++i) {
        off[static_cast<std::size_t>(i)] = cur;
        cur += part_dim;
    }
    off[6] = cur;
    off[7] = cur + h;
    return off;
}

inline Vec fuse_from(const CrossOut& c, const AuxOut& a, bool projected) {
    if (projected)
        return fuse_features(c.z_IT, c.z_IA, c.z_TI, c.z_TA, c.z_AI, c.z_AT,
                             a.g_ES, a.g_CP);
    return fuse_features(c.f_IT, c.f_IA, c.f_TI, c.f_TA, c.f_AI, c.f_AT,
                         a.g_ES, a.g_CP);
}

inline Vec classifier_logits(const ClassifierHead& head, const Vec& f) {
    require(!head.hidden.empty(), ErrKind::config, "classifier has no hidden layers");
    require(f.size() == head.hidden[0].in_dim(), ErrKind::config,
            "classifier input has width " + std::to_string(f.size()) +
                ", head expects " + std::to_string(head.hidden[0].in_dim()));
    Vec x = f;
    for (const DenseLayer& layer : head.hidden) x = relu(dense_forward(layer, x));
    return dense_forward(head.out, x);
}

inline Vec classify(const ClassifierHead& head, const Vec& f) {
    return softmax(classifier_logits(head, f));
}

// Argmax with ties broken toward the lowest index.
inline std::size_t predict_label(const Vec& y) {
    require(!y.empty(), ErrKind::input, "predict: empty probability vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < y.size(); ++i)
        if (y[i] > y[best]) best = i;
    return best;
}

// ---------------------------------------------------------------------------
// tape builders (training path)
// ---------------------------------------------------------------------------

inline int tape_stack(Tape& t, const Encoder& e, const std::string& name,
                      GradMap* g, int x) {
    for (std::size_t i = 0; i < e.layers.size(); ++i)
        x = t.relu_node(t.dense(x, e.layers[i],
                                grad_for(g, name + "." + std::to_string(i))));
    return x;
}

inline int tape_proj(Tape& t, const DenseLayer& p, const std::string& name,
                     GradMap* g, int x) {
    return t.relu_node(t.dense(x, p, grad_for(g, name)));
}

struct Stage1Nodes {
    int f_II = -1, f_TT = -1, f_AA = -1, z_ITA = -1;
};

inline Stage1Nodes tape_stage1(Tape& t, const Model& m, GradMap* g,
                               const Vec& f_image, const Vec& f_text,
                               const Vec& f_audio) {
    Stage1Nodes o;
    o.f_II = tape_stack(t, m.s1.enc_II, "s1.enc_II", g, t.input(f_image));
    o.f_TT = tape_stack(t, m.s1.enc_TT, "s1.enc_TT", g, t.input(f_text));
    o.f_AA = tape_stack(t, m.s1.enc_AA, "s1.enc_AA", g, t.input(f_audio));
    int cat = t.concat_node({o.f_II, o.f_TT, o.f_AA});
    o.z_ITA = tape_proj(t, m.s1.proj_ITA, "s1.proj_ITA", g, cat);
    return o;
}

struct AuxNodes {
    int g_ES = -1, z_ES = -1, g_CP = -1, z_CP = -1;
};

inline AuxNodes tape_aux(Tape& t, const Model& m, GradMap* g, const Vec& f_es,
                         const Vec& f_caption) {
    AuxNodes o;
    o.g_ES = tape_stack(t, m.aux.enc_ES, "aux.enc_ES", g, t.input(f_es));
    o.z_ES = tape_proj(t, m.aux.proj_ES, "aux.proj_ES", g, o.g_ES);
    o.g_CP = tape_stack(t, m.aux.enc_CP, "aux.enc_CP", g, t.input(f_caption));
    o.z_CP = tape_proj(t, m.aux.proj_CP, "aux.proj_CP", g, o.g_CP);
    return o;
}

struct CrossPairNodes {
    int z_a = -1, z_b = -1, z_cross = -1;
};

// One cross pair: two encoders, the shared projection head, concatenation.
inline CrossPairNodes tape_cross_pair(Tape& t, const Model& m, GradMap* g,
                                      const Encoder& enc_ab, const std::string& name_ab,
                                      const Encoder& enc_ba, const std::string& name_ba,
                                      const DenseLayer& proj, const std::string& name_p,
                                      const Vec& in_a, const Vec& in_b) {
    CrossPairNodes o;
    int fa = tape_stack(t, enc_ab, name_ab, g, t.input(in_a));
    int fb = tape_stack(t, enc_ba, name_ba, g, t.input(in_b));
    o.z_a = tape_proj(t, proj, name_p, g, fa);
    o.z_b = tape_proj(t, proj, name_p, g, fb);
    o.z_cross = t.concat_node({o.z_a, o.z_b});
    return o;
}

// Classifier logits for one fused vector; masks empty = no dropout (eval).
inline int tape_classifier(Tape& t, const Model& m, GradMap* g, const Vec& f,
                           const std::vector<Vec>& dropout_masks) {
    require(dropout_masks.empty() || dropout_masks.size() == m.head.hidden.size(),
            ErrKind::state, "classifier tape: need one dropout mask per hidden layer");
    int x = t.input(f);
    for (std::size_t i = 0; i < m.head.hidden.size(); ++i) {
        x = t.relu_node(t.dense(x, m.head.hidden[i],
                                grad_for(g, "head.hidden." + std::to_string(i))));
        if (!dropout_masks.empty()) x = t.dropout_node(x, dropout_masks[i]);
    }
    return t.dense(x, m.head.out, grad_for(g, "head.out"));
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------
// Single binary file: magic "CFM1", u32 LE version, then one record per
// tensor: u16 LE name length, name bytes, u32 LE rows, u32 LE cols, float64
// LE row-major payload. Layers contribute "<name>.w" (out x in) and
// "<name>.b" (1 x out), in canonical visit order. Bit-exact round trips.

inline constexpr char kCheckpointMagic[4] = {'C', 'F', 'M', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void append_u16le(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void append_u32le(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void append_f64le(std::string& buf, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string origin;

    void need(std::size_t n) {
        require(pos + n <= buf.size(), ErrKind::io,
                "checkpoint " + origin + " truncated at byte " + std::to_string(pos));
    }
    std::uint16_t u16() {
        need(2);
        auto v = static_cast<std::uint16_t>(
            static_cast<unsigned char>(buf[pos]) |
            (static_cast<unsigned char>(buf[pos + 1]) << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i]))
                 << (8 * i);
        pos += 4;
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i]))
                 << (8 * i);
        pos += 8;
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    bool done() const { return pos == buf.size(); }
};

inline void append_tensor(std::string& buf, const std::string& name,
                          std::uint32_t rows, std::uint32_t cols,
                          const double* data) {
    require(name.size() <= 0xffff, ErrKind::state, "tensor name too long");
    append_u16le(buf, static_cast<std::uint16_t>(name.size()));
    buf += name;
    append_u32le(buf, rows);
    append_u32le(buf, cols);
    for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cols; ++i)
        append_f64le(buf, data[i]);
}

}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& path, const Model& m) {
    std::string buf;
    buf.append(kCheckpointMagic, 4);
    detail::append_u32le(buf, kCheckpointVersion);
    visit_dense(const_cast<Model&>(m), [&](const std::string& name, DenseLayer& layer) {
        detail::append_tensor(buf, name + ".w", static_cast<std::uint32_t>(layer.w.rows),
                              static_cast<std::uint32_t>(layer.w.cols),
                              layer.w.data.data());
        detail::append_tensor(buf, name + ".b", 1,
                              static_cast<std::uint32_t>(layer.b.size()),
                              layer.b.data());
    });
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrKind::io, "cannot open " + path.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    out.flush();
    require(out.good(), ErrKind::io, "write failed for " + path.string());
}

// Loads into an already-shaped model; every tensor must match by name and
// shape, with nothing missing and nothing extra.
inline void read_checkpoint(const std::filesystem::path& path, Model& m) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrKind::io, "cannot open checkpoint " + path.string());
    std::string buf{std::istreambuf_iterator<char>(in),
                    std::istreambuf_iterator<char>()};
    detail::ByteReader r{buf, 0, path.string()};
    r.need(8);
    require(std::memcmp(buf.data(), kCheckpointMagic, 4) == 0, ErrKind::io,
            "checkpoint " + path.string() + " has wrong magic");
    r.pos = 4;
    const std::uint32_t version = r.u32();
    require(version == kCheckpointVersion, ErrKind::io,
            "checkpoint " + path.string() + ": unsupported version " +
                std::to_string(version));

    std::map<std::string, Matrix> tensors;
    while (!r.done()) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.str(name_len);
        Matrix t;
        t.rows = r.u32();
        t.cols = r.u32();
        t.data.resize(t.rows * t.cols);
        for (double& v : t.data) v = r.f64();
        require(tensors.emplace(name, std::move(t)).second, ErrKind::io,
                "checkpoint " + path.string() + ": duplicate tensor '" + name + "'");
    }

    std::size_t consumed = 0;
    visit_dense(m, [&](const std::string& name, DenseLayer& layer) {
        auto take = [&](const std::string& tn, std::size_t rows, std::size_t cols,
                        double* dst) {
            auto it = tensors.find(tn);
            require(it != tensors.end(), ErrKind::io,
                    "checkpoint " + path.string() + ": missing tensor '" + tn + "'");
            require(it->second.rows == rows && it->second.cols == cols,
                    ErrKind::dimension,
                    "checkpoint tensor '" + tn + "' has shape " +
                        std::to_string(it->second.rows) + "x" +
                        std::to_string(it->second.cols) + ", model expects " +
                        std::to_string(rows) + "x" + std::to_string(cols));
            std::memcpy(dst, it->second.data.data(), rows * cols * sizeof(double));
            ++consumed;
        };
        take(name + ".w", layer.w.rows, layer.w.cols, layer.w.data.data());
        take(name + ".b", 1, layer.b.size(), layer.b.data());
    });
    require(consumed == tensors.size(), ErrKind::io,
            "checkpoint " + path.string() + " holds " + std::to_string(tensors.size()) +
                " tensors, model consumes " + std::to_string(consumed));
}

}  // namespace crossfuse
