#include "s4c/weights_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"

#include "s4c/errors.hpp"

namespace s4c {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'S', '4', 'C', 'W'};
constexpr uint16_t kVersion = 1;

struct TensorRef {
    std::string name;
    size_t rows;
    size_t cols;
    const double* data;
};

void collect_layer(std::vector<TensorRef>& out, const std::string& prefix,
                   const LayerWeights& l) {
    out.push_back({prefix + ".attn_gain", 1, l.attn_gain.size(), l.attn_gain.data()});
    out.push_back({prefix + ".wq", l.wq.rows, l.wq.cols, l.wq.data.data()});
    out.push_back({prefix + ".wk", l.wk.rows, l.wk.cols, l.wk.data.data()});
    out.push_back({prefix + ".wv", l.wv.rows, l.wv.cols, l.wv.data.data()});
    out.push_back({prefix + ".wo", l.wo.rows, l.wo.cols, l.wo.data.data()});
    out.push_back({prefix + ".mlp_gain", 1, l.mlp_gain.size(), l.mlp_gain.data()});
    out.push_back({prefix + ".w1", l.w1.rows, l.w1.cols, l.w1.data.data()});
    out.push_back({prefix + ".w2", l.w2.rows, l.w2.cols, l.w2.data.data()});
}

std::vector<TensorRef> collect(const Weights& w) {
    std::vector<TensorRef> out;
    out.push_back({"tok_emb", w.tok_emb.rows, w.tok_emb.cols, w.tok_emb.data.data()});
    out.push_back({"pos_emb", w.pos_emb.rows, w.pos_emb.cols, w.pos_emb.data.data()});
    for (size_t i = 0; i < w.layers.size(); ++i)
        collect_layer(out, "layers." + std::to_string(i), w.layers[i]);
    out.push_back({"final_gain", 1, w.final_gain.size(), w.final_gain.data()});
    out.push_back({"lm_head", w.lm_head.rows, w.lm_head.cols, w.lm_head.data.data()});
    return out;
}

std::vector<TensorRef> collect(const DraftWeights& w) {
    std::vector<TensorRef> out;
    for (size_t h = 0; h < w.heads.size(); ++h) {
        std::string hp = "heads." + std::to_string(h);
        out.push_back({hp + ".fuse", w.heads[h].fuse.rows, w.heads[h].fuse.cols,
                       w.heads[h].fuse.data.data()});
        for (size_t l = 0; l < w.heads[h].layers.size(); ++l)
            collect_layer(out, hp + ".layers." + std::to_string(l), w.heads[h].layers[l]);
    }
    return out;
}

json spec_to_json(const ModelSpec& s) {
    return json{{"vocab_size", s.vocab_size},
                {"hidden_dim", s.hidden_dim},
                {"n_layers", s.n_layers},
                {"n_heads", s.n_heads},
                {"context_limit", s.context_limit}};
}

ModelSpec spec_from_json(const json& j) {
    ModelSpec s;
    s.vocab_size = j.at("vocab_size").get<int>();
    s.hidden_dim = j.at("hidden_dim").get<int>();
    s.n_layers = j.at("n_layers").get<int>();
    s.n_heads = j.at("n_heads").get<int>();
    s.context_limit = j.at("context_limit").get<int>();
    return s;
}

void write_file(const std::string& path, const std::string& kind, const json& extra,
                const ModelSpec& spec, const std::vector<TensorRef>& tensors) {
    json meta;
    meta["kind"] = kind;
    meta["model"] = spec_to_json(spec);
    for (auto& [k, v] : extra.items()) meta[k] = v;
    json manifest = json::array();
    for (const TensorRef& t : tensors)
        manifest.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
    meta["tensors"] = manifest;
    std::string meta_str = meta.dump();
    if (meta_str.size() > 0xffffffffull) throw IoError("weights: metadata too large");

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("weights: cannot open for writing: " + path);
    f.write(kMagic, 4);
    unsigned char hdr[6];
    hdr[0] = static_cast<unsigned char>(kVersion & 0xff);
    hdr[1] = static_cast<unsigned char>(kVersion >> 8);
    uint32_t mlen = static_cast<uint32_t>(meta_str.size());
    hdr[2] = static_cast<unsigned char>(mlen & 0xff);
    hdr[3] = static_cast<unsigned char>((mlen >> 8) & 0xff);
    hdr[4] = static_cast<unsigned char>((mlen >> 16) & 0xff);
    hdr[5] = static_cast<unsigned char>((mlen >> 24) & 0xff);
    f.write(reinterpret_cast<const char*>(hdr), 6);
    f.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    std::vector<float> buf;
    for (const TensorRef& t : tensors) {
        size_t n = t.rows * t.cols;
        buf.resize(n);
        for (size_t i = 0; i < n; ++i) buf[i] = static_cast<float>(t.data[i]);
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
    }
    if (!f) throw IoError("weights: write failed: " + path);
}

struct LoadedFile {
    json meta;
    std::vector<float> payload;
};

LoadedFile read_file(const std::string& path, const std::string& want_kind) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("weights: cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("weights: bad magic in " + path);
    unsigned char hdr[6];
    f.read(reinterpret_cast<char*>(hdr), 6);
    if (!f) throw IoError("weights: truncated header in " + path);
    uint16_t version = static_cast<uint16_t>(hdr[0] | (hdr[1] << 8));
    if (version != kVersion)
        throw IoError("weights: unsupported version " + std::to_string(version) + " in " + path);
    uint32_t mlen = static_cast<uint32_t>(hdr[2]) | (static_cast<uint32_t>(hdr[3]) << 8) |
                    (static_cast<uint32_t>(hdr[4]) << 16) | (static_cast<uint32_t>(hdr[5]) << 24);
    std::string meta_str(mlen, '\0');
    f.read(meta_str.data(), static_cast<std::streamsize>(mlen));
    if (!f) throw IoError("weights: truncated metadata in " + path);
    LoadedFile lf;
    try {
        lf.meta = json::parse(meta_str);
    } catch (const json::exception& e) {
        throw IoError("weights: metadata parse error in " + path + ": " + e.what());
    }
    if (lf.meta.value("kind", "") != want_kind)
        throw IoError("weights: " + path + " holds '" + lf.meta.value("kind", "?") +
                      "' weights, expected '" + want_kind + "'");

    size_t total = 0;
    for (const json& t : lf.meta.at("tensors"))
        total += t.at("rows").get<size_t>() * t.at("cols").get<size_t>();
    lf.payload.resize(total);
    f.read(reinterpret_cast<char*>(lf.payload.data()),
           static_cast<std::streamsize>(total * sizeof(float)));
    if (static_cast<size_t>(f.gcount()) != total * sizeof(float))
        throw IoError("weights: payload shorter than manifest in " + path);
    char extra;
    f.read(&extra, 1);
    if (!f.eof()) throw IoError("weights: trailing bytes after payload in " + path);
    return lf;
}

// Cursor over the payload that checks each tensor against the manifest entry.
class TensorReader {
public:
    TensorReader(const LoadedFile& lf, const std::string& path)
        : lf_(lf), path_(path) {}

    void take(const std::string& name, size_t rows, size_t cols, double* dst) {
        const json& tensors = lf_.meta.at("tensors");
        if (idx_ >= tensors.size())
            throw IoError("weights: manifest ended before tensor " + name + " in " + path_);
        const json& t = tensors[idx_];
        if (t.at("name").get<std::string>() != name ||
            t.at("rows").get<size_t>() != rows || t.at("cols").get<size_t>() != cols)
            throw IoError("weights: tensor mismatch at " + name + " in " + path_);
        size_t n = rows * cols;
        for (size_t i = 0; i < n; ++i) dst[i] = static_cast<double>(lf_.payload[off_ + i]);
        off_ += n;
        ++idx_;
    }

    void take(const std::string& name, size_t rows, size_t cols, Matrix& m) {
        m = Matrix(rows, cols);
        take(name, rows, cols, m.data.data());
    }

    void take(const std::string& name, size_t cols, std::vector<double>& v) {
        v.assign(cols, 0.0);
        take(name, 1, cols, v.data());
    }

    void finish() const {
        if (idx_ != lf_.meta.at("tensors").size())
            throw IoError("weights: unread tensors remain in " + path_);
    }

private:
    const LoadedFile& lf_;
    std::string path_;
    size_t idx_ = 0;
    size_t off_ = 0;
};

void read_layer(TensorReader& r, const std::string& prefix, int hidden, LayerWeights& l) {
    size_t h = static_cast<size_t>(hidden);
    r.take(prefix + ".attn_gain", h, l.attn_gain);
    r.take(prefix + ".wq", h, h, l.wq);
    r.take(prefix + ".wk", h, h, l.wk);
    r.take(prefix + ".wv", h, h, l.wv);
    r.take(prefix + ".wo", h, h, l.wo);
    r.take(prefix + ".mlp_gain", h, l.mlp_gain);
    r.take(prefix + ".w1", h, 4 * h, l.w1);
    r.take(prefix + ".w2", 4 * h, h, l.w2);
}

void narrow_layer(LayerWeights& l) {
    auto nv = [](std::vector<double>& v) {
        for (double& x : v) x = static_cast<double>(static_cast<float>(x));
    };
    nv(l.attn_gain);
    nv(l.wq.data);
    nv(l.wk.data);
    nv(l.wv.data);
    nv(l.wo.data);
    nv(l.mlp_gain);
    nv(l.w1.data);
    nv(l.w2.data);
}

} // namespace

void save_target_weights(const std::string& path, const ModelSpec& spec, const Weights& w) {
    spec.validate();
    write_file(path, "target", json::object(), spec, collect(w));
}

std::pair<ModelSpec, Weights> load_target_weights(const std::string& path) {
    LoadedFile lf = read_file(path, "target");
    ModelSpec spec = spec_from_json(lf.meta.at("model"));
    spec.validate();
    Weights w;
    TensorReader r(lf, path);
    r.take("tok_emb", static_cast<size_t>(spec.vocab_size),
           static_cast<size_t>(spec.hidden_dim), w.tok_emb);
    r.take("pos_emb", static_cast<size_t>(spec.context_limit),
           static_cast<size_t>(spec.hidden_dim), w.pos_emb);
    w.layers.resize(static_cast<size_t>(spec.n_layers));
    for (int i = 0; i < spec.n_layers; ++i)
        read_layer(r, "layers." + std::to_string(i), spec.hidden_dim,
                   w.layers[static_cast<size_t>(i)]);
    r.take("final_gain", static_cast<size_t>(spec.hidden_dim), w.final_gain);
    r.take("lm_head", static_cast<size_t>(spec.hidden_dim),
           static_cast<size_t>(spec.vocab_size), w.lm_head);
    r.finish();
    w.check_finite();
    return {spec, std::move(w)};
}

void save_draft_weights(const std::string& path, const ModelSpec& spec, const DraftMeta& meta,
                        const DraftWeights& w) {
    spec.validate();
    if (meta.n_heads != static_cast<int>(w.heads.size()))
        throw ArgError("weights: draft head count mismatch");
    json extra{{"draft", {{"n_heads", meta.n_heads}, {"layers_per_head", meta.layers_per_head}}}};
    write_file(path, "draft", extra, spec, collect(w));
}

std::pair<ModelSpec, DraftWeights> load_draft_weights(const std::string& path,
                                                      DraftMeta* meta_out) {
    LoadedFile lf = read_file(path, "draft");
    ModelSpec spec = spec_from_json(lf.meta.at("model"));
    spec.validate();
    DraftMeta meta;
    meta.n_heads = lf.meta.at("draft").at("n_heads").get<int>();
    meta.layers_per_head = lf.meta.at("draft").at("layers_per_head").get<int>();
    if (meta.n_heads <= 0 || meta.layers_per_head <= 0)
        throw IoError("weights: invalid draft head geometry in " + path);
    DraftWeights w;
    w.heads.resize(static_cast<size_t>(meta.n_heads));
    TensorReader r(lf, path);
    size_t h = static_cast<size_t>(spec.hidden_dim);
    for (int i = 0; i < meta.n_heads; ++i) {
        std::string hp = "heads." + std::to_string(i);
        auto& head = w.heads[static_cast<size_t>(i)];
        r.take(hp + ".fuse", 2 * h, h, head.fuse);
        head.layers.resize(static_cast<size_t>(meta.layers_per_head));
        for (int l = 0; l < meta.layers_per_head; ++l)
            read_layer(r, hp + ".layers." + std::to_string(l), spec.hidden_dim,
                       head.layers[static_cast<size_t>(l)]);
    }
    r.finish();
    if (meta_out) *meta_out = meta;
    return {spec, std::move(w)};
}

void narrow_to_f32(Weights& w) {
    auto nv = [](std::vector<double>& v) {
        for (double& x : v) x = static_cast<double>(static_cast<float>(x));
    };
    nv(w.tok_emb.data);
    nv(w.pos_emb.data);
    for (LayerWeights& l : w.layers) narrow_layer(l);
    nv(w.final_gain);
    nv(w.lm_head.data);
}

void narrow_to_f32(DraftWeights& w) {
    for (DraftHeadWeights& head : w.heads) {
        for (double& x : head.fuse.data) x = static_cast<double>(static_cast<float>(x));
        for (LayerWeights& l : head.layers) narrow_layer(l);
    }
}

} // namespace s4c
