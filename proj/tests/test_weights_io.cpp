#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "s4c/draft.hpp"
#include "s4c/errors.hpp"
#include "s4c/model.hpp"
#include "s4c/train.hpp"
#include "s4c/weights_io.hpp"

using namespace s4c;

namespace {

ModelSpec tiny_spec() {
    ModelSpec s;
    s.vocab_size = 7;
    s.hidden_dim = 8;
    s.n_layers = 1;
    s.n_heads = 2;
    s.context_limit = 16;
    return s;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spew(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    REQUIRE(f.good());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// in-place byte surgery that keeps the total length (the header stores the
// metadata length, so only equal-length patches keep the framing valid)
std::string patched(std::string bytes, const std::string& from, const std::string& to) {
    REQUIRE(from.size() == to.size());
    size_t pos = bytes.find(from);
    REQUIRE(pos != std::string::npos);
    bytes.replace(pos, from.size(), to);
    return bytes;
}

std::vector<double> flat(Weights& w) {
    std::vector<double> out;
    for (double* p : param_view(w)) out.push_back(*p);
    return out;
}

std::vector<double> flat(DraftWeights& w) {
    std::vector<double> out;
    for (double* p : param_view(w)) out.push_back(*p);
    return out;
}

} // namespace

TEST_CASE("target weights: narrowed values survive a save/load round trip exactly") {
    ModelSpec s = tiny_spec();
    Weights w = init_weights(s, 11);
    narrow_to_f32(w);
    const std::string path = "wio_target_rt.s4cw";
    save_target_weights(path, s, w);

    auto [spec2, w2] = load_target_weights(path);
    CHECK(spec2.vocab_size == s.vocab_size);
    CHECK(spec2.hidden_dim == s.hidden_dim);
    CHECK(spec2.n_layers == s.n_layers);
    CHECK(spec2.n_heads == s.n_heads);
    CHECK(spec2.context_limit == s.context_limit);
    CHECK(flat(w) == flat(w2));
    CHECK(w.checksum_all() == w2.checksum_all());
    std::remove(path.c_str());
}

TEST_CASE("draft weights: round trip preserves values and head geometry") {
    ModelSpec s = tiny_spec();
    DraftConfig dc;
    dc.n_heads = 2;
    dc.draft_layers_per_head = 1;
    DraftWeights w = init_draft_weights(s, dc, 21);
    narrow_to_f32(w);
    DraftMeta meta{dc.n_heads, dc.draft_layers_per_head};
    const std::string path = "wio_draft_rt.s4cw";
    save_draft_weights(path, s, meta, w);

    DraftMeta got{};
    auto [spec2, w2] = load_draft_weights(path, &got);
    CHECK(got.n_heads == 2);
    CHECK(got.layers_per_head == 1);
    CHECK(spec2.hidden_dim == s.hidden_dim);
    CHECK(flat(w) == flat(w2));
    CHECK(w.checksum_all() == w2.checksum_all());
    std::remove(path.c_str());
}

TEST_CASE("weights file: saving a loaded model reproduces the bytes exactly") {
    ModelSpec s = tiny_spec();
    Weights w = init_weights(s, 31);  // deliberately not narrowed before first save
    const std::string a = "wio_bytes_a.s4cw";
    const std::string b = "wio_bytes_b.s4cw";
    save_target_weights(a, s, w);
    auto [spec2, w2] = load_target_weights(a);
    save_target_weights(b, spec2, w2);
    CHECK(slurp(a) == slurp(b));
    std::remove(a.c_str());
    std::remove(b.c_str());

    DraftConfig dc;
    DraftWeights dw = init_draft_weights(s, dc, 32);
    DraftMeta meta{dc.n_heads, dc.draft_layers_per_head};
    save_draft_weights(a, s, meta, dw);
    DraftMeta m2{};
    auto [spec3, dw2] = load_draft_weights(a, &m2);
    save_draft_weights(b, spec3, m2, dw2);
    CHECK(slurp(a) == slurp(b));
    std::remove(a.c_str());
    std::remove(b.c_str());
}

TEST_CASE("narrow_to_f32 is idempotent") {
    ModelSpec s = tiny_spec();
    Weights w = init_weights(s, 41);
    narrow_to_f32(w);
    Weights w2 = w;
    narrow_to_f32(w2);
    CHECK(flat(w) == flat(w2));
}

TEST_CASE("weights file: corrupted framing is rejected") {
    ModelSpec s = tiny_spec();
    Weights w = init_weights(s, 51);
    const std::string path = "wio_frame.s4cw";
    save_target_weights(path, s, w);
    const std::string good = slurp(path);

    SUBCASE("bad magic") {
        std::string bad = good;
        bad[0] = 'X';
        spew(path, bad);
        CHECK_THROWS_AS(load_target_weights(path), IoError);
    }
    SUBCASE("unsupported version") {
        std::string bad = good;
        bad[4] = 9;
        spew(path, bad);
        CHECK_THROWS_AS(load_target_weights(path), IoError);
    }
    SUBCASE("payload truncated") {
        spew(path, good.substr(0, good.size() - 1));
        CHECK_THROWS_AS(load_target_weights(path), IoError);
    }
    SUBCASE("metadata truncated") {
        spew(path, good.substr(0, 32));
        CHECK_THROWS_AS(load_target_weights(path), IoError);
    }
    SUBCASE("trailing byte") {
        spew(path, good + "Z");
        CHECK_THROWS_AS(load_target_weights(path), IoError);
    }
    SUBCASE("metadata not json") {
        // first byte after the 10-byte header opens the metadata object
        std::string bad = good;
        bad[10] = 'X';
        spew(path, bad);
        CHECK_THROWS_AS(load_target_weights(path), IoError);
    }
    std::remove(path.c_str());
}

TEST_CASE("weights file: manifest surgery is detected") {
    ModelSpec s = tiny_spec();
    Weights w = init_weights(s, 61);
    const std::string path = "wio_manifest.s4cw";
    save_target_weights(path, s, w);
    const std::string good = slurp(path);

    SUBCASE("renamed tensor") {
        spew(path, patched(good, "tok_emb", "tok_emc"));
        CHECK_THROWS_AS(load_target_weights(path), IoError);
    }
    SUBCASE("wrong kind") {
        spew(path, patched(good, "\"kind\":\"target\"", "\"kind\":\"tArget\""));
        CHECK_THROWS_AS(load_target_weights(path), IoError);
    }
    std::remove(path.c_str());
}

TEST_CASE("weights file: kind mismatch between target and draft") {
    ModelSpec s = tiny_spec();
    const std::string path = "wio_kind.s4cw";
    DraftConfig dc;
    DraftWeights dw = init_draft_weights(s, dc, 71);
    save_draft_weights(path, s, DraftMeta{dc.n_heads, dc.draft_layers_per_head}, dw);
    CHECK_THROWS_AS(load_target_weights(path), IoError);

    Weights w = init_weights(s, 72);
    save_target_weights(path, s, w);
    CHECK_THROWS_AS(load_draft_weights(path), IoError);
    std::remove(path.c_str());
}

TEST_CASE("weights file: missing path and bad save arguments") {
    CHECK_THROWS_AS(load_target_weights("wio_no_such_file.s4cw"), IoError);
    ModelSpec s = tiny_spec();
    DraftConfig dc;
    DraftWeights dw = init_draft_weights(s, dc, 81);
    DraftMeta wrong{dc.n_heads + 1, dc.draft_layers_per_head};
    CHECK_THROWS_AS(save_draft_weights("wio_never.s4cw", s, wrong, dw), ArgError);
}

TEST_CASE("weights file: non-finite payload fails the load-time check") {
    ModelSpec s = tiny_spec();
    Weights w = init_weights(s, 91);
    w.lm_head.data[3] = std::numeric_limits<double>::infinity();
    const std::string path = "wio_inf.s4cw";
    save_target_weights(path, s, w);
    CHECK_THROWS_AS(load_target_weights(path), NumericError);
    std::remove(path.c_str());
}
