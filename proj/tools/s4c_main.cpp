// Command-line front end: training, generation, benchmarking and the
// self-check commands (verify-lossless, grad-check, dump-tree).
// Exit codes: 0 success, 1 usage, 2 io, 3 numeric/model failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "s4c/bench.hpp"
#include "s4c/draft.hpp"
#include "s4c/errors.hpp"
#include "s4c/io.hpp"
#include "s4c/model.hpp"
#include "s4c/rng.hpp"
#include "s4c/train.hpp"
#include "s4c/tree.hpp"
#include "s4c/verify.hpp"
#include "s4c/weights_io.hpp"

namespace {

using namespace s4c;
using nlohmann::json;

// Flag/consistency problems detected after parsing; mapped to exit code 1.
struct CliUsage : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string weights, draft_weights, corpus, suite, out, config, log, prompt;
    std::string format = "json";
    std::string make_suite_dir;
    uint64_t seed = 0;
    double temperature = 0.0;
    int max_new = 64;
    bool eq12 = false;
    bool baseline = false;

    // draft geometry
    int heads = 3;
    int tokens_per_head = 2;
    int branches = 2;
    int topk = 3;
    int draft_layers = 1;

    // model geometry (train-target / grad-check)
    int vocab = 257;
    int hidden = 64;
    int layers = 2;
    int attn_heads = 4;
    int context = 512;

    // training overrides
    int epochs = 5;
    double lr = 1e-2;
    double momentum = 0.9;
    int window = 128;

    // verify-lossless / grad-check
    int trials = 1000;
    int vl_vocab = 8;
    double eps = 1e-5;
    int coords = 256;

    // suite generation
    int corpus_bytes = 20000;
    int prompts_per_task = 8;
    int prompt_len = 48;
};

void write_output(const std::string& path, const std::string& content) {
    if (path.empty())
        std::cout << content;
    else
        write_text_file(path, content);
}

std::pair<ModelSpec, Model> load_target(const std::string& path) {
    if (path.empty()) throw CliUsage("--weights is required for this command");
    auto [spec, w] = load_target_weights(path);
    return {spec, Model(spec, std::move(w))};
}

DraftWeights load_draft(const std::string& path, const ModelSpec& target_spec,
                        DraftMeta* meta) {
    if (path.empty()) throw CliUsage("--draft-weights is required for this command");
    auto [spec, w] = load_draft_weights(path, meta);
    if (spec.vocab_size != target_spec.vocab_size || spec.hidden_dim != target_spec.hidden_dim)
        throw ModelError("draft weights were trained for a different target shape");
    return std::move(w);
}

std::vector<int> prompt_tokens(const Options& o) {
    if (!o.prompt.empty()) return encode_bytes(o.prompt);
    if (!o.corpus.empty()) return load_corpus(o.corpus);
    throw CliUsage("provide a prompt with --prompt or --corpus");
}

TrainConfig resolve_train_config(const Options& o, const CLI::App* sub) {
    TrainConfig tc;
    if (!o.config.empty()) tc = parse_train_config(read_text_file(o.config));
    if (sub->count("--epochs")) tc.epochs = o.epochs;
    if (sub->count("--lr")) tc.lr = o.lr;
    if (sub->count("--momentum")) tc.momentum = o.momentum;
    if (sub->count("--window")) tc.window = o.window;
    if (sub->count("--seed") || o.config.empty()) tc.seed = o.seed;
    tc.validate();
    return tc;
}

DraftConfig resolve_draft_config(const Options& o, const CLI::App* sub, const DraftMeta* meta) {
    DraftConfig dc;
    if (meta) {
        dc.n_heads = meta->n_heads;
        dc.draft_layers_per_head = meta->layers_per_head;
    }
    if (sub->count("--heads")) dc.n_heads = o.heads;
    if (sub->count("--draft-layers")) dc.draft_layers_per_head = o.draft_layers;
    if (sub->count("--tokens-per-head")) dc.tokens_per_head = o.tokens_per_head;
    if (sub->count("--branches")) dc.head1_branches = o.branches;
    if (sub->count("--topk")) dc.horizontal_top_k = o.topk;
    dc.validate();
    return dc;
}

json stats_to_json(const GenStats& st) {
    json hist = json::object();
    for (auto& [len, cnt] : st.accepted_hist) hist[std::to_string(len)] = cnt;
    json j{{"rounds", st.rounds},
           {"tokens_emitted", st.tokens_emitted},
           {"target_forward_calls", st.target_forward_calls},
           {"draft_forward_calls", st.draft_forward_calls},
           {"accepted_hist", hist},
           {"peak_extra_bytes", st.peak_extra_bytes}};
    if (st.rounds > 0) j["mean_accepted"] = st.mean_accepted();
    return j;
}

// Keeps the training log stream alive for the duration of a command.
struct LogSink {
    std::ofstream file;
    std::ostream* stream = &std::cout;

    explicit LogSink(const std::string& path) {
        if (path.empty()) return;
        file.open(path, std::ios::trunc);
        if (!file) throw IoError("cannot open log file: " + path);
        stream = &file;
    }
};

int cmd_train_target(const Options& o, const CLI::App* sub) {
    if (o.corpus.empty()) throw CliUsage("--corpus is required for train-target");
    if (o.out.empty()) throw CliUsage("--out is required for train-target");
    TrainConfig tc = resolve_train_config(o, sub);
    std::vector<int> corpus = load_corpus(o.corpus);
    ModelSpec spec;
    spec.vocab_size = o.vocab;
    spec.hidden_dim = o.hidden;
    spec.n_layers = o.layers;
    spec.n_heads = o.attn_heads;
    spec.context_limit = o.context;
    spec.validate();
    LogSink log(o.log);
    Weights w = train_target(corpus, spec, init_weights(spec, tc.seed), tc, log.stream);
    save_target_weights(o.out, spec, w);
    std::cerr << "saved target weights to " << o.out << "\n";
    return 0;
}

int cmd_train_draft(const Options& o, const CLI::App* sub) {
    if (o.corpus.empty()) throw CliUsage("--corpus is required for train-draft");
    if (o.out.empty()) throw CliUsage("--out is required for train-draft");
    auto [spec, target] = load_target(o.weights);
    TrainConfig tc = resolve_train_config(o, sub);
    DraftConfig dc = resolve_draft_config(o, sub, nullptr);
    std::vector<int> corpus = load_corpus(o.corpus);
    LogSink log(o.log);
    DraftWeights dw = train_draft(corpus, target, init_draft_weights(spec, dc, tc.seed), tc,
                                  log.stream);
    save_draft_weights(o.out, spec, {dc.n_heads, dc.draft_layers_per_head}, dw);
    std::cerr << "saved draft weights to " << o.out << "\n";
    return 0;
}

int cmd_generate(const Options& o, const CLI::App* sub) {
    auto [spec, target] = load_target(o.weights);
    DraftMeta meta;
    DraftWeights dw = load_draft(o.draft_weights, spec, &meta);
    std::vector<int> prompt = prompt_tokens(o);
    GenConfig cfg;
    cfg.max_new = o.max_new;
    cfg.temperature = o.temperature;
    cfg.seed = o.seed;
    cfg.eq12_correction = o.eq12;
    cfg.eot_token = kEotToken;
    cfg.draft = resolve_draft_config(o, sub, &meta);

    TransformerBackend backend(target);
    std::vector<int> tokens;
    GenStats st;
    if (o.baseline) {
        std::tie(tokens, st) = baseline_generate(backend, prompt, cfg);
    } else {
        S4CDrafter drafter(target, std::move(dw));
        std::tie(tokens, st) = generate(backend, drafter, prompt, cfg);
    }
    json out{{"prompt_tokens", prompt.size()},
             {"tokens", tokens},
             {"text", decode_tokens(tokens)},
             {"mode", o.baseline ? "baseline" : "s4c"},
             {"stats", stats_to_json(st)}};
    write_output(o.out, out.dump(2) + "\n");
    return 0;
}

int make_suite(const Options& o) {
    namespace fs = std::filesystem;
    fs::create_directories(o.make_suite_dir);
    BenchSuite suite;
    for (int k = 0; k < kNumTaskKinds; ++k) {
        TaskKind kind = static_cast<TaskKind>(k);
        std::string name = task_kind_name(kind);
        std::string corpus = synth_corpus(kind, static_cast<size_t>(o.corpus_bytes), o.seed);
        std::string corpus_path = (fs::path(o.make_suite_dir) / (name + ".txt")).string();
        write_text_file(corpus_path, corpus);
        auto prompts = synth_prompts(corpus, o.prompts_per_task, o.prompt_len,
                                     o.seed + static_cast<uint64_t>(k));
        std::string prompts_path =
            (fs::path(o.make_suite_dir) / (name + "_prompts.json")).string();
        write_text_file(prompts_path, json(prompts).dump(2) + "\n");
        suite.tasks.push_back({name, corpus_path, prompts_path, o.max_new});
    }
    std::string suite_path = (fs::path(o.make_suite_dir) / "suite.json").string();
    write_text_file(suite_path, suite_to_json(suite) + "\n");
    std::cerr << "wrote suite to " << suite_path << "\n";
    return 0;
}

int cmd_bench(const Options& o, const CLI::App* sub) {
    if (!o.make_suite_dir.empty()) return make_suite(o);
    if (o.suite.empty()) throw CliUsage("--suite is required (or use --make-suite DIR)");
    BenchSuite suite = parse_suite(read_text_file(o.suite));
    auto [spec, target] = load_target(o.weights);
    DraftMeta meta;
    DraftWeights dw = load_draft(o.draft_weights, spec, &meta);
    DraftConfig dc = resolve_draft_config(o, sub, &meta);
    TransformerSessionFactory factory(target, dw);
    BenchReport report = run_benchmark(suite, factory, dc, o.eq12);
    write_output(o.out, emit_report(report, o.format));
    return 0;
}

int cmd_verify_lossless(const Options& o) {
    if (o.vl_vocab < 2 || o.vl_vocab > 16)
        throw CliUsage("--vocab must be in [2, 16] for exact enumeration");
    if (o.trials < 0) throw CliUsage("--trials must be >= 0");
    const size_t v = static_cast<size_t>(o.vl_vocab);
    Rng rng(o.seed, /*stream=*/0x105eull);
    double max_l1 = 0.0;
    for (int t = 0; t < o.trials; ++t) {
        ProbDist target(v), draft(v);
        double ts = 0.0, ds = 0.0;
        for (size_t i = 0; i < v; ++i) {
            target[i] = rng.uniform() + 1e-9;
            ts += target[i];
            // occasional zero-mass draft entries exercise the residual support
            double q = rng.uniform() < 0.25 ? 0.0 : rng.uniform() + 1e-9;
            draft[i] = q;
            ds += q;
        }
        if (ds == 0.0) {
            draft[0] = 1.0;
            ds = 1.0;
        }
        for (size_t i = 0; i < v; ++i) {
            target[i] /= ts;
            draft[i] /= ds;
        }
        ProbDist out = exact_output_distribution(target, draft, o.eq12);
        double l1 = 0.0;
        for (size_t i = 0; i < v; ++i) l1 += std::abs(out[i] - target[i]);
        max_l1 = std::max(max_l1, l1);
    }
    bool pass = o.eq12 || max_l1 < 1e-10;
    json summary{{"trials", o.trials},
                 {"vocab", o.vl_vocab},
                 {"seed", o.seed},
                 {"mode", o.eq12 ? "eq12" : "exact"},
                 {"max_l1_deviation", max_l1},
                 {"pass", pass}};
    if (o.trials == 0) summary["note"] = "0 trials: vacuous pass";
    write_output(o.out, summary.dump(2) + "\n");
    return pass ? 0 : 3;
}

int cmd_grad_check(const Options& o) {
    ModelSpec spec;
    spec.vocab_size = o.vocab;
    spec.hidden_dim = o.hidden;
    spec.n_layers = o.layers;
    spec.n_heads = o.attn_heads;
    spec.context_limit = std::max(o.context, o.window);
    spec.validate();
    Model target(spec, init_weights(spec, o.seed));
    DraftConfig dc;
    dc.n_heads = o.heads;
    dc.draft_layers_per_head = o.draft_layers;
    DraftWeights dw = init_draft_weights(spec, dc, o.seed);

    Rng rng(o.seed, /*stream=*/0xdadaull);
    std::vector<int> window(static_cast<size_t>(o.window));
    for (int& t : window) t = static_cast<int>(rng.next_u64() % static_cast<uint64_t>(o.vocab));

    TrainConfig tc;
    DraftWeights grads = zero_like(dw);
    draft_window_loss(target, dw, window, tc, &grads);
    std::vector<double*> params = param_view(dw);
    std::vector<double*> gptr = param_view(grads);
    std::vector<double> analytic(gptr.size());
    for (size_t i = 0; i < gptr.size(); ++i) analytic[i] = *gptr[i];

    double err = grad_check(
        [&] { return draft_window_loss(target, dw, window, tc, nullptr).total; }, params,
        analytic, o.eps, static_cast<size_t>(o.coords), o.seed);
    bool pass = err < 1e-4;
    json summary{{"max_rel_err", err},
                 {"coords", std::min<size_t>(static_cast<size_t>(o.coords), params.size())},
                 {"epsilon", o.eps},
                 {"params", params.size()},
                 {"pass", pass}};
    write_output(o.out, summary.dump(2) + "\n");
    return pass ? 0 : 3;
}

int cmd_dump_tree(const Options& o, const CLI::App* sub) {
    auto [spec, target] = load_target(o.weights);
    DraftMeta meta;
    DraftWeights dw = load_draft(o.draft_weights, spec, &meta);
    std::vector<int> prompt = prompt_tokens(o);
    if (prompt.empty()) throw CliUsage("prompt must be non-empty");
    DraftConfig dc = resolve_draft_config(o, sub, &meta);

    TransformerBackend backend(target);
    std::vector<int> prefix(prompt.begin(), prompt.end() - 1);
    ForwardResult pre = backend.forward(prefix, nullptr, {});
    std::vector<double> f0;
    if (pre.features.rows > 0) {
        auto f = pre.features.row(pre.features.rows - 1);
        f0.assign(f.begin(), f.end());
    }
    S4CDrafter drafter(target, std::move(dw));
    Rng rng = Rng(o.seed).split(1);
    DraftTree tree = drafter.run_round(f0, prompt.back(), dc, o.temperature, rng);
    write_output(o.out, dump_tree_json(tree) + "\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"speculative decoding engine: multi-head drafting with a "
                 "continuous verification tree and lossless acceptance"};
    app.require_subcommand(1);

    auto add_pair_flags = [&](CLI::App* sub) {
        sub->add_option("--weights", o.weights, "target weight file (.s4cw)");
        sub->add_option("--draft-weights", o.draft_weights, "draft weight file (.s4cw)");
    };
    auto add_draft_flags = [&](CLI::App* sub) {
        sub->add_option("--heads", o.heads, "number of draft heads")->check(CLI::PositiveNumber);
        sub->add_option("--tokens-per-head", o.tokens_per_head, "tokens drafted per head")
            ->check(CLI::PositiveNumber);
        sub->add_option("--branches", o.branches, "depth-1 candidates grown into chains")
            ->check(CLI::PositiveNumber);
        sub->add_option("--topk", o.topk, "candidates considered per position")
            ->check(CLI::PositiveNumber);
        sub->add_option("--draft-layers", o.draft_layers, "decoder layers per draft head")
            ->check(CLI::PositiveNumber);
    };
    auto add_train_flags = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "training config JSON file");
        sub->add_option("--epochs", o.epochs)->check(CLI::NonNegativeNumber);
        sub->add_option("--lr", o.lr)->check(CLI::NonNegativeNumber);
        sub->add_option("--momentum", o.momentum)->check(CLI::Range(0.0, 0.999999));
        sub->add_option("--window", o.window, "training window length")
            ->check(CLI::PositiveNumber);
        sub->add_option("--log", o.log, "JSONL training log path (default stdout)");
    };
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", o.seed, "rng seed");
        sub->add_option("--out", o.out, "output path (default stdout for reports)");
    };

    CLI::App* tt = app.add_subcommand("train-target", "train the toy target transformer");
    tt->add_option("--corpus", o.corpus, "raw byte corpus file");
    tt->add_option("--vocab", o.vocab)->check(CLI::Range(2, 100000));
    tt->add_option("--hidden", o.hidden)->check(CLI::PositiveNumber);
    tt->add_option("--layers", o.layers)->check(CLI::PositiveNumber);
    tt->add_option("--attn-heads", o.attn_heads)->check(CLI::PositiveNumber);
    tt->add_option("--context", o.context)->check(CLI::Range(2, 1 << 20));
    add_train_flags(tt);
    add_common(tt);

    CLI::App* td = app.add_subcommand("train-draft", "train draft heads against a frozen target");
    td->add_option("--corpus", o.corpus, "raw byte corpus file");
    td->add_option("--weights", o.weights, "target weight file (.s4cw)");
    add_draft_flags(td);
    add_train_flags(td);
    add_common(td);

    CLI::App* gen = app.add_subcommand("generate", "speculative generation from a prompt");
    add_pair_flags(gen);
    gen->add_option("--prompt", o.prompt, "prompt text (UTF-8 bytes)");
    gen->add_option("--corpus", o.corpus, "file whose bytes form the prompt");
    gen->add_option("--max-new", o.max_new)->check(CLI::PositiveNumber);
    gen->add_option("--temperature", o.temperature)->check(CLI::NonNegativeNumber);
    gen->add_flag("--eq12-correction", o.eq12, "max-based correction ablation (not lossless)");
    gen->add_flag("--baseline", o.baseline, "plain autoregressive decode instead");
    add_draft_flags(gen);
    add_common(gen);

    CLI::App* bn = app.add_subcommand("bench", "benchmark suite runner");
    add_pair_flags(bn);
    bn->add_option("--suite", o.suite, "suite config JSON");
    bn->add_option("--format", o.format)->check(CLI::IsMember({"json", "md"}));
    bn->add_flag("--eq12-correction", o.eq12);
    bn->add_option("--make-suite", o.make_suite_dir,
                   "generate the six synthetic task corpora + suite.json into DIR");
    bn->add_option("--corpus-bytes", o.corpus_bytes)->check(CLI::PositiveNumber);
    bn->add_option("--prompts-per-task", o.prompts_per_task)->check(CLI::PositiveNumber);
    bn->add_option("--prompt-len", o.prompt_len)->check(CLI::PositiveNumber);
    bn->add_option("--max-new", o.max_new)->check(CLI::PositiveNumber);
    add_draft_flags(bn);
    add_common(bn);

    CLI::App* vl = app.add_subcommand("verify-lossless",
                                      "exact single-step losslessness check over random pairs");
    vl->add_option("--trials", o.trials)->check(CLI::NonNegativeNumber);
    vl->add_option("--vocab", o.vl_vocab, "distribution size (<= 16)");
    vl->add_flag("--eq12-correction", o.eq12, "report the ablation's deviation instead");
    add_common(vl);

    CLI::App* gc = app.add_subcommand("grad-check",
                                      "finite-difference check of the draft training gradients");
    gc->add_option("--eps", o.eps, "finite-difference step");
    gc->add_option("--coords", o.coords)->check(CLI::PositiveNumber);
    gc->add_option("--vocab", o.vocab)->check(CLI::Range(2, 100000));
    gc->add_option("--hidden", o.hidden)->check(CLI::PositiveNumber);
    gc->add_option("--layers", o.layers)->check(CLI::PositiveNumber);
    gc->add_option("--attn-heads", o.attn_heads)->check(CLI::PositiveNumber);
    gc->add_option("--context", o.context)->check(CLI::Range(2, 1 << 20));
    gc->add_option("--window", o.window)->check(CLI::PositiveNumber);
    gc->add_option("--heads", o.heads, "draft heads")->check(CLI::PositiveNumber);
    gc->add_option("--draft-layers", o.draft_layers)->check(CLI::PositiveNumber);
    add_common(gc);

    CLI::App* dt = app.add_subcommand("dump-tree", "draft one verification tree and dump JSON");
    add_pair_flags(dt);
    dt->add_option("--prompt", o.prompt, "prompt text");
    dt->add_option("--corpus", o.corpus, "file whose bytes form the prompt");
    dt->add_option("--temperature", o.temperature)->check(CLI::NonNegativeNumber);
    add_draft_flags(dt);
    add_common(dt);

    // grad-check defaults differ from the model-shape defaults above
    if (argc > 1 && std::string(argv[1]) == "grad-check") {
        o.vocab = 29;
        o.hidden = 16;
        o.layers = 1;
        o.attn_heads = 2;
        o.heads = 1;
        o.window = 16;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (tt->parsed()) return cmd_train_target(o, tt);
        if (td->parsed()) return cmd_train_draft(o, td);
        if (gen->parsed()) return cmd_generate(o, gen);
        if (bn->parsed()) return cmd_bench(o, bn);
        if (vl->parsed()) return cmd_verify_lossless(o);
        if (gc->parsed()) return cmd_grad_check(o);
        if (dt->parsed()) return cmd_dump_tree(o, dt);
        throw CliUsage("no command given");
    } catch (const CliUsage& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
