#include "s4c/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

#if __has_include(<sys/utsname.h>)
#include <sys/utsname.h>
#endif

#include "json.hpp"

#include "s4c/errors.hpp"
#include "s4c/io.hpp"
#include "s4c/rng.hpp"

namespace s4c {

using nlohmann::json;

// ---- synthetic tasks --------------------------------------------------------

static const char* kTaskNames[kNumTaskKinds] = {"repetitive", "natural", "numeric",
                                                "qa",         "shuffled", "retrieval"};

const char* task_kind_name(TaskKind k) { return kTaskNames[static_cast<int>(k)]; }

TaskKind task_kind_from(const std::string& name) {
    for (int i = 0; i < kNumTaskKinds; ++i)
        if (name == kTaskNames[i]) return static_cast<TaskKind>(i);
    throw ArgError("unknown task kind: " + name);
}

namespace {

const char* kWords[] = {
    "time",  "year",   "people", "way",    "day",     "man",    "thing",  "woman",
    "life",  "child",  "world",  "school", "state",   "family", "group",  "country",
    "hand",  "part",   "place",  "case",   "week",    "system", "program", "question",
    "work",  "number", "night",  "point",  "home",    "water",  "room",   "mother",
    "area",  "money",  "story",  "fact",   "month",   "lot",    "right",  "study"};
constexpr size_t kNumWords = sizeof(kWords) / sizeof(kWords[0]);

const char* pick_word(Rng& rng) { return kWords[rng.next_u64() % kNumWords]; }

} // namespace

std::string synth_corpus(TaskKind kind, size_t n_bytes, uint64_t seed) {
    Rng rng(seed, /*stream=*/0xbe0cull + static_cast<uint64_t>(kind));
    std::string out;
    out.reserve(n_bytes + 128);
    switch (kind) {
        case TaskKind::repetitive: {
            const char* phrases[4] = {"the quick brown fox jumps over the lazy dog. ",
                                      "pack my box with five dozen liquor jugs. ",
                                      "the quick brown fox jumps over the lazy dog. ",
                                      "how vexingly quick daft zebras jump. "};
            size_t i = 0;
            while (out.size() < n_bytes) out += phrases[i++ % 4];
            break;
        }
        case TaskKind::natural: {
            while (out.size() < n_bytes) {
                size_t len = 5 + rng.next_u64() % 7;
                for (size_t i = 0; i < len; ++i) {
                    out += pick_word(rng);
                    out += i + 1 == len ? ". " : " ";
                }
            }
            break;
        }
        case TaskKind::numeric: {
            char line[64];
            while (out.size() < n_bytes) {
                int a = static_cast<int>(rng.next_u64() % 90) + 10;
                int b = static_cast<int>(rng.next_u64() % 90) + 10;
                std::snprintf(line, sizeof(line), "%d + %d = %d\n", a, b, a + b);
                out += line;
            }
            break;
        }
        case TaskKind::qa: {
            const char* subjects[6] = {"sky", "sea", "sun", "moon", "grass", "snow"};
            const char* attrs[6] = {"blue", "wide", "bright", "pale", "green", "cold"};
            while (out.size() < n_bytes) {
                size_t i = rng.next_u64() % 6;
                out += "Q: what is the ";
                out += subjects[i];
                out += "? A: the ";
                out += subjects[i];
                out += " is ";
                out += attrs[i];
                out += ".\n";
            }
            break;
        }
        case TaskKind::shuffled: {
            const char* punct[4] = {" ", " ", ", ", ".\n"};
            while (out.size() < n_bytes) {
                out += pick_word(rng);
                out += punct[rng.next_u64() % 4];
            }
            break;
        }
        case TaskKind::retrieval: {
            char line[64];
            // fixed 16-entry dictionary, then repeated lookups into it
            int dict[16];
            for (int i = 0; i < 16; ++i)
                dict[i] = static_cast<int>(rng.next_u64() % kNumWords);
            while (out.size() < n_bytes) {
                for (int i = 0; i < 16 && out.size() < n_bytes; ++i) {
                    std::snprintf(line, sizeof(line), "k%02d = %s\n", i, kWords[dict[i]]);
                    out += line;
                }
                for (int q = 0; q < 32 && out.size() < n_bytes; ++q) {
                    int i = static_cast<int>(rng.next_u64() % 16);
                    std::snprintf(line, sizeof(line), "find k%02d -> %s\n", i, kWords[dict[i]]);
                    out += line;
                }
            }
            break;
        }
    }
    out.resize(n_bytes);
    return out;
}

std::vector<std::string> synth_prompts(std::string_view corpus, int count, int len,
                                       uint64_t seed) {
    if (count < 1 || len < 1) throw ArgError("synth_prompts: count and len must be positive");
    if (corpus.size() < static_cast<size_t>(len))
        throw ArgError("synth_prompts: corpus shorter than prompt length");
    Rng rng(seed, /*stream=*/0x9209ull);
    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(count));
    const size_t span = corpus.size() - static_cast<size_t>(len);
    for (int i = 0; i < count; ++i) {
        size_t off = span == 0 ? 0 : rng.next_u64() % (span + 1);
        out.emplace_back(corpus.substr(off, static_cast<size_t>(len)));
    }
    return out;
}

// ---- suite config -----------------------------------------------------------

BenchSuite parse_suite(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ArgError(std::string("suite config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ArgError("suite config must be a JSON object");
    BenchSuite s;
    s.tasks.clear();
    if (doc.contains("tasks")) {
        for (const json& jt : doc.at("tasks")) {
            BenchTask t;
            t.name = jt.at("name").get<std::string>();
            t.corpus_path = jt.value("corpus_path", std::string());
            t.prompts_path = jt.value("prompts", std::string());
            t.max_new = jt.value("max_new", 64);
            if (t.name.empty()) throw ArgError("suite: task with empty name");
            if (t.prompts_path.empty())
                throw ArgError("suite: task '" + t.name + "' lacks a prompts file");
            if (t.max_new < 1) throw ArgError("suite: task '" + t.name + "' max_new must be >= 1");
            s.tasks.push_back(std::move(t));
        }
    }
    if (doc.contains("temperatures")) {
        s.temperatures = doc.at("temperatures").get<std::vector<double>>();
        if (s.temperatures.empty()) throw ArgError("suite: empty temperature list");
        for (double t : s.temperatures)
            if (t < 0.0) throw ArgError("suite: negative temperature");
    }
    if (doc.contains("seeds")) {
        s.seeds = doc.at("seeds").get<std::vector<uint64_t>>();
        if (s.seeds.empty()) throw ArgError("suite: empty seed list");
    }
    return s;
}

std::string suite_to_json(const BenchSuite& suite) {
    json jt = json::array();
    for (const BenchTask& t : suite.tasks)
        jt.push_back({{"name", t.name},
                      {"corpus_path", t.corpus_path},
                      {"prompts", t.prompts_path},
                      {"max_new", t.max_new}});
    json doc{{"tasks", jt}, {"temperatures", suite.temperatures}, {"seeds", suite.seeds}};
    return doc.dump(2);
}

// ---- metrics ----------------------------------------------------------------

double measure_speedup(long long baseline_ns, long long s4c_ns) {
    if (baseline_ns <= 0 || s4c_ns <= 0)
        throw ArgError("measure_speedup: durations must be positive");
    return static_cast<double>(baseline_ns) / static_cast<double>(s4c_ns);
}

double efficiency_ratio(double accel, double extra_memory_gb) {
    if (!(extra_memory_gb > 0.0)) throw ArgError("efficiency_ratio: memory must be positive");
    return accel / extra_memory_gb;
}

// ---- session factories ------------------------------------------------------

std::unique_ptr<TargetBackend> TransformerSessionFactory::make_target() const {
    return std::make_unique<TransformerBackend>(target_);
}

std::unique_ptr<Drafter> TransformerSessionFactory::make_drafter() const {
    return std::make_unique<S4CDrafter>(target_, draft_);
}

std::unique_ptr<TargetBackend> TabularSessionFactory::make_target() const {
    return std::make_unique<TabularBackend>(target_);
}

std::unique_ptr<Drafter> TabularSessionFactory::make_drafter() const {
    return std::make_unique<TabularDrafter>(draft_);
}

// ---- harness ----------------------------------------------------------------

namespace {

std::string environment_string() {
    std::string s = "cxx ";
#ifdef __VERSION__
    s += __VERSION__;
#else
    s += "unknown";
#endif
#ifdef NDEBUG
    s += "; release";
#else
    s += "; debug";
#endif
#if __has_include(<sys/utsname.h>)
    struct utsname u{};
    if (uname(&u) == 0) {
        s += "; ";
        s += u.sysname;
        s += " ";
        s += u.release;
        s += " ";
        s += u.machine;
    }
#endif
    return s;
}

uint64_t prompt_seed(uint64_t seed, size_t prompt_idx) {
    return seed ^ (0x9e3779b97f4a7c15ull * (prompt_idx + 1));
}

long long lower_median(std::vector<long long> v) {
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];
}

struct LoadedTask {
    const BenchTask* task;
    std::vector<std::vector<int>> prompts;
};

} // namespace

BenchReport run_benchmark(const BenchSuite& suite, const SessionFactory& factory,
                          const DraftConfig& draft_cfg, bool eq12_correction) {
    draft_cfg.validate();
    if (suite.temperatures.empty()) throw ArgError("bench: no temperatures");
    if (suite.seeds.empty()) throw ArgError("bench: no seeds");

    // validate every referenced path before any long computation
    std::vector<LoadedTask> tasks;
    tasks.reserve(suite.tasks.size());
    for (const BenchTask& t : suite.tasks) {
        if (!t.corpus_path.empty()) read_text_file(t.corpus_path);
        LoadedTask lt;
        lt.task = &t;
        lt.prompts = load_prompt_tokens(t.prompts_path);
        if (lt.prompts.empty()) throw ArgError("bench: task '" + t.name + "' has no prompts");
        tasks.push_back(std::move(lt));
    }

    // every run must fit the context window outright, otherwise early stopping
    // would make the baseline and speculative runs decode different budgets
    {
        auto probe = factory.make_target();
        const size_t limit = static_cast<size_t>(probe->context_limit());
        const size_t tree = static_cast<size_t>(draft_cfg.max_nodes());
        for (const LoadedTask& lt : tasks) {
            size_t longest = 0;
            for (const auto& p : lt.prompts) longest = std::max(longest, p.size());
            size_t need = longest + static_cast<size_t>(lt.task->max_new) + 1 + tree;
            if (need > limit)
                throw ArgError("bench: task '" + lt.task->name + "' needs " +
                               std::to_string(need) + " context rows but the target allows " +
                               std::to_string(limit));
        }
    }

    BenchReport report;
    report.config_echo = suite_to_json(suite);
    report.environment = environment_string();

    auto make_cfg = [&](const BenchTask& t, double temp, uint64_t seed, size_t pi) {
        GenConfig cfg;
        cfg.max_new = t.max_new;
        cfg.temperature = temp;
        cfg.draft = draft_cfg;
        cfg.seed = prompt_seed(seed, pi);
        cfg.eq12_correction = eq12_correction;
        return cfg;
    };

    auto baseline_run = [&](const LoadedTask& lt, double temp, uint64_t seed,
                            std::vector<std::vector<int>>* outs) -> long long {
        auto target = factory.make_target();
        auto t0 = std::chrono::steady_clock::now();
        for (size_t pi = 0; pi < lt.prompts.size(); ++pi) {
            auto [toks, st] = baseline_generate(*target, lt.prompts[pi],
                                                make_cfg(*lt.task, temp, seed, pi));
            if (outs) outs->push_back(std::move(toks));
        }
        return std::chrono::duration_cast<std::chrono::nanoseconds>(
                   std::chrono::steady_clock::now() - t0)
            .count();
    };

    auto s4c_run = [&](const LoadedTask& lt, double temp, uint64_t seed,
                       std::vector<std::vector<int>>* outs, GenStats* merged) -> long long {
        auto target = factory.make_target();
        auto drafter = factory.make_drafter();
        auto t0 = std::chrono::steady_clock::now();
        for (size_t pi = 0; pi < lt.prompts.size(); ++pi) {
            auto [toks, st] =
                generate(*target, *drafter, lt.prompts[pi], make_cfg(*lt.task, temp, seed, pi));
            if (outs) outs->push_back(std::move(toks));
            if (merged) merged->merge(st);
        }
        return std::chrono::duration_cast<std::chrono::nanoseconds>(
                   std::chrono::steady_clock::now() - t0)
            .count();
    };

    struct Totals {
        long long base = 0;
        long long s4c = 0;
    };
    std::map<double, Totals> totals;

    for (const LoadedTask& lt : tasks) {
        for (double temp : suite.temperatures) {
            // warm-up pass, discarded from timing; greedy runs double as the
            // baseline-equality check that makes the speedup comparison fair
            std::vector<std::vector<int>> base_out, s4c_out;
            baseline_run(lt, temp, suite.seeds[0], &base_out);
            GenStats merged;
            s4c_run(lt, temp, suite.seeds[0], &s4c_out, &merged);
            if (temp == 0.0) {
                for (size_t i = 0; i < base_out.size(); ++i)
                    if (base_out[i] != s4c_out[i])
                        throw NumericError("bench: greedy speculative output diverged from "
                                           "baseline on task '" +
                                           lt.task->name + "'");
            }

            std::vector<long long> base_times, s4c_times;
            base_times.reserve(suite.seeds.size());
            s4c_times.reserve(suite.seeds.size());
            for (uint64_t seed : suite.seeds)
                base_times.push_back(baseline_run(lt, temp, seed, nullptr));
            for (uint64_t seed : suite.seeds)
                s4c_times.push_back(s4c_run(lt, temp, seed, nullptr, &merged));

            TaskRow row;
            row.task = lt.task->name;
            row.temperature = temp;
            row.baseline_ns = lower_median(base_times);
            row.s4c_ns = lower_median(s4c_times);
            row.speedup = measure_speedup(row.baseline_ns, row.s4c_ns);
            row.mean_accepted = merged.mean_accepted();
            row.stats = merged;
            report.peak_extra_bytes = std::max(report.peak_extra_bytes, merged.peak_extra_bytes);
            totals[temp].base += row.baseline_ns;
            totals[temp].s4c += row.s4c_ns;
            report.rows.push_back(std::move(row));
        }
    }

    for (double temp : suite.temperatures) {
        OverallRow o;
        o.temperature = temp;
        auto it = totals.find(temp);
        if (it != totals.end() && it->second.s4c > 0)
            o.speedup = measure_speedup(it->second.base, it->second.s4c);
        report.overall.push_back(o);
    }
    report.extra_memory_gb = static_cast<double>(report.peak_extra_bytes) / 1e9;
    if (!report.rows.empty() && report.extra_memory_gb > 0.0)
        report.efficiency_r = efficiency_ratio(report.overall.front().speedup,
                                               report.extra_memory_gb);
    return report;
}

// ---- report emission --------------------------------------------------------

namespace {

// Round to 6 significant digits so serialized numbers are short and stable.
double round6(double x) {
    if (!std::isfinite(x)) return x;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return std::strtod(buf, nullptr);
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::string pad(const std::string& s, size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
}

std::string markdown_table(const std::vector<std::string>& headers,
                           const std::vector<std::vector<std::string>>& rows) {
    std::vector<size_t> w(headers.size());
    for (size_t c = 0; c < headers.size(); ++c) {
        w[c] = headers[c].size();
        for (const auto& r : rows) w[c] = std::max(w[c], r[c].size());
    }
    std::string out = "|";
    for (size_t c = 0; c < headers.size(); ++c) out += " " + pad(headers[c], w[c]) + " |";
    out += "\n|";
    for (size_t c = 0; c < headers.size(); ++c) out += std::string(w[c] + 2, '-') + "|";
    out += "\n";
    for (const auto& r : rows) {
        out += "|";
        for (size_t c = 0; c < headers.size(); ++c) out += " " + pad(r[c], w[c]) + " |";
        out += "\n";
    }
    return out;
}

} // namespace

std::string format_r(double r) {
    double truncated = std::floor(r * 1e4) / 1e4;
    return fmt("%.4f", truncated);
}

std::string emit_report(const BenchReport& report, const std::string& format) {
    if (format == "json") {
        json rows = json::array();
        for (const TaskRow& r : report.rows) {
            json hist = json::object();
            for (auto& [len, cnt] : r.stats.accepted_hist)
                hist[std::to_string(len)] = cnt;
            rows.push_back({{"task", r.task},
                            {"temperature", round6(r.temperature)},
                            {"speedup", round6(r.speedup)},
                            {"mean_accepted", round6(r.mean_accepted)},
                            {"baseline_ns", r.baseline_ns},
                            {"s4c_ns", r.s4c_ns},
                            {"rounds", r.stats.rounds},
                            {"tokens_emitted", r.stats.tokens_emitted},
                            {"target_forward_calls", r.stats.target_forward_calls},
                            {"draft_forward_calls", r.stats.draft_forward_calls},
                            {"accepted_hist", hist},
                            {"peak_extra_bytes", r.stats.peak_extra_bytes}});
        }
        json overall = json::array();
        for (const OverallRow& o : report.overall)
            overall.push_back(
                {{"temperature", round6(o.temperature)}, {"speedup", round6(o.speedup)}});
        json doc{{"rows", rows},
                 {"overall", overall},
                 {"efficiency",
                  {{"extra_memory_gb", round6(report.extra_memory_gb)},
                   {"overall_speedup",
                    round6(report.overall.empty() ? 0.0 : report.overall.front().speedup)},
                   {"r", round6(report.efficiency_r)}}},
                 {"environment", report.environment},
                 {"config", json::parse(report.config_echo.empty() ? "{}" : report.config_echo)}};
        return doc.dump(2) + "\n";
    }
    if (format != "md") throw ArgError("emit_report: format must be json or md");

    // column per task (first-appearance order), one row per temperature
    std::vector<std::string> task_names;
    for (const TaskRow& r : report.rows)
        if (std::find(task_names.begin(), task_names.end(), r.task) == task_names.end())
            task_names.push_back(r.task);

    std::vector<std::string> headers{"temperature"};
    for (const auto& t : task_names) headers.push_back(t);
    headers.push_back("mean accepted");
    headers.push_back("overall");

    std::vector<std::vector<std::string>> rows;
    for (const OverallRow& o : report.overall) {
        std::vector<std::string> row{fmt("%.2f", o.temperature)};
        long long emitted = 0, rounds = 0;
        for (const auto& t : task_names) {
            std::string cell = "-";
            for (const TaskRow& r : report.rows)
                if (r.task == t && r.temperature == o.temperature) {
                    cell = fmt("%.2f", r.speedup) + "x";
                    emitted += r.stats.tokens_emitted;
                    rounds += r.stats.rounds;
                }
            row.push_back(cell);
        }
        row.push_back(rounds > 0
                          ? fmt("%.2f", static_cast<double>(emitted) / static_cast<double>(rounds))
                          : "-");
        row.push_back(fmt("%.2f", o.speedup) + "x");
        rows.push_back(std::move(row));
    }

    std::string out = "# benchmark report\n\n";
    out += markdown_table(headers, rows);
    out += "\n";
    out += markdown_table(
        {"speedup", "extra memory (GB)", "r"},
        {{fmt("%.2f", report.overall.empty() ? 0.0 : report.overall.front().speedup) + "x",
          fmt("%.6g", report.extra_memory_gb), format_r(report.efficiency_r)}});
    out += "\nspeedups are environment-specific wall-clock ratios for this toy pair\n";
    return out;
}

} // namespace s4c
