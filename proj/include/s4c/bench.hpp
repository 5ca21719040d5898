#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "s4c/draft.hpp"
#include "s4c/model.hpp"
#include "s4c/stats.hpp"
#include "s4c/verify.hpp"

namespace s4c {

// Synthetic byte-level stand-ins for the six benchmark domains: highly repetitive
// text, loose natural prose, arithmetic lines, question/answer templates,
// shuffled words, and key-value retrieval lookups.
enum class TaskKind { repetitive, natural, numeric, qa, shuffled, retrieval };

const char* task_kind_name(TaskKind k);
TaskKind task_kind_from(const std::string& name);
constexpr int kNumTaskKinds = 6;

std::string synth_corpus(TaskKind kind, size_t n_bytes, uint64_t seed);
// Prompt strings cut from corpus offsets, each roughly `len` bytes.
std::vector<std::string> synth_prompts(std::string_view corpus, int count, int len,
                                       uint64_t seed);

struct BenchTask {
    std::string name;
    std::string corpus_path;   // validated if set; informational otherwise
    std::string prompts_path;  // JSON list of strings or token-id lists
    int max_new = 64;
};

struct BenchSuite {
    std::vector<BenchTask> tasks;
    std::vector<double> temperatures{0.0};
    std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
};

// {tasks: [{name, corpus_path, prompts, max_new}], temperatures, seeds}
BenchSuite parse_suite(const std::string& text);
std::string suite_to_json(const BenchSuite& suite);

// baseline time over s4c time; both must be positive.
double measure_speedup(long long baseline_ns, long long s4c_ns);
// acceleration per extra gigabyte; memory must be positive.
double efficiency_ratio(double accel, double extra_memory_gb);

// One benchmark session supplies a fresh backend + drafter pair so runs cannot
// share mutable state.
class SessionFactory {
public:
    virtual ~SessionFactory() = default;
    virtual std::unique_ptr<TargetBackend> make_target() const = 0;
    virtual std::unique_ptr<Drafter> make_drafter() const = 0;
};

class TransformerSessionFactory final : public SessionFactory {
public:
    TransformerSessionFactory(const Model& target, const DraftWeights& draft)
        : target_(target), draft_(draft) {}
    std::unique_ptr<TargetBackend> make_target() const override;
    std::unique_ptr<Drafter> make_drafter() const override;

private:
    const Model& target_;
    const DraftWeights& draft_;
};

class TabularSessionFactory final : public SessionFactory {
public:
    TabularSessionFactory(const TabularModel& target, const TabularModel& draft)
        : target_(target), draft_(draft) {}
    std::unique_ptr<TargetBackend> make_target() const override;
    std::unique_ptr<Drafter> make_drafter() const override;

private:
    const TabularModel& target_;
    const TabularModel& draft_;
};

struct TaskRow {
    std::string task;
    double temperature = 0.0;
    double speedup = 0.0;
    double mean_accepted = 0.0;
    long long baseline_ns = 0;  // median over seeds
    long long s4c_ns = 0;       // median over seeds
    GenStats stats;             // merged across prompts and seeds
};

struct OverallRow {
    double temperature = 0.0;
    double speedup = 0.0;  // total baseline time / total s4c time at this temperature
};

struct BenchReport {
    std::vector<TaskRow> rows;
    std::vector<OverallRow> overall;
    size_t peak_extra_bytes = 0;
    double extra_memory_gb = 0.0;
    double efficiency_r = 0.0;  // first-temperature overall speedup per extra GB
    std::string config_echo;
    std::string environment;
};

// Runs baseline and speculative decoding over identical prompts, budgets and
// seeds, with one discarded warm-up run and per-seed timing medians. Greedy
// rows assert byte-identical baseline/speculative outputs before timing.
BenchReport run_benchmark(const BenchSuite& suite, const SessionFactory& factory,
                          const DraftConfig& draft_cfg, bool eq12_correction = false);

// "json": byte-stable (sorted keys, numbers rounded to 6 significant digits).
// "md": aligned tables; per-task speedup columns, mean accepted tokens, overall
// speedup, then the efficiency block with r truncated to 4 decimals.
std::string emit_report(const BenchReport& report, const std::string& format);

// Truncating 4-decimal rendering used by the efficiency column.
std::string format_r(double r);

} // namespace s4c
