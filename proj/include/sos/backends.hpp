#pragma once

#include <cctype>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "sos/detail/rng.hpp"
#include "sos/detail/strings.hpp"
#include "sos/error.hpp"
#include "sos/templates.hpp"

namespace sos {

// Decode controls for one completion. Mutation calls default to temperature
// 1.0 for diversity; task completion and judging run at 0.0 for
// repeatability. `seed` makes deterministic backends pure functions of the
// request and is forwarded to wire backends that accept one.
struct DecodeParams {
    double temperature = 0.0;
    int max_output_tokens = 512;
    std::uint64_t seed = 0;
};

// One meta-prompt invocation: which template, what fills the placeholders,
// and how to decode.
struct TransformRequest {
    std::string template_id;
    std::map<std::string, std::string> bindings;
    DecodeParams decode;
};

inline TransformRequest make_transform_request(std::string template_id, std::string data,
                                               std::uint64_t seed) {
    TransformRequest req;
    req.template_id = std::move(template_id);
    req.bindings["passed in data"] = std::move(data);
    req.decode.temperature = 1.0;
    req.decode.seed = seed;
    return req;
}

enum class CallPurpose { Mutation, TaskCompletion, Judging };

inline const char* to_string(CallPurpose p) {
    switch (p) {
        case CallPurpose::Mutation: return "mutation";
        case CallPurpose::TaskCompletion: return "task_completion";
        case CallPurpose::Judging: return "judging";
    }
    throw StateError("call purpose: unknown value");
}

// Counts every backend interface invocation by (backend name, purpose).
// Counts only grow; a snapshot is safe to take while workers are running.
class CallLedger {
  public:
    void bump(const std::string& backend, CallPurpose purpose) {
        std::lock_guard<std::mutex> lock(mu_);
        ++counts_[{backend, purpose}];
    }

    std::uint64_t count(const std::string& backend, CallPurpose purpose) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = counts_.find({backend, purpose});
        return it == counts_.end() ? 0 : it->second;
    }

    std::uint64_t total(CallPurpose purpose) const {
        std::lock_guard<std::mutex> lock(mu_);
        std::uint64_t sum = 0;
        for (const auto& [key, n] : counts_) {
            if (key.second == purpose) sum += n;
        }
        return sum;
    }

    std::uint64_t total() const {
        std::lock_guard<std::mutex> lock(mu_);
        std::uint64_t sum = 0;
        for (const auto& [key, n] : counts_) sum += n;
        return sum;
    }

    // (backend, purpose, count) triples in deterministic key order.
    std::vector<std::tuple<std::string, CallPurpose, std::uint64_t>> snapshot() const {
        std::lock_guard<std::mutex> lock(mu_);
        std::vector<std::tuple<std::string, CallPurpose, std::uint64_t>> out;
        out.reserve(counts_.size());
        for (const auto& [key, n] : counts_) out.emplace_back(key.first, key.second, n);
        return out;
    }

  private:
    mutable std::mutex mu_;
    std::map<std::pair<std::string, CallPurpose>, std::uint64_t> counts_;
};

// Bounded retries with exponential backoff for retryable backend errors.
struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds base_backoff{200};
};

template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
    std::chrono::milliseconds backoff = policy.base_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            return fn();
        } catch (const BackendError& e) {
            if (!e.retryable() || attempt >= policy.attempts) throw;
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
}

// Text transformer L: runs meta-prompt transformations and task completions.
// Accounting happens here in the non-virtual entry points, so CallLedger
// totals equal interface invocations exactly regardless of implementation.
class TextBackend {
  public:
    explicit TextBackend(CallLedger* calls = nullptr) : calls_(calls) {}
    virtual ~TextBackend() = default;

    virtual std::string name() const = 0;

    std::string transform(const TransformRequest& req) {
        if (calls_) calls_->bump(name(), CallPurpose::Mutation);
        return do_transform(req);
    }

    // Completes [p; Q]: prompt, a single newline, then the query.
    std::string complete_task(const std::string& prompt, const std::string& query) {
        if (prompt.empty()) throw PreconditionError("complete_task: empty prompt");
        if (query.empty()) throw PreconditionError("complete_task: empty query");
        if (calls_) calls_->bump(name(), CallPurpose::TaskCompletion);
        return do_complete(prompt, query);
    }

    void attach_calls(CallLedger* calls) { calls_ = calls; }

  protected:
    virtual std::string do_transform(const TransformRequest& req) = 0;
    virtual std::string do_complete(const std::string& prompt, const std::string& query) = 0;

  private:
    CallLedger* calls_;
};

// Safety judge: decides whether a response to a probe is safe.
class SafetyJudge {
  public:
    explicit SafetyJudge(CallLedger* calls = nullptr) : calls_(calls) {}
    virtual ~SafetyJudge() = default;

    virtual std::string name() const = 0;

    bool judge_safety(const std::string& query, const std::string& response) {
        if (calls_) calls_->bump(name(), CallPurpose::Judging);
        return do_judge(query, response);
    }

    void attach_calls(CallLedger* calls) { calls_ = calls; }

  protected:
    virtual bool do_judge(const std::string& query, const std::string& response) = 0;

  private:
    CallLedger* calls_;
};

// Flags a response unsafe iff it contains any banned marker substring.
// Refusal text carries no marker, so refusals are judged safe.
class MockJudge : public SafetyJudge {
  public:
    explicit MockJudge(std::vector<std::string> banned_markers,
                       CallLedger* calls = nullptr)
        : SafetyJudge(calls), banned_(std::move(banned_markers)) {}

    std::string name() const override { return "mock-judge"; }

  protected:
    bool do_judge(const std::string& /*query*/, const std::string& response) override {
        for (const std::string& marker : banned_) {
            if (detail::contains(response, marker)) return false;
        }
        return true;
    }

  private:
    std::vector<std::string> banned_;
};

// Deterministic text backend for tests and dry runs. Every output is a pure
// function of (template_id, bindings, decode.seed). Rendering the template
// first keeps the binding contract enforced on the mock path too.
class MockTextBackend : public TextBackend {
  public:
    explicit MockTextBackend(TemplateStore store, CallLedger* calls = nullptr)
        : TextBackend(calls), store_(std::move(store)) {}

    std::string name() const override { return "mock-llm"; }

    // The worked example pairs from the semantic and crossover templates;
    // the mock honors them the way a few-shot model would.
    static constexpr std::string_view kSemanticExampleIn =
        "Your mission is to ascertain the sentiment of the provided text and assign a sentiment "
        "label from ['negative', 'positive’].";
    static constexpr std::string_view kSemanticExampleOut =
        "Determine the sentiment of the given sentence and assign a label from ['negative', "
        "'positive'].";
    static constexpr std::string_view kCrossoverExampleParent1 =
        "Now you are a categorizer, your mission is to ascertain the sentiment of the provided "
        "text, either favorable or unfavorable.";
    static constexpr std::string_view kCrossoverExampleParent2 =
        "Assign a sentiment label to the given the sentence from ['negative', 'positive'] and "
        "return only the label without any other text.";
    static constexpr std::string_view kCrossoverExampleOffspring =
        "Your mission is to ascertain the sentiment of the provided text and assign a sentiment "
        "label from ['negative', 'positive’].";

    static std::string paraphrase(std::string_view prompt, std::uint64_t seed) {
        static const std::vector<std::string> prefixes = {
            "", "Please ", "Kindly ", "Your task: ", "Instruction: ", "In this task, ",
            "As an assistant, ", "Carefully ", "Task: ", "Objective: ", "Remember to ",
            "First, "};
        static const std::vector<std::string> suffixes = {
            "", " Provide only the answer.", " Be precise.", " Answer concisely.",
            " Respond with the result only.", " Keep the response short.",
            " Give a direct answer.", " No explanations.", " Think it through first.",
            " Double-check the result.", " Use plain language.", " Follow the format exactly."};
        std::mt19937_64 rng(detail::splitmix64(seed));
        const std::string& prefix = prefixes[detail::uniform_below(rng, prefixes.size())];
        const std::string& suffix = suffixes[detail::uniform_below(rng, suffixes.size())];
        std::string core(prompt);
        if (!prefix.empty() && !core.empty()) {
            core[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(core[0])));
        }
        return prefix + core + suffix;
    }

  protected:
    std::string do_transform(const TransformRequest& req) override {
        store_.render(req.template_id, req.bindings);  // enforce binding contract
        auto it = req.bindings.find("passed in data");
        const std::string& data = it == req.bindings.end() ? std::string() : it->second;

        if (req.template_id == kSemanticTemplate) {
            std::string prompt = payload::extract_line(data, payload::kCurrentPromptKey);
            if (prompt == kSemanticExampleIn) return std::string(kSemanticExampleOut);
            return paraphrase(prompt, req.decode.seed);
        }
        if (req.template_id == kCrossoverTemplate) {
            std::string p1 = payload::extract_line(data, payload::kParent1Key);
            std::string p2 = payload::extract_line(data, payload::kParent2Key);
            if (p1 == kCrossoverExampleParent1 && p2 == kCrossoverExampleParent2) {
                return std::string(kCrossoverExampleOffspring);
            }
            return detail::strip_terminal_punctuation(p1) + ". " + p2;
        }
        if (detail::starts_with(req.template_id, "feedback_generator")) {
            // Suggestion keyed to the first mistake's verdict.
            if (detail::contains(data, "verdict: unsafe_response")) {
                return "Refuse requests for harmful content and keep every response respectful.";
            }
            return "State the expected output format explicitly and restate the task "
                   "requirements.";
        }
        if (detail::starts_with(req.template_id, "feedback_improver")) {
            std::string prompt = payload::extract_line(data, payload::kPromptKey);
            std::string feedback = payload::extract_line(data, payload::kFeedbackKey);
            return prompt + " " + first_sentence(feedback);
        }
        throw PreconditionError("mock backend: no behavior for template '" + req.template_id +
                                "'");
    }

    std::string do_complete(const std::string& /*prompt*/, const std::string& query) override {
        // Deterministic rule: answer with the query's final token, normalized.
        std::vector<std::string> words = detail::split_whitespace(query);
        if (words.empty()) return "";
        return detail::to_lower(detail::strip_terminal_punctuation(words.back()));
    }

  private:
    static std::string first_sentence(const std::string& text) {
        std::size_t dot = text.find('.');
        if (dot == std::string::npos) return detail::trim(text);
        return detail::trim(text.substr(0, dot + 1));
    }

    TemplateStore store_;
};

}  // namespace sos
