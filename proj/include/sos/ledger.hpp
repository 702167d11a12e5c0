#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sos/error.hpp"

namespace sos {

// One append-only run event. `ts` is a logical clock equal to seq: reruns of
// the same config and seed must be byte-identical, which rules out wall
// time.
struct LedgerRecord {
    std::uint64_t seq = 0;
    std::uint64_t ts = 0;
    std::string event;
    nlohmann::json payload;

    nlohmann::json to_json() const {
        return nlohmann::json{{"seq", seq}, {"ts", ts}, {"event", event}, {"payload", payload}};
    }

    static LedgerRecord from_json(const nlohmann::json& j) {
        LedgerRecord r;
        r.seq = j.at("seq").get<std::uint64_t>();
        r.ts = j.at("ts").get<std::uint64_t>();
        r.event = j.at("event").get<std::string>();
        r.payload = j.at("payload");
        return r;
    }
};

inline const std::vector<std::string>& ledger_event_names() {
    static const std::vector<std::string> names = {"init",   "evaluate", "mutate", "select",
                                                   "gain",   "crossover", "rank"};
    return names;
}

// Single-writer event sink; seq and ts are assigned here so every
// implementation shares one numbering.
class LedgerSink {
  public:
    virtual ~LedgerSink() = default;

    const LedgerRecord& append(std::string event, nlohmann::json payload) {
        ++seq_;
        last_ = LedgerRecord{seq_, seq_, std::move(event), std::move(payload)};
        write(last_);
        return last_;
    }

    std::uint64_t records_written() const { return seq_; }

    virtual std::string path() const { return ""; }

  protected:
    virtual void write(const LedgerRecord& record) = 0;

  private:
    std::uint64_t seq_ = 0;
    LedgerRecord last_;
};

class MemoryLedger : public LedgerSink {
  public:
    const std::vector<LedgerRecord>& records() const { return records_; }

  protected:
    void write(const LedgerRecord& record) override { records_.push_back(record); }

  private:
    std::vector<LedgerRecord> records_;
};

// Newline-delimited JSON, flushed per record so a crashed run still leaves
// an auditable prefix.
class FileLedger : public LedgerSink {
  public:
    explicit FileLedger(const std::filesystem::path& path) : path_(path) {
        out_.open(path, std::ios::binary | std::ios::trunc);
        if (!out_) throw ConfigError("ledger: cannot open " + path.string() + " for writing");
    }

    std::string path() const override { return path_.string(); }

  protected:
    void write(const LedgerRecord& record) override {
        out_ << record.to_json().dump() << '\n';
        out_.flush();
    }

  private:
    std::filesystem::path path_;
    std::ofstream out_;
};

// Reads a ledger back, enforcing parseability and strictly increasing seq.
inline std::vector<LedgerRecord> read_ledger(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("ledger: cannot open " + path.string());

    std::vector<LedgerRecord> records;
    std::string line;
    std::size_t line_no = 0;
    std::uint64_t last_seq = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw ParseError("ledger: " + path.string() + ": line " + std::to_string(line_no) +
                             ": not valid JSON");
        }
        LedgerRecord r = LedgerRecord::from_json(j);
        if (r.seq <= last_seq) {
            throw ParseError("ledger: " + path.string() + ": line " + std::to_string(line_no) +
                             ": seq not strictly increasing");
        }
        last_seq = r.seq;
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace sos
