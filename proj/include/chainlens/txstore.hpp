#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "chainlens/common.hpp"

namespace chainlens {

using AddressId = std::uint32_t;
inline constexpr std::uint32_t kNoOrdinal = UINT32_MAX;

// Interns address strings to dense ids. Bijective for the lifetime of the
// table; storage is a deque so views stay valid as it grows.
class AddressTable {
public:
    AddressId intern(std::string_view addr);
    const std::string& name(AddressId id) const { return names_[id]; }
    AddressId lookup(std::string_view addr) const;  // kNoOrdinal-style sentinel via has()
    bool has(std::string_view addr) const { return index_.count(addr) != 0; }
    std::size_t size() const { return names_.size(); }

private:
    std::deque<std::string> names_;
    std::unordered_map<std::string_view, AddressId> index_;
};

struct TxIo {
    AddressId addr;
    std::uint64_t sats;
};

struct TxRecord {
    std::string txid;
    std::uint32_t height = 0;
    std::int64_t time = 0;  // unix seconds, used only for segment boundaries
    bool coinbase = false;
    bool op_return = false;
    bool script_hash_only = false;
    std::vector<TxIo> inputs;
    std::vector<TxIo> outputs;
};

enum class Role : std::uint8_t { Input = 0, Output = 1 };

// Per-address occurrence facts, all relative to store order. receipt =
// the address appearing as a transaction output.
struct AddressStats {
    std::uint32_t first_ordinal = kNoOrdinal;
    std::uint32_t first_height = 0;
    Role first_role = Role::Input;
    std::uint32_t first_receipt = kNoOrdinal;
    std::uint32_t second_receipt = kNoOrdinal;
    std::uint32_t last_receipt = kNoOrdinal;
    std::uint32_t receipt_count = 0;
    std::uint32_t first_self_change = kNoOrdinal;  // first tx with an address on both sides
};

// Transactions sorted by (height, intra-block arrival order) plus the
// occurrence index the change heuristics evaluate against.
class TxStore {
public:
    TxStore() : table_(std::make_shared<AddressTable>()) {}
    explicit TxStore(std::shared_ptr<AddressTable> table) : table_(std::move(table)) {}

    const std::vector<TxRecord>& txs() const { return txs_; }
    AddressTable& addresses() { return *table_; }
    const AddressTable& addresses() const { return *table_; }
    std::shared_ptr<AddressTable> table() const { return table_; }

    const AddressStats& stats(AddressId a) const;

    bool appears_before(AddressId a, std::uint32_t ordinal) const;
    // exact for 0 and 1; returns 2 for "two or more"
    std::uint32_t receipts_before(AddressId a, std::uint32_t ordinal) const;
    bool received_after(AddressId a, std::uint32_t ordinal) const;
    bool self_change_before(AddressId a, std::uint32_t ordinal) const;

    void add(TxRecord tx) { txs_.push_back(std::move(tx)); }
    // Stable-sorts by height and rebuilds the occurrence index.
    void finalize();

private:
    std::shared_ptr<AddressTable> table_;
    std::vector<TxRecord> txs_;
    std::vector<AddressStats> stats_;
};

// One transaction per line; schema documented in the README. Errors carry
// the 1-based line number.
TxStore parse_transactions(std::istream& in);
TxStore parse_transactions_file(const std::string& path);

// Canonical serialization: fixed key order, shortest number forms. Parsing
// its own output round-trips byte-exactly.
void write_canonical_jsonl(const TxStore& store, std::ostream& out);
std::string tx_to_json_line(const TxRecord& tx, const AddressTable& table);

// Drops op_return / script-hash-flagged transactions; index rebuilt.
TxStore filter_analyzable(const TxStore& store);

enum class Label : std::uint8_t { Malicious, Benign };

struct LabelSet {
    std::unordered_map<AddressId, Label> labels;

    bool is_malicious(AddressId a) const {
        auto it = labels.find(a);
        return it != labels.end() && it->second == Label::Malicious;
    }
};

// CSV with header "address,label"; label in {malicious, benign}.
LabelSet load_labels(const std::string& path, AddressTable& table);

}  // namespace chainlens
