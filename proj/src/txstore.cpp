#include "chainlens/txstore.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <json.hpp>

namespace chainlens {

AddressId AddressTable::intern(std::string_view addr) {
    auto it = index_.find(addr);
    if (it != index_.end()) return it->second;
    names_.emplace_back(addr);
    const AddressId id = static_cast<AddressId>(names_.size() - 1);
    index_.emplace(std::string_view(names_.back()), id);
    return id;
}

AddressId AddressTable::lookup(std::string_view addr) const {
    auto it = index_.find(addr);
    if (it == index_.end()) fail_data("unknown address: " + std::string(addr));
    return it->second;
}

const AddressStats& TxStore::stats(AddressId a) const {
    static const AddressStats kNever{};
    if (a >= stats_.size()) return kNever;
    return stats_[a];
}

bool TxStore::appears_before(AddressId a, std::uint32_t ordinal) const {
    return stats(a).first_ordinal < ordinal;
}

std::uint32_t TxStore::receipts_before(AddressId a, std::uint32_t ordinal) const {
    const AddressStats& s = stats(a);
    if (s.first_receipt == kNoOrdinal || s.first_receipt >= ordinal) return 0;
    if (s.second_receipt == kNoOrdinal || s.second_receipt >= ordinal) return 1;
    return 2;
}

bool TxStore::received_after(AddressId a, std::uint32_t ordinal) const {
    const AddressStats& s = stats(a);
    return s.last_receipt != kNoOrdinal && s.last_receipt > ordinal;
}

bool TxStore::self_change_before(AddressId a, std::uint32_t ordinal) const {
    return stats(a).first_self_change < ordinal;
}

void TxStore::finalize() {
    std::stable_sort(txs_.begin(), txs_.end(),
                     [](const TxRecord& a, const TxRecord& b) { return a.height < b.height; });

    stats_.assign(table_->size(), AddressStats{});
    auto touch = [&](AddressId a, std::uint32_t ord, std::uint32_t height, Role role) {
        AddressStats& s = stats_[a];
        if (s.first_ordinal == kNoOrdinal) {
            s.first_ordinal = ord;
            s.first_height = height;
            s.first_role = role;
        }
    };
    std::unordered_set<AddressId> in_set;
    for (std::uint32_t ord = 0; ord < txs_.size(); ++ord) {
        const TxRecord& tx = txs_[ord];
        in_set.clear();
        for (const TxIo& io : tx.inputs) {
            touch(io.addr, ord, tx.height, Role::Input);
            in_set.insert(io.addr);
        }
        bool self_change = false;
        for (const TxIo& io : tx.outputs) {
            touch(io.addr, ord, tx.height, Role::Output);
            AddressStats& s = stats_[io.addr];
            if (s.last_receipt != ord) {  // count one receipt per tx per address
                ++s.receipt_count;
                if (s.first_receipt == kNoOrdinal)
                    s.first_receipt = ord;
                else if (s.second_receipt == kNoOrdinal)
                    s.second_receipt = ord;
                s.last_receipt = ord;
            }
            if (in_set.count(io.addr)) self_change = true;
        }
        if (self_change) {
            auto mark = [&](AddressId a) {
                if (stats_[a].first_self_change == kNoOrdinal) stats_[a].first_self_change = ord;
            };
            for (const TxIo& io : tx.inputs) mark(io.addr);
            for (const TxIo& io : tx.outputs) mark(io.addr);
        }
    }
}

namespace {

using json = nlohmann::json;

std::uint64_t get_sats(const json& j, std::size_t line) {
    if (!j.is_number_integer() && !j.is_number_unsigned())
        fail_data("line " + std::to_string(line) + ": 'sats' must be an integer");
    if (j.is_number_integer() && j.get<std::int64_t>() < 0)
        fail_data("line " + std::to_string(line) + ": negative value");
    return j.get<std::uint64_t>();
}

bool is_hex(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isxdigit(static_cast<unsigned char>(c))) return false;
    return true;
}

TxRecord parse_tx_line(const std::string& line, std::size_t lineno, AddressTable& table) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        fail_data("line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
    }
    if (!j.is_object()) fail_data("line " + std::to_string(lineno) + ": expected an object");

    TxRecord tx;
    try {
        tx.txid = j.at("txid").get<std::string>();
        tx.height = j.at("height").get<std::uint32_t>();
        tx.time = j.at("time").get<std::int64_t>();
        tx.coinbase = j.at("coinbase").get<bool>();
        tx.op_return = j.at("op_return").get<bool>();
        tx.script_hash_only = j.at("script_hash_only").get<bool>();
        for (const json& in : j.at("inputs"))
            tx.inputs.push_back({table.intern(in.at("addr").get<std::string>()),
                                 get_sats(in.at("sats"), lineno)});
        for (const json& out : j.at("outputs"))
            tx.outputs.push_back({table.intern(out.at("addr").get<std::string>()),
                                  get_sats(out.at("sats"), lineno)});
    } catch (const json::exception& e) {
        fail_data("line " + std::to_string(lineno) + ": " + e.what());
    }

    if (!is_hex(tx.txid)) fail_data("line " + std::to_string(lineno) + ": txid is not hex");
    if (tx.outputs.empty()) fail_data("line " + std::to_string(lineno) + ": no outputs");
    if (tx.coinbase) {
        if (!tx.inputs.empty())
            fail_data("line " + std::to_string(lineno) + ": coinbase with inputs");
    } else {
        if (tx.inputs.empty())
            fail_data("line " + std::to_string(lineno) + ": non-coinbase with no inputs");
        // Balance check only where every side is resolvable.
        if (!tx.script_hash_only) {
            std::uint64_t in_sum = 0, out_sum = 0;
            for (const TxIo& io : tx.inputs) in_sum += io.sats;
            for (const TxIo& io : tx.outputs) out_sum += io.sats;
            if (in_sum < out_sum)
                fail_data("line " + std::to_string(lineno) + ": outputs exceed inputs");
        }
    }
    return tx;
}

}  // namespace

TxStore parse_transactions(std::istream& in) {
    TxStore store;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        TxRecord tx = parse_tx_line(line, lineno, store.addresses());
        if (!seen.insert(tx.txid).second)
            fail_data("line " + std::to_string(lineno) + ": duplicate txid " + tx.txid);
        store.add(std::move(tx));
    }
    store.finalize();
    return store;
}

TxStore parse_transactions_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_data("cannot open input file: " + path);
    return parse_transactions(in);
}

std::string tx_to_json_line(const TxRecord& tx, const AddressTable& table) {
    std::string s;
    s.reserve(192 + 64 * (tx.inputs.size() + tx.outputs.size()));
    s += "{\"txid\":\"";
    s += tx.txid;
    s += "\",\"height\":";
    s += format_u64(tx.height);
    s += ",\"time\":";
    s += format_i64(tx.time);
    s += ",\"coinbase\":";
    s += tx.coinbase ? "true" : "false";
    s += ",\"op_return\":";
    s += tx.op_return ? "true" : "false";
    s += ",\"script_hash_only\":";
    s += tx.script_hash_only ? "true" : "false";
    auto io_list = [&](const std::vector<TxIo>& ios) {
        std::string part = "[";
        for (std::size_t i = 0; i < ios.size(); ++i) {
            if (i) part += ',';
            part += "{\"addr\":";
            part += nlohmann::json(table.name(ios[i].addr)).dump();
            part += ",\"sats\":";
            part += format_u64(ios[i].sats);
            part += '}';
        }
        part += ']';
        return part;
    };
    s += ",\"inputs\":";
    s += io_list(tx.inputs);
    s += ",\"outputs\":";
    s += io_list(tx.outputs);
    s += '}';
    return s;
}

void write_canonical_jsonl(const TxStore& store, std::ostream& out) {
    for (const TxRecord& tx : store.txs()) {
        out << tx_to_json_line(tx, store.addresses());
        out << '\n';
    }
}

TxStore filter_analyzable(const TxStore& store) {
    TxStore filtered(store.table());
    for (const TxRecord& tx : store.txs())
        if (!tx.op_return && !tx.script_hash_only) filtered.add(tx);
    filtered.finalize();
    return filtered;
}

LabelSet load_labels(const std::string& path, AddressTable& table) {
    std::ifstream in(path);
    if (!in) fail_data("cannot open label file: " + path);
    std::string line;
    if (!std::getline(in, line)) fail_data("label file is empty: " + path);
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line != "address,label")
        fail_data("label file must start with header 'address,label': " + path);

    LabelSet set;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.size() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            fail_data("label file line " + std::to_string(lineno) + ": missing comma");
        const std::string addr = line.substr(0, comma);
        const std::string label_str = line.substr(comma + 1);
        Label label;
        if (label_str == "malicious")
            label = Label::Malicious;
        else if (label_str == "benign")
            label = Label::Benign;
        else
            fail_data("label file line " + std::to_string(lineno) + ": unknown label '" +
                      label_str + "'");
        const AddressId id = table.intern(addr);
        auto [it, inserted] = set.labels.emplace(id, label);
        if (!inserted && it->second != label)
            fail_data("label file line " + std::to_string(lineno) +
                      ": conflicting labels for address " + addr);
    }
    return set;
}

}  // namespace chainlens
