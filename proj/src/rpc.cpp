#include "chainlens/rpc.hpp"

#include <chrono>
#include <cmath>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

namespace chainlens {

namespace {

using json = nlohmann::json;

struct Endpoint {
    std::string host;
    int port;
    std::string path;
};

Endpoint split_url(const std::string& url) {
    std::string rest = url;
    const std::string prefix = "http://";
    if (rest.rfind(prefix, 0) != 0) fail_usage("rpc url must start with http:// : " + url);
    rest = rest.substr(prefix.size());
    std::string path = "/";
    if (const auto slash = rest.find('/'); slash != std::string::npos) {
        path = rest.substr(slash);
        rest = rest.substr(0, slash);
    }
    int port = 8332;
    if (const auto colon = rest.find(':'); colon != std::string::npos) {
        port = static_cast<int>(parse_i64(rest.substr(colon + 1), "rpc port"));
        rest = rest.substr(0, colon);
    }
    return {rest, port, path};
}

class RpcClient {
public:
    explicit RpcClient(const RpcConfig& cfg)
        : cfg_(cfg), ep_(split_url(cfg.url)), client_(ep_.host, ep_.port) {
        client_.set_connection_timeout(10);
        client_.set_read_timeout(60);
        if (!cfg.user.empty()) client_.set_basic_auth(cfg.user, cfg.pass);
    }

    json call(const std::string& method, const json& params) {
        json req = {{"jsonrpc", "1.0"}, {"id", "chainlens"}, {"method", method}, {"params", params}};
        const std::string body = req.dump();
        std::string last_error;
        for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(cfg_.backoff_ms * (1 << (attempt - 1))));
            auto res = client_.Post(ep_.path, body, "application/json");
            if (!res) {
                last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
                continue;
            }
            if (res->status == 401 || res->status == 403)
                throw Error(ErrorKind::Auth, "rpc authentication failed (HTTP " +
                                                 std::to_string(res->status) + ")");
            if (res->status != 200) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            json reply;
            try {
                reply = json::parse(res->body);
            } catch (const json::parse_error& e) {
                last_error = std::string("bad JSON-RPC reply: ") + e.what();
                continue;
            }
            if (reply.contains("error") && !reply["error"].is_null()) {
                last_error = "rpc error: " + reply["error"].dump();
                continue;
            }
            return reply.at("result");
        }
        fail_stage("rpc call '" + method + "' failed after " + std::to_string(cfg_.max_retries + 1) +
                   " attempts: " + last_error);
    }

private:
    RpcConfig cfg_;
    Endpoint ep_;
    httplib::Client client_;
};

std::uint64_t btc_to_sats(const json& value) {
    return static_cast<std::uint64_t>(std::llround(value.get<double>() * 1e8));
}

}  // namespace

void fetch_blocks(const RpcConfig& rpc, std::uint32_t lo, std::uint32_t hi,
                  const std::function<void(const std::string& line)>& sink) {
    if (lo > hi) fail_usage("invalid height range: from " + std::to_string(lo) + " to " +
                            std::to_string(hi));
    RpcClient client(rpc);

    // outputs created inside the fetched range, for input resolution
    std::unordered_map<std::string, std::pair<std::string, std::uint64_t>> utxo;  // txid:n -> (addr, sats)
    std::int64_t last_emitted = static_cast<std::int64_t>(lo) - 1;

    for (std::uint32_t h = lo; h <= hi; ++h) {
        json block;
        try {
            const json hash = client.call("getblockhash", json::array({h}));
            block = client.call("getblock", json::array({hash.get<std::string>(), 2}));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Auth) throw;
            throw FetchError(std::string(e.what()) + " (last fetched height: " +
                                 std::to_string(last_emitted) + ")",
                             last_emitted);
        }

        const std::int64_t time = block.at("time").get<std::int64_t>();
        for (const json& tx : block.at("tx")) {
            const std::string txid = tx.at("txid").get<std::string>();
            std::string line = "{\"txid\":\"" + txid + "\",\"height\":" + format_u64(h) +
                               ",\"time\":" + format_i64(time);
            bool coinbase = false;
            bool op_return = false;
            bool unresolved = false;
            std::string inputs = "[";
            bool first_in = true;
            for (const json& vin : tx.at("vin")) {
                if (vin.contains("coinbase")) {
                    coinbase = true;
                    continue;
                }
                std::string addr;
                std::uint64_t sats = 0;
                if (vin.contains("prevout") && vin["prevout"].contains("scriptPubKey") &&
                    vin["prevout"]["scriptPubKey"].contains("address")) {
                    addr = vin["prevout"]["scriptPubKey"]["address"].get<std::string>();
                    sats = btc_to_sats(vin["prevout"]["value"]);
                } else {
                    const std::string key = vin.at("txid").get<std::string>() + ":" +
                                            format_u64(vin.at("vout").get<std::uint64_t>());
                    if (auto it = utxo.find(key); it != utxo.end()) {
                        addr = it->second.first;
                        sats = it->second.second;
                    } else {
                        addr = "ext:" + key;  // spends an output created before the range
                        unresolved = true;
                    }
                }
                if (!first_in) inputs += ',';
                first_in = false;
                inputs += "{\"addr\":" + json(addr).dump() + ",\"sats\":" + format_u64(sats) + "}";
            }
            inputs += ']';

            std::string outputs = "[";
            bool first_out = true;
            for (const json& vout : tx.at("vout")) {
                const json& spk = vout.at("scriptPubKey");
                const std::string type = spk.value("type", "nonstandard");
                if (type == "nulldata") {
                    op_return = true;
                    continue;
                }
                std::string addr;
                if (spk.contains("address"))
                    addr = spk["address"].get<std::string>();
                else if (spk.contains("addresses") && !spk["addresses"].empty())
                    addr = spk["addresses"][0].get<std::string>();
                if (addr.empty()) {
                    unresolved = true;
                    addr = "unresolved:" + txid + ":" + format_u64(vout.at("n").get<std::uint64_t>());
                }
                const std::uint64_t sats = btc_to_sats(vout.at("value"));
                utxo.emplace(txid + ":" + format_u64(vout.at("n").get<std::uint64_t>()),
                             std::make_pair(addr, sats));
                if (!first_out) outputs += ',';
                first_out = false;
                outputs += "{\"addr\":" + json(addr).dump() + ",\"sats\":" + format_u64(sats) + "}";
            }
            outputs += ']';
            if (outputs == "[]") continue;  // nothing spendable (e.g. op_return-only)

            line += std::string(",\"coinbase\":") + (coinbase ? "true" : "false") +
                    ",\"op_return\":" + (op_return ? "true" : "false") +
                    ",\"script_hash_only\":" + (unresolved ? "true" : "false") +
                    ",\"inputs\":" + inputs + ",\"outputs\":" + outputs + "}";
            sink(line);
        }
        last_emitted = h;
    }
}

}  // namespace chainlens
