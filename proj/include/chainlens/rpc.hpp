#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "chainlens/common.hpp"

namespace chainlens {

struct RpcConfig {
    std::string url;  // http://host:port
    std::string user;
    std::string pass;
    int max_retries = 3;
    int backoff_ms = 250;
};

// Raised when a range fetch dies mid-way; carries the last height that was
// fully emitted so the caller can resume.
class FetchError : public Error {
public:
    FetchError(std::string msg, std::int64_t last_height)
        : Error(ErrorKind::Stage, std::move(msg)), last_height_(last_height) {}
    std::int64_t last_height() const { return last_height_; }

private:
    std::int64_t last_height_;
};

// Pulls blocks [lo, hi] over JSON-RPC (getblockhash + getblock verbosity 2)
// and emits one canonical transaction line per tx, heights ascending. Input
// values resolve against outputs seen within the fetched range; spends of
// pre-range outputs get a placeholder address and flag the transaction as
// script_hash_only so the filter drops it.
void fetch_blocks(const RpcConfig& rpc, std::uint32_t lo, std::uint32_t hi,
                  const std::function<void(const std::string& line)>& sink);

}  // namespace chainlens
