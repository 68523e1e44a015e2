#pragma once

// Deterministic execution of the health-record access-control contract:
// permission table, heart-rate readings, gas metering and events.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "edgelinker/bytes.hpp"
#include "edgelinker/chain.hpp"
#include "edgelinker/result.hpp"

namespace edgelinker::vm {

using chain::Transaction;

inline constexpr PermissionId kPermitterPermission = PermissionId::from_u8(0x00);
inline constexpr PermissionId kWritePermission = PermissionId::from_u8(0x01);
inline constexpr PermissionId kReadPermission = PermissionId::from_u8(0x02);

inline constexpr std::string_view kMethodAddReading = "add_reading";
inline constexpr std::string_view kMethodGrant = "grant";
inline constexpr std::string_view kMethodRevoke = "revoke";
inline constexpr std::string_view kMethodReadHistory = "read_history";

struct PermissionDenied {
    bool operator==(const PermissionDenied&) const = default;
};

class PermissionTable {
public:
    // Table whose only entry is `deployer` under PERMITTER.
    static PermissionTable initialize(const Address& deployer);

    bool has_permission(const PermissionId& permission, const Address& addr) const;

    // Mutate only when `caller` holds PERMITTER; otherwise PermissionDenied
    // with the table unchanged.
    Status<PermissionDenied> grant_permission(const Address& caller, const PermissionId& permission,
                                              const Address& addr);
    Status<PermissionDenied> revoke_permission(const Address& caller, const PermissionId& permission,
                                               const Address& addr);

    const std::map<PermissionId, std::set<Address>>& entries() const noexcept { return permissions_; }
    bool operator==(const PermissionTable&) const = default;

private:
    std::map<PermissionId, std::set<Address>> permissions_;
};

struct Reading {
    std::uint64_t timestamp_ms = 0;
    std::uint16_t heart_rate = 0;
    bool operator==(const Reading&) const = default;
};

struct HealthRecordState {
    Address owner;
    std::vector<Reading> readings;
    PermissionTable permissions;
    bool operator==(const HealthRecordState&) const = default;
};

struct GasSchedule {
    std::uint64_t deploy = 701'382;
    std::uint64_t add_data = 48'182;
    std::uint64_t grant = 23'521;
    std::uint64_t revoke = 21'948;
    std::uint64_t read_query = 21'000;
    std::uint64_t transfer = 21'000;

    bool all_positive() const noexcept;
    bool operator==(const GasSchedule&) const = default;
};

struct Event {
    Address contract;
    std::string name;
    Bytes data;
    std::uint64_t block_height = 0;
    Digest tx_hash;
    bool operator==(const Event&) const = default;
};

struct Account {
    std::uint64_t balance = 0;
    std::uint64_t next_nonce = 0;
    bool operator==(const Account&) const = default;
};

struct WorldState {
    std::map<Address, Account> accounts;
    std::map<Address, HealthRecordState> contracts;

    const Account* account(const Address& a) const;
    std::uint64_t total_balance() const;
    bool operator==(const WorldState&) const = default;
};

Bytes canonical_encode(const WorldState& ws);

Address contract_address(const Address& deployer, std::uint64_t deployer_nonce);

// Argument encoders for the fixed contract methods.
Bytes encode_add_reading_args(std::uint64_t timestamp_ms, std::uint16_t heart_rate);
Bytes encode_permission_args(const PermissionId& permission, const Address& addr);
Bytes encode_readings(const std::vector<Reading>& readings);
std::vector<Reading> decode_readings(ByteView in);

enum class ExecStatus : std::uint8_t {
    Success,
    Denied,       // permission guard failed; gas still charged
    OutOfGas,     // gas_limit below the operation cost
    Failed,       // malformed call, unknown contract/method, insufficient transfer funds
};

std::string_view to_string(ExecStatus s);

struct Receipt {
    Digest tx_hash;
    std::uint64_t gas_used = 0;
    ExecStatus status = ExecStatus::Success;
    std::vector<Event> events;
    std::optional<Address> created_contract;
    std::string detail;
};

enum class ExecError : std::uint8_t { InsufficientBalance, BadNonce };

std::string_view to_string(ExecError e);

struct BlockContext {
    std::uint64_t height = 0;
    Address fee_recipient;  // the block proposer
};

// Fees are charged before any effect, including for denied calls, and paid
// to ctx.fee_recipient. On error the state is untouched and the nonce is not
// consumed.
Result<Receipt, ExecError> execute_transaction(WorldState& ws, const Transaction& tx,
                                               const GasSchedule& schedule,
                                               const BlockContext& ctx);

// Gas an operation would cost before the gas_limit cap.
std::uint64_t operation_cost(const Transaction& tx, const GasSchedule& schedule);

enum class ReadError : std::uint8_t { PermissionDenied, UnknownContract };

std::string_view to_string(ReadError e);

// Owner or READ holders only; readings with from_ts <= timestamp <= to_ts in
// append order.
Result<std::vector<Reading>, ReadError> read_history(const WorldState& ws, const Address& contract,
                                                     const Address& caller, std::uint64_t from_ts,
                                                     std::uint64_t to_ts);

struct TxOutcome {
    Digest tx_hash;
    std::optional<Receipt> receipt;   // absent when skipped
    std::optional<ExecError> skipped;
};

// Executes every transaction of a finalized block in order.
std::vector<TxOutcome> apply_block(WorldState& ws, const chain::Block& block,
                                   const GasSchedule& schedule);

}  // namespace edgelinker::vm
