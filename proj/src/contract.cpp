#include "edgelinker/contract.hpp"

#include <algorithm>
#include <limits>
#include <type_traits>

#include "edgelinker/codec.hpp"

namespace edgelinker::vm {

using chain::Call;
using chain::Deploy;
using chain::Query;
using chain::Transfer;

PermissionTable PermissionTable::initialize(const Address& deployer) {
    PermissionTable t;
    t.permissions_[kPermitterPermission].insert(deployer);
    return t;
}

bool PermissionTable::has_permission(const PermissionId& permission, const Address& addr) const {
    auto it = permissions_.find(permission);
    return it != permissions_.end() && it->second.contains(addr);
}

Status<PermissionDenied> PermissionTable::grant_permission(const Address& caller,
                                                           const PermissionId& permission,
                                                           const Address& addr) {
    if (!has_permission(kPermitterPermission, caller)) return Err{PermissionDenied{}};
    permissions_[permission].insert(addr);
    return {};
}

Status<PermissionDenied> PermissionTable::revoke_permission(const Address& caller,
                                                            const PermissionId& permission,
                                                            const Address& addr) {
    if (!has_permission(kPermitterPermission, caller)) return Err{PermissionDenied{}};
    auto it = permissions_.find(permission);
    if (it != permissions_.end()) {
        it->second.erase(addr);
        if (it->second.empty()) permissions_.erase(it);
    }
    return {};
}

bool GasSchedule::all_positive() const noexcept {
    return deploy > 0 && add_data > 0 && grant > 0 && revoke > 0 && read_query > 0 && transfer > 0;
}

const Account* WorldState::account(const Address& a) const {
    auto it = accounts.find(a);
    return it == accounts.end() ? nullptr : &it->second;
}

std::uint64_t WorldState::total_balance() const {
    std::uint64_t total = 0;
    for (const auto& [_, acct] : accounts) total += acct.balance;
    return total;
}

Bytes canonical_encode(const WorldState& ws) {
    Encoder enc;
    enc.count(ws.accounts.size());
    for (const auto& [addr, acct] : ws.accounts) {
        enc.fixed(addr).u64(acct.balance).u64(acct.next_nonce);
    }
    enc.count(ws.contracts.size());
    for (const auto& [addr, c] : ws.contracts) {
        enc.fixed(addr).fixed(c.owner);
        enc.count(c.readings.size());
        for (const auto& r : c.readings) enc.u64(r.timestamp_ms).u64(r.heart_rate);
        const auto& entries = c.permissions.entries();
        enc.count(entries.size());
        for (const auto& [perm, members] : entries) {
            enc.fixed(perm).count(members.size());
            for (const auto& m : members) enc.fixed(m);
        }
    }
    return std::move(enc).take();
}

Address contract_address(const Address& deployer, std::uint64_t deployer_nonce) {
    Encoder enc;
    enc.u64(deployer_nonce);
    return Address{crypto::sha256(deployer.view(), enc.buffer()).bytes};
}

Bytes encode_add_reading_args(std::uint64_t timestamp_ms, std::uint16_t heart_rate) {
    Encoder enc;
    enc.u64(timestamp_ms).u64(heart_rate);
    return std::move(enc).take();
}

Bytes encode_permission_args(const PermissionId& permission, const Address& addr) {
    Encoder enc;
    enc.fixed(permission).fixed(addr);
    return std::move(enc).take();
}

Bytes encode_readings(const std::vector<Reading>& readings) {
    Encoder enc;
    enc.count(readings.size());
    for (const auto& r : readings) enc.u64(r.timestamp_ms).u64(r.heart_rate);
    return std::move(enc).take();
}

std::vector<Reading> decode_readings(ByteView in) {
    Decoder dec(in);
    const auto n = dec.count();
    std::vector<Reading> out;
    for (std::size_t i = 0; i < n; ++i) {
        Reading r;
        r.timestamp_ms = dec.u64();
        const auto hr = dec.u64();
        if (hr > std::numeric_limits<std::uint16_t>::max()) throw DecodeError("heart rate overflow");
        r.heart_rate = static_cast<std::uint16_t>(hr);
        out.push_back(r);
    }
    dec.expect_done();
    return out;
}

std::string_view to_string(ExecStatus s) {
    switch (s) {
        case ExecStatus::Success: return "Success";
        case ExecStatus::Denied: return "Denied";
        case ExecStatus::OutOfGas: return "OutOfGas";
        case ExecStatus::Failed: return "Failed";
    }
    return "?";
}

std::string_view to_string(ExecError e) {
    switch (e) {
        case ExecError::InsufficientBalance: return "InsufficientBalance";
        case ExecError::BadNonce: return "BadNonce";
    }
    return "?";
}

std::string_view to_string(ReadError e) {
    switch (e) {
        case ReadError::PermissionDenied: return "PermissionDenied";
        case ReadError::UnknownContract: return "UnknownContract";
    }
    return "?";
}

std::uint64_t operation_cost(const Transaction& tx, const GasSchedule& schedule) {
    return std::visit(
        [&](const auto& p) -> std::uint64_t {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, Transfer>) {
                return schedule.transfer;
            } else if constexpr (std::is_same_v<T, Deploy>) {
                return schedule.deploy;
            } else if constexpr (std::is_same_v<T, Call>) {
                if (p.method == kMethodAddReading) return schedule.add_data;
                if (p.method == kMethodGrant) return schedule.grant;
                if (p.method == kMethodRevoke) return schedule.revoke;
                return schedule.transfer;
            } else {
                return schedule.read_query;
            }
        },
        tx.payload);
}

namespace {

struct PermissionArgs {
    PermissionId permission;
    Address addr;
};

std::optional<PermissionArgs> decode_permission_args(ByteView in) {
    try {
        Decoder dec(in);
        PermissionArgs a{dec.fixed<PermissionId>(), dec.fixed<Address>()};
        dec.expect_done();
        return a;
    } catch (const DecodeError&) {
        return std::nullopt;
    }
}

std::optional<Reading> decode_reading_args(ByteView in) {
    try {
        Decoder dec(in);
        Reading r;
        r.timestamp_ms = dec.u64();
        const auto hr = dec.u64();
        dec.expect_done();
        if (hr > std::numeric_limits<std::uint16_t>::max()) return std::nullopt;
        r.heart_rate = static_cast<std::uint16_t>(hr);
        return r;
    } catch (const DecodeError&) {
        return std::nullopt;
    }
}

void fail(Receipt& r, std::string detail) {
    r.status = ExecStatus::Failed;
    r.detail = std::move(detail);
}

void run_call(WorldState& ws, const Transaction& tx, const Call& call, const BlockContext& ctx,
              Receipt& receipt) {
    auto it = ws.contracts.find(call.contract);
    if (it == ws.contracts.end()) return fail(receipt, "unknown contract");
    auto& state = it->second;

    auto emit = [&](std::string name, Bytes data) {
        receipt.events.push_back(
            Event{call.contract, std::move(name), std::move(data), ctx.height, receipt.tx_hash});
    };

    if (call.method == kMethodAddReading) {
        auto reading = decode_reading_args(call.args);
        if (!reading) return fail(receipt, "malformed add_reading args");
        if (!state.permissions.has_permission(kWritePermission, tx.sender)) {
            receipt.status = ExecStatus::Denied;
            receipt.detail = "caller lacks WRITE";
            return;
        }
        state.readings.push_back(*reading);
        emit("ReadingAdded", call.args);
        return;
    }

    if (call.method == kMethodGrant || call.method == kMethodRevoke) {
        auto args = decode_permission_args(call.args);
        if (!args) return fail(receipt, "malformed permission args");
        const bool grant = call.method == kMethodGrant;
        auto st = grant ? state.permissions.grant_permission(tx.sender, args->permission, args->addr)
                        : state.permissions.revoke_permission(tx.sender, args->permission, args->addr);
        if (!st) {
            receipt.status = ExecStatus::Denied;
            receipt.detail = "caller lacks PERMITTER";
            return;
        }
        Encoder data;
        data.tag(grant ? 1 : 0).fixed(args->permission).fixed(args->addr);
        emit("PermissionChanged", std::move(data).take());
        return;
    }

    fail(receipt, "unknown method " + call.method);
}

}  // namespace

Result<Receipt, ExecError> execute_transaction(WorldState& ws, const Transaction& tx,
                                               const GasSchedule& schedule,
                                               const BlockContext& ctx) {
    const Account* existing = ws.account(tx.sender);
    const Account current = existing ? *existing : Account{};
    if (tx.nonce != current.next_nonce) return Err{ExecError::BadNonce};

    const std::uint64_t cost = operation_cost(tx, schedule);
    const std::uint64_t gas_used = std::min(cost, tx.gas_limit);
    if (current.balance < gas_used) return Err{ExecError::InsufficientBalance};

    auto& sender = ws.accounts[tx.sender];
    sender.balance -= gas_used;
    sender.next_nonce += 1;
    ws.accounts[ctx.fee_recipient].balance += gas_used;

    Receipt receipt;
    receipt.tx_hash = chain::hash_tx(tx);
    receipt.gas_used = gas_used;

    if (tx.gas_limit < cost) {
        receipt.status = ExecStatus::OutOfGas;
        receipt.detail = "gas_limit below operation cost";
        return receipt;
    }

    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, Transfer>) {
                auto& from = ws.accounts[tx.sender];
                if (from.balance < p.amount) return fail(receipt, "insufficient funds for transfer");
                from.balance -= p.amount;
                ws.accounts[p.to].balance += p.amount;
            } else if constexpr (std::is_same_v<T, Deploy>) {
                const auto addr = contract_address(tx.sender, tx.nonce);
                if (ws.contracts.contains(addr)) return fail(receipt, "contract address taken");
                ws.contracts.emplace(
                    addr, HealthRecordState{tx.sender, {}, PermissionTable::initialize(tx.sender)});
                receipt.created_contract = addr;
                receipt.events.push_back(Event{addr, "ContractDeployed", Bytes(tx.sender.begin(), tx.sender.end()),
                                               ctx.height, receipt.tx_hash});
            } else if constexpr (std::is_same_v<T, Call>) {
                run_call(ws, tx, p, ctx, receipt);
            } else {
                fail(receipt, "queries are served off-chain");
            }
        },
        tx.payload);
    return receipt;
}

Result<std::vector<Reading>, ReadError> read_history(const WorldState& ws, const Address& contract,
                                                     const Address& caller, std::uint64_t from_ts,
                                                     std::uint64_t to_ts) {
    auto it = ws.contracts.find(contract);
    if (it == ws.contracts.end()) return Err{ReadError::UnknownContract};
    const auto& state = it->second;
    if (caller != state.owner && !state.permissions.has_permission(kReadPermission, caller)) {
        return Err{ReadError::PermissionDenied};
    }
    std::vector<Reading> out;
    for (const auto& r : state.readings) {
        if (r.timestamp_ms >= from_ts && r.timestamp_ms <= to_ts) out.push_back(r);
    }
    return out;
}

std::vector<TxOutcome> apply_block(WorldState& ws, const chain::Block& block,
                                   const GasSchedule& schedule) {
    const BlockContext ctx{block.header.height, block.header.proposer};
    std::vector<TxOutcome> outcomes;
    outcomes.reserve(block.transactions.size());
    for (const auto& tx : block.transactions) {
        TxOutcome o;
        auto r = execute_transaction(ws, tx, schedule, ctx);
        if (r) {
            o.tx_hash = r->tx_hash;
            o.receipt = std::move(r).value();
        } else {
            o.tx_hash = chain::hash_tx(tx);
            o.skipped = r.error();
        }
        outcomes.push_back(std::move(o));
    }
    return outcomes;
}

}  // namespace edgelinker::vm
