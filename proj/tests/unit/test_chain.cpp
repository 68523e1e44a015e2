#include <gtest/gtest.h>

#include <random>
#include <set>

#include "edgelinker/chain.hpp"
#include "edgelinker/contract.hpp"
#include "edgelinker/genesis.hpp"
#include "test_util.hpp"

namespace edgelinker::chain {
namespace {

Transaction random_tx(std::mt19937_64& rng, const KeyPair& kp) {
    Transaction tx;
    tx.nonce = rng() % 1000;
    tx.timestamp_ms = rng();
    tx.gas_limit = rng() % 1'000'000;
    switch (rng() % 4) {
        case 0: tx.payload = Transfer{testing::random_keypair(rng).public_key, rng()}; break;
        case 1: tx.payload = Deploy{ContractKind::HealthRecord, testing::random_bytes(rng, rng() % 8)}; break;
        case 2:
            tx.payload = Call{PublicKey::from_u8(static_cast<std::uint8_t>(rng())), "add_reading",
                              testing::random_bytes(rng, rng() % 16)};
            break;
        default: tx.payload = Query{PublicKey::from_u8(3), rng(), rng()}; break;
    }
    sign_transaction(tx, kp);
    return tx;
}

struct Fixture {
    KeyPair a0 = testing::key("auth-0");
    KeyPair a1 = testing::key("auth-1");
    std::vector<PublicKey> auths{a0.public_key, a1.public_key};
    GenesisConfig cfg = [&] {
        GenesisConfig c;
        c.authorities = auths;
        c.genesis_timestamp_ms = 1'000;
        return c;
    }();
    Block genesis = make_genesis_block(cfg);
};

Transaction transfer(const KeyPair& from, std::uint64_t nonce, std::uint64_t ts = 5) {
    Transaction tx;
    tx.nonce = nonce;
    tx.timestamp_ms = ts;
    tx.payload = Transfer{PublicKey::from_u8(1), 1};
    tx.gas_limit = 21'000;
    sign_transaction(tx, from);
    return tx;
}

TEST(TxEncoding, RoundTripAndSignature) {
    std::mt19937_64 rng(21);
    auto kp = testing::key("sender");
    for (int i = 0; i < 200; ++i) {
        auto tx = random_tx(rng, kp);
        EXPECT_TRUE(verify_transaction(tx));
        EXPECT_EQ(decode_transaction(canonical_encode(tx)), tx);
    }
}

TEST(TxEncoding, InjectiveOverRandomTransactions) {
    std::mt19937_64 rng(22);
    auto kp = testing::key("sender");
    std::set<Bytes> encodings;
    std::set<Digest> hashes;
    for (int i = 0; i < 10'000; ++i) {
        auto tx = random_tx(rng, kp);
        encodings.insert(canonical_encode(tx));
        hashes.insert(hash_tx(tx));
    }
    EXPECT_EQ(encodings.size(), 10'000u);
    EXPECT_EQ(hashes.size(), 10'000u);
}

TEST(TxEncoding, EveryFieldChangesHash) {
    auto kp = testing::key("sender");
    Transaction base;
    base.nonce = 4;
    base.timestamp_ms = 9;
    base.gas_limit = 100;
    base.payload = Call{PublicKey::from_u8(2), "grant", Bytes{1}};
    sign_transaction(base, kp);
    const auto h = hash_tx(base);

    std::vector<std::function<void(Transaction&)>> mutations{
        [](Transaction& t) { t.nonce += 1; },
        [](Transaction& t) { t.timestamp_ms += 1; },
        [](Transaction& t) { t.gas_limit += 1; },
        [](Transaction& t) { t.sender.bytes[0] ^= 1; },
        [](Transaction& t) { t.signature.bytes[5] ^= 1; },
        [](Transaction& t) { std::get<Call>(t.payload).contract.bytes[0] ^= 1; },
        [](Transaction& t) { std::get<Call>(t.payload).method = "revoke"; },
        [](Transaction& t) { std::get<Call>(t.payload).args.push_back(0); },
        [](Transaction& t) { t.payload = Deploy{}; },
    };
    for (std::size_t i = 0; i < mutations.size(); ++i) {
        auto t = base;
        mutations[i](t);
        EXPECT_NE(hash_tx(t), h) << "mutation " << i;
    }
    auto t = base;
    t.nonce += 1;
    EXPECT_FALSE(verify_transaction(t));
}

TEST(TxEncoding, DecodeRejectsGarbage) {
    EXPECT_THROW(decode_transaction(Bytes{1, 2, 3}), DecodeError);
    auto tx = transfer(testing::key("s"), 0);
    auto enc = canonical_encode(tx);
    enc.push_back(0);
    EXPECT_THROW(decode_transaction(enc), DecodeError);
}

TEST(Genesis, HashIsStablePerConfig) {
    Fixture f;
    EXPECT_EQ(hash_block(make_genesis_block(f.cfg)), hash_block(f.genesis));
    auto other = f.cfg;
    other.chain_id = "other";
    EXPECT_NE(hash_block(make_genesis_block(other)), hash_block(f.genesis));
    EXPECT_EQ(f.genesis.header.height, 0u);
    EXPECT_TRUE(f.genesis.transactions.empty());
}

TEST(BuildBlock, EmptyPendingGivesValidHeartbeat) {
    Fixture f;
    auto b = build_block({}, f.genesis, f.a0, 2'000, kDefaultMaxTxs, f.auths);
    ASSERT_TRUE(b);
    EXPECT_TRUE(b->transactions.empty());
    EXPECT_TRUE(validate_block(*b, f.genesis, f.auths).valid());
}

TEST(BuildBlock, NonAuthorityRefused) {
    Fixture f;
    auto b = build_block({}, f.genesis, testing::key("outsider"), 2'000, kDefaultMaxTxs, f.auths);
    ASSERT_FALSE(b);
    EXPECT_EQ(b.error(), BuildError::NotAuthority);
}

TEST(BuildBlock, CapsAtMaxTxsInSenderNonceOrder) {
    Fixture f;
    std::mt19937_64 rng(23);
    std::vector<KeyPair> senders;
    for (int i = 0; i < 6; ++i) senders.push_back(testing::random_keypair(rng));
    std::vector<Transaction> pending;
    for (std::uint64_t n = 0; n < 100; ++n) {
        for (const auto& s : senders) pending.push_back(transfer(s, 99 - n));
    }
    std::shuffle(pending.begin(), pending.end(), rng);
    auto b = build_block(pending, f.genesis, f.a0, 2'000, 500, f.auths).value();
    ASSERT_EQ(b.transactions.size(), 500u);

    // Oracle: sort everything by (sender, nonce) and take the first 500.
    auto sorted = pending;
    std::stable_sort(sorted.begin(), sorted.end(), [](const Transaction& x, const Transaction& y) {
        return x.sender != y.sender ? x.sender < y.sender : x.nonce < y.nonce;
    });
    sorted.resize(500);
    EXPECT_EQ(b.transactions, sorted);
}

TEST(BuildBlock, ArrivalOrderBreaksTies) {
    Fixture f;
    auto s = testing::key("s");
    auto first = transfer(s, 0, 1);
    auto second = transfer(s, 0, 2);
    auto b = build_block(std::vector{first, second}, f.genesis, f.a0, 2'000, 10, f.auths).value();
    ASSERT_EQ(b.transactions.size(), 2u);
    EXPECT_EQ(b.transactions[0], first);
}

TEST(BuildBlock, QueriesExcluded) {
    Fixture f;
    auto s = testing::key("s");
    Transaction q;
    q.payload = Query{PublicKey::from_u8(1), 0, 10};
    sign_transaction(q, s);
    auto b = build_block(std::vector{q, transfer(s, 0)}, f.genesis, f.a0, 2'000, 10, f.auths).value();
    ASSERT_EQ(b.transactions.size(), 1u);
    EXPECT_FALSE(b.transactions[0].is_query());
}

TEST(BuildBlock, TimestampClampedAboveParent) {
    Fixture f;
    auto b = build_block({}, f.genesis, f.a0, 10, 10, f.auths).value();
    EXPECT_EQ(b.header.timestamp_ms, f.genesis.header.timestamp_ms + 1);
}

TEST(TxRoot, OrderSensitive) {
    auto s = testing::key("s");
    std::vector<Transaction> txs{transfer(s, 0), transfer(s, 1)};
    auto swapped = std::vector<Transaction>{txs[1], txs[0]};
    EXPECT_NE(compute_tx_root(txs), compute_tx_root(swapped));
}

TEST(ValidateBlock, ReportsEachViolation) {
    Fixture f;
    auto s = testing::key("s");
    auto good = build_block(std::vector{transfer(s, 0)}, f.genesis, f.a0, 2'000, 10, f.auths).value();
    ASSERT_TRUE(validate_block(good, f.genesis, f.auths).valid());

    auto resign = [&](Block b, const KeyPair& kp) {
        b.header.proposer = kp.public_key;
        b.header.proposer_signature = crypto::sign_digest(crypto::sha256(encode_unsigned(b.header)), kp);
        return b;
    };

    auto b1 = good;
    b1.header.prev_hash.bytes[0] ^= 1;
    EXPECT_TRUE(validate_block(resign(b1, f.a0), f.genesis, f.auths).has(Violation::BadParentLink));

    auto b2 = good;
    b2.header.height = 5;
    EXPECT_TRUE(validate_block(resign(b2, f.a0), f.genesis, f.auths).has(Violation::BadHeight));

    auto b3 = good;
    b3.header.timestamp_ms = f.genesis.header.timestamp_ms;
    EXPECT_TRUE(validate_block(resign(b3, f.a0), f.genesis, f.auths).has(Violation::BadTimestamp));

    auto outsider = testing::key("outsider");
    auto r4 = validate_block(resign(good, outsider), f.genesis, f.auths);
    EXPECT_TRUE(r4.has(Violation::NotAuthority));
    EXPECT_FALSE(r4.has(Violation::BadProposerSignature));

    auto b5 = good;
    b5.header.proposer_signature.bytes[0] ^= 1;
    EXPECT_EQ(validate_block(b5, f.genesis, f.auths).violations, std::vector{Violation::BadProposerSignature});

    auto b6 = good;
    b6.transactions.push_back(transfer(s, 1));
    EXPECT_EQ(validate_block(b6, f.genesis, f.auths).violations, std::vector{Violation::BadTxRoot});
}

TEST(ValidateBlock, ForgedTransactionSignature) {
    Fixture f;
    auto s = testing::key("s");
    auto forged = transfer(s, 0);
    forged.signature.bytes[10] ^= 1;
    auto b = build_block(std::vector{forged}, f.genesis, f.a0, 2'000, 10, f.auths).value();
    EXPECT_EQ(validate_block(b, f.genesis, f.auths).violations, std::vector{Violation::BadTxSignature});
}

TEST(ValidateBlock, GrandparentLinkRejected) {
    Fixture f;
    auto b1 = build_block({}, f.genesis, f.a0, 2'000, 10, f.auths).value();
    auto b2 = build_block({}, b1, f.a1, 3'000, 10, f.auths).value();
    auto bad = b2;
    bad.header.prev_hash = hash_block(f.genesis);
    bad.header.proposer_signature = crypto::sign_digest(crypto::sha256(encode_unsigned(bad.header)), f.a1);
    EXPECT_EQ(validate_block(bad, b1, f.auths).violations, std::vector{Violation::BadParentLink});
}

TEST(ValidateBlock, AllViolationsReportedInOrder) {
    Fixture f;
    auto b = build_block({}, f.genesis, f.a0, 2'000, 10, f.auths).value();
    b.header.prev_hash.bytes[0] ^= 1;
    b.header.height = 9;
    b.header.timestamp_ms = 0;
    b.header.proposer = testing::key("x").public_key;
    b.transactions.push_back(transfer(testing::key("s"), 0));
    const auto r = validate_block(b, f.genesis, f.auths);
    EXPECT_EQ(r.violations, (std::vector{Violation::BadParentLink, Violation::BadHeight, Violation::BadTimestamp,
                                         Violation::NotAuthority, Violation::BadProposerSignature,
                                         Violation::BadTxRoot}));
    EXPECT_NE(r.summary().find("BadTxRoot"), std::string::npos);
}

TEST(Chain, AppendAndReject) {
    Fixture f;
    Chain c(f.genesis, f.auths);
    auto b1 = build_block({}, f.genesis, f.a0, 2'000, 10, f.auths).value();
    ASSERT_TRUE(c.append_block(b1));
    EXPECT_EQ(c.size(), 2u);
    EXPECT_EQ(c.tip_hash(), hash_block(b1));

    auto bad = build_block({}, f.genesis, f.a1, 3'000, 10, f.auths).value();  // stale parent
    auto r = c.append_block(bad);
    ASSERT_FALSE(r);
    EXPECT_EQ(r.error(), AppendError::ValidationRequired);
    EXPECT_EQ(c.size(), 2u);
    EXPECT_EQ(c.find(hash_block(b1)), &c.at(1));
    EXPECT_EQ(c.find(hash_block(bad)), nullptr);
}

TEST(Chain, ReplayOfRecordedBlocksGivesSameTip) {
    Fixture f;
    std::mt19937_64 rng(24);
    Chain live(f.genesis, f.auths);
    auto s = testing::key("s");
    for (std::uint64_t h = 1; h <= 100; ++h) {
        std::vector<Transaction> txs;
        for (std::uint64_t k = 0; k < rng() % 4; ++k) txs.push_back(transfer(s, h * 10 + k));
        const auto& proposer = h % 2 ? f.a0 : f.a1;
        ASSERT_TRUE(live.append_block(build_block(txs, live.tip(), proposer, 1'000 + h * 1'000, 10, f.auths).value()));
    }
    Chain fresh(f.genesis, f.auths);
    for (std::size_t h = 1; h < live.size(); ++h) ASSERT_TRUE(fresh.append_block(live.at(h)));
    EXPECT_EQ(fresh.tip_hash(), live.tip_hash());
    EXPECT_TRUE(fresh.verify_integrity());
    EXPECT_TRUE(verify_links(live.blocks(), live.tip_hash()));

    auto edited = live.blocks();
    edited[50].transactions.clear();
    EXPECT_FALSE(verify_links(edited));
    auto tail_edit = live.blocks();
    tail_edit.back().header.timestamp_ms += 1;
    EXPECT_TRUE(verify_links(tail_edit));
    EXPECT_FALSE(verify_links(tail_edit, live.tip_hash()));
}

TEST(BlockEncoding, RoundTrip) {
    Fixture f;
    auto s = testing::key("s");
    auto b = build_block(std::vector{transfer(s, 0), transfer(s, 1)}, f.genesis, f.a0, 2'000, 10, f.auths).value();
    EXPECT_EQ(decode_block(canonical_encode(b)), b);
}

}  // namespace
}  // namespace edgelinker::chain
