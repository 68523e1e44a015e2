#include <gtest/gtest.h>

#include <deque>
#include <map>
#include <memory>

#include "edgelinker/consensus.hpp"
#include "edgelinker/genesis.hpp"
#include "test_util.hpp"

namespace edgelinker::consensus {
namespace {

AuthorityConfig config_of(std::size_t n) {
    AuthorityConfig cfg;
    for (std::size_t i = 0; i < n; ++i) cfg.authorities.push_back(testing::key("v" + std::to_string(i)).public_key);
    return cfg;
}

TEST(Proposer, RoundRobinFormula) {
    auto cfg = config_of(4);
    EXPECT_EQ(select_proposer(0, 0, cfg), cfg.authorities[0]);
    EXPECT_EQ(select_proposer(0, 1, cfg), cfg.authorities[1]);
    EXPECT_EQ(select_proposer(5, 2, cfg), cfg.authorities[3]);
}

TEST(Proposer, FairOverManyHeights) {
    for (std::size_t n : {1u, 3u, 4u, 7u, 10u}) {
        auto cfg = config_of(n);
        std::map<PublicKey, std::size_t> count;
        for (std::uint64_t h = 0; h < 1000; ++h) ++count[select_proposer(h, 0, cfg)];
        EXPECT_EQ(count.size(), n);
        for (const auto& [pk, c] : count) {
            EXPECT_GE(c, 1000 / n);
            EXPECT_LE(c, 1000 / n + 1);
        }
    }
}

TEST(AuthorityConfig, QuorumsIntersect) {
    for (std::size_t n = 1; n <= 40; ++n) {
        auto cfg = config_of(n);
        EXPECT_EQ(cfg.f(), (n - 1) / 3);
        if (n % 3 == 1) EXPECT_EQ(cfg.quorum(), 2 * cfg.f() + 1);
        EXPECT_LE(cfg.quorum(), n);
        // Liveness with f authorities silent.
        EXPECT_LE(cfg.quorum(), n - cfg.f());
        EXPECT_GE(2 * cfg.quorum(), n + cfg.f() + 1) << n;
        // Smallest quorum size that still intersects in f+1.
        EXPECT_LT(2 * (cfg.quorum() - 1), n + cfg.f() + 1) << n;
    }
}

TEST(AuthorityConfig, TimeoutDoublesPerRound) {
    auto cfg = config_of(4);
    cfg.round_timeout_us = 2'000'000;
    EXPECT_EQ(cfg.timeout_for_round(0), 2'000'000u);
    EXPECT_EQ(cfg.timeout_for_round(1), 4'000'000u);
    EXPECT_EQ(cfg.timeout_for_round(3), 16'000'000u);
    EXPECT_GE(cfg.timeout_for_round(1000), cfg.timeout_for_round(20));
}

TEST(Message, SignEncodeRoundTrip) {
    auto kp = testing::key("v0");
    ConsensusMessage m;
    m.phase = Phase::Commit;
    m.height = 3;
    m.round = 2;
    m.block_hash = crypto::sha256(Bytes{1});
    m.prepared_round = 1;
    sign_message(m, kp);
    EXPECT_EQ(m.sender, kp.public_key);
    EXPECT_TRUE(verify_message(m));
    EXPECT_EQ(decode_consensus_message(canonical_encode(m)), m);
    auto t = m;
    t.round = 3;
    EXPECT_FALSE(verify_message(t));
}

// Drives a set of engines over an in-memory FIFO bus.
struct Cluster {
    AuthorityConfig cfg;
    std::vector<crypto::KeyPair> keys;
    GenesisConfig genesis;
    std::vector<std::unique_ptr<ConsensusEngine>> engines;
    std::vector<chain::Chain> chains;
    std::set<std::size_t> down;
    std::deque<std::pair<std::size_t, ConsensusMessage>> bus;  // (recipient, msg)
    std::vector<Misbehavior> misbehavior;
    TimeUs now = 0;

    explicit Cluster(std::size_t n) : cfg(config_of(n)) {
        for (std::size_t i = 0; i < n; ++i) keys.push_back(testing::key("v" + std::to_string(i)));
        genesis.authorities = cfg.authorities;
        genesis.genesis_timestamp_ms = 1;
        for (std::size_t i = 0; i < n; ++i) {
            engines.push_back(std::make_unique<ConsensusEngine>(cfg, keys[i]));
            chains.emplace_back(make_genesis_block(genesis), cfg.authorities);
        }
    }

    std::size_t index(const PublicKey& pk) const { return *cfg.index_of(pk); }

    void route(std::size_t from, Step&& s) {
        for (auto& o : s.outbound) {
            for (std::size_t j = 0; j < engines.size(); ++j) {
                if (j == from || (o.to && *o.to != cfg.authorities[j])) continue;
                bus.emplace_back(j, o.msg);
            }
        }
        for (auto& m : s.misbehavior) misbehavior.push_back(m);
        if (s.finalized) {
            ASSERT_TRUE(chains[from].append_block(*s.finalized));
            route(from, engines[from]->start_height(s.finalized->header.height + 1, chains[from], now));
        }
    }

    void start() {
        for (std::size_t i = 0; i < engines.size(); ++i) {
            if (!down.contains(i)) route(i, engines[i]->start_height(1, chains[i], now));
        }
    }

    void propose_if_due() {
        for (std::size_t i = 0; i < engines.size(); ++i) {
            if (down.contains(i) || !engines[i]->proposal_due()) continue;
            route(i, engines[i]->propose(chains[i], now, [&, i] {
                return chain::build_block({}, chains[i].tip(), keys[i], 1 + now / 1000 + 1, 10, cfg.authorities).value();
            }));
        }
    }

    void drain() {
        while (!bus.empty()) {
            auto [to, msg] = std::move(bus.front());
            bus.pop_front();
            if (down.contains(to)) continue;
            route(to, engines[to]->on_message(msg, chains[to], now));
        }
    }

    // Runs until every live engine reaches `height`, advancing time to the
    // earliest deadline when stuck.
    bool run_to(std::uint64_t height, int max_steps = 200) {
        for (int step = 0; step < max_steps; ++step) {
            propose_if_due();
            drain();
            bool all = true;
            TimeUs next = ~TimeUs{0};
            for (std::size_t i = 0; i < engines.size(); ++i) {
                if (down.contains(i)) continue;
                if (chains[i].height() < height) all = false;
                next = std::min(next, engines[i]->deadline_us());
            }
            if (all) return true;
            if (!bus.empty()) continue;
            bool due = false;
            for (std::size_t i = 0; i < engines.size(); ++i) due |= !down.contains(i) && engines[i]->proposal_due();
            if (due) continue;
            now = std::max(now + 1, next);
            for (std::size_t i = 0; i < engines.size(); ++i) {
                if (!down.contains(i)) route(i, engines[i]->on_timeout(chains[i], now));
            }
        }
        return false;
    }
};

TEST(Engine, FourNodesFinalizeOneBlock) {
    Cluster c(4);
    c.start();
    ASSERT_TRUE(c.run_to(1));
    for (std::size_t i = 1; i < 4; ++i) EXPECT_EQ(c.chains[i].tip_hash(), c.chains[0].tip_hash());
    EXPECT_EQ(c.chains[0].tip().header.proposer, c.cfg.authorities[1]);  // (1 + 0) mod 4
    EXPECT_TRUE(c.misbehavior.empty());
}

TEST(Engine, ManyHeightsStayConsistent) {
    Cluster c(7);
    c.start();
    ASSERT_TRUE(c.run_to(20, 2000));
    for (std::size_t i = 1; i < 7; ++i) {
        for (std::uint64_t h = 1; h <= 20; ++h) EXPECT_EQ(c.chains[i].hash_at(h), c.chains[0].hash_at(h));
    }
}

TEST(Engine, CrashedProposerReplacedAfterTimeout) {
    Cluster c(4);
    c.down.insert(1);  // proposer of height 1, round 0
    c.start();
    ASSERT_TRUE(c.run_to(1));
    EXPECT_EQ(c.chains[0].tip().header.proposer, c.cfg.authorities[2]);
    EXPECT_GE(c.engines[0]->counters().round_changes, 1u);
}

TEST(Engine, InvalidProposalGetsNoPrepare) {
    Cluster c(4);
    c.start();
    auto& proposer = c.keys[1];
    auto b = chain::build_block({}, c.chains[1].tip(), proposer, 10, 10, c.cfg.authorities).value();
    b.header.tx_root.bytes[0] ^= 1;
    b.header.proposer_signature = crypto::sign_digest(crypto::sha256(chain::encode_unsigned(b.header)), proposer);
    ConsensusMessage m;
    m.phase = Phase::PrePrepare;
    m.height = 1;
    m.block_hash = chain::hash_block(b);
    m.block = b;
    sign_message(m, proposer);

    auto step = c.engines[0]->on_message(m, c.chains[0], 0);
    EXPECT_TRUE(step.outbound.empty());
    ASSERT_EQ(step.misbehavior.size(), 1u);
    EXPECT_EQ(step.misbehavior[0].kind, MisbehaviorKind::InvalidBlock);
    EXPECT_EQ(step.misbehavior[0].offender, proposer.public_key);
}

TEST(Engine, WrongProposerIgnored) {
    Cluster c(4);
    c.start();
    auto& not_proposer = c.keys[2];
    auto b = chain::build_block({}, c.chains[2].tip(), not_proposer, 10, 10, c.cfg.authorities).value();
    ConsensusMessage m;
    m.phase = Phase::PrePrepare;
    m.height = 1;
    m.block_hash = chain::hash_block(b);
    m.block = b;
    sign_message(m, not_proposer);
    auto step = c.engines[0]->on_message(m, c.chains[0], 0);
    EXPECT_TRUE(step.outbound.empty());
    ASSERT_FALSE(step.misbehavior.empty());
    EXPECT_EQ(step.misbehavior[0].kind, MisbehaviorKind::WrongProposer);
}

TEST(Engine, SecondConflictingPrepareIgnored) {
    Cluster c(4);
    c.start();
    auto vote = [&](const Digest& h) {
        ConsensusMessage m;
        m.phase = Phase::Prepare;
        m.height = 1;
        m.block_hash = h;
        sign_message(m, c.keys[3]);
        return m;
    };
    const auto h1 = crypto::sha256(Bytes{1}), h2 = crypto::sha256(Bytes{2});
    auto s1 = c.engines[0]->on_message(vote(h1), c.chains[0], 0);
    EXPECT_TRUE(s1.misbehavior.empty());
    auto s2 = c.engines[0]->on_message(vote(h2), c.chains[0], 0);
    ASSERT_EQ(s2.misbehavior.size(), 1u);
    EXPECT_EQ(s2.misbehavior[0].kind, MisbehaviorKind::Equivocation);
    EXPECT_EQ(c.engines[0]->state().prepare_votes.at(0).at(c.keys[3].public_key), h1);
}

TEST(Engine, NonAuthorityAndBadSignatureDropped) {
    Cluster c(4);
    c.start();
    ConsensusMessage m;
    m.phase = Phase::Prepare;
    m.height = 1;
    m.block_hash = crypto::sha256(Bytes{1});
    sign_message(m, testing::key("outsider"));
    auto s = c.engines[0]->on_message(m, c.chains[0], 0);
    ASSERT_FALSE(s.misbehavior.empty());
    EXPECT_EQ(s.misbehavior[0].kind, MisbehaviorKind::NonAuthority);

    sign_message(m, c.keys[2]);
    m.round = 1;  // invalidates the signature
    auto s2 = c.engines[0]->on_message(m, c.chains[0], 0);
    ASSERT_FALSE(s2.misbehavior.empty());
    EXPECT_EQ(s2.misbehavior[0].kind, MisbehaviorKind::BadSignature);
    EXPECT_GE(c.engines[0]->counters().dropped + c.engines[0]->counters().invalid, 2u);
}

TEST(Engine, RoundChangeCarriesLock) {
    Cluster c(4);
    c.start();
    // Proposer 1 proposes; node 0 sees the proposal and two other PREPAREs.
    auto step = c.engines[1]->propose(c.chains[1], 0, [&] {
        return chain::build_block({}, c.chains[1].tip(), c.keys[1], 10, 10, c.cfg.authorities).value();
    });
    ConsensusMessage proposal;
    for (auto& o : step.outbound) {
        if (o.msg.phase == Phase::PrePrepare) proposal = o.msg;
    }
    ASSERT_TRUE(proposal.block);
    auto& e0 = *c.engines[0];
    auto s = e0.on_message(proposal, c.chains[0], 0);
    for (std::size_t v : {1u, 2u}) {
        ConsensusMessage p;
        p.phase = Phase::Prepare;
        p.height = 1;
        p.block_hash = proposal.block_hash;
        sign_message(p, c.keys[v]);
        e0.on_message(p, c.chains[0], 0);
    }
    ASSERT_TRUE(e0.state().locked);
    EXPECT_EQ(e0.state().locked->hash, proposal.block_hash);

    auto t = e0.on_timeout(c.chains[0], e0.deadline_us());
    bool found = false;
    for (const auto& o : t.outbound) {
        if (o.msg.phase != Phase::RoundChange) continue;
        found = true;
        EXPECT_EQ(o.msg.round, 1u);
        EXPECT_EQ(o.msg.block_hash, proposal.block_hash);
        EXPECT_EQ(o.msg.prepared_round, 0u);
        ASSERT_TRUE(o.msg.block);
    }
    EXPECT_TRUE(found);
    EXPECT_EQ(e0.state().round, 1u);
}

TEST(Engine, TimeoutBeforeDeadlineIsNoop) {
    Cluster c(4);
    c.start();
    auto s = c.engines[0]->on_timeout(c.chains[0], c.engines[0]->deadline_us() - 1);
    EXPECT_TRUE(s.outbound.empty());
    EXPECT_EQ(c.engines[0]->state().round, 0u);
}

}  // namespace
}  // namespace edgelinker::consensus
