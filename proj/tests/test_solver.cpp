#include <gtest/gtest.h>

#include <cmath>

#include "cdistill/chain.hpp"
#include "cdistill/ngram_solver.hpp"
#include "support.hpp"

namespace cdistill {
namespace {

class SolverFixture : public ::testing::Test {
 protected:
  std::shared_ptr<Vocabulary> vocab = std::make_shared<Vocabulary>();
  Tokenizer tok{vocab};
};

TEST_F(SolverFixture, UntrainedLossIsLogV) {
  const auto x = tok.encode("a b c d e");
  NgramSolver s(vocab);
  const auto losses = s.score(x, tok.encode("c a e"));
  const double v = static_cast<double>(vocab->size());
  for (double l : losses) EXPECT_NEAR(l, std::log(v), 1e-12);
}

TEST_F(SolverFixture, TrainingLowersLoss) {
  const auto x = tok.encode("the cat");
  const auto y = tok.encode("sat on the mat");
  NgramSolver s(vocab);
  const auto before = s.score(x, y);
  const std::vector<double> w(y.size(), 1.0);
  for (int i = 0; i < 100; ++i) s.train_step(x, y, w);
  const auto after = s.score(x, y);
  for (std::size_t i = 0; i < y.size(); ++i) {
    EXPECT_LT(after[i], before[i]);
    EXPECT_GE(after[i], 0.0);
  }
}

TEST_F(SolverFixture, ZeroWeightsLeaveModelUnchanged) {
  const auto x = tok.encode("p q");
  const auto y = tok.encode("r s");
  NgramSolver s(vocab);
  s.train_step(x, y, std::vector<double>{1.0, 1.0});
  const auto digest = s.state_digest();
  const auto scores = s.score(x, y);
  s.train_step(x, y, std::vector<double>{0.0, 0.0});
  EXPECT_EQ(s.state_digest(), digest);
  EXPECT_EQ(s.score(x, y), scores);
}

TEST_F(SolverFixture, WeightLengthMismatch) {
  NgramSolver s(vocab);
  EXPECT_THROW(s.train_step(tok.encode("a"), tok.encode("b c"), std::vector<double>{1.0}), std::invalid_argument);
}

TEST_F(SolverFixture, TailWeightMovesMore) {
  // Two positions with identical (empty) prior counts.
  NgramSolver s(vocab);
  const auto x = tok.encode("u v");
  const auto y = tok.encode("w z");
  const auto before = s.score(x, y);
  s.train_step(x, y, std::vector<double>{0.1, 0.9});
  const auto after = s.score(x, y);
  EXPECT_GT(before[1] - after[1], before[0] - after[0]);
}

TEST_F(SolverFixture, CountAdditivity) {
  const auto x = tok.encode("a b");
  const auto y = tok.encode("c d e");
  NgramSolver twice(vocab), once(vocab);
  const std::vector<double> w{0.3, 0.5, 0.7}, w2{0.6, 1.0, 1.4};
  twice.train_step(x, y, w);
  twice.train_step(x, y, w);
  once.train_step(x, y, w2);
  ASSERT_EQ(twice.counts().size(), once.counts().size());
  for (const auto& [ctx, row] : once.counts()) {
    const auto& other = twice.counts().at(ctx);
    for (const auto& [t, c] : row.next) EXPECT_NEAR(other.next.at(t), c, 1e-12);
  }
}

TEST_F(SolverFixture, OrderIndependence) {
  const auto a = tok.encode("one two three"), b = tok.encode("four five six"), c = tok.encode("two three one");
  NgramSolver s1(vocab), s2(vocab);
  const std::vector<double> w{0.2, 0.4, 0.9};
  for (const auto* t : {&a, &b, &c}) s1.train_step(tok.encode("go"), *t, w);
  for (const auto* t : {&c, &a, &b}) s2.train_step(tok.encode("go"), *t, w);
  for (const auto& [ctx, row] : s1.counts())
    for (const auto& [t, v] : row.next) EXPECT_NEAR(s2.counts().at(ctx).next.at(t), v, 1e-12);
}

TEST_F(SolverFixture, ForcedContinuation) {
  const auto abc = tok.encode("a b c");
  NgramSolver s(vocab);
  s.train_step(TokenSequence{}, abc, std::vector<double>(3, 1.0));
  const auto out = s.generate(tok.encode("a b"), 1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out.tokens[0], abc.tokens[2]);
  EXPECT_EQ(out.text, "c");
}

TEST_F(SolverFixture, UntrainedEmitsLowestId) {
  tok.encode("x y z");
  NgramSolver s(vocab);
  const auto stop = *vocab->find("z");
  const auto out = s.generate(tok.encode("x y"), 6, stop);
  EXPECT_EQ(out.tokens, std::vector<TokenId>(6, 0));
  EXPECT_TRUE(s.generate(tok.encode("x"), 6).empty());  // lowest id is the stop marker
}

TEST_F(SolverFixture, GenerationRespectsBudget) {
  const auto loop = tok.encode("la la la la la la la la");
  NgramSolver s(vocab);
  s.train_step(TokenSequence{}, loop, std::vector<double>(loop.size(), 1.0));
  EXPECT_EQ(s.generate(tok.encode("la la"), 4).size(), 4u);
  EXPECT_THROW(s.generate(tok.encode("la"), 0), std::invalid_argument);
}

TEST_F(SolverFixture, ProbabilitiesSumToOne) {
  const auto seq = tok.encode("a b a c a b b c");
  NgramSolver s(vocab);
  s.train_step(TokenSequence{}, seq, std::vector<double>(seq.size(), 0.7));
  for (const auto& hist : {tok.encode("a b"), tok.encode("c c"), tok.encode("b")}) {
    double total = 0.0;
    for (TokenId t = 0; t < vocab->size(); ++t) total += s.probability(hist.tokens, t);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST_F(SolverFixture, CopyFusionFollowsPassage) {
  const auto passage = tok.encode("t=3. dax maps to lerin");
  NgramOptions opts;
  opts.order = 4;
  opts.fusion_weight = 0.5;
  NgramSolver s(vocab, opts);
  const auto prefix = concat(passage, tok.encode("what is dax"));
  const SolverInput input(prefix, {passage});
  const auto out = s.generate(input, 3, kEosId);
  EXPECT_EQ(out.text, "maps to lerin");
  // Without the passage the untrained model stops at once.
  EXPECT_TRUE(s.generate(prefix, 3).empty());
}

TEST_F(SolverFixture, SaveLoadBitExact) {
  testing::TempDir dir("solver");
  NgramSolver s(vocab, NgramOptions{4, 0.25, 0.5, 0.3, 100});
  for (int i = 0; i < 20; ++i) {
    const auto y = tok.encode("w" + std::to_string(i % 7) + " v" + std::to_string(i % 3) + " end");
    s.train_step(tok.encode("p"), y, std::vector<double>{0.1, 0.9 / 3.0, 0.9});
  }
  s.save(dir / "solver.jsonl");
  const auto back = NgramSolver::load(dir / "solver.jsonl", vocab);
  EXPECT_TRUE(back == s);
  EXPECT_EQ(back.state_digest(), s.state_digest());
  EXPECT_EQ(back.options().order, 4u);
  EXPECT_EQ(back.options().fusion_weight, 0.3);
}

TEST_F(SolverFixture, SelfIoAudit) {
  NgramSolver s(vocab, NgramOptions{3, 0.1, 1.0, 0.0, 4});
  const auto ok = tok.encode("a b c");
  EXPECT_NO_THROW(audit_self_io(s, ok));
  EXPECT_THROW(audit_self_io(s, tok.encode("a b c d e")), SelfIoError);
  EXPECT_THROW(audit_self_io(s, TokenSequence{{9999}, ""}), SelfIoError);
}

TEST_F(SolverFixture, ChainWithEmptyStore) {
  NgramSolver s(vocab);
  const auto seq = tok.encode("where is it ? kitchen");
  s.train_step(TokenSequence{}, seq, std::vector<double>(seq.size(), 1.0));
  const auto x = tok.encode("where is it ?");
  const auto table = EmbeddingTable::from_hash(hash_embedder(16, 0), vocab->size());
  ChainConfig cfg;
  const auto chain = selection_inference_chain(s, x, nullptr, table, cfg);
  EXPECT_EQ(chain.length(), 1u);
  EXPECT_TRUE(chain.hops[0].retrieval.retrieved.empty());
  EXPECT_EQ(chain.prediction(), s.generate(x, cfg.max_tokens));
  EXPECT_TRUE(chain.prior_rollout().empty());
  ASSERT_EQ(chain.posterior_rollout().size(), 1u);
  EXPECT_EQ(chain.posterior_rollout()[0], chain.prediction());
  const MemoryStore empty(16, 0);
  EXPECT_EQ(selection_inference_chain(s, x, &empty, table, cfg).prediction(), chain.prediction());
}

TEST_F(SolverFixture, ChainRetrievesIntoPrefix) {
  NgramSolver s(vocab);
  const auto table = EmbeddingTable::from_hash(hash_embedder(16, 0), 1);
  MemoryStore store(16, 0);
  store.insert(0, tok.encode("where is mary"), "mary is in the hall", tok, table);
  const auto x = tok.encode("where is mary ?");
  ChainConfig cfg;
  const auto chain = selection_inference_chain(s, x, &store, table, cfg);
  ASSERT_EQ(chain.hops[0].retrieval.retrieved.size(), 1u);
  EXPECT_EQ(chain.hops[0].retrieval.assembled_prefix, concat(store.record(0).update, x));
  const auto input = solver_input(chain.hops[0].retrieval);
  ASSERT_EQ(input.passages.size(), 1u);
  EXPECT_EQ(input.passages[0], store.record(0).update);
}

}  // namespace
}  // namespace cdistill
