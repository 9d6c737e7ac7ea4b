#include <gtest/gtest.h>

#include <fstream>

#include <cmath>

#include "cdistill/embedding.hpp"
#include "cdistill/tokenizer.hpp"
#include "support.hpp"

namespace cdistill {
namespace {

TEST(Tokenizer, SplitsWordsAndPunctuation) {
  const auto t = split_tokens("Mary got the milk there.</s>");
  const std::vector<std::string> want{"mary", "got", "the", "milk", "there", ".", "</s>"};
  EXPECT_EQ(t, want);
}

TEST(Tokenizer, EosIsIdZero) {
  Vocabulary v;
  EXPECT_EQ(v.size(), 1u);
  EXPECT_EQ(v.token(kEosId), kEosToken);
  EXPECT_EQ(v.intern("</s>"), kEosId);
}

TEST(Tokenizer, RoundTripNormalizes) {
  Tokenizer tok;
  for (std::string text : {"Context: The kitchen is south of the bathroom.", "t=12. a  maps   to b", "", "Why?\nAnswer: yes</s>"}) {
    const auto seq = tok.encode(text);
    EXPECT_EQ(tok.decode(seq.tokens), normalize_text(text)) << text;
    EXPECT_EQ(tok.encode(tok.decode(seq.tokens)).tokens, seq.tokens);
  }
}

TEST(Tokenizer, GrowsVocabularyOnFirstSight) {
  auto vocab = std::make_shared<Vocabulary>();
  Tokenizer tok(vocab);
  const auto a = tok.encode("apple banana apple");
  EXPECT_EQ(vocab->size(), 3u);
  EXPECT_EQ(a.tokens[0], a.tokens[2]);
  EXPECT_NE(a.tokens[0], a.tokens[1]);
}

TEST(Tokenizer, ConcatJoinsText) {
  Tokenizer tok;
  const auto c = concat(tok.encode("a b"), tok.encode("c"));
  EXPECT_EQ(c.text, "a b c");
  EXPECT_EQ(c.size(), 3u);
  EXPECT_EQ(concat(TokenSequence{}, tok.encode("c")).text, "c");
}

TEST(Tokenizer, VocabularyFileRoundTrip) {
  testing::TempDir dir("vocab");
  Vocabulary v;
  v.intern("hello");
  v.intern("world");
  v.save(dir / "vocab.tsv");
  const auto back = Vocabulary::load(dir / "vocab.tsv");
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back.token(2), "world");
}

TEST(HashEmbedder, Deterministic) {
  const auto a = hash_embedder(16, 42).row(7);
  const auto b = hash_embedder(16, 42).row(7);
  EXPECT_EQ(a, b);
}

TEST(HashEmbedder, SeedsDiffer) {
  const auto e1 = hash_embedder(16, 1);
  const auto e2 = hash_embedder(16, 2);
  bool differs = false;
  for (TokenId t = 0; t < 100; ++t) differs = differs || e1.row(t) != e2.row(t);
  EXPECT_TRUE(differs);
}

TEST(HashEmbedder, UnitNorm) {
  const auto e = hash_embedder(32, 9);
  for (TokenId t = 0; t < 500; ++t) EXPECT_NEAR(e.row(t).norm(), 1.0, 1e-9);
}

TEST(HashEmbedder, RejectsTinyDimension) { EXPECT_THROW(hash_embedder(1, 0), std::invalid_argument); }

TEST(EmbedSequence, LookupSemantics) {
  Matrix rows(3, 2);
  rows << 1, 0, 0, 1, 0.6, 0.8;
  const EmbeddingTable table(rows, 0);
  TokenSequence seq{{2, 1, 2}, ""};
  const auto m = embed_sequence(seq, table);
  ASSERT_EQ(m.rows(), 3);
  EXPECT_EQ(m.row(0), rows.row(2));
  EXPECT_EQ(m.row(1), rows.row(1));
  EXPECT_EQ(m.row(2), rows.row(2));
  EXPECT_EQ(embed_sequence(TokenSequence{}, table).rows(), 0);
  EXPECT_EQ(embed_sequence(TokenSequence{}, table).cols(), 2);
}

TEST(EmbedSequence, OutOfVocabularyNamesIdAndPosition) {
  const EmbeddingTable table(Matrix::Identity(2, 2), 0);
  try {
    embed_sequence(TokenSequence{{0, 1, 5}, ""}, table);
    FAIL() << "expected OutOfVocabularyError";
  } catch (const OutOfVocabularyError& e) {
    EXPECT_EQ(e.id(), 5u);
    EXPECT_EQ(e.position(), 2u);
  }
}

TEST(EmbedSequence, FallbackCoversNewIds) {
  const auto table = EmbeddingTable::from_hash(hash_embedder(8, 3), 4);
  EXPECT_EQ(table.row(100), hash_embedder(8, 3).row(100));
}

TEST(EmbeddingTable, BinaryRoundTrip) {
  testing::TempDir dir("emb");
  std::mt19937_64 rng(5);
  const EmbeddingTable table(testing::gaussian_matrix(7, 5, rng), 3);
  table.save(dir / "t.cdem");
  const auto back = EmbeddingTable::load(dir / "t.cdem");
  EXPECT_EQ(back.rows(), table.rows());
  EXPECT_EQ(back.epoch(), 3u);
}

TEST(EmbeddingTable, RejectsBadMagic) {
  testing::TempDir dir("emb");
  std::ofstream(dir / "bad.cdem") << "NOPE and some bytes";
  EXPECT_THROW(EmbeddingTable::load(dir / "bad.cdem"), std::runtime_error);
}

double cosine(const Vector& a, const Vector& b) { return a.dot(b) / (a.norm() * b.norm()); }

TEST(CooccurrenceRefresh, SharedNeighboursMeanCloserRows) {
  // 1 and 2 both sit next to 5; 3 only ever sits next to 4.
  std::vector<TokenSequence> corpus{{{1, 5}, ""}, {{2, 5}, ""}, {{3, 4}, ""}};
  const auto old = EmbeddingTable::from_hash(hash_embedder(64, 1), 6);
  const auto fresh = cooccurrence_refresh(corpus, old, 1);
  EXPECT_NEAR(cosine(fresh.row(1), fresh.row(2)), 1.0, 1e-12);
  EXPECT_LT(cosine(fresh.row(1), fresh.row(3)), 1.0);
}

TEST(CooccurrenceRefresh, AbsentTokenCopiedAndEpochIncrements) {
  std::vector<TokenSequence> corpus{{{1, 2}, ""}};
  const auto old = EmbeddingTable::from_hash(hash_embedder(8, 1), 4);
  const auto fresh = cooccurrence_refresh(corpus, old, 2);
  EXPECT_EQ(fresh.epoch(), old.epoch() + 1);
  EXPECT_EQ(Vector(fresh.rows().row(3)), Vector(old.rows().row(3)));
  for (TokenId t : {1u, 2u}) EXPECT_NEAR(fresh.row(t).norm(), 1.0, 1e-9);
}

TEST(CooccurrenceRefresh, EmptyCorpusOnlyBumpsEpoch) {
  const auto old = EmbeddingTable::from_hash(hash_embedder(8, 1), 4);
  const auto fresh = cooccurrence_refresh({}, old, 2);
  EXPECT_EQ(fresh.epoch(), 1u);
  EXPECT_EQ(fresh.rows(), old.rows());
}

TEST(CooccurrenceRefresh, RowsUnitNormOrCopied) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<TokenId> pick(1, 30);
  std::vector<TokenSequence> corpus(20);
  for (auto& s : corpus)
    for (int i = 0; i < 8; ++i) s.tokens.push_back(pick(rng));
  const auto old = EmbeddingTable::from_hash(hash_embedder(16, 2), 40);
  const auto fresh = cooccurrence_refresh(corpus, old, 2);
  for (Eigen::Index r = 0; r < fresh.rows().rows(); ++r) {
    const bool copied = fresh.rows().row(r) == old.rows().row(r);
    EXPECT_TRUE(copied || std::abs(fresh.rows().row(r).norm() - 1.0) < 1e-9) << r;
  }
}

}  // namespace
}  // namespace cdistill
