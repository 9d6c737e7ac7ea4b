#include <gtest/gtest.h>

#include <cmath>

#include "cdistill/pca.hpp"
#include "cdistill/retrieval.hpp"
#include "support.hpp"

namespace cdistill {
namespace {

// Dense reference: right singular vectors of the centered matrix, descending.
Matrix dense_components(const Matrix& x, std::size_t k) {
  const Matrix centered = x.rowwise() - x.colwise().mean();
  Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  return svd.matrixV().leftCols(static_cast<Eigen::Index>(k)).transpose();
}

TEST(Pca, MatchesDenseSvd) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = testing::gaussian_matrix(20, 64, rng);
    const auto ours = pca_components(x, 6);
    const auto ref = dense_components(x, 6);
    for (int i = 0; i < 6; ++i) {
      EXPECT_NEAR(std::abs(ours.row(i).dot(ref.row(i))), 1.0, 1e-6) << trial << "/" << i;
    }
  }
}

TEST(Pca, Orthonormal) {
  std::mt19937_64 rng(4);
  const auto c = pca_components(testing::gaussian_matrix(12, 16, rng), 6);
  const Matrix gram = c * c.transpose();
  EXPECT_LT((gram - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-6);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(c.row(i).norm(), 1.0, 1e-9);
}

TEST(Pca, TwoAxisVariance) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix x = Matrix::Zero(1000, 8);
  for (int i = 0; i < 1000; ++i) {
    x(i, 0) = 2.0 * n(rng);
    x(i, 1) = n(rng);
  }
  const auto c = pca_components(x, 2);
  EXPECT_GT(std::abs(c(0, 0)), 0.99);
  EXPECT_GT(std::abs(c(1, 1)), 0.99);
}

TEST(Pca, SignConvention) {
  std::mt19937_64 rng(6);
  const auto c = pca_components(testing::gaussian_matrix(30, 10, rng), 4);
  for (int i = 0; i < 4; ++i) {
    Eigen::Index arg;
    c.row(i).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(c(i, arg), 0.0);
  }
}

TEST(Pca, RankOneFillsRemainder) {
  Vector v(4);
  v << 3, -1, 0, 2;
  Matrix x(3, 4);
  for (int i = 0; i < 3; ++i) x.row(i) = (i + 1.0) * v.transpose();
  const auto r = principal_components(x, 3);
  EXPECT_EQ(r.rank, 1u);
  const Vector unit = v.normalized();
  EXPECT_NEAR(std::abs(r.components.row(0).dot(unit)), 1.0, 1e-9);
  EXPECT_GT(r.components(0, 0), 0.0);
  const Matrix gram = r.components * r.components.transpose();
  EXPECT_LT((gram - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Pca, EmptyInput) { EXPECT_THROW(pca_components(Matrix(0, 4), 2), std::invalid_argument); }

class QueryFixture : public ::testing::Test {
 protected:
  Tokenizer tok;
  TokenSequence x = tok.encode("context : the kitchen is south of the bathroom . question : what is north ?");
  EmbeddingTable table = EmbeddingTable::from_hash(hash_embedder(32, 5), 64);
};

TEST_F(QueryFixture, EvalIsKeyThenTopPca) {
  const auto qs = select_queries(x, table, RetrievalMode::eval, 4, 6, 0);
  ASSERT_EQ(qs.queries.size(), 4u);
  EXPECT_EQ(qs.provenance[0].label(), "key");
  EXPECT_EQ(qs.provenance[1].label(), "pca[0]");
  EXPECT_EQ(qs.provenance[3].label(), "pca[2]");
  EXPECT_LT((qs.queries[0] - compute_key(x, {}, table)).norm(), 1e-12);
  const auto pcs = pca_components(embed_sequence(x, table), 6);
  for (int i = 0; i < 3; ++i) EXPECT_LT((qs.queries[i + 1] - pcs.row(i).transpose()).norm(), 1e-12);
  for (const auto& q : qs.queries) EXPECT_NEAR(q.norm(), 1.0, 1e-6);
}

TEST_F(QueryFixture, TrainIsSeededSampleWithoutReplacement) {
  const auto a = select_queries(x, table, RetrievalMode::train, 4, 6, 17);
  const auto b = select_queries(x, table, RetrievalMode::train, 4, 6, 17);
  EXPECT_EQ(a.provenance, b.provenance);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) EXPECT_FALSE(a.provenance[i] == a.provenance[j]);
}

TEST_F(QueryFixture, ShortInputStillGetsFullSet) {
  const auto tiny = tok.encode("where");
  const auto qs = select_queries(tiny, table, RetrievalMode::eval, 4, 6, 0);
  EXPECT_EQ(qs.queries.size(), 4u);
}

TEST_F(QueryFixture, Errors) {
  EXPECT_THROW(select_queries({}, table, RetrievalMode::eval, 4, 6, 0), std::invalid_argument);
  EXPECT_THROW(select_queries(x, table, RetrievalMode::eval, 8, 6, 0), std::invalid_argument);
}

// Four records whose keys are e1..e4.
struct OrthogonalStore {
  Tokenizer tok;
  EmbeddingTable table{[] {
    Matrix r = Matrix::Zero(64, 8);
    for (int i = 1; i <= 4; ++i) r(i, i) = 1.0;
    return r;
  }(), 0};
  MemoryStore store{8, 0};
  OrthogonalStore() {
    tok.encode("k1 k2 k3 k4");
    for (TokenId i = 1; i <= 4; ++i) store.insert(i, TokenSequence{{i}, ""}, "fact " + std::to_string(i), tok, table);
  }
};

TEST(RetrieveAndAssemble, OrthogonalKeysInQueryOrder) {
  OrthogonalStore s;
  QuerySet qs;
  for (int i : {3, 1, 4, 2}) qs.queries.push_back(Vector::Unit(8, i));
  const auto x = s.tok.encode("what now ?");
  const auto bundle = retrieve_and_assemble(s.store, qs, x);
  ASSERT_EQ(bundle.retrieved.size(), 4u);
  TokenSequence want;
  const std::size_t expected_ids[] = {2, 0, 3, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(bundle.retrieved[i].record_id, expected_ids[i]);
    want = concat(want, s.store.record(expected_ids[i]).update);
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(bundle.retrieved[i].retrieval_order, i);
  EXPECT_EQ(bundle.assembled_prefix, concat(want, x));
}

TEST(RetrieveAndAssemble, Deduplicates) {
  OrthogonalStore s;
  QuerySet qs;
  for (int i = 0; i < 4; ++i) qs.queries.push_back(Vector::Unit(8, 1));
  const auto x = s.tok.encode("q");
  const auto bundle = retrieve_and_assemble(s.store, qs, x);
  ASSERT_EQ(bundle.retrieved.size(), 1u);
  EXPECT_EQ(bundle.assembled_prefix, concat(s.store.record(0).update, x));
}

TEST(RetrieveAndAssemble, EmptyStore) {
  Tokenizer tok;
  const MemoryStore store(8, 0);
  QuerySet qs;
  qs.queries.push_back(Vector::Unit(8, 0));
  const auto x = tok.encode("hello there");
  const auto bundle = retrieve_and_assemble(store, qs, x);
  EXPECT_TRUE(bundle.retrieved.empty());
  EXPECT_EQ(bundle.assembled_prefix, x);
}

TEST(RetrieveAndAssemble, EvalPipelineDeterministic) {
  OrthogonalStore s;
  const auto x = s.tok.encode("k2 k3 k2 k1");
  const auto fallback = EmbeddingTable(s.table.rows(), 0, hash_embedder(8, 1));
  const auto a = retrieve_and_assemble(s.store, select_queries(x, fallback, RetrievalMode::eval, 4, 6, 1), x);
  const auto b = retrieve_and_assemble(s.store, select_queries(x, fallback, RetrievalMode::eval, 4, 6, 2), x);
  EXPECT_EQ(a.assembled_prefix, b.assembled_prefix);
}

}  // namespace
}  // namespace cdistill
