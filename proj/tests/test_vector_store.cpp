#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "shortlist/vector_store.hpp"
#include "test_util.hpp"

using namespace shortlist;

namespace {

EmbeddingStore from_text(const std::string& text, std::optional<std::size_t> dim = std::nullopt) {
  std::istringstream in(text);
  return read_store(in, "mem", dim);
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::IoError;
}

}  // namespace

TEST(VectorStore, LoadsTwoRecords) {
  auto s = from_text(R"({"id":"a","vector":[1,0,0],"kind":"query"}
{"id":"b","vector":[0,2,0],"kind":"candidate","meta":{"title":"x"}}
)");
  EXPECT_EQ(s.dim(), 3u);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.record("a").kind, RecordKind::Query);
  EXPECT_EQ(s.record("b").meta_or("title"), "x");
}

TEST(VectorStore, NormalizesAtIngest) {
  auto s = from_text(R"({"id":"v","vector":[3,4],"kind":"candidate"})");
  auto v = get_vector(s, "v");
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[1], 0.8);
}

TEST(VectorStore, DuplicateIdRejected) {
  EXPECT_EQ(code_of([] {
              from_text(R"({"id":"jd_1","vector":[1,0],"kind":"query"}
{"id":"jd_1","vector":[0,1],"kind":"query"})");
            }),
            ErrorCode::DuplicateId);
}

TEST(VectorStore, ZeroVectorRejected) {
  EXPECT_EQ(code_of([] { from_text(R"({"id":"z","vector":[0,0],"kind":"query"})"); }), ErrorCode::ZeroVector);
}

TEST(VectorStore, MixedDimensionsRejectedWithLine) {
  try {
    from_text("{\"id\":\"a\",\"vector\":[1,0],\"kind\":\"query\"}\n{\"id\":\"b\",\"vector\":[1,0,0],\"kind\":\"query\"}\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
    EXPECT_EQ(e.context(), "mem:2");
  }
}

TEST(VectorStore, ExpectDimEnforced) {
  EXPECT_EQ(code_of([] { from_text(R"({"id":"a","vector":[1,0],"kind":"query"})", 3); }),
            ErrorCode::DimensionMismatch);
}

TEST(VectorStore, MalformedLineReportsLineNumber) {
  try {
    from_text("{\"id\":\"a\",\"vector\":[1,0],\"kind\":\"query\"}\n\n{\"id\":\"b\",\"vector\":[1,\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedRecord);
    EXPECT_EQ(e.context(), "mem:3");
  }
  EXPECT_EQ(code_of([] { from_text(R"({"id":"a","vector":[1,0],"kind":"jd"})"); }), ErrorCode::MalformedRecord);
  EXPECT_EQ(code_of([] { from_text(R"({"vector":[1,0]})"); }), ErrorCode::MalformedRecord);
  EXPECT_EQ(code_of([] { from_text(R"({"id":"a","vector":[1,"x"]})"); }), ErrorCode::MalformedRecord);
}

TEST(VectorStore, OneDimensionalRejected) {
  EXPECT_EQ(code_of([] { from_text(R"({"id":"a","vector":[1],"kind":"query"})"); }),
            ErrorCode::DimensionMismatch);
}

TEST(VectorStore, HeaderCommentLinesSkipped) {
  auto s = from_text("# dim=2 model=m\n{\"id\":\"a\",\"vector\":[1,1],\"kind\":\"query\"}\n");
  EXPECT_EQ(s.size(), 1u);
}

TEST(VectorStore, UnknownIdThrows) {
  auto s = from_text(R"({"id":"a","vector":[1,1],"kind":"query"})");
  EXPECT_EQ(code_of([&] { get_vector(s, "nope"); }), ErrorCode::UnknownId);
}

TEST(VectorStore, TeacherDefaultsToVector) {
  auto s = from_text(R"({"id":"a","vector":[1,1],"kind":"query"})");
  auto v = s.vector("a");
  auto t = s.teacher("a");
  EXPECT_EQ(Vec(v.begin(), v.end()), Vec(t.begin(), t.end()));
}

TEST(VectorStore, ReloadIsBitwiseEqual) {
  auto dir = testutil::scratch_dir("store_reload");
  std::mt19937_64 rng(1);
  std::vector<EmbeddingRecord> rs;
  for (int i = 0; i < 20; ++i) rs.push_back(testutil::rec("c" + std::to_string(i), testutil::random_vec(rng, 7)));
  auto s = EmbeddingStore::from_records(rs);
  save_store(dir / "s.jsonl", s);
  auto a = load_store(dir / "s.jsonl");
  auto b = load_store(dir / "s.jsonl");
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.fingerprint(), s.fingerprint());
  for (const auto& r : s.records()) {
    auto v = a.vector(r.id);
    EXPECT_EQ(Vec(v.begin(), v.end()), r.vector);
  }
}

TEST(VectorStore, AllVectorsUnitNorm) {
  std::mt19937_64 rng(2);
  std::vector<EmbeddingRecord> rs;
  for (int i = 0; i < 100; ++i) {
    rs.push_back(testutil::rec("c" + std::to_string(i), testutil::random_vec(rng, 5, 1e3)));
  }
  auto s = EmbeddingStore::from_records(rs);
  for (const auto& r : s.records()) EXPECT_NEAR(l2_norm(r.vector), 1.0, 1e-12);
}

TEST(VectorStore, MissingFileIsIoError) {
  EXPECT_EQ(code_of([] { load_store("/nonexistent/store.jsonl"); }), ErrorCode::IoError);
}
