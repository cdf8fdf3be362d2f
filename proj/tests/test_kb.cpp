#include <doctest.h>

#include <fstream>
#include <sstream>

#include "lesr/kb.hpp"
#include "testkit.hpp"

using namespace lesr;

TEST_CASE("three-line KB") {
  std::istringstream in("a\tp\tb\nb\tp\tc\na\tg\tc\n");
  const auto train = read_triples(in, "mem");
  const auto kb = KnowledgeBase::build(train, {}, {});
  CHECK(kb.num_entities() == 3);
  CHECK(kb.num_relations() == 2);
  const auto p = *kb.find_relation("p");
  const auto a = *kb.find_entity("a"), b = *kb.find_entity("b"), c = *kb.find_entity("c");
  CHECK(kb.matrix(p).entries() ==
        std::vector<MatrixEntry>{{index(a), index(b), 1}, {index(b), index(c), 1}});
  CHECK(kb.transposed(p).at(index(b), index(a)) == 1);
  // First-appearance ids.
  CHECK(index(a) == 0);
  CHECK(index(b) == 1);
  CHECK(index(c) == 2);
}

TEST_CASE("malformed lines name the line number") {
  std::istringstream in("a\tp\tb\n\na\tp\n");
  try {
    read_triples(in, "train.txt");
    FAIL("expected an error");
  } catch (const KbFormatError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("train.txt:3") != std::string::npos);
  }
  std::istringstream four("a\tp\tb\tc\n");
  CHECK_THROWS_AS(read_triples(four, "x"), KbFormatError);
  std::istringstream empty_field("a\t\tb\n");
  CHECK_THROWS_AS(read_triples(empty_field, "x"), KbFormatError);
}

TEST_CASE("names may contain spaces and CRLF endings are accepted") {
  std::istringstream in("New York\tlocated in\tUnited States\r\n");
  const auto t = read_triples(in, "x");
  REQUIRE(t.size() == 1);
  CHECK(t[0].head == "New York");
  CHECK(t[0].tail == "United States");
}

TEST_CASE("empty train split is rejected") {
  CHECK_THROWS_AS(KnowledgeBase::build({}, {}, {}), Error);
}

TEST_CASE("duplicates within a split are dropped") {
  const auto kb = testkit::kb_from({{"a", "p", "b"}, {"a", "p", "b"}, {"b", "p", "a"}});
  CHECK(kb.train().size() == 2);
  CHECK(kb.duplicates_dropped() == 1);
  CHECK(kb.matrix(*kb.find_relation("p")).at(0, 1) == 1);
}

TEST_CASE("entities only in valid/test get zero matrix rows") {
  const auto kb = testkit::kb_from({{"a", "p", "b"}}, {{"c", "p", "a"}}, {{"a", "q", "d"}});
  CHECK(kb.num_entities() == 4);
  CHECK(kb.num_relations() == 2);
  const auto c = *kb.find_entity("c");
  CHECK(kb.matrix(*kb.find_relation("p")).row_nnz(index(c)) == 0);
  CHECK(kb.matrix(*kb.find_relation("q")).empty());
  CHECK(kb.matrix(*kb.find_relation("q")).rows() == 4);
}

TEST_CASE("matrices hold exactly the train facts") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto kb = testkit::random_kb(rng, 12, 3, 0.1);
    std::size_t nnz = 0;
    for (std::size_t r = 0; r < kb.num_relations(); ++r) nnz += kb.matrix(relation(r)).nnz();
    CHECK(nnz == kb.train().size());
    for (const Triple& t : kb.train()) {
      CHECK(kb.matrix(t.relation).at(index(t.head), index(t.tail)) == 1);
      CHECK(kb.is_train_fact(t));
    }
    for (std::size_t i = 0; i < kb.num_entities(); ++i) {
      CHECK(*kb.find_entity(kb.name(entity(i))) == entity(i));
    }
  }
}

TEST_CASE("known tails span every split") {
  const auto kb = testkit::kb_from({{"a", "p", "b"}}, {{"a", "p", "c"}}, {{"a", "p", "d"}, {"a", "q", "b"}});
  const auto a = *kb.find_entity("a");
  const auto tails = kb.known_tails(a, *kb.find_relation("p"));
  CHECK(tails.size() == 3);
  CHECK(std::is_sorted(tails.begin(), tails.end()));
  CHECK(kb.known_tails(*kb.find_entity("b"), *kb.find_relation("p")).empty());
}

TEST_CASE("toy fixture loads") {
  const auto dir = testkit::toy_dir();
  const auto kb = load_kb(dir / "train.txt", dir / "valid.txt", dir / "test.txt");
  CHECK(kb.train().size() == 30);
  CHECK(kb.triples(Split::kValid).size() == 3);
  CHECK(kb.triples(Split::kTest).size() == 3);
  CHECK_THROWS_AS(load_kb(dir / "missing.txt", dir / "valid.txt", dir / "test.txt"), Error);
}

TEST_CASE("fingerprint depends on content only") {
  const auto a = testkit::kb_from({{"a", "p", "b"}});
  const auto b = testkit::kb_from({{"a", "p", "b"}});
  const auto c = testkit::kb_from({{"a", "p", "c"}});
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint() != c.fingerprint());
}
