#include <gtest/gtest.h>

#include <random>

#include "sescore/span_ledger.hpp"

using namespace sescore;

TEST(Ledger, FreshQArray) {
  EXPECT_EQ(Ledger(5).q_array(), (std::vector<std::size_t>{5, 4, 3, 2, 1}));
  EXPECT_TRUE(Ledger(0).q_array().empty());
  EXPECT_EQ(Ledger(1).q(0), 1u);
  EXPECT_EQ(Ledger(6).q(2), 4u);
  EXPECT_EQ(Ledger(6).q(6), 0u);
}

TEST(Ledger, QStopsAtProtectedRun) {
  // Replace [3,2) with two tokens: positions 3 and 4 become protected.
  const Ledger l = Ledger(6).apply(EditKind::Replace, {3, 2}, 2);
  EXPECT_EQ(l.q(2), 1u);
  EXPECT_EQ(l.q(4), 0u);
  EXPECT_EQ(l.q(5), 1u);
  EXPECT_EQ(l.q_array(), (std::vector<std::size_t>{3, 2, 1, 0, 0, 1}));
}

TEST(Ledger, ReservationBlocksBeforeRemap) {
  const auto reserved = Ledger(5).try_reserve(EditKind::Delete, {1, 2});
  ASSERT_TRUE(reserved);
  EXPECT_FALSE(reserved->accepts(EditKind::Replace, {1, 1}));
  EXPECT_TRUE(reserved->accepts(EditKind::Delete, {4, 1}));
  EXPECT_THROW(reserved->try_reserve(EditKind::Delete, {4, 1}), std::logic_error);
}

TEST(Ledger, InsertShiftsLaterSpans) {
  Ledger l = Ledger(5).apply(EditKind::Replace, {4, 1}, 1);
  l = l.apply(EditKind::Insert, {3, 0}, 2);
  EXPECT_EQ(l.sentence_len(), 7u);
  EXPECT_EQ(l.protected_spans(), (std::vector<Span>{{3, 2}, {6, 1}}));
  EXPECT_EQ(l.edits_applied(), 2u);
}

TEST(Ledger, DeleteLeavesMarker) {
  const Ledger l = Ledger(5).apply(EditKind::Delete, {1, 2}, 0);
  EXPECT_EQ(l.sentence_len(), 3u);
  EXPECT_EQ(l.protected_spans(), (std::vector<Span>{{1, 0}}));
  EXPECT_FALSE(l.can_insert_at(1));
  EXPECT_TRUE(l.can_insert_at(0));
  EXPECT_TRUE(l.can_insert_at(2));
  // The token that slid into the hole is frozen.
  EXPECT_EQ(l.q(1), 0u);
  EXPECT_EQ(l.q(0), 1u);
  EXPECT_EQ(l.q(2), 1u);
}

TEST(Ledger, InsertAtZeroThenDeleteAtEnd) {
  Ledger l = Ledger(4).apply(EditKind::Insert, {0, 0}, 1);
  ASSERT_TRUE(l.accepts(EditKind::Delete, {4, 1}));
  l = l.apply(EditKind::Delete, {4, 1}, 0);
  EXPECT_EQ(l.sentence_len(), 4u);
  EXPECT_EQ(l.protected_spans(), (std::vector<Span>{{0, 1}, {4, 0}}));
  EXPECT_TRUE(l.well_formed());
  EXPECT_FALSE(l.can_insert_at(4));
}

TEST(Ledger, AdjacentInsertionAllowedInteriorRejected) {
  const Ledger l = Ledger(6).apply(EditKind::Replace, {2, 1}, 3);  // protected [2,3)
  EXPECT_TRUE(l.can_insert_at(2));
  EXPECT_FALSE(l.can_insert_at(3));
  EXPECT_FALSE(l.can_insert_at(4));
  EXPECT_TRUE(l.can_insert_at(5));
  EXPECT_FALSE(l.can_insert_at(9));
}

TEST(Ledger, SwapProtectsBothEndsOnly) {
  const Ledger l = Ledger(6).apply(EditKind::Swap, {1, 3}, 0);
  EXPECT_EQ(l.protected_spans(), (std::vector<Span>{{1, 1}, {4, 1}}));
  EXPECT_TRUE(l.accepts(EditKind::Delete, {2, 2}));
  EXPECT_FALSE(l.accepts(EditKind::Swap, {0, 1}));
  EXPECT_FALSE(l.accepts(EditKind::Swap, {5, 1}));  // second position out of range
}

TEST(Ledger, StrictQNeedsOneSpareToken) {
  EXPECT_TRUE(Ledger(3).accepts(EditKind::Delete, {1, 2}));
  EXPECT_FALSE(Ledger(3, true).accepts(EditKind::Delete, {1, 2}));
  EXPECT_TRUE(Ledger(4, true).accepts(EditKind::Delete, {1, 2}));
}

TEST(Ledger, RejectsMalformedSpans) {
  const Ledger l(5);
  EXPECT_FALSE(l.accepts(EditKind::Delete, {2, 0}));
  EXPECT_FALSE(l.accepts(EditKind::Delete, {4, 2}));
  EXPECT_FALSE(l.accepts(EditKind::Insert, {2, 1}));
  EXPECT_FALSE(l.accepts(EditKind::Insert, {6, 0}));
  EXPECT_THROW(l.apply(EditKind::Delete, {4, 2}, 0), std::logic_error);
}

namespace {

// Token-level model of the same rules, kept independent of Ledger: which
// tokens are frozen and which insertion points are blocked.
struct Model {
  std::vector<bool> frozen;
  std::vector<bool> blocked;  // size L + 1

  explicit Model(std::size_t n) : frozen(n, false), blocked(n + 1, false) {}

  std::size_t size() const { return frozen.size(); }

  bool accepts(EditKind k, Span s) const {
    switch (k) {
      case EditKind::Insert: return s.len == 0 && s.start <= size() && !blocked[s.start];
      case EditKind::Delete:
      case EditKind::Replace:
        if (s.len == 0 || s.end() > size()) return false;
        for (std::size_t i = s.start; i < s.end(); ++i)
          if (frozen[i]) return false;
        return true;
      case EditKind::Swap:
        if (s.len == 0 || s.end() >= size()) return false;
        for (std::size_t i = s.start; i <= s.end(); ++i)
          if (frozen[i]) return false;
        return true;
    }
    return false;
  }

  void apply(EditKind k, Span s, std::size_t n) {
    const auto b = static_cast<std::ptrdiff_t>(s.start);
    if (k == EditKind::Swap) {
      frozen[s.start] = frozen[s.end()] = true;
      return;
    }
    const std::size_t removed = k == EditKind::Insert ? 0 : s.len;
    const std::size_t added = k == EditKind::Delete ? 0 : n;
    frozen.erase(frozen.begin() + b, frozen.begin() + b + static_cast<std::ptrdiff_t>(removed));
    frozen.insert(frozen.begin() + b, added, true);
    if (k == EditKind::Delete) {
      // Points s..s+len collapse into one blocked point; the token after it freezes.
      blocked.erase(blocked.begin() + b + 1, blocked.begin() + b + 1 + static_cast<std::ptrdiff_t>(removed));
      blocked[s.start] = true;
      if (s.start < frozen.size()) frozen[s.start] = true;
    } else if (k == EditKind::Insert) {
      // Point s splits in two open boundaries around added-1 blocked interior points.
      blocked.insert(blocked.begin() + b + 1, false);
      blocked.insert(blocked.begin() + b + 1, added - 1, true);
    } else {
      blocked.erase(blocked.begin() + b + 1, blocked.begin() + b + static_cast<std::ptrdiff_t>(removed));
      blocked.insert(blocked.begin() + b + 1, added - 1, true);
    }
  }
};

}  // namespace

TEST(Ledger, RandomSequencesMatchTokenModelAndStayDisjoint) {
  std::mt19937 gen(2024);
  std::size_t accepted = 0;
  for (int seq = 0; seq < 10000; ++seq) {
    const std::size_t L = std::uniform_int_distribution<std::size_t>(0, 25)(gen);
    const bool strict = seq % 5 == 0;
    Ledger ledger(L, strict);
    Model model(L);
    for (int step = 0; step < 12; ++step) {
      const auto kind = kAllEditKinds[std::uniform_int_distribution<int>(0, 3)(gen)];
      const std::size_t n = ledger.sentence_len();
      const std::size_t start = std::uniform_int_distribution<std::size_t>(0, n + 1)(gen);
      std::size_t len = kind == EditKind::Insert ? 0 : std::uniform_int_distribution<std::size_t>(0, 4)(gen);
      const Span span{start, len};
      bool expect = model.accepts(kind, span);
      if (strict && expect && kind != EditKind::Insert) expect = ledger.q(start) > len;
      ASSERT_EQ(ledger.accepts(kind, span), expect)
          << "seq " << seq << " step " << step << " kind " << to_string(kind) << " span [" << start << "," << len << ")";
      if (!expect) continue;
      const std::size_t ins = std::uniform_int_distribution<std::size_t>(1, 3)(gen);
      if (kind == EditKind::Delete && len >= n) continue;
      ledger = ledger.apply(kind, span, ins);
      model.apply(kind, span, ins);
      ++accepted;
      ASSERT_TRUE(ledger.well_formed()) << "seq " << seq << " step " << step;
      ASSERT_EQ(ledger.sentence_len(), model.size());
      for (std::size_t j = 0; j < model.size(); ++j) ASSERT_EQ(ledger.is_free(j), !model.frozen[j]) << j;
      for (std::size_t p = 0; p <= model.size(); ++p) ASSERT_EQ(ledger.can_insert_at(p), !model.blocked[p]) << p;
    }
  }
  EXPECT_GT(accepted, 20000u);
}

TEST(Ledger, QNeverIncreasesUnderLengthPreservingEdits) {
  std::mt19937 gen(77);
  for (int seq = 0; seq < 2000; ++seq) {
    const std::size_t L = std::uniform_int_distribution<std::size_t>(2, 30)(gen);
    Ledger ledger(L);
    auto prev = ledger.q_array();
    for (int step = 0; step < 10; ++step) {
      const bool swap = gen() % 2;
      const std::size_t start = std::uniform_int_distribution<std::size_t>(0, L - 1)(gen);
      const std::size_t len = std::uniform_int_distribution<std::size_t>(1, 4)(gen);
      const EditKind kind = swap ? EditKind::Swap : EditKind::Replace;
      if (!ledger.accepts(kind, {start, len})) continue;
      ledger = ledger.apply(kind, {start, len}, len);
      const auto q = ledger.q_array();
      for (std::size_t j = 0; j < L; ++j) ASSERT_LE(q[j], prev[j]);
      prev = q;
    }
  }
}
