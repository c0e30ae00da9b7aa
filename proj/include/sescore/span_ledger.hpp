#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sescore/text.hpp"

namespace sescore {

/// Bookkeeping for stratified editing: which token positions of the current
/// sentence were produced or touched by an earlier edit and must stay frozen.
///
/// Positive-length protected spans cover edited tokens. A zero-width span is a
/// deletion marker: it sits at the hole a deletion left behind, forbids
/// inserting into that hole, and freezes the token that now follows it.
///
/// q(j) is the length of the free run starting at j, so the acceptance test
/// "q(start) >= span length" is the same thing as disjointness from every
/// protected span. On a fresh ledger q(j) = L - j.
///
/// The ledger is a value: every update returns a new ledger.
class Ledger {
 public:
  Ledger() = default;
  explicit Ledger(std::size_t sentence_len, bool strict_q = false)
      : sentence_len_(sentence_len), strict_q_(strict_q) {}

  std::size_t sentence_len() const { return sentence_len_; }
  std::size_t edits_applied() const { return edits_applied_; }
  bool strict_q() const { return strict_q_; }
  const std::vector<Span>& protected_spans() const { return protected_; }
  bool has_pending() const { return !pending_.empty(); }

  std::size_t q(std::size_t j) const {
    if (j >= sentence_len_) return 0;
    std::size_t limit = sentence_len_;
    // An unremapped reservation blocks like a protected span.
    for (const auto* spans : {&protected_, &pending_}) {
      for (const Span& s : *spans) {
        if (s.len == 0 ? s.start == j : (s.start <= j && j < s.end())) return 0;
        if (s.start > j) limit = std::min(limit, s.start);
      }
    }
    return limit - j;
  }

  std::vector<std::size_t> q_array() const {
    std::vector<std::size_t> out(sentence_len_);
    for (std::size_t j = 0; j < sentence_len_; ++j) out[j] = q(j);
    return out;
  }

  bool is_free(std::size_t pos) const { return q(pos) >= 1; }

  /// Insertion point p sits between tokens p-1 and p.
  bool can_insert_at(std::size_t p) const {
    if (p > sentence_len_) return false;
    for (const auto* spans : {&protected_, &pending_}) {
      for (const Span& s : *spans) {
        if (s.len == 0 && s.start == p) return false;
        if (s.len > 0 && s.start < p && p < s.end()) return false;
      }
    }
    return true;
  }

  std::vector<std::size_t> insertion_points() const {
    std::vector<std::size_t> out;
    for (std::size_t p = 0; p <= sentence_len_; ++p)
      if (can_insert_at(p)) out.push_back(p);
    return out;
  }

  /// For Swap, span.start and span.end() are the two exchanged positions.
  bool accepts(EditKind kind, Span span) const {
    switch (kind) {
      case EditKind::Insert:
        return span.len == 0 && can_insert_at(span.start);
      case EditKind::Delete:
      case EditKind::Replace:
        return span.len >= 1 && span.end() <= sentence_len_ && run_fits(q(span.start), span.len);
      case EditKind::Swap:
        return span.len >= 1 && span.end() < sentence_len_ && run_fits(q(span.start), span.len) &&
               q(span.end()) >= 1;
    }
    return false;
  }

  /// Marks the affected region as pending protection, or returns nullopt on
  /// overlap. Follow with remap_after_edit once the sentence has changed.
  std::optional<Ledger> try_reserve(EditKind kind, Span span) const {
    if (has_pending()) throw std::logic_error("Ledger: previous reservation not remapped");
    if (!accepts(kind, span)) return std::nullopt;
    Ledger next = *this;
    if (kind == EditKind::Swap) {
      next.pending_ = {Span{span.start, 1}, Span{span.end(), 1}};
    } else {
      next.pending_ = {span};
    }
    return next;
  }

  /// Applies the length change of the reserved edit at `at`. The reserved
  /// region grows or shrinks by delta (a deletion collapses to a marker) and
  /// every protected span after it shifts by delta.
  Ledger remap_after_edit(std::size_t at, std::ptrdiff_t delta) const {
    if (!has_pending()) throw std::logic_error("Ledger: remap without reservation");
    Ledger next = *this;
    if (pending_.size() == 2) {
      if (delta != 0 || pending_[0].start != at) throw std::logic_error("Ledger: bad swap remap");
    } else {
      Span& region = next.pending_[0];
      if (region.start != at) throw std::logic_error("Ledger: remap position mismatch");
      const auto new_len = static_cast<std::ptrdiff_t>(region.len) + delta;
      if (new_len < 0) throw std::logic_error("Ledger: negative region after remap");
      const std::size_t old_end = region.end();
      for (Span& s : next.protected_)
        if (s.start >= old_end) s.start = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(s.start) + delta);
      region.len = static_cast<std::size_t>(new_len);
    }
    next.sentence_len_ = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(sentence_len_) + delta);
    next.protected_.insert(next.protected_.end(), next.pending_.begin(), next.pending_.end());
    next.pending_.clear();
    next.normalize();
    ++next.edits_applied_;
    return next;
  }

  /// try_reserve + remap_after_edit for an edit known to be acceptable.
  /// `inserted_len` is the number of tokens written (ignored for Delete/Swap).
  Ledger apply(EditKind kind, Span span, std::size_t inserted_len) const {
    auto reserved = try_reserve(kind, span);
    if (!reserved) throw std::logic_error("Ledger::apply on a rejected edit");
    std::ptrdiff_t delta = 0;
    switch (kind) {
      case EditKind::Insert: delta = static_cast<std::ptrdiff_t>(inserted_len); break;
      case EditKind::Delete: delta = -static_cast<std::ptrdiff_t>(span.len); break;
      case EditKind::Replace:
        delta = static_cast<std::ptrdiff_t>(inserted_len) - static_cast<std::ptrdiff_t>(span.len);
        break;
      case EditKind::Swap: break;
    }
    return reserved->remap_after_edit(span.start, delta);
  }

  /// Checks pairwise disjointness and bounds; used by tests.
  bool well_formed() const {
    for (std::size_t i = 0; i < protected_.size(); ++i) {
      const Span& a = protected_[i];
      if (a.end() > sentence_len_) return false;
      for (std::size_t k = i + 1; k < protected_.size(); ++k) {
        const Span& b = protected_[k];
        if (a.len == 0 && b.len == 0) {
          if (a.start == b.start) return false;
        } else if (a.len == 0) {
          if (b.start < a.start && a.start < b.end()) return false;
        } else if (b.len == 0) {
          if (a.start < b.start && b.start < a.end()) return false;
        } else if (a.start < b.end() && b.start < a.end()) {
          return false;
        }
      }
    }
    return true;
  }

 private:
  bool run_fits(std::size_t run, std::size_t len) const { return strict_q_ ? run > len : run >= len; }

  void normalize() {
    std::sort(protected_.begin(), protected_.end(),
              [](const Span& a, const Span& b) { return a.start != b.start ? a.start < b.start : a.len < b.len; });
    protected_.erase(std::unique(protected_.begin(), protected_.end()), protected_.end());
  }

  std::size_t sentence_len_ = 0;
  bool strict_q_ = false;
  std::size_t edits_applied_ = 0;
  std::vector<Span> protected_;
  std::vector<Span> pending_;
};

}  // namespace sescore
