#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "clg/nk/init.hpp"
#include "clg/nk/ops.hpp"

namespace clg {

inline constexpr std::size_t kDefaultVocabSize = 128;
inline constexpr std::size_t kMaxTextLength = 32;

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

// Fixed-capacity token table. Id 0 is padding and id 1 stands for unknown
// words; the remaining ids are assigned densely in insertion order.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnknown = 1;

  explicit Vocabulary(std::size_t capacity = kDefaultVocabSize);
  // Builds from a full id-ordered token list whose first two entries are the
  // reserved tokens.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens, std::size_t capacity = kDefaultVocabSize);

  TokenId add(const std::string& token);
  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;
  TokenSeq encode(const std::vector<std::string>& words) const;
  std::string decode(std::span<const TokenId> ids) const;

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::size_t capacity_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Mean of (token + position) embeddings, then a feed-forward stack:
// depth 1 is one affine map, depth 2 is affine -> ReLU -> affine.
template <class T>
struct TextEncoder {
  nk::Parameter<T> embedding;  // V x d
  nk::Parameter<T> position;   // 32 x d
  std::vector<nk::Parameter<T>> ff_W;
  std::vector<nk::Parameter<T>> ff_b;

  static TextEncoder init(std::size_t vocab, std::size_t d, std::size_t depth, nk::Rng& rng);
  std::size_t width() const { return embedding.value.cols(); }
  std::size_t vocab_size() const { return embedding.value.rows(); }
  std::size_t depth() const { return ff_W.size(); }
  template <class F>
  void visit(F&& f) {
    f(embedding);
    f(position);
    for (std::size_t i = 0; i < ff_W.size(); ++i) {
      f(ff_W[i]);
      f(ff_b[i]);
    }
  }
};

// One row per sequence: texts.size() x d.
template <class T>
nk::Var<T> encode_texts(TextEncoder<T>& enc, nk::Tape<T>& tape, std::span<const TokenSeq> texts,
                        nk::Binding b = nk::Binding::Train);

template <class T>
nk::Var<T> encode_text(TextEncoder<T>& enc, nk::Tape<T>& tape, std::span<const TokenId> tokens,
                       nk::Binding b = nk::Binding::Train);

// f = Linear([X_g * X_q ; X_g ; X_q]) -> d.
template <class T>
struct QaHead {
  nk::Parameter<T> W;  // 3d x d
  nk::Parameter<T> b;  // 1 x d

  static QaHead init(std::size_t d, nk::Rng& rng);
  template <class F>
  void visit(F&& f) {
    f(W);
    f(b);
  }
};

// Fused query rows for a batch: Xg, Xq are B x d; result B x d.
template <class T>
nk::Var<T> fuse_query(QaHead<T>& head, nk::Var<T> Xg, nk::Var<T> Xq, nk::Binding b = nk::Binding::Train);

// logits(i, k) = f_i . cand(i, k) for B samples with C candidates each.
// `cand_rows` holds the B*C candidate encodings sample-major.
template <class T>
nk::Var<T> candidate_logits(nk::Var<T> fused, nk::Var<T> cand_rows, std::size_t num_candidates);

// Single-sample scoring: 1 x C logits.
template <class T>
nk::Var<T> score_candidates(QaHead<T>& head, TextEncoder<T>& enc, nk::Var<T> Xg, nk::Var<T> Xq,
                            std::span<const TokenSeq> candidates, nk::Binding b = nk::Binding::Train);

// Mean softmax cross-entropy over the rows of `logits` (B x C).
template <class T>
nk::Var<T> qa_loss(nk::Var<T> logits, std::span<const std::size_t> gold);

}  // namespace clg
