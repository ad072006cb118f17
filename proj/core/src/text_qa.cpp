#include "clg/text_qa.hpp"

namespace clg {

Vocabulary::Vocabulary(std::size_t capacity) : capacity_(capacity) {
  if (capacity < 2) throw VocabularyError("vocabulary capacity must hold the reserved ids");
  add("<pad>");
  add("<unk>");
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens, std::size_t capacity) {
  if (tokens.size() < 2 || tokens[0] != "<pad>" || tokens[1] != "<unk>") {
    throw VocabularyError("token list must start with <pad>, <unk>");
  }
  Vocabulary v(capacity);
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (v.index_.count(tokens[i])) throw VocabularyError("duplicate token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

TokenId Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  if (tokens_.size() >= capacity_) {
    throw VocabularyError("vocabulary full (" + std::to_string(capacity_) + " ids) adding '" + token + "'");
  }
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnknown : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw VocabularyError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

TokenSeq Vocabulary::encode(const std::vector<std::string>& words) const {
  TokenSeq out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

template <class T>
TextEncoder<T> TextEncoder<T>::init(std::size_t vocab, std::size_t d, std::size_t depth, nk::Rng& rng) {
  if (depth != 1 && depth != 2) throw ContractError("text encoder depth must be 1 or 2");
  TextEncoder e;
  e.embedding = nk::Parameter<T>("text.embedding", nk::normal_tensor<T>(vocab, d, 1.0, rng));
  e.position = nk::Parameter<T>("text.position", nk::normal_tensor<T>(kMaxTextLength, d, 0.1, rng));
  for (std::size_t i = 0; i < depth; ++i) {
    e.ff_W.emplace_back("text.ff" + std::to_string(i) + ".W", nk::glorot_uniform<T>(d, d, rng));
    e.ff_b.emplace_back("text.ff" + std::to_string(i) + ".b", nk::Tensor<T>(1, d));
  }
  return e;
}

template <class T>
nk::Var<T> encode_texts(TextEncoder<T>& enc, nk::Tape<T>& tape, std::span<const TokenSeq> texts, nk::Binding b) {
  if (texts.empty()) throw ContractError("encode_texts: no sequences");
  std::vector<std::size_t> tok_ids, pos_ids;
  nk::Tensor<T> avg(texts.size(), [&] {
    std::size_t n = 0;
    for (const auto& t : texts) n += t.size();
    return n == 0 ? 1 : n;
  }());
  std::size_t col = 0;
  for (std::size_t r = 0; r < texts.size(); ++r) {
    const auto& t = texts[r];
    if (t.empty()) throw ContractError("encode_text: empty token sequence");
    if (t.size() > kMaxTextLength) {
      throw ContractError("encode_text: sequence of " + std::to_string(t.size()) + " tokens exceeds " +
                          std::to_string(kMaxTextLength));
    }
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (t[k] >= enc.vocab_size()) {
        throw VocabularyError("token id " + std::to_string(t[k]) + " outside vocabulary of " +
                              std::to_string(enc.vocab_size()));
      }
      tok_ids.push_back(t[k]);
      pos_ids.push_back(k);
      avg(r, col++) = T(1) / static_cast<T>(t.size());
    }
  }
  auto emb = nk::bind(tape, enc.embedding, b);
  auto pos = nk::bind(tape, enc.position, b);
  auto rows = nk::add(nk::gather_rows(emb, std::span<const std::size_t>(tok_ids)),
                      nk::gather_rows(pos, std::span<const std::size_t>(pos_ids)));
  auto h = nk::matmul(tape.constant(std::move(avg)), rows);
  for (std::size_t i = 0; i < enc.depth(); ++i) {
    if (i > 0) h = nk::relu(h);
    h = nk::add_row(nk::matmul(h, nk::bind(tape, enc.ff_W[i], b)), nk::bind(tape, enc.ff_b[i], b));
  }
  return h;
}

template <class T>
nk::Var<T> encode_text(TextEncoder<T>& enc, nk::Tape<T>& tape, std::span<const TokenId> tokens, nk::Binding b) {
  const TokenSeq seq(tokens.begin(), tokens.end());
  return encode_texts(enc, tape, std::span<const TokenSeq>(&seq, 1), b);
}

template <class T>
QaHead<T> QaHead<T>::init(std::size_t d, nk::Rng& rng) {
  QaHead h;
  h.W = nk::Parameter<T>("head.W", nk::glorot_uniform<T>(3 * d, d, rng));
  h.b = nk::Parameter<T>("head.b", nk::Tensor<T>(1, d));
  return h;
}

template <class T>
nk::Var<T> fuse_query(QaHead<T>& head, nk::Var<T> Xg, nk::Var<T> Xq, nk::Binding b) {
  auto& tape = *Xg.tape;
  const nk::Var<T> parts[] = {nk::mul(Xg, Xq), Xg, Xq};
  auto cat = nk::concat_cols<T>(parts);
  return nk::add_row(nk::matmul(cat, nk::bind(tape, head.W, b)), nk::bind(tape, head.b, b));
}

template <class T>
nk::Var<T> candidate_logits(nk::Var<T> fused, nk::Var<T> cand_rows, std::size_t num_candidates) {
  const std::size_t B = fused.rows();
  if (num_candidates < 2) throw ContractError("score_candidates: need at least 2 candidates");
  if (cand_rows.rows() != B * num_candidates) {
    throw DimensionError("candidate_logits: expected " + std::to_string(B * num_candidates) + " candidate rows");
  }
  std::vector<std::size_t> owner(B * num_candidates);
  for (std::size_t i = 0; i < owner.size(); ++i) owner[i] = i / num_candidates;
  auto expanded = nk::gather_rows(fused, std::span<const std::size_t>(owner));
  return nk::reshape(nk::sum_cols(nk::mul(expanded, cand_rows)), B, num_candidates);
}

template <class T>
nk::Var<T> score_candidates(QaHead<T>& head, TextEncoder<T>& enc, nk::Var<T> Xg, nk::Var<T> Xq,
                            std::span<const TokenSeq> candidates, nk::Binding b) {
  if (candidates.size() < 2) throw ContractError("score_candidates: need at least 2 candidates");
  auto fused = fuse_query(head, Xg, Xq, b);
  auto cands = encode_texts(enc, *Xg.tape, candidates, b);
  return candidate_logits(fused, cands, candidates.size());
}

template <class T>
nk::Var<T> qa_loss(nk::Var<T> logits, std::span<const std::size_t> gold) {
  const std::size_t B = logits.rows(), C = logits.cols();
  if (gold.size() != B) throw DimensionError("qa_loss: one gold index per row required");
  nk::Tensor<T> onehot(B, C);
  for (std::size_t i = 0; i < B; ++i) {
    if (gold[i] >= C) {
      throw ContractError("qa_loss: gold index " + std::to_string(gold[i]) + " outside " + std::to_string(C) +
                          " candidates");
    }
    onehot(i, gold[i]) = T(-1) / static_cast<T>(B);
  }
  return nk::sum(nk::mul(nk::log_softmax_rows(logits), logits.tape->constant(std::move(onehot))));
}

template struct TextEncoder<float>;
template struct TextEncoder<double>;
template struct QaHead<float>;
template struct QaHead<double>;
template nk::Var<float> encode_texts<float>(TextEncoder<float>&, nk::Tape<float>&, std::span<const TokenSeq>,
                                            nk::Binding);
template nk::Var<double> encode_texts<double>(TextEncoder<double>&, nk::Tape<double>&, std::span<const TokenSeq>,
                                              nk::Binding);
template nk::Var<float> encode_text<float>(TextEncoder<float>&, nk::Tape<float>&, std::span<const TokenId>,
                                           nk::Binding);
template nk::Var<double> encode_text<double>(TextEncoder<double>&, nk::Tape<double>&, std::span<const TokenId>,
                                             nk::Binding);
template nk::Var<float> fuse_query<float>(QaHead<float>&, nk::Var<float>, nk::Var<float>, nk::Binding);
template nk::Var<double> fuse_query<double>(QaHead<double>&, nk::Var<double>, nk::Var<double>, nk::Binding);
template nk::Var<float> candidate_logits<float>(nk::Var<float>, nk::Var<float>, std::size_t);
template nk::Var<double> candidate_logits<double>(nk::Var<double>, nk::Var<double>, std::size_t);
template nk::Var<float> score_candidates<float>(QaHead<float>&, TextEncoder<float>&, nk::Var<float>, nk::Var<float>,
                                                std::span<const TokenSeq>, nk::Binding);
template nk::Var<double> score_candidates<double>(QaHead<double>&, TextEncoder<double>&, nk::Var<double>,
                                                  nk::Var<double>, std::span<const TokenSeq>, nk::Binding);
template nk::Var<float> qa_loss<float>(nk::Var<float>, std::span<const std::size_t>);
template nk::Var<double> qa_loss<double>(nk::Var<double>, std::span<const std::size_t>);

}  // namespace clg
