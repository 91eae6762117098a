#pragma once

// Model container: a trained state, its priors, and the relevance model, in
// a canonical text form and an equivalent little-endian binary form.
//
// Text form (line oriented, doubles in shortest round-trip notation):
//
//   rlda-model 1
//   k <k>
//   vocab_size <V>
//   w_bits <b>
//   iteration <n>
//   seed <s>
//   updates <u>
//   alpha <k values>
//   beta_bar <value>
//   beta <V values>
//   base_words <n>            followed by n lines, one word each
//   augmented <V>             followed by V lines "<base> <tier>"
//   word_topic <m>            followed by m lines "<topic> <word> <units>"
//   documents <D>             followed by D blocks:
//     doc <ntopics> <ntokens> <review id as JSON string>
//     topics <t>:<units> ...  (ntopics pairs)
//     <word> <units> <position> <topic>   (ntokens lines)
//   relevance <bias> <w_nu> <w_helpful> <w_unhelpful>
//   end
//
// Binary form. Fixed header:
//
//   offset  0  char[8]  "RLDAMDL\x01"
//   offset  8  u32      version (1)
//   offset 12  u32      k
//   offset 16  u32      V (augmented vocabulary size)
//   offset 20  u32      w_bits
//   offset 24  u64      iteration
//   offset 32  u64      seed
//   offset 40  u64      updates
//   offset 48  u64      D (documents)
//   offset 56  f64      beta_bar
//   offset 64  f64[k]   alpha
//
// then, sequentially: f64[V] beta; u32 n_base and n_base length-prefixed
// (u32) words; V entries of (u32 base, u8 tier); u64 m and m triples of
// (u32 topic, u32 word, i64 units); D documents each as length-prefixed
// review id, u32 ntopics, ntopics x (u32 topic, i64 units), u32 ntokens,
// ntokens x (u32 word, i64 units, u32 position, u32 topic); f64[4]
// relevance weights; char[4] "END!".
//
// Word-topic triples are grouped by word and, like the per-document topic
// lists, keep the in-memory entry order so a reloaded state continues
// sampling bit-identically.

#include <string>
#include <string_view>

#include "rlda/relevance.hpp"
#include "rlda/sampler.hpp"

namespace rlda {

struct ModelContainer {
  TopicModelState state;
  Hyperparams hyper;
  LogisticModel relevance;
};

enum class ContainerFormat { kText, kBinary };

std::string to_text(const ModelContainer& model);
std::string to_binary(const ModelContainer& model);

/// Both parsers throw ValidationError on malformed input and
/// ConsistencyError if the stored counts disagree with the assignments.
ModelContainer from_text(std::string_view text);
ModelContainer from_binary(std::string_view bytes);

/// Detects the form from the leading magic bytes.
ModelContainer parse_container(std::string_view contents);

void save_model(const ModelContainer& model, const std::string& path, ContainerFormat format);
ModelContainer load_model(const std::string& path);

}  // namespace rlda
