#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adaptlab/rng.hpp"

namespace adaptlab {

// Reserved token ids shared by the generators, the tokenizer, and the
// masked-token pretext phase.
inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kSepId = 1;
inline constexpr std::int32_t kMaskId = 2;
inline constexpr std::int32_t kNumReserved = 4;

enum class MetricKind { Accuracy, Matthews };

const char* metric_name(MetricKind kind);
MetricKind metric_from_name(const std::string& name);

struct Example {
    std::vector<std::int32_t> token_ids;  // padded/truncated to max_seq_len
    std::int32_t label = 0;
};

struct Dataset {
    std::vector<Example> examples;
    int num_classes = 2;
    std::string task_id;
    MetricKind metric = MetricKind::Accuracy;
    int vocab_size = 0;
    int max_seq_len = 0;
    // Label-string mapping in first-appearance order (TSV ingestion only).
    std::vector<std::string> label_names;

    // 64-bit FNV-1a over canonicalized rows; identifies the dataset in
    // split derivation and run records.
    std::uint64_t fingerprint() const;
};

enum class SyntheticKind { KeywordTopic, OrderPattern, MajorityToken };

// Synthetic token layout directly above the reserved ids; filler tokens use
// the rest of the vocabulary.
//   keyword-topic:  kKeywordsPerClass ids per class (class 0 first)
//   order-pattern:  token A = kNumReserved, token B = kNumReserved + 1
//   majority-token: kMajorityPerClass ids per class (class 0 first)
inline constexpr std::int32_t kKeywordsPerClass = 8;
inline constexpr std::int32_t kMajorityPerClass = 4;

const char* synthetic_kind_name(SyntheticKind kind);
SyntheticKind synthetic_kind_from_name(const std::string& name);

// Deterministic binary classification tasks with labels balanced to 45-55%.
// label_noise flips that fraction of labels after generation (same seed
// stream), modeling annotation noise; must lie in [0, 0.5).
Dataset generate_synthetic_task(SyntheticKind kind, int size, int vocab_size,
                                int max_seq_len, std::uint64_t seed,
                                double label_noise = 0.0);

// UTF-8 delimited file with a header row; one or two text columns (pairs are
// joined with the separator token). Tokens are case-folded whitespace words
// hashed into [kNumReserved, vocab_size); labels map by first appearance.
Dataset load_tsv(const std::string& path,
                 const std::vector<std::string>& text_columns,
                 const std::string& label_column, char delimiter, int vocab_size,
                 int max_seq_len);

struct SplitPlan {
    std::vector<int> train;
    std::vector<int> dev;
    std::vector<int> test;
    int low_data_n = 0;  // 0 means full data
    std::uint64_t split_seed = 0;
};

// Test split is fixed per dataset (keyed to its fingerprint, not the seed);
// the training pool is then subsampled to low_data_n (0 = all) by split_seed
// and 25% of the drawn pool becomes dev.
SplitPlan make_split(const Dataset& data, int low_data_n,
                     std::uint64_t split_seed);

}  // namespace adaptlab
