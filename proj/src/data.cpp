#include "adaptlab/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "adaptlab/errors.hpp"

namespace adaptlab {

namespace {

void fold_bytes(std::uint64_t& h, const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
}

void fold_i32(std::uint64_t& h, std::int32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i)
        b[i] = static_cast<unsigned char>((static_cast<std::uint32_t>(v) >>
                                           (8 * i)) & 0xff);
    fold_bytes(h, b, 4);
}

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = rng.uniform_int(i);
        std::swap(v[i - 1], v[j]);
    }
}

std::vector<int> shuffled_indices(std::size_t n, Rng rng) {
    std::vector<int> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
    shuffle_in_place(idx, rng);
    return idx;
}

}  // namespace

const char* metric_name(MetricKind kind) {
    return kind == MetricKind::Accuracy ? "accuracy" : "matthews";
}

MetricKind metric_from_name(const std::string& name) {
    if (name == "accuracy") return MetricKind::Accuracy;
    if (name == "matthews" || name == "mcc") return MetricKind::Matthews;
    throw ConfigError("unknown metric '" + name + "'");
}

const char* synthetic_kind_name(SyntheticKind kind) {
    switch (kind) {
        case SyntheticKind::KeywordTopic:
            return "keyword-topic";
        case SyntheticKind::OrderPattern:
            return "order-pattern";
        case SyntheticKind::MajorityToken:
            return "majority-token";
    }
    return "unknown";
}

SyntheticKind synthetic_kind_from_name(const std::string& name) {
    if (name == "keyword-topic") return SyntheticKind::KeywordTopic;
    if (name == "order-pattern") return SyntheticKind::OrderPattern;
    if (name == "majority-token") return SyntheticKind::MajorityToken;
    throw ConfigError("unknown synthetic task kind '" + name + "'");
}

std::uint64_t Dataset::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& ex : examples) {
        fold_i32(h, ex.label);
        for (std::int32_t t : ex.token_ids) fold_i32(h, t);
        fold_i32(h, -1);  // row terminator
    }
    return h;
}

Dataset generate_synthetic_task(SyntheticKind kind, int size, int vocab_size,
                                int max_seq_len, std::uint64_t seed,
                                double label_noise) {
    if (size < 200)
        throw ConfigError("synthetic: size " + std::to_string(size) +
                          " < 200");
    if (!(label_noise >= 0.0 && label_noise < 0.5))
        throw ConfigError("synthetic: label_noise " +
                          std::to_string(label_noise) +
                          " outside [0, 0.5)");
    if (max_seq_len < 4)
        throw ConfigError("synthetic: max_seq_len " +
                          std::to_string(max_seq_len) + " < 4");
    std::int32_t special = 0;
    switch (kind) {
        case SyntheticKind::KeywordTopic:
            special = 2 * kKeywordsPerClass;
            break;
        case SyntheticKind::OrderPattern:
            special = 2;
            break;
        case SyntheticKind::MajorityToken:
            special = 2 * kMajorityPerClass;
            break;
    }
    const std::int32_t filler_lo = kNumReserved + special;
    if (vocab_size < filler_lo + 8)
        throw ConfigError("synthetic: vocab_size " +
                          std::to_string(vocab_size) + " too small for " +
                          synthetic_kind_name(kind) + " (needs >= " +
                          std::to_string(filler_lo + 8) + ")");

    Rng rng = Rng(seed).split(synthetic_kind_name(kind));
    auto filler = [&]() {
        return static_cast<std::int32_t>(
            filler_lo + rng.uniform_int(vocab_size - filler_lo));
    };

    Dataset data;
    data.task_id = synthetic_kind_name(kind);
    data.metric = kind == SyntheticKind::OrderPattern ? MetricKind::Matthews
                                                      : MetricKind::Accuracy;
    data.vocab_size = vocab_size;
    data.max_seq_len = max_seq_len;
    data.num_classes = 2;

    const int min_len = std::max(4, max_seq_len / 2);
    for (int i = 0; i < size; ++i) {
        const std::int32_t label = i % 2;  // exact 50/50 balance
        const int len =
            min_len + static_cast<int>(rng.uniform_int(max_seq_len - min_len + 1));
        std::vector<std::int32_t> ids(len);
        for (auto& t : ids) t = filler();

        switch (kind) {
            case SyntheticKind::KeywordTopic: {
                int nkey = std::max(2, len / 2 + static_cast<int>(rng.uniform_int(
                                           len - len / 2 + 1)));
                nkey = std::min(nkey, len);
                auto pos = shuffled_indices(len, rng.split(i));
                for (int p = 0; p < nkey; ++p)
                    ids[pos[p]] = static_cast<std::int32_t>(
                        kNumReserved + label * kKeywordsPerClass +
                        rng.uniform_int(kKeywordsPerClass));
                break;
            }
            case SyntheticKind::OrderPattern: {
                std::size_t p = rng.uniform_int(len);
                std::size_t q = rng.uniform_int(len - 1);
                if (q >= p) ++q;
                auto first = std::min(p, q);
                auto second = std::max(p, q);
                ids[first] = label == 1 ? kNumReserved : kNumReserved + 1;
                ids[second] = label == 1 ? kNumReserved + 1 : kNumReserved;
                break;
            }
            case SyntheticKind::MajorityToken: {
                const int t =
                    len / 2 + static_cast<int>(rng.uniform_int(len - len / 2 + 1));
                const int minority =
                    static_cast<int>(rng.uniform_int((t - 1) / 2 + 1));
                auto pos = shuffled_indices(len, rng.split(i));
                for (int p = 0; p < t; ++p) {
                    const std::int32_t cls = p < t - minority ? label : 1 - label;
                    ids[pos[p]] = static_cast<std::int32_t>(
                        kNumReserved + cls * kMajorityPerClass +
                        rng.uniform_int(kMajorityPerClass));
                }
                break;
            }
        }
        ids.resize(max_seq_len, kPadId);
        data.examples.push_back({std::move(ids), label});
    }
    shuffle_in_place(data.examples, rng);
    if (label_noise > 0.0) {
        Rng noise = rng.split("label-noise");
        for (auto& ex : data.examples)
            if (noise.uniform() < label_noise) ex.label = 1 - ex.label;
    }
    return data;
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == delim) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<std::int32_t> hash_words(const std::string& text, int vocab_size) {
    std::vector<std::int32_t> ids;
    std::string word;
    auto flush = [&]() {
        if (word.empty()) return;
        const std::uint64_t h = Rng::fnv1a(word);
        ids.push_back(static_cast<std::int32_t>(
            kNumReserved + h % static_cast<std::uint64_t>(vocab_size -
                                                          kNumReserved)));
        word.clear();
    };
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            flush();
        } else {
            word += static_cast<char>(
                std::tolower(static_cast<unsigned char>(ch)));
        }
    }
    flush();
    return ids;
}

}  // namespace

Dataset load_tsv(const std::string& path,
                 const std::vector<std::string>& text_columns,
                 const std::string& label_column, char delimiter,
                 int vocab_size, int max_seq_len) {
    if (text_columns.empty() || text_columns.size() > 2)
        throw ConfigError("load_tsv: need one or two text columns, got " +
                          std::to_string(text_columns.size()));
    if (vocab_size <= kNumReserved)
        throw ConfigError("load_tsv: vocab_size " + std::to_string(vocab_size) +
                          " too small");
    std::ifstream in(path);
    if (!in) throw ConfigError("load_tsv: cannot open '" + path + "'");

    std::string line;
    auto next_line = [&](std::string& out) {
        if (!std::getline(in, out)) return false;
        if (!out.empty() && out.back() == '\r') out.pop_back();
        return true;
    };
    if (!next_line(line) || line.empty())
        throw ConfigError("load_tsv: '" + path + "' is empty");

    const auto header = split_fields(line, delimiter);
    auto column_index = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            std::string have;
            for (const auto& h : header) have += (have.empty() ? "" : ", ") + h;
            throw ConfigError("load_tsv: column '" + name +
                              "' not in header [" + have + "]");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    std::vector<std::size_t> text_idx;
    for (const auto& c : text_columns) text_idx.push_back(column_index(c));
    const std::size_t label_idx = column_index(label_column);

    Dataset data;
    {
        auto slash = path.find_last_of('/');
        auto stem = slash == std::string::npos ? path : path.substr(slash + 1);
        auto dot = stem.find_last_of('.');
        data.task_id = dot == std::string::npos ? stem : stem.substr(0, dot);
    }
    data.vocab_size = vocab_size;
    data.max_seq_len = max_seq_len;

    std::size_t row = 1;
    while (next_line(line)) {
        ++row;
        if (line.empty()) continue;
        const auto fields = split_fields(line, delimiter);
        if (fields.size() != header.size())
            throw ConfigError("load_tsv: row " + std::to_string(row) + " has " +
                              std::to_string(fields.size()) + " fields, header has " +
                              std::to_string(header.size()));
        std::vector<std::int32_t> ids = hash_words(fields[text_idx[0]], vocab_size);
        if (text_idx.size() == 2) {
            ids.push_back(kSepId);
            const auto more = hash_words(fields[text_idx[1]], vocab_size);
            ids.insert(ids.end(), more.begin(), more.end());
        }
        if (static_cast<int>(ids.size()) > max_seq_len) ids.resize(max_seq_len);
        ids.resize(max_seq_len, kPadId);

        const std::string& label_str = fields[label_idx];
        auto it = std::find(data.label_names.begin(), data.label_names.end(),
                            label_str);
        std::int32_t label;
        if (it == data.label_names.end()) {
            label = static_cast<std::int32_t>(data.label_names.size());
            data.label_names.push_back(label_str);
        } else {
            label = static_cast<std::int32_t>(it - data.label_names.begin());
        }
        data.examples.push_back({std::move(ids), label});
    }
    if (data.examples.empty())
        throw ConfigError("load_tsv: '" + path + "' has no data rows");
    if (data.label_names.size() < 2)
        throw ConfigError("load_tsv: '" + path +
                          "' needs at least 2 distinct labels, found " +
                          std::to_string(data.label_names.size()));
    data.num_classes = static_cast<int>(data.label_names.size());
    return data;
}

SplitPlan make_split(const Dataset& data, int low_data_n,
                     std::uint64_t split_seed) {
    const std::size_t n = data.examples.size();
    if (n < 10)
        throw ConfigError("split: dataset of " + std::to_string(n) +
                          " examples is too small");
    const std::uint64_t fp = data.fingerprint();

    // The held-out test fifth depends only on the dataset itself, so every
    // seed and variant sees the same test examples.
    auto order = shuffled_indices(n, Rng(fp).split("test"));
    const std::size_t test_n = n / 5;
    SplitPlan plan;
    plan.low_data_n = low_data_n;
    plan.split_seed = split_seed;
    plan.test.assign(order.begin(), order.begin() + test_n);
    std::vector<int> pool(order.begin() + test_n, order.end());

    if (low_data_n < 0)
        throw ConfigError("split: negative low_data_n");
    if (low_data_n > static_cast<int>(pool.size()))
        throw ConfigError("split: low_data_n " + std::to_string(low_data_n) +
                          " exceeds pool of " + std::to_string(pool.size()));
    Rng draw = Rng(fp).split("pool").split(split_seed);
    shuffle_in_place(pool, draw);
    const std::size_t drawn_n =
        low_data_n == 0 ? pool.size() : static_cast<std::size_t>(low_data_n);
    if (drawn_n < 4)
        throw ConfigError("split: training pool of " + std::to_string(drawn_n) +
                          " is too small");
    const std::size_t dev_n = drawn_n / 4;
    plan.dev.assign(pool.begin(), pool.begin() + dev_n);
    plan.train.assign(pool.begin() + dev_n, pool.begin() + drawn_n);

    std::sort(plan.train.begin(), plan.train.end());
    std::sort(plan.dev.begin(), plan.dev.end());
    std::sort(plan.test.begin(), plan.test.end());
    return plan;
}

}  // namespace adaptlab
