#include "adaptlab/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace adaptlab {

namespace {

void check_disjoint(const SplitPlan& plan) {
    auto overlap = [](const std::vector<int>& a, const std::vector<int>& b) {
        std::vector<int> out;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                              std::back_inserter(out));
        return !out.empty();
    };
    if (overlap(plan.train, plan.dev) || overlap(plan.train, plan.test) ||
        overlap(plan.dev, plan.test))
        throw ConfigError("train: split index sets overlap");
}

void fill_batch(const Dataset& data, const std::vector<int>& indices,
                std::size_t begin, std::size_t count,
                std::vector<std::int32_t>& ids,
                std::vector<std::int32_t>& labels) {
    const std::size_t seq = data.examples.front().token_ids.size();
    ids.resize(count * seq);
    labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& ex = data.examples[indices[begin + i]];
        std::copy(ex.token_ids.begin(), ex.token_ids.end(),
                  ids.begin() + static_cast<std::ptrdiff_t>(i * seq));
        labels[i] = ex.label;
    }
}

}  // namespace

std::string setting_name(int low_data_n) {
    return low_data_n == 0 ? "full" : "n" + std::to_string(low_data_n);
}

double evaluate(AdapterModel& model, const Dataset& data,
                const std::vector<int>& indices, int batch_size) {
    if (indices.empty()) throw ConfigError("evaluate: no examples");
    std::vector<std::int32_t> preds, labels;
    std::vector<std::int32_t> ids, batch_labels;
    for (std::size_t at = 0; at < indices.size();
         at += static_cast<std::size_t>(batch_size)) {
        const std::size_t count =
            std::min<std::size_t>(batch_size, indices.size() - at);
        fill_batch(data, indices, at, count, ids, batch_labels);
        Tape tape;
        auto logits = model.forward(tape, ids, static_cast<i64>(count), false,
                                    nullptr);
        const int classes = model.num_classes();
        for (std::size_t i = 0; i < count; ++i) {
            const double* row = logits->values.data() +
                                static_cast<std::ptrdiff_t>(i) * classes;
            preds.push_back(static_cast<std::int32_t>(
                std::max_element(row, row + classes) - row));
            labels.push_back(batch_labels[i]);
        }
    }
    return compute_metric(data.metric, preds, labels);
}

RunResult train(AdapterModel& model, const Dataset& data,
                const SplitPlan& plan, const TrainOptions& opts) {
    check_disjoint(plan);
    if (plan.train.empty()) throw ConfigError("train: empty training split");
    if (plan.dev.empty()) throw ConfigError("train: empty dev split");
    if (plan.test.empty()) throw ConfigError("train: empty test split");
    if (opts.epochs < 1) throw ConfigError("train: epochs < 1");
    if (opts.batch_size < 1) throw ConfigError("train: batch_size < 1");

    const auto t0 = std::chrono::steady_clock::now();
    RunResult res;
    res.task_id = data.task_id;
    res.variant = model.variant().label();
    res.seed = opts.seed;
    res.data_setting = setting_name(plan.low_data_n);
    res.dataset_fingerprint = data.fingerprint();
    res.trainable_params = model.count_parameters(true);

    Rng rng = Rng(opts.seed).split("train");
    AdamOptimizer optimizer(model.trainables(), opts.adam);
    // With nothing trainable the tape records no nodes; skip the update.
    const bool can_learn = !model.trainables().empty();

    std::vector<int> order = plan.train;
    std::vector<std::int32_t> ids, labels;
    double best_dev = -std::numeric_limits<double>::infinity();
    double test_at_best = std::numeric_limits<double>::quiet_NaN();

    for (int epoch = 0; epoch < opts.epochs && !res.failed; ++epoch) {
        Rng erng = rng.split(static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[erng.uniform_int(i)]);

        for (std::size_t at = 0; at < order.size();
             at += static_cast<std::size_t>(opts.batch_size)) {
            const std::size_t count =
                std::min<std::size_t>(opts.batch_size, order.size() - at);
            fill_batch(data, order, at, count, ids, labels);
            Tape tape;
            auto logits =
                model.forward(tape, ids, static_cast<i64>(count), true, &erng);
            auto loss = cross_entropy(tape, logits, labels);
            if (!std::isfinite(loss->values[0])) {
                res.failed = true;
                res.fail_reason = "non-finite training loss at epoch " +
                                  std::to_string(epoch);
                break;
            }
            if (can_learn) {
                optimizer.zero_grad();
                tape.backward(loss);
                optimizer.step();
            }
        }
        if (res.failed) break;

        const double dev = evaluate(model, data, plan.dev, opts.batch_size);
        res.dev_history.push_back(dev);
        if (dev > best_dev) {
            best_dev = dev;
            res.best_epoch = epoch;
            test_at_best = evaluate(model, data, plan.test, opts.batch_size);
        }
    }

    if (!res.failed) {
        res.dev_metric = best_dev;
        res.test_metric = test_at_best;
        if (std::any_of(model.layers().begin(), model.layers().end(),
                        [](const AdapterLayer& l) { return l.has_switch; })) {
            for (int i = 0; i < static_cast<int>(model.layers().size()); ++i) {
                const auto& lay = model.layers()[i];
                if (lay.has_switch &&
                    hard_decision(lay.sw) == SwitchChoice::Adapter)
                    res.selected_layers.push_back(i);
            }
        }
    } else {
        res.dev_metric = std::numeric_limits<double>::quiet_NaN();
        res.test_metric = std::numeric_limits<double>::quiet_NaN();
    }
    res.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return res;
}

}  // namespace adaptlab
