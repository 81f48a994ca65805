#include <doctest.h>

#include <cmath>
#include <limits>

#include "adaptlab/metrics.hpp"
#include "adaptlab/train.hpp"

using namespace adaptlab;

namespace {

// First oracle run of the keyword-topic Baseline below; pinned as a
// regression anchor (the requirement itself is only >= 0.9).
constexpr double kBaselineKeywordAccuracy = 0.98125;

struct Rig {
    Dataset data;
    std::shared_ptr<Backbone> bb;
    AdapterConfig acfg;
    SplitPlan plan;
};

Rig make_rig(int low_data_n = 100) {
    Rig rig;
    rig.data = generate_synthetic_task(SyntheticKind::KeywordTopic, 240, 96,
                                       8, 3);
    BackboneConfig cfg;
    cfg.num_layers = 2;
    cfg.model_dim = 16;
    cfg.num_heads = 2;
    cfg.ffn_dim = 32;
    cfg.vocab_size = 96;
    cfg.max_seq_len = 8;
    rig.bb = std::make_shared<Backbone>(build_backbone(cfg));
    rig.acfg.reduction_factor = 4;
    rig.plan = make_split(rig.data, low_data_n, 42);
    return rig;
}

}  // namespace

TEST_CASE("metric hand examples") {
    std::vector<std::int32_t> preds{1, 1, 0, 0};
    std::vector<std::int32_t> labels{1, 0, 1, 0};
    CHECK(accuracy(preds, labels) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(matthews(preds, labels) == doctest::Approx(0.0).epsilon(1e-15));

    std::vector<std::int32_t> ones{1, 1, 1, 1};
    CHECK(accuracy(ones, labels) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(matthews(ones, labels) == 0.0);  // degenerate denominator rule

    CHECK(accuracy(labels, labels) == 1.0);
    CHECK(matthews(labels, labels) == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<std::int32_t> inverted{0, 1, 0, 1};
    CHECK(matthews(inverted, labels) == doctest::Approx(-1.0).epsilon(1e-12));

    CHECK(compute_metric(MetricKind::Accuracy, preds, labels) ==
          accuracy(preds, labels));

    std::vector<std::int32_t> shorter{1, 0};
    CHECK_THROWS_AS(accuracy(shorter, labels), ConfigError);
    CHECK_THROWS_AS(accuracy({}, {}), ConfigError);
    std::vector<std::int32_t> ternary{2, 0, 1, 0};
    CHECK_THROWS_AS(matthews(ternary, labels), ConfigError);
}

TEST_CASE("setting names") {
    CHECK(setting_name(0) == "full");
    CHECK(setting_name(100) == "n100");
    CHECK(setting_name(500) == "n500");
}

TEST_CASE("training is deterministic to 1e-12") {
    auto rig = make_rig();
    TrainOptions opts;
    opts.epochs = 3;
    opts.seed = 42;

    RunResult first, second;
    for (RunResult* res : {&first, &second}) {
        AdapterModel model(rig.bb, rig.acfg, AdapterVariant::aa(), 2, 42);
        *res = train(model, rig.data, rig.plan, opts);
    }
    REQUIRE_FALSE(first.failed);
    CHECK(first.best_epoch == second.best_epoch);
    CHECK(first.dev_metric == doctest::Approx(second.dev_metric).epsilon(1e-12));
    CHECK(first.test_metric ==
          doctest::Approx(second.test_metric).epsilon(1e-12));
    REQUIRE(first.dev_history.size() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(first.dev_history[i] ==
              doctest::Approx(second.dev_history[i]).epsilon(1e-12));
    CHECK(first.selected_layers == second.selected_layers);
}

TEST_CASE("run result records provenance") {
    auto rig = make_rig();
    TrainOptions opts;
    opts.epochs = 2;
    opts.seed = 92;
    AdapterModel model(rig.bb, rig.acfg, AdapterVariant::baseline(), 2, 92);
    auto res = train(model, rig.data, rig.plan, opts);
    CHECK(res.task_id == "keyword-topic");
    CHECK(res.variant == "baseline");
    CHECK(res.seed == 92);
    CHECK(res.data_setting == "n100");
    CHECK(res.dataset_fingerprint == rig.data.fingerprint());
    CHECK(res.trainable_params == model.count_parameters(true));
    CHECK(res.wall_time_sec > 0.0);
    CHECK(res.selected_layers.empty());  // no switches in the baseline
    CHECK(res.best_epoch >= 0);
    CHECK(res.best_epoch < 2);
}

TEST_CASE("aa run records its selected layers") {
    auto rig = make_rig();
    TrainOptions opts;
    opts.epochs = 2;
    opts.seed = 42;
    AdapterModel model(rig.bb, rig.acfg, AdapterVariant::aa(), 2, 42);
    auto res = train(model, rig.data, rig.plan, opts);
    REQUIRE_FALSE(res.failed);
    auto spec = model.extract_architecture("keyword-topic", 42, "n100");
    CHECK(res.selected_layers == spec.selected_layers);
    for (int layer : res.selected_layers) {
        CHECK(layer >= 0);
        CHECK(layer < 2);
    }
}

TEST_CASE("a model with no trainables keeps a flat dev history") {
    auto rig = make_rig();
    TrainOptions opts;
    opts.epochs = 3;
    opts.seed = 42;
    AdapterModel model(rig.bb, rig.acfg, AdapterVariant::aa_focused({}), 2, 42,
                       false);
    REQUIRE(model.trainables().empty());
    auto res = train(model, rig.data, rig.plan, opts);
    REQUIRE_FALSE(res.failed);
    for (double dev : res.dev_history) CHECK(dev == res.dev_history[0]);
    CHECK(res.best_epoch == 0);  // ties resolve to the earlier epoch
    CHECK(res.trainable_params == 0);
}

TEST_CASE("a non-finite loss marks the run failed") {
    auto rig = make_rig();
    TrainOptions opts;
    opts.epochs = 2;
    opts.seed = 42;
    AdapterModel model(rig.bb, rig.acfg, AdapterVariant::baseline(), 2, 42);
    model.layers()[0].b_up->values[0] =
        std::numeric_limits<double>::quiet_NaN();
    auto res = train(model, rig.data, rig.plan, opts);
    CHECK(res.failed);
    CHECK(res.fail_reason.find("epoch 0") != std::string::npos);
    CHECK(std::isnan(res.test_metric));
}

TEST_CASE("training input validation") {
    auto rig = make_rig();
    TrainOptions opts;
    AdapterModel model(rig.bb, rig.acfg, AdapterVariant::baseline(), 2, 42);

    auto no_dev = rig.plan;
    no_dev.dev.clear();
    CHECK_THROWS_AS(train(model, rig.data, no_dev, opts), ConfigError);

    auto overlapping = rig.plan;
    overlapping.dev[0] = overlapping.train[0];
    CHECK_THROWS_AS(train(model, rig.data, overlapping, opts), ConfigError);

    auto bad = opts;
    bad.epochs = 0;
    CHECK_THROWS_AS(train(model, rig.data, rig.plan, bad), ConfigError);

    CHECK_THROWS_AS(evaluate(model, rig.data, {}), ConfigError);
}

TEST_CASE("baseline adapters master the keyword task on full data") {
    auto data = generate_synthetic_task(SyntheticKind::KeywordTopic, 800, 128,
                                        10, 3);
    BackboneConfig cfg;
    cfg.num_layers = 4;
    cfg.model_dim = 64;
    cfg.num_heads = 4;
    cfg.ffn_dim = 128;
    cfg.vocab_size = 128;
    cfg.max_seq_len = 10;
    auto bb = std::make_shared<Backbone>(build_backbone(cfg));
    AdapterConfig acfg;
    acfg.reduction_factor = 4;
    AdapterModel model(bb, acfg, AdapterVariant::baseline(), 2, 42);

    TrainOptions opts;
    opts.epochs = 20;
    opts.seed = 42;
    auto res = train(model, data, make_split(data, 0, 42), opts);
    REQUIRE_FALSE(res.failed);
    CHECK(res.test_metric >= 0.9);
    CHECK(res.test_metric ==
          doctest::Approx(kBaselineKeywordAccuracy).epsilon(1e-12));
}
