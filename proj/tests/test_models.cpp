#include <doctest.h>

#include <cmath>
#include <cstring>

#include "adaptlab/adam.hpp"
#include "adaptlab/data.hpp"
#include "adaptlab/model.hpp"

using namespace adaptlab;

namespace {

bool bit_equal(const TensorRef& a, const TensorRef& b) {
    return a->shape == b->shape &&
           std::memcmp(a->values.data(), b->values.data(),
                       a->values.size() * sizeof(double)) == 0;
}

BackboneConfig tiny_config(int layers = 4) {
    BackboneConfig cfg;
    cfg.num_layers = layers;
    cfg.model_dim = 16;
    cfg.num_heads = 2;
    cfg.ffn_dim = 32;
    cfg.vocab_size = 64;
    cfg.max_seq_len = 6;
    cfg.backbone_seed = 7;
    return cfg;
}

std::vector<std::int32_t> random_ids(const BackboneConfig& cfg, i64 batch,
                                     std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::int32_t> ids(batch * cfg.max_seq_len);
    for (auto& t : ids)
        t = static_cast<std::int32_t>(
            kNumReserved + rng.uniform_int(cfg.vocab_size - kNumReserved));
    return ids;
}

TensorRef eval_logits(AdapterModel& model, const std::vector<std::int32_t>& ids,
                      i64 batch) {
    Tape tape;
    return model.forward(tape, ids, batch, false, nullptr);
}

void force_switch(AdapterModel& model, int layer, bool adapter) {
    auto& sw = model.layers()[layer].sw;
    sw.logits->values[0] = adapter ? 3.0 : -3.0;
    sw.logits->values[1] = adapter ? -3.0 : 3.0;
}

}  // namespace

TEST_CASE("activation and variant names round-trip") {
    CHECK(activation_from_name("relu") == ActivationKind::Relu);
    CHECK(activation_from_name("rational") == ActivationKind::Rational);
    CHECK(std::string(activation_name(ActivationKind::Rational)) == "rational");
    CHECK_THROWS_AS(activation_from_name("gelu"), ConfigError);

    CHECK(AdapterVariant::baseline().label() == "baseline");
    CHECK(AdapterVariant::aa().label() == "aa");
    CHECK(AdapterVariant::last_k(3).label() == "last3_relu");
    CHECK(AdapterVariant::adapter_drop(11).label() == "adapterdrop_i11");
    CHECK(std::string(variant_kind_name(AdapterVariant::Kind::AAFocused)) ==
          "aa_focused");
}

TEST_CASE("adapter linear parameter counts") {
    CHECK(adapter_linear_params(64, 16, true) == 580);
    CHECK(adapter_linear_params(768, 16, false) == 73728);
    CHECK(12 * adapter_linear_params(768, 16, false) == 884736);
    CHECK(adapter_linear_params(1024, 16, false) == 131072);
    CHECK(24 * adapter_linear_params(1024, 16, false) == 3145728);
}

TEST_CASE("backbone is deterministic, frozen, and counts match hand sum") {
    BackboneConfig cfg;
    cfg.num_layers = 8;
    cfg.model_dim = 64;
    cfg.num_heads = 4;
    cfg.ffn_dim = 128;
    cfg.vocab_size = 2048;
    cfg.max_seq_len = 16;
    auto a = build_backbone(cfg);
    auto b = build_backbone(cfg);
    auto wa = a.weights();
    auto wb = b.weights();
    REQUIRE(wa.size() == wb.size());
    for (std::size_t i = 0; i < wa.size(); ++i) {
        CHECK(bit_equal(wa[i], wb[i]));
        CHECK_FALSE(wa[i]->requires_grad);
    }

    const i64 d = 64, ffn = 128;
    const i64 emb = 2048 * d + 16 * d + 2 * d;
    const i64 attn = 4 * (d * d + d);
    const i64 ff = d * ffn + ffn + ffn * d + d;
    const i64 lns = 4 * d;
    CHECK(a.param_count() == emb + 8 * (attn + ff + lns));
}

TEST_CASE("backbone forward gives finite pooled features") {
    auto cfg = tiny_config();
    auto bb = build_backbone(cfg);
    auto ids = random_ids(cfg, 2, 5);
    Tape tape;
    auto hidden = backbone_hidden(tape, bb, ids, 2);
    auto pooled = mean_pool_seq(tape, hidden, 2);
    REQUIRE(pooled->shape == std::vector<i64>{2, cfg.model_dim});
    for (double v : pooled->values) CHECK(std::isfinite(v));
}

TEST_CASE("backbone input validation") {
    auto cfg = tiny_config();
    auto bb = build_backbone(cfg);
    Tape tape;
    std::vector<std::int32_t> too_long(2 * (cfg.max_seq_len + 1), kNumReserved);
    CHECK_THROWS_AS(backbone_hidden(tape, bb, too_long, 2), ConfigError);
    std::vector<std::int32_t> ragged(cfg.max_seq_len + 1, kNumReserved);
    CHECK_THROWS_AS(backbone_hidden(tape, bb, ragged, 2), ConfigError);

    auto bad = cfg;
    bad.num_heads = 3;  // does not divide d=16
    CHECK_THROWS_AS(build_backbone(bad), ConfigError);
}

TEST_CASE("zero up-projection collapses every adapter variant to the skip") {
    auto bb = std::make_shared<Backbone>(build_backbone(tiny_config()));
    AdapterConfig acfg;
    acfg.reduction_factor = 4;
    auto ids = random_ids(bb->cfg, 3, 11);

    AdapterModel base(bb, acfg, AdapterVariant::baseline(), 2, 99);
    for (auto& lay : base.layers()) {
        std::fill(lay.w_up->values.begin(), lay.w_up->values.end(), 0.0);
        std::fill(lay.b_up->values.begin(), lay.b_up->values.end(), 0.0);
    }
    AdapterModel empty(bb, acfg, AdapterVariant::aa_focused({}), 2, 99);
    CHECK(bit_equal(eval_logits(base, ids, 3), eval_logits(empty, ids, 3)));

    AdapterModel drop_all(bb, acfg, AdapterVariant::adapter_drop(
                                        bb->cfg.num_layers), 2, 99);
    CHECK(bit_equal(eval_logits(drop_all, ids, 3), eval_logits(empty, ids, 3)));
}

TEST_CASE("aa layer forced to identity or zeroed adapter") {
    auto bb = std::make_shared<Backbone>(build_backbone(tiny_config(1)));
    AdapterConfig acfg;
    acfg.reduction_factor = 4;
    auto ids = random_ids(bb->cfg, 2, 3);

    // All switches at identity: same logits as no adapters at all.
    AdapterModel aa(bb, acfg, AdapterVariant::aa(), 2, 99);
    force_switch(aa, 0, false);
    AdapterModel empty(bb, acfg, AdapterVariant::aa_focused({}), 2, 99);
    CHECK(bit_equal(eval_logits(aa, ids, 2), eval_logits(empty, ids, 2)));

    // Adapter branch with zero up-projection has no skip: the layer output is
    // the zero vector, so pooled features and logits vanish (head bias is 0).
    force_switch(aa, 0, true);
    auto& lay = aa.layers()[0];
    std::fill(lay.w_up->values.begin(), lay.w_up->values.end(), 0.0);
    std::fill(lay.b_up->values.begin(), lay.b_up->values.end(), 0.0);
    auto logits = eval_logits(aa, ids, 2);
    for (double v : logits->values) CHECK(v == 0.0);
}

TEST_CASE("aa focused at inference equals hard-set aa switches") {
    auto bb = std::make_shared<Backbone>(build_backbone(tiny_config(8)));
    AdapterConfig acfg;
    acfg.reduction_factor = 4;
    auto ids = random_ids(bb->cfg, 4, 21);
    const std::vector<int> selected{1, 4, 6};

    AdapterModel aa(bb, acfg, AdapterVariant::aa(), 2, 99);
    for (int i = 0; i < 8; ++i)
        force_switch(aa, i, std::find(selected.begin(), selected.end(), i) !=
                                selected.end());
    AdapterModel focused(bb, acfg, AdapterVariant::aa_focused(selected), 2, 99);
    CHECK(bit_equal(eval_logits(aa, ids, 4), eval_logits(focused, ids, 4)));
}

TEST_CASE("adapterdrop prefix bypass matches the last-k construction") {
    auto cfg = tiny_config(24);
    auto bb = std::make_shared<Backbone>(build_backbone(cfg));
    AdapterConfig acfg;
    acfg.reduction_factor = 4;
    auto ids = random_ids(cfg, 2, 17);

    AdapterModel base(bb, acfg, AdapterVariant::baseline(), 2, 99);
    AdapterModel drop0(bb, acfg, AdapterVariant::adapter_drop(0), 2, 99);
    CHECK(bit_equal(eval_logits(drop0, ids, 2), eval_logits(base, ids, 2)));

    // Dropping the first 11 of 24 leaves adapters on layers 11..23, exactly
    // the last-13 construction with identical weights.
    AdapterModel drop11(bb, acfg, AdapterVariant::adapter_drop(11), 2, 99);
    AdapterModel last13(bb, acfg, AdapterVariant::last_k(13), 2, 99);
    CHECK(bit_equal(eval_logits(drop11, ids, 2), eval_logits(last13, ids, 2)));

    // Over-long prefixes clamp to L (with a warning) and equal the full drop.
    AdapterModel dropL(bb, acfg, AdapterVariant::adapter_drop(24), 2, 99);
    AdapterModel dropover(bb, acfg, AdapterVariant::adapter_drop(30), 2, 99);
    CHECK(bit_equal(eval_logits(dropover, ids, 2), eval_logits(dropL, ids, 2)));
}

TEST_CASE("last-k over every layer equals baseline") {
    auto bb = std::make_shared<Backbone>(build_backbone(tiny_config()));
    AdapterConfig acfg;
    acfg.reduction_factor = 4;
    auto ids = random_ids(bb->cfg, 3, 31);
    AdapterModel base(bb, acfg, AdapterVariant::baseline(), 2, 99);
    AdapterModel lastL(bb, acfg,
                       AdapterVariant::last_k(bb->cfg.num_layers), 2, 99);
    CHECK(bit_equal(eval_logits(lastL, ids, 3), eval_logits(base, ids, 3)));
}

TEST_CASE("extract_architecture reads hard decisions and probabilities") {
    auto bb = std::make_shared<Backbone>(build_backbone(tiny_config()));
    AdapterConfig acfg;
    acfg.reduction_factor = 4;
    AdapterModel aa(bb, acfg, AdapterVariant::aa(), 2, 99);

    for (int i = 0; i < 4; ++i) force_switch(aa, i, true);
    auto all_on = aa.extract_architecture("t", 42, "full");
    CHECK(all_on.selected_layers == std::vector<int>{0, 1, 2, 3});
    CHECK(all_on.total_layers == 4);
    CHECK(all_on.provenance_task == "t");
    CHECK(all_on.provenance_seed == 42);
    REQUIRE(all_on.switch_probabilities.size() == 4);
    for (const auto& pi : all_on.switch_probabilities) {
        CHECK(pi[0] + pi[1] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(pi[0] > 0.99);
    }

    for (int i = 0; i < 4; ++i) force_switch(aa, i, false);
    CHECK(aa.extract_architecture("t", 42, "full").selected_layers.empty());

    AdapterModel base(bb, acfg, AdapterVariant::baseline(), 2, 99);
    CHECK_THROWS_AS(base.extract_architecture("t", 42, "full"), ConfigError);
}

TEST_CASE("make_sim_spec selects the last count layers") {
    auto spec = make_sim_spec(13, 24);
    CHECK(spec.selected_layers ==
          std::vector<int>{11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23});
    CHECK(make_sim_spec(0, 24).selected_layers.empty());
    CHECK(make_sim_spec(4, 4).selected_layers == std::vector<int>{0, 1, 2, 3});
    CHECK_THROWS_AS(make_sim_spec(25, 24), ConfigError);
    CHECK_THROWS_AS(make_sim_spec(-1, 24), ConfigError);
}

TEST_CASE("parameter count report splits") {
    BackboneConfig cfg;
    cfg.num_layers = 8;
    cfg.model_dim = 64;
    cfg.num_heads = 4;
    cfg.ffn_dim = 128;
    cfg.vocab_size = 256;
    cfg.max_seq_len = 8;
    auto bb = std::make_shared<Backbone>(build_backbone(cfg));
    AdapterConfig acfg;  // r = 16

    AdapterModel base(bb, acfg, AdapterVariant::baseline(), 2, 99);
    auto bc = base.param_counts();
    CHECK(bc.adapter_linear == 8 * 580);
    CHECK(bc.rational == 0);
    CHECK(bc.switches == 0);
    CHECK(bc.head == 64 * 2 + 2);
    CHECK(bc.trainable() == base.count_parameters(true));
    CHECK(bc.total() == base.count_parameters(false));

    AdapterModel aa(bb, acfg, AdapterVariant::aa(), 2, 99);
    auto ac = aa.param_counts();
    CHECK(ac.adapter_linear == 8 * 580);
    CHECK(ac.rational == 8 * 10);
    CHECK(ac.switches == 8 * 2);
    CHECK(ac.trainable() == aa.count_parameters(true));

    i64 prev = -1;
    for (int k = 0; k <= 3; ++k) {
        std::vector<int> sel;
        for (int i = 0; i < k; ++i) sel.push_back(i);
        AdapterModel m(bb, acfg, AdapterVariant::aa_focused(sel), 2, 99);
        const i64 cur = m.count_parameters(true);
        CHECK(cur > prev);
        prev = cur;
    }
}

TEST_CASE("frozen head is excluded from trainables") {
    auto bb = std::make_shared<Backbone>(build_backbone(tiny_config()));
    AdapterConfig acfg;
    acfg.reduction_factor = 4;
    AdapterModel m(bb, acfg, AdapterVariant::baseline(), 2, 99, false);
    for (const auto& t : m.trainables()) {
        CHECK(t != m.head_w());
        CHECK(t != m.head_b());
    }
}

TEST_CASE("backbone stays bit-identical through adapter training") {
    auto cfg = tiny_config();
    auto bb = std::make_shared<Backbone>(build_backbone(cfg));
    std::vector<std::vector<double>> before;
    for (const auto& w : bb->weights()) before.push_back(w->values);

    AdapterConfig acfg;
    acfg.reduction_factor = 4;
    AdapterModel aa(bb, acfg, AdapterVariant::aa(), 2, 99);
    for (const auto& t : aa.trainables()) CHECK(t->requires_grad);

    AdamOptimizer opt(aa.trainables(), AdamConfig{});
    Rng rng(5);
    for (int step = 0; step < 3; ++step) {
        auto ids = random_ids(cfg, 4, 100 + step);
        std::vector<std::int32_t> labels{0, 1, 1, 0};
        Tape tape;
        auto logits = aa.forward(tape, ids, 4, true, &rng);
        auto loss = cross_entropy(tape, logits, labels);
        opt.zero_grad();
        tape.backward(loss);
        opt.step();
    }
    auto after = bb->weights();
    for (std::size_t i = 0; i < after.size(); ++i) {
        CHECK(std::memcmp(after[i]->values.data(), before[i].data(),
                          before[i].size() * sizeof(double)) == 0);
        CHECK(after[i]->grad.empty());
    }
}

TEST_CASE("training forward without an rng is rejected") {
    auto bb = std::make_shared<Backbone>(build_backbone(tiny_config(1)));
    AdapterConfig acfg;
    acfg.reduction_factor = 4;
    AdapterModel aa(bb, acfg, AdapterVariant::aa(), 2, 99);
    auto ids = random_ids(bb->cfg, 1, 2);
    Tape tape;
    CHECK_THROWS_AS(aa.forward(tape, ids, 1, true, nullptr), ConfigError);
}

TEST_CASE("full aa training loss matches finite differences") {
    BackboneConfig cfg;
    cfg.num_layers = 2;
    cfg.model_dim = 8;
    cfg.num_heads = 2;
    cfg.ffn_dim = 16;
    cfg.vocab_size = 32;
    cfg.max_seq_len = 4;
    auto bb = std::make_shared<Backbone>(build_backbone(cfg));
    AdapterConfig acfg;
    acfg.reduction_factor = 4;
    AdapterModel aa(bb, acfg, AdapterVariant::aa(), 2, 99);

    auto ids = random_ids(cfg, 2, 55);
    std::vector<std::int32_t> labels{0, 1};
    // A fresh generator per call keeps the Gumbel noise identical across the
    // nudged evaluations.
    auto loss_value = [&]() {
        Rng rng(909);
        Tape tape;
        auto logits = aa.forward(tape, ids, 2, true, &rng);
        return cross_entropy(tape, logits, labels)->values[0];
    };
    auto loss_and_grads = [&]() {
        Rng rng(909);
        Tape tape;
        auto logits = aa.forward(tape, ids, 2, true, &rng);
        auto loss = cross_entropy(tape, logits, labels);
        for (const auto& t : aa.trainables()) t->ensure_grad();
        tape.backward(loss);
    };

    loss_and_grads();
    std::vector<std::vector<double>> grads;
    for (const auto& t : aa.trainables()) grads.push_back(t->grad);

    const double eps = 1e-5;
    Rng pick(3);
    std::size_t checked = 0;
    auto params = aa.trainables();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& t = params[pi];
        const std::size_t n = t->values.size();
        const std::size_t probes = std::min<std::size_t>(n, 4);
        for (std::size_t k = 0; k < probes; ++k) {
            const std::size_t idx = pick.uniform_int(n);
            const double keep = t->values[idx];
            t->values[idx] = keep + eps;
            const double up = loss_value();
            t->values[idx] = keep - eps;
            const double down = loss_value();
            t->values[idx] = keep;
            const double fd = (up - down) / (2 * eps);
            const double an = grads[pi][idx];
            const double err =
                std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4});
            CHECK(err <= 1e-3);
            ++checked;
        }
    }
    CHECK(checked >= 30);
}

TEST_CASE("pretext pretraining perturbs then refreezes the backbone") {
    auto cfg = tiny_config(2);
    auto plain = build_backbone(cfg);

    auto cfg2 = cfg;
    cfg2.pretrain_steps = 2;
    auto tuned = build_backbone(cfg2);
    auto tuned_again = build_backbone(cfg2);

    bool any_diff = false;
    auto wp = plain.weights();
    auto wt = tuned.weights();
    auto wt2 = tuned_again.weights();
    for (std::size_t i = 0; i < wp.size(); ++i) {
        if (!bit_equal(wp[i], wt[i])) any_diff = true;
        CHECK(bit_equal(wt[i], wt2[i]));
        CHECK_FALSE(wt[i]->requires_grad);
        CHECK(wt[i]->grad.empty());
    }
    CHECK(any_diff);
}

TEST_CASE("adapter model config validation") {
    auto bb = std::make_shared<Backbone>(build_backbone(tiny_config()));
    AdapterConfig acfg;
    acfg.reduction_factor = 5;  // does not divide 16
    CHECK_THROWS_AS(
        AdapterModel(bb, acfg, AdapterVariant::baseline(), 2, 99), ConfigError);

    AdapterConfig ok;
    ok.reduction_factor = 4;
    CHECK_THROWS_AS(
        AdapterModel(bb, ok, AdapterVariant::aa_focused({9}), 2, 99),
        ConfigError);
    CHECK_THROWS_AS(AdapterModel(bb, ok, AdapterVariant::last_k(5), 2, 99),
                    ConfigError);
    CHECK_THROWS_AS(AdapterModel(bb, ok, AdapterVariant::baseline(), 1, 99),
                    ConfigError);
}
