#include "adaptlab/model.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "adaptlab/adam.hpp"
#include "adaptlab/data.hpp"

namespace adaptlab {

namespace {
constexpr int kRationalM = 5;
constexpr int kRationalN = 4;
constexpr double kSwitchTau = 0.1;
}  // namespace

const char* activation_name(ActivationKind kind) {
    return kind == ActivationKind::Relu ? "relu" : "rational";
}

ActivationKind activation_from_name(const std::string& name) {
    if (name == "relu") return ActivationKind::Relu;
    if (name == "rational") return ActivationKind::Rational;
    throw ConfigError("unknown activation '" + name + "'");
}

std::vector<TensorRef> Backbone::weights() const {
    std::vector<TensorRef> out{tok_emb, pos_emb, emb_ln_g, emb_ln_b};
    for (const auto& b : blocks) {
        for (const auto& t : {b.attn.wq, b.attn.bq, b.attn.wk, b.attn.bk,
                              b.attn.wv, b.attn.bv, b.attn.wo, b.attn.bo,
                              b.ln1_g, b.ln1_b, b.w_ff1, b.b_ff1, b.w_ff2,
                              b.b_ff2, b.ln2_g, b.ln2_b})
            out.push_back(t);
    }
    return out;
}

i64 Backbone::param_count() const {
    i64 n = 0;
    for (const auto& w : weights()) n += w->size();
    return n;
}

Backbone build_backbone(const BackboneConfig& cfg) {
    if (cfg.num_layers < 1)
        throw ConfigError("backbone: num_layers " +
                          std::to_string(cfg.num_layers) + " < 1");
    if (cfg.model_dim % cfg.num_heads != 0)
        throw ConfigError("backbone: model_dim " + std::to_string(cfg.model_dim) +
                          " not divisible by " + std::to_string(cfg.num_heads) +
                          " heads");
    if (cfg.vocab_size <= kNumReserved)
        throw ConfigError("backbone: vocab_size " +
                          std::to_string(cfg.vocab_size) + " too small");
    const i64 d = cfg.model_dim;
    const i64 ffn = cfg.ffn_dim;
    const double wstd = 1.0 / std::sqrt(static_cast<double>(d));
    const double fstd = 1.0 / std::sqrt(static_cast<double>(ffn));

    Rng root(cfg.backbone_seed);
    auto draw = [](Rng r, std::vector<i64> shape, double std) {
        return randn(std::move(shape), r, std, false);
    };

    Backbone bb;
    bb.cfg = cfg;
    bb.tok_emb = draw(root.split("tok_emb"), {cfg.vocab_size, d}, 1.0);
    bb.pos_emb = draw(root.split("pos_emb"), {cfg.max_seq_len, d}, 1.0);
    bb.emb_ln_g = full({d}, 1.0);
    bb.emb_ln_b = zeros({d});
    for (int i = 0; i < cfg.num_layers; ++i) {
        Rng br = root.split("block" + std::to_string(i));
        EncoderBlock blk;
        blk.attn.wq = draw(br.split("wq"), {d, d}, wstd);
        blk.attn.bq = zeros({d});
        blk.attn.wk = draw(br.split("wk"), {d, d}, wstd);
        blk.attn.bk = zeros({d});
        blk.attn.wv = draw(br.split("wv"), {d, d}, wstd);
        blk.attn.bv = zeros({d});
        blk.attn.wo = draw(br.split("wo"), {d, d}, wstd);
        blk.attn.bo = zeros({d});
        blk.ln1_g = full({d}, 1.0);
        blk.ln1_b = zeros({d});
        blk.w_ff1 = draw(br.split("w_ff1"), {d, ffn}, wstd);
        blk.b_ff1 = zeros({ffn});
        blk.w_ff2 = draw(br.split("w_ff2"), {ffn, d}, fstd);
        blk.b_ff2 = zeros({d});
        blk.ln2_g = full({d}, 1.0);
        blk.ln2_b = zeros({d});
        bb.blocks.push_back(std::move(blk));
    }
    if (cfg.pretrain_steps > 0)
        pretext_pretrain(bb, cfg.pretrain_steps, 8, cfg.backbone_seed);
    return bb;
}

TensorRef backbone_hidden(
    Tape& tape, const Backbone& bb, std::span<const std::int32_t> token_ids,
    i64 batch,
    const std::function<TensorRef(Tape&, const TensorRef&, int)>& block_tail) {
    if (batch < 1 || token_ids.size() % static_cast<std::size_t>(batch) != 0)
        throw ConfigError("backbone: " + std::to_string(token_ids.size()) +
                          " ids do not fill batch " + std::to_string(batch));
    const i64 seq = static_cast<i64>(token_ids.size()) / batch;
    if (seq > bb.cfg.max_seq_len)
        throw ConfigError("backbone: sequence length " + std::to_string(seq) +
                          " exceeds max_seq_len " +
                          std::to_string(bb.cfg.max_seq_len));

    std::vector<std::int32_t> pos_ids(token_ids.size());
    for (std::size_t i = 0; i < pos_ids.size(); ++i)
        pos_ids[i] = static_cast<std::int32_t>(i % seq);

    auto x = add(tape, embedding(tape, bb.tok_emb, token_ids),
                 embedding(tape, bb.pos_emb, pos_ids));
    x = layer_norm(tape, x, bb.emb_ln_g, bb.emb_ln_b);
    for (int i = 0; i < bb.cfg.num_layers; ++i) {
        const auto& blk = bb.blocks[i];
        auto a = multi_head_attention(tape, x, blk.attn, batch, seq,
                                      bb.cfg.num_heads);
        x = layer_norm(tape, add(tape, x, a), blk.ln1_g, blk.ln1_b);
        auto f = add_bias(tape, matmul(tape, x, blk.w_ff1), blk.b_ff1);
        f = add_bias(tape, matmul(tape, relu(tape, f), blk.w_ff2), blk.b_ff2);
        x = layer_norm(tape, add(tape, x, f), blk.ln2_g, blk.ln2_b);
        if (block_tail) x = block_tail(tape, x, i);
    }
    return x;
}

void pretext_pretrain(Backbone& bb, int steps, i64 batch, std::uint64_t seed) {
    if (steps <= 0) return;
    auto weights = bb.weights();
    for (auto& w : weights) {
        w->requires_grad = true;
        w->on_path = true;
        w->ensure_grad();
    }
    const i64 d = bb.cfg.model_dim;
    const i64 seq = bb.cfg.max_seq_len;
    Rng rng = Rng(seed).split("pretext");
    Rng wr = rng.split("decoder");
    auto w_dec = randn({d, bb.cfg.vocab_size}, wr,
                       1.0 / std::sqrt(static_cast<double>(d)), true);
    auto b_dec = zeros({bb.cfg.vocab_size}, true);

    auto params = weights;
    params.push_back(w_dec);
    params.push_back(b_dec);
    AdamOptimizer opt(params, AdamConfig{});

    for (int step = 0; step < steps; ++step) {
        std::vector<std::int32_t> ids(batch * seq);
        std::vector<std::int32_t> masked_rows;
        std::vector<std::int32_t> targets;
        for (i64 i = 0; i < batch * seq; ++i) {
            ids[i] = static_cast<std::int32_t>(
                kNumReserved + rng.uniform_int(bb.cfg.vocab_size - kNumReserved));
        }
        for (i64 i = 0; i < batch * seq; ++i) {
            if (rng.uniform() < 0.15) {
                masked_rows.push_back(static_cast<std::int32_t>(i));
                targets.push_back(ids[i]);
                ids[i] = kMaskId;
            }
        }
        if (masked_rows.empty()) {
            masked_rows.push_back(0);
            targets.push_back(ids[0]);
            ids[0] = kMaskId;
        }
        Tape tape;
        auto hidden = backbone_hidden(tape, bb, ids, batch);
        auto picked = gather_rows(tape, hidden, masked_rows);
        auto logits = add_bias(tape, matmul(tape, picked, w_dec), b_dec);
        auto loss = cross_entropy(tape, logits, targets);
        opt.zero_grad();
        tape.backward(loss);
        opt.step();
    }
    for (auto& w : weights) {
        w->requires_grad = false;
        w->on_path = false;
        w->grad = {};
    }
}

i64 adapter_linear_params(i64 d, i64 r, bool with_biases) {
    const i64 hidden = d / r;
    const i64 core = hidden * d * 2;
    return with_biases ? core + hidden + d : core;
}

std::string AdapterVariant::label() const {
    if (!name.empty()) return name;
    switch (kind) {
        case Kind::Baseline:
            return "baseline";
        case Kind::AA:
            return "aa";
        case Kind::AAFocused:
            return std::string("aa_focused_") + activation_name(activation) +
                   "_" + std::to_string(layers.size());
        case Kind::AdapterDrop:
            return "adapterdrop_i" + std::to_string(infer_drop);
        case Kind::LastK:
            return "last" + std::to_string(k) + "_" + activation_name(activation);
        case Kind::SwitchOnly:
            return "switch_only";
        case Kind::RationalOnly:
            return "rational_only";
    }
    return "unknown";
}

const char* variant_kind_name(AdapterVariant::Kind kind) {
    switch (kind) {
        case AdapterVariant::Kind::Baseline:
            return "baseline";
        case AdapterVariant::Kind::AA:
            return "aa";
        case AdapterVariant::Kind::AAFocused:
            return "aa_focused";
        case AdapterVariant::Kind::AdapterDrop:
            return "adapterdrop";
        case AdapterVariant::Kind::LastK:
            return "lastk";
        case AdapterVariant::Kind::SwitchOnly:
            return "switch_only";
        case AdapterVariant::Kind::RationalOnly:
            return "rational_only";
    }
    return "unknown";
}

AdapterVariant AdapterVariant::baseline() {
    AdapterVariant v;
    v.kind = Kind::Baseline;
    return v;
}

AdapterVariant AdapterVariant::aa() {
    AdapterVariant v;
    v.kind = Kind::AA;
    return v;
}

AdapterVariant AdapterVariant::aa_focused(std::vector<int> layers,
                                          ActivationKind act) {
    AdapterVariant v;
    v.kind = Kind::AAFocused;
    v.layers = std::move(layers);
    v.activation = act;
    return v;
}

AdapterVariant AdapterVariant::adapter_drop(int infer_drop, int train_drop_max) {
    AdapterVariant v;
    v.kind = Kind::AdapterDrop;
    v.infer_drop = infer_drop;
    v.train_drop_max = train_drop_max;
    return v;
}

AdapterVariant AdapterVariant::last_k(int k, ActivationKind act) {
    AdapterVariant v;
    v.kind = Kind::LastK;
    v.k = k;
    v.activation = act;
    return v;
}

AdapterVariant AdapterVariant::switch_only() {
    AdapterVariant v;
    v.kind = Kind::SwitchOnly;
    return v;
}

AdapterVariant AdapterVariant::rational_only() {
    AdapterVariant v;
    v.kind = Kind::RationalOnly;
    return v;
}

void ArchitectureSpec::canonicalize() {
    std::set<int> s(selected_layers.begin(), selected_layers.end());
    selected_layers.assign(s.begin(), s.end());
    for (int i : selected_layers)
        if (i < 0 || i >= total_layers)
            throw ConfigError("architecture: layer " + std::to_string(i) +
                              " outside [0, " + std::to_string(total_layers) +
                              ")");
}

ArchitectureSpec make_sim_spec(int count, int total_layers) {
    if (count < 0 || count > total_layers)
        throw ConfigError("sim spec: count " + std::to_string(count) +
                          " outside [0, " + std::to_string(total_layers) + "]");
    ArchitectureSpec spec;
    spec.total_layers = total_layers;
    for (int i = total_layers - count; i < total_layers; ++i)
        spec.selected_layers.push_back(i);
    spec.activation = ActivationKind::Rational;
    return spec;
}

AdapterModel::AdapterModel(std::shared_ptr<Backbone> backbone,
                           AdapterConfig acfg, AdapterVariant variant,
                           int num_classes, std::uint64_t init_seed,
                           bool train_head)
    : backbone_(std::move(backbone)),
      acfg_(acfg),
      variant_(std::move(variant)),
      num_classes_(num_classes) {
    const int L = backbone_->cfg.num_layers;
    const i64 d = backbone_->cfg.model_dim;
    const i64 r = acfg_.reduction_factor;
    if (r < 1 || d % r != 0)
        throw ConfigError("adapter: reduction factor " + std::to_string(r) +
                          " does not divide model_dim " + std::to_string(d));
    const i64 hidden = d / r;
    if (num_classes_ < 2)
        throw ConfigError("adapter: num_classes " +
                          std::to_string(num_classes_) + " < 2");

    using Kind = AdapterVariant::Kind;
    if (variant_.kind == Kind::AAFocused) {
        std::set<int> s(variant_.layers.begin(), variant_.layers.end());
        for (int i : s)
            if (i < 0 || i >= L)
                throw ConfigError("adapter: focused layer " + std::to_string(i) +
                                  " outside [0, " + std::to_string(L) + ")");
        variant_.layers.assign(s.begin(), s.end());
    }
    if (variant_.kind == Kind::LastK && (variant_.k < 0 || variant_.k > L))
        throw ConfigError("adapter: k " + std::to_string(variant_.k) +
                          " outside [0, " + std::to_string(L) + "]");
    if (variant_.kind == Kind::AdapterDrop) {
        if (variant_.train_drop_max < 0) variant_.train_drop_max = L - 1;
        if (variant_.train_drop_max > L) variant_.train_drop_max = L;
        if (variant_.infer_drop < 0)
            throw ConfigError("adapter: negative infer_drop");
    }

    Rng root(init_seed);
    const double dstd = 1.0 / std::sqrt(static_cast<double>(d));
    layers_.resize(L);
    for (int i = 0; i < L; ++i) {
        AdapterLayer& lay = layers_[i];
        switch (variant_.kind) {
            case Kind::Baseline:
                lay.active = true;
                lay.skip = true;
                lay.activation = ActivationKind::Relu;
                break;
            case Kind::RationalOnly:
                lay.active = true;
                lay.skip = true;
                lay.activation = ActivationKind::Rational;
                break;
            case Kind::AA:
                lay.active = true;
                lay.has_switch = true;
                lay.skip = false;
                lay.activation = ActivationKind::Rational;
                break;
            case Kind::SwitchOnly:
                lay.active = true;
                lay.has_switch = true;
                lay.skip = false;
                lay.activation = ActivationKind::Relu;
                break;
            case Kind::AAFocused:
                lay.active = std::binary_search(variant_.layers.begin(),
                                                variant_.layers.end(), i);
                lay.skip = false;
                lay.activation = variant_.activation;
                break;
            case Kind::LastK:
                lay.active = i >= L - variant_.k;
                lay.skip = true;
                lay.activation = variant_.activation;
                break;
            case Kind::AdapterDrop:
                lay.active = true;
                lay.skip = true;
                lay.activation = ActivationKind::Relu;
                break;
        }
        if (!lay.active) continue;
        Rng lr = root.split("layer" + std::to_string(i));
        lay.w_down = randn({d, hidden}, lr, dstd, true);
        lay.b_down = zeros({hidden}, true);
        Rng ur = lr.split("up");
        // Fan-in scale ("initialized randomly"); a near-zero up-projection
        // would make the skip-free branches of AA/AAFocused start as a
        // constant function of the input and stall their training.
        lay.w_up = randn({hidden, d}, ur, 1.0 / std::sqrt((double)hidden), true);
        lay.b_up = zeros({d}, true);
        if (lay.activation == ActivationKind::Rational) {
            auto c = init_constant(1.0, kRationalM, kRationalN);
            lay.rat_a = make_tensor({kRationalM + 1}, c.a, true);
            lay.rat_b = make_tensor({kRationalN}, c.b, true);
        }
        if (lay.has_switch) lay.sw = make_switch_params(kSwitchTau, true);
    }
    Rng hr = root.split("head");
    head_w_ = randn({d, num_classes_}, hr, dstd, train_head);
    head_b_ = zeros({num_classes_}, train_head);
}

TensorRef AdapterModel::adapter_branch(Tape& tape, const TensorRef& h,
                                       const AdapterLayer& layer) {
    auto z = add_bias(tape, matmul(tape, h, layer.w_down), layer.b_down);
    TensorRef a = layer.activation == ActivationKind::Rational
                      ? rational_apply(tape, z, layer.rat_a, layer.rat_b)
                      : relu(tape, z);
    return add_bias(tape, matmul(tape, a, layer.w_up), layer.b_up);
}

TensorRef AdapterModel::layer_tail(Tape& tape, const TensorRef& h, int index,
                                   bool training, Rng* rng, int drop_prefix) {
    AdapterLayer& lay = layers_[index];
    if (variant_.kind == AdapterVariant::Kind::AdapterDrop &&
        index < drop_prefix)
        return h;
    if (!lay.active) return h;
    if (lay.has_switch) {
        if (training) {
            auto y = gs_forward(tape, lay.sw, gumbel_sample(*rng));
            auto branch = adapter_branch(tape, h, lay);
            return mix(tape, y, branch, h, acfg_.straight_through);
        }
        return hard_decision(lay.sw) == SwitchChoice::Adapter
                   ? adapter_branch(tape, h, lay)
                   : h;
    }
    auto branch = adapter_branch(tape, h, lay);
    return lay.skip ? add(tape, h, branch) : branch;
}

TensorRef AdapterModel::forward(Tape& tape,
                                std::span<const std::int32_t> token_ids,
                                i64 batch, bool training, Rng* rng) {
    if (training && !rng)
        throw ConfigError("forward: training mode needs an rng");
    int drop_prefix = 0;
    if (variant_.kind == AdapterVariant::Kind::AdapterDrop) {
        const int L = backbone_->cfg.num_layers;
        if (training) {
            drop_prefix = static_cast<int>(
                rng->uniform_int(static_cast<std::uint64_t>(
                    variant_.train_drop_max + 1)));
        } else {
            drop_prefix = variant_.infer_drop;
            if (drop_prefix > L) {
                static bool warned = false;
                if (!warned) {
                    std::fprintf(stderr,
                                 "warning: infer_drop %d clamped to %d layers\n",
                                 drop_prefix, L);
                    warned = true;
                }
                drop_prefix = L;
            }
        }
    }
    auto tail = [&](Tape& t, const TensorRef& h, int i) {
        return layer_tail(t, h, i, training, rng, drop_prefix);
    };
    auto hidden = backbone_hidden(tape, *backbone_, token_ids, batch, tail);
    auto pooled = mean_pool_seq(tape, hidden, batch);
    return add_bias(tape, matmul(tape, pooled, head_w_), head_b_);
}

std::vector<TensorRef> AdapterModel::trainables() const {
    std::vector<TensorRef> out;
    auto take = [&out](const TensorRef& t) {
        if (t && t->requires_grad) out.push_back(t);
    };
    for (const auto& lay : layers_) {
        take(lay.w_down);
        take(lay.b_down);
        take(lay.w_up);
        take(lay.b_up);
        take(lay.rat_a);
        take(lay.rat_b);
        if (lay.has_switch) take(lay.sw.logits);
    }
    take(head_w_);
    take(head_b_);
    return out;
}

ParamCounts AdapterModel::param_counts() const {
    ParamCounts c;
    c.backbone = backbone_->param_count();
    for (const auto& lay : layers_) {
        if (!lay.active) continue;
        c.adapter_linear += lay.w_down->size() + lay.b_down->size() +
                            lay.w_up->size() + lay.b_up->size();
        if (lay.rat_a) c.rational += lay.rat_a->size() + lay.rat_b->size();
        if (lay.has_switch) c.switches += lay.sw.logits->size();
    }
    c.head = head_w_->size() + head_b_->size();
    return c;
}

i64 AdapterModel::count_parameters(bool trainable_only) const {
    if (trainable_only) {
        i64 n = 0;
        for (const auto& t : trainables()) n += t->size();
        return n;
    }
    const auto c = param_counts();
    return c.backbone + c.adapter_linear + c.rational + c.switches + c.head;
}

ArchitectureSpec AdapterModel::extract_architecture(
    const std::string& task, std::uint64_t seed,
    const std::string& setting) const {
    ArchitectureSpec spec;
    spec.total_layers = backbone_->cfg.num_layers;
    spec.activation = variant_.kind == AdapterVariant::Kind::SwitchOnly
                          ? ActivationKind::Relu
                          : ActivationKind::Rational;
    spec.provenance_task = task;
    spec.provenance_seed = seed;
    spec.provenance_setting = setting;
    bool any_switch = false;
    for (int i = 0; i < spec.total_layers; ++i) {
        const auto& lay = layers_[i];
        if (!lay.has_switch) {
            spec.switch_probabilities.push_back({0.0, 1.0});
            continue;
        }
        any_switch = true;
        spec.switch_probabilities.push_back(switch_pi(lay.sw));
        if (hard_decision(lay.sw) == SwitchChoice::Adapter)
            spec.selected_layers.push_back(i);
    }
    if (!any_switch)
        throw ConfigError(
            "extract_architecture: model variant '" + variant_.label() +
            "' has no switches");
    spec.canonicalize();
    return spec;
}

}  // namespace adaptlab
