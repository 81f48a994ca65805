#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adaptlab/gumbel.hpp"
#include "adaptlab/ops.hpp"
#include "adaptlab/rational.hpp"

namespace adaptlab {

enum class ActivationKind { Relu, Rational };

const char* activation_name(ActivationKind kind);
ActivationKind activation_from_name(const std::string& name);

// Frozen toy transformer encoder geometry. Weights are generated
// deterministically from backbone_seed and stay frozen through every
// experiment; pretrain_steps > 0 runs a brief masked-token pretext phase
// before freezing.
struct BackboneConfig {
    int num_layers = 8;
    int model_dim = 64;
    int num_heads = 4;
    int ffn_dim = 128;
    int vocab_size = 2048;
    int max_seq_len = 16;
    std::uint64_t backbone_seed = 7;
    int pretrain_steps = 0;
};

struct EncoderBlock {
    AttentionWeights attn;
    TensorRef ln1_g, ln1_b;
    TensorRef w_ff1, b_ff1, w_ff2, b_ff2;
    TensorRef ln2_g, ln2_b;
};

struct Backbone {
    BackboneConfig cfg;
    TensorRef tok_emb;  // vocab x d
    TensorRef pos_emb;  // max_seq_len x d
    TensorRef emb_ln_g, emb_ln_b;
    std::vector<EncoderBlock> blocks;

    std::vector<TensorRef> weights() const;
    i64 param_count() const;
};

Backbone build_backbone(const BackboneConfig& cfg);

// Hidden states (batch*seq x d) after the final block; block_tail, when
// given, post-processes each block's output (the adapter mounting point).
TensorRef backbone_hidden(
    Tape& tape, const Backbone& bb, std::span<const std::int32_t> token_ids,
    i64 batch,
    const std::function<TensorRef(Tape&, const TensorRef&, int)>& block_tail =
        nullptr);

// Masked-token recovery training of the backbone itself (pretext phase);
// weights are trainable during the phase and re-frozen afterwards.
void pretext_pretrain(Backbone& bb, int steps, i64 batch, std::uint64_t seed);

struct AdapterConfig {
    int reduction_factor = 16;
    // Defaults for variants that do not pin them.
    ActivationKind activation = ActivationKind::Relu;
    bool skip_connection = true;
    // Hard-forward/soft-backward Gumbel estimator during AA training.
    bool straight_through = false;
};

// Adapter linear parameter count for one layer; the paper's footnote figure
// is the bias-free form (d/r)*d*2.
i64 adapter_linear_params(i64 d, i64 r, bool with_biases);

struct AdapterVariant {
    enum class Kind {
        Baseline,
        AA,
        AAFocused,
        AdapterDrop,
        LastK,
        SwitchOnly,
        RationalOnly,
    };
    Kind kind = Kind::Baseline;
    std::vector<int> layers;  // AAFocused selection
    ActivationKind activation = ActivationKind::Rational;  // AAFocused / LastK
    int train_drop_max = -1;  // AdapterDrop; -1 means L-1
    int infer_drop = 0;       // AdapterDrop
    int k = 0;                // LastK
    std::string name;         // report label override
    // Derived variants can be bound to one task and/or data setting.
    std::string task_filter;
    std::string setting_filter;

    std::string label() const;

    static AdapterVariant baseline();
    static AdapterVariant aa();
    static AdapterVariant aa_focused(std::vector<int> layers,
                                     ActivationKind act = ActivationKind::Rational);
    static AdapterVariant adapter_drop(int infer_drop, int train_drop_max = -1);
    static AdapterVariant last_k(int k,
                                 ActivationKind act = ActivationKind::Relu);
    static AdapterVariant switch_only();
    static AdapterVariant rational_only();
};

const char* variant_kind_name(AdapterVariant::Kind kind);

// The layer set a trained AA's switches picked, plus where it came from.
struct ArchitectureSpec {
    std::vector<int> selected_layers;
    int total_layers = 0;
    ActivationKind activation = ActivationKind::Rational;
    std::string provenance_task;
    std::uint64_t provenance_seed = 0;
    std::string provenance_setting;
    std::vector<std::array<double, 2>> switch_probabilities;

    // Sort + deduplicate + range-check selected_layers.
    void canonicalize();
};

// Last `count` layer indices (the sim-mode construction).
ArchitectureSpec make_sim_spec(int count, int total_layers);

struct AdapterLayer {
    bool active = false;      // owns adapter weights
    bool has_switch = false;  // AA-style selector
    bool skip = false;        // residual around the adapter
    ActivationKind activation = ActivationKind::Relu;
    TensorRef w_down, b_down, w_up, b_up;
    TensorRef rat_a, rat_b;  // rational coefficients when activation is Rational
    SwitchParams sw;
};

struct ParamCounts {
    i64 backbone = 0;
    i64 adapter_linear = 0;
    i64 rational = 0;
    i64 switches = 0;
    i64 head = 0;

    i64 trainable() const { return adapter_linear + rational + switches + head; }
    i64 total() const { return backbone + trainable(); }
};

// A frozen backbone plus one adapter scheme and a trainable classifier head.
class AdapterModel {
  public:
    AdapterModel(std::shared_ptr<Backbone> backbone, AdapterConfig acfg,
                 AdapterVariant variant, int num_classes,
                 std::uint64_t init_seed, bool train_head = true);

    // Logits (batch x num_classes). Training mode draws one Gumbel sample per
    // switch layer per call and resamples the AdapterDrop prefix; rng is
    // required then and ignored at inference.
    TensorRef forward(Tape& tape, std::span<const std::int32_t> token_ids,
                      i64 batch, bool training, Rng* rng);

    std::vector<TensorRef> trainables() const;
    ParamCounts param_counts() const;
    i64 count_parameters(bool trainable_only) const;

    // Selected layers by hard switch decision; model must have switches.
    ArchitectureSpec extract_architecture(const std::string& task,
                                          std::uint64_t seed,
                                          const std::string& setting) const;

    const AdapterVariant& variant() const { return variant_; }
    const AdapterConfig& adapter_config() const { return acfg_; }
    const Backbone& backbone() const { return *backbone_; }
    std::vector<AdapterLayer>& layers() { return layers_; }
    const std::vector<AdapterLayer>& layers() const { return layers_; }
    const TensorRef& head_w() const { return head_w_; }
    const TensorRef& head_b() const { return head_b_; }
    int num_classes() const { return num_classes_; }

  private:
    TensorRef adapter_branch(Tape& tape, const TensorRef& h,
                             const AdapterLayer& layer);
    TensorRef layer_tail(Tape& tape, const TensorRef& h, int index,
                         bool training, Rng* rng, int drop_prefix);

    std::shared_ptr<Backbone> backbone_;
    AdapterConfig acfg_;
    AdapterVariant variant_;
    int num_classes_;
    std::vector<AdapterLayer> layers_;
    TensorRef head_w_, head_b_;
};

}  // namespace adaptlab
