#pragma once

#include <functional>
#include <vector>

#include "adaptlab/tensor.hpp"

namespace adaptlab {

// Ordered record of executed primitives. Ops append in execution order, which
// is a topological order of the data flow, so replaying the record backward
// visits every node exactly once with all downstream gradients already
// accumulated. A tape is confined to one training run (no internal locking).
class Tape {
  public:
    // out must already hold its forward value; backward reads out->grad and
    // accumulates into the grads of the op's on-path inputs.
    void push(TensorRef out, std::function<void()> backward) {
        nodes_.push_back(Node{std::move(out), std::move(backward)});
    }

    std::size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and replays the record in reverse, then
    // clears it; a second backward without a new forward is an error.
    void backward(const TensorRef& loss) {
        if (!loss || loss->size() != 1) {
            throw ConfigError(
                "backward: loss must be a scalar tensor, got shape " +
                (loss ? shape_str(loss->shape) : std::string("null")));
        }
        if (nodes_.empty()) {
            throw ConfigError(
                "backward: tape is empty (second backward without a new "
                "forward pass?)");
        }
        if (loss->on_path) {
            loss->ensure_grad();
            loss->grad[0] += 1.0;
        }
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            if (it->backward) it->backward();
        }
        nodes_.clear();
    }

    void clear() { nodes_.clear(); }

  private:
    struct Node {
        TensorRef out;
        std::function<void()> backward;
    };
    std::vector<Node> nodes_;
};

}  // namespace adaptlab
