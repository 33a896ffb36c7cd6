"""Stacked reasoning layers: question-fact interaction DNNs plus pooling."""

from __future__ import annotations

from dataclasses import dataclass, field

from .autodiff import (
    ShapeError,
    Tensor,
    add,
    add_n,
    concat,
    matmul,
    max_elementwise,
    mean_elementwise,
    mul,
    row,
    sigmoid,
    slice_vec,
    softmax_axis0,
    stack,
    tanh,
)

POOLING_KINDS = ("max", "avg", "gating")


@dataclass
class ReasonerConfig:
    """Shape of the reasoning stack."""

    layers: int = 2
    dnn_depth: int = 2
    layer_dims: list = field(default_factory=list)  # D_l per layer; filled at build
    pooling: str = "max"
    update_facts: bool = False
    activation: str = "tanh"

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("need at least one reasoning layer")
        if self.dnn_depth < 1:
            raise ValueError("need at least one DNN layer")
        if self.pooling not in POOLING_KINDS:
            raise ValueError(f"unknown pooling kind {self.pooling!r}")
        if self.layer_dims and len(self.layer_dims) != self.layers:
            raise ValueError("layer_dims length must equal the layer count")


def _activation(name):
    return tanh if name == "tanh" else sigmoid


@dataclass
class LayerParams:
    """Weights of one interaction DNN plus optional gating weights."""

    weights: list  # [(W, b)] per DNN sub-layer
    gate: tuple | None = None  # (W, b) of the gating network

    @classmethod
    def init(cls, rng, q_dim, f_dim, out_dim, dnn_depth, init_range,
             update_facts=False, gating=False):
        def u(*shape):
            return Tensor(rng.uniform(-init_range, init_range, shape), requires_grad=True)

        in_dim = q_dim + f_dim
        final = out_dim + (f_dim if update_facts else 0)
        dims = [in_dim] + [final] * dnn_depth
        weights = [(u(dims[i + 1], dims[i]), u(dims[i + 1])) for i in range(dnn_depth)]
        gate = (u(out_dim, in_dim), u(out_dim)) if gating else None
        return cls(weights=weights, gate=gate)

    def tensors(self, prefix=""):
        for i, (w, b) in enumerate(self.weights):
            yield f"{prefix}dnn{i}.W", w
            yield f"{prefix}dnn{i}.b", b
        if self.gate is not None:
            yield f"{prefix}gate.W", self.gate[0]
            yield f"{prefix}gate.b", self.gate[1]


def interact(layer, q, f_k, out_dim, update_facts=False, activation="tanh"):
    """Run concat(q, f_k) through the interaction DNN.

    Returns (updated question, fact representation). With update_facts off the
    fact passes through untouched; otherwise the DNN output is split into the
    question part and the new fact part.
    """
    act = _activation(activation)
    x = concat([q, f_k])
    for w, b in layer.weights:
        x = act(add(matmul(w, x), b))
    if not update_facts:
        return x, f_k
    return slice_vec(x, 0, out_dim), slice_vec(x, out_dim, x.values.shape[0])


def pool(q_list, kind, gate_scores=None):
    """Fuse per-fact question updates into one vector.

    max/avg are coordinate-wise; gating forms a per-coordinate convex
    combination whose weights are a softmax over facts of the gate scores.
    """
    if not q_list:
        raise ValueError("cannot pool an empty list")
    dims = {t.values.shape for t in q_list}
    if len(dims) != 1:
        raise ShapeError(f"pool inputs have mixed shapes: {sorted(dims)}")
    if kind == "max":
        if len(q_list) == 1:
            return q_list[0]
        return max_elementwise(q_list)
    if kind == "avg":
        if len(q_list) == 1:
            return q_list[0]
        return mean_elementwise(q_list)
    if kind == "gating":
        if gate_scores is None or len(gate_scores) != len(q_list):
            raise ValueError("gating pool needs one gate score per fact")
        weights = softmax_axis0(stack(gate_scores))
        return add_n([mul(row(weights, k), q) for k, q in enumerate(q_list)])
    raise ValueError(f"unknown pooling kind {kind!r}")


def gate_score(layer, q, f_k):
    """Raw gate score for one fact, before across-fact normalization."""
    w, b = layer.gate
    return add(matmul(w, concat([q, f_k])), b)


def reason(config, layer_params, q0, f_list):
    """Run the full reasoning stack and return the final question vector."""
    if not f_list:
        raise ValueError("need at least one fact")
    q = q0
    facts = list(f_list)
    for idx in range(config.layers):
        layer = layer_params[idx]
        out_dim = config.layer_dims[idx]
        last = idx == config.layers - 1
        update = config.update_facts and not last
        q_updates, new_facts, scores = [], [], []
        for f_k in facts:
            if config.pooling == "gating":
                scores.append(gate_score(layer, q, f_k))
            q_k, f_k_new = interact(layer, q, f_k, out_dim,
                                    update_facts=update, activation=config.activation)
            q_updates.append(q_k)
            new_facts.append(f_k_new)
        q = pool(q_updates, config.pooling, gate_scores=scores or None)
        facts = new_facts
    return q
