"""Feed-forward ReLU networks: forward tracing, input gradients, training.

A network is a stack of dense layers. Every non-final layer is *hidden*; its
post-activation outputs are the neurons whose values make up an activation
fingerprint. The final layer is linear and produces logits.

All arithmetic is float64; weight matrices are stored ``(out, in)`` so that a
layer computes ``z = W @ x + b``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ._io import PathLike, write_atomic
from .errors import EmptyDataError, FormatError, InputShapeError, TrainingDivergedError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "identity")
FORMAT_VERSION = 1

NeuronId = Tuple[int, int]


@dataclass(frozen=True, eq=False)
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise InputShapeError(f"weight matrix must be 2-D and non-empty, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise InputShapeError(f"bias of length {b.size} does not match {w.shape[0]} outputs")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("layer parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def input_width(self) -> int:
        return self.weights.shape[1]

    @property
    def output_width(self) -> int:
        return self.weights.shape[0]


class Network:
    """Immutable dense network. The last layer must be an identity (logit) layer."""

    def __init__(self, layers: Sequence[Layer]):
        layers = tuple(layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.output_width != nxt.input_width:
                raise InputShapeError(
                    f"layer widths do not chain: {prev.output_width} -> {nxt.input_width}")
        if layers[-1].activation != "identity":
            raise ValueError("the output layer must use the identity activation")
        self.layers = layers
        self.neuron_ids: Tuple[NeuronId, ...] = tuple(
            (li, u) for li, layer in enumerate(layers[:-1]) for u in range(layer.output_width))

    @property
    def input_width(self) -> int:
        return self.layers[0].input_width

    @property
    def class_count(self) -> int:
        return self.layers[-1].output_width

    @property
    def hidden_count(self) -> int:
        return len(self.neuron_ids)

    @property
    def widths(self) -> List[int]:
        return [self.input_width] + [layer.output_width for layer in self.layers]

    def same_parameters(self, other: "Network") -> bool:
        """Exact (bitwise) equality of architecture and parameters."""
        if len(self.layers) != len(other.layers):
            return False
        return all(
            a.activation == b.activation
            and a.weights.shape == b.weights.shape
            and np.array_equal(a.weights, b.weights)
            and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers))

    def __repr__(self):
        return f"Network(widths={self.widths})"


def init_network(widths: Sequence[int], seed: int = 0) -> Network:
    """He-initialised ReLU MLP with the given layer widths (input first, classes last)."""
    widths = list(widths)
    if len(widths) < 2 or min(widths) < 1:
        raise ValueError(f"invalid widths {widths}")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        act = "identity" if i == len(widths) - 2 else "relu"
        layers.append(Layer(w, np.zeros(fan_out), act))
    return Network(layers)


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    """Hidden post-activations (one array per hidden layer), logits and softmax."""

    hidden: Tuple[np.ndarray, ...]
    logits: np.ndarray
    probabilities: np.ndarray

    @property
    def fingerprint(self) -> np.ndarray:
        """All hidden values concatenated in ``Network.neuron_ids`` order."""
        if not self.hidden:
            return np.zeros(self.logits.shape[:-1] + (0,))
        return np.concatenate(self.hidden, axis=-1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(net: Network, x) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != net.input_width:
        raise InputShapeError(
            f"expected inputs of width {net.input_width}, got shape {np.shape(x)}")
    if not np.isfinite(arr).all():
        raise InputShapeError("inputs must be finite")
    return arr, single


def _run(net: Network, X: np.ndarray):
    """Forward pass keeping pre-activations for backprop."""
    pre, post = [], [X]
    h = X
    for layer in net.layers:
        z = h @ layer.weights.T + layer.bias
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        pre.append(z)
        post.append(h)
    return pre, post


def _backprop(net: Network, pre, grad_logits: np.ndarray) -> np.ndarray:
    g = grad_logits
    for li in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[li]
        if layer.activation == "relu":
            g = g * (pre[li] > 0)
        g = g @ layer.weights
    return g


def forward(net: Network, x) -> ForwardTrace:
    """Trace ``x`` (one input of shape ``(D,)`` or a batch ``(n, D)``) through ``net``."""
    X, single = _as_batch(net, x)
    _, post = _run(net, X)
    logits = post[-1]
    hidden = tuple(post[1:-1])
    probs = softmax(logits)
    if single:
        hidden = tuple(h[0] for h in hidden)
        logits, probs = logits[0], probs[0]
    return ForwardTrace(hidden, logits, probs)


def logits(net: Network, x) -> np.ndarray:
    return forward(net, x).logits


def hidden_activations(net: Network, x) -> np.ndarray:
    """Activation fingerprint(s): shape ``(n, hidden_count)`` for a batch."""
    return forward(net, x).fingerprint


def predict(net: Network, x):
    """Return ``(class, confidence)``; arrays of both for a batch.

    ``np.argmax`` returns the first maximum, so ties go to the lowest class.
    """
    trace = forward(net, x)
    cls = np.argmax(trace.logits, axis=-1)
    if trace.logits.ndim == 1:
        return int(cls), float(trace.probabilities[cls])
    return cls, trace.probabilities[np.arange(len(cls)), cls]


def predict_classes(net: Network, X) -> np.ndarray:
    return np.argmax(forward(net, X).logits, axis=-1)


@dataclass(frozen=True)
class CrossEntropy:
    """Gradient target: softmax cross-entropy loss at ``label``."""
    label: int


@dataclass(frozen=True)
class Logit:
    """Gradient target: the raw logit at ``index``."""
    index: int


GradientTarget = Union[CrossEntropy, Logit]


def input_gradient(net: Network, x, target: GradientTarget) -> np.ndarray:
    """Gradient of ``target`` with respect to the input, same shape as ``x``."""
    X, single = _as_batch(net, x)
    if isinstance(target, CrossEntropy):
        g = loss_gradient(net, X, np.full(len(X), target.label))[1]
    elif isinstance(target, Logit):
        if not 0 <= target.index < net.class_count:
            raise InputShapeError(f"logit index {target.index} out of range")
        seed = np.zeros((len(X), net.class_count))
        seed[:, target.index] = 1.0
        pre, _ = _run(net, X)
        g = _backprop(net, pre, seed)
    else:
        raise TypeError(f"unsupported gradient target {target!r}")
    return g[0] if single else g


def loss_gradient(net: Network, X: np.ndarray, labels) -> Tuple[np.ndarray, np.ndarray]:
    """Per-sample cross-entropy gradients: returns ``(logits, dloss/dX)``."""
    X, _ = _as_batch(net, X)
    labels = np.asarray(labels, dtype=np.int64)
    pre, post = _run(net, X)
    z = post[-1]
    g = softmax(z)
    g[np.arange(len(X)), labels] -= 1.0
    return z, _backprop(net, pre, g)


def logit_vjp(net: Network, X: np.ndarray, grad_logits: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vector-Jacobian product: returns ``(logits, grad_logits @ dlogits/dX)`` row-wise."""
    X, _ = _as_batch(net, X)
    pre, post = _run(net, X)
    return post[-1], _backprop(net, pre, np.asarray(grad_logits, dtype=np.float64))


def logit_jacobian(net: Network, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Returns ``(logits, J)`` with ``J[n, c, d] = d logit_c / d x_d`` for each row."""
    X, _ = _as_batch(net, X)
    pre, post = _run(net, X)
    n, C = len(X), net.class_count
    jac = np.empty((n, C, net.input_width))
    for c in range(C):
        seed = np.zeros((n, C))
        seed[:, c] = 1.0
        jac[:, c, :] = _backprop(net, pre, seed)
    return post[-1], jac


# --------------------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.05
    optimizer: str = "sgd"
    seed: int = 0


@dataclass
class TrainReport:
    epoch_losses: List[float] = field(default_factory=list)
    train_accuracy: Optional[float] = None
    test_accuracy: Optional[float] = None


def accuracy(net: Network, X, labels) -> float:
    return float(np.mean(predict_classes(net, X) == np.asarray(labels)))


def _mean_loss(net: Network, X, labels) -> float:
    p = forward(net, X).probabilities
    return float(-np.mean(np.log(np.clip(p[np.arange(len(X)), labels], 1e-300, None))))


def train(net: Network, data, cfg: TrainConfig, test=None) -> Tuple[Network, TrainReport]:
    """Mini-batch training on softmax cross-entropy.

    ``data`` and ``test`` are :class:`raid.datasets.LabeledDataset`. The
    shuffling order comes from ``cfg.seed`` alone, so equal seeds give
    bit-identical weights. With ``cfg.optimizer == "adam"`` Adam replaces
    plain SGD.
    """
    X = np.asarray(data.inputs, dtype=np.float64)
    y = np.asarray(data.labels, dtype=np.int64)
    if len(X) == 0:
        raise EmptyDataError("training set is empty")
    _as_batch(net, X[:1])
    if cfg.optimizer not in ("sgd", "adam"):
        raise ValueError(f"unknown optimizer {cfg.optimizer!r}")
    report = TrainReport()
    if cfg.epochs <= 0:
        report.train_accuracy = accuracy(net, X, y)
        if test is not None:
            report.test_accuracy = accuracy(net, test.inputs, test.labels)
        return net, report

    params = []
    for layer in net.layers:
        params += [layer.weights.copy(), layer.bias.copy()]
    acts = [layer.activation for layer in net.layers]
    moments = [(np.zeros_like(p), np.zeros_like(p)) for p in params]
    b1, b2, step = 0.9, 0.999, 0
    rng = np.random.default_rng(cfg.seed)
    n = len(X)

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = X[idx], y[idx]
            # forward
            pre, post = [], [xb]
            h = xb
            for li in range(len(acts)):
                z = h @ params[2 * li].T + params[2 * li + 1]
                h = np.maximum(z, 0.0) if acts[li] == "relu" else z
                pre.append(z)
                post.append(h)
            p = softmax(h)
            total += -np.sum(np.log(np.clip(p[np.arange(len(idx)), yb], 1e-300, None)))
            g = p
            g[np.arange(len(idx)), yb] -= 1.0
            g /= len(idx)
            grads = [None] * len(params)
            for li in range(len(acts) - 1, -1, -1):
                if acts[li] == "relu":
                    g = g * (pre[li] > 0)
                grads[2 * li] = g.T @ post[li]
                grads[2 * li + 1] = g.sum(axis=0)
                g = g @ params[2 * li]
            step += 1
            for i, (param, grad) in enumerate(zip(params, grads)):
                if cfg.optimizer == "sgd":
                    param -= cfg.learning_rate * grad
                else:
                    m, v = moments[i]
                    m *= b1
                    m += (1 - b1) * grad
                    v *= b2
                    v += (1 - b2) * grad * grad
                    mhat = m / (1 - b1 ** step)
                    vhat = v / (1 - b2 ** step)
                    param -= cfg.learning_rate * mhat / (np.sqrt(vhat) + 1e-8)
        mean_loss = total / n
        if not np.isfinite(mean_loss) or not all(np.isfinite(q).all() for q in params):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
        report.epoch_losses.append(float(mean_loss))
        logger.debug("epoch %d loss %.5f", epoch, mean_loss)

    trained = Network([Layer(params[2 * i], params[2 * i + 1], acts[i]) for i in range(len(acts))])
    report.train_accuracy = accuracy(trained, X, y)
    if test is not None:
        report.test_accuracy = accuracy(trained, test.inputs, test.labels)
    logger.info("trained %r: train acc %.4f, test acc %s", trained, report.train_accuracy,
                report.test_accuracy)
    return trained, report


# ---------------------------------------------------------------------- persistence

def network_to_dict(net: Network) -> dict:
    return {
        "version": FORMAT_VERSION,
        "layers": [
            {"in": layer.input_width, "out": layer.output_width, "act": layer.activation,
             "w": layer.weights.reshape(-1).tolist(), "b": layer.bias.tolist()}
            for layer in net.layers
        ],
    }


def network_from_dict(obj) -> Network:
    if not isinstance(obj, dict):
        raise FormatError("network payload must be a JSON object")
    if obj.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported network format version {obj.get('version')!r}")
    specs = obj.get("layers")
    if not isinstance(specs, list) or not specs:
        raise FormatError("network payload has no layers")
    layers = []
    try:
        for i, spec in enumerate(specs):
            d_in, d_out = int(spec["in"]), int(spec["out"])
            w, b = spec["w"], spec["b"]
            if d_in < 1 or d_out < 1 or len(w) != d_in * d_out or len(b) != d_out:
                raise FormatError(f"layer {i}: parameter counts do not match in={d_in} out={d_out}")
            layers.append(Layer(np.asarray(w, dtype=np.float64).reshape(d_out, d_in),
                                np.asarray(b, dtype=np.float64), spec["act"]))
        return Network(layers)
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed network payload: {exc}") from exc


def serialize_network(net: Network) -> bytes:
    return json.dumps(network_to_dict(net), separators=(",", ":")).encode("utf-8")


def deserialize_network(payload: bytes) -> Network:
    try:
        obj = json.loads(payload.decode("utf-8") if isinstance(payload, (bytes, bytearray)) else payload)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"network file is not valid JSON: {exc}") from exc
    return network_from_dict(obj)


def save_network(net: Network, path: PathLike) -> None:
    write_atomic(path, serialize_network(net))


def load_network(path: PathLike) -> Network:
    with open(path, "rb") as fh:
        return deserialize_network(fh.read())
