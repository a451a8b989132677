"""Neural-network substrate for the federation engine.

Parameter containers, forward/backward passes for two small classifier
architectures (softmax regression and a one-hidden-layer tanh MLP),
cross-entropy loss, momentum SGD, and confusion-matrix evaluation.

Everything is a pure function over value types, float64 throughout, so the
federation layers above can replay and audit training deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

SOFTMAX_REGRESSION = "softmax-regression"
MLP_1HIDDEN = "mlp-1hidden"
MODEL_KINDS = (SOFTMAX_REGRESSION, MLP_1HIDDEN)


class ShapeError(ValueError):
    """Matrix shapes or parameter layouts disagree."""


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor; with ``init_seed`` it fully determines the
    initial parameters, so every learner can start from the same model."""

    kind: str
    input_dim: int
    num_classes: int
    hidden_dim: int = 0
    init_seed: int = 1990

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind: {self.kind!r}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.kind == MLP_1HIDDEN and self.hidden_dim < 1:
            raise ValueError("mlp-1hidden needs hidden_dim >= 1")
        if self.init_seed < 0:
            raise ValueError("init_seed must be non-negative")


class ParameterSet:
    """Ordered list of named float64 matrices — the unit of model exchange.

    Arrays are copied on construction and marked read-only, so instances can
    be shared freely between learners, the controller cache and the community
    model without defensive copies.
    """

    __slots__ = ("_names", "_arrays")

    def __init__(self, entries: Iterable[tuple[str, np.ndarray]]) -> None:
        names: list[str] = []
        arrays: list[np.ndarray] = []
        for name, values in entries:
            arr = np.array(values, dtype=np.float64, copy=True)
            if arr.ndim != 2:
                raise ShapeError(f"entry {name!r}: expected a 2-D matrix, got ndim={arr.ndim}")
            if not np.all(np.isfinite(arr)):
                raise ShapeError(f"entry {name!r} contains non-finite values")
            arr.setflags(write=False)
            names.append(str(name))
            arrays.append(arr)
        if len(set(names)) != len(names):
            raise ValueError("parameter entry names must be unique")
        self._names = tuple(names)
        self._arrays = tuple(arrays)

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    @property
    def arrays(self) -> tuple[np.ndarray, ...]:
        return self._arrays

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(zip(self._names, self._arrays))

    def array(self, name: str) -> np.ndarray:
        try:
            return self._arrays[self._names.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def shapes(self) -> tuple[tuple[str, int, int], ...]:
        return tuple((n, a.shape[0], a.shape[1]) for n, a in self)

    def same_layout(self, other: "ParameterSet") -> bool:
        return self.shapes() == other.shapes()

    def num_values(self) -> int:
        return sum(a.size for a in self._arrays)

    def __repr__(self) -> str:
        inner = ", ".join(f"{n}{a.shape}" for n, a in self)
        return f"ParameterSet({inner})"


# A gradient has the same structure as the parameters it differentiates.
GradientSet = ParameterSet


def zeros_like(params: ParameterSet) -> ParameterSet:
    return ParameterSet((n, np.zeros_like(a)) for n, a in params)


def _require_same_layout(a: ParameterSet, b: ParameterSet, what: str) -> None:
    if not a.same_layout(b):
        raise ShapeError(f"{what}: parameter layouts differ ({a.shapes()} vs {b.shapes()})")


def scale_add(dst: ParameterSet, src: ParameterSet, alpha: float) -> ParameterSet:
    """Entrywise dst + alpha * src; both inputs are left untouched."""
    _require_same_layout(dst, src, "scale_add")
    return ParameterSet((n, d + alpha * s) for (n, d), (_, s) in zip(dst, src))


def scale(params: ParameterSet, alpha: float) -> ParameterSet:
    """Entrywise alpha * params."""
    return ParameterSet((n, alpha * a) for n, a in params)


def params_allclose(a: ParameterSet, b: ParameterSet, rtol: float = 1e-9, atol: float = 0.0) -> bool:
    if not a.same_layout(b):
        return False
    return all(np.allclose(x, y, rtol=rtol, atol=atol) for x, y in zip(a.arrays, b.arrays))


def params_equal(a: ParameterSet, b: ParameterSet) -> bool:
    """Bit-exact equality."""
    if not a.same_layout(b):
        return False
    return all(np.array_equal(x, y) for x, y in zip(a.arrays, b.arrays))


def _layer_shapes(spec: ModelSpec) -> tuple[tuple[str, int, int], ...]:
    if spec.kind == SOFTMAX_REGRESSION:
        return (("W", spec.input_dim, spec.num_classes), ("b", 1, spec.num_classes))
    return (
        ("W1", spec.input_dim, spec.hidden_dim),
        ("b1", 1, spec.hidden_dim),
        ("W2", spec.hidden_dim, spec.num_classes),
        ("b2", 1, spec.num_classes),
    )


def init_parameters(spec: ModelSpec) -> ParameterSet:
    """Deterministic Glorot-uniform weight matrices, zero biases.

    Uses a counter-based generator keyed on ``init_seed``: identical specs
    yield bit-identical parameter sets on any platform.
    """
    rng = np.random.Generator(np.random.Philox(key=spec.init_seed))
    entries = []
    for name, rows, cols in _layer_shapes(spec):
        if name.startswith("b"):
            entries.append((name, np.zeros((rows, cols))))
        else:
            r = math.sqrt(6.0 / (rows + cols))
            entries.append((name, rng.uniform(-r, r, size=(rows, cols))))
    return ParameterSet(entries)


@dataclass(frozen=True)
class Batch:
    """A mini-batch of samples: features (n x d) and integer class labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        f = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2:
            raise ShapeError("batch features must be a 2-D matrix")
        if y.ndim != 1 or y.shape[0] != f.shape[0]:
            raise ShapeError("batch labels must be one per feature row")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.features.shape[0]


def model_kind(params: ParameterSet) -> str:
    """Recover the architecture from the parameter layout."""
    if params.names == ("W", "b"):
        return SOFTMAX_REGRESSION
    if params.names == ("W1", "b1", "W2", "b2"):
        return MLP_1HIDDEN
    raise ShapeError(f"unrecognized parameter layout: {params.names}")


def _forward(params: ParameterSet, features: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    kind = model_kind(params)
    first = params.arrays[0]
    if features.shape[1] != first.shape[0]:
        raise ShapeError(
            f"feature dim {features.shape[1]} does not match input dim {first.shape[0]}"
        )
    if kind == SOFTMAX_REGRESSION:
        logits = features @ params.array("W") + params.array("b")
        return logits, None
    hidden = np.tanh(features @ params.array("W1") + params.array("b1"))
    logits = hidden @ params.array("W2") + params.array("b2")
    return logits, hidden


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_labels(labels: np.ndarray, num_classes: int) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")


def forward_loss(params: ParameterSet, batch: Batch) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch plus the raw logits."""
    if len(batch) == 0:
        raise ValueError("cannot compute a loss on an empty batch")
    logits, _ = _forward(params, batch.features)
    _check_labels(batch.labels, logits.shape[1])
    logp = _log_softmax(logits)
    loss = float(-logp[np.arange(len(batch)), batch.labels].mean())
    return loss, logits


def backward(params: ParameterSet, batch: Batch) -> GradientSet:
    """Analytic gradient of ``forward_loss`` w.r.t. every parameter entry."""
    n = len(batch)
    if n == 0:
        raise ValueError("cannot compute gradients on an empty batch")
    logits, hidden = _forward(params, batch.features)
    _check_labels(batch.labels, logits.shape[1])
    probs = np.exp(_log_softmax(logits))
    dlogits = probs
    dlogits[np.arange(n), batch.labels] -= 1.0
    dlogits /= n
    if model_kind(params) == SOFTMAX_REGRESSION:
        return ParameterSet(
            [
                ("W", batch.features.T @ dlogits),
                ("b", dlogits.sum(axis=0, keepdims=True)),
            ]
        )
    dhidden = dlogits @ params.array("W2").T
    dpre = dhidden * (1.0 - hidden * hidden)
    return ParameterSet(
        [
            ("W1", batch.features.T @ dpre),
            ("b1", dpre.sum(axis=0, keepdims=True)),
            ("W2", hidden.T @ dlogits),
            ("b2", dlogits.sum(axis=0, keepdims=True)),
        ]
    )


@dataclass(frozen=True)
class MomentumState:
    """Momentum buffer plus its attenuation factor."""

    buffer: ParameterSet
    gamma: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError("momentum attenuation must lie in [0, 1)")


def init_momentum(params: ParameterSet, gamma: float) -> MomentumState:
    return MomentumState(zeros_like(params), gamma)


def sgd_momentum_step(
    params: ParameterSet,
    mom: MomentumState,
    grads: GradientSet,
    eta: float,
) -> tuple[ParameterSet, MomentumState]:
    """One momentum-SGD step.

    The buffer accumulates raw gradients (u' = gamma*u + g) and the learning
    rate is applied at the weight update (w' = w - eta*u').
    """
    if eta <= 0.0:
        raise ValueError("learning rate must be positive")
    _require_same_layout(params, grads, "sgd_momentum_step")
    _require_same_layout(params, mom.buffer, "sgd_momentum_step")
    new_buffer = ParameterSet(
        (n, mom.gamma * u + g) for (n, u), (_, g) in zip(mom.buffer, grads)
    )
    new_params = ParameterSet(
        (n, w - eta * u) for (n, w), (_, u) in zip(params, new_buffer)
    )
    return new_params, MomentumState(new_buffer, mom.gamma)


def predict(params: ParameterSet, features: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class index."""
    logits, _ = _forward(params, np.asarray(features, dtype=np.float64))
    return np.argmax(logits, axis=1)


def evaluate_confusion(
    params: ParameterSet,
    features: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
) -> np.ndarray:
    """C x C integer counts: rows are actual labels, columns predictions."""
    feats = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if feats.shape[0] == 0:
        raise ValueError("cannot evaluate an empty dataset")
    if y.shape[0] != feats.shape[0]:
        raise ShapeError("labels must be one per feature row")
    _check_labels(y, num_classes)
    logits, _ = _forward(params, feats)
    if logits.shape[1] != num_classes:
        raise ShapeError(
            f"model predicts {logits.shape[1]} classes, dataset declares {num_classes}"
        )
    pred = np.argmax(logits, axis=1)
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y, pred), 1)
    return cm
