"""Federation controller: community tier, caching tier, committed-step counter.

The controller serializes every incoming update through one lock (FIFO in
arrival order) and keeps, per learner, its most recent contribution value and
model. An asynchronous commit then touches only the running weighted sum and
that single cache entry, so its cost is independent of the federation size.
``audit_recompute`` is the deliberately slow full pass kept as an oracle.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .nn import (
    ModelSpec,
    ParameterSet,
    init_parameters,
    scale,
    scale_add,
    zeros_like,
)
from .weighting import FedAsyncParams, fedasync_poly_mix


class DegenerateFederationError(RuntimeError):
    """The federation state cannot produce a community model."""


@dataclass(frozen=True)
class CommunityModel:
    """Snapshot returned to a learner after a fetch or commit."""

    params: ParameterSet
    version: int
    committed_steps: int


@dataclass(frozen=True)
class UpdateRequest:
    """One learner's commit: its model plus bookkeeping for weighting."""

    learner_id: int
    params: ParameterSet
    local_steps: int
    local_train_size: int
    local_validation_cm: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.local_steps < 1:
            raise ValueError("an update must carry at least one local step")
        if self.local_train_size < 1:
            raise ValueError("local_train_size must be >= 1")


WeightFn = Callable[[UpdateRequest], float]


@dataclass(frozen=True)
class _CacheEntry:
    p: float
    params: ParameterSet


class FederationController:
    """Single-mutator community/caching tier.

    All mutations run inside one mutual-exclusion region; reads of the step
    counter are safe concurrent snapshots. The same object can be driven from
    real threads or from the single-threaded simulator loop.
    """

    def __init__(self, spec: ModelSpec) -> None:
        self._setup(init_parameters(spec))

    @classmethod
    def from_initial_model(cls, params: ParameterSet) -> "FederationController":
        """The federation is model-agnostic; any parameter layout works."""
        obj = cls.__new__(cls)
        obj._setup(params)
        return obj

    def _setup(self, initial: ParameterSet) -> None:
        self._lock = threading.Lock()
        self._w0 = initial
        self._weighted_sum = zeros_like(self._w0)
        self._normalizer = 0.0
        self._cache: dict[int, _CacheEntry] = {}
        self._committed_steps = 0
        self._version = 0
        self._community = self._w0

    @property
    def version(self) -> int:
        return self._version

    @property
    def normalizer(self) -> float:
        return self._normalizer

    @property
    def cache_size(self) -> int:
        return len(self._cache)

    def committed_steps(self) -> int:
        """Total mini-batch steps across all committed updates."""
        return self._committed_steps

    def current_model(self) -> CommunityModel:
        with self._lock:
            return CommunityModel(self._community, self._version, self._committed_steps)

    def cached_contribution(self, learner_id: int) -> tuple[float, ParameterSet] | None:
        entry = self._cache.get(learner_id)
        return None if entry is None else (entry.p, entry.params)

    def handle_async_update(self, req: UpdateRequest, weight_fn: WeightFn) -> CommunityModel:
        """Commit one model: swap the learner's cached contribution in O(model).

        Never-committed learners have an implicit (0, zero-model) entry, so
        the first commit skips the subtraction entirely.
        """
        p = float(weight_fn(req))
        if p < 0.0:
            raise ValueError("contribution values must be non-negative")
        with self._lock:
            prev = self._cache.get(req.learner_id)
            p_prev = prev.p if prev is not None else 0.0
            new_normalizer = self._normalizer + p - p_prev
            if new_normalizer <= 0.0:
                raise DegenerateFederationError(
                    f"normalizer would drop to {new_normalizer} on commit from learner "
                    f"{req.learner_id} (p={p})"
                )
            updated = scale_add(self._weighted_sum, req.params, p)
            if prev is not None:
                updated = scale_add(updated, prev.params, -p_prev)
            self._weighted_sum = updated
            self._normalizer = new_normalizer
            self._cache[req.learner_id] = _CacheEntry(p, req.params)
            self._committed_steps += req.local_steps
            self._version += 1
            self._community = scale(self._weighted_sum, 1.0 / self._normalizer)
            return CommunityModel(self._community, self._version, self._committed_steps)

    def handle_sync_round(
        self, requests: Sequence[UpdateRequest], weight_fn: WeightFn
    ) -> CommunityModel:
        """Commit one synchronous round over all participating learners.

        The cache is rebuilt from the round's requests so the controller state
        afterwards matches what the same requests would leave behind as
        individual asynchronous commits.
        """
        if not requests:
            raise ValueError("a synchronous round needs at least one request")
        ids = [r.learner_id for r in requests]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate learner in synchronous round")
        weights = [float(weight_fn(r)) for r in requests]
        if any(p < 0.0 for p in weights):
            raise ValueError("contribution values must be non-negative")
        round_normalizer = sum(weights)
        if round_normalizer <= 0.0:
            raise DegenerateFederationError("all contribution values are zero this round")
        with self._lock:
            weighted = zeros_like(self._w0)
            cache: dict[int, _CacheEntry] = {}
            for req, p in zip(requests, weights):
                weighted = scale_add(weighted, req.params, p)
                cache[req.learner_id] = _CacheEntry(p, req.params)
            self._weighted_sum = weighted
            self._normalizer = round_normalizer
            self._cache = cache
            self._committed_steps += sum(r.local_steps for r in requests)
            self._version += 1
            self._community = scale(self._weighted_sum, 1.0 / self._normalizer)
            return CommunityModel(self._community, self._version, self._committed_steps)

    def audit_recompute(self) -> CommunityModel:
        """Full O(model x learners) pass over the cache; the test oracle for
        the incremental path."""
        with self._lock:
            if not self._cache:
                raise DegenerateFederationError("cannot audit an empty cache")
            total = 0.0
            weighted = zeros_like(self._w0)
            for entry in self._cache.values():
                weighted = scale_add(weighted, entry.params, entry.p)
                total += entry.p
            if total <= 0.0:
                raise DegenerateFederationError("cached contributions sum to zero")
            return CommunityModel(scale(weighted, 1.0 / total), self._version, self._committed_steps)


class FedAsyncController:
    """Mixing-based baseline controller: no cache, the community model is a
    staleness-discounted convex combination of itself and each commit."""

    def __init__(self, spec: ModelSpec, params: FedAsyncParams) -> None:
        self._lock = threading.Lock()
        self._params = params
        self._community = init_parameters(spec)
        self._committed_steps = 0
        self._version = 0

    @property
    def version(self) -> int:
        return self._version

    def committed_steps(self) -> int:
        return self._committed_steps

    def current_model(self) -> CommunityModel:
        with self._lock:
            return CommunityModel(self._community, self._version, self._committed_steps)

    def handle_update(self, req: UpdateRequest, staleness: int) -> CommunityModel:
        with self._lock:
            self._community = fedasync_poly_mix(
                self._community, req.params, staleness, self._params
            )
            self._committed_steps += req.local_steps
            self._version += 1
            return CommunityModel(self._community, self._version, self._committed_steps)
