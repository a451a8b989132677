"""Deterministic discrete-event harness for federation experiments.

A virtual clock advances through a (time, seq) ordered event queue; ties
execute in enqueue order, so replays with the same config and seed are
bit-identical. Heterogeneity comes from per-learner speed profiles: an epoch
costs steps/steps_per_second virtual seconds, and a distributed-validation
fan-out costs the slowest evaluator's validation pass (evaluators run in
parallel and keep training undisturbed; the committing learner waits).

Synchronous schemes run as lockstep rounds whose length is the straggler's
training time (plus the evaluation phase for validation-weighted schemes).
"""

from __future__ import annotations

import heapq
import math
import statistics
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import config as config_mod
from .controller import (
    CommunityModel,
    FederationController,
    FedAsyncController,
    UpdateRequest,
)
from .data import (
    Dataset,
    FederatedSplit,
    LearnerSplit,
    alternating_order,
    build_federated_split,
    compute_sizes,
    generate_blobs,
    load_idx,
)
from .learner import (
    CAUSE_FIXED,
    FixedPolicy,
    Hyperparameters,
    LearnerState,
    adopt_community,
    check_adaptive_trigger,
    compute_vpct,
    effective_staleness,
    local_validation_loss,
    new_learner,
    record_validation_loss,
    run_epoch,
)
from .nn import ModelSpec, ParameterSet, evaluate_confusion, predict
from .weighting import DVW_SCHEMES, EvalReport, dvw_weight, fedavg_weight

EVENT_EPOCH_DONE = "epoch_done"
EVENT_EVAL_DONE = "eval_done"
EVENT_UPDATE_COMMIT = "update_commit"

CSV_COLUMNS = (
    "virtual_time",
    "version",
    "scheme",
    "test_top1",
    "committing_learner",
    "p_k",
    "staleness",
    "cause",
    "models_exchanged_cum",
    "update_requests_cum",
)


@dataclass(frozen=True)
class SpeedProfile:
    group: str
    steps_per_second: float
    eval_samples_per_second: float

    def __post_init__(self) -> None:
        if self.group not in ("fast", "slow"):
            raise ValueError("speed group must be 'fast' or 'slow'")
        if self.steps_per_second <= 0 or self.eval_samples_per_second <= 0:
            raise ValueError("speed profile rates must be positive")


@dataclass(frozen=True)
class Event:
    time: float
    seq: int
    learner_id: int
    kind: str


@dataclass(frozen=True)
class MetricsRow:
    virtual_time: float
    version: int
    scheme: str
    test_top1: float
    committing_learner: int
    p_k: float
    staleness: int
    cause: str
    models_exchanged_cum: int
    update_requests_cum: int

    def as_csv_fields(self) -> list[str]:
        return [
            repr(self.virtual_time),
            str(self.version),
            self.scheme,
            repr(self.test_top1),
            str(self.committing_learner),
            repr(self.p_k),
            str(self.staleness),
            self.cause,
            str(self.models_exchanged_cum),
            str(self.update_requests_cum),
        ]


class MetricsLog:
    """Append-only list of per-commit rows with a stable CSV encoding."""

    columns = CSV_COLUMNS

    def __init__(self, rows: Iterable[MetricsRow] = ()) -> None:
        self.rows: list[MetricsRow] = list(rows)

    def append(self, row: MetricsRow) -> None:
        if self.rows and row.virtual_time < self.rows[-1].virtual_time:
            raise ValueError("virtual time must be non-decreasing")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(row.as_csv_fields()))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as f:
            f.write(self.to_csv())

    @classmethod
    def from_csv(cls, path) -> "MetricsLog":
        with open(path, "r") as f:
            lines = [ln.rstrip("\n") for ln in f if ln.strip()]
        header = tuple(lines[0].split(","))
        if header != cls.columns:
            raise ValueError(f"unexpected CSV header in {path!r}: {header}")
        rows = []
        for ln in lines[1:]:
            fields = ln.split(",")
            rows.append(
                MetricsRow(
                    virtual_time=float(fields[0]),
                    version=int(fields[1]),
                    scheme=fields[2],
                    test_top1=float(fields[3]),
                    committing_learner=int(fields[4]),
                    p_k=float(fields[5]),
                    staleness=int(fields[6]),
                    cause=fields[7],
                    models_exchanged_cum=int(fields[8]),
                    update_requests_cum=int(fields[9]),
                )
            )
        return cls(rows)

    def last_at_or_before_time(self, t: float) -> MetricsRow | None:
        best = None
        for row in self.rows:
            if row.virtual_time <= t:
                best = row
            else:
                break
        return best

    def last_at_or_before_version(self, version: int) -> MetricsRow | None:
        best = None
        for row in self.rows:
            if row.version <= version:
                best = row
        return best


def evaluate_test_accuracy(params: ParameterSet, test: Dataset) -> float:
    """Fraction of argmax-correct predictions on the held-out test set."""
    if test.n < 1:
        raise ValueError("test set is empty")
    return float(np.mean(predict(params, test.features) == test.labels))


@dataclass
class _LearnerSlot:
    state: LearnerState
    split: LearnerSplit
    profile: SpeedProfile
    steps_per_epoch: int
    epoch_duration: float
    pending_cause: str | None = None


@dataclass
class SimulationResult:
    log: MetricsLog
    learners: list[LearnerState]
    groups: dict[int, str]
    split: FederatedSplit
    model_spec: ModelSpec
    initial_accuracy: float
    sizes: list[int]
    virtual_duration: float


def build_datasets(cfg: config_mod.ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Materialize the training source and the shared global test set."""
    ds = cfg.dataset
    if isinstance(ds, config_mod.BlobsSpec):
        source = generate_blobs(
            ds.input_dim, ds.num_classes, ds.train_samples_per_class, ds.spread, [cfg.seed, 3]
        )
        test = generate_blobs(
            ds.input_dim, ds.num_classes, ds.test_samples_per_class, ds.spread, [cfg.seed, 4]
        )
        return source, test
    source = load_idx(ds.train_images, ds.train_labels, ds.num_classes)
    test = load_idx(ds.test_images, ds.test_labels, source.num_classes)
    return source, test


def build_federation(cfg: config_mod.ExperimentConfig):
    """Wire data plane, model, controller and learners for one run."""
    source, test = build_datasets(cfg)
    model_spec = ModelSpec(
        kind=cfg.model.kind,
        input_dim=source.features.shape[1],
        num_classes=source.num_classes,
        hidden_dim=cfg.model.hidden_dim,
        init_seed=cfg.seed,
    )
    total = cfg.size_distribution.total if cfg.size_distribution.total is not None else source.n
    dist = cfg.size_distribution.to_distribution(cfg.num_learners)
    sizes = compute_sizes(dist, total)
    groups = [p.group for p in cfg.profiles]
    order = None if dist.kind == "uniform" else alternating_order(groups)
    assignment = cfg.class_assignment.resolve(cfg.num_learners, source.num_classes)
    split = build_federated_split(
        source, sizes, assignment, cfg.validation_fraction, cfg.seed, test, order
    )

    if cfg.scheme == "fedasync_poly":
        controller = FedAsyncController(model_spec, cfg.fedasync)
    else:
        controller = FederationController(model_spec)
    community = controller.current_model()

    slots = []
    for lid in range(cfg.num_learners):
        policy = cfg.trigger.policy_for(cfg.scheme, groups[lid])
        state = new_learner(
            lid,
            community,
            policy,
            gamma=cfg.hyperparameters.gamma,
            proximal_mu=cfg.resolved_proximal_mu(),
            data_seed=cfg.seed,
        )
        lsplit = split.per_learner[lid]
        steps_per_epoch = math.ceil(lsplit.train.n / cfg.hyperparameters.batch_size)
        slots.append(
            _LearnerSlot(
                state=state,
                split=lsplit,
                profile=cfg.profiles[lid],
                steps_per_epoch=steps_per_epoch,
                epoch_duration=steps_per_epoch / cfg.profiles[lid].steps_per_second,
            )
        )
    return model_spec, split, sizes, slots, controller


class _Simulation:
    def __init__(self, cfg: config_mod.ExperimentConfig) -> None:
        self.cfg = cfg
        self.scheme = cfg.scheme
        self.hp = cfg.hyperparameters
        model_spec, split, sizes, slots, controller = build_federation(cfg)
        self.model_spec = model_spec
        self.split = split
        self.sizes = sizes
        self.slots = slots
        self.controller = controller
        self.log = MetricsLog()
        self.requests = 0
        self.exchanged = 0
        self.clock = 0.0
        self._heap: list[tuple[float, int, Event]] = []
        self._seq = 0
        self.is_dvw = self.scheme in DVW_SCHEMES
        initial = controller.current_model()
        self.initial_accuracy = evaluate_test_accuracy(initial.params, split.test)
        self.log.append(
            MetricsRow(0.0, 0, self.scheme, self.initial_accuracy, -1, 0.0, 0, "init", 0, 0)
        )

    # -- shared helpers -------------------------------------------------

    def _own_confusion(self, slot: _LearnerSlot) -> np.ndarray:
        val = slot.split.validation
        return evaluate_confusion(slot.state.params, val.features, val.labels, val.num_classes)

    def _foreign_confusions(self, committing: int, params: ParameterSet) -> list[tuple[int, np.ndarray]]:
        out = []
        for slot in self.slots:
            if slot.state.id == committing:
                continue
            val = slot.split.validation
            out.append(
                (slot.state.id, evaluate_confusion(params, val.features, val.labels, val.num_classes))
            )
        return out

    def _eval_fanout_duration(self, committing: int) -> float:
        return max(
            slot.split.validation.n / slot.profile.eval_samples_per_second
            for slot in self.slots
            if slot.state.id != committing
        ) if len(self.slots) > 1 else 0.0

    def _models_per_request(self) -> int:
        # 1 upload + 1 community pull, plus one evaluator ship per other
        # learner when the commit is validation-weighted.
        if self.is_dvw:
            return len(self.slots) + 1
        return 2

    def _train_one_epoch(self, slot: _LearnerSlot) -> None:
        run_epoch(slot.state, slot.split.train, self.hp)
        loss = local_validation_loss(slot.state, slot.split.validation)
        record_validation_loss(slot.state, loss)

    def _log_commit(
        self,
        t: float,
        community: CommunityModel,
        learner_id: int,
        p: float,
        staleness: int,
        cause: str,
    ) -> None:
        acc = evaluate_test_accuracy(community.params, self.split.test)
        self.log.append(
            MetricsRow(
                t,
                community.version,
                self.scheme,
                acc,
                learner_id,
                p,
                staleness,
                cause,
                self.exchanged,
                self.requests,
            )
        )

    # -- synchronous rounds ---------------------------------------------

    def run_sync(self) -> None:
        cfg = self.cfg
        n = len(self.slots)
        train_phase = max(
            slot.state.policy.uf * slot.epoch_duration for slot in self.slots
        )
        eval_phase = 0.0
        if self.is_dvw and n > 1:
            eval_phase = max(
                (n - 1) * slot.split.validation.n / slot.profile.eval_samples_per_second
                for slot in self.slots
            )
        round_duration = train_phase + eval_phase
        while True:
            if cfg.max_versions is not None and self.controller.version >= cfg.max_versions:
                break
            t_end = self.clock + round_duration
            if t_end > cfg.time_budget:
                break
            requests = []
            for slot in self.slots:
                for _ in range(slot.state.policy.uf):
                    self._train_one_epoch(slot)
                requests.append(
                    UpdateRequest(
                        learner_id=slot.state.id,
                        params=slot.state.params,
                        local_steps=slot.state.S_k_local,
                        local_train_size=slot.split.train.n,
                        local_validation_cm=self._own_confusion(slot) if self.is_dvw else None,
                    )
                )
            if self.is_dvw:
                weights = {}
                for req in requests:
                    entries = [(req.learner_id, req.local_validation_cm)]
                    entries.extend(self._foreign_confusions(req.learner_id, req.params))
                    weights[req.learner_id] = dvw_weight(EvalReport(tuple(entries)))
                weight_fn = lambda r: weights[r.learner_id]
            else:
                weight_fn = lambda r: fedavg_weight(r.local_train_size)
            community = self.controller.handle_sync_round(requests, weight_fn)
            self.clock = t_end
            self.requests += n
            self.exchanged += n * self._models_per_request()
            self._log_commit(
                t_end,
                community,
                -1,
                float(self.controller.normalizer),
                0,
                CAUSE_FIXED,
            )
            for slot in self.slots:
                adopt_community(slot.state, community, CAUSE_FIXED)

    # -- asynchronous event loop ------------------------------------------

    def _schedule(self, t: float, learner_id: int, kind: str) -> None:
        if t < self.clock:
            raise RuntimeError("cannot schedule an event in the past")
        ev = Event(t, self._seq, learner_id, kind)
        heapq.heappush(self._heap, (t, self._seq, ev))
        self._seq += 1

    def run_async(self) -> None:
        cfg = self.cfg
        for slot in self.slots:
            self._schedule(slot.epoch_duration, slot.state.id, EVENT_EPOCH_DONE)
        while self._heap:
            t, _, ev = heapq.heappop(self._heap)
            if t > cfg.time_budget:
                break
            self.clock = t
            if ev.kind == EVENT_EPOCH_DONE:
                self._on_epoch_done(ev.learner_id, t)
            elif ev.kind == EVENT_EVAL_DONE:
                self._schedule(t, ev.learner_id, EVENT_UPDATE_COMMIT)
            elif ev.kind == EVENT_UPDATE_COMMIT:
                self._on_commit(ev.learner_id, t)
                if cfg.max_versions is not None and self.controller.version >= cfg.max_versions:
                    break
            else:  # pragma: no cover - exhaustive kinds
                raise RuntimeError(f"unknown event kind {ev.kind!r}")

    def _on_epoch_done(self, learner_id: int, t: float) -> None:
        slot = self.slots[learner_id]
        state = slot.state
        self._train_one_epoch(slot)
        policy = state.policy
        if isinstance(policy, FixedPolicy):
            cause = CAUSE_FIXED if state.current.epochs >= policy.uf else None
        else:
            losses = state.current.losses
            vpct = compute_vpct(losses[-1], losses[-2]) if len(losses) >= 2 else None
            staleness_now = effective_staleness(self.controller.committed_steps(), state)
            cause = check_adaptive_trigger(state, vpct, staleness_now)
        if cause is None:
            self._schedule(t + slot.epoch_duration, learner_id, EVENT_EPOCH_DONE)
            return
        slot.pending_cause = cause
        if self.is_dvw:
            self._schedule(t + self._eval_fanout_duration(learner_id), learner_id, EVENT_EVAL_DONE)
        else:
            self._schedule(t, learner_id, EVENT_UPDATE_COMMIT)

    def _on_commit(self, learner_id: int, t: float) -> None:
        slot = self.slots[learner_id]
        state = slot.state
        cause = slot.pending_cause or CAUSE_FIXED
        slot.pending_cause = None
        req = UpdateRequest(
            learner_id=learner_id,
            params=state.params,
            local_steps=state.S_k_local,
            local_train_size=slot.split.train.n,
            local_validation_cm=self._own_confusion(slot) if self.is_dvw else None,
        )
        staleness = effective_staleness(self.controller.committed_steps(), state)
        if self.scheme == "fedasync_poly":
            version_staleness = self.controller.version - state.version_at_fetch
            community = self.controller.handle_update(req, version_staleness)
            from .weighting import fedasync_mix_factor

            p = fedasync_mix_factor(version_staleness, self.cfg.fedasync)
        elif self.is_dvw:
            entries = [(learner_id, req.local_validation_cm)]
            entries.extend(self._foreign_confusions(learner_id, req.params))
            p = dvw_weight(EvalReport(tuple(entries)))
            community = self.controller.handle_async_update(req, lambda _r: p)
        else:
            p = fedavg_weight(req.local_train_size)
            community = self.controller.handle_async_update(
                req, lambda r: fedavg_weight(r.local_train_size)
            )
        self.requests += 1
        self.exchanged += self._models_per_request()
        self._log_commit(t, community, learner_id, p, staleness, cause)
        adopt_community(state, community, cause)
        self._schedule(t + slot.epoch_duration, learner_id, EVENT_EPOCH_DONE)

    def run(self) -> SimulationResult:
        if self.scheme.startswith("sync_"):
            self.run_sync()
        else:
            self.run_async()
        return SimulationResult(
            log=self.log,
            learners=[slot.state for slot in self.slots],
            groups={slot.state.id: slot.profile.group for slot in self.slots},
            split=self.split,
            model_spec=self.model_spec,
            initial_accuracy=self.initial_accuracy,
            sizes=self.sizes,
            virtual_duration=self.clock,
        )


def run_simulation_detailed(cfg: config_mod.ExperimentConfig) -> SimulationResult:
    return _Simulation(cfg).run()


def run_simulation(cfg: config_mod.ExperimentConfig) -> MetricsLog:
    """Run one experiment under the deterministic event loop."""
    return run_simulation_detailed(cfg).log


@dataclass(frozen=True)
class StalenessStats:
    label: str
    count: int
    median: float
    mean: float
    stdev: float


def _stats(label: str, values: Sequence[int]) -> StalenessStats:
    ordered = sorted(values)
    median = float(ordered[(len(ordered) - 1) // 2])
    mean = float(statistics.fmean(ordered))
    stdev = float(statistics.pstdev(ordered)) if len(ordered) > 1 else 0.0
    return StalenessStats(label, len(ordered), median, mean, stdev)


def staleness_report(
    log: MetricsLog, groups: Mapping[int, str]
) -> dict[str, list[StalenessStats]]:
    """Per-learner and per-group staleness statistics from the commit log."""
    per_learner: dict[int, list[int]] = {}
    for row in log:
        if row.committing_learner < 0:
            continue
        per_learner.setdefault(row.committing_learner, []).append(row.staleness)
    learner_stats = [
        _stats(f"learner-{lid}", vals) for lid, vals in sorted(per_learner.items())
    ]
    by_group: dict[str, list[int]] = {}
    for lid, vals in per_learner.items():
        by_group.setdefault(groups.get(lid, "unknown"), []).extend(vals)
    group_stats = [_stats(group, vals) for group, vals in sorted(by_group.items())]
    return {"learners": learner_stats, "groups": group_stats}
