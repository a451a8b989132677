"""Declarative experiment configuration: JSON schema, defaults, presets.

A config file describes the federation topology, data distribution,
weighting scheme, trigger policy and simulation profile. Parsing fills
defaults, rejects unknown keys and reports errors with their field path.
The resolved config serializes back to a canonical dict, which is what the
run manifest stores so any run can be reproduced byte-for-byte.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Any, Mapping, Union

from .data import (
    ClassAssignment,
    SizeDistribution,
    assignment_from_class_counts,
    iid_assignment,
    rotation_assignment,
)
from .learner import AdaptivePolicy, FixedPolicy, Hyperparameters, TriggerPolicy
from .nn import MLP_1HIDDEN, MODEL_KINDS, SOFTMAX_REGRESSION
from .weighting import SCHEMES, FedAsyncParams

SEED_ENV_VAR = "FEDSIM_SEED"

DEFAULT_SEED = 1990
DEFAULT_VALIDATION_FRACTION = 0.05
DEFAULT_SCHEME = "sync_fedavg"
DEFAULT_UF = 4
DEFAULT_TIME_BUDGET = 60.0

DEFAULT_FAST_PROFILE = {"steps_per_second": 100.0, "eval_samples_per_second": 2000.0}
DEFAULT_SLOW_PROFILE = {"steps_per_second": 20.0, "eval_samples_per_second": 400.0}

# Named per-rank class-count expansions for power-law experiments where the
# head learners hold data from extra classes.
CLASS_COUNT_PRESETS: dict[str, list[int]] = {
    "noniid-8x1-7x1-6x1-5x7": [8, 7, 6, 5, 5, 5, 5, 5, 5, 5],
    "noniid-8x1-4x1-3x8": [8, 4, 3, 3, 3, 3, 3, 3, 3, 3],
    "noniid-84x1-76x1-68x1-64x1-55x1-50x5": [84, 76, 68, 64, 55, 50, 50, 50, 50, 50],
}


class ConfigError(ValueError):
    """Invalid configuration; the message carries the offending field path."""


class _Section:
    """Dict wrapper that tracks consumed keys and builds field-path errors."""

    def __init__(self, raw: Mapping[str, Any], path: str) -> None:
        if not isinstance(raw, Mapping):
            raise ConfigError(f"{path}: expected an object")
        self.raw = dict(raw)
        self.path = path
        self._seen: set[str] = set()

    def _fail(self, key: str, message: str) -> ConfigError:
        where = f"{self.path}.{key}" if self.path else key
        return ConfigError(f"{where}: {message}")

    def take(self, key: str, types, default=..., required: bool = False):
        self._seen.add(key)
        value = self.raw.get(key)
        if value is None:  # absent and explicit JSON null are equivalent
            if required:
                raise self._fail(key, "missing required field")
            return None if default is ... else default
        if types is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if types is int and isinstance(value, bool):
            raise self._fail(key, "expected an integer, got a boolean")
        if not isinstance(value, types):
            expected = types.__name__ if isinstance(types, type) else "/".join(
                t.__name__ for t in types
            )
            raise self._fail(key, f"expected {expected}, got {type(value).__name__}")
        return value

    def section(self, key: str, required: bool = False) -> "_Section | None":
        self._seen.add(key)
        if key not in self.raw:
            if required:
                raise self._fail(key, "missing required field")
            return None
        child = f"{self.path}.{key}" if self.path else key
        return _Section(self.raw[key], child)

    def finish(self) -> None:
        unknown = sorted(set(self.raw) - self._seen)
        if unknown:
            where = self.path or "config"
            raise ConfigError(f"{where}: unknown keys {unknown}")


@dataclass(frozen=True)
class BlobsSpec:
    input_dim: int
    num_classes: int
    train_samples_per_class: int
    test_samples_per_class: int
    spread: float

    def to_dict(self) -> dict:
        return {
            "kind": "blobs",
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "train_samples_per_class": self.train_samples_per_class,
            "test_samples_per_class": self.test_samples_per_class,
            "spread": self.spread,
        }


@dataclass(frozen=True)
class IdxSpec:
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str
    num_classes: int | None = None

    def to_dict(self) -> dict:
        return {
            "kind": "idx",
            "train_images": self.train_images,
            "train_labels": self.train_labels,
            "test_images": self.test_images,
            "test_labels": self.test_labels,
            "num_classes": self.num_classes,
        }


DatasetSpec = Union[BlobsSpec, IdxSpec]


@dataclass(frozen=True)
class ModelConfig:
    kind: str = SOFTMAX_REGRESSION
    hidden_dim: int = 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hidden_dim": self.hidden_dim}


@dataclass(frozen=True)
class SpeedProfileConfig:
    group: str
    steps_per_second: float
    eval_samples_per_second: float

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "steps_per_second": self.steps_per_second,
            "eval_samples_per_second": self.eval_samples_per_second,
        }


@dataclass(frozen=True)
class SizeDistConfig:
    kind: str
    total: int | None = None
    decay: float = 0.8
    exponent: float = 1.5

    def to_distribution(self, num_learners: int) -> SizeDistribution:
        return SizeDistribution(
            kind=self.kind, num_learners=num_learners, decay=self.decay, exponent=self.exponent
        )

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "total": self.total}
        if self.kind == "skewed":
            d["decay"] = self.decay
        if self.kind == "powerlaw":
            d["exponent"] = self.exponent
        return d


@dataclass(frozen=True)
class ClassAssignmentSpec:
    kind: str  # iid | noniid | preset | explicit
    classes_per_learner: int | None = None
    preset: str | None = None
    per_learner_classes: tuple[tuple[int, ...], ...] | None = None

    def resolve(self, num_learners: int, num_classes: int) -> ClassAssignment:
        if self.kind == "iid":
            return iid_assignment(num_learners, num_classes)
        if self.kind == "noniid":
            try:
                return rotation_assignment(num_learners, self.classes_per_learner, num_classes)
            except ValueError as exc:
                raise ConfigError(f"class_assignment.classes_per_learner: {exc}") from exc
        if self.kind == "preset":
            counts = CLASS_COUNT_PRESETS[self.preset]
            if len(counts) != num_learners:
                raise ConfigError(
                    f"class_assignment.preset: {self.preset!r} defines {len(counts)} "
                    f"learners but num_learners={num_learners}"
                )
            try:
                return assignment_from_class_counts(counts, num_classes)
            except ValueError as exc:
                raise ConfigError(f"class_assignment.preset: {exc}") from exc
        lists = self.per_learner_classes
        if len(lists) != num_learners:
            raise ConfigError(
                f"class_assignment.per_learner_classes: {len(lists)} lists for "
                f"{num_learners} learners"
            )
        try:
            return ClassAssignment(lists)
        except ValueError as exc:
            raise ConfigError(f"class_assignment.per_learner_classes: {exc}") from exc

    def to_dict(self) -> dict:
        if self.kind == "iid":
            return {"kind": "iid"}
        if self.kind == "noniid":
            return {"kind": "noniid", "classes_per_learner": self.classes_per_learner}
        if self.kind == "preset":
            return {"kind": "preset", "name": self.preset}
        return {
            "kind": "explicit",
            "per_learner_classes": [list(c) for c in self.per_learner_classes],
        }


@dataclass(frozen=True)
class TriggerSpec:
    """Config-level trigger description; per-group values resolve to one
    TriggerPolicy per learner at build time."""

    kind: str  # fixed | adaptive
    uf: int = DEFAULT_UF
    vc_loss: Mapping[str, float] | None = None
    vc_tomb: Mapping[str, int] | None = None
    warmup_cycles: int = 20
    max_epochs_per_cycle: int = 32
    fixed_uf: int = DEFAULT_UF  # fallback for non-adaptive schemes in a grid

    def policy_for(self, scheme: str, group: str) -> TriggerPolicy:
        if self.kind == "fixed" or scheme != "async_dvw":
            uf = self.uf if self.kind == "fixed" else self.fixed_uf
            return FixedPolicy(uf=uf)
        return AdaptivePolicy(
            vc_loss=float(self.vc_loss[group]),
            vc_tomb=int(self.vc_tomb[group]),
            warmup_cycles=self.warmup_cycles,
            max_epochs_per_cycle=self.max_epochs_per_cycle,
        )

    def to_dict(self) -> dict:
        if self.kind == "fixed":
            return {"kind": "fixed", "uf": self.uf}
        return {
            "kind": "adaptive",
            "vc_loss": dict(self.vc_loss),
            "vc_tomb": dict(self.vc_tomb),
            "warmup_cycles": self.warmup_cycles,
            "max_epochs_per_cycle": self.max_epochs_per_cycle,
            "fixed_uf": self.fixed_uf,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    num_learners: int
    dataset: DatasetSpec
    model: ModelConfig
    profiles: tuple
    size_distribution: SizeDistConfig
    class_assignment: ClassAssignmentSpec
    validation_fraction: float
    scheme: str
    schemes: tuple[str, ...] | None
    trigger: TriggerSpec
    hyperparameters: Hyperparameters
    fedasync: FedAsyncParams
    proximal_mu: float
    time_budget: float
    max_versions: int | None
    summary_times: tuple[float, ...]
    summary_rounds: tuple[int, ...]

    def resolved_proximal_mu(self) -> float:
        # FedAsync ships with its own divergence regularizer; an explicit
        # proximal_mu in the config wins.
        if self.proximal_mu > 0.0:
            return self.proximal_mu
        if self.scheme == "fedasync_poly":
            return self.fedasync.rho
        return 0.0

    def with_scheme(self, scheme: str) -> "ExperimentConfig":
        d = self.to_dict()
        d["scheme"] = scheme
        d.pop("schemes", None)
        if self.trigger.kind == "adaptive" and scheme != "async_dvw":
            d["trigger"] = {"kind": "fixed", "uf": self.trigger.fixed_uf}
        return config_from_dict(d, apply_env=False)

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "seed": self.seed,
            "num_learners": self.num_learners,
            "dataset": self.dataset.to_dict(),
            "model": self.model.to_dict(),
            "speed_profiles": [p.to_dict() for p in self.profiles],
            "size_distribution": self.size_distribution.to_dict(),
            "class_assignment": self.class_assignment.to_dict(),
            "validation_fraction": self.validation_fraction,
            "scheme": self.scheme,
            "trigger": self.trigger.to_dict(),
            "hyperparameters": {
                "eta": self.hyperparameters.eta,
                "gamma": self.hyperparameters.gamma,
                "beta": self.hyperparameters.batch_size,
            },
            "fedasync": {
                "alpha": self.fedasync.alpha,
                "a": self.fedasync.a,
                "rho": self.fedasync.rho,
            },
            "proximal_mu": self.proximal_mu,
            "time_budget": self.time_budget,
            "max_versions": self.max_versions,
            "summary_times": list(self.summary_times),
            "summary_rounds": list(self.summary_rounds),
        }
        if self.schemes is not None:
            d["schemes"] = list(self.schemes)
        return d


def _parse_dataset(sec: _Section) -> DatasetSpec:
    kind = sec.take("kind", str, required=True)
    if kind == "blobs":
        spec = BlobsSpec(
            input_dim=sec.take("input_dim", int, required=True),
            num_classes=sec.take("num_classes", int, required=True),
            train_samples_per_class=sec.take("train_samples_per_class", int, required=True),
            test_samples_per_class=sec.take("test_samples_per_class", int, default=200),
            spread=sec.take("spread", float, default=0.35),
        )
        sec.finish()
        if spec.input_dim < 1:
            raise ConfigError("dataset.input_dim: must be >= 1")
        if spec.num_classes < 2:
            raise ConfigError("dataset.num_classes: must be >= 2")
        if spec.train_samples_per_class < 1 or spec.test_samples_per_class < 1:
            raise ConfigError("dataset: per-class sample counts must be >= 1")
        if spec.spread < 0:
            raise ConfigError("dataset.spread: must be >= 0")
        return spec
    if kind == "idx":
        spec = IdxSpec(
            train_images=sec.take("train_images", str, required=True),
            train_labels=sec.take("train_labels", str, required=True),
            test_images=sec.take("test_images", str, required=True),
            test_labels=sec.take("test_labels", str, required=True),
            num_classes=sec.take("num_classes", int, default=None),
        )
        sec.finish()
        return spec
    raise ConfigError(f"dataset.kind: expected 'blobs' or 'idx', got {kind!r}")


def _parse_model(sec: _Section | None) -> ModelConfig:
    if sec is None:
        return ModelConfig()
    kind = sec.take("kind", str, default=SOFTMAX_REGRESSION)
    hidden = sec.take("hidden_dim", int, default=0)
    sec.finish()
    if kind not in MODEL_KINDS:
        raise ConfigError(f"model.kind: expected one of {list(MODEL_KINDS)}, got {kind!r}")
    if kind == MLP_1HIDDEN and hidden < 1:
        raise ConfigError("model.hidden_dim: must be >= 1 for mlp-1hidden")
    return ModelConfig(kind, hidden)


def _parse_profiles(raw: Any, num_learners: int, path: str) -> tuple[SpeedProfileConfig, ...]:
    if raw is None:
        return tuple(
            SpeedProfileConfig("fast", **DEFAULT_FAST_PROFILE) for _ in range(num_learners)
        )
    if isinstance(raw, Mapping):
        sec = _Section(raw, path)
        num_fast = sec.take("num_fast", int, default=num_learners)
        fast_sec = sec.section("fast")
        slow_sec = sec.section("slow")
        sec.finish()
        if not (0 <= num_fast <= num_learners):
            raise ConfigError(f"{path}.num_fast: must lie in [0, num_learners]")

        def group_profile(child: _Section | None, defaults: dict, group: str):
            if child is None:
                return SpeedProfileConfig(group, **defaults)
            sps = child.take("steps_per_second", float, default=defaults["steps_per_second"])
            eps = child.take(
                "eval_samples_per_second", float, default=defaults["eval_samples_per_second"]
            )
            child.finish()
            return SpeedProfileConfig(group, sps, eps)

        fast = group_profile(fast_sec, DEFAULT_FAST_PROFILE, "fast")
        slow = group_profile(slow_sec, DEFAULT_SLOW_PROFILE, "slow")
        return tuple(
            fast if i < num_fast else slow for i in range(num_learners)
        )
    if isinstance(raw, list):
        if len(raw) != num_learners:
            raise ConfigError(f"{path}: {len(raw)} profiles for {num_learners} learners")
        out = []
        for i, item in enumerate(raw):
            sec = _Section(item, f"{path}[{i}]")
            group = sec.take("group", str, required=True)
            sps = sec.take("steps_per_second", float, required=True)
            eps = sec.take("eval_samples_per_second", float, required=True)
            sec.finish()
            if group not in ("fast", "slow"):
                raise ConfigError(f"{path}[{i}].group: expected 'fast' or 'slow'")
            if sps <= 0 or eps <= 0:
                raise ConfigError(f"{path}[{i}]: rates must be positive")
            out.append(SpeedProfileConfig(group, sps, eps))
        return tuple(out)
    raise ConfigError(f"{path}: expected an object or a list")


def _parse_size_distribution(sec: _Section | None) -> SizeDistConfig:
    if sec is None:
        return SizeDistConfig("uniform")
    kind = sec.take("kind", str, required=True)
    total = sec.take("total", int, default=None)
    decay = sec.take("decay", float, default=0.8)
    exponent = sec.take("exponent", float, default=1.5)
    sec.finish()
    if kind not in ("uniform", "skewed", "powerlaw"):
        raise ConfigError(
            f"size_distribution.kind: expected uniform/skewed/powerlaw, got {kind!r}"
        )
    if total is not None and total < 1:
        raise ConfigError("size_distribution.total: must be >= 1")
    if not (0.0 < decay <= 1.0):
        raise ConfigError("size_distribution.decay: must lie in (0, 1]")
    if exponent <= 0:
        raise ConfigError("size_distribution.exponent: must be positive")
    return SizeDistConfig(kind, total, decay, exponent)


def _parse_class_assignment(sec: _Section | None) -> ClassAssignmentSpec:
    if sec is None:
        return ClassAssignmentSpec("iid")
    kind = sec.take("kind", str, required=True)
    if kind == "iid":
        sec.finish()
        return ClassAssignmentSpec("iid")
    if kind == "noniid":
        x = sec.take("classes_per_learner", int, required=True)
        sec.finish()
        if x < 1:
            raise ConfigError("class_assignment.classes_per_learner: must be >= 1")
        return ClassAssignmentSpec("noniid", classes_per_learner=x)
    if kind == "preset":
        name = sec.take("name", str, required=True)
        sec.finish()
        if name not in CLASS_COUNT_PRESETS:
            raise ConfigError(
                f"class_assignment.name: unknown preset {name!r}; "
                f"available: {sorted(CLASS_COUNT_PRESETS)}"
            )
        return ClassAssignmentSpec("preset", preset=name)
    if kind == "explicit":
        lists = sec.take("per_learner_classes", list, required=True)
        sec.finish()
        try:
            frozen = tuple(tuple(int(c) for c in classes) for classes in lists)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"class_assignment.per_learner_classes: {exc}") from exc
        return ClassAssignmentSpec("explicit", per_learner_classes=frozen)
    raise ConfigError(
        f"class_assignment.kind: expected iid/noniid/preset/explicit, got {kind!r}"
    )


def _parse_group_value(sec: _Section, key: str, types, default):
    sec._seen.add(key)
    if key not in sec.raw:
        return {"fast": default, "slow": default}
    value = sec.raw[key]
    if isinstance(value, Mapping):
        child = _Section(value, f"{sec.path}.{key}")
        fast = child.take("fast", types, required=True)
        slow = child.take("slow", types, required=True)
        child.finish()
        return {"fast": fast, "slow": slow}
    if types is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, types):
        raise ConfigError(f"{sec.path}.{key}: expected a number or a fast/slow object")
    return {"fast": value, "slow": value}


def _parse_trigger(sec: _Section | None, scheme: str, schemes) -> TriggerSpec:
    if sec is None:
        return TriggerSpec("fixed", uf=DEFAULT_UF)
    kind = sec.take("kind", str, required=True)
    if kind == "fixed":
        uf = sec.take("uf", int, default=DEFAULT_UF)
        sec.finish()
        if uf < 1:
            raise ConfigError("trigger.uf: must be >= 1")
        return TriggerSpec("fixed", uf=uf)
    if kind != "adaptive":
        raise ConfigError(f"trigger.kind: expected 'fixed' or 'adaptive', got {kind!r}")
    vc_loss = _parse_group_value(sec, "vc_loss", float, 0.0)
    vc_tomb = _parse_group_value(sec, "vc_tomb", int, 0)
    warmup = sec.take("warmup_cycles", int, default=20)
    cap = sec.take("max_epochs_per_cycle", int, default=32)
    fixed_uf = sec.take("fixed_uf", int, default=DEFAULT_UF)
    sec.finish()
    if any(v < 0 for v in vc_loss.values()):
        raise ConfigError("trigger.vc_loss: must be >= 0")
    if any(v < 0 for v in vc_tomb.values()):
        raise ConfigError("trigger.vc_tomb: must be >= 0")
    if warmup < 1:
        raise ConfigError("trigger.warmup_cycles: must be >= 1")
    if cap < 1:
        raise ConfigError("trigger.max_epochs_per_cycle: must be >= 1")
    if fixed_uf < 1:
        raise ConfigError("trigger.fixed_uf: must be >= 1")
    if schemes is None and scheme != "async_dvw":
        raise ConfigError(
            "trigger.kind: the adaptive policy requires scheme 'async_dvw' "
            f"(got {scheme!r})"
        )
    return TriggerSpec(
        "adaptive",
        vc_loss=vc_loss,
        vc_tomb=vc_tomb,
        warmup_cycles=warmup,
        max_epochs_per_cycle=cap,
        fixed_uf=fixed_uf,
    )


def config_from_dict(raw: Mapping[str, Any], apply_env: bool = True) -> ExperimentConfig:
    root = _Section(raw, "")
    name = root.take("name", str, default="experiment")
    seed = root.take("seed", int, default=DEFAULT_SEED)
    if apply_env and os.environ.get(SEED_ENV_VAR):
        try:
            seed = int(os.environ[SEED_ENV_VAR])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR}: not an integer") from exc
    if seed < 0:
        raise ConfigError("seed: must be non-negative")

    num_learners = root.take("num_learners", int, required=True)
    if num_learners < 1:
        raise ConfigError("num_learners: must be >= 1")

    dataset = _parse_dataset(root.section("dataset", required=True))
    model = _parse_model(root.section("model"))
    root._seen.add("speed_profiles")
    profiles = _parse_profiles(raw.get("speed_profiles"), num_learners, "speed_profiles")
    size_dist = _parse_size_distribution(root.section("size_distribution"))
    class_assignment = _parse_class_assignment(root.section("class_assignment"))

    validation_fraction = root.take("validation_fraction", float, default=DEFAULT_VALIDATION_FRACTION)
    if not (0.0 < validation_fraction < 1.0):
        raise ConfigError("validation_fraction: must lie strictly between 0 and 1")

    scheme = root.take("scheme", str, default=DEFAULT_SCHEME)
    if scheme not in SCHEMES:
        raise ConfigError(f"scheme: expected one of {list(SCHEMES)}, got {scheme!r}")
    schemes_raw = root.take("schemes", list, default=None)
    schemes = None
    if schemes_raw is not None:
        for s in schemes_raw:
            if s not in SCHEMES:
                raise ConfigError(f"schemes: unknown scheme {s!r}")
        if len(set(schemes_raw)) != len(schemes_raw):
            raise ConfigError("schemes: duplicate entries")
        schemes = tuple(schemes_raw)

    trigger = _parse_trigger(root.section("trigger"), scheme, schemes)

    hp_sec = root.section("hyperparameters")
    if hp_sec is None:
        hp = Hyperparameters(eta=0.05, gamma=0.75, batch_size=100)
    else:
        eta = hp_sec.take("eta", float, default=0.05)
        gamma = hp_sec.take("gamma", float, default=0.75)
        beta = hp_sec.take("beta", int, default=100)
        hp_sec.finish()
        try:
            hp = Hyperparameters(eta=eta, gamma=gamma, batch_size=beta)
        except ValueError as exc:
            raise ConfigError(f"hyperparameters: {exc}") from exc

    fa_sec = root.section("fedasync")
    if fa_sec is None:
        fedasync = FedAsyncParams()
    else:
        alpha = fa_sec.take("alpha", float, default=0.5)
        a = fa_sec.take("a", float, default=0.5)
        rho = fa_sec.take("rho", float, default=0.005)
        fa_sec.finish()
        try:
            fedasync = FedAsyncParams(alpha=alpha, a=a, rho=rho)
        except ValueError as exc:
            raise ConfigError(f"fedasync: {exc}") from exc

    proximal_mu = root.take("proximal_mu", float, default=0.0)
    if proximal_mu < 0:
        raise ConfigError("proximal_mu: must be >= 0")

    time_budget = root.take("time_budget", float, default=DEFAULT_TIME_BUDGET)
    if time_budget <= 0:
        raise ConfigError("time_budget: must be positive")
    max_versions = root.take("max_versions", int, default=None)
    if max_versions is not None and max_versions < 1:
        raise ConfigError("max_versions: must be >= 1")

    summary_times_raw = root.take("summary_times", list, default=None)
    if summary_times_raw is None:
        summary_times = (time_budget,)
    else:
        try:
            summary_times = tuple(float(t) for t in summary_times_raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"summary_times: {exc}") from exc
    summary_rounds_raw = root.take("summary_rounds", list, default=None)
    if summary_rounds_raw is None:
        summary_rounds = ()
    else:
        try:
            summary_rounds = tuple(int(r) for r in summary_rounds_raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"summary_rounds: {exc}") from exc

    root.finish()
    return ExperimentConfig(
        name=name,
        seed=seed,
        num_learners=num_learners,
        dataset=dataset,
        model=model,
        profiles=profiles,
        size_distribution=size_dist,
        class_assignment=class_assignment,
        validation_fraction=validation_fraction,
        scheme=scheme,
        schemes=schemes,
        trigger=trigger,
        hyperparameters=hp,
        fedasync=fedasync,
        proximal_mu=proximal_mu,
        time_budget=time_budget,
        max_versions=max_versions,
        summary_times=summary_times,
        summary_rounds=summary_rounds,
    )


def parse_config(path: str) -> ExperimentConfig:
    """Load, validate and default-fill a JSON experiment config."""
    try:
        with open(path, "r") as f:
            raw = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# Desk-scale presets: three data-size regimes crossed with IID / non-IID
# class assignments over synthetic blobs, small enough to run in seconds.
# ---------------------------------------------------------------------------

_HETERO_PROFILES = {
    "num_fast": 5,
    "fast": {"steps_per_second": 100.0, "eval_samples_per_second": 2000.0},
    "slow": {"steps_per_second": 20.0, "eval_samples_per_second": 400.0},
}

_BLOBS_SMALL = {
    "kind": "blobs",
    "input_dim": 8,
    "num_classes": 4,
    "train_samples_per_class": 1200,
    "test_samples_per_class": 250,
    "spread": 0.45,
}

PRESETS: dict[str, dict] = {
    "blobs-uniform-iid": {
        "name": "blobs-uniform-iid",
        "num_learners": 10,
        "dataset": dict(_BLOBS_SMALL),
        "size_distribution": {"kind": "uniform", "total": 4000},
        "class_assignment": {"kind": "iid"},
        "scheme": "sync_fedavg",
        "trigger": {"kind": "fixed", "uf": 4},
        "hyperparameters": {"eta": 0.05, "gamma": 0.75, "beta": 100},
        "time_budget": 40.0,
        "max_versions": 50,
        "summary_rounds": [50],
    },
    "blobs-uniform-noniid2": {
        "name": "blobs-uniform-noniid2",
        "num_learners": 10,
        "dataset": dict(_BLOBS_SMALL),
        "size_distribution": {"kind": "uniform", "total": 4000},
        "class_assignment": {"kind": "noniid", "classes_per_learner": 2},
        "scheme": "sync_dvw",
        "trigger": {"kind": "fixed", "uf": 4},
        "hyperparameters": {"eta": 0.05, "gamma": 0.75, "beta": 100},
        "time_budget": 40.0,
        "max_versions": 30,
    },
    "blobs-skewed-iid": {
        "name": "blobs-skewed-iid",
        "num_learners": 10,
        "dataset": dict(_BLOBS_SMALL),
        "speed_profiles": dict(_HETERO_PROFILES),
        "size_distribution": {"kind": "skewed", "total": 4000, "decay": 0.8},
        "class_assignment": {"kind": "iid"},
        "scheme": "async_fedavg",
        "trigger": {"kind": "fixed", "uf": 4},
        "hyperparameters": {"eta": 0.05, "gamma": 0.75, "beta": 100},
        "time_budget": 25.0,
        "max_versions": 400,
    },
    "blobs-powerlaw-iid": {
        "name": "blobs-powerlaw-iid",
        "num_learners": 10,
        "dataset": dict(_BLOBS_SMALL),
        "speed_profiles": dict(_HETERO_PROFILES),
        "size_distribution": {"kind": "powerlaw", "total": 4000, "exponent": 1.5},
        "class_assignment": {"kind": "iid"},
        "scheme": "fedasync_poly",
        "trigger": {"kind": "fixed", "uf": 4},
        "hyperparameters": {"eta": 0.05, "gamma": 0.75, "beta": 100},
        "fedasync": {"alpha": 0.5, "a": 0.5, "rho": 0.005},
        "time_budget": 25.0,
        "max_versions": 400,
    },
    "blobs-powerlaw-noniid": {
        "name": "blobs-powerlaw-noniid",
        "num_learners": 10,
        "dataset": dict(_BLOBS_SMALL, train_samples_per_class=2000),
        "speed_profiles": dict(_HETERO_PROFILES),
        "size_distribution": {"kind": "powerlaw", "total": 4000, "exponent": 1.5},
        "class_assignment": {"kind": "noniid", "classes_per_learner": 2},
        "scheme": "async_dvw",
        "schemes": ["sync_fedavg", "async_fedavg", "sync_dvw", "async_dvw", "fedasync_poly"],
        "trigger": {
            "kind": "adaptive",
            "vc_loss": {"fast": 0.0, "slow": 1.0},
            "vc_tomb": {"fast": 4, "slow": 1},
            "warmup_cycles": 20,
            "max_epochs_per_cycle": 32,
            "fixed_uf": 4,
        },
        "hyperparameters": {"eta": 0.05, "gamma": 0.75, "beta": 100},
        "fedasync": {"alpha": 0.5, "a": 0.5, "rho": 0.005},
        "time_budget": 25.0,
    },
}


def preset_names() -> list[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> dict:
    try:
        return json.loads(json.dumps(PRESETS[name]))
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {preset_names()}"
        ) from None
