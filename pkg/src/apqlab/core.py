"""Domain types shared by the analytic, fluid and simulation engines.

Classes are identified by their 1-based index; index 1 is the most urgent.
All types are frozen dataclasses holding tuples, so they can be shared freely.
Construction never raises on bad values: call :func:`validate` to get the
list of violated preconditions, or :func:`ensure_valid` to raise on them.
"""

from __future__ import annotations

import json
import math
import numbers
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence, Union

U64_MAX = 2**64 - 1


class ValidationError(ValueError):
    """Raised when a model object violates one or more preconditions."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ClassSpec:
    index: int
    arrival_rate: float
    accumulation_rate: float = 1.0


@dataclass(frozen=True)
class SystemSpec:
    classes: tuple[ClassSpec, ...]
    service_rate: float = 1.0

    @classmethod
    def from_rates(cls, arrival_rates, accumulation_rates=None, service_rate=1.0):
        """Build a system from parallel rate vectors.

        When ``accumulation_rates`` is omitted the classes get ``K, K-1, ..., 1``,
        which is only meaningful for static-priority use.
        """
        lam = list(arrival_rates)
        b = list(accumulation_rates) if accumulation_rates is not None else list(range(len(lam), 0, -1))
        if len(b) != len(lam):
            raise ValidationError(["arrival and accumulation rate vectors differ in length"])
        return cls(tuple(ClassSpec(i + 1, l, r) for i, (l, r) in enumerate(zip(lam, b))), service_rate)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def arrival_rates(self) -> tuple[float, ...]:
        return tuple(c.arrival_rate for c in self.classes)

    @property
    def accumulation_rates(self) -> tuple[float, ...]:
        return tuple(c.accumulation_rate for c in self.classes)

    def load(self) -> float:
        return sum(self.arrival_rates) / self.service_rate

    def with_arrival_rates(self, rates) -> "SystemSpec":
        rates = tuple(rates)
        return replace(self, classes=tuple(replace(c, arrival_rate=r) for c, r in zip(self.classes, rates)))


# Policies. Every policy reduces to (effective accumulation rates, static prefix
# length): the first ``prefix`` classes are served by index, the rest by b*wait.


@dataclass(frozen=True)
class Static:
    kind = "static"

    def effective(self, system: SystemSpec) -> tuple[tuple[float, ...], int]:
        return system.accumulation_rates, system.n_classes


@dataclass(frozen=True)
class Accumulating:
    kind = "accumulating"

    def effective(self, system: SystemSpec) -> tuple[tuple[float, ...], int]:
        return system.accumulation_rates, 0


@dataclass(frozen=True)
class ScaledAccumulating:
    """Accumulating priority with rates ``c_i/epsilon`` above a tail of ``c_i``."""

    epsilon: float
    base_rates: tuple[float, ...]
    static_tail_count: int = 1
    kind = "scaled_accumulating"

    def rates(self) -> tuple[float, ...]:
        head = len(self.base_rates) - self.static_tail_count
        return tuple(c / self.epsilon if i < head else c for i, c in enumerate(self.base_rates))

    def effective(self, system: SystemSpec) -> tuple[tuple[float, ...], int]:
        return self.rates(), 0


@dataclass(frozen=True)
class HybridLex:
    """Classes ``1..static_prefix`` outrank everyone; the rest use accumulated priority."""

    static_prefix: int
    kind = "hybrid_lex"

    def effective(self, system: SystemSpec) -> tuple[tuple[float, ...], int]:
        return system.accumulation_rates, self.static_prefix


Policy = Union[Static, Accumulating, ScaledAccumulating, HybridLex]


@dataclass(frozen=True)
class ScenarioSpec:
    system: SystemSpec
    policy_schedule: tuple[tuple[float, Policy], ...]
    horizon: float
    seed: int = 0
    sample_interval: float = 1.0
    rate_schedule: tuple[tuple[float, tuple[float, ...]], ...] = ()
    initial_levels: tuple[float, ...] | None = None

    def __post_init__(self):
        # An empty rate schedule means "the class arrival rates, from time 0".
        if not self.rate_schedule:
            object.__setattr__(self, "rate_schedule", ((0.0, self.system.arrival_rates),))

    def policy_at(self, t: float) -> Policy:
        current = self.policy_schedule[0][1]
        for start, pol in self.policy_schedule:
            if start <= t:
                current = pol
        return current

    def rates_at(self, t: float) -> tuple[float, ...]:
        current = self.rate_schedule[0][1]
        for start, rates in self.rate_schedule:
            if start <= t:
                current = rates
        return current


def _real(x) -> bool:
    return isinstance(x, numbers.Real) and not isinstance(x, bool) and math.isfinite(x)


def _positive(x) -> bool:
    return _real(x) and x > 0


def _nonneg(x) -> bool:
    return _real(x) and x >= 0


def validate_system(system: SystemSpec) -> list[str]:
    errors = []
    if not system.classes:
        errors.append("system needs at least one class")
    for pos, c in enumerate(system.classes):
        if c.index != pos + 1:
            errors.append(f"class indices not contiguous from 1 (position {pos + 1} has index {c.index})")
        if not _nonneg(c.arrival_rate):
            errors.append(f"class {c.index}: arrival_rate must be a finite number >= 0")
        if not _positive(c.accumulation_rate):
            errors.append(f"class {c.index}: accumulation_rate must be a finite number > 0")
    b = system.accumulation_rates
    if all(_positive(x) for x in b) and any(b[i] <= b[i + 1] for i in range(len(b) - 1)):
        errors.append("accumulation rates not strictly decreasing")
    if not _positive(system.service_rate):
        errors.append("service_rate must be a finite number > 0")
    return errors


def validate_policy(policy: Policy, n_classes: int) -> list[str]:
    if isinstance(policy, (Static, Accumulating)):
        return []
    if isinstance(policy, ScaledAccumulating):
        errors = []
        if not _positive(policy.epsilon):
            errors.append("scaled_accumulating: epsilon must be > 0")
        if len(policy.base_rates) != n_classes:
            errors.append(f"scaled_accumulating: base_rates needs {n_classes} entries")
        if not all(_positive(c) for c in policy.base_rates):
            errors.append("scaled_accumulating: base_rates must be > 0")
        t = policy.static_tail_count
        if not isinstance(t, int) or isinstance(t, bool) or not 1 <= t <= n_classes:
            errors.append(f"scaled_accumulating: static_tail_count must be an integer in [1, {n_classes}]")
        return errors
    if isinstance(policy, HybridLex):
        m = policy.static_prefix
        if not isinstance(m, int) or isinstance(m, bool) or not 0 <= m <= n_classes:
            return [f"hybrid_lex: static_prefix must be an integer in [0, {n_classes}]"]
        return []
    return [f"unknown policy {policy!r}"]


def _validate_schedule(name: str, times: Sequence[Any], horizon) -> list[str]:
    errors = []
    if not times:
        return [f"{name} is empty"]
    if not all(_nonneg(t) for t in times):
        return [f"{name}: times must be finite numbers >= 0"]
    if times[0] != 0:
        errors.append(f"{name} must start at time 0")
    if any(a >= b for a, b in zip(times, times[1:])):
        errors.append("schedule times not strictly increasing")
    if _positive(horizon) and any(t >= horizon for t in times):
        errors.append(f"{name}: times must lie in [0, horizon)")
    return errors


def validate(spec: ScenarioSpec) -> list[str]:
    """Return every violated precondition of ``spec``; an empty list means ok."""
    errors = validate_system(spec.system)
    k = spec.system.n_classes
    if not _positive(spec.horizon):
        errors.append("horizon must be a finite number > 0")
    if not _positive(spec.sample_interval):
        errors.append("sample_interval must be a finite number > 0")
    if not isinstance(spec.seed, int) or isinstance(spec.seed, bool) or not 0 <= spec.seed <= U64_MAX:
        errors.append("seed must be an unsigned 64-bit integer")

    errors += _validate_schedule("rate_schedule", [t for t, _ in spec.rate_schedule], spec.horizon)
    for t, rates in spec.rate_schedule:
        if len(rates) != k:
            errors.append(f"rate_schedule entry at {t}: needs {k} rates")
        elif not all(_nonneg(r) for r in rates):
            errors.append(f"rate_schedule entry at {t}: arrival rates must be finite and >= 0")

    errors += _validate_schedule("policy_schedule", [t for t, _ in spec.policy_schedule], spec.horizon)
    for t, pol in spec.policy_schedule:
        errors += [f"policy at {t}: {e}" for e in validate_policy(pol, k)]

    if spec.initial_levels is not None:
        if len(spec.initial_levels) != k or not all(_nonneg(x) for x in spec.initial_levels):
            errors.append(f"initial_levels must be {k} finite numbers >= 0")
    # duplicate messages arise when both schedules share a defect
    return list(dict.fromkeys(errors))


def ensure_valid(spec: ScenarioSpec) -> None:
    errors = validate(spec)
    if errors:
        raise ValidationError(errors)


def require_unit_service(system: SystemSpec) -> None:
    if system.service_rate != 1:
        raise ValidationError(["service_rate must be 1 for this engine"])


# ---------------------------------------------------------------------------
# Scenario documents
# ---------------------------------------------------------------------------

_POLICY_KINDS = {"static", "accumulating", "scaled_accumulating", "hybrid_lex"}
_POLICY_KEYS = {"kind", "epsilon", "base_rates", "static_tail_count", "static_prefix"}


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ValidationError([f"{where}.{k}: unknown key" if where else f"{k}: unknown key" for k in unknown])


def policy_from_dict(d: dict, where: str = "policy") -> Policy:
    if not isinstance(d, dict) or "kind" not in d:
        raise ValidationError([f"{where}: expected an object with a 'kind' key"])
    _reject_unknown(d, _POLICY_KEYS, where)
    kind = d["kind"]
    if kind == "static":
        return Static()
    if kind == "accumulating":
        return Accumulating()
    if kind == "scaled_accumulating":
        try:
            return ScaledAccumulating(
                epsilon=d["epsilon"],
                base_rates=tuple(d["base_rates"]),
                static_tail_count=d.get("static_tail_count", 1),
            )
        except KeyError as e:
            raise ValidationError([f"{where}: missing key {e.args[0]!r}"]) from None
    if kind == "hybrid_lex":
        if "static_prefix" not in d:
            raise ValidationError([f"{where}: missing key 'static_prefix'"])
        return HybridLex(d["static_prefix"])
    raise ValidationError([f"{where}.kind: unknown policy kind {kind!r} (expected one of {sorted(_POLICY_KINDS)})"])


def policy_to_dict(p: Policy) -> dict:
    if isinstance(p, ScaledAccumulating):
        return {"kind": p.kind, "epsilon": p.epsilon, "base_rates": list(p.base_rates),
                "static_tail_count": p.static_tail_count}
    if isinstance(p, HybridLex):
        return {"kind": p.kind, "static_prefix": p.static_prefix}
    return {"kind": p.kind}


def scenario_from_dict(doc: dict) -> ScenarioSpec:
    """Build a scenario from a parsed scenario document.

    Structural problems (missing keys, wrong container types) raise
    :class:`ValidationError` naming the offending key. Value-domain problems
    are left for :func:`validate`.
    """
    if not isinstance(doc, dict):
        raise ValidationError(["scenario: top level must be an object"])
    known = {"classes", "service_rate", "rate_schedule", "policy_schedule", "horizon", "seed",
             "sample_interval", "initial_levels", "name"}
    _reject_unknown(doc, known, "")
    for key in ("classes", "policy_schedule", "horizon"):
        if key not in doc:
            raise ValidationError([f"{key}: missing required key"])

    classes = doc["classes"]
    if not isinstance(classes, list):
        raise ValidationError(["classes: expected a list"])
    specs = []
    for i, c in enumerate(classes):
        if not isinstance(c, dict):
            raise ValidationError([f"classes[{i}]: expected an object"])
        _reject_unknown(c, {"arrival_rate", "accumulation_rate"}, f"classes[{i}]")
        if "arrival_rate" not in c:
            raise ValidationError([f"classes[{i}].arrival_rate: missing required key"])
        specs.append(ClassSpec(i + 1, c["arrival_rate"], c.get("accumulation_rate", float(len(classes) - i))))
    system = SystemSpec(tuple(specs), doc.get("service_rate", 1.0))

    def schedule(key, field, parse):
        raw = doc.get(key, [])
        if not isinstance(raw, list):
            raise ValidationError([f"{key}: expected a list"])
        out = []
        for i, entry in enumerate(raw):
            if not isinstance(entry, dict):
                raise ValidationError([f"{key}[{i}]: expected an object"])
            _reject_unknown(entry, {"start", field}, f"{key}[{i}]")
            if "start" not in entry:
                raise ValidationError([f"{key}[{i}].start: missing required key"])
            out.append((entry["start"], parse(entry, f"{key}[{i}]")))
        return tuple(out)

    def parse_rates(entry, where):
        if not isinstance(entry.get("rates"), list):
            raise ValidationError([f"{where}.rates: expected a list"])
        return tuple(entry["rates"])

    def parse_policy(entry, where):
        return policy_from_dict(entry.get("policy"), f"{where}.policy")

    initial = doc.get("initial_levels")
    return ScenarioSpec(
        system=system,
        policy_schedule=schedule("policy_schedule", "policy", parse_policy),
        horizon=doc["horizon"],
        seed=doc.get("seed", 0),
        sample_interval=doc.get("sample_interval", 1.0),
        rate_schedule=schedule("rate_schedule", "rates", parse_rates),
        initial_levels=tuple(initial) if initial is not None else None,
    )


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    doc = {
        "classes": [{"arrival_rate": c.arrival_rate, "accumulation_rate": c.accumulation_rate}
                    for c in spec.system.classes],
        "service_rate": spec.system.service_rate,
        "rate_schedule": [{"start": t, "rates": list(r)} for t, r in spec.rate_schedule],
        "policy_schedule": [{"start": t, "policy": policy_to_dict(p)} for t, p in spec.policy_schedule],
        "horizon": spec.horizon,
        "seed": spec.seed,
        "sample_interval": spec.sample_interval,
    }
    if spec.initial_levels is not None:
        doc["initial_levels"] = list(spec.initial_levels)
    return doc


def load_scenario(path: str | Path) -> ScenarioSpec:
    """Read a scenario file. JSON syntax errors keep their line/column."""
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError([f"{path}:{e.lineno}:{e.colno}: {e.msg}"]) from None
    try:
        return scenario_from_dict(doc)
    except ValidationError as e:
        raise ValidationError([f"{path}: {msg}" for msg in e.errors]) from None
