"""Experiment configuration: a flat, explicitly typed ``key : type = value`` format.

Example::

    # comments and blank lines are ignored
    budget.epsilon : float = 0.15
    experiment.victims : strs = mlp_b, mlp_wide, linear
    attack.mlff_mi.lff_eta : floats = 1.0

Every key must appear in the schema below and be written with the schema's
type. Model and attack entries are grouped by the ``<id>`` segment and keep
their order of first appearance.
"""

import hashlib
import re
from dataclasses import dataclass, field, replace
from importlib import resources

from .engine import LffConfig
from .errors import ConfigError
from .inner import InnerSpec
from .numeric import Budget

_TYPES = ("int", "float", "str", "bool", "ints", "floats", "strs")

SCHEMA = {
    "experiment.seed": "int",
    "experiment.attack_seed": "int",
    "experiment.surrogate": "str",
    "experiment.victims": "strs",
    "experiment.test_limit": "int",
    "dataset.classes": "int",
    "dataset.dim": "int",
    "dataset.train_per_class": "int",
    "dataset.test_per_class": "int",
    "dataset.spread": "float",
    "dataset.seed": "int",
    "budget.epsilon": "float",
    "budget.alpha": "float",
    "budget.iterations": "int",
    "budget.box_lo": "float",
    "budget.box_hi": "float",
    "report.wall_time": "bool",
}

MODEL_SCHEMA = {
    "kind": "str",
    "hidden": "int",
    "seed": "int",
    "epochs": "int",
    "lr": "float",
    "members": "strs",
}

ATTACK_SCHEMA = {
    "inner": "str",
    "mu": "float",
    "emi_samples": "int",
    "emi_radius": "float",
    "admix_scales": "int",
    "admix_mixes": "int",
    "admix_ratio": "float",
    "lff_q": "int",
    "lff_beta": "floats",
    "lff_order": "int",
    "lff_eta": "floats",
    "mode": "str",
    "baseline": "str",
}

_LINE = re.compile(r"^\s*([A-Za-z0-9_.\-]+)\s*:\s*([a-z]+)\s*=\s*(.*?)\s*$")
_NAME = re.compile(r"^[A-Za-z0-9_\-]+$")


def _convert(raw, typ, key):
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "bool":
            if raw.lower() not in ("true", "false"):
                raise ValueError(raw)
            return raw.lower() == "true"
        if typ == "str":
            if not raw:
                raise ValueError("empty")
            return raw
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if not items:
            raise ValueError("empty list")
        if typ == "ints":
            return tuple(int(s) for s in items)
        if typ == "floats":
            return tuple(float(s) for s in items)
        return tuple(items)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {raw!r} as {typ}") from exc


def _schema_type(key):
    if key in SCHEMA:
        return SCHEMA[key]
    parts = key.split(".")
    if len(parts) == 3 and parts[0] in ("model", "attack") and _NAME.match(parts[1]):
        table = MODEL_SCHEMA if parts[0] == "model" else ATTACK_SCHEMA
        if parts[2] in table:
            return table[parts[2]]
    raise ConfigError(f"unknown config key {key!r}")


def parse_text(text):
    """Parse config text into an ordered ``{key: value}`` dict (schema-checked)."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        m = _LINE.match(line)
        if not m:
            raise ConfigError(f"line {lineno}: expected 'key : type = value', got {stripped!r}")
        key, typ, raw = m.groups()
        if typ not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown type {typ!r}")
        expected = _schema_type(key)
        if typ != expected:
            raise ConfigError(f"line {lineno}: {key} must be declared as {expected}, not {typ}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        values[key] = _convert(raw, typ, key)
    return values


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def canonical_text(values):
    """Sorted, normalized rendering used for hashing."""
    return "".join(f"{k} : {_schema_type(k)} = {_format(values[k])}\n" for k in sorted(values))


def config_hash(values):
    return hashlib.sha256(canonical_text(values).encode()).hexdigest()


@dataclass(frozen=True)
class DatasetSpec:
    classes: int = 5
    dim: int = 20
    train_per_class: int = 200
    test_per_class: int = 100
    spread: float = 0.1
    box_lo: float = 0.0
    box_hi: float = 1.0


@dataclass(frozen=True)
class ModelEntry:
    id: str
    kind: str
    hidden: int = 32
    seed: int = 0
    epochs: int = 300
    lr: float = 0.5
    members: tuple = ()


@dataclass(frozen=True)
class AttackConfig:
    """One attack: inner attacker, optional LFF wrapper, loss mode and budget."""

    name: str
    inner: InnerSpec
    budget: Budget
    iterations: int
    lff: LffConfig = None
    targeted: bool = False
    baseline: str = None

    @property
    def calls_per_step(self):
        base = self.inner.calls_per_step
        return base if self.lff is None else base * self.lff.q**self.lff.order


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    budget: Budget
    iterations: int
    models: dict
    surrogate: str
    victims: tuple
    attacks: tuple
    seed: int = 0
    dataset_seed: int = 0
    attack_seed: int = 0
    test_limit: int = 0
    wall_time: bool = False
    values: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def hash(self):
        return config_hash(self.values)

    def attack(self, name):
        for a in self.attacks:
            if a.name == name:
                return a
        raise KeyError(name)

    def with_attacks(self, attacks):
        return replace(self, attacks=tuple(attacks))


def _grouped(values, prefix):
    groups = {}
    for key, v in values.items():
        parts = key.split(".")
        if parts[0] == prefix:
            groups.setdefault(parts[1], {})[parts[2]] = v
    return groups


def _build_attack(name, fields, budget, iterations):
    if "inner" not in fields:
        raise ConfigError(f"attack {name!r} needs an 'inner' attacker")
    defaults = InnerSpec()
    inner = InnerSpec(
        kind=fields["inner"],
        mu=fields.get("mu", defaults.mu),
        samples=fields.get("emi_samples", defaults.samples),
        radius=fields.get("emi_radius", defaults.radius),
        scales=fields.get("admix_scales", defaults.scales),
        mixes=fields.get("admix_mixes", defaults.mixes),
        ratio=fields.get("admix_ratio", defaults.ratio),
    )
    lff_keys = [k for k in fields if k.startswith("lff_")]
    lff = None
    if lff_keys:
        if "lff_q" not in fields:
            raise ConfigError(f"attack {name!r}: lff settings given without lff_q")
        order = fields.get("lff_order", 1)
        beta = fields.get("lff_beta", (1.0,))
        lff = LffConfig(
            q=fields["lff_q"],
            beta=beta[0] if len(beta) == 1 else beta,
            order=order,
            outer_momentum=fields.get("lff_eta"),
            iterations=iterations,
        )
    mode = fields.get("mode", "untargeted")
    if mode not in ("untargeted", "targeted"):
        raise ConfigError(f"attack {name!r}: mode must be untargeted or targeted")
    return AttackConfig(name, inner, budget, iterations, lff, mode == "targeted",
                        fields.get("baseline"))


def build(values, seed_override=None):
    """Validate a parsed key/value dict and assemble an :class:`ExperimentConfig`."""
    values = dict(values)
    if seed_override is not None:
        values["experiment.seed"] = int(seed_override)
    g = values.get
    dataset = DatasetSpec(
        classes=g("dataset.classes", 5),
        dim=g("dataset.dim", 20),
        train_per_class=g("dataset.train_per_class", 200),
        test_per_class=g("dataset.test_per_class", 100),
        spread=g("dataset.spread", 0.1),
        box_lo=g("budget.box_lo", 0.0),
        box_hi=g("budget.box_hi", 1.0),
    )
    if dataset.classes < 2 or dataset.dim < 1:
        raise ConfigError("dataset needs classes >= 2 and dim >= 1")
    if dataset.train_per_class < 1 or dataset.test_per_class < 1:
        raise ConfigError("dataset per-class counts must be >= 1")
    if dataset.spread < 0:
        raise ConfigError("dataset.spread must be >= 0")
    budget = Budget(g("budget.epsilon", 0.15), g("budget.alpha", 0.015),
                    dataset.box_lo, dataset.box_hi)
    iterations = g("budget.iterations", 16)
    if iterations < 0:
        raise ConfigError("budget.iterations must be >= 0")

    models = {}
    for mid, f in _grouped(values, "model").items():
        kind = f.get("kind")
        if kind not in ("linear", "mlp", "ensemble"):
            raise ConfigError(f"model {mid!r}: kind must be linear, mlp or ensemble")
        if kind == "ensemble" and not f.get("members"):
            raise ConfigError(f"model {mid!r}: ensemble needs members")
        models[mid] = ModelEntry(mid, kind, f.get("hidden", 32), f.get("seed", 0),
                                 f.get("epochs", 300), f.get("lr", 0.5), f.get("members", ()))
        if models[mid].hidden < 1 or models[mid].epochs < 0 or models[mid].lr <= 0:
            raise ConfigError(f"model {mid!r}: hidden >= 1, epochs >= 0, lr > 0 required")
    for m in models.values():
        for member in m.members:
            if member not in models or models[member].kind == "ensemble":
                raise ConfigError(f"model {m.id!r}: member {member!r} is not a trainable model")

    surrogate = g("experiment.surrogate")
    victims = tuple(g("experiment.victims", ()))
    for mid in (surrogate, *victims):
        if mid not in models:
            raise ConfigError(f"experiment refers to unknown model {mid!r}")
    if surrogate in victims:
        raise ConfigError("the surrogate is always reported; do not list it as a victim")

    attacks = tuple(_build_attack(n, f, budget, iterations)
                    for n, f in _grouped(values, "attack").items())
    if not attacks:
        raise ConfigError("config defines no attacks")
    names = [a.name for a in attacks]
    for a in attacks:
        if a.baseline is not None:
            if a.baseline not in names:
                raise ConfigError(f"attack {a.name!r}: baseline {a.baseline!r} is not defined")
            if a.baseline == a.name:
                raise ConfigError(f"attack {a.name!r} cannot be its own baseline")
    test_limit = g("experiment.test_limit", 0)
    if test_limit < 0:
        raise ConfigError("experiment.test_limit must be >= 0")
    return ExperimentConfig(
        dataset=dataset,
        budget=budget,
        iterations=iterations,
        models=models,
        surrogate=surrogate,
        victims=victims,
        attacks=attacks,
        seed=g("experiment.seed", 0),
        dataset_seed=g("dataset.seed", 0),
        attack_seed=g("experiment.attack_seed", 0),
        test_limit=test_limit,
        wall_time=g("report.wall_time", False),
        values=values,
    )


def loads(text, seed_override=None):
    return build(parse_text(text), seed_override)


def load(path, seed_override=None):
    with open(path, encoding="utf-8") as f:
        return loads(f.read(), seed_override)


def bundled(name="default"):
    """Text of a config shipped with the package (``default``, ``targeted``, ``ensemble``)."""
    return resources.files("lffattack.configs").joinpath(f"{name}.cfg").read_text()
