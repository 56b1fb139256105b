"""Experiment pipeline: synthetic data, model training, attack runs, transfer
reports and Q/beta sweeps.

Everything is deterministic given the seeds. Examples may be attacked in a
process pool, but results are reassembled in example order before any
aggregation, so the worker count never changes a report.
"""

import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend
from .config import AttackConfig
from .engine import lff_outer_loop, lffn_outer_loop
from .errors import ConfigError, InvariantViolation
from .inner import init_state, rollout
from .numeric import within_budget
from .oracles import EnsembleModel, LossMode, ModelSpec, train
from .trace import AttackTrace

DATASET_VERSION = 1
CSV_HEADER = "surrogate,victim,attack,clean_acc,asr,inc,oracle_calls,wall_ms"
_PLACEMENT_TRIES = 2000


# -- data ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    """Train/test split of labelled points in ``[box_lo, box_hi]^dim``."""

    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    classes: int
    box_lo: float = 0.0
    box_hi: float = 1.0

    def __post_init__(self):
        for xs, ys in ((self.train_x, self.train_y), (self.test_x, self.test_y)):
            if xs.ndim != 2 or len(xs) == 0 or len(xs) != len(ys):
                raise ValueError("each split needs a nonempty (n, N) array and n labels")
            if ys.min() < 0 or ys.max() >= self.classes:
                raise ValueError("labels out of range")
            if xs.min() < self.box_lo or xs.max() > self.box_hi:
                raise ValueError("dataset points leave the data box")
        if self.train_x.shape[1] != self.test_x.shape[1]:
            raise ValueError("train and test dimensions differ")

    @property
    def dim(self):
        return self.train_x.shape[1]

    def limited(self, n):
        """The same data with only the first ``n`` test examples (``0`` keeps all)."""
        if n <= 0 or n >= len(self.test_x):
            return self
        return replace(self, test_x=self.test_x[:n], test_y=self.test_y[:n])


def _place_centers(rng, spec):
    sep = 4.0 * spec.spread
    margin = min(2.0 * spec.spread, 0.25 * (spec.box_hi - spec.box_lo))
    lo, hi = spec.box_lo + margin, spec.box_hi - margin
    centers = []
    for _ in range(spec.classes):
        for _ in range(_PLACEMENT_TRIES):
            c = rng.uniform(lo, hi, spec.dim)
            if all(np.linalg.norm(c - o) >= sep for o in centers):
                centers.append(c)
                break
        else:
            raise ConfigError(
                f"cannot place {spec.classes} centers {sep:g} apart in a "
                f"{spec.dim}-dimensional box of side {hi - lo:g}"
            )
    return np.array(centers)


def generate_dataset(spec, seed):
    """Gaussian clusters around pairwise-separated centers, clipped to the box.

    Centers are at least ``4 * spread`` apart (L2). Points are drawn as
    ``center + spread * N(0, I)``, then each split is shuffled.
    """
    if spec.classes < 2 or spec.train_per_class < 1 or spec.test_per_class < 1:
        raise ConfigError("need classes >= 2 and at least one point per class and split")
    rng = np.random.default_rng(seed)
    centers = _place_centers(rng, spec)

    def split(per_class):
        xs = np.concatenate(
            [c + spec.spread * rng.standard_normal((per_class, spec.dim)) for c in centers]
        )
        ys = np.repeat(np.arange(spec.classes), per_class)
        order = rng.permutation(len(ys))
        return np.clip(xs[order], spec.box_lo, spec.box_hi), ys[order]

    train_x, train_y = split(spec.train_per_class)
    test_x, test_y = split(spec.test_per_class)
    return Dataset(train_x, train_y, test_x, test_y, spec.classes, spec.box_lo, spec.box_hi)


def _header(config_hash):
    return f"# config_sha256={config_hash}\n" if config_hash else ""


def dumps_dataset(ds, config_hash=None):
    out = io.StringIO()
    out.write(_header(config_hash))
    out.write(f"lffattack-dataset {DATASET_VERSION}\n")
    out.write(f"classes {ds.classes}\ndim {ds.dim}\nbox {ds.box_lo!r} {ds.box_hi!r}\n")
    for name, xs, ys in (("train", ds.train_x, ds.train_y), ("test", ds.test_x, ds.test_y)):
        out.write(f"{name} {len(ys)}\n")
        for x, y in zip(xs, ys):
            out.write(f"{int(y)} " + " ".join(repr(float(v)) for v in x) + "\n")
    out.write("end\n")
    return out.getvalue()


def loads_dataset(text):
    lines = iter(ln for ln in text.splitlines() if ln and not ln.startswith("#"))
    head = next(lines, "").split()
    if len(head) != 2 or head[0] != "lffattack-dataset":
        raise ValueError("not an lffattack dataset file")
    if int(head[1]) != DATASET_VERSION:
        raise ValueError(f"unsupported dataset format version {head[1]}")
    classes = int(next(lines).split()[1])
    dim = int(next(lines).split()[1])
    _, lo, hi = next(lines).split()
    splits = {}
    for _ in range(2):
        name, n = next(lines).split()
        rows = [next(lines).split() for _ in range(int(n))]
        if any(len(r) != dim + 1 for r in rows):
            raise ValueError(f"{name} split has rows of the wrong length")
        splits[name] = (
            np.array([[float(v) for v in r[1:]] for r in rows]).reshape(-1, dim),
            np.array([int(r[0]) for r in rows], dtype=np.intp),
        )
    if next(lines, None) != "end":
        raise ValueError("dataset file is truncated")
    return Dataset(*splits["train"], *splits["test"], classes, float(lo), float(hi))


def save_dataset(ds, path, config_hash=None):
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(dumps_dataset(ds, config_hash))


def load_dataset(path):
    with open(path, encoding="ascii") as f:
        return loads_dataset(f.read())


# -- models ----------------------------------------------------------------


def model_seed(cfg, entry):
    return (cfg.seed, entry.seed)


def train_models(cfg, dataset):
    """Train every non-ensemble model in ``cfg``; returns ``{id: TrainResult}``."""
    results = {}
    for mid, entry in cfg.models.items():
        if entry.kind == "ensemble":
            continue
        results[mid] = train(
            dataset.train_x,
            dataset.train_y,
            ModelSpec(entry.kind, entry.hidden),
            seed=model_seed(cfg, entry),
            epochs=entry.epochs,
            learning_rate=entry.lr,
            classes=dataset.classes,
            model_id=mid,
        )
    return results


def assemble_models(cfg, trained):
    """``{id: model}`` with ensembles built from their trained members."""
    models = dict(trained)
    for mid, entry in cfg.models.items():
        if entry.kind == "ensemble":
            models[mid] = EnsembleModel(tuple(trained[m] for m in entry.members))
    return models


def accuracy(model, xs, ys):
    return float((model.predict_batch(xs) == ys).mean())


# -- attacks ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExampleResult:
    index: int
    label: int
    target: int
    x_clean: np.ndarray
    trace: AttackTrace

    @property
    def x_adv(self):
        return self.trace.x_adv


@dataclass(eq=False)
class AttackRun:
    """Outputs of one attack over a test split, in example order."""

    attack: AttackConfig
    examples: list
    wall_ms: float = 0.0

    @property
    def oracle_calls(self):
        return sum(e.trace.total_calls for e in self.examples)

    @property
    def indices(self):
        return np.array([e.index for e in self.examples], dtype=np.intp)

    def adversarial(self):
        if not self.examples:
            return np.zeros((0, 0))
        return np.array([e.x_adv for e in self.examples])


def draw_targets(labels, classes, seed):
    """Uniform target labels excluding the true one, one per example."""
    rng = np.random.default_rng([*np.atleast_1d(seed).tolist(), 7])
    return (np.asarray(labels) + rng.integers(1, classes, size=len(labels))) % classes


def attack_example(attack, oracle, x_clean, mode, seed, pool=None):
    """Run one configured attack on one example and return its trace."""
    x_clean = np.ascontiguousarray(x_clean, dtype=np.float64)
    state = init_state(attack.inner, x_clean.shape[0], seed=seed, pool=pool)
    if attack.iterations == 0:
        trace = AttackTrace(x_clean, attack.budget.alpha)
        trace.final_state = state
        return trace
    if attack.lff is None:
        return rollout(state, oracle, x_clean, x_clean, attack.budget, attack.iterations, mode)
    lff = replace(attack.lff, iterations=attack.iterations)
    loop = lff_outer_loop if lff.order == 1 else lffn_outer_loop
    return loop(state, oracle, x_clean, attack.budget, lff, mode)


def _attack_chunk(payload):
    attack, oracle, test_x, test_y, targets, seed, indices, backend = payload
    _backend.set_backend(backend)
    out = []
    for i in indices:
        if attack.targeted:
            mode = LossMode.targeted_to(targets[i])
        else:
            mode = LossMode.untargeted(test_y[i])
        pool = np.delete(test_x, i, axis=0) if attack.inner.kind == "admix" else None
        trace = attack_example(attack, oracle, test_x[i], mode, (*seed, int(i)), pool)
        out.append(ExampleResult(int(i), int(test_y[i]), int(targets[i]), test_x[i], trace))
    return out


def eligible(attack, surrogate, test_x, test_y, targets):
    """Examples the attack runs on: surrogate-correct, or not already the target."""
    pred = surrogate.predict_batch(test_x)
    mask = pred != targets if attack.targeted else pred == test_y
    return np.flatnonzero(mask)


def _chunks(indices, parts):
    parts = max(1, min(parts, len(indices)))
    return [c.tolist() for c in np.array_split(indices, parts)]


def run_attack(attack, surrogate, test_x, test_y, seed=(0, 0), jobs=1, targets=None,
               indices=None):
    """Attack every eligible test example; results come back in index order.

    ``seed`` is the attack seed tuple; example ``i`` runs with ``(*seed, i)``.
    ``targets`` defaults to :func:`draw_targets` under the same seed.
    """
    test_x = np.asarray(test_x, dtype=np.float64)
    test_y = np.asarray(test_y, dtype=np.intp)
    if test_x.shape[1] != surrogate.input_dim:
        raise ConfigError("surrogate input dimension does not match the data")
    if test_y.max() >= surrogate.classes:
        raise ConfigError("test labels exceed the surrogate's class count")
    seed = tuple(int(s) for s in np.atleast_1d(seed))
    if targets is None:
        targets = draw_targets(test_y, surrogate.classes, seed)
    if indices is None:
        indices = eligible(attack, surrogate, test_x, test_y, targets)
    backend = _backend.current()
    start = time.perf_counter()
    if jobs <= 1 or len(indices) < 2:
        examples = _attack_chunk((attack, surrogate, test_x, test_y, targets, seed,
                                  list(indices), backend))
    else:
        # several chunks per worker for load balance; map() preserves chunk order
        payloads = [(attack, surrogate, test_x, test_y, targets, seed, c, backend)
                    for c in _chunks(np.asarray(indices), 4 * jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            examples = [e for chunk in pool.map(_attack_chunk, payloads) for e in chunk]
    examples.sort(key=lambda e: e.index)
    return AttackRun(attack, examples, 1000.0 * (time.perf_counter() - start))


def check_budget(run, slack=1e-12):
    """Raise :class:`InvariantViolation` unless every output is in the ball and the box."""
    for e in run.examples:
        if not within_budget(e.x_adv, e.x_clean, run.attack.budget, slack):
            dev = float(np.abs(e.x_adv - e.x_clean).max())
            b = run.attack.budget
            invariant = "budget" if dev > b.epsilon + slack else "box"
            raise InvariantViolation(invariant, f"attack {run.attack.name}, example {e.index}")


def check_determinism(run, surrogate, test_x, test_y, seed, count=3):
    """Re-run the first ``count`` examples serially and compare trajectory hashes."""
    picked = [e.index for e in run.examples[:count]]
    if not picked:
        return
    again = run_attack(run.attack, surrogate, test_x, test_y, seed, jobs=1, indices=picked)
    for a, b in zip(run.examples, again.examples):
        if a.trace.digest() != b.trace.digest():
            raise InvariantViolation(
                "determinism", f"attack {run.attack.name}, example {a.index}"
            )


# -- reporting -------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    surrogate: str
    victim: str
    attack: str
    clean_acc: float
    asr: float
    inc: float = None
    oracle_calls: int = 0
    wall_ms: float = None

    def csv(self):
        def num(v):
            return "" if v is None else repr(float(v))

        return ",".join([self.surrogate, self.victim, self.attack, num(self.clean_acc),
                         num(self.asr), num(self.inc), str(self.oracle_calls),
                         "" if self.wall_ms is None else f"{self.wall_ms:.1f}"])


@dataclass
class TransferReport:
    rows: list = field(default_factory=list)
    config_hash: str = None

    def row(self, victim, attack):
        for r in self.rows:
            if r.victim == victim and r.attack == attack:
                return r
        raise KeyError((victim, attack))

    def attacks(self):
        return list(dict.fromkeys(r.attack for r in self.rows))

    def mean_victim_asr(self, attack):
        """Mean ASR over the transfer rows (the surrogate's own row excluded)."""
        vals = [r.asr for r in self.rows if r.attack == attack and r.victim != r.surrogate]
        return float(np.mean(vals)) if vals else float("nan")

    def to_csv(self):
        return _header(self.config_hash) + CSV_HEADER + "\n" + "".join(
            r.csv() + "\n" for r in self.rows
        )


def success_rate(victim, run, test_x, test_y):
    """ASR over attacked examples that ``victim`` classifies correctly when clean."""
    if not run.examples:
        return 0.0
    idx = run.indices
    clean_ok = victim.predict_batch(test_x[idx]) == test_y[idx]
    if not clean_ok.any():
        return 0.0
    adv_pred = victim.predict_batch(run.adversarial())
    if run.attack.targeted:
        hit = adv_pred == np.array([e.target for e in run.examples])
    else:
        hit = adv_pred != test_y[idx]
    return float(np.count_nonzero(hit & clean_ok)) / float(np.count_nonzero(clean_ok))


def evaluate(runs, models, surrogate_id, victims, test_x, test_y, config_hash=None,
             wall_time=False):
    """One row per (attack, model); the surrogate's own row comes first.

    ``runs`` is an ordered ``{attack name: AttackRun}``. An attack whose
    config names a ``baseline`` gets ``inc = asr - asr(baseline)`` per victim.
    """
    order = [surrogate_id, *victims]
    clean = {m: accuracy(models[m], test_x, test_y) for m in order}
    asr = {}
    for name, run in runs.items():
        for m in order:
            asr[name, m] = success_rate(models[m], run, test_x, test_y)
    rows = []
    for name, run in runs.items():
        base = run.attack.baseline
        if base is not None and base not in runs:
            raise ConfigError(f"attack {name!r}: baseline run {base!r} is missing")
        for m in order:
            inc = None if base is None else asr[name, m] - asr[base, m]
            rows.append(ReportRow(surrogate_id, m, name, clean[m], asr[name, m], inc,
                                  run.oracle_calls, run.wall_ms if wall_time else None))
    return TransferReport(rows, config_hash)


# -- experiments -----------------------------------------------------------


def attack_seed(cfg):
    return (cfg.seed, cfg.attack_seed)


def run_experiment(cfg, dataset, models, jobs=1, attacks=None, cache=None):
    """Run ``attacks`` (default: all in ``cfg``) and evaluate them.

    ``cache`` maps attack names to finished runs that are reused as is.
    Returns ``(TransferReport, {name: AttackRun})``.
    """
    ds = dataset.limited(cfg.test_limit)
    surrogate = models[cfg.surrogate]
    runs = {}
    for attack in attacks if attacks is not None else cfg.attacks:
        if cache is not None and attack.name in cache:
            runs[attack.name] = cache[attack.name]
            continue
        runs[attack.name] = run_attack(attack, surrogate, ds.test_x, ds.test_y,
                                       attack_seed(cfg), jobs)
    report = evaluate(runs, models, cfg.surrogate, cfg.victims, ds.test_x, ds.test_y,
                      cfg.hash, cfg.wall_time)
    return report, runs


AXES = ("Q", "beta")


def sweep_values(axis, values):
    """Validate and sort sweep values; duplicates and bad values raise :class:`ConfigError`."""
    if axis not in AXES:
        raise ConfigError(f"sweep axis must be one of {AXES}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    parsed = []
    for v in values:
        try:
            f = float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"sweep value {v!r} is not numeric") from None
        if not math.isfinite(f) or f <= 0:
            raise ConfigError(f"sweep value {v!r} must be finite and > 0")
        if axis == "Q":
            if f != int(f):
                raise ConfigError(f"Q value {v!r} is not an integer")
            f = int(f)
        parsed.append(f)
    if len(set(parsed)) != len(parsed):
        raise ConfigError("sweep values contain duplicates")
    return sorted(parsed)


def _with_axis(attack, axis, value):
    if attack.lff is None:
        return attack
    lff = replace(attack.lff, q=value) if axis == "Q" else replace(attack.lff, beta=value)
    return replace(attack, lff=lff)


@dataclass
class SweepResult:
    axis: str
    values: list
    reports: list

    def summary_rows(self):
        """``(value, attack, mean victim ASR, surrogate ASR)`` sorted by value."""
        out = []
        for v, rep in zip(self.values, self.reports):
            for a in rep.attacks():
                sur = next(r.asr for r in rep.rows if r.attack == a and r.victim == r.surrogate)
                out.append((v, a, rep.mean_victim_asr(a), sur))
        return out

    def summary_csv(self, config_hash=None):
        lines = ["axis,value,attack,mean_victim_asr,surrogate_asr"]
        for v, a, mean, sur in self.summary_rows():
            lines.append(f"{self.axis},{v!r},{a},{mean!r},{sur!r}")
        return _header(config_hash) + "\n".join(lines) + "\n"

    def maximizers(self, attack):
        """Every axis value whose mean victim ASR equals the maximum."""
        scores = [rep.mean_victim_asr(attack) for rep in self.reports]
        best = max(scores)
        return [v for v, s in zip(self.values, scores) if s == best]


def sweep(cfg, dataset, models, axis, values, jobs=1):
    """Re-run the experiment with ``axis`` set to each value on every LFF attack.

    Attacks without an LFF wrapper do not depend on the axis; they run once
    and are shared by every value.
    """
    values = sweep_values(axis, values)
    fixed = {}
    reports = []
    for v in values:
        attacks = [_with_axis(a, axis, v) for a in cfg.attacks]
        report, runs = run_experiment(cfg, dataset, models, jobs, attacks, cache=fixed)
        for a in attacks:
            if a.lff is None:
                fixed[a.name] = runs[a.name]
        reports.append(report)
    return SweepResult(axis, values, reports)
