"""Differentiable loss oracles: softmax classifiers, their ensembles, and
synthetic benchmark landscapes.

Every oracle exposes ``loss_and_grad(x, mode) -> (value, gradient)`` where the
value is the objective the attack *ascends*: cross-entropy against the true
label for untargeted mode, negated cross-entropy against the target label for
targeted mode. The gradient is always the exact gradient of that value.
"""

import io
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ConfigError, DivergenceError, NonFiniteError
from .numeric import as_vector

FORMAT_VERSION = 1


@dataclass(frozen=True)
class LossMode:
    """Which label the loss refers to and whether the attack is targeted."""

    label: int
    targeted: bool = False

    @classmethod
    def untargeted(cls, y_true):
        return cls(int(y_true), False)

    @classmethod
    def targeted_to(cls, y_target):
        return cls(int(y_target), True)


def _frozen(a, shape=None):
    arr = np.array(a, dtype=np.float64, order="C")
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteError("model parameter contains NaN or Inf")
    arr.setflags(write=False)
    return arr


def _check_input(model, x, mode):
    x = as_vector(x)
    if x.shape[0] != model.input_dim:
        raise ValueError(f"input has length {x.shape[0]}, model expects {model.input_dim}")
    if not _backend.kernels.all_finite(x):
        raise NonFiniteError("oracle input contains NaN or Inf")
    if mode is not None and not 0 <= mode.label < model.classes:
        raise ValueError(f"label {mode.label} out of range for {model.classes} classes")
    return x


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def softmax(z):
    return np.exp(log_softmax(z))


class _Classifier:
    """Shared prediction helpers; subclasses provide ``logits_batch``."""

    def logits(self, x):
        return self.logits_batch(as_vector(x)[None, :])[0]

    def probabilities(self, x):
        return softmax(self.logits(x))

    def predict(self, x):
        # np.argmax returns the first maximum: ties go to the lowest index
        return int(np.argmax(self.logits(x)))

    def predict_batch(self, X):
        return np.argmax(self.logits_batch(np.atleast_2d(X)), axis=1)


@dataclass(frozen=True, eq=False)
class LinearSoftmaxModel(_Classifier):
    weights: np.ndarray
    biases: np.ndarray

    kind = "linear"

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 2 or w.shape[0] < 2 or w.shape[1] < 1:
            raise ValueError(f"weights must be K x N with K >= 2, got {w.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", _frozen(self.biases, (w.shape[0],)))

    @property
    def input_dim(self):
        return self.weights.shape[1]

    @property
    def classes(self):
        return self.weights.shape[0]

    def logits_batch(self, X):
        return X @ self.weights.T + self.biases

    def loss_and_grad(self, x, mode):
        x = _check_input(self, x, mode)
        return _backend.kernels.linear_loss_grad(
            self.weights, self.biases, x, mode.label, mode.targeted
        )


@dataclass(frozen=True, eq=False)
class MlpModel(_Classifier):
    """One hidden tanh layer followed by a linear softmax head."""

    hidden_weights: np.ndarray
    hidden_biases: np.ndarray
    output_weights: np.ndarray
    output_biases: np.ndarray

    kind = "mlp"

    def __post_init__(self):
        w1 = _frozen(self.hidden_weights)
        w2 = _frozen(self.output_weights)
        if w1.ndim != 2 or w2.ndim != 2 or w2.shape[1] != w1.shape[0]:
            raise ValueError("inconsistent MLP weight shapes")
        if w2.shape[0] < 2 or w1.shape[0] < 1:
            raise ValueError("MLP needs K >= 2 classes and H >= 1 hidden units")
        object.__setattr__(self, "hidden_weights", w1)
        object.__setattr__(self, "output_weights", w2)
        object.__setattr__(self, "hidden_biases", _frozen(self.hidden_biases, (w1.shape[0],)))
        object.__setattr__(self, "output_biases", _frozen(self.output_biases, (w2.shape[0],)))

    @property
    def input_dim(self):
        return self.hidden_weights.shape[1]

    @property
    def hidden_dim(self):
        return self.hidden_weights.shape[0]

    @property
    def classes(self):
        return self.output_weights.shape[0]

    def logits_batch(self, X):
        a = np.tanh(X @ self.hidden_weights.T + self.hidden_biases)
        return a @ self.output_weights.T + self.output_biases

    def loss_and_grad(self, x, mode):
        x = _check_input(self, x, mode)
        return _backend.kernels.mlp_loss_grad(
            self.hidden_weights,
            self.hidden_biases,
            self.output_weights,
            self.output_biases,
            x,
            mode.label,
            mode.targeted,
        )


@dataclass(frozen=True, eq=False)
class EnsembleModel(_Classifier):
    """Loss-averaging ensemble; its gradient is the mean of member gradients."""

    members: tuple

    kind = "ensemble"

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("ensemble needs at least one member")
        dims = {(m.input_dim, m.classes) for m in members}
        if len(dims) != 1:
            raise ValueError(f"ensemble members disagree on (N, K): {sorted(dims)}")
        object.__setattr__(self, "members", members)

    @property
    def input_dim(self):
        return self.members[0].input_dim

    @property
    def classes(self):
        return self.members[0].classes

    def logits_batch(self, X):
        # mean log-probability: the prediction whose cross-entropy is the mean member loss
        return sum(log_softmax(m.logits_batch(X)) for m in self.members) / len(self.members)

    def loss_and_grad(self, x, mode):
        x = _check_input(self, x, mode)
        total, grad = 0.0, np.zeros(self.input_dim)
        for m in self.members:
            value, g = m.loss_and_grad(x, mode)
            total += value
            grad += g
        n = len(self.members)
        return total / n, grad / n


def predict(model, x):
    return model.predict(x)


def loss_and_grad(oracle, x, mode):
    return oracle.loss_and_grad(x, mode)


# -- benchmark landscapes --------------------------------------------------


def _linear_weights(n):
    i = np.arange(n)
    return np.where(i % 2 == 0, 1.0, -1.0) * (1.0 + (i % 3))


def _quadratic(x):
    return 0.5 * float(np.dot(x, x)), x.copy()


def _linear(x):
    w = _linear_weights(x.shape[0])
    return float(np.dot(w, x)), w


def _multibasin(x):
    # separable sinusoidal ridges on a weak quadratic bowl: one local basin per period
    value = float(np.sin(3.0 * x).sum() + 0.05 * np.dot(x, x))
    return value, 3.0 * np.cos(3.0 * x) + 0.1 * x


_LANDSCAPES = {"quadratic": _quadratic, "linear": _linear, "multibasin": _multibasin}


@dataclass(frozen=True)
class Landscape:
    """A named synthetic objective; ``mode`` is accepted and ignored."""

    name: str

    def __post_init__(self):
        if self.name not in _LANDSCAPES:
            raise KeyError(f"unknown landscape {self.name!r}; have {sorted(_LANDSCAPES)}")

    def loss_and_grad(self, x, mode=None):
        x = as_vector(x)
        if not _backend.kernels.all_finite(x):
            raise NonFiniteError("landscape input contains NaN or Inf")
        return _LANDSCAPES[self.name](x)


def landscape_names():
    return sorted(_LANDSCAPES)


def benchmark_landscape(name, x):
    return Landscape(name).loss_and_grad(x)


# -- training --------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    hidden: int = 32

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise ConfigError(f"unknown trainable model kind {self.kind!r}")
        if self.kind == "mlp" and self.hidden < 1:
            raise ConfigError("mlp hidden width must be >= 1")


@dataclass
class TrainResult:
    model: object
    accuracy: float
    losses: list = field(default_factory=list)


def init_params(spec, n_in, n_classes, seed):
    rng = np.random.default_rng(seed)
    if spec.kind == "linear":
        return [rng.normal(0.0, 0.1, (n_classes, n_in)), np.zeros(n_classes)]
    return [
        rng.normal(0.0, 1.0 / np.sqrt(n_in), (spec.hidden, n_in)),
        rng.normal(0.0, 0.1, spec.hidden),
        rng.normal(0.0, 1.0 / np.sqrt(spec.hidden), (n_classes, spec.hidden)),
        np.zeros(n_classes),
    ]


def _build(kind, params):
    if kind == "linear":
        return LinearSoftmaxModel(*params)
    return MlpModel(*params)


def _batch_loss_grads(kind, params, X, Y):
    """Mean cross-entropy over the batch and its gradients w.r.t. ``params``."""
    n = X.shape[0]
    if kind == "linear":
        W, b = params
        z = X @ W.T + b
    else:
        W1, b1, W2, b2 = params
        a = np.tanh(X @ W1.T + b1)
        z = a @ W2.T + b2
    logp = log_softmax(z)
    loss = -logp[np.arange(n), Y].mean()
    dz = np.exp(logp)
    dz[np.arange(n), Y] -= 1.0
    dz /= n
    if kind == "linear":
        return loss, [dz.T @ X, dz.sum(axis=0)]
    da = (dz @ W2) * (1.0 - a * a)
    return loss, [da.T @ X, da.sum(axis=0), dz.T @ a, dz.sum(axis=0)]


def train(points, labels, spec, seed, epochs=300, learning_rate=0.5, classes=None,
          momentum=0.9, model_id=None):
    """Full-batch heavy-ball gradient descent on mean cross-entropy.

    Deterministic in ``seed``. ``epochs=0`` returns the seeded initialization.
    Raises :class:`DivergenceError` naming the epoch if the loss goes non-finite.
    """
    X = np.asarray(points, dtype=np.float64)
    Y = np.asarray(labels, dtype=np.intp)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != Y.shape[0]:
        raise ValueError("training set must be a nonempty (n, N) array with n labels")
    k = int(classes if classes is not None else Y.max() + 1)
    if Y.min() < 0 or Y.max() >= k:
        raise ValueError("labels out of range")
    params = init_params(spec, X.shape[1], k, seed)
    velocity = [np.zeros_like(p) for p in params]
    losses = []
    # overflow is detected explicitly below, so numpy's warnings are noise here
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            loss, grads = _batch_loss_grads(spec.kind, params, X, Y)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, model_id)
            losses.append(float(loss))
            for p, v, g in zip(params, velocity, grads):
                v *= momentum
                v -= learning_rate * g
                p += v
            if not all(np.isfinite(p).all() for p in params):
                raise DivergenceError(epoch, model_id)
    model = _build(spec.kind, params)
    accuracy = float((model.predict_batch(X) == Y).mean())
    return TrainResult(model, accuracy, losses)


# -- persistence -----------------------------------------------------------

_FIELDS = {
    "linear": ("weights", "biases"),
    "mlp": ("hidden_weights", "hidden_biases", "output_weights", "output_biases"),
}


def _write_array(out, name, arr):
    out.write(f"{name} {' '.join(str(d) for d in arr.shape)}\n")
    rows = arr.reshape(1, -1) if arr.ndim == 1 else arr
    for row in rows:
        out.write(" ".join(repr(float(v)) for v in row) + "\n")


def dumps_model(model, config_hash=None):
    """Serialize a linear or MLP model to the versioned text format.

    Floats are written with ``repr`` (shortest round-trip form), so loading
    reproduces every parameter bit for bit. ``config_hash`` adds a leading
    comment line.
    """
    if model.kind not in _FIELDS:
        raise TypeError(f"cannot serialize model kind {model.kind!r}")
    out = io.StringIO()
    if config_hash:
        out.write(f"# config_sha256={config_hash}\n")
    out.write(f"lffattack-model {FORMAT_VERSION}\n")
    out.write(f"kind {model.kind}\n")
    out.write(f"input_dim {model.input_dim}\nclasses {model.classes}\n")
    if model.kind == "mlp":
        out.write(f"hidden_dim {model.hidden_dim}\n")
    for name in _FIELDS[model.kind]:
        _write_array(out, name, getattr(model, name))
    out.write("end\n")
    return out.getvalue()


def loads_model(text):
    lines = iter(ln for ln in text.splitlines() if not ln.startswith("#"))
    head = next(lines, "").split()
    if len(head) != 2 or head[0] != "lffattack-model":
        raise ValueError("not an lffattack model file")
    if int(head[1]) != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {head[1]}")
    meta = {}
    arrays = {}
    for line in lines:
        parts = line.split()
        if not parts:
            continue
        key = parts[0]
        if key == "end":
            break
        if key in ("kind",):
            meta[key] = parts[1]
        elif key in ("input_dim", "classes", "hidden_dim"):
            meta[key] = int(parts[1])
        else:
            shape = tuple(int(d) for d in parts[1:])
            n_rows = 1 if len(shape) == 1 else shape[0]
            values = [float(v) for _ in range(n_rows) for v in next(lines).split()]
            arrays[key] = np.array(values, dtype=np.float64).reshape(shape)
    kind = meta.get("kind")
    if kind not in _FIELDS:
        raise ValueError(f"unknown model kind {kind!r}")
    missing = [f for f in _FIELDS[kind] if f not in arrays]
    if missing:
        raise ValueError(f"model file missing fields {missing}")
    model = _build(kind, [arrays[f] for f in _FIELDS[kind]])
    if model.input_dim != meta.get("input_dim") or model.classes != meta.get("classes"):
        raise ValueError("declared dimensions do not match stored arrays")
    return model


def save_model(model, path, config_hash=None):
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(dumps_model(model, config_hash))


def load_model(path):
    with open(path, encoding="ascii") as f:
        return loads_model(f.read())
