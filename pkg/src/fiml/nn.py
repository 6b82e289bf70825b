"""Feed-forward network for beta(eta), trained by backpropagation on SSE.

Layers compute ``z_l = a_l(z_{l-1} @ W_l + b_l)`` with ``W_l`` of shape
``(n_in, n_out)``; hidden activations are logistic sigmoids and the output is
linear.
"""
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ConvergenceError, ParseError
from .features import MinMaxScaler, apply_scaler

SCHEMA = "fiml-mlp"
SCHEMA_VERSION = 1
ACTIVATIONS = ("sigmoid", "linear")


def sigmoid(x):
    # split on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(eq=False)
class MlpNetwork:
    weights: list
    biases: list
    activations: list
    features: tuple = ()
    scaler: Optional[MinMaxScaler] = None
    metadata: dict = field(default_factory=dict)
    clip_inputs: bool = True  # hold scaled inputs inside the training box

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        self.activations = list(self.activations)
        self.features = tuple(self.features)
        if not self.weights:
            raise ConfigurationError("network needs at least one layer")
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ConfigurationError("weights, biases and activations differ in length")
        for i, (w, b, a) in enumerate(zip(self.weights, self.biases, self.activations)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ConfigurationError(f"layer {i}: weight {w.shape} and bias {b.shape} are inconsistent")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ConfigurationError(f"layer {i} input size does not match layer {i - 1} output")
            if a not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {a!r}")
        if self.weights[-1].shape[1] != 1:
            raise ConfigurationError("output layer must have one node")
        if self.scaler is not None and tuple(self.scaler.names) != self.features:
            raise ConfigurationError("scaler features do not match the network inputs")
        if self.features and len(self.features) != self.n_inputs:
            raise ConfigurationError("feature names do not match the input size")

    @property
    def layer_sizes(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpNetwork":
        return MlpNetwork([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                          list(self.activations), self.features, self.scaler, dict(self.metadata),
                          self.clip_inputs)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_inputs:
            raise ConfigurationError(f"network expects {self.n_inputs} inputs, got {x.shape[-1]}")
        return x

    def forward_scaled(self, x) -> np.ndarray:
        """Evaluate on already-scaled inputs, shape ``(k,)`` or ``(m, k)``."""
        x = self._check(x)
        z = np.atleast_2d(x)
        for w, b, a in zip(self.weights, self.biases, self.activations):
            z = z @ w + b
            if a == "sigmoid":
                z = sigmoid(z)
        out = z[:, 0]
        return out[0] if x.ndim == 1 else out

    def forward(self, eta) -> np.ndarray:
        """Evaluate on raw features, applying the embedded scaler if any."""
        eta = self._check(eta)
        if self.scaler is not None:
            eta = apply_scaler(self.scaler, eta)
            if self.clip_inputs:
                eta = np.clip(eta, 0.0, 1.0)
        return self.forward_scaled(eta)

    def predict_table(self, table) -> np.ndarray:
        return np.asarray(self.forward(table.matrix(self.features)))

    # -- training internals

    def _activations(self, X):
        zs = [X]
        z = X
        for w, b, a in zip(self.weights, self.biases, self.activations):
            z = z @ w + b
            if a == "sigmoid":
                z = sigmoid(z)
            zs.append(z)
        return zs

    def sse_and_grad(self, X, y):
        """SSE ``sum (yhat - y)**2`` and its gradients w.r.t. weights and biases."""
        zs = self._activations(X)
        err = zs[-1][:, 0] - y
        sse = float(err @ err)
        delta = 2.0 * err[:, None]
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        for l in range(len(self.weights) - 1, -1, -1):
            if self.activations[l] == "sigmoid":
                delta = delta * zs[l + 1] * (1.0 - zs[l + 1])
            gw[l] = zs[l].T @ delta
            gb[l] = delta.sum(axis=0)
            if l:
                delta = delta @ self.weights[l].T
        return sse, gw, gb

    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def init_network(sizes, seed=0, hidden="sigmoid", features=(), scaler=None) -> MlpNetwork:
    """Uniform ``+-1/sqrt(fan_in)`` initialisation from a seeded generator."""
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes) or sizes[-1] != 1:
        raise ConfigurationError(f"invalid layer sizes {sizes}")
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / math.sqrt(n_in)
        ws.append(rng.uniform(-lim, lim, size=(n_in, n_out)))
        bs.append(rng.uniform(-lim, lim, size=n_out))
    acts = [hidden] * (len(sizes) - 2) + ["linear"]
    return MlpNetwork(ws, bs, acts, tuple(features), scaler)


def constant_network(value=1.0, features=("chi",)) -> MlpNetwork:
    """Network returning ``value`` for every input."""
    k = len(features)
    return MlpNetwork([np.zeros((k, 1))], [np.array([float(value)])], ["linear"], tuple(features),
                      metadata=dict(kind="constant", value=float(value)))


# ---------------------------------------------------------------------------
# training


@dataclass(eq=False)
class TrainingSet:
    X: np.ndarray
    y: np.ndarray
    names: tuple
    cases: np.ndarray
    validation: np.ndarray  # boolean mask

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.cases = np.asarray(self.cases).astype(str)
        self.validation = np.asarray(self.validation, dtype=bool)
        self.names = tuple(self.names)
        m = self.y.size
        if self.X.shape != (m, len(self.names)) or self.cases.shape != (m,) or self.validation.shape != (m,):
            raise ConfigurationError("training set arrays have inconsistent shapes")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ConfigurationError("training set contains non-finite values")
        if m and np.all(self.validation):
            raise ConfigurationError("training split is empty")
        frac = self.validation.mean() if m else 0.0
        if m and not 0.0 < frac <= 0.5:
            raise ConfigurationError(f"validation fraction {frac:.3f} is outside (0, 0.5]")

    @classmethod
    def from_samples(cls, X, y, names, cases=None, val_fraction=0.2, seed=0) -> "TrainingSet":
        y = np.asarray(y, dtype=float)
        m = y.size
        if m < 2:
            raise ConfigurationError("need at least two samples")
        if not 0.0 < val_fraction <= 0.5:
            raise ConfigurationError("val_fraction must lie in (0, 0.5]")
        n_val = max(1, int(round(val_fraction * m)))
        perm = np.random.default_rng(seed).permutation(m)
        val = np.zeros(m, dtype=bool)
        val[perm[:n_val]] = True
        cases = np.full(m, "case") if cases is None else cases
        return cls(X, y, names, cases, val)

    @property
    def train_X(self):
        return self.X[~self.validation]

    @property
    def train_y(self):
        return self.y[~self.validation]

    @property
    def val_X(self):
        return self.X[self.validation]

    @property
    def val_y(self):
        return self.y[self.validation]

    def subset(self, mask) -> "TrainingSet":
        mask = np.asarray(mask, dtype=bool)
        return TrainingSet(self.X[mask], self.y[mask], self.names, self.cases[mask], self.validation[mask])

    def select_features(self, names) -> "TrainingSet":
        idx = [self.names.index(k) for k in names]
        return TrainingSet(self.X[:, idx], self.y, names, self.cases, self.validation)


@dataclass
class TrainConfig:
    hidden: tuple = (100, 100, 100)
    algorithm: str = "irprop-"
    max_epochs: int = 5000
    patience: int = 500
    seed: int = 0
    # iRPROP-
    delta0: float = 0.01
    delta_min: float = 1e-6
    delta_max: float = 1.0
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    # SGD with momentum
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: Optional[int] = None  # None: full batch

    def __post_init__(self):
        if self.algorithm not in ("irprop-", "sgd"):
            raise ConfigurationError(f"unknown training algorithm {self.algorithm!r}")
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigurationError("max_epochs and patience must be positive")


@dataclass
class TrainResult:
    network: MlpNetwork
    history: list  # per epoch: (epoch, train SSE, validation SSE)
    best_epoch: int

    @property
    def best_val_sse(self) -> float:
        return self.history[self.best_epoch][2]


def _batches(m, size, rng):
    if size is None or size >= m:
        yield np.arange(m)
        return
    perm = rng.permutation(m)
    for s in range(0, m, size):
        yield perm[s:s + size]


def train(ts: TrainingSet, config: TrainConfig = None) -> TrainResult:
    """Fit a network; returns the snapshot with minimum validation SSE."""
    from .features import fit_scaler  # local to keep module import light

    cfg = config or TrainConfig()
    Xtr = ts.train_X
    if Xtr.shape[0] == 0:
        raise ConfigurationError("training split is empty")
    scaler = fit_scaler(Xtr, ts.names)
    names = scaler.names
    if names != ts.names:
        ts = ts.select_features(names)
        Xtr = ts.train_X
    Str = apply_scaler(scaler, Xtr)
    ytr = ts.train_y
    Sval = apply_scaler(scaler, ts.val_X)
    yval = ts.val_y

    net = init_network([len(names), *cfg.hidden, 1], seed=cfg.seed, features=names, scaler=scaler)
    params = net.params()
    rng = np.random.default_rng(cfg.seed + 1)
    if cfg.algorithm == "irprop-":
        steps = [np.full(p.shape, cfg.delta0) for p in params]
        prev = [np.zeros(p.shape) for p in params]
    else:
        vel = [np.zeros(p.shape) for p in params]

    def val_sse():
        if yval.size == 0:
            return float("nan")
        e = net.forward_scaled(Sval) - yval
        return float(e @ e)

    history = []
    best = (math.inf, -1, None)
    for epoch in range(cfg.max_epochs):
        train_sse = 0.0
        for idx in _batches(ytr.size, cfg.batch_size, rng):
            sse, gw, gb = net.sse_and_grad(Str[idx], ytr[idx])
            train_sse += sse
            grads = []
            for a, b in zip(gw, gb):
                grads += [a, b]
            if cfg.algorithm == "irprop-":
                for p, g, st, pg in zip(params, grads, steps, prev):
                    s = g * pg
                    st[s > 0] = np.minimum(st[s > 0] * cfg.eta_plus, cfg.delta_max)
                    st[s < 0] = np.maximum(st[s < 0] * cfg.eta_minus, cfg.delta_min)
                    g = np.where(s < 0, 0.0, g)
                    p -= np.sign(g) * st
                    pg[...] = g
            else:
                scale = cfg.learning_rate / idx.size
                for p, g, v in zip(params, grads, vel):
                    v *= cfg.momentum
                    v -= scale * g
                    p += v
        vs = val_sse()
        if not (math.isfinite(train_sse) and (math.isfinite(vs) or yval.size == 0)):
            raise ConvergenceError(f"training loss diverged at epoch {epoch}", history)
        history.append((epoch, train_sse, vs))
        score = vs if yval.size else train_sse
        if score < best[0]:
            best = (score, epoch, [p.copy() for p in params])
        elif epoch - best[1] >= cfg.patience:
            break
    _, best_epoch, snap = best
    for p, s in zip(params, snap):
        p[...] = s
    net.metadata = dict(
        seed=cfg.seed,
        algorithm=cfg.algorithm,
        epochs=len(history),
        best_epoch=best_epoch,
        final_sse=history[best_epoch][1],
        validation_sse=history[best_epoch][2],
        n_train=int(ytr.size),
        n_validation=int(yval.size),
    )
    return TrainResult(net, history, best_epoch)


def validation_rms(result_or_net, ts: TrainingSet) -> float:
    net = getattr(result_or_net, "network", result_or_net)
    Xv = ts.select_features(net.features).val_X if net.features != ts.names else ts.val_X
    e = net.forward(Xv) - ts.val_y
    return float(np.sqrt(np.mean(e**2)))


def backprop_gradcheck(net: MlpNetwork, X, y, step=1e-6) -> float:
    """Max discrepancy of analytic SSE gradients against central FD, relative to the largest gradient."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    work = net.copy()
    _, gw, gb = work.sse_and_grad(X, y)
    analytic = []
    for a, b in zip(gw, gb):
        analytic += [a, b]
    fd_all, an_all = [], []
    for p, g in zip(work.params(), analytic):
        flat = p.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            fp = work.sse_and_grad(X, y)[0]
            flat[k] = orig - step
            fm = work.sse_and_grad(X, y)[0]
            flat[k] = orig
            fd_all.append((fp - fm) / (2 * step))
        an_all.append(g.reshape(-1))
    fd = np.array(fd_all)
    an = np.concatenate(an_all)
    ref = np.max(np.abs(an))
    if ref == 0:
        return float(np.max(np.abs(fd)))
    return float(np.max(np.abs(fd - an)) / ref)


# ---------------------------------------------------------------------------
# persistence


def to_dict(net: MlpNetwork) -> dict:
    return dict(
        schema=SCHEMA,
        version=SCHEMA_VERSION,
        layer_sizes=net.layer_sizes,
        activations=net.activations,
        weights=[w.reshape(-1).tolist() for w in net.weights],
        biases=[b.tolist() for b in net.biases],
        features=list(net.features),
        scaler=None if net.scaler is None else net.scaler.to_dict(),
        clip_inputs=net.clip_inputs,
        metadata=net.metadata,
    )


def _need(d, key, where="network file"):
    if not isinstance(d, dict) or key not in d:
        raise ParseError(f"{where}: missing field {key!r}", field=key)
    return d[key]


def from_dict(d) -> MlpNetwork:
    if _need(d, "schema") != SCHEMA:
        raise ParseError(f"not a network file (schema {d.get('schema')!r})", field="schema")
    version = _need(d, "version")
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported network schema version {version} (expected {SCHEMA_VERSION})",
                         field="version")
    sizes = _need(d, "layer_sizes")
    acts = _need(d, "activations")
    weights = _need(d, "weights")
    biases = _need(d, "biases")
    feats = _need(d, "features")
    sc = _need(d, "scaler")
    meta = _need(d, "metadata")
    clip = bool(_need(d, "clip_inputs"))
    if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
        raise ParseError("layer count does not match layer_sizes", field="weights")
    ws = []
    for i, (w, n_in, n_out) in enumerate(zip(weights, sizes[:-1], sizes[1:])):
        if len(w) != n_in * n_out:
            raise ParseError(f"layer {i} has {len(w)} weights, expected {n_in * n_out}", field="weights")
        ws.append(np.array(w, dtype=float).reshape(n_in, n_out))
    try:
        scaler = None if sc is None else MinMaxScaler.from_dict(sc)
        return MlpNetwork(ws, [np.array(b, dtype=float) for b in biases], acts, tuple(feats), scaler, meta, clip)
    except (KeyError, ConfigurationError) as exc:
        raise ParseError(f"invalid network file: {exc}") from exc


def save(net: MlpNetwork, path) -> None:
    # json writes floats as shortest round-trip decimals, so the reload is bit-exact
    Path(path).write_text(json.dumps(to_dict(net), indent=1, allow_nan=False) + "\n")


def load(path) -> MlpNetwork:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}", line=exc.lineno) from exc
    return from_dict(d)
