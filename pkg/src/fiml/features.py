"""Locally non-dimensional input features for the learned production multiplier."""
import warnings
from dataclasses import dataclass

import numpy as np

from .channel import CaseConfig, FlowState, Grid1D, wall_shear_stress
from .closure import fv1, fv2, fw
from .errors import ConfigurationError, DegenerateStateError

FEATURE_NAMES = ("chi", "omega_bar", "s_over_omega", "tau_ratio", "p_over_d")
DEFAULT_FEATURES = ("chi", "omega_bar", "p_over_d", "tau_ratio")
EPS = 1e-30
CAP = 1e4


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Per-node features; ``columns[name]`` has one entry per grid node."""

    columns: dict
    active: tuple = DEFAULT_FEATURES

    def __post_init__(self):
        unknown = [a for a in self.active if a not in self.columns]
        if unknown:
            raise ConfigurationError(f"unknown features in mask: {unknown}")

    def __getitem__(self, name) -> np.ndarray:
        return self.columns[name]

    @property
    def n(self) -> int:
        return next(iter(self.columns.values())).size

    def matrix(self, names=None) -> np.ndarray:
        names = self.active if names is None else names
        return np.column_stack([self.columns[k] for k in names])

    def with_active(self, names) -> "FeatureTable":
        return FeatureTable(self.columns, tuple(names))


def extract(state: FlowState, grid: Grid1D, cfg: CaseConfig, active=DEFAULT_FEATURES, cap=CAP,
            eps=EPS) -> FeatureTable:
    """Features at every node of ``state``.  Pure and deterministic."""
    u = np.asarray(state.u, dtype=float)
    nt = np.asarray(state.nu_tilde, dtype=float)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(nt))):
        raise DegenerateStateError("state is not finite")
    tw = wall_shear_stress(state, grid, cfg)
    if not tw > 0:
        raise DegenerateStateError(f"wall shear stress {tw:.3e} is not positive")
    c = cfg.sa
    nu = cfg.viscosity
    nt = np.maximum(nt, 0.0)
    d = grid.d
    dudy = grid.ddy(u)
    omega = np.abs(dudy)

    chi = nt / nu
    ratio = chi / (chi + 1.0)
    omega_bar = d**2 * omega / np.maximum(nt + nu, eps)
    p_bar = c.cb1 * ratio * omega_bar

    # r is already dimensionless; evaluate it with guarded denominators
    kd2 = c.kappa**2 * d**2
    om_t = np.maximum(omega + nt * fv2(chi, c) / np.maximum(kd2, eps), c.omega_clip * omega)
    r = np.clip(nt / np.maximum(om_t * kd2, eps), 0.0, c.r_clip)
    d_bar = ratio**2 * c.cw1 * fw(r, c)
    p_over_d = np.where(p_bar > 0, p_bar / np.maximum(d_bar, eps), 0.0)

    nut = nt * fv1(chi, c)
    tau_ratio = nut * omega / tw

    cols = dict(
        chi=chi,
        omega_bar=omega_bar,
        s_over_omega=np.ones_like(chi),  # strain equals vorticity in parallel shear
        tau_ratio=tau_ratio,
        p_over_d=p_over_d,
    )
    cols = {k: np.minimum(v, cap) for k, v in cols.items()}
    return FeatureTable(cols, tuple(active))


@dataclass(frozen=True, eq=False)
class MinMaxScaler:
    names: tuple
    lo: np.ndarray
    hi: np.ndarray
    dropped: tuple = ()

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != (len(self.names),) or hi.shape != lo.shape:
            raise ConfigurationError("scaler bounds do not match its feature names")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def to_dict(self) -> dict:
        return dict(names=list(self.names), lo=self.lo.tolist(), hi=self.hi.tolist(), dropped=list(self.dropped))

    @classmethod
    def from_dict(cls, d) -> "MinMaxScaler":
        return cls(tuple(d["names"]), np.array(d["lo"], dtype=float), np.array(d["hi"], dtype=float),
                   tuple(d.get("dropped", ())))


def fit_scaler(samples, names) -> MinMaxScaler:
    """Min-max bounds per column; constant columns are dropped with a warning."""
    X = np.asarray(samples, dtype=float)
    names = tuple(names)
    if X.ndim != 2 or X.shape[1] != len(names):
        raise ConfigurationError("samples must be (m, len(names))")
    if X.shape[0] < 2:
        raise ConfigurationError("need at least two samples to fit a scaler")
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    keep = hi > lo
    dropped = tuple(n for n, k in zip(names, keep) if not k)
    if dropped:
        warnings.warn(f"constant features dropped from the active mask: {', '.join(dropped)}", stacklevel=2)
    if not np.any(keep):
        raise ConfigurationError("every feature is constant over the samples")
    kept = tuple(n for n, k in zip(names, keep) if k)
    return MinMaxScaler(kept, lo[keep], hi[keep], dropped)


def apply_scaler(scaler: MinMaxScaler, eta, names=None) -> np.ndarray:
    """Scale ``eta`` to the fitted unit range.

    If ``names`` labels the columns of ``eta`` the scaler's columns are
    selected from it; otherwise ``eta`` must already match ``scaler.names``.
    """
    X = np.asarray(eta, dtype=float)
    if names is not None:
        idx = [list(names).index(k) for k in scaler.names]
        X = X[..., idx]
    if X.shape[-1] != len(scaler.names):
        raise ConfigurationError(f"expected {len(scaler.names)} features, got {X.shape[-1]}")
    return (X - scaler.lo) / (scaler.hi - scaler.lo)
