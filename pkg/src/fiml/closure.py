"""Spalart-Allmaras closure functions and constants.

All functions accept scalars or numpy arrays and broadcast.  Trip terms are
not part of the model (``f_t2 = 0``).  The production multiplier ``beta`` is
applied by the caller, see :func:`source`.
"""
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError

__all__ = [
    "SAConstants",
    "fv1",
    "fv2",
    "dfv1",
    "dfv2",
    "omega_tilde",
    "fw",
    "dfw",
    "r_function",
    "production",
    "destruction",
    "eddy_viscosity",
    "source",
]


@dataclass(frozen=True)
class SAConstants:
    """Model constants.  ``cw1`` is derived, never stored."""

    cb1: float = 0.1355
    sigma: float = 2.0 / 3.0
    cb2: float = 0.622
    kappa: float = 0.41
    cw2: float = 0.622
    cw3: float = 2.0
    cv1: float = 7.1
    r_clip: float = 10.0
    omega_clip: float = 0.3

    def __post_init__(self):
        for name in ("cb1", "sigma", "cb2", "kappa", "cw2", "cw3", "cv1", "r_clip", "omega_clip"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"SA constant {name} must be positive and finite, got {value!r}")

    @property
    def cw1(self) -> float:
        return self.cb1 / self.kappa**2 + (1.0 + self.cb2) / self.sigma

    def with_overrides(self, **kwargs) -> "SAConstants":
        return replace(self, **kwargs)


DEFAULT = SAConstants()


def _nonneg(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must be finite and non-negative")
    return x


def _ret(x):
    return x.item() if np.ndim(x) == 0 else x


def fv1(chi, c: SAConstants = DEFAULT):
    chi = _nonneg(chi, "chi")
    chi3 = chi**3
    return _ret(chi3 / (chi3 + c.cv1**3))


def dfv1(chi, c: SAConstants = DEFAULT):
    """d fv1 / d chi."""
    chi = _nonneg(chi, "chi")
    den = chi**3 + c.cv1**3
    return _ret(3.0 * chi**2 * c.cv1**3 / den**2)


def fv2(chi, c: SAConstants = DEFAULT):
    chi = _nonneg(chi, "chi")
    return _ret(1.0 - chi / (1.0 + chi * np.asarray(fv1(chi, c))))


def dfv2(chi, c: SAConstants = DEFAULT):
    """d fv2 / d chi."""
    chi = _nonneg(chi, "chi")
    den = 1.0 + chi * np.asarray(fv1(chi, c))
    return _ret(-(1.0 - chi**2 * np.asarray(dfv1(chi, c))) / den**2)


def omega_tilde(omega, nu_tilde, d, nu, c: SAConstants = DEFAULT):
    """Modified vorticity, floored at ``omega_clip * omega``.

    ``nu`` is the molecular viscosity needed for ``chi``.
    """
    omega = _nonneg(omega, "omega")
    nu_tilde = _nonneg(nu_tilde, "nu_tilde")
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise DomainError("wall distance must be positive")
    s_bar = nu_tilde / (c.kappa**2 * d**2) * np.asarray(fv2(nu_tilde / nu, c))
    return _ret(np.maximum(omega + s_bar, c.omega_clip * omega))


def r_function(nu_tilde, omega_t, d, c: SAConstants = DEFAULT):
    """r = nu_tilde / (omega_tilde kappa^2 d^2) clipped to [0, r_clip]."""
    nu_tilde = np.asarray(nu_tilde, dtype=float)
    den = np.asarray(omega_t, dtype=float) * c.kappa**2 * np.asarray(d, dtype=float) ** 2
    tiny = np.finfo(float).tiny
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > tiny, nu_tilde / np.where(den > tiny, den, 1.0), c.r_clip)
    return _ret(np.clip(r, 0.0, c.r_clip))


def fw(r, c: SAConstants = DEFAULT):
    r = np.clip(np.asarray(r, dtype=float), 0.0, c.r_clip)
    g = r + c.cw2 * (r**6 - r)
    c6 = c.cw3**6
    return _ret(g * ((1.0 + c6) / (g**6 + c6)) ** (1.0 / 6.0))


def dfw(r, c: SAConstants = DEFAULT):
    """d fw / d r (for r inside the clip range)."""
    r = np.clip(np.asarray(r, dtype=float), 0.0, c.r_clip)
    g = r + c.cw2 * (r**6 - r)
    dg = 1.0 + c.cw2 * (6.0 * r**5 - 1.0)
    c6 = c.cw3**6
    return _ret(((1.0 + c6) / (g**6 + c6)) ** (1.0 / 6.0) * c6 / (g**6 + c6) * dg)


def production(nu_tilde, omega_t, c: SAConstants = DEFAULT):
    nu_tilde = _nonneg(nu_tilde, "nu_tilde")
    return _ret(c.cb1 * np.asarray(omega_t, dtype=float) * nu_tilde)


def destruction(nu_tilde, d, omega_t, c: SAConstants = DEFAULT):
    nu_tilde = np.asarray(nu_tilde, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise DomainError("wall distance must be positive")
    r = r_function(nu_tilde, omega_t, d, c)
    return _ret(c.cw1 * np.asarray(fw(r, c)) * (nu_tilde / d) ** 2)


def eddy_viscosity(nu_tilde, nu, c: SAConstants = DEFAULT):
    if np.any(np.asarray(nu) <= 0):
        raise DomainError("molecular viscosity must be positive")
    nu_tilde = _nonneg(nu_tilde, "nu_tilde")
    return _ret(nu_tilde * np.asarray(fv1(nu_tilde / nu, c)))


def source(beta, nu_tilde, omega, d, nu, c: SAConstants = DEFAULT):
    """Augmented source ``beta*P - D``; ``beta = 1`` is the baseline model."""
    om_t = omega_tilde(omega, nu_tilde, d, nu, c)
    p = np.asarray(production(nu_tilde, om_t, c))
    dd = np.asarray(destruction(nu_tilde, d, om_t, c))
    return _ret(np.asarray(beta, dtype=float) * p - dd)
