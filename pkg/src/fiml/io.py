"""CSV and JSON persistence.

Floats are written with ``repr`` (shortest round-trip decimal) so files
re-read bit-exactly and reruns are byte-identical.

Schemas::

    state.csv        y, y_plus, u, u_plus, nu_tilde, nu_t, beta
    history.csv      iteration, residual_l2_momentum, residual_l2_sa[, beta_change]
    gradcheck.csv    node, adjoint, fd, rel_err
    training_set.csv chi, omega_bar, p_over_d, tau_ratio, beta, case
    beta.csv         y, beta
"""
import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import CaseConfig, FlowState, Grid1D, eddy_viscosity_field, wall_shear_stress
from .errors import ConfigurationError, ParseError

STATE_COLUMNS = ("y", "y_plus", "u", "u_plus", "nu_tilde", "nu_t", "beta")
HISTORY_COLUMNS = ("iteration", "residual_l2_momentum", "residual_l2_sa")
GRADCHECK_COLUMNS = ("node", "adjoint", "fd", "rel_err")
TRAINING_TARGET = "beta"
TRAINING_LABEL = "case"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    """Return ``(header, rows)`` with the raw string cells."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file", line=1)
    return rows[0], rows[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}", line=exc.lineno) from exc


# ---------------------------------------------------------------------------
# tables


def write_state(path, state: FlowState, grid: Grid1D, cfg: CaseConfig, beta=None) -> Path:
    beta = np.ones(grid.n) if beta is None else np.asarray(beta)
    tw = wall_shear_stress(state, grid, cfg)
    ut = math.sqrt(tw) if tw > 0 else float("nan")
    nut = eddy_viscosity_field(state, cfg)
    rows = zip(grid.y, grid.d * ut / cfg.viscosity, state.u, state.u / ut, state.nu_tilde, nut, beta)
    return write_csv(path, STATE_COLUMNS, rows)


def write_history(path, history) -> Path:
    width = len(history[0]) if history else 3
    header = HISTORY_COLUMNS + (("beta_change",) if width == 4 else ())
    return write_csv(path, header, history)


def write_gradcheck(path, report) -> Path:
    return write_csv(path, GRADCHECK_COLUMNS, zip(report.nodes, report.adjoint, report.fd, report.rel_err))


def write_beta(path, grid: Grid1D, beta) -> Path:
    return write_csv(path, ("y", "beta"), zip(grid.y, beta))


def write_training_set(path, ts) -> Path:
    header = tuple(ts.names) + (TRAINING_TARGET, TRAINING_LABEL)
    rows = (list(x) + [b, c] for x, b, c in zip(ts.X, ts.y, ts.cases))
    return write_csv(path, header, rows)


def _floats(row, idx, lineno, names, path):
    out = []
    for i, name in zip(idx, names):
        try:
            v = float(row[i])
        except (ValueError, IndexError):
            raise ParseError(f"{path}: line {lineno}: column {name!r} is not a number", line=lineno,
                             field=name) from None
        if not math.isfinite(v):
            raise ParseError(f"{path}: line {lineno}: column {name!r} is not finite", line=lineno, field=name)
        out.append(v)
    return out


def read_training_set(path):
    """Return ``(X, y, names, cases)`` from a training-set CSV."""
    header, rows = read_csv(path)
    for col in (TRAINING_TARGET, TRAINING_LABEL):
        if col not in header:
            raise ParseError(f"{path}: missing column {col!r}", line=1, field=col)
    names = tuple(h for h in header if h not in (TRAINING_TARGET, TRAINING_LABEL))
    fi = [header.index(n) for n in names]
    bi = header.index(TRAINING_TARGET)
    ci = header.index(TRAINING_LABEL)
    X, y, cases = [], [], []
    for k, row in enumerate(rows, start=2):
        X.append(_floats(row, fi, k, names, path))
        y.append(_floats(row, [bi], k, [TRAINING_TARGET], path)[0])
        cases.append(row[ci])
    return np.array(X, dtype=float).reshape(len(rows), len(names)), np.array(y), names, np.array(cases)


# ---------------------------------------------------------------------------
# external truth data


@dataclass(frozen=True, eq=False)
class TruthDataset:
    """External reference data in physical units.

    ``kind`` is ``"profile"`` (``y``, ``u``) or ``"scalar"`` (``labels``,
    ``re_tau``, ``cf``).
    """

    kind: str
    y: np.ndarray = None
    u: np.ndarray = None
    labels: tuple = ()
    re_tau: np.ndarray = None
    cf: np.ndarray = None
    provenance: str = ""


_PLUS = ("y_plus", "u_plus")
_PHYS = ("y", "u")


def ingest_profile(path, units="physical", case: CaseConfig = None, provenance="") -> TruthDataset:
    """Read a velocity profile; ``units`` is ``"plus"`` or ``"physical"``.

    Plus-unit files are converted with the case's nominal ``u_tau`` and ``nu``.
    """
    if units not in ("plus", "physical"):
        raise ConfigurationError(f"units must be 'plus' or 'physical', got {units!r}")
    if units == "plus" and case is None:
        raise ConfigurationError("plus-unit profiles need a case for u_tau and nu")
    header, rows = read_csv(path)
    header = [h.strip() for h in header]
    cols = _PLUS if units == "plus" else _PHYS
    for c in cols:
        if c not in header:
            raise ParseError(f"{path}: missing column {c!r} (header: {', '.join(header)})", line=1, field=c)
    idx = [header.index(c) for c in cols]
    ys, us = [], []
    for k, row in enumerate(rows, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        yv, uv = _floats(row, idx, k, cols, path)
        if ys and yv <= ys[-1]:
            raise ParseError(f"{path}: line {k}: {cols[0]} is not increasing ({yv!r} after {ys[-1]!r})",
                             line=k, field=cols[0])
        ys.append(yv)
        us.append(uv)
    if not ys:
        raise ParseError(f"{path}: no data rows", line=2)
    y = np.array(ys)
    u = np.array(us)
    if units == "plus":
        y = y * case.viscosity / case.u_tau
        u = u * case.u_tau
    return TruthDataset("profile", y=y, u=u, provenance=provenance)


def ingest_scalars(path, provenance="") -> TruthDataset:
    """Read skin-friction records with columns ``label, re_tau, cf``."""
    header, rows = read_csv(path)
    header = [h.strip() for h in header]
    for c in ("label", "re_tau", "cf"):
        if c not in header:
            raise ParseError(f"{path}: missing column {c!r}", line=1, field=c)
    li, ri, ci = (header.index(c) for c in ("label", "re_tau", "cf"))
    labels, re, cf = [], [], []
    for k, row in enumerate(rows, start=2):
        r, c = _floats(row, [ri, ci], k, ["re_tau", "cf"], path)
        if r <= 0:
            raise ParseError(f"{path}: line {k}: re_tau must be positive", line=k, field="re_tau")
        labels.append(row[li])
        re.append(r)
        cf.append(c)
    return TruthDataset("scalar", labels=tuple(labels), re_tau=np.array(re), cf=np.array(cf),
                        provenance=provenance)


def write_profile(path, y, u, units="physical", case: CaseConfig = None) -> Path:
    if units == "plus":
        return write_csv(path, _PLUS, zip(np.asarray(y) * case.u_tau / case.viscosity, np.asarray(u) / case.u_tau))
    return write_csv(path, _PHYS, zip(y, u))
