"""Glue for the inversion -> training -> prediction workflow."""
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .channel import CaseConfig, Grid1D, grid_for, solve_forward
from .features import DEFAULT_FEATURES, extract
from .inversion import (
    DEFAULT_REL_SIGMA,
    KINDS,
    InversionConfig,
    TwinReport,
    gaussian_bump,
    synthetic_observation,
    twin_experiment,
)
from .nn import TrainConfig, TrainingSet, train


@dataclass(frozen=True)
class BumpFamily:
    """``beta_true = 1 - amplitude * exp(-((y+ - center) / width)**2)``."""

    amplitude: float = 0.3
    center: float = 30.0
    width: float = 15.0

    def __call__(self, grid: Grid1D, case: CaseConfig) -> np.ndarray:
        return gaussian_bump(grid, case, self.amplitude, self.center, self.width)


@dataclass
class TwinRun:
    label: str
    case: CaseConfig
    grid: Grid1D
    report: TwinReport


def case_at(template: CaseConfig, re_tau: float) -> CaseConfig:
    return replace(template, re_tau=float(re_tau))


def case_label(re_tau, kind) -> str:
    return f"re{int(round(re_tau))}-{'profile' if kind == 'velocity-profile' else 'cf'}"


def run_twins(re_taus: Sequence[float], template: CaseConfig, inv: InversionConfig = None,
              family: BumpFamily = BumpFamily(), kind="velocity-profile", rel_sigma=DEFAULT_REL_SIGMA) -> list:
    out = []
    for re in re_taus:
        case = case_at(template, re)
        grid = grid_for(case)
        rep = twin_experiment(family(grid, case), kind, case, inv, grid, rel_sigma)
        out.append(TwinRun(case_label(re, kind), case, grid, rep))
    return out


def samples_from_state(state, beta, grid: Grid1D, case: CaseConfig, names=DEFAULT_FEATURES):
    """Feature rows and targets at every non-Dirichlet node."""
    table = extract(state, grid, case, active=names)
    keep = np.ones(grid.n, dtype=bool)
    keep[0] = False
    if grid.full_channel:
        keep[-1] = False
    return table.matrix(names)[keep], np.asarray(beta)[keep]


def training_set(twins: Sequence[TwinRun], names=DEFAULT_FEATURES, val_fraction=0.2, seed=0) -> TrainingSet:
    """Pool inverted ``(eta, beta_opt)`` pairs from twin runs."""
    Xs, ys, labels = [], [], []
    for t in twins:
        X, y = samples_from_state(t.report.state_opt, t.report.beta_opt, t.grid, t.case, names)
        Xs.append(X)
        ys.append(y)
        labels += [t.label] * y.size
    return TrainingSet.from_samples(np.vstack(Xs), np.concatenate(ys), names, np.array(labels),
                                    val_fraction=val_fraction, seed=seed)


def leave_one_out(labels: Sequence[str]) -> list:
    """Subsets of ``labels`` each omitting one entry."""
    labels = list(labels)
    return [[l for l in labels if l != drop] for drop in labels]


def train_subsets(ts: TrainingSet, subsets: Sequence[Sequence[str]], config: TrainConfig = None) -> list:
    nets = []
    for sub in subsets:
        part = ts.subset(np.isin(ts.cases, list(sub)))
        nets.append(train(part, config).network)
    return nets


def truth_observations(case: CaseConfig, beta_true, grid: Grid1D = None, kinds=KINDS,
                       rel_sigma=DEFAULT_REL_SIGMA) -> list:
    grid = grid if grid is not None else grid_for(case)
    state = solve_forward(beta_true, case, grid).state
    return [synthetic_observation(k, state, grid, case, rel_sigma) for k in kinds]
