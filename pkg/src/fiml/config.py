"""TOML run configuration.

Every section and key is optional; unknown ones are rejected.  The resolved
configuration (defaults filled in) is written next to every artifact.
"""
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import tomli
import tomli_w

from .augment import AugmentConfig
from .channel import CaseConfig
from .closure import SAConstants
from .errors import ConfigurationError
from .features import DEFAULT_FEATURES, FEATURE_NAMES
from .inversion import KINDS, InversionConfig
from .nn import TrainConfig
from .pipeline import BumpFamily


@dataclass
class RunSection:
    label: str = "run"
    output_dir: str = "runs"


@dataclass
class CaseSection:
    re_tau: float = 550.0
    nu: Optional[float] = None
    h: float = 1.0
    n: int = 97
    stretch: float = 80.0
    full_channel: bool = False
    dpdx: Optional[float] = None
    laminar: bool = False
    tol: float = 1e-10
    max_steps: int = 400
    cfl0: float = 1.0
    cfl_max: float = 1e14
    polish_steps: int = 1
    ser_reference: float = 0.1
    cfl_growth: float = 1.2
    cfl_backoff: float = 2.0
    nt_init_ratio: float = 3.0


@dataclass
class SASection:
    cb1: float = 0.1355
    sigma: float = 2.0 / 3.0
    cb2: float = 0.622
    kappa: float = 0.41
    cw2: float = 0.622
    cw3: float = 2.0
    cv1: float = 7.1
    r_clip: float = 10.0
    omega_clip: float = 0.3


@dataclass
class InversionSection:
    lam: float = 4e-4
    lbfgs_memory: int = 10
    max_iterations: int = 200
    gtol: float = 1e-10
    gtol_rel: float = 1e-7
    c1: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30
    first_step: float = 0.1
    observation: str = "velocity-profile"
    rel_sigma: float = 0.01


@dataclass
class TwinSection:
    amplitude: float = 0.3
    center: float = 30.0
    width: float = 15.0


@dataclass
class GradcheckSection:
    step: float = 1e-4
    nodes: int = 8
    seed: int = 0
    threshold: float = 1e-5
    re_tau: float = 550.0
    n: int = 64
    kinds: list = field(default_factory=lambda: list(KINDS))


@dataclass
class TrainSection:
    re_tau: list = field(default_factory=lambda: [395.0, 550.0])
    features: list = field(default_factory=lambda: list(DEFAULT_FEATURES))
    val_fraction: float = 0.2
    split_seed: int = 0
    hidden: list = field(default_factory=lambda: [100, 100, 100])
    algorithm: str = "irprop-"
    max_epochs: int = 5000
    patience: int = 500
    seed: int = 0
    delta0: float = 0.01
    delta_min: float = 1e-6
    delta_max: float = 1.0
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: Optional[int] = None


@dataclass
class AugmentSection:
    beta_lo: float = 0.0
    beta_hi: float = 2.0
    relaxation: float = 0.3
    beta_tol: float = 1e-6
    max_steps: Optional[int] = None


@dataclass
class PredictSection:
    re_tau: float = 1000.0


@dataclass
class EnsembleSection:
    pool_re_tau: list = field(default_factory=lambda: [395.0, 470.0, 550.0, 700.0])


SECTIONS = dict(
    run=RunSection,
    case=CaseSection,
    sa=SASection,
    inversion=InversionSection,
    twin=TwinSection,
    gradcheck=GradcheckSection,
    train=TrainSection,
    augment=AugmentSection,
    predict=PredictSection,
    ensemble=EnsembleSection,
)


def _coerce(section, key, value, default):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"{where} must be a boolean")
        return value
    if isinstance(default, float) or (default is None and key in ("nu", "dpdx")):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{where} must be a number")
        return float(value)
    if isinstance(default, int) or (default is None and key in ("batch_size", "max_steps")):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{where} must be an integer")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigurationError(f"{where} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigurationError(f"{where} must be an array")
        return list(value)
    return value


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    case: CaseSection = field(default_factory=CaseSection)
    sa: SASection = field(default_factory=SASection)
    inversion: InversionSection = field(default_factory=InversionSection)
    twin: TwinSection = field(default_factory=TwinSection)
    gradcheck: GradcheckSection = field(default_factory=GradcheckSection)
    train: TrainSection = field(default_factory=TrainSection)
    augment: AugmentSection = field(default_factory=AugmentSection)
    predict: PredictSection = field(default_factory=PredictSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)

    def __post_init__(self):
        if self.inversion.observation not in KINDS:
            raise ConfigurationError(f"inversion.observation must be one of {KINDS}")
        bad = [k for k in self.gradcheck.kinds if k not in KINDS]
        if bad:
            raise ConfigurationError(f"gradcheck.kinds has unknown entries {bad}")
        bad = [k for k in self.train.features if k not in FEATURE_NAMES]
        if bad:
            raise ConfigurationError(f"train.features has unknown entries {bad}")
        # build once so invalid values surface at load time
        self.case_config()
        self.inversion_config()
        self.train_config()
        self.augment_config()

    # -- construction

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        unknown = [s for s in data if s not in SECTIONS]
        built = {}
        for name, sec in SECTIONS.items():
            table = data.get(name, {})
            if not isinstance(table, dict):
                raise ConfigurationError(f"[{name}] must be a table")
            defaults = sec()
            known = {f.name for f in fields(sec)}
            unknown += [f"{name}.{k}" for k in table if k not in known]
            kwargs = {k: _coerce(name, k, v, getattr(defaults, k)) for k, v in table.items() if k in known}
            built[name] = sec(**kwargs)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**built)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                data = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            d = {k: v for k, v in asdict(getattr(self, name)).items() if v is not None}
            out[name] = d
        return out

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dumps())
        return path

    # -- views

    def case_config(self, **overrides) -> CaseConfig:
        sa = SAConstants(**asdict(self.sa))
        return CaseConfig(sa=sa, **{**asdict(self.case), **overrides})

    def inversion_config(self) -> InversionConfig:
        d = asdict(self.inversion)
        d.pop("observation")
        d.pop("rel_sigma")
        return InversionConfig(**d)

    def train_config(self) -> TrainConfig:
        d = asdict(self.train)
        for k in ("re_tau", "features", "val_fraction", "split_seed"):
            d.pop(k)
        d["hidden"] = tuple(d["hidden"])
        return TrainConfig(**d)

    def augment_config(self) -> AugmentConfig:
        return AugmentConfig(**asdict(self.augment))

    def family(self) -> BumpFamily:
        return BumpFamily(**asdict(self.twin))

    def with_label(self, label) -> "RunConfig":
        return replace(self, run=replace(self.run, label=label))
