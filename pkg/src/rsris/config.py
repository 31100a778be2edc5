"""Dataclass configurations and their JSON (de)serialisation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _spread_angles(K: int, lo: float, hi: float, offsets=(-6.0, 0.0, 6.0)) -> List[List[float]]:
    centers = np.linspace(lo, hi, K + 2)[1:-1] if K > 1 else np.array([0.5 * (lo + hi)])
    return [[float(c + o) for o in offsets] for c in centers]


@dataclass
class ScenarioConfig:
    """Geometry and path-loss parameters for the Laplacian-spread ULA surrogate.

    Angles are in degrees. ``direct_gain`` / ``ris_gain`` are per-user
    per-element average gains of the BS-user and RIS-user links,
    ``bs_ris_gain`` the per-entry gain of the BS-RIS channel. The two
    ``*_jitter`` ranges control how much user angles and path powers move
    between covariance realizations (uniform, not taken from any standard).

    The defaults were tuned on a handful of seeds so that the K=3, M=4, N=40
    case converges quickly and still separates the algorithm variants; user
    gains fall off geometrically so the users are not interchangeable.
    """

    M: int = 4
    K: int = 3
    N: int = 40
    delta: float = 0.1
    user_angles_bs_deg: List[List[float]] = field(default_factory=list)
    user_angles_ris_deg: List[List[float]] = field(default_factory=list)
    path_powers: List[List[float]] = field(default_factory=list)
    angular_spread_deg: float = 22.0
    ris_angular_spread_deg: Optional[float] = 5.0
    direct_gain: List[float] = field(default_factory=list)
    ris_gain: List[float] = field(default_factory=list)
    bs_ris_gain: float = 1.0
    bs_ris_aod_deg: float = 20.0
    bs_ris_aoa_deg: float = -30.0
    bs_ris_spread_deg: float = 10.0
    angle_jitter_deg: float = 5.0
    power_jitter_db: float = 3.0
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        K = self.K
        if not self.user_angles_bs_deg:
            self.user_angles_bs_deg = _spread_angles(K, -60.0, 60.0)
        if not self.user_angles_ris_deg:
            self.user_angles_ris_deg = _spread_angles(K, -50.0, 50.0)
        if not self.path_powers:
            self.path_powers = [[1.0, 0.5, 0.25] for _ in range(K)]
        if not self.direct_gain:
            self.direct_gain = [round(1.256 * 0.489**k, 4) for k in range(K)]
        if not self.ris_gain:
            self.ris_gain = [round(0.153 * 0.797**k, 4) for k in range(K)]
        self.validate()

    def validate(self) -> None:
        if self.M < 1 or self.K < 1 or self.N < 0:
            raise ConfigError(f"invalid dimensions M={self.M}, K={self.K}, N={self.N}")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"delta={self.delta} outside [0, 1]")
        for name in ("user_angles_bs_deg", "user_angles_ris_deg", "path_powers", "direct_gain", "ris_gain"):
            if len(getattr(self, name)) != self.K:
                raise ConfigError(f"{name} must have one entry per user (K={self.K})")
        for k in range(self.K):
            n_paths = len(self.path_powers[k])
            if len(self.user_angles_bs_deg[k]) != n_paths or len(self.user_angles_ris_deg[k]) != n_paths:
                raise ConfigError(f"user {k}: angle and path-power lists differ in length")
            if any(p <= 0 for p in self.path_powers[k]):
                raise ConfigError(f"user {k}: path powers must be positive")
        if min(self.direct_gain) < 0 or min(self.ris_gain) < 0 or self.bs_ris_gain < 0:
            raise ConfigError("gains must be non-negative")
        if self.ris_angular_spread_deg is None:
            self.ris_angular_spread_deg = self.angular_spread_deg
        if min(self.angular_spread_deg, self.ris_angular_spread_deg, self.bs_ris_spread_deg) < 0:
            raise ConfigError("angular spreads must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class OptimizerConfig:
    P_t: float = 10.0
    max_iters: int = 100
    rel_tol: float = 1e-4
    phase_update_enabled: bool = True
    rs_enabled: bool = True
    trace_enabled: bool = False
    pi_tol: float = 1e-9
    pi_max_iters: int = 200_000

    def __post_init__(self):
        if not self.P_t > 0:
            raise ConfigError(f"P_t must be positive, got {self.P_t}")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ConfigError("rel_tol must be positive")


def db2lin(x_db: float) -> float:
    return float(10.0 ** (x_db / 10.0))


@dataclass(frozen=True)
class Variant:
    csi: str  # "stat", "imp" or "naive" (imp design that ignores the estimation error)
    rs: bool
    ris: str  # "opt", "rand" or "none"

    def __post_init__(self):
        if self.csi not in ("stat", "imp", "naive"):
            raise ConfigError(f"unknown csi mode {self.csi!r}")
        if self.ris not in ("opt", "rand", "none"):
            raise ConfigError(f"unknown ris mode {self.ris!r}")

    @property
    def label(self) -> str:
        ris = {"opt": "OptRIS", "rand": "RandRIS", "none": "noRIS"}[self.ris]
        return f"{self.csi.capitalize()} CSI {'RS' if self.rs else 'noRS'} + {ris}"

    @classmethod
    def parse(cls, text: str) -> "Variant":
        """Parse ``csi:rs:ris`` shorthand, e.g. ``stat:rs:opt`` or ``imp:nors:rand``."""
        try:
            csi, rs, ris = text.lower().split(":")
        except ValueError:
            raise ConfigError(f"variant must look like 'stat:rs:opt', got {text!r}") from None
        if rs not in ("rs", "nors"):
            raise ConfigError(f"rs flag must be 'rs' or 'nors', got {rs!r}")
        return cls(csi=csi, rs=rs == "rs", ris=ris)

    def to_str(self) -> str:
        return f"{self.csi}:{'rs' if self.rs else 'nors'}:{self.ris}"


@dataclass
class ExperimentPlan:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    Pt_grid_dB: List[float] = field(default_factory=lambda: [-10.0, 10.0, 20.0, 30.0, 40.0])
    n_cov_realizations: int = 20
    n_channel_realizations: int = 200
    variants: List[Variant] = field(default_factory=list)
    master_seed: int = 0
    # Imp-CSI variants re-optimise per channel draw, so they get their own count
    n_imp_channel_realizations: Optional[int] = None
    error_variance: float = 1.0
    max_iters: int = 100
    rel_tol: float = 1e-4
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if not self.Pt_grid_dB:
            raise ConfigError("Pt_grid_dB must be non-empty")
        if self.n_cov_realizations < 1 or self.n_channel_realizations < 1:
            raise ConfigError("realization counts must be >= 1")
        if self.error_variance < 0:
            raise ConfigError("error_variance must be non-negative")

    @property
    def imp_channel_realizations(self) -> int:
        return self.n_imp_channel_realizations or self.n_channel_realizations

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown plan keys: {sorted(unknown)}")
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        if "scenario" in d:
            d["scenario"] = ScenarioConfig.from_dict(d["scenario"])
        if "variants" in d:
            d["variants"] = [Variant.parse(v) if isinstance(v, str) else Variant(**v) for v in d["variants"]]
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variants"] = [v.to_str() for v in self.variants]
        return d


def load_json(path) -> dict:
    with open(Path(path)) as fh:
        return json.load(fh)


def load_scenario(path) -> ScenarioConfig:
    d = load_json(path)
    # a plan file is accepted wherever a scenario is expected
    if "scenario" in d and isinstance(d["scenario"], dict):
        d = d["scenario"]
    return ScenarioConfig.from_dict(d)


def load_plan(path) -> ExperimentPlan:
    return ExperimentPlan.from_dict(load_json(path))
