"""Run configuration: one JSON document, overridable flag by flag.

Defaults reproduce the experiment's environment (rates 1.25/0.75/1/1.5/0.5,
budget 360, seven-day delay, background effort 10) with the published
point estimates as generating truths.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .model import DEFAULT_BUDGET, DEFAULT_DELAY_DAYS, DEFAULT_OMEGA, DEFAULT_RATES, RateSchedule
from .simulate import DEFAULT_SIGMA, PopulationSpec

CONFIG_ENV_VAR = "CTBLAB_CONFIG"

DEFAULT_CELL_SIZES = {"baseline": 50, "cd": 100, "cr": 50, "crcd": 100}


@dataclass(frozen=True)
class RunConfig:
    omega: float = DEFAULT_OMEGA
    rates: tuple[float, ...] = DEFAULT_RATES
    budget: float = DEFAULT_BUDGET
    delay_days: int = DEFAULT_DELAY_DAYS
    cell_sizes: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_CELL_SIZES))
    beta: float = 1.009
    beta_cd: float = 0.921
    beta_cr: float = 0.679
    beta_crcd: float = 0.581
    delta: float = 0.986
    alpha: float = 1.282
    sigma: float = DEFAULT_SIGMA
    seed: int = 0
    cluster_correction: bool = True
    test_scale: str = "beta"

    def __post_init__(self) -> None:
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.test_scale not in ("beta", "theta"):
            raise ValueError(f"test_scale must be 'beta' or 'theta', got {self.test_scale!r}")

    @property
    def schedule(self) -> RateSchedule:
        return RateSchedule(tuple(self.rates), self.budget, self.delay_days)

    @property
    def betas(self) -> dict[str, float]:
        return {
            "baseline": self.beta,
            "cd": self.beta_cd,
            "cr": self.beta_cr,
            "crcd": self.beta_crcd,
        }

    def population_spec(self) -> PopulationSpec:
        return PopulationSpec.from_params(
            betas=self.betas,
            delta=self.delta,
            alpha=self.alpha,
            omega=self.omega,
            cell_sizes=self.cell_sizes,
            sigma=self.sigma,
            seed=self.seed,
            schedule=self.schedule,
        )

    def to_json(self) -> str:
        payload = asdict(self)
        payload["rates"] = list(self.rates)
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "rates" in payload:
            payload = dict(payload)
            payload["rates"] = tuple(payload["rates"])
        return cls(**payload)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | os.PathLike | None = None) -> "RunConfig":
        """Config from an explicit path, the environment default, or defaults."""
        if path is None:
            path = os.environ.get(CONFIG_ENV_VAR) or None
        if path is None:
            return cls()
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def with_overrides(self, **kwargs) -> "RunConfig":
        """Apply CLI flag overrides; None values leave the config untouched."""
        updates = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **updates) if updates else self
