"""Pydantic models for scenario files, plus YAML loading and dotted-key overrides."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from offgrid.errors import ConfigError


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DictionaryConfig(StrictModel):
    """dictionary.* keys."""

    preset: Literal["gaussian", "dirichlet"] = Field(default="gaussian", description="Feature family")
    T: int = Field(default=256, ge=2, description="Number of grid points (or basis size)")
    sigma: float | None = Field(default=None, gt=0, description="Gaussian scale; defaults to the log T schedule")
    b: float | None = Field(default=None, gt=0, description="Gaussian grid half-width; defaults to log T")
    xi: float = Field(default=0.5, gt=0, lt=1, description="Window shrink: Theta_T = (1 - xi)[-b, b]")
    n_freq: int | None = Field(default=None, ge=1, description="Dirichlet frequencies (odd); defaults to T or T - 1")
    measure: Literal["grid", "basis"] = Field(default="grid", description="Observation measure for dirichlet")


class NoiseConfig(StrictModel):
    """noise.* keys; the kind follows the measure (white on grids, colored on bases)."""

    sigma_bar: float = Field(default=1.0, ge=0)
    xi: list[float] | None = Field(default=None, description="Basis variances; defaults to 1/T each")


class MixtureConfig(StrictModel):
    beta: list[float] = Field(default_factory=list)
    theta: list[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _lengths(self) -> MixtureConfig:
        if len(self.beta) != len(self.theta):
            raise ValueError(f"beta has {len(self.beta)} entries but theta has {len(self.theta)}")
        return self


class NullConfig(MixtureConfig):
    """null.* keys; signs only matter for the dictionary test."""

    signs: list[float] | None = None

    @model_validator(mode="after")
    def _lengths(self) -> NullConfig:
        # a signed support may leave beta empty
        if self.beta and len(self.beta) != len(self.theta):
            raise ValueError(f"beta has {len(self.beta)} entries but theta has {len(self.theta)}")
        if not self.beta and self.theta and self.signs is None:
            raise ValueError("theta without beta needs signs")
        if self.signs is not None and len(self.signs) != len(self.theta):
            raise ValueError(f"signs has {len(self.signs)} entries but theta has {len(self.theta)}")
        return self


class AltConfig(MixtureConfig):
    """alt.* keys: a direction mixture for 'amplitude', spike locations for 'off-support'."""

    generator: Literal["amplitude", "off-support"] = "amplitude"
    rho_grid: list[float] = Field(default_factory=lambda: [0.5, 1.0, 1.5, 2.0])

    @model_validator(mode="after")
    def _grid(self) -> AltConfig:
        g = self.rho_grid
        if not g or any(v <= 0 for v in g) or any(b <= a for a, b in zip(g, g[1:])):
            raise ValueError("rho_grid must be positive and strictly increasing")
        return self


class SolverSection(StrictModel):
    """solver.* keys; kappa defaults to c1 * sigma_bar * sqrt(Delta log tau) with tau = T."""

    K: int = Field(default=8, ge=1)
    kappa: float | None = Field(default=None, ge=0)
    tau: float | None = Field(default=None, gt=1)
    c1: float = Field(default=2.0, gt=0)
    insertion_grid_factor: int = Field(default=8, ge=1)
    max_outer_iters: int | None = Field(default=None, ge=1)
    step_tol: float = Field(default=1e-10, gt=0)
    objective_tol: float = Field(default=1e-12, gt=0)
    max_local_iters: int = Field(default=500, ge=1)
    merge_radius: float = Field(default=0.01, gt=0, description="In units of sigma_T")
    prune_threshold: float = Field(default=1e-12, gt=0)


class HypotestSection(StrictModel):
    """test.* keys."""

    which: list[Literal["T1", "T2", "T3", "MAX"]] = Field(default_factory=lambda: ["T1"])
    alpha: float = Field(default=0.1, gt=0, lt=1)
    r: float = Field(default=0.4, gt=0)
    eta: float = Field(default=0.5, gt=0, lt=1)
    thresholds: dict[Literal["T1", "T2", "T3"], float] = Field(default_factory=dict)
    rho: float | None = Field(default=None, gt=0, description="Separation used to derive T1 thresholds")


class MCSection(StrictModel):
    """mc.* keys."""

    replicates: int = Field(default=200, ge=1)
    threads: int | None = Field(default=None, ge=1)
    s_values: list[int] = Field(default_factory=lambda: [1, 2, 4])
    T_values: list[int] = Field(default_factory=lambda: [128, 256])
    calibration_replicates: int = Field(default=400, ge=1)
    rho_points: int = Field(default=16, ge=2)
    max_failure_rate: float = Field(default=0.01, ge=0, le=1)
    sweep: Literal["risk", "detection"] = Field(default="risk", description="What the sweep verb runs")


class ConstantsSection(StrictModel):
    """constants.* keys; unset values come from the calibration store or defaults."""

    C0: float | None = Field(default=None, gt=0)
    C1: float = Field(default=2.0, gt=0)
    C3: float | None = Field(default=None, gt=0)
    C4: float | None = Field(default=None, gt=0)
    C5: float | None = Field(default=None, gt=0)
    C_N: float | None = Field(default=None, gt=0)
    C_F: float | None = Field(default=None, gt=0)
    c: float = Field(default=2.718281828459045, gt=0)
    C: float | None = Field(default=None, gt=0)
    use_store: bool = True


class CertificateSection(StrictModel):
    anchors: list[float] = Field(default_factory=list)
    signs: list[float] = Field(default_factory=list)
    r: float = Field(default=0.4, gt=0)
    grid_step: float | None = Field(default=None, gt=0)


class DiagnosticsSection(StrictModel):
    grid_step: float | None = Field(default=None, gt=0)
    eta: float = Field(default=0.5, gt=0, lt=1)
    r: float = Field(default=0.4, gt=0)
    s: int = Field(default=2, ge=1)
    Q: list[float] = Field(default_factory=list)


class ScenarioConfig(StrictModel):
    scenario_id: str = "scenario"
    seed: int = Field(default=0, ge=0)
    dictionary: DictionaryConfig = Field(default_factory=DictionaryConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    signal: MixtureConfig = Field(default_factory=MixtureConfig)
    null: NullConfig = Field(default_factory=NullConfig)
    alt: AltConfig = Field(default_factory=AltConfig)
    solver: SolverSection = Field(default_factory=SolverSection)
    test: HypotestSection = Field(default_factory=HypotestSection)
    mc: MCSection = Field(default_factory=MCSection)
    constants: ConstantsSection = Field(default_factory=ConstantsSection)
    certificate: CertificateSection = Field(default_factory=CertificateSection)
    diagnostics: DiagnosticsSection = Field(default_factory=DiagnosticsSection)


def parse_override(text: str) -> tuple[list[str], Any]:
    """'a.b=value' -> (['a', 'b'], typed value)."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override must look like key.path=value, got {text!r}")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value of {key}: {exc}") from None
    return key.strip().split("."), value


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    for item in overrides:
        path, value = parse_override(item)
        node = data
        for part in path[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"cannot set {'.'.join(path)}: {part} is not a section")
            node = nxt
        node[path[-1]] = value
    return data


def validate_scenario(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise ConfigError(f"{key}: {first['msg']}") from None


def load_scenario(path: str | Path | None, overrides: list[str] | None = None) -> ScenarioConfig:
    """Read a YAML scenario (or start empty), apply overrides, validate."""
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{p} must contain a mapping at the top level")
    return validate_scenario(apply_overrides(data, overrides or []))
