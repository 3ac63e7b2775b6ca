"""Strict JSON run configuration shared by all CLI commands."""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .physics import JunctionParams, QuadOptions
from .rates import QcrQubitParams, calibrate_kappa
from .reset import ResetConfig
from .transient import CircuitParams


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class JunctionBlock(_Strict):
    r_t_nis_ohm: float = Field(gt=0)
    delta_ev: float = Field(gt=0)
    gamma_dynes: float = Field(gt=0, lt=1)
    t_n_k: float = Field(gt=0)
    t_s_k: Optional[float] = Field(default=None, gt=0)

    def build(self) -> JunctionParams:
        return JunctionParams.from_ev(self.r_t_nis_ohm, self.delta_ev, self.gamma_dynes,
                                      self.t_n_k, self.t_s_k)


class QubitBlock(_Strict):
    c_c_f: float = Field(gt=0)
    c_g_f: float = Field(gt=0)
    c_nis_f: float = Field(gt=0)
    c_q_f: float = Field(gt=0)
    z_r_ohm: float = Field(gt=0)
    f0_hz: float = Field(gt=0)
    kappa: float = Field(default=1.0, gt=0)


class CircuitBlock(_Strict):
    c_bias_tee_f: float = Field(default=10e-9, gt=0)
    r_source_ohm: float = Field(default=50.0, gt=0)
    r_filter_ohm: float = Field(default=50.0, gt=0)
    c_filter_f: float = Field(default=10.6e-12, gt=0)
    c_island_f: Optional[float] = Field(default=None, gt=0)


class PulseBlock(_Strict):
    start_s: float = Field(default=20e-9, ge=0)
    rise_time_s: float = Field(default=0.5e-9, ge=0)
    horizon_s: Optional[float] = Field(default=None, gt=0)


class LengthGrid(_Strict):
    start_s: float = Field(gt=0)
    stop_s: float = Field(gt=0)
    num: int = Field(ge=1)
    spacing: str = Field(default="log", pattern="^(log|linear)$")

    def values(self) -> List[float]:
        f = np.geomspace if self.spacing == "log" else np.linspace
        return f(self.start_s, self.stop_s, self.num).tolist()


class ResetBlock(_Strict):
    intrinsic_t1_s: float = Field(default=1.74e-6, gt=0)
    p0: float = Field(default=1.0, ge=0, le=1)
    readout_delay_s: float = Field(default=400e-9, gt=0)
    amplitudes_frac_2delta: List[float] = Field(default=[0.37, 0.57, 0.77], min_length=1)
    lengths: LengthGrid | List[float] = LengthGrid(start_s=2e-9, stop_s=350e-9, num=20)
    calibrate_t1_off_s: Optional[float] = Field(default=4.31e-6, gt=0)

    def length_values(self) -> List[float]:
        if isinstance(self.lengths, LengthGrid):
            return self.lengths.values()
        return list(self.lengths)


class NumericsBlock(_Strict):
    quad_rtol: float = Field(default=1e-9, gt=0)
    quad_atol: float = Field(default=1e-30, gt=0)
    gap_cutoff: float = Field(default=30.0, gt=0)
    thermal_cutoff: float = Field(default=30.0, gt=0)
    ode_rtol: float = Field(default=1e-6, gt=0)
    max_step_s: Optional[float] = Field(default=0.5e-9, gt=0)
    rate_method: str = Field(default="auto", pattern="^(auto|direct|interp)$")


class RunConfig(_Strict):
    junction: JunctionBlock
    qubit: QubitBlock
    circuit: CircuitBlock = CircuitBlock()
    pulse: PulseBlock = PulseBlock()
    reset: ResetBlock = ResetBlock()
    numerics: NumericsBlock = NumericsBlock()
    output_dir: str = "out"
    seed: int = 0

    @model_validator(mode="after")
    def _check_embedded(self):
        # build every domain object once so their own invariants run up front
        self.qubit_params()
        self.circuit_params()
        return self

    def quad(self) -> QuadOptions:
        n = self.numerics
        return QuadOptions(n.quad_rtol, n.quad_atol, n.gap_cutoff, n.thermal_cutoff)

    def junction_params(self) -> JunctionParams:
        return self.junction.build()

    def qubit_params(self) -> QcrQubitParams:
        q = self.qubit
        return QcrQubitParams(self.junction_params(), q.c_c_f, q.c_g_f, q.c_nis_f, q.c_q_f,
                              q.z_r_ohm, q.f0_hz, q.kappa)

    def circuit_params(self) -> CircuitParams:
        c = self.circuit
        q = self.qubit
        c_island = c.c_island_f if c.c_island_f is not None else q.c_g_f + q.c_c_f
        return CircuitParams(c.c_bias_tee_f, c.r_source_ohm, c.r_filter_ohm, c.c_filter_f,
                             q.c_nis_f, c_island, self.junction_params())

    def reset_config(self) -> ResetConfig:
        p = self.qubit_params()
        r = self.reset
        quad = self.quad()
        if r.calibrate_t1_off_s is not None:
            p = p.replace(kappa=calibrate_kappa(p, r.calibrate_t1_off_s, quad))
        n = self.numerics
        return ResetConfig(p=p, cp=self.circuit_params(), intrinsic_t1=r.intrinsic_t1_s, p0=r.p0,
                           readout_delay=r.readout_delay_s,
                           amplitudes=tuple(r.amplitudes_frac_2delta),
                           lengths=tuple(r.length_values()), pulse_start=0.0,
                           rise_time=self.pulse.rise_time_s, tol=n.ode_rtol,
                           max_step=n.max_step_s, rate_method=n.rate_method, quad=quad)

    def digest(self) -> str:
        canon = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    return RunConfig.model_validate_json(text)


def table1_path() -> Path:
    return Path(str(resources.files("qcrsim") / "data" / "table1.json"))


def table1_config() -> RunConfig:
    return load_config(table1_path())
