"""Quantum-circuit refrigerator simulator: NIS junction physics, qubit
transition rates from photon-assisted tunneling, I-V fitting, pulse
transients through the bias network, and qubit-reset dynamics."""

__version__ = "0.1.0"

from .constants import CONST, E_CHARGE, H_PLANCK, HBAR, K_B, R_K
from .errors import (CalibrationError, DatasetError, DegenerateError, IntegrationError,
                     ParseError, QcrError, SolverError)
from .physics import (DEFAULT_QUAD, TABLE1_JUNCTION, JunctionParams, QuadOptions, dynes_dos,
                      fermi, nis_conductance, nis_current, rate_f)
from .rates import (TABLE1_QUBIT, QcrQubitParams, RateTable, calibrate_kappa, junction_rates,
                    onoff_ratio_estimate, qubit_rates, residual_population, t1_qcr_curve)
from .ivfit import FitOptions, IvDataset, IvFitResult, fit_iv, model_sinis_current, synthetic_iv
from .transient import (CircuitParams, JunctionTable, PulseSpec, TransientTrace,
                        instantaneous_t1, simulate_transient)
from .reset import (ResetConfig, RateSchedule, fit_exponential, propagate_population,
                    run_reset_protocol, sweep_protocol)

__all__ = [n for n in dir() if not n.startswith("_")]
