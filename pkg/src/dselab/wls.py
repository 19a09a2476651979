"""Centralized weighted least squares: the reference every distributed run is scored against."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.stats import chi2

from .errors import ObservabilityError
from .network import MeasurementModel


@dataclass(frozen=True)
class GainSystem:
    A: np.ndarray  # F' R^-1 F
    u: np.ndarray  # F' R^-1 z

    @property
    def n(self) -> int:
        return self.A.shape[0]


def build_gain(model: MeasurementModel, z: np.ndarray) -> GainSystem:
    z = np.asarray(z, dtype=float)
    if z.shape != (model.m,):
        raise ValueError(f"expected {model.m} measurements, got shape {z.shape}")
    FW = model.F.T * model.weights
    A = FW @ model.F
    A = 0.5 * (A + A.T)
    if np.linalg.matrix_rank(A) < model.n:
        raise ObservabilityError("gain matrix is singular; the system is unobservable")
    return GainSystem(A, FW @ z)


def solve_wls(gain: GainSystem) -> np.ndarray:
    try:
        c = linalg.cho_factor(gain.A)
    except linalg.LinAlgError as exc:
        raise ObservabilityError("gain matrix is not positive definite") from exc
    return linalg.cho_solve(c, gain.u)


def estimate(model: MeasurementModel, z: np.ndarray) -> np.ndarray:
    """Centralized WLS state estimate for measurements ``z``."""
    return solve_wls(build_gain(model, z))


def objective(model: MeasurementModel, z: np.ndarray, x: np.ndarray) -> float:
    """Weighted residual sum (z - Fx)' R^-1 (z - Fx)."""
    r = np.asarray(z) - model.F @ np.asarray(x)
    return float(r @ (model.weights * r))


def chi_square_threshold(dof: int, confidence: float = 0.95) -> float:
    """Inverse chi-square CDF at ``confidence`` with ``dof`` degrees of freedom."""
    if int(dof) != dof or dof < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {dof}")
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    return float(chi2.ppf(confidence, int(dof)))
