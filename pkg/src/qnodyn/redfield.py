"""Ohmic bath, Bloch-Redfield tensor and the numerical master-equation solver.

The master equation in the coupled eigenbasis is

    d rho_nm / dt = -i omega_nm rho_nm + pi sum_kl L_nm,kl rho_kl

with G(w) = kappa w and N(w) = (coth(beta w / 2) - 1) / 2.  With
C(w) = G(w) N(w) the tensor reads

    L_nm,kl = [C(w_nk) + C(w_ml)] y_nk y_lm - delta_ml A_nk - delta_nk A_ml,
    A = y (C o y),

which is the usual form after using G(-w) N(-w) = G(w) + C(w).  The Lamb
shift is not included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_model import SystemParams
from .errors import StepSizeTooLarge
from .spectra import TimeSeries
from .vanvleck import EnergySpectrum

SERIES_CUTOFF = 1e-6
DEFAULT_STEP = 0.005  # in units of 1/Omega
MAX_HALVINGS = 6
HALVING_TOL = 1e-8


@dataclass(frozen=True)
class BathKernel:
    kappa: float
    beta: float

    def spectral_density(self, w):
        return self.kappa * np.asarray(w, dtype=float)

    def occupation(self, w):
        return bath_occupation(w, self)

    def correlation(self, w):
        """C(w) = G(w) N(w), continuous through w = 0 where it equals kappa / beta."""
        w = np.asarray(w, dtype=float)
        x = self.beta * w
        small = np.abs(x) < SERIES_CUTOFF
        out = np.empty_like(w)
        out[small] = self.kappa / self.beta * (1 - x[small] / 2 + x[small] ** 2 / 12)
        ws = w[~small]
        out[~small] = self.kappa * ws * bath_occupation(ws, self)
        return out


def bath_occupation(w, kernel: BathKernel):
    """N(w) = (coth(beta w / 2) - 1) / 2, by the series near the pole."""
    w = np.asarray(w, dtype=float)
    x = kernel.beta * w
    small = np.abs(x) < SERIES_CUTOFF
    out = np.empty_like(x)
    with np.errstate(divide="ignore"):
        xs = x[small]
        out[small] = 0.5 * (2 / xs - 1 + xs / 6)
    xl = x[~small]
    # N(w) = 1 / (e^x - 1), written to avoid overflow for large |x|
    out[~small] = _bose(xl)
    return float(out) if out.ndim == 0 else out


def _bose(x):
    out = np.empty_like(x)
    pos = x > 0
    out[pos] = np.exp(-x[pos]) / -np.expm1(-x[pos])
    out[~pos] = -1 - np.exp(x[~pos]) / -np.expm1(x[~pos])
    return out


@dataclass(frozen=True)
class RedfieldTensor:
    """L[n, m, k, l] over the retained coupled levels."""

    L: np.ndarray
    omega: np.ndarray
    kernel: BathKernel

    def __post_init__(self):
        self.L.setflags(write=False)

    @property
    def size(self) -> int:
        return self.L.shape[0]

    def __getitem__(self, idx):
        return self.L[idx]

    def superoperator(self) -> np.ndarray:
        """Generator M acting on rho flattened row-major."""
        d = self.size
        return -1j * np.diag(self.omega.reshape(-1)) + math.pi * self.L.reshape(d * d, d * d)


def redfield_tensor(p: SystemParams, spec: EnergySpectrum, y: np.ndarray) -> RedfieldTensor:
    y = np.asarray(y, dtype=float)
    if y.shape != (spec.size, spec.size):
        raise ValueError(f"y has shape {y.shape}, spectrum has {spec.size} levels")
    kernel = BathKernel(p.kappa, p.beta)
    om = spec.omega_matrix()
    c = kernel.correlation(om)
    cy = c * y
    a = y @ cy
    eye = np.eye(spec.size)
    direct = (c[:, None, :, None] + c[None, :, None, :]) * y[:, None, :, None] * y.T[None, :, None, :]
    # direct[n, m, k, l] = (C_nk + C_ml) y_nk y_lm
    t2 = eye[None, :, None, :] * a[:, None, :, None]  # delta_ml A_nk
    t3 = eye[:, None, :, None] * a[None, :, None, :]  # delta_nk A_ml
    return RedfieldTensor(direct - t2 - t3, om, kernel)


# ---------------------------------------------------------------------------
# integration


@dataclass(frozen=True)
class Trajectory:
    t0: float
    dt: float
    rho: np.ndarray  # shape (n_times, D, D)
    step: float

    def __post_init__(self):
        self.rho.setflags(write=False)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.rho.shape[0])

    def trace_error(self) -> float:
        return float(np.max(np.abs(np.trace(self.rho, axis1=1, axis2=2) - 1)))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.rho - np.conj(np.swapaxes(self.rho, 1, 2)))))

    def min_population(self) -> float:
        return float(np.min(np.diagonal(self.rho, axis1=1, axis2=2).real))


def rk4_propagator(m: np.ndarray, h: float, n_sub: int) -> np.ndarray:
    """n_sub classic RK4 steps of size h for the linear system x' = M x."""
    hm = h * m
    eye = np.eye(m.shape[0], dtype=complex)
    hm2 = hm @ hm
    step = eye + hm + hm2 / 2 + hm2 @ hm / 6 + hm2 @ hm2 / 24
    return np.linalg.matrix_power(step, n_sub)


def _uniform(t_grid) -> tuple[float, float, int]:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) < 2:
        raise ValueError("t_grid needs at least two points")
    dt = t[1] - t[0]
    if dt <= 0 or np.max(np.abs(np.diff(t) - dt)) > 1e-9 * max(1.0, abs(t[-1])):
        raise ValueError("t_grid must be uniform and ascending")
    return float(t[0]), float(dt), len(t)


def _run(prop: np.ndarray, rho0: np.ndarray, n_t: int, enforce: bool) -> np.ndarray:
    d = rho0.shape[0]
    out = np.empty((n_t, d, d), dtype=complex)
    x = rho0.reshape(-1).astype(complex)
    upper = np.triu_indices(d, 1)
    for i in range(n_t):
        r = x.reshape(d, d)
        if enforce:
            r = r.copy()
            r[np.diag_indices(d)] = r.diagonal().real
            r.T[upper] = np.conj(r[upper])
            x = r.reshape(-1)
        out[i] = r
        x = prop @ x
    return out


def integrate_master(
    rho0,
    spec: EnergySpectrum,
    tensor: RedfieldTensor,
    t_grid,
    *,
    step: float | None = None,
    check: bool = True,
    tol: float = HALVING_TOL,
    enforce_hermitian: bool = True,
) -> Trajectory:
    """Solve the master equation on a uniform output grid.

    The step defaults to 0.005 / Omega and is shortened so that it divides
    the output spacing.  With `check`, the run is repeated at half the step;
    if the two differ by more than `tol` the step is halved again, up to
    six times, after which StepSizeTooLarge is raised.  The Hermitian part
    is restored after every output step unless `enforce_hermitian` is off
    (debug mode, used to measure drift).
    """
    rho0 = np.asarray(getattr(rho0, "rho", rho0), dtype=complex)
    if rho0.shape != (tensor.size, tensor.size):
        raise ValueError("rho0 and tensor dimensions differ")
    t0, dt, n_t = _uniform(t_grid)
    h = DEFAULT_STEP / spec.params.omega if step is None else step
    m = tensor.superoperator()

    def solve(h_try):
        n_sub = max(1, math.ceil(dt / h_try - 1e-9))
        return _run(rk4_propagator(m, dt / n_sub, n_sub), rho0, n_t, enforce_hermitian), dt / n_sub

    rho, h_used = solve(h)
    if not check:
        return Trajectory(t0, dt, rho, h_used)
    for _ in range(MAX_HALVINGS):
        finer, h_fine = solve(h_used / 2)
        err = float(np.max(np.abs(finer - rho)))
        if err <= tol:
            return Trajectory(t0, dt, rho, h_used)
        rho, h_used = finer, h_fine
    raise StepSizeTooLarge(f"step-halving difference {err:.3g} exceeds {tol:g} at step {h_used:.3g}")


def free_evolution(rho0, spec: EnergySpectrum, t_grid) -> Trajectory:
    """rho_nm(t) = exp(-i omega_nm t) rho_nm(0)."""
    rho0 = np.asarray(getattr(rho0, "rho", rho0), dtype=complex)
    t0, dt, n_t = _uniform(t_grid)
    t = t0 + dt * np.arange(n_t)
    phase = np.exp(-1j * spec.omega_matrix()[None, :, :] * t[:, None, None])
    return Trajectory(t0, dt, phase * rho0[None], 0.0)


def population_difference(traj: Trajectory, weights, provenance: str = "numeric") -> TimeSeries:
    """P(t_i) = sum w_nn rho_nn + sum_{n>m} w_nm Re rho_nm."""
    d = traj.rho.shape[1]
    if weights.diag.shape[0] != d:
        raise ValueError("weight table and trajectory dimensions differ")
    lower = np.tril(weights.offdiag, -1)
    pops = np.diagonal(traj.rho, axis1=1, axis2=2).real
    vals = pops @ weights.diag + np.einsum("tnm,nm->t", traj.rho.real, lower)
    return TimeSeries(traj.t0, traj.dt, vals, provenance=provenance)
