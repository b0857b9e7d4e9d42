"""Parameters, unit conventions and first-order theory of the quartic oscillator.

Units are hbar = k_B = 1 throughout; every energy is a frequency.  The
nonlinear oscillator (NO) is H_NO = Omega B^dag B + (alpha/4)(B + B^dag)^4
with the constant and the linear-in-Omega renormalisation absorbed so that
its levels are E_j = Omega j + 1.5 alpha j (j + 1) to first order in alpha.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    GroundLevelUndefined,
    NegativeCoupling,
    NegativeDamping,
    NegativeNonlinearity,
    NonPositiveFrequency,
)

ALPHA_WARN = 0.05
G_WARN = 0.3
ER2_WARN = 0.05


class PerturbativeValidityWarning(UserWarning):
    """Parameters lie where the perturbative truncation degrades."""


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the qubit, oscillator and bath.

    Attributes
    ----------
    epsilon : float
        Qubit bias.
    delta0 : float
        Tunnelling amplitude.
    omega : float
        Linear oscillator frequency.
    alpha : float
        Quartic nonlinearity (hard, alpha >= 0).
    g : float
        Qubit-oscillator coupling.
    kappa : float
        Dimensionless Ohmic damping, G(w) = kappa w.
    beta : float
        Inverse temperature.
    """

    epsilon: float = 0.0
    delta0: float = 1.0
    omega: float = 1.0
    alpha: float = 0.0
    g: float = 0.0
    kappa: float = 0.0
    beta: float = 10.0

    @property
    def delta_b(self) -> float:
        return math.hypot(self.epsilon, self.delta0)

    @property
    def theta(self) -> float:
        # cos(theta) = eps/Db, sin(theta) = -D0/Db; lies in [-pi/2, pi/2) for eps >= 0
        return math.atan2(-self.delta0, self.epsilon)

    @property
    def cos_theta(self) -> float:
        return self.epsilon / self.delta_b

    @property
    def sin_theta(self) -> float:
        return -self.delta0 / self.delta_b

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta0": self.delta0,
            "omega": self.omega,
            "alpha": self.alpha,
            "g": self.g,
            "kappa": self.kappa,
            "beta": self.beta,
            "delta_b": self.delta_b,
            "theta": self.theta,
        }


def validate_params(raw: SystemParams, *, warn: bool = True) -> SystemParams:
    """Check the invariants of `raw` and return it unchanged.

    Raises on hard violations; emits PerturbativeValidityWarning when
    alpha/omega > 0.05 or g/omega > 0.3.
    """
    values = [raw.epsilon, raw.delta0, raw.omega, raw.alpha, raw.g, raw.kappa, raw.beta]
    if not all(math.isfinite(float(v)) for v in values):
        raise NonPositiveFrequency("all parameters must be finite")
    if raw.omega <= 0:
        raise NonPositiveFrequency(f"omega must be > 0, got {raw.omega}")
    if raw.delta0 <= 0:
        raise NonPositiveFrequency(f"delta0 must be > 0, got {raw.delta0}")
    if raw.beta <= 0:
        raise NonPositiveFrequency(f"beta must be > 0, got {raw.beta}")
    if raw.alpha < 0:
        raise NegativeNonlinearity(f"alpha must be >= 0 (hard nonlinearity), got {raw.alpha}")
    if raw.kappa < 0:
        raise NegativeDamping(f"kappa must be >= 0, got {raw.kappa}")
    if raw.g < 0:
        raise NegativeCoupling(f"g must be >= 0, got {raw.g}")
    if warn:
        for message in validity_warnings(raw):
            warnings.warn(message, PerturbativeValidityWarning, stacklevel=2)
    return raw


def validity_warnings(p: SystemParams, j_max: int | None = None) -> list[str]:
    """Human-readable notes on where the perturbative series is stretched."""
    notes = []
    if p.alpha / p.omega > ALPHA_WARN:
        notes.append(f"alpha/omega = {p.alpha / p.omega:.4g} exceeds {ALPHA_WARN}")
    if p.g / p.omega > G_WARN:
        notes.append(f"g/omega = {p.g / p.omega:.4g} exceeds {G_WARN}")
    if j_max is not None and j_max >= 1 and p.alpha > 0:
        er2 = perturbation_error(j_max, 2, p)
        if er2 > ER2_WARN:
            notes.append(f"second-order level error Er2({j_max}) = {er2:.3g} exceeds {ER2_WARN}")
    return notes


# ---------------------------------------------------------------------------
# basis indexing


@dataclass(frozen=True)
class BasisIndex:
    """Maps coupled-state labels n to the doublet structure.

    n = 0 is the ground state |0g>; n = 2j+1 and n = 2j+2 form doublet j,
    built from |(j+1)g> and |j e>.
    """

    n_doublets: int

    @property
    def size(self) -> int:
        return 2 * self.n_doublets + 1

    @staticmethod
    def doublet_of(n: int) -> int | None:
        if n < 0:
            raise ValueError("labels are non-negative")
        return None if n == 0 else (n - 1) // 2

    @staticmethod
    def is_lower(n: int) -> bool:
        return n > 0 and n % 2 == 1

    @staticmethod
    def labels_of(j: int) -> tuple[int, int]:
        return 2 * j + 1, 2 * j + 2


def product_index(level: int, qubit: str) -> int:
    """Position of |level, qubit> in the product basis (g before e)."""
    return 2 * level + (0 if qubit == "g" else 1)


# ---------------------------------------------------------------------------
# nonlinear oscillator


@dataclass(frozen=True)
class OscStateCoeffs:
    """First-order admixtures |j> = |j>_0 + sum_k a_k |j+k>_0."""

    j: int
    a_m4: float
    a_m2: float
    a_p2: float
    a_p4: float


def osc_energy(j, p: SystemParams):
    j = np.asarray(j, dtype=float)
    out = p.omega * j + 1.5 * p.alpha * j * (j + 1)
    return float(out) if out.ndim == 0 else out


def osc_state_coeffs(j: int, p: SystemParams) -> OscStateCoeffs:
    if j < 0:
        raise ValueError("level index must be >= 0")
    r = p.alpha / p.omega
    a_m4 = math.sqrt((j - 3) * (j - 2) * (j - 1) * j) * r / 16 if j >= 4 else 0.0
    a_m2 = (j - 0.5) * math.sqrt((j - 1) * j) * r / 2 if j >= 2 else 0.0
    a_p2 = -(j + 1.5) * math.sqrt((j + 1) * (j + 2)) * r / 2
    a_p4 = -math.sqrt((j + 1) * (j + 2) * (j + 3) * (j + 4)) * r / 16
    return OscStateCoeffs(j, a_m4, a_m2, a_p2, a_p4)


def osc_state_vector(j: int, p: SystemParams, size: int) -> np.ndarray:
    """|j> expanded in the linear-oscillator basis of dimension `size`."""
    c = osc_state_coeffs(j, p)
    v = np.zeros(size)
    for k, a in ((-4, c.a_m4), (-2, c.a_m2), (0, 1.0), (2, c.a_p2), (4, c.a_p4)):
        if 0 <= j + k < size:
            v[j + k] += a
    return v


def second_order_energy(j, p: SystemParams):
    j = np.asarray(j, dtype=float)
    out = p.alpha**2 * (-34 * j**3 - 51 * j**2 - 59 * j - 21) / (8 * p.omega)
    return float(out) if out.ndim == 0 else out


def perturbation_error(j: int, order: int, p: SystemParams) -> float:
    """Relative size Er^(n)(j) = |E_j^(n)| / (Omega j) of the n-th order shift."""
    if j < 1:
        raise GroundLevelUndefined("Er(j) is undefined at j = 0 since E_0^(0) = 0")
    if order == 1:
        shift = 1.5 * p.alpha * j * (j + 1)
    elif order == 2:
        shift = second_order_energy(j, p)
    else:
        raise ValueError("order must be 1 or 2")
    return abs(shift) / (p.omega * j)


def n1(j, p: SystemParams):
    """<j+1|(B+B^dag)|j> to first order in alpha."""
    j = np.asarray(j, dtype=float)
    out = np.sqrt(j + 1) * (1 - 1.5 * p.alpha * (j + 1) / p.omega)
    return float(out) if out.ndim == 0 else out


def n3(j, p: SystemParams):
    """<j-3|(B+B^dag)|j> to first order in alpha; zero for j < 3."""
    j = np.asarray(j, dtype=float)
    prod = np.clip(j * (j - 1) * (j - 2), 0.0, None)
    out = p.alpha / (4 * p.omega) * np.sqrt(prod)
    return float(out) if out.ndim == 0 else out


def ladder_element(l: int, m: int, p: SystemParams) -> float:
    """<l|(B+B^dag)|m> between nonlinear-oscillator states, first order in alpha."""
    if l < 0 or m < 0:
        raise ValueError("level indices must be >= 0")
    d = abs(l - m)
    if d == 1:
        return n1(min(l, m), p)
    if d == 3:
        return n3(max(l, m), p)
    return 0.0


def ladder_matrix(size: int, p: SystemParams) -> np.ndarray:
    """Dense (size x size) matrix of ladder_element."""
    x = np.zeros((size, size))
    for l in range(size):
        for m in (l + 1, l + 3):
            if m < size:
                x[l, m] = x[m, l] = ladder_element(l, m, p)
    return x


def thermal_weights(p: SystemParams, j_max: int) -> np.ndarray:
    """Boltzmann weights of the oscillator levels 0..j_max, normalised."""
    if j_max < 0:
        raise ValueError("j_max must be >= 0")
    e = osc_energy(np.arange(j_max + 1), p)
    w = np.exp(-p.beta * (e - e[0]))
    return w / w.sum()
