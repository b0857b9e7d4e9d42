"""Matrix elements and initial conditions in the coupled eigenbasis.

The position operator x = B + B^dag enters the bath coupling.  Between
coupled eigenstates its elements are y_nm = <n|x|m> = eff<n| exp(iS) x
exp(-iS) |m>eff; the transformed operator x~ is a short band of closed-form
amplitudes (the L coefficients below), and the doublet rotation by eta_j
turns them into y_nm.

Three corrections to the printed amplitude tables are applied.  They were
found by comparing with a canonical transformation computed numerically
(tests/test_observables.py repeats the comparison):

* L_NO2 carries g and Omega^2: -4 alpha g eps / (Db Omega^2).
* the last numerator term of L_NO1- is -36 Omega^3.
* the alpha-only part of the Delta j = 3 amplitude is -L_NO/6 = alpha/(4 Omega),
  the bare n3 element, for both qubit states.

The printed block expressions for y_nm also use a few level arguments that
do not follow from the rotation: sqrt(j+1) is missing in one term of
y_{2j+1,2j+4}, sqrt((j+2)(j+3)) stands for sqrt((j+1)(j+2)) in the last
terms of y_{2j+2,2j+5} and y_{2j+2,2j+6}, and sqrt(3) stands for sqrt(6) in
y_05 .. y_08.  `position_matrix` uses the corrected blocks; `as_printed=True`
reproduces the literal tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core_model import SystemParams, ladder_matrix, product_index, thermal_weights
from .errors import ResonantDenominator
from .vanvleck import (
    EnergySpectrum,
    brute_force_spectrum,
    detuning_and_angle,
    effective_states,
    quartic_oscillator,
    vanvleck_states,
)

RESONANCE_TOL = 1e-9
# doublets beyond the last retained one that still feed y through the band
BAND_DOUBLETS = 4


# ---------------------------------------------------------------------------
# L coefficients


@dataclass(frozen=True)
class LCoefficients:
    """Amplitudes of x~ = exp(iS) x exp(-iS) between unperturbed product states.

    Level-dependent entries (no0, no1g, no1e) are callables of j.
    `no3_bare` is the alpha-only part of the Delta j = 3 amplitude, which
    enters as [+L_NO3 + no3_bare] for g and [-L_NO3 + no3_bare] for e.
    """

    lo0: float
    no0: Callable[[int], float]
    lo1: float
    no: float
    lo0p: float
    no0p: float
    lo1p: float
    lo1m: float
    no1g: Callable[[int], float]
    no1e: Callable[[int], float]
    no1p: float
    no1m: float
    no2: float
    no2p: float
    no2m: float
    no3: float
    no3p: float
    no3m: float
    no3_bare: float
    as_printed: bool = False


def check_resonances(p: SystemParams) -> None:
    """Raise where Db sits on a multi-photon resonance and the amplitudes diverge."""
    for k in (2, 3, 4):
        if abs(p.delta_b - k * p.omega) < RESONANCE_TOL * p.omega:
            raise ResonantDenominator(f"delta_b = {p.delta_b} lies within 1e-9 Omega of {k} Omega")


def l_coefficients(p: SystemParams, *, as_printed: bool = False) -> LCoefficients:
    """All L amplitudes; `as_printed` selects the uncorrected table entries."""
    check_resonances(p)
    eps, d0, om, a, g, db = p.epsilon, p.delta0, p.omega, p.alpha, p.g, p.delta_b
    g2 = g * g

    def no0(j):
        return -6 * a * g * eps * (2 * j + 1) / (db * om**2)

    def no1g(j):
        num = 14 * (j + 1) * db**3 - om**2 * db * (88 + 92 * j) - (3 + 5 * j) * om * db**2 - (89 * j + 87) * om**3
        return -6 * eps**2 * a * g2 / (db**2 * om**3) - 3 * a * g2 * d0**2 * num / (
            4 * om**2 * db**2 * (om + db) ** 3 * (db - 3 * om)
        )

    def no1e(j):
        num = -14 * (j + 1) * db**3 + (5 * j + 7) * db**2 * om + om**2 * db * (92 * j + 96) + om**3 * (89 * j + 91)
        return -6 * eps**2 * a * g2 / (db**2 * om**3) - 3 * a * g2 * d0**2 * num / (
            4 * db**2 * om**2 * (db - 3 * om) * (db + om) ** 3
        )

    no = -3 * a / (2 * om)
    if as_printed:
        no2 = -4 * a * eps / (db * om)
        last = -36 * db**3
        no3_bare = -no / 2
    else:
        no2 = -4 * a * g * eps / (db * om**2)
        last = -36 * om**3
        no3_bare = -no / 6

    return LCoefficients(
        lo0=g * eps / (db * om),
        no0=no0,
        lo1=g2 * d0**2 * (2 * db + 3 * om) / (2 * om * db**2 * (om + db) ** 2),
        no=no,
        lo0p=g * d0 / (db * (om + db)),
        no0p=-3 * a * g * d0 * (db + 2 * om) / (db * om * (db + om) ** 2),
        lo1p=4 * g2 * eps * d0 / (db**2 * (db**2 + 3 * om * db + 2 * om**2)),
        lo1m=-4 * g2 * eps * d0 / (db**2 * om * (db - 2 * om)),
        no1g=no1g,
        no1e=no1e,
        no1p=-2 * a * g2 * d0 * eps * (4 * db**4 + 29 * om * db**3 + 51 * om**2 * db**2 - 80 * db * om**3 - 124 * om**4)
        / (om**2 * (db - 2 * om) * (db**3 + 3 * db**2 * om + 2 * db * om**2) ** 2),
        no1m=6 * a * g2 * eps * d0 * (9 * db**3 + db**2 * om - 56 * om**2 * db + last)
        / (om**2 * (db**2 + 3 * om * db + 2 * om**2) * (db**2 - 2 * db * om) ** 2),
        no2=no2,
        no2p=3 * a * g / 4 * d0 * (db**2 + 6 * db * om + 13 * om**2) / (om * (db + om) ** 2 * (db**2 + 3 * db * om)),
        no2m=-3 * a * g * d0 / (db * (db - 3 * om) * (db + om)),
        no3=a * g2 * d0**2 * (14 * db**3 + 25 * db**2 * om - 130 * om**2 * db - 261 * om**3)
        / (8 * db**2 * om**2 * (db + om) ** 2 * (db**2 - 9 * om**2)),
        no3p=a * g2 * d0 * eps * (db**3 + 3 * om * db**2 + 74 * om**2 * db + 216 * om**3)
        / (3 * db**2 * om * (db + 2 * om) ** 2 * (db**3 + 8 * db**2 * om + 19 * om**2 * db + 12 * om**3)),
        no3m=-a * g2 * d0 * eps * (24 * db**3 - 239 * om * db**2 + 814 * om**2 * db - 936 * om**3)
        / (3 * db**2 * om**2 * (db - 2 * om) ** 2 * (db**2 - 7 * db * om + 12 * om**2)),
        no3_bare=no3_bare,
        as_printed=as_printed,
    )


# ---------------------------------------------------------------------------
# x~ in the product basis


def _amplitudes(L: LCoefficients, j: int) -> dict:
    """<a|x~|b> for bra level j, keyed (bra qubit, ket level, ket qubit)."""
    s1 = math.sqrt(j + 1)
    s2 = math.sqrt((j + 1) * (j + 2))
    s3 = math.sqrt((j + 1) * (j + 2) * (j + 3))
    return {
        ("g", j, "g"): -2 * (L.lo0 + L.no0(j)),
        ("e", j, "e"): 2 * (L.lo0 + L.no0(j)),
        ("g", j, "e"): L.lo0p + L.no0p * (2 * j + 1),
        ("g", j + 1, "g"): s1 * (1 + (j + 1) * L.no + L.lo1 + L.no1g(j)),
        ("e", j + 1, "e"): s1 * (1 + (j + 1) * L.no - L.lo1 + L.no1e(j)),
        ("g", j + 1, "e"): s1 * (L.lo1p + (j + 1) * L.no1p),
        ("e", j + 1, "g"): s1 * (L.lo1m + (j + 1) * L.no1m),
        ("g", j + 2, "g"): s2 * L.no2,
        ("e", j + 2, "e"): -s2 * L.no2,
        ("g", j + 2, "e"): s2 * L.no2p,
        ("e", j + 2, "g"): s2 * L.no2m,
        ("g", j + 3, "g"): s3 * (L.no3 + L.no3_bare),
        ("e", j + 3, "e"): s3 * (-L.no3 + L.no3_bare),
        ("g", j + 3, "e"): s3 * L.no3p,
        ("e", j + 3, "g"): s3 * L.no3m,
    }


def transformed_position(L: LCoefficients, n_levels: int) -> np.ndarray:
    """Symmetric matrix of x~ over `n_levels` oscillator levels times the qubit."""
    dim = 2 * n_levels
    out = np.zeros((dim, dim))
    for j in range(n_levels):
        for (qa, lb, qb), v in _amplitudes(L, j).items():
            if lb < n_levels:
                a, b = product_index(j, qa), product_index(lb, qb)
                out[a, b] = out[b, a] = v
    return out


# ---------------------------------------------------------------------------
# position matrix


@dataclass(frozen=True)
class PositionMatrix:
    """y_nm over the coupled labels 0 .. 2 n_doublets."""

    y: np.ndarray
    params: SystemParams
    route: str = "blocks"
    asymmetry: float = 0.0

    def __post_init__(self):
        self.y.setflags(write=False)

    @property
    def size(self) -> int:
        return self.y.shape[0]


def _blocks(L: LCoefficients, eta: np.ndarray, n_doublets: int) -> np.ndarray:
    """Upper triangle of y from the doublet block expressions."""
    size = 2 * n_doublets + 1
    big = size + 2 * BAND_DOUBLETS + 2
    y = np.zeros((big, big))
    c = np.cos(eta / 2)
    s = np.sin(eta / 2)
    printed = L.as_printed

    def G1(k):
        return math.sqrt(k + 1) * (1 + (k + 1) * L.no + L.lo1 + L.no1g(k))

    def E1(k):
        return math.sqrt(k + 1) * (1 + (k + 1) * L.no - L.lo1 + L.no1e(k))

    def Q(k):
        return L.lo0p + L.no0p * (2 * k + 1)

    def P1(k):
        return math.sqrt(k + 1) * (L.lo1p + (k + 1) * L.no1p)

    def M1(k):
        return math.sqrt(k + 1) * (L.lo1m + (k + 1) * L.no1m)

    def D3(k, sign):
        return math.sqrt((k + 1) * (k + 2) * (k + 3)) * (sign * L.no3 + L.no3_bare)

    for j in range(n_doublets):
        lo, up = 2 * j + 1, 2 * j + 2
        cj, sj = c[j], s[j]
        c1, s1, c2, s2, c3, s3, c4, s4 = c[j + 1], s[j + 1], c[j + 2], s[j + 2], c[j + 3], s[j + 3], c[j + 4], s[j + 4]
        ce, se = math.cos(eta[j]), math.sin(eta[j])
        A = 2 * L.lo0 + L.no0(j) + L.no0(j + 1)
        r12 = math.sqrt((j + 1) * (j + 2))
        r23 = math.sqrt((j + 2) * (j + 3))
        r123 = math.sqrt((j + 1) * (j + 2) * (j + 3))
        r234 = math.sqrt((j + 2) * (j + 3) * (j + 4))
        e1_bare = E1(j) / math.sqrt(j + 1) if printed else E1(j)
        r_ee2 = r23 if printed else r12

        y[lo, lo] = -L.no0(j + 1) + L.no0(j) - ce * A + se * M1(j)
        y[lo, lo + 1] = A * se + M1(j) * ce
        y[lo, lo + 2] = cj * c1 * G1(j + 1) + cj * s1 * Q(j + 1) + sj * c1 * r12 * L.no2m + sj * s1 * E1(j)
        y[lo, lo + 3] = cj * c1 * Q(j + 1) - cj * s1 * G1(j + 1) + sj * c1 * e1_bare - sj * s1 * r12 * L.no2m
        y[lo, lo + 4] = cj * c2 * r23 * L.no2 + cj * s2 * P1(j + 1) + sj * c2 * r123 * L.no3m - sj * s2 * r12 * L.no2
        y[lo, lo + 5] = -cj * s2 * r23 * L.no2 + cj * c2 * P1(j + 1) - sj * s2 * r123 * L.no3m - sj * c2 * r12 * L.no2
        y[lo, lo + 6] = cj * c3 * D3(j + 1, 1) + cj * s3 * r23 * L.no2p + sj * s3 * D3(j, -1)
        y[lo, lo + 7] = -cj * s3 * D3(j + 1, 1) + cj * c3 * r23 * L.no2p + sj * c3 * D3(j, -1)
        y[lo, lo + 8] = cj * s4 * r234 * L.no3p
        y[lo, lo + 9] = cj * c4 * r234 * L.no3p

        y[up, up] = L.no0(j) - L.no0(j + 1) + A * ce - se * M1(j)
        y[up, up + 1] = -sj * c1 * G1(j + 1) - sj * s1 * Q(j + 1) + cj * c1 * r12 * L.no2m + cj * s1 * E1(j)
        y[up, up + 2] = sj * s1 * G1(j + 1) - sj * c1 * Q(j + 1) - cj * s1 * r12 * L.no2m + cj * c1 * E1(j)
        y[up, up + 3] = -sj * c2 * r23 * L.no2 - sj * s2 * P1(j + 1) + cj * c2 * r123 * L.no3m - cj * s2 * r_ee2 * L.no2
        y[up, up + 4] = sj * s2 * r23 * L.no2 - sj * c2 * P1(j + 1) - cj * s2 * r123 * L.no3m - cj * c2 * r_ee2 * L.no2
        y[up, up + 5] = -sj * c3 * D3(j + 1, 1) - sj * s3 * r23 * L.no2p + cj * s3 * D3(j, -1)
        y[up, up + 6] = sj * s3 * D3(j + 1, 1) - sj * c3 * r23 * L.no2p + cj * c3 * D3(j, -1)
        y[up, up + 7] = -sj * s4 * r234 * L.no3p
        y[up, up + 8] = -sj * c4 * r234 * L.no3p

    # ground-state row
    r6 = math.sqrt(3.0) if printed else math.sqrt(6.0)
    d3g0 = (L.no3 + L.no3_bare) * r6
    y[0, 0] = -2 * (L.lo0 + L.no0(0))
    y[0, 1] = c[0] * G1(0) + s[0] * Q(0)
    y[0, 2] = -s[0] * G1(0) + c[0] * Q(0)
    y[0, 3] = c[1] * math.sqrt(2.0) * L.no2 + s[1] * P1(0)
    y[0, 4] = -s[1] * math.sqrt(2.0) * L.no2 + c[1] * P1(0)
    y[0, 5] = c[2] * d3g0 + s[2] * math.sqrt(2.0) * L.no2p
    y[0, 6] = -s[2] * d3g0 + c[2] * math.sqrt(2.0) * L.no2p
    y[0, 7] = s[3] * r6 * L.no3p
    y[0, 8] = c[3] * r6 * L.no3p
    return y[:size, :size]


def doublet_angles(p: SystemParams, n: int) -> np.ndarray:
    return np.atleast_1d(np.asarray(detuning_and_angle(np.arange(n), p)[1], dtype=float))


def position_matrix(p: SystemParams, n_doublets: int, *, as_printed: bool = False) -> PositionMatrix:
    """y_nm from the closed-form doublet blocks, symmetrised.

    Only the upper triangle is defined by the blocks, so the symmetrisation
    mirrors it; entries beyond the band (|n - m| > 9) are zero.
    """
    if n_doublets < 1:
        raise ValueError("n_doublets must be >= 1")
    L = l_coefficients(p, as_printed=as_printed)
    eta = doublet_angles(p, n_doublets + BAND_DOUBLETS + 1)
    upper = np.triu(_blocks(L, eta, n_doublets))
    y = upper + np.triu(upper, 1).T
    return PositionMatrix(y, p, "printed-blocks" if as_printed else "blocks", 0.0)


def rotated_position_matrix(p: SystemParams, n_doublets: int, *, as_printed: bool = False) -> PositionMatrix:
    """y = eff^T x~ eff, the same quantity built by rotating the x~ matrix."""
    L = l_coefficients(p, as_printed=as_printed)
    n_levels = n_doublets + 1
    eff = effective_states(p, n_doublets, n_levels)
    raw = eff.T @ transformed_position(L, n_levels) @ eff
    asym = float(np.max(np.abs(raw - raw.T)))
    return PositionMatrix(0.5 * (raw + raw.T), p, "rotated", asym)


def oracle_position_matrix(
    p: SystemParams, n_doublets: int, *, quartic: str = "exact", n_trunc: int = 40
) -> PositionMatrix:
    """<n|x|m> from brute-force eigenvectors matched to the perturbative labels."""
    ref = vanvleck_states(p, n_doublets)
    spec = brute_force_spectrum(p, n_trunc, quartic=quartic, reference=ref)
    if quartic == "exact":
        x = quartic_oscillator(p, n_trunc)[1]
    else:
        x = ladder_matrix(n_trunc, p)
    big = np.kron(x, np.eye(2))
    y = spec.states.T @ big @ spec.states
    return PositionMatrix(0.5 * (y + y.T), p, f"oracle-{quartic}", float(np.max(np.abs(y - y.T))))


# ---------------------------------------------------------------------------
# density matrix and P(t) weights


@dataclass(frozen=True)
class DensityMatrix:
    rho: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.rho.setflags(write=False)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.rho))

    @property
    def populations(self) -> np.ndarray:
        return self.rho.diagonal().real.copy()


def _qubit_ops(p: SystemParams):
    c, s = math.cos(p.theta / 2), math.sin(p.theta / 2)
    r = np.array([c, s])
    # sigma_z of the localised basis, |R><R| - |L><L|, written in {g, e}
    z = np.array([[p.cos_theta, p.sin_theta], [p.sin_theta, -p.cos_theta]])
    return r, z


def _states(p: SystemParams, n_doublets: int, spec: EnergySpectrum | None) -> EnergySpectrum:
    spec = vanvleck_states(p, n_doublets) if spec is None else spec
    if spec.states is None:
        raise ValueError("spectrum carries no eigenvectors")
    return spec


def initial_density(
    p: SystemParams, n_doublets: int, j_cut: int = 1, spec: EnergySpectrum | None = None
) -> DensityMatrix:
    """rho_nm(0) for the qubit in |R> and a thermal oscillator, levels j <= j_cut.

    The oscillator sum is truncated at j_cut and the result divided by its
    trace, so that Tr rho = 1 holds exactly for the retained states.
    """
    spec = _states(p, n_doublets, spec)
    if j_cut < 0:
        raise ValueError("j_cut must be >= 0")
    n_levels = spec.states.shape[0] // 2
    if j_cut >= n_levels:
        raise ValueError(f"j_cut = {j_cut} exceeds the {n_levels} oscillator levels of the states")
    r, _ = _qubit_ops(p)
    w = thermal_weights(p, j_cut)
    rho = np.zeros((spec.size, spec.size))
    for j, wj in enumerate(w):
        psi = np.zeros(2 * n_levels)
        psi[2 * j : 2 * j + 2] = r
        amp = spec.states.T @ psi
        rho += wj * np.outer(amp, amp)
    rho /= np.trace(rho)
    return DensityMatrix(rho.astype(complex))


@dataclass(frozen=True)
class WeightTable:
    """P(t) = sum_n w_nn rho_nn + sum_{n>m} w_nm Re rho_nm.

    `offdiag` is the full symmetric matrix of w_nm (zero diagonal); only
    n > m enters P.  `p_nm0` holds w_nm Re rho_nm(0) on the lower triangle.
    """

    diag: np.ndarray
    offdiag: np.ndarray
    p0: float
    p_inf: float
    p_nm0: np.ndarray

    def evaluate(self, rho: np.ndarray) -> float:
        lower = np.tril(self.offdiag, -1)
        return float(self.diag @ rho.diagonal().real + np.sum(lower * rho.real))


def sigma_z_matrix(p: SystemParams, spec: EnergySpectrum) -> np.ndarray:
    """<n| sigma_z |m> over the coupled eigenstates."""
    n_levels = spec.states.shape[0] // 2
    _, z = _qubit_ops(p)
    big = np.kron(np.eye(n_levels), z)
    return spec.states.T @ big @ spec.states


def p_infinity(p: SystemParams, spec: EnergySpectrum) -> float:
    """Long-time P for a Boltzmann distribution over the retained levels."""
    z = sigma_z_matrix(p, spec)
    e = spec.energies
    w = np.exp(-p.beta * (e - e.min()))
    return float(z.diagonal() @ (w / w.sum()))


def weight_table(p: SystemParams, spec: EnergySpectrum, rho0: DensityMatrix) -> WeightTable:
    z = sigma_z_matrix(p, spec)
    diag = z.diagonal().copy()
    off = 2 * (z - np.diag(diag))
    rho = rho0.rho
    p0 = float(diag @ rho.diagonal().real)
    p_nm0 = np.tril(off, -1) * rho.real
    return WeightTable(diag, off, p0, p_infinity(p, spec), p_nm0)
