"""Analytic approximations to the master equation.

FSA   every coherence decays with its own rate, Gamma_nm = -pi L_nm,nm.
LTA   FSA populations of the five lowest states with the upward rates and
      the O(g^3) rates L_11,22, L_33,44 dropped; closed-form solution.
SEA   long-time relaxation through the smallest nonzero eigenvalue of the
      three-level population matrix.
PSA   coherence pairs (01)/(02), (13)/(23), (14)/(24), which rotate at
      nearly equal frequencies, are kept coupled.

The LTA populations sigma_11 and sigma_22 are written in the form that
solves the rate equations: the sigma_33 and sigma_44 feeding terms enter
with exp(-pi (L_11,33 + L_22,33) t), and sigma_11^0 with a positive sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .core_model import SystemParams
from .errors import DegenerateRateDenominator, ValidationError, ZeroDiscriminant
from .observables import DensityMatrix, WeightTable
from .redfield import BathKernel, RedfieldTensor, redfield_tensor
from .spectra import SpectrumSeries, TimeSeries
from .vanvleck import EnergySpectrum

PSA_PAIRS = (((0, 1), (0, 2)), ((1, 3), (2, 3)), ((1, 4), (2, 4)))
INDEPENDENT = ((0, 1), (0, 2), (1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4))
O_G3 = ((1, 2), (3, 4))
O_G4 = ((0, 3), (0, 4))  # direct decay of the second doublet to the ground state
N_LTA = 5
DENOM_TOL = 1e-12
R_TOL = 1e-14
LTA_BETA_MIN = 5.0  # in units of 1/Omega


# ---------------------------------------------------------------------------
# rates


@dataclass(frozen=True)
class RateSet:
    """Population rates, dephasing coefficients and PSA cross terms.

    `down[(j, k)]` = L_jj,kk and `up[(j, k)]` = L_kk,jj for j < k;
    `dephasing[(n, m)]` = L_nm,nm; `cross[((n, m), (j, k))]` = L_nm,jk.
    """

    down: dict
    up: dict
    dephasing: dict
    cross: dict
    omega: np.ndarray
    g3_flagged: tuple = O_G3

    def population_matrix(self, n: int, *, drop_up: bool = False, drop: tuple = ()) -> np.ndarray:
        """Rate matrix M with d sigma / dt = pi M sigma over levels < n."""
        m = np.zeros((n, n))
        for (j, k), v in self.down.items():
            if k < n and (j, k) not in drop:
                m[j, k] += v
                m[k, k] -= v
        if not drop_up:
            for (j, k), v in self.up.items():
                if k < n and (j, k) not in drop:
                    m[k, j] += v
                    m[j, j] -= v
        return m

    def without(self, *pairs) -> "RateSet":
        """Copy with the named population rates (both directions) set to zero."""
        down = {k: (0.0 if k in pairs else v) for k, v in self.down.items()}
        up = {k: (0.0 if k in pairs else v) for k, v in self.up.items()}
        return RateSet(down, up, dict(self.dephasing), dict(self.cross), self.omega, self.g3_flagged)

    def without_cross(self) -> "RateSet":
        return RateSet(dict(self.down), dict(self.up), dict(self.dephasing), {}, self.omega, self.g3_flagged)


def rate_set(tensor: RedfieldTensor, n_levels: int | None = None) -> RateSet:
    """Collect the rates among the lowest `n_levels` states of `tensor`."""
    d = tensor.size if n_levels is None else min(n_levels, tensor.size)
    L = tensor.L
    down, up = {}, {}
    for j in range(d):
        for k in range(j + 1, d):
            down[(j, k)] = float(L[j, j, k, k])
            up[(j, k)] = float(L[k, k, j, j])
    deph = {(n, m): float(L[n, m, n, m]) for n in range(d) for m in range(n + 1, d)}
    cross = {}
    for a, b in PSA_PAIRS:
        if max(a + b) < d:
            cross[(a, b)] = float(L[a + b])
            cross[(b, a)] = float(L[b + a])
    return RateSet(down, up, deph, cross, tensor.omega[:d, :d].copy())


def rates_for(p: SystemParams, spec: EnergySpectrum, y) -> RateSet:
    """RateSet of the Redfield tensor built from (p, spec, y)."""
    return rate_set(redfield_tensor(p, spec, getattr(y, "y", y)))


def _as_rates(obj, spec=None, y=None) -> RateSet:
    if isinstance(obj, RateSet):
        return obj
    if isinstance(obj, RedfieldTensor):
        return rate_set(obj)
    if spec is None or y is None:
        raise TypeError("expected a RateSet, a RedfieldTensor, or (params, spec, y)")
    return rates_for(obj, spec, y)


def low_temperature_dephasing(y: np.ndarray, spec: EnergySpectrum, kernel: BathKernel) -> dict:
    """L_nm,nm among the five lowest states keeping only downward rates.

    L_nm,nm = (kappa/beta)(2 y_nn y_mm - y_nn^2 - y_mm^2)
              - (1/2) sum of the downward rates out of n and out of m.
    """
    om = spec.omega_matrix()
    c0 = kernel.kappa / kernel.beta

    def out_rate(n):
        return sum(2 * kernel.correlation(om[k, n]) * y[k, n] ** 2 for k in range(n) if (n, k) not in ((2, 1), (4, 3)))

    res = {}
    for n in range(N_LTA):
        for m in range(n + 1, N_LTA):
            res[(n, m)] = float(c0 * (2 * y[n, n] * y[m, m] - y[n, n] ** 2 - y[m, m] ** 2) - 0.5 * (out_rate(n) + out_rate(m)))
    return res


def fsa_dephasing(rates, spec: EnergySpectrum | None = None, y=None) -> dict:
    """Gamma_nm = -pi L_nm,nm, from a RateSet or from (params, spec, y)."""
    rates = _as_rates(rates, spec, y)
    return {k: -math.pi * v for k, v in rates.dephasing.items()}


# ---------------------------------------------------------------------------
# LTA


def lta_matrix(rates: RateSet) -> np.ndarray:
    """Five-level low-temperature rate matrix (upward, O(g^3) and O(g^4) rates dropped)."""
    return rates.population_matrix(N_LTA, drop_up=True, drop=O_G3 + O_G4)


def lta_populations(sigma0, rates: RateSet, t) -> np.ndarray:
    """sigma_nn(t), n = 0..4, in closed form; shape (len(t), 5)."""
    s0 = np.asarray(sigma0, dtype=float)[:N_LTA]
    t = np.atleast_1d(np.asarray(t, dtype=float))
    d = rates.down
    b1, b2 = d[(0, 1)], d[(0, 2)]
    l13, l23, l14, l24 = d[(1, 3)], d[(2, 3)], d[(1, 4)], d[(2, 4)]
    a3, a4 = l13 + l23, l14 + l24
    denoms = {"a3-b1": a3 - b1, "a4-b1": a4 - b1, "a3-b2": a3 - b2, "a4-b2": a4 - b2}
    for name, v in denoms.items():
        if abs(v) < DENOM_TOL:
            raise DegenerateRateDenominator(f"rate denominator {name} = {v:.3g}")
    e = lambda r: np.exp(-math.pi * r * t)
    k13, k14 = l13 / (a3 - b1), l14 / (a4 - b1)
    k23, k24 = l23 / (a3 - b2), l24 / (a4 - b2)
    s33 = e(a3) * s0[3]
    s44 = e(a4) * s0[4]
    s11 = e(b1) * (s0[1] + s0[3] * k13 + s0[4] * k14) - e(a3) * s0[3] * k13 - e(a4) * s0[4] * k14
    s22 = e(b2) * (s0[2] + s0[3] * k23 + s0[4] * k24) - e(a3) * s0[3] * k23 - e(a4) * s0[4] * k24
    s00 = (
        s0.sum()
        - e(b1) * (s0[1] + s0[3] * k13 + s0[4] * k14)
        - e(b2) * (s0[2] + s0[3] * k23 + s0[4] * k24)
        + e(a3) * s0[3] * ((b2 - l13) / (a3 - b2) + k13)
        + e(a4) * s0[4] * ((b2 - l14) / (a4 - b2) + k14)
    )
    return np.column_stack([s00, s11, s22, s33, s44])


# ---------------------------------------------------------------------------
# SEA


def sea_matrix(rates: RateSet) -> np.ndarray:
    """Three-level population matrix including L_11,22 and L_22,11."""
    return rates.population_matrix(3)


def sea_rate(rates, spec: EnergySpectrum | None = None, y=None) -> tuple[float, float]:
    """(Gamma_r, second eigenvalue) from the quadratic of the 3x3 rate matrix.

    Accepts a RateSet or (params, spec, y).
    """
    rates = _as_rates(rates, spec, y)
    d, u = rates.down, rates.up
    a, b, dd = d[(0, 1)], d[(0, 2)], d[(1, 2)]
    c, e, f = u[(0, 1)], u[(0, 2)], u[(1, 2)]
    total = a + b + c + dd + e + f
    prod = a * b + c * b + a * dd + c * dd + a * e + dd * e + f * b + c * f + e * f
    root = math.sqrt(max(total**2 - 4 * prod, 0.0))
    return 0.5 * math.pi * (total - root), 0.5 * math.pi * (total + root)


def sea_pt(
    rates: RateSet, spec: EnergySpectrum, weights: WeightTable, t_grid, params: SystemParams | None = None
) -> TimeSeries:
    """P(t) = (p0 - p_inf) e^{-Gamma_r t} + p_inf + sum p_nm(0) e^{-Gamma_nm t} cos(w_nm t)."""
    t = np.asarray(t_grid, dtype=float)
    gr, _ = sea_rate(rates)
    gam = fsa_dephasing(rates)
    om = spec.omega_matrix()
    vals = (weights.p0 - weights.p_inf) * np.exp(-gr * t) + weights.p_inf
    d = weights.p_nm0.shape[0]
    for n in range(d):
        for m in range(n):
            pnm = weights.p_nm0[n, m]
            if pnm == 0.0:
                continue
            vals = vals + pnm * np.exp(-gam.get((m, n), 0.0) * t) * np.cos(om[n, m] * t)
    return TimeSeries(float(t[0]), float(t[1] - t[0]), vals, params, "SEA")


def sea_fourier(
    rates: RateSet, spec: EnergySpectrum, weights: WeightTable, omega_grid, params: SystemParams | None = None
) -> SpectrumSeries:
    """Analytic F(w) of sea_pt; the 2 pi p_inf delta(w) term is reported separately."""
    w = np.asarray(omega_grid, dtype=float)
    gr, _ = sea_rate(rates)
    gam = fsa_dephasing(rates)
    om = spec.omega_matrix()
    if gr <= 0 and weights.p0 != weights.p_inf:
        raise ValidationError("SEA spectrum needs gamma_r > 0 (kappa > 0) unless p0 = p_inf")
    f = 2 * (weights.p0 - weights.p_inf) * gr / (w**2 + gr**2) if gr > 0 else np.zeros_like(w)
    d = weights.p_nm0.shape[0]
    for n in range(d):
        for m in range(n):
            pnm = weights.p_nm0[n, m]
            if pnm == 0.0:
                continue
            g, w0 = gam[(m, n)], om[n, m]
            if g <= 0:
                raise ValidationError(f"line ({n},{m}) has zero width; SEA spectrum needs kappa > 0")
            f = f + pnm * g * (1 / (g**2 + (w0 + w) ** 2) + 1 / (g**2 + (w0 - w) ** 2))
    return SpectrumSeries(w, f, 2 * math.pi * weights.p_inf, "SEA", {"gamma_r": gr})


# ---------------------------------------------------------------------------
# PSA


@dataclass(frozen=True)
class PsaPair:
    """Two-mode solution for the coherence pair (nm), (jk)."""

    nm: tuple
    jk: tuple
    lam_plus: complex
    lam_minus: complex
    R: complex
    c_plus: complex
    c_minus: complex
    cv_plus: complex
    cv_minus: complex

    @property
    def v_plus(self) -> complex:
        return self.cv_plus / self.c_plus

    @property
    def v_minus(self) -> complex:
        return self.cv_minus / self.c_minus

    def evaluate(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        ep, em = np.exp(self.lam_plus * t), np.exp(self.lam_minus * t)
        return self.cv_plus * ep + self.cv_minus * em, self.c_plus * ep + self.c_minus * em


def psa_pair(nm, jk, rates: RateSet, rho0: np.ndarray) -> PsaPair:
    """lambda, R and amplitudes; the products c v are used so that vanishing
    cross terms reduce smoothly to the single-exponential FSA solution."""
    l_nm = rates.dephasing[nm]
    l_jk = rates.dephasing[jk]
    l_x = rates.cross.get((nm, jk), 0.0)
    l_y = rates.cross.get((jk, nm), 0.0)
    w_nm = rates.omega[nm]
    w_jk = rates.omega[jk]
    dd = math.pi * (l_nm - l_jk) - 1j * (w_nm - w_jk)
    r = np.sqrt(complex(dd**2 + 4 * math.pi**2 * l_x * l_y))
    if abs(r) < R_TOL:
        raise ZeroDiscriminant(f"R vanishes for the pair {nm}/{jk}")
    s = math.pi * (l_nm + l_jk) - 1j * (w_nm + w_jk)
    lp, lm = 0.5 * (s + r), 0.5 * (s - r)
    a, b = complex(rho0[nm]), complex(rho0[jk])
    cp = (2 * math.pi * l_y * a - b * (dd - r)) / (2 * r)
    cm = -(2 * math.pi * l_y * a - b * (dd + r)) / (2 * r)
    cvp = (a * (dd + r) + 2 * math.pi * l_x * b) / (2 * r)
    cvm = -(a * (dd - r) + 2 * math.pi * l_x * b) / (2 * r)
    return PsaPair(nm, jk, complex(lp), complex(lm), complex(r), complex(cp), complex(cm), complex(cvp), complex(cvm))


def psa_offdiagonal(rho0, rates: RateSet, t_grid) -> dict:
    """rho_nm(t) for the six coupled coherences, keyed by (n, m) with n < m."""
    rho = np.asarray(getattr(rho0, "rho", rho0))
    t = np.asarray(t_grid, dtype=float)
    out = {}
    for nm, jk in PSA_PAIRS:
        if max(nm + jk) >= rho.shape[0]:
            continue
        pair = psa_pair(nm, jk, rates, rho)
        out[nm], out[jk] = pair.evaluate(t)
    return out


def _fsa_coherence(rho, rates: RateSet, nm, t):
    return rho[nm] * np.exp((math.pi * rates.dephasing[nm] - 1j * rates.omega[nm]) * t)


def fsa_populations(sigma0, rates: RateSet, t, n: int) -> np.ndarray:
    """Numerical solution of the full FSA population equations over n levels."""
    m = math.pi * rates.population_matrix(n)
    sol = solve_ivp(lambda _, x: m @ x, (t[0], t[-1]), np.asarray(sigma0, float)[:n], t_eval=t, method="DOP853",
                    rtol=1e-11, atol=1e-13)
    return sol.y.T


def _assemble(pops: np.ndarray, coh: dict, weights: WeightTable) -> np.ndarray:
    vals = pops @ weights.diag[: pops.shape[1]]
    for (n, m), series in coh.items():
        vals = vals + weights.offdiag[m, n] * series.real
    return vals


def _lta_or_numeric(sigma0, rates: RateSet, t: np.ndarray) -> np.ndarray:
    """LTA closed forms, or the same 5-level matrix integrated when a denominator vanishes."""
    try:
        return lta_populations(sigma0, rates, t)
    except DegenerateRateDenominator:
        m = math.pi * lta_matrix(rates)
        sol = solve_ivp(lambda _, x: m @ x, (t[0], t[-1]), np.asarray(sigma0, float)[:N_LTA], t_eval=t,
                        method="DOP853", rtol=1e-11, atol=1e-13)
        return sol.y.T


def _populations(p: SystemParams, rho: np.ndarray, rates: RateSet, t: np.ndarray) -> np.ndarray:
    sigma0 = rho.diagonal().real
    if p.beta * p.omega >= LTA_BETA_MIN:
        return _lta_or_numeric(sigma0, rates, t)
    return fsa_populations(sigma0, rates, t, min(rho.shape[0], len(sigma0)))


def lta_pt(p: SystemParams, rho0, rates: RateSet, weights: WeightTable, t_grid) -> TimeSeries:
    """LTA populations with FSA coherences."""
    rho = np.asarray(getattr(rho0, "rho", rho0))
    t = np.asarray(t_grid, dtype=float)
    pops = _lta_or_numeric(rho.diagonal().real, rates, t)
    d = rho.shape[0]
    coh = {(n, m): _fsa_coherence(rho, rates, (n, m), t) for n in range(d) for m in range(n + 1, d)}
    return TimeSeries(float(t[0]), float(t[1] - t[0]), _assemble(pops, coh, weights), p, "LTA")


def psa_pt(p: SystemParams, rho0, rates: RateSet, weights: WeightTable, t_grid) -> TimeSeries:
    """Populations from the LTA (or the full FSA equations when beta Omega < 5),
    PSA pairs for the six quasi-degenerate coherences, FSA for the rest."""
    rho = np.asarray(getattr(rho0, "rho", rho0))
    t = np.asarray(t_grid, dtype=float)
    pops = _populations(p, rho, rates, t)
    d = rho.shape[0]
    coh = {(n, m): _fsa_coherence(rho, rates, (n, m), t) for n in range(d) for m in range(n + 1, d)}
    coh.update(psa_offdiagonal(rho, rates, t))
    return TimeSeries(float(t[0]), float(t[1] - t[0]), _assemble(pops, coh, weights), p, "PSA")


def nondissipative_pt(p: SystemParams, spec: EnergySpectrum, weights: WeightTable, t_grid) -> TimeSeries:
    """P(t) = p0 + sum_{n>m} p_nm(0) cos(w_nm t)."""
    t = np.asarray(t_grid, dtype=float)
    om = spec.omega_matrix()
    vals = np.full_like(t, weights.p0)
    n_idx, m_idx = np.nonzero(np.tril(weights.p_nm0, -1))
    for n, m in zip(n_idx, m_idx):
        vals = vals + weights.p_nm0[n, m] * np.cos(om[n, m] * t)
    return TimeSeries(float(t[0]), float(t[1] - t[0]), vals, p, "non-dissipative")
