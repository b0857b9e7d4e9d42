import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.optimize import minimize_scalar

from qnodyn.approx import (
    PSA_PAIRS,
    RateSet,
    fsa_dephasing,
    fsa_populations,
    low_temperature_dephasing,
    lta_matrix,
    lta_populations,
    lta_pt,
    nondissipative_pt,
    psa_offdiagonal,
    psa_pair,
    psa_pt,
    rates_for,
    sea_fourier,
    sea_matrix,
    sea_pt,
    sea_rate,
)
from qnodyn.core_model import SystemParams
from qnodyn.errors import DegenerateRateDenominator, ZeroDiscriminant
from qnodyn.observables import initial_density, position_matrix, weight_table
from qnodyn.redfield import BathKernel, redfield_tensor
from qnodyn.vanvleck import vanvleck_states

FIG3 = SystemParams(epsilon=0.5, delta0=1.0, omega=1.0, alpha=0.02, g=0.18, kappa=0.0154, beta=10.0)
FIG4 = SystemParams(epsilon=0.0, delta0=1.0, omega=1.0, alpha=0.02, g=0.18, kappa=0.0154, beta=10.0)


def setup(p, nd=4):
    spec = vanvleck_states(p, nd)
    y = position_matrix(p, nd).y
    rates = rates_for(p, spec, y)
    rho0 = initial_density(p, nd, spec=spec)
    return spec, y, rates, rho0, weight_table(p, spec, rho0)


@pytest.fixture(scope="module")
def fig4():
    return setup(FIG4)


@pytest.fixture(scope="module")
def biased():
    return setup(FIG3.with_(omega=1.05))


def test_rate_set_detailed_balance(biased):
    spec, y, rates, *_ = biased
    om = spec.omega_matrix()
    for (j, k), v in rates.down.items():
        assert rates.up[(j, k)] == pytest.approx(v + 2 * FIG3.kappa * om[j, k] * y[j, k] ** 2, abs=1e-12)


def test_rate_set_flags_third_order_rates(fig4):
    rates = fig4[2]
    assert ((1, 2), (3, 4)) == rates.g3_flagged
    assert abs(rates.down[(1, 2)]) < 0.1 * abs(rates.down[(0, 1)])


def test_fsa_dephasing_examples(fig4, biased):
    spec, y, rates, *_ = fig4
    zero = rates_for(FIG4.with_(kappa=0.0), spec, y)
    assert all(v == 0.0 for v in fsa_dephasing(zero).values())
    # at eps = 0 the low-temperature form of L_01,01 is -L_00,11 / 2
    lt = low_temperature_dephasing(y, spec, BathKernel(FIG4.kappa, FIG4.beta))
    assert lt[(0, 1)] == pytest.approx(-0.5 * rates.down[(0, 1)], rel=1e-12)
    gam = fsa_dephasing(biased[2])
    assert gam[(0, 1)] > 0
    assert all(gam[k] >= 0 for k in [(0, 1), (0, 2), (1, 3), (1, 4), (2, 3), (2, 4)])


def test_fsa_dephasing_from_params_matches_rateset(biased):
    spec, y, rates, *_ = biased
    p = FIG3.with_(omega=1.05)
    assert fsa_dephasing(p, spec, y) == fsa_dephasing(rates)


@pytest.mark.parametrize("p", [FIG4, FIG3.with_(omega=1.05)], ids=["unbiased", "biased"])
def test_low_temperature_dephasing_matches_tensor(p):
    # the low-temperature forms equal the tensor up to half the omitted transfer rates
    # (all upward rates plus the O(g^3) rates L_11,22 and L_33,44) out of n and m
    spec = vanvleck_states(p, 4)
    y = position_matrix(p, 4).y
    L = redfield_tensor(p, spec, y).L
    d = spec.size
    lt = low_temperature_dephasing(y, spec, BathKernel(p.kappa, p.beta))

    def omitted(n):
        return sum(L[k, k, n, n] for k in range(d) if k != n and (k > n or (n, k) in ((2, 1), (4, 3))))

    for (n, m), v in lt.items():
        assert v - 0.5 * (omitted(n) + omitted(m)) == pytest.approx(L[n, m, n, m], abs=1e-15)


def test_lta_initial_value_and_limit(biased):
    rates = biased[2]
    s0 = np.array([0.3, 0.25, 0.2, 0.15, 0.1])
    out = lta_populations(s0, rates, [0.0, 1e5])
    assert out[0] == pytest.approx(s0, abs=1e-14)
    assert out[1] == pytest.approx([1.0, 0, 0, 0, 0], abs=1e-12)


def test_lta_matches_matrix_exponential(biased):
    rates = biased[2]
    s0 = np.array([0.3, 0.25, 0.2, 0.15, 0.1])
    m = math.pi * lta_matrix(rates)
    t = np.linspace(0, 200, 41)
    closed = lta_populations(s0, rates, t)
    direct = np.array([expm(m * ti) @ s0 for ti in t])
    assert np.abs(closed - direct).max() < 1e-9


def test_lta_third_level_single_exponential(biased):
    rates = biased[2]
    d = rates.down
    t = np.linspace(0, 50, 11)
    s = lta_populations([0, 0, 0, 1.0, 0], rates, t)[:, 3]
    assert s == pytest.approx(np.exp(-math.pi * (d[(1, 3)] + d[(2, 3)]) * t), rel=1e-13)


def test_lta_drops_direct_decay_to_ground(biased):
    m = lta_matrix(biased[2])
    assert m[0, 3] == m[0, 4] == 0.0
    assert np.abs(m.sum(axis=0)).max() < 1e-15


def test_lta_degenerate_denominator(biased):
    rates = biased[2]
    down = dict(rates.down)
    down[(0, 1)] = down[(1, 3)] + down[(2, 3)]
    bad = RateSet(down, rates.up, rates.dephasing, rates.cross, rates.omega)
    with pytest.raises(DegenerateRateDenominator):
        lta_populations(np.ones(5) / 5, bad, [0.0, 1.0])


@pytest.mark.parametrize("omega", [0.9, 1.0, 1.075, 1.2])
def test_sea_rate_matches_eigensolver(omega):
    p = FIG3.with_(omega=omega)
    spec, y, rates, *_ = setup(p, 2)
    ev = np.sort(np.abs(np.linalg.eigvals(-math.pi * sea_matrix(rates)).real))
    gr, second = sea_rate(rates)
    assert ev[0] == pytest.approx(0.0, abs=1e-12)
    assert gr == pytest.approx(ev[1], abs=1e-10)
    assert second == pytest.approx(ev[2], abs=1e-10)
    assert sea_rate(p, spec, y) == (gr, second)


def test_sea_zero_damping(fig4):
    spec, y, *_ = fig4
    assert sea_rate(FIG4.with_(kappa=0.0), spec, y)[0] == 0.0


def _gap(rates):
    gr, second = sea_rate(rates)
    return second - gr


def test_sea_splitting_at_resonance():
    def gap_at(om, zero):
        spec, y, rates, *_ = setup(FIG3.with_(omega=om), 1)
        return _gap(rates.without((1, 2)) if zero else rates)

    full = minimize_scalar(lambda om: gap_at(om, False), bounds=(1.0, 1.15), method="bounded", options={"xatol": 1e-7})
    zeroed = minimize_scalar(lambda om: gap_at(om, True), bounds=(1.0, 1.15), method="bounded", options={"xatol": 1e-7})
    assert full.fun > 1e-4
    assert zeroed.fun < 1e-5


def test_sea_pt_limits(biased):
    spec, y, rates, rho0, wt = biased
    p = FIG3.with_(omega=1.05)
    t = np.array([0.0, 1e5])
    pt = sea_pt(rates, spec, wt, t, p)
    assert pt.values[0] == pytest.approx(wt.p0 + np.tril(wt.p_nm0, -1).sum(), abs=1e-14)
    assert pt.values[1] == pytest.approx(wt.p_inf, abs=1e-12)


def test_psa_initial_identity(biased):
    spec, y, rates, rho0, _ = biased
    rho = rho0.rho
    for nm, jk in PSA_PAIRS:
        pair = psa_pair(nm, jk, rates, rho)
        assert pair.cv_plus + pair.cv_minus == pytest.approx(rho[nm], abs=1e-14)
        assert pair.c_plus + pair.c_minus == pytest.approx(rho[jk], abs=1e-14)
        assert pair.lam_plus.real <= 0 and pair.lam_minus.real <= 0


def test_psa_reduces_to_fsa(biased):
    spec, y, rates, rho0, _ = biased
    rho = rho0.rho
    plain = rates.without_cross()
    t = np.linspace(0, 150, 301)
    coh = psa_offdiagonal(rho, plain, t)
    for nm, jk in PSA_PAIRS:
        pair = psa_pair(nm, jk, plain, rho)
        modes = sorted([pair.lam_plus, pair.lam_minus], key=lambda z: z.imag)
        fsa = sorted([math.pi * rates.dephasing[k] - 1j * rates.omega[k] for k in (nm, jk)], key=lambda z: z.imag)
        assert modes == pytest.approx(fsa, abs=1e-14)
        for k in (nm, jk):
            fsa_t = rho[k] * np.exp((math.pi * rates.dephasing[k] - 1j * rates.omega[k]) * t)
            assert np.abs(coh[k] - fsa_t).max() < 1e-13


def test_psa_exceptional_point(biased):
    spec, y, rates, rho0, _ = biased
    nm, jk = PSA_PAIRS[0]
    deph = dict(rates.dephasing)
    deph[jk] = deph[nm]
    om = rates.omega.copy()
    om[jk] = om[nm]
    bad = RateSet(rates.down, rates.up, deph, {}, om)
    with pytest.raises(ZeroDiscriminant):
        psa_pair(nm, jk, bad, rho0.rho)


def test_zero_damping_schemes_reduce_to_nondissipative(fig4):
    spec, y, _, rho0, wt = fig4
    p = FIG4.with_(kappa=0.0)
    rates = rates_for(p, spec, y)
    t = np.linspace(0, 100, 1001)
    ref = nondissipative_pt(p, spec, wt, t)
    assert psa_pt(p, rho0, rates, wt, t).sup_distance(ref) < 1e-12
    assert sea_pt(rates, spec, wt, t, p).sup_distance(ref) < 1e-12


def test_lta_pt_matches_psa_without_cross(fig4):
    spec, y, rates, rho0, wt = fig4
    t = np.linspace(0, 150, 301)
    a = lta_pt(FIG4, rho0, rates, wt, t)
    b = psa_pt(FIG4, rho0, rates.without_cross(), wt, t)
    assert a.sup_distance(b) < 1e-12


def test_high_temperature_populations_use_rate_equations():
    p = FIG4.with_(beta=3.0)
    spec, y, rates, rho0, wt = setup(p, 4)
    t = np.linspace(0, 100, 201)
    pops = fsa_populations(rho0.rho.diagonal().real, rates, t, spec.size)
    direct = np.array([expm(math.pi * rates.population_matrix(spec.size) * ti) @ rho0.rho.diagonal().real for ti in t])
    assert np.abs(pops - direct).max() < 1e-8
    assert pops.sum(axis=1) == pytest.approx(np.ones(len(t)), abs=1e-9)


def test_sea_fourier_single_mode_height(fig4):
    spec, y, rates, rho0, wt = fig4
    f = sea_fourier(rates, spec, wt, np.linspace(0.5, 1.5, 20001), FIG4)
    gam = fsa_dephasing(rates)
    om = spec.omega_matrix()
    w10 = om[1, 0]
    h = f.values[np.argmin(np.abs(f.omega - w10))]
    # F = 2 int cos(w t) P dt puts a height p_10 / Gamma_01 on the line, plus the tails of the others
    assert h == pytest.approx(wt.p_nm0[1, 0] / gam[(0, 1)], rel=0.05)
    assert f.meta["gamma_r"] == sea_rate(rates)[0]
    assert f.delta_weight == pytest.approx(2 * math.pi * wt.p_inf)
