"""Van Vleck perturbation theory for the qubit coupled to the nonlinear oscillator.

The Hamiltonian in the qubit energy basis {|g>, |e>} and the nonlinear
oscillator basis {|j>} reads

    H = -Db/2 tau_z + E_j + (g/Db)(eps tau_z - D0 tau_x)(B + B^dag)

with tau_z|g> = |g>.  Near Db ~ Omega the states |(j+1)g> and |j e> form
quasi-degenerate doublets.  A unitary exp(-iS), with S free of elements
inside a doublet, block-diagonalises H to second order in g and first order
in alpha.

Product-basis vectors are indexed by 2*level + (0 for g, 1 for e).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_model import (
    SystemParams,
    ladder_matrix,
    n1,
    n3,
    osc_energy,
    osc_state_vector,
    product_index,
)
from .errors import DegenerateMatchAmbiguity, ResonantDenominator, TruncationLeak

# extra oscillator levels kept above the highest doublet when building states
STATE_HEADROOM = 7
MATCH_TIE = 1e-6


# ---------------------------------------------------------------------------
# effective Hamiltonian


def coupling_delta(j, p: SystemParams):
    """Off-diagonal doublet element Delta(j) = -(g D0/Db) n1(j)."""
    return -(p.g * p.delta0 / p.delta_b) * n1(j, p)


def w_shifts(j, p: SystemParams, omega: float | None = None):
    """Second-order shifts (W0(j), W1(j)), optionally with Omega replaced."""
    om = p.omega if omega is None else omega
    db, g, a = p.delta_b, p.g, p.alpha
    j = np.asarray(j, dtype=float)
    w1 = -(g * p.epsilon) ** 2 / (db**2 * om) + 6 * a * g**2 * (2 * j + 1) * p.epsilon**2 / (db**2 * om**2)
    w0 = -(g * p.delta0) ** 2 * j / (db**2 * (db + om)) * (1 - 3 * a * j * (db + 2 * om) / (om * (db + om)))
    if j.ndim == 0:
        return float(w0), float(w1)
    return w0, w1


def detuning(j, p: SystemParams):
    """delta_j: diagonal difference of the doublet block (|j e> minus |(j+1) g>)."""
    j = np.asarray(j, dtype=float)
    w0j, w1j = w_shifts(j, p)
    w1j1 = w_shifts(j + 1, p)[1]
    w0j2 = w_shifts(j + 2, p)[0]
    out = p.delta_b - p.omega - 3 * p.alpha * (j + 1) + w1j - w1j1 - w0j - w0j2
    return float(out) if out.ndim == 0 else out


def detuning_and_angle(j, p: SystemParams):
    """(delta_j, eta_j) with eta_j = angle of (delta_j, 2|Delta(j)|) in [0, pi)."""
    d = detuning(j, p)
    eta = np.arctan2(2 * np.abs(coupling_delta(j, p)), d)
    if np.ndim(d) == 0:
        return float(d), float(eta)
    return d, eta


@dataclass(frozen=True)
class EffectiveBlock:
    j: int
    delta_of_j: float
    w1_j: float
    w1_j1: float
    w0_j: float
    w0_j2: float
    delta_j: float
    eta_j: float

    def matrix(self, p: SystemParams) -> np.ndarray:
        """2x2 block in the basis (|j e>, |(j+1) g>)."""
        j = self.j
        ee = p.delta_b / 2 + osc_energy(j, p) + self.w1_j - self.w0_j
        gg = -p.delta_b / 2 + osc_energy(j + 1, p) + self.w1_j1 + self.w0_j2
        return np.array([[ee, self.delta_of_j], [self.delta_of_j, gg]])


def effective_block(j: int, p: SystemParams) -> EffectiveBlock:
    w0j, w1j = w_shifts(j, p)
    w1j1 = w_shifts(j + 1, p)[1]
    w0j2 = w_shifts(j + 2, p)[0]
    d, eta = detuning_and_angle(j, p)
    return EffectiveBlock(j, coupling_delta(j, p), w1j, w1j1, w0j, w0j2, d, eta)


# ---------------------------------------------------------------------------
# spectrum containers


@dataclass(frozen=True)
class EnergySpectrum:
    """Ordered energies E_n and, optionally, eigenvectors as columns.

    For perturbative spectra the order is the label convention (0, then
    2j+1 <= 2j+2 per doublet); for oracle spectra it is ascending unless
    the spectrum was matched to a reference.
    """

    energies: np.ndarray
    params: SystemParams
    states: np.ndarray | None = None
    eta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    basis: str = "no"
    n_levels: int = 0

    def __post_init__(self):
        self.energies.setflags(write=False)
        if self.states is not None:
            self.states.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.energies)

    def omega_matrix(self) -> np.ndarray:
        """omega[n, m] = E_n - E_m."""
        e = self.energies
        return e[:, None] - e[None, :]

    def truncated(self, size: int) -> "EnergySpectrum":
        st = None if self.states is None else self.states[:, :size].copy()
        return EnergySpectrum(self.energies[:size].copy(), self.params, st, self.eta, self.basis, self.n_levels)


def _doublet_energies(j, p: SystemParams):
    j = np.asarray(j, dtype=float)
    w0j, w1j = w_shifts(j, p)
    w0j2 = w_shifts(j + 2, p)[0]
    w1j1 = w_shifts(j + 1, p)[1]
    centre = (j + 0.5) * p.omega + 1.5 * p.alpha * (j + 1) ** 2 + 0.5 * (w1j + w1j1) - 0.5 * w0j + 0.5 * w0j2
    gap = np.sqrt(detuning(j, p) ** 2 + 4 * coupling_delta(j, p) ** 2)
    return centre - gap / 2, centre + gap / 2


def ground_energy(p: SystemParams) -> float:
    return -p.delta_b / 2 + w_shifts(0, p)[1] + w_shifts(1, p)[0]


def eigenenergies(p: SystemParams, n_doublets: int) -> EnergySpectrum:
    """E_0 followed by (E_{2j+1}, E_{2j+2}) for doublets j < n_doublets."""
    if n_doublets < 0:
        raise ValueError("n_doublets must be >= 0")
    j = np.arange(n_doublets)
    lo, hi = _doublet_energies(j, p)
    e = np.empty(2 * n_doublets + 1)
    e[0] = ground_energy(p)
    e[1::2] = lo
    e[2::2] = hi
    eta = detuning_and_angle(j, p)[1] if n_doublets else np.zeros(0)
    return EnergySpectrum(e, p, None, np.atleast_1d(np.asarray(eta, dtype=float)))


def rabi_splitting(j: int, p: SystemParams) -> float:
    """Minimal doublet gap at the Bloch-Siegert resonance."""
    return math.sqrt(j + 1) * p.g * p.delta0 / p.delta_b * (2 - 3 * p.alpha * (j + 1) / p.omega)


def bloch_siegert_resonance(j: int, p: SystemParams) -> float:
    """Oscillator frequency at which delta_j vanishes (W shifts taken at Db)."""
    db = p.delta_b
    w0j, w1j = w_shifts(j, p, omega=db)
    w1j1 = w_shifts(j + 1, p, omega=db)[1]
    w0j2 = w_shifts(j + 2, p, omega=db)[0]
    return (
        db
        - 3 * p.alpha * (j + 1)
        + w1j
        - w1j1
        - w0j
        - w0j2
        + 3 * p.alpha * (p.g * p.delta0) ** 2 * (j + 1) ** 2 / (2 * db**4)
    )


def resonant_frequency_expansion(p: SystemParams) -> dict[tuple[int, int], float]:
    """Expanded omega_nm of the six surviving lines at eps = 0 and Omega = Db."""
    om, g, a = p.omega, p.g, p.alpha
    r2 = math.sqrt(2.0)
    c1 = 9 * a * g / (4 * om)
    return {
        (1, 0): om - g + 1.5 * a + c1 + 9 * a * g**2 / (4 * om**2),
        (2, 0): om + g + 1.5 * a - c1 + 9 * a * g**2 / (4 * om**2),
        (3, 1): om + g * (1 - r2) + 4.5 * a + c1 * (2 * r2 - 1) + 9 * a * g**2 / (2 * om**2),
        (4, 1): om + g * (1 + r2) + 4.5 * a - c1 * (2 * r2 + 1) + 9 * a * g**2 / (2 * om**2),
        (3, 2): om - g * (1 + r2) + 4.5 * a + c1 * (2 * r2 + 1) + 9 * a * g**2 / (2 * om**2),
        (4, 2): om - g * (1 - r2) + 4.5 * a - c1 * (2 * r2 - 1) + 9 * a * g**2 / (2 * om**2),
    }


def transition_frequencies(spec: EnergySpectrum) -> list[tuple[int, int, float]]:
    e = spec.energies
    return [(n, m, float(e[n] - e[m])) for n in range(len(e)) for m in range(n)]


# ---------------------------------------------------------------------------
# generator S


@dataclass(frozen=True)
class VanVleckGenerator:
    """Elements of iS^(1) and iS^(2) keyed by (bra level, bra qubit, ket level, ket qubit).

    Only one orientation is stored; `matrix` completes antisymmetry.
    """

    first: dict
    second: dict
    n_levels: int

    def element(self, la: int, qa: str, lb: int, qb: str, order: int | None = None) -> float:
        total = 0.0
        for o, table in ((1, self.first), (2, self.second)):
            if order not in (None, o):
                continue
            if (la, qa, lb, qb) in table:
                total += table[(la, qa, lb, qb)]
            elif (lb, qb, la, qa) in table:
                total -= table[(lb, qb, la, qa)]
        return total

    def matrix(self, order: int) -> np.ndarray:
        dim = 2 * self.n_levels
        m = np.zeros((dim, dim))
        table = self.first if order == 1 else self.second
        for (la, qa, lb, qb), v in table.items():
            a, b = product_index(la, qa), product_index(lb, qb)
            m[a, b] += v
            m[b, a] -= v
        return m


def _first_order(j: int, p: SystemParams) -> dict:
    eps, d0, om, a, g, db = p.epsilon, p.delta0, p.omega, p.alpha, p.g, p.delta_b
    s = math.sqrt(j + 1)
    lin = g * eps * s / (db * om) * (1 - 4.5 * a * (j + 1) / om)
    m3 = n3(j + 3, p)
    return {
        (j, "e", j + 1, "e"): lin,
        (j, "g", j + 1, "g"): -lin,
        (j, "g", j + 1, "e"): g * d0 * s / (db * (db + om)) * (1 - 3 * a * (j + 1) * (db + 3 * om) / (2 * om * (db + om))),
        (j, "e", j + 3, "e"): g * eps * m3 / (3 * om * db),
        (j, "g", j + 3, "g"): -g * eps * m3 / (3 * om * db),
        (j, "g", j + 3, "e"): g * d0 * m3 / (db * (db + 3 * om)),
        (j, "e", j + 3, "g"): g * d0 * m3 / (db * (3 * om - db)),
    }


def _guard_resonances(p: SystemParams) -> None:
    """The generator has denominators 2 Omega - Db and 3 Omega - Db."""
    for k in (2, 3):
        if abs(p.delta_b - k * p.omega) < 1e-9 * p.omega:
            raise ResonantDenominator(f"delta_b = {p.delta_b} lies within 1e-9 Omega of {k} Omega")


def _second_order(j: int, p: SystemParams) -> dict:
    eps, d0, om, a, g, db = p.epsilon, p.delta0, p.omega, p.alpha, p.g, p.delta_b
    s2 = math.sqrt((j + 1) * (j + 2))
    s4 = math.sqrt((j + 1) * (j + 2) * (j + 3) * (j + 4))
    g2 = g * g
    out = {}
    out[(j, "e", j + 2, "g")] = 2 * g2 * eps * d0 * s2 / (db**2 * om * (2 * om - db)) * (
        1 + 3 * a * (2 * j + 3) * (db - 3 * om) / (om * (2 * om - db))
    ) + g2 * (2 * j + 3) * s2 * a * d0 * eps * (db - 5 * om) / (
        12 * om**2 * (db**4 - 4 * om * db**3 + om**2 * db**2 + 6 * om**3 * db)
    )
    out[(j, "g", j + 2, "g")] = g2 * s2 / (2 * db**2 * om) * (
        3 * a * eps**2 / (2 * om**2)
        + d0**2 / (db + om) * (1 - 3 * a * ((2 * j + 3) * db + om * (3 * j + 4)) / ((db + om) * om))
    ) + g2 * s2 * a / (8 * db**2 * om**2) * (
        2 * eps**2 / om
        + ((2 * j + 3) * db**2 + 3 * (j - 1) * om * db - 3 * (j + 6) * om**2)
        * d0**2
        / ((db - 3 * om) * (db**2 + 4 * om * db + 3 * om**2))
    )
    # the eps^2 term mirrors the g-g element: 3 alpha eps^2 / (2 Omega^2)
    out[(j, "e", j + 2, "e")] = g2 * s2 / (2 * db**2 * om) * (
        -d0**2 / (om + db) * (1 - 3 * a * (db * (2 * j + 3) + om * (3 * j + 5)) / ((db + om) * om))
        + 3 * a * eps**2 / (2 * om**2)
    ) + g2 * a * s2 / (8 * db**2 * om**2) * (
        -((3 + 2 * j) * db**2 + 3 * (4 + j) * db * om - 3 * (j - 3) * om**2)
        / (db**3 + db**2 * om - 9 * om**2 * db - 9 * om**3)
        + 2 * eps**2 / om
    )
    out[(j, "g", j, "e")] = g2 * d0 * eps / (db**2 * om * (db + om)) * (
        -(2 * j + 1) / 2 + 3 * a * (2 * j * j + 2 * j + 1) * (2 * db + 3 * om) / (2 * om * (db + om))
    )
    out[(j, "g", j + 2, "e")] = g2 * eps * d0 * s2 / (2 * db**2 * (2 * om + db)) * (
        -2 * db / (om * (om + db))
        + 3 * a * db * (2 * j + 3) * (2 * db**2 + 9 * db * om + 8 * om**2) / (om**2 * (om + db) ** 2 * (2 * om + db))
    ) + g2 * (2 * j + 3) * s2 * a * d0 * eps * (db + 6 * om) / (24 * db**2 * om**2 * (db**2 + 5 * om * db + 6 * om**2))
    quad = g2 * s4 * a * d0**2 * (db**2 - 3 * om**2) / (
        8 * db**2 * om**2 * (db**3 + om * db**2 - 9 * om**2 * db - 9 * om**3)
    )
    out[(j, "g", j + 4, "g")] = quad
    out[(j, "e", j + 4, "e")] = -quad
    out[(j, "g", j + 4, "e")] = -g2 * s4 * a * d0 * eps * (2 * db + 5 * om) / (
        6 * om**2 * (db**4 + 8 * om * db**3 + 19 * om**2 * db**2 + 12 * om**3 * db)
    )
    out[(j, "e", j + 4, "g")] = -g2 * s4 * a * d0 * eps * (5 * db - 12 * om) / (
        12 * db**2 * om**2 * (db**2 - 7 * om * db + 12 * om**2)
    )
    return out


def generator_elements(p: SystemParams, n_levels: int) -> VanVleckGenerator:
    """All iS^(1), iS^(2) elements whose levels are below `n_levels`."""
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    _guard_resonances(p)

    def keep(table):
        return {k: v for k, v in table.items() if k[0] < n_levels and k[2] < n_levels}

    first, second = {}, {}
    for j in range(n_levels):
        first.update(keep(_first_order(j, p)))
        second.update(keep(_second_order(j, p)))
    return VanVleckGenerator(first, second, n_levels)


def effective_states(p: SystemParams, n_doublets: int, n_levels: int) -> np.ndarray:
    """Columns |n>_eff in the product basis."""
    eff = np.zeros((2 * n_levels, 2 * n_doublets + 1))
    eff[product_index(0, "g"), 0] = 1.0
    for j in range(n_doublets):
        eta = detuning_and_angle(j, p)[1]
        c, s = math.cos(eta / 2), math.sin(eta / 2)
        ig, ie = product_index(j + 1, "g"), product_index(j, "e")
        eff[ig, 2 * j + 1], eff[ie, 2 * j + 1] = c, s
        eff[ig, 2 * j + 2], eff[ie, 2 * j + 2] = -s, c
    return eff


def transformation_matrix(p: SystemParams, n_levels: int) -> np.ndarray:
    """exp(-iS) truncated at 1 - iS1 - iS2 + (iS1)^2 / 2."""
    gen = generator_elements(p, n_levels)
    s1, s2 = gen.matrix(1), gen.matrix(2)
    return np.eye(2 * n_levels) - s1 - s2 + 0.5 * s1 @ s1


def vanvleck_states(p: SystemParams, n_doublets: int, n_levels: int | None = None) -> EnergySpectrum:
    """Energies and eigenvectors |n> = exp(-iS)|n>_eff, columns renormalised.

    The vectors live in the nonlinear-oscillator product basis with
    `n_levels` oscillator levels (default n_doublets + 7).
    """
    if n_doublets < 1:
        raise ValueError("n_doublets must be >= 1")
    n_levels = n_doublets + STATE_HEADROOM if n_levels is None else n_levels
    t = transformation_matrix(p, n_levels)
    states = t @ effective_states(p, n_doublets, n_levels)
    states /= np.linalg.norm(states, axis=0)
    top = (states[-4:, :] ** 2).sum(axis=0)
    if np.any(top > 1e-3):
        bad = int(np.argmax(top))
        raise TruncationLeak(f"state {bad} has weight {top[bad]:.3g} on the two highest oscillator levels")
    en = eigenenergies(p, n_doublets)
    return EnergySpectrum(en.energies.copy(), p, states, en.eta, "no", n_levels)


def no_to_linear(n_levels: int, p: SystemParams, size: int | None = None) -> np.ndarray:
    """Matrix mapping NO product-basis amplitudes onto the linear product basis."""
    size = n_levels + 4 if size is None else size
    c = np.column_stack([osc_state_vector(j, p, size) for j in range(n_levels)])
    return np.kron(c, np.eye(2))


# ---------------------------------------------------------------------------
# oracle


def qubit_oscillator_hamiltonian(p: SystemParams, osc: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Full H in the product basis from an oscillator Hamiltonian and position matrix."""
    tz = np.diag([1.0, -1.0])
    tx = np.array([[0.0, 1.0], [1.0, 0.0]])
    n = osc.shape[0]
    h = np.kron(np.eye(n), -p.delta_b / 2 * tz) + np.kron(osc, np.eye(2))
    h += (p.g / p.delta_b) * np.kron(x, p.epsilon * tz - p.delta0 * tx)
    return h


def quartic_oscillator(p: SystemParams, n_trunc: int):
    """(H_osc, x) of Omega a^dag a + (alpha/4) x^4 in the linear basis.

    x^4 is built in a larger space and truncated so that every retained
    element is exact; the constant 3 alpha / 4 is removed so that level j
    starts at Omega j + 1.5 alpha j (j+1) in first order.
    """
    big = n_trunc + 4
    a = np.diag(np.sqrt(np.arange(1, big)), 1)
    xb = a + a.T
    x4 = np.linalg.matrix_power(xb, 4)[:n_trunc, :n_trunc]
    osc = np.diag(p.omega * np.arange(n_trunc)) + p.alpha / 4 * x4 - 0.75 * p.alpha * np.eye(n_trunc)
    return osc, xb[:n_trunc, :n_trunc]


def first_order_oscillator(p: SystemParams, n_trunc: int):
    """(H_osc, x) with diagonal E_j and first-order position matrix in the NO basis."""
    return np.diag(osc_energy(np.arange(n_trunc), p)), ladder_matrix(n_trunc, p)


def brute_force_spectrum(
    p: SystemParams,
    n_trunc: int = 40,
    *,
    quartic: str = "exact",
    reference: EnergySpectrum | None = None,
) -> EnergySpectrum:
    """Exact diagonalisation in a product basis of `n_trunc` oscillator levels.

    quartic="exact" uses the linear-oscillator basis with (alpha/4) x^4 from
    exact ladder matrices; quartic="first_order" diagonalises the
    first-order nonlinear-oscillator Hamiltonian (levels E_j, position
    matrix n1/n3) on which the perturbation theory is built.  Without a
    reference the result is ascending; with one, columns are reordered to
    the reference labels by maximum overlap.
    """
    if n_trunc < 12:
        raise ValueError("n_trunc must be >= 12")
    if quartic == "exact":
        osc, x = quartic_oscillator(p, n_trunc)
        basis = "linear"
    elif quartic == "first_order":
        osc, x = first_order_oscillator(p, n_trunc)
        basis = "no"
    else:
        raise ValueError(f"unknown quartic mode {quartic!r}")
    h = qubit_oscillator_hamiltonian(p, osc, x)
    e, v = np.linalg.eigh(h)
    spec = EnergySpectrum(e, p, v, np.zeros(0), basis, n_trunc)
    if reference is None:
        return spec
    return match_to_reference(spec, reference)


def reference_in_basis(reference: EnergySpectrum, basis: str, n_levels: int) -> np.ndarray:
    """Reference eigenvectors expressed in `basis` with `n_levels` levels."""
    ref = reference.states
    if ref is None:
        raise ValueError("reference spectrum carries no eigenvectors")
    p = reference.params
    if basis == reference.basis:
        out = np.zeros((2 * n_levels, ref.shape[1]))
        k = min(ref.shape[0], 2 * n_levels)
        out[:k] = ref[:k]
    elif reference.basis == "no" and basis == "linear":
        m = no_to_linear(reference.n_levels, p, size=max(n_levels, reference.n_levels + 4))
        full = m @ ref
        out = full[: 2 * n_levels]
    else:
        raise ValueError(f"cannot convert {reference.basis} to {basis}")
    return out / np.linalg.norm(out, axis=0)


def overlap_matrix(oracle: EnergySpectrum, reference: EnergySpectrum) -> np.ndarray:
    """|<ref_n|oracle_k>|^2 with shape (reference size, oracle size)."""
    ref = reference_in_basis(reference, oracle.basis, oracle.n_levels)
    return (ref.T @ oracle.states) ** 2


def match_to_reference(oracle: EnergySpectrum, reference: EnergySpectrum) -> EnergySpectrum:
    """Reorder oracle eigenpairs to the reference labels (greedy maximum overlap)."""
    ov = overlap_matrix(oracle, reference)
    n_ref = ov.shape[0]
    for n in range(n_ref):
        row = np.sort(ov[n])[::-1]
        if row[0] > 0.1 and row[0] - row[1] < MATCH_TIE:
            k = np.argsort(ov[n])[::-1][:2]
            raise DegenerateMatchAmbiguity(n, k.tolist(), row[:2].tolist())
    order = np.dstack(np.unravel_index(np.argsort(-ov, axis=None), ov.shape))[0]
    assigned = {}
    used = set()
    for n, k in order:
        if n in assigned or k in used:
            continue
        assigned[int(n)] = int(k)
        used.add(int(k))
        if len(assigned) == n_ref:
            break
    idx = [assigned[n] for n in range(n_ref)]
    states = oracle.states[:, idx].copy()
    # fix the sign so that each oracle vector overlaps its reference positively
    ref = reference_in_basis(reference, oracle.basis, oracle.n_levels)
    signs = np.sign(np.sum(ref * states, axis=0))
    signs[signs == 0] = 1.0
    return EnergySpectrum(
        oracle.energies[idx].copy(), oracle.params, states * signs, reference.eta, oracle.basis, oracle.n_levels
    )


def canonical_transformation(p: SystemParams, n_levels: int) -> np.ndarray:
    """Block-diagonalising unitary of the first-order NO Hamiltonian, computed numerically.

    The exact eigenvectors belonging to each unperturbed manifold M span a
    subspace with projector P_M; T = sum_M P_M P0_M (P0_M P_M P0_M)^(-1/2)
    is the minimal rotation mapping each unperturbed manifold onto it.  Its
    logarithm agrees with -iS through second order in g.
    """
    osc, x = first_order_oscillator(p, n_levels)
    h = qubit_oscillator_hamiltonian(p, osc, x)
    dim = h.shape[0]
    e, v = np.linalg.eigh(h)
    manifold = np.array([i // 2 + (i % 2) for i in range(dim)])
    dominant = np.argmax(np.abs(v), axis=0)
    t = np.zeros((dim, dim))
    for m in np.unique(manifold):
        cols = np.where(manifold[dominant] == m)[0]
        rows = np.where(manifold == m)[0]
        if len(cols) != len(rows):
            raise TruncationLeak(f"manifold {m} could not be identified among the exact eigenvectors")
        u = v[:, cols]
        ui = u[rows, :]
        w, q = np.linalg.eigh(ui @ ui.T)
        inv_sqrt = q @ np.diag(w**-0.5) @ q.T
        t[:, rows] = u @ ui.T @ inv_sqrt
    return t
