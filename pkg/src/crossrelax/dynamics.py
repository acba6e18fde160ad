"""Dipolar-coupled NV-P1 electron-spin pair under CW microwave drive.

The pair lives in the 6-dimensional |m_NV, m_P1> basis (NV index slowest,
both projections descending).  Nuclear spins are not included.  Time is in
microseconds and every Hamiltonian in MHz, so propagators are
exp(-2 pi i H t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants

from .eigen import jacobi_eigh
from .spin import NV_PARAMS, P1_PARAMS, SpinSystemParams, electronic_hamiltonian, kron, spin_operators

TWO_PI = 2 * math.pi

_S_NV = spin_operators(1.0)
_S_P1 = spin_operators(0.5)
_I_NV = np.eye(3)
_I_P1 = np.eye(2)

#: NV and P1 spin vectors lifted to the pair space
NV_OPS = tuple(kron(s, _I_P1) for s in _S_NV)
P1_OPS = tuple(kron(_I_NV, s) for s in _S_P1)
PAIR_LABELS = [(m, s) for m in (1, 0, -1) for s in (0.5, -0.5)]


def matched_field(nv: SpinSystemParams = NV_PARAMS, p1: SpinSystemParams = P1_PARAMS) -> float:
    """Field where the electron-only NV 0 -> -1 and P1 splittings coincide."""
    return nv.D / (nv.gamma_e + p1.gamma_e)


@dataclass(frozen=True)
class DipoleGeometry:
    """NV -> P1 direction and the folded dipolar prefactor in MHz."""

    r_hat: tuple = (1 / math.sqrt(3), 1 / math.sqrt(3), 1 / math.sqrt(3))
    coupling: float = 0.1

    def __post_init__(self):
        r = np.asarray(self.r_hat, dtype=float)
        if r.shape != (3,) or abs(np.linalg.norm(r) - 1) > 1e-9:
            raise ValueError("r_hat must be a unit 3-vector")
        if not math.isfinite(self.coupling):
            raise ValueError("coupling must be finite")


@dataclass(frozen=True)
class DriveParams:
    """CW drive: frequency ``omega`` and Rabi amplitudes, all in MHz."""

    omega: float = 0.0
    Omega1: float = 0.0
    Omega2: float = 0.0

    def __post_init__(self):
        if min(self.omega, self.Omega1, self.Omega2) < 0:
            raise ValueError("drive parameters must be non-negative")

    @property
    def is_on(self) -> bool:
        return self.omega > 0 and (self.Omega1 > 0 or self.Omega2 > 0)


@dataclass
class DynamicsResult:
    times: np.ndarray
    p1_polarization: np.ndarray
    states: np.ndarray | None = field(default=None, repr=False)

    def peak(self) -> float:
        """Largest |<S_P1z>| on the grid."""
        return float(np.max(np.abs(self.p1_polarization)))

    def time_to_fraction(self, fraction: float = 0.5) -> float:
        """First grid time where |<S_P1z>| reaches ``fraction`` of its peak."""
        a = np.abs(self.p1_polarization)
        top = a.max()
        if top == 0:
            return math.inf
        return float(self.times[np.argmax(a >= fraction * top)])


def dipolar_hamiltonian(g: DipoleGeometry) -> np.ndarray:
    """coupling * [S_NV.S_P1 - 3 (S_NV.r)(S_P1.r)]."""
    r = np.asarray(g.r_hat, dtype=float)
    dot = sum(a @ b for a, b in zip(NV_OPS, P1_OPS))
    s_nv = sum(rk * a for rk, a in zip(r, NV_OPS))
    s_p1 = sum(rk * b for rk, b in zip(r, P1_OPS))
    return g.coupling * (dot - 3 * s_nv @ s_p1)


def bare_hamiltonian(Bz: float, nv: SpinSystemParams = NV_PARAMS, p1: SpinSystemParams = P1_PARAMS) -> np.ndarray:
    """Electron-only H_NV (x) 1 + 1 (x) H_P1 for an on-axis field."""
    return kron(electronic_hamiltonian("nv", Bz, nv), _I_P1) + kron(_I_NV, electronic_hamiltonian("p1", Bz, p1))


def total_hamiltonian(Bz: float, g: DipoleGeometry, nv: SpinSystemParams = NV_PARAMS,
                      p1: SpinSystemParams = P1_PARAMS) -> np.ndarray:
    return bare_hamiltonian(Bz, nv, p1) + dipolar_hamiltonian(g)


def drive_operator(d: DriveParams) -> np.ndarray:
    """Omega1 S_NVx + Omega2 S_P1x, the operator multiplying cos(2 pi omega t)."""
    return d.Omega1 * NV_OPS[0] + d.Omega2 * P1_OPS[0]


def cw_hamiltonian(H_tot: np.ndarray, d: DriveParams, t: float) -> np.ndarray:
    return H_tot + math.cos(TWO_PI * d.omega * t) * drive_operator(d)


@dataclass
class RotatingFrame:
    """Secular Hamiltonian plus the bookkeeping needed to display or check it.

    ``kept_static`` and ``kept_drive`` are boolean masks (in the product
    basis) of the interaction and drive elements that survived truncation.
    """

    H: np.ndarray
    kept_static: np.ndarray
    kept_drive: np.ndarray
    frame_energies: np.ndarray


def rotating_frame(H_tot: np.ndarray, d: DriveParams, cutoff: float = 1.0,
                   bare: np.ndarray | None = None, second_order: bool = False) -> RotatingFrame:
    """Time-independent effective Hamiltonian after dropping fast-oscillating terms.

    In the interaction picture of the bare pair Hamiltonian every element of
    the dipolar interaction oscillates at E_i - E_j and every drive element
    at E_i - E_j +- omega.  Elements slower than ``cutoff`` are kept.  A
    frame with energies F_i (F_i - F_j equal to the compensated multiple of
    omega on every kept link) makes them exactly static, leaving the
    residual detunings E_i - F_i on the diagonal.

    ``bare`` defaults to the diagonal of ``H_tot``, which is exact for
    on-axis electron-only pairs because the bare part is diagonal there.

    With ``second_order`` the dropped terms are not discarded outright but
    folded in as the second-order average Hamiltonian (dispersive shifts and
    Bloch-Siegert terms), H2_jl = 1/2 sum_k V_jk V_kl (1/W_a - 1/W_b), kept
    where the product is static in the frame.
    """
    H_tot = np.asarray(H_tot, dtype=complex)
    n = H_tot.shape[0]
    if bare is None:
        bare = np.diag(np.diag(H_tot).real)
    E, V = jacobi_eigh(bare)
    to_eig = lambda X: V.conj().T @ X @ V  # noqa: E731
    W = to_eig(H_tot - bare)
    X = to_eig(drive_operator(d)) if d.is_on else np.zeros((n, n), complex)

    nu = E[:, None] - E[None, :]
    scale = max(1.0, float(np.abs(W).max()), float(np.abs(X).max()))
    tiny = 1e-14 * scale
    static = (np.abs(nu) < cutoff) & (np.abs(W) > tiny)
    shift = np.zeros((n, n), dtype=int)  # s with |nu_ij + s*omega| < cutoff
    drive = np.zeros((n, n), dtype=bool)
    if d.is_on:
        for s in (1, -1):
            hit = (np.abs(nu + s * d.omega) < cutoff) & (np.abs(X) > tiny)
            drive |= hit
            shift[hit] = s
    # frame energies: F_i - F_j = -s_ij * omega along every kept link
    links = static | drive
    F = np.full(n, np.nan)
    for root in range(n):
        if not np.isnan(F[root]):
            continue
        F[root] = E[root]
        stack = [root]
        while stack:
            i = stack.pop()
            for j in np.nonzero(links[i])[0]:
                target = F[i] + (shift[i, j] * d.omega if drive[i, j] else 0.0)
                if np.isnan(F[j]):
                    F[j] = target
                    stack.append(j)
                elif abs(F[j] - target) > cutoff:
                    raise ValueError("kept couplings admit no common rotating frame")
    Heff = np.diag(E - F).astype(complex)
    Heff += np.where(static, W, 0.0)
    Heff += np.where(drive, X / 2, 0.0)
    if second_order:
        Heff += _second_order(W, X / 2 if d.is_on else None, nu, static, drive, shift, d.omega, F, tiny, cutoff)
    back = lambda A: V @ A @ V.conj().T  # noqa: E731
    Heff = back(Heff)
    Heff = (Heff + Heff.conj().T) / 2
    perm_static = np.abs(back(np.where(static & ~np.eye(n, dtype=bool), 1.0, 0.0))) > 0.5
    perm_drive = np.abs(back(np.where(drive, 1.0, 0.0))) > 0.5
    return RotatingFrame(Heff, perm_static, perm_drive, F)


def _second_order(W, Xh, nu, static, drive, shift, omega, F, tiny, cutoff):
    # fast components (row, col, value, frequency, drive multiple)
    comps = [(j, k, W[j, k], nu[j, k], 0) for j, k in zip(*np.nonzero((np.abs(W) > tiny) & ~static))]
    if Xh is not None:
        for s in (1, -1):
            fast = (np.abs(Xh) > tiny) & ~(drive & (shift == s))
            comps += [(j, k, Xh[j, k], nu[j, k] + s * omega, s) for j, k in zip(*np.nonzero(fast))]
    by_row = {}
    for c in comps:
        by_row.setdefault(c[0], []).append(c)
    H2 = np.zeros(W.shape, complex)
    for j, k, va, wa, sa in comps:
        for _, l, vb, wb, sb in by_row.get(k, ()):
            # static in the frame iff F_l - F_j matches the net drive multiple
            if abs(F[l] - F[j] - (sa + sb) * omega) > cutoff:
                continue
            H2[j, l] += 0.5 * va * vb * (1.0 / wa - 1.0 / wb)
    return H2


def initial_state() -> np.ndarray:
    """NV fully in m = 0, P1 unpolarized: |0><0| (x) 1/2."""
    p0 = np.zeros((3, 3), complex)
    p0[1, 1] = 1.0
    return kron(p0, _I_P1 / 2)


def p1_sz() -> np.ndarray:
    return P1_OPS[2]


def evolve(rho0: np.ndarray, H_eff: np.ndarray, times, keep_states: bool = False) -> DynamicsResult:
    """Unitary evolution under a time-independent Hamiltonian, via its eigenbasis."""
    times = np.asarray(times, dtype=float)
    lam, V = jacobi_eigh(H_eff)
    r = V.conj().T @ rho0 @ V
    sz = V.conj().T @ p1_sz() @ V
    phase = np.exp(-1j * TWO_PI * np.subtract.outer(lam, lam)[None] * times[:, None, None])
    rt = r[None] * phase
    pol = np.real(np.einsum("tij,ji->t", rt, sz))
    states = np.einsum("ai,tij,bj->tab", V, rt, V.conj()) if keep_states else None
    return DynamicsResult(times, pol, states)


def _rk4_propagator(H_static, Hd, omega, t0, h, nsteps):
    """U(t0 + k h, t0) for k = 0..nsteps by classical RK4 on dU/dt = -2 pi i H(t) U."""
    n = H_static.shape[0]
    U = np.eye(n, dtype=complex)
    out = np.empty((nsteps + 1, n, n), dtype=complex)
    out[0] = U
    a = -1j * TWO_PI
    ham = lambda t: H_static + math.cos(TWO_PI * omega * t) * Hd  # noqa: E731
    for k in range(nsteps):
        t = t0 + k * h
        Hm = ham(t + h / 2)
        k1 = a * ham(t) @ U
        k2 = a * Hm @ (U + h / 2 * k1)
        k3 = a * Hm @ (U + h / 2 * k2)
        k4 = a * ham(t + h) @ (U + h * k3)
        U = U + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = U
    return out


def _nearest_unitary(U):
    w, _, vh = np.linalg.svd(U)
    return w @ vh


def max_frequency(H_tot: np.ndarray, d: DriveParams) -> float:
    lam = np.linalg.eigvalsh(H_tot)
    return float(lam[-1] - lam[0] + 2 * (d.Omega1 + d.Omega2) + d.omega)


def evolve_full_oracle(rho0: np.ndarray, Bz: float, g: DipoleGeometry, d: DriveParams, times,
                       step: float | None = None, *, nv: SpinSystemParams = NV_PARAMS,
                       p1: SpinSystemParams = P1_PARAMS) -> DynamicsResult:
    """Lab-frame reference integration with every oscillating term kept.

    RK4 integrates the propagator over one drive period (or a fixed block
    when the drive is off); later times reuse it, since the Hamiltonian is
    periodic.  Every propagator used is projected back onto the unitary group,
    which keeps the trace of rho fixed.  Output times are snapped to the
    integration grid.
    """
    H_tot = total_hamiltonian(Bz, g, nv, p1)
    fmax = max_frequency(H_tot, d)
    limit = 1 / (20 * fmax) if fmax > 0 else math.inf
    if step is None:
        step = 1 / (80 * fmax) if fmax > 0 else 1e-3
    if step > limit:
        raise ValueError(f"step {step:g} us does not resolve {fmax:g} MHz; need <= {limit:g} us")
    H_static = H_tot - np.trace(H_tot).real / H_tot.shape[0] * np.eye(H_tot.shape[0])
    Hd = drive_operator(d)
    if d.is_on:
        block = 1 / d.omega
        nsub = math.ceil(block / step)
    else:
        nsub = 2000
        block = nsub * step
    h = block / nsub
    subs = _rk4_propagator(H_static, Hd, d.omega if d.is_on else 0.0, 0.0, h, nsub)
    U_block = _nearest_unitary(subs[-1])

    times = np.asarray(times, dtype=float)
    ticks = np.rint(times / h).astype(np.int64)
    n_blk, j = np.divmod(ticks, nsub)
    sz = p1_sz()
    pol = np.empty(len(times))
    states = np.empty((len(times),) + rho0.shape, dtype=complex)
    Upow = np.eye(H_tot.shape[0], dtype=complex)
    done = 0
    for k in np.argsort(ticks, kind="stable"):
        if n_blk[k] > done:
            Upow = np.linalg.matrix_power(U_block, int(n_blk[k] - done)) @ Upow
            Upow = _nearest_unitary(Upow)
            done = n_blk[k]
        U = _nearest_unitary(subs[j[k]]) @ Upow
        rho = U @ rho0 @ U.conj().T
        states[k] = rho
        pol[k] = np.real(np.trace(rho @ sz))
    return DynamicsResult(times, pol, states)


def thermal_polarization(B: float, T: float, gamma_e: float = P1_PARAMS.gamma_e) -> float:
    """Relative Boltzmann population difference of the P1 Zeeman doublet.

    (p_- - p_+) divided by the mean population, i.e. 2 tanh(h gamma_e B / 2kT),
    which is close to h gamma_e B / kT at room temperature.
    """
    if not T > 0:
        raise ValueError("temperature must be positive")
    x = constants.h * gamma_e * 1e6 * B / (constants.k * T)
    return 2 * math.tanh(x / 2)


def default_times(t_max: float = 200.0, n: int = 2000) -> np.ndarray:
    return np.linspace(0.0, t_max, n)


def polarization_transfer(Bz: float | None = None, g: DipoleGeometry | None = None, rabi: float = 0.0,
                          cutoff: float = 1.0, times=None, matched: bool = True,
                          detuning_field: float = 1.0, second_order: bool = False) -> DynamicsResult:
    """P1 polarization build-up from a fresh NV m = 0 state, in the rotating frame.

    ``matched`` puts the pair at the electron-only resonance field; the
    unmatched case moves it by ``detuning_field`` mT.  The drive frequency
    always equals the NV 0 -> -1 gap at the chosen field.  ``second_order``
    is passed on to :func:`rotating_frame`.
    """
    g = g or DipoleGeometry()
    if Bz is None:
        Bz = matched_field() + (0.0 if matched else detuning_field)
    omega = NV_PARAMS.D - NV_PARAMS.gamma_e * Bz
    d = DriveParams(abs(omega), rabi, rabi)
    H_tot = total_hamiltonian(Bz, g)
    rf = rotating_frame(H_tot, d, cutoff, second_order=second_order)
    return evolve(initial_state(), rf.H, default_times() if times is None else times)
