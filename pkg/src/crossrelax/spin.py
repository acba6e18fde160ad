"""Spin operators and defect Hamiltonians.

Units throughout: energies are linear frequencies in MHz (h = 1), fields in
mT, times in microseconds.  Product bases are ordered |m_S, m_I> with the
electron index varying slowest and every projection listed in descending
order (+S ... -S, then +I ... -I).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm

HERMITIAN_RTOL = 1e-12

#: polar angle between two distinct <111> axes of the diamond lattice
OFF_AXIS_ANGLE = math.acos(-1.0 / 3.0)


@dataclass(frozen=True)
class SpinSystemParams:
    """Physical constants of one defect.

    Attributes
    ----------
    D : float
        Zero-field splitting in MHz (0 for P1).
    gamma_e, gamma_n : float
        Electron and 14N gyromagnetic ratios in MHz/mT.
    A_par, A_perp : float
        Axial and transverse hyperfine couplings in MHz.
    Q : float
        Nuclear quadrupole coupling in MHz.
    S, I : float
        Electron and nuclear spin quantum numbers.
    nuclear_zeeman : bool
        Keep the -gamma_n B.I term.  Set False to reproduce electron-only
        estimates that drop it.
    """

    D: float = 2870.0
    gamma_e: float = 28.025
    gamma_n: float = 3.077e-3
    A_par: float = -2.14
    A_perp: float = -2.70
    Q: float = -4.96
    S: float = 1.0
    I: float = 1.0
    nuclear_zeeman: bool = True

    def __post_init__(self):
        if self.S not in (0.5, 1.0):
            raise ValueError(f"electron spin must be 1/2 or 1, got {self.S}")
        if self.I != 1.0:
            raise ValueError(f"nuclear spin must be 1, got {self.I}")
        if not self.gamma_e > 0:
            raise ValueError("gamma_e must be positive")
        for name in ("D", "gamma_e", "gamma_n", "A_par", "A_perp", "Q"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def dim(self) -> int:
        return int(round(2 * self.S + 1) * round(2 * self.I + 1))

    def without_hyperfine(self) -> "SpinSystemParams":
        """Copy with A_par, A_perp, Q and the nuclear Zeeman term switched off."""
        return replace(self, A_par=0.0, A_perp=0.0, Q=0.0, nuclear_zeeman=False)


NV_PARAMS = SpinSystemParams()
P1_PARAMS = SpinSystemParams(D=0.0, A_par=113.98, A_perp=81.34, Q=-3.97, S=0.5)


@dataclass(frozen=True)
class FieldVector:
    """Magnetic field in mT, expressed in a defect's local frame."""

    Bx: float = 0.0
    By: float = 0.0
    Bz: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.Bx, self.By, self.Bz)):
            raise ValueError(f"field components must be finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.Bx, self.By, self.Bz], dtype=float)

    @property
    def magnitude(self) -> float:
        return math.sqrt(self.Bx**2 + self.By**2 + self.Bz**2)


@dataclass(frozen=True)
class Orientation:
    """One of the four <111> axes, given relative to the lab z axis (the NV axis)."""

    axis_index: int
    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if self.axis_index not in (0, 1, 2, 3):
            raise ValueError("axis_index must be 0..3")

    @property
    def on_axis(self) -> bool:
        return self.axis_index == 0

    @property
    def kind(self) -> str:
        return "on" if self.on_axis else "off"


ON_AXIS = Orientation(0, 0.0, 0.0)
OFF_AXES = tuple(Orientation(k, OFF_AXIS_ANGLE, 2 * math.pi * (k - 1) / 3) for k in (1, 2, 3))
OFF_AXIS = OFF_AXES[0]


def orientation(kind: str) -> Orientation:
    """Representative orientation for ``"on"`` or ``"off"``."""
    if kind == "on":
        return ON_AXIS
    if kind == "off":
        return OFF_AXIS
    raise ValueError(f"orientation must be 'on' or 'off', got {kind!r}")


def spin_operators(s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (Sx, Sy, Sz) for spin ``s`` in the descending |m> basis."""
    if s not in (0.5, 1.0, 1):
        raise ValueError(f"unsupported spin {s}; only 1/2 and 1 are used here")
    m = np.arange(s, -s - 1, -1.0)
    n = len(m)
    splus = np.zeros((n, n), dtype=complex)
    for k in range(1, n):
        splus[k - 1, k] = math.sqrt(s * (s + 1) - m[k] * (m[k] + 1))
    sminus = splus.conj().T
    sx = (splus + sminus) / 2
    sy = (splus - sminus) / 2j
    sz = np.diag(m).astype(complex)
    return sx, sy, sz


def kron(*ops) -> np.ndarray:
    """Tensor product, first factor slowest."""
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


def projections(s: float) -> list[float]:
    """Descending projections s, s-1, ..., -s."""
    return [s - k for k in range(int(round(2 * s)) + 1)]


def basis_labels(S: float, I: float | None = 1.0) -> list[tuple]:
    """(m_S, m_I) tags of the product basis, or (m_S,) when ``I`` is None."""
    if I is None:
        return [(m,) for m in projections(S)]
    return [(ms, mi) for ms in projections(S) for mi in projections(I)]


def check_hermitian(H: np.ndarray, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise ValueError("matrix has non-finite entries")
    scale = np.linalg.norm(H)
    if np.max(np.abs(H - H.conj().T), initial=0.0) > rtol * max(scale, 1.0):
        raise ValueError("matrix is not Hermitian")
    return H


def _as_field(B) -> np.ndarray:
    if isinstance(B, FieldVector):
        return B.as_array()
    b = np.asarray(B, dtype=float)
    if b.shape != (3,) or not np.all(np.isfinite(b)):
        raise ValueError(f"field must be three finite components, got {B!r}")
    return b


def spin_hamiltonian(B, p: SpinSystemParams) -> np.ndarray:
    """D Sz^2 + gamma_e B.S + S.A.I + Q Iz^2 - gamma_n B.I in |m_S, m_I>."""
    b = _as_field(B)
    S = spin_operators(p.S)
    I = spin_operators(p.I)
    eS = np.eye(len(S[2]))
    eI = np.eye(len(I[2]))
    H = p.D * kron(S[2] @ S[2], eI)
    H += p.gamma_e * sum(bk * kron(Sk, eI) for bk, Sk in zip(b, S))
    H += p.A_perp * (kron(S[0], I[0]) + kron(S[1], I[1])) + p.A_par * kron(S[2], I[2])
    H += p.Q * kron(eS, I[2] @ I[2])
    if p.nuclear_zeeman:
        H -= p.gamma_n * sum(bk * kron(eS, Ik) for bk, Ik in zip(b, I))
    return H


def zeeman_operator(p: SpinSystemParams, direction=(0.0, 0.0, 1.0)) -> np.ndarray:
    """dH/dB along ``direction``; the Hamiltonian is linear in B."""
    n = np.asarray(direction, dtype=float)
    zero = replace(p, D=0.0, A_par=0.0, A_perp=0.0, Q=0.0)
    return spin_hamiltonian(n, zero)


def nv_hamiltonian(B, p: SpinSystemParams = NV_PARAMS) -> np.ndarray:
    """9x9 NV ground-state Hamiltonian with 14N hyperfine structure."""
    if p.S != 1.0:
        raise ValueError("NV Hamiltonian needs S = 1")
    return spin_hamiltonian(B, p)


def p1_hamiltonian(B, p: SpinSystemParams = P1_PARAMS) -> np.ndarray:
    """6x6 P1 Hamiltonian; ``B`` must already be in the P1 local frame."""
    if p.S != 0.5:
        raise ValueError("P1 Hamiltonian needs S = 1/2")
    return spin_hamiltonian(B, p)


def rotate_field(B: float, o: Orientation, azimuth: float = 0.0) -> FieldVector:
    """Express a lab field of magnitude ``B`` (along the NV axis) in the frame of ``o``.

    The transverse component is placed at ``azimuth`` in the local x-y plane;
    the spectrum does not depend on it because the hyperfine tensor is axial.
    """
    st, ct = math.sin(o.theta), math.cos(o.theta)
    return FieldVector(B * st * math.cos(azimuth), B * st * math.sin(azimuth), B * ct)


def field_frame(p: SpinSystemParams, o: Orientation, azimuth: float = 0.0) -> np.ndarray:
    """Unitary whose columns are |m_S, m_I> quantized along the applied field.

    Used to label off-axis eigenstates, whose local-frame projections are
    strongly mixed.  Identity for the on-axis orientation.
    """
    if o.theta == 0.0:
        return np.eye(p.dim, dtype=complex)
    S = spin_operators(p.S)
    I = spin_operators(p.I)
    gen_S = math.cos(azimuth) * S[1] - math.sin(azimuth) * S[0]
    gen_I = math.cos(azimuth) * I[1] - math.sin(azimuth) * I[0]
    return kron(expm(-1j * o.theta * gen_S), expm(-1j * o.theta * gen_I))


def electronic_hamiltonian(system: str, Bz: float, p: SpinSystemParams | None = None) -> np.ndarray:
    """Electron-only on-axis Hamiltonian: D Sz^2 + gamma_e Bz Sz."""
    if system == "nv":
        p = p or NV_PARAMS
        sz = spin_operators(1.0)[2]
        return p.D * sz @ sz + p.gamma_e * Bz * sz
    if system == "p1":
        p = p or P1_PARAMS
        sz = spin_operators(0.5)[2]
        return p.gamma_e * Bz * sz
    raise ValueError(f"system must be 'nv' or 'p1', got {system!r}")


def system_params(system: str) -> SpinSystemParams:
    if system == "nv":
        return NV_PARAMS
    if system == "p1":
        return P1_PARAMS
    raise ValueError(f"system must be 'nv' or 'p1', got {system!r}")


def hamiltonian(system: str, B: float, o: Orientation = ON_AXIS,
                p: SpinSystemParams | None = None, *, electron_only: bool = False,
                azimuth: float = 0.0) -> np.ndarray:
    """Hamiltonian of ``system`` in a lab field ``B`` along the NV axis."""
    p = p or system_params(system)
    b = rotate_field(B, o, azimuth)
    if electron_only:
        S = spin_operators(p.S)
        return p.D * S[2] @ S[2] + p.gamma_e * sum(bk * Sk for bk, Sk in zip(b.as_array(), S))
    return nv_hamiltonian(b, p) if system == "nv" else p1_hamiltonian(b, p)
