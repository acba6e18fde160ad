"""Hermitian eigensolver, state labeling, transition tables and level sweeps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .spin import (
    ON_AXIS,
    HERMITIAN_RTOL,
    Orientation,
    SpinSystemParams,
    basis_labels,
    field_frame,
    hamiltonian,
    system_params,
)

JACOBI_TOL = 1e-13
MAX_SWEEPS = 60


class ConvergenceError(RuntimeError):
    """An iterative routine exhausted its iteration budget."""


def jacobi_eigh(H: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = MAX_SWEEPS):
    """Cyclic Jacobi diagonalization of one Hermitian matrix or a stack of them.

    Parameters
    ----------
    H : array_like, shape (n, n) or (N, n, n)
        Hermitian input.  Not validated here; see :func:`eigensolve`.
    tol : float
        Stop when the off-diagonal Frobenius norm falls below ``tol * ||H||``
        for every matrix of the stack.

    Returns
    -------
    values : ndarray, shape (..., n)
        Ascending eigenvalues.
    vectors : ndarray, shape (..., n, n)
        Orthonormal eigenvectors as columns.  Each column's largest-magnitude
        entry is made real and positive.
    """
    H = np.asarray(H)
    single = H.ndim == 2
    A = np.array(H[None] if single else H, dtype=complex, copy=True)
    N, n, _ = A.shape
    V = np.broadcast_to(np.eye(n, dtype=complex), A.shape).copy()
    scale = np.linalg.norm(A, axis=(1, 2))
    scale[scale == 0] = 1.0
    offmask = ~np.eye(n, dtype=bool)

    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(A[:, offmask]) ** 2, axis=1))
        if np.all(off <= tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p, q]
                mag = np.abs(apq)
                # entries far below the stopping threshold are left alone (avoids overflow on subnormals)
                nz = mag > 1e-30 * scale
                if not nz.any():
                    continue
                safe = np.where(nz, mag, 1.0)
                tau = (A[:, q, q].real - A[:, p, p].real) / (2 * safe)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
                t = np.where(nz, t, 0.0)
                c = 1 / np.sqrt(1 + t * t)
                s = t * c
                ph = np.where(nz, apq / safe, 1.0)
                # U = [[c, s*ph], [-s*conj(ph), c]] on the (p, q) plane
                u_pq = (s * ph)[:, None]
                u_qp = (-s * ph.conj())[:, None]
                cc = c[:, None]
                Ap, Aq = A[:, :, p].copy(), A[:, :, q].copy()
                A[:, :, p] = cc * Ap + u_qp * Aq
                A[:, :, q] = u_pq * Ap + cc * Aq
                Rp, Rq = A[:, p, :].copy(), A[:, q, :].copy()
                A[:, p, :] = cc * Rp + u_qp.conj() * Rq
                A[:, q, :] = u_pq.conj() * Rp + cc * Rq
                A[:, p, q] = 0.0
                A[:, q, p] = 0.0
                Vp, Vq = V[:, :, p].copy(), V[:, :, q].copy()
                V[:, :, p] = cc * Vp + u_qp * Vq
                V[:, :, q] = u_pq * Vp + cc * Vq
    else:
        off = np.sqrt(np.sum(np.abs(A[:, offmask]) ** 2, axis=1))
        if not np.all(off <= tol * scale):
            raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")

    values = np.real(np.diagonal(A, axis1=1, axis2=2))
    order = np.argsort(values, axis=1, kind="stable")
    values = np.take_along_axis(values, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    V = _fix_phase(V)
    if single:
        return values[0], V[0]
    return values, V


def _fix_phase(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=1)  # (N, n) row of the largest entry per column
    pivot = np.take_along_axis(V, idx[:, None, :], axis=1)[:, 0, :]
    return V * (np.abs(pivot) / pivot)[:, None, :]


@dataclass
class EigenSystem:
    """Sorted eigenpairs of one Hermitian matrix.

    ``labels[k]`` is the basis tag assigned to state ``k`` and
    ``dominant_weight[k]`` the weight of that basis component.  Both are None
    until :func:`label_states` has run.
    """

    values: np.ndarray
    vectors: np.ndarray
    labels: list | None = None
    dominant_weight: np.ndarray | None = None

    def index(self, label) -> int:
        if isinstance(label, (int, np.integer)):
            if not 0 <= label < len(self.values):
                raise KeyError(f"level index {label} out of range")
            return int(label)
        if self.labels is None:
            raise KeyError("eigensystem is not labeled")
        try:
            return self.labels.index(tuple(label))
        except ValueError:
            raise KeyError(f"no state labeled {label!r}") from None

    def energy(self, label) -> float:
        return float(self.values[self.index(label)])


def eigensolve(H: np.ndarray) -> EigenSystem:
    """Diagonalize a Hermitian matrix with cyclic Jacobi rotations."""
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise ValueError("matrix has non-finite entries")
    if np.max(np.abs(H - H.conj().T), initial=0.0) > HERMITIAN_RTOL * max(np.linalg.norm(H), 1.0):
        raise ValueError("matrix is not Hermitian")
    values, vectors = jacobi_eigh(H)
    return EigenSystem(values, vectors)


def assign_labels(weights: np.ndarray, values: np.ndarray):
    """Give every state a distinct basis index.

    ``weights[i, k]`` is |<basis_i|state_k>|^2.  Pairs are taken in order of
    decreasing weight (lower eigenvalue first on ties), so a state that loses
    its dominant ket to a heavier claimant takes its next-largest free one.
    """
    n = weights.shape[0]
    rank = np.argsort(np.argsort(values, kind="stable"), kind="stable")
    order = sorted(
        ((weights[i, k], rank[k], i, k) for i in range(n) for k in range(n)),
        key=lambda w: (-w[0], w[1], w[2]),
    )
    basis_of = np.full(n, -1)
    taken = np.zeros(n, dtype=bool)
    for _, _, i, k in order:
        if basis_of[k] < 0 and not taken[i]:
            basis_of[k] = i
            taken[i] = True
    return basis_of


def label_states(es: EigenSystem, labels: list | None = None, frame: np.ndarray | None = None) -> EigenSystem:
    """Tag each state with its dominant basis ket.

    Parameters
    ----------
    labels : list, optional
        Tag of each basis ket; defaults to the basis index.
    frame : ndarray, optional
        Unitary whose columns are the labeling basis.  Off-axis centers are
        labeled in the field-quantized basis from :func:`spin.field_frame`.
    """
    n = len(es.values)
    labels = list(labels) if labels is not None else [(i,) for i in range(n)]
    vecs = es.vectors if frame is None else frame.conj().T @ es.vectors
    weights = np.abs(vecs) ** 2
    basis_of = assign_labels(weights, es.values)
    return EigenSystem(
        es.values,
        es.vectors,
        [tuple(labels[i]) for i in basis_of],
        weights[basis_of, np.arange(n)],
    )


def solve_system(system: str, B: float, o: Orientation = ON_AXIS,
                 p: SpinSystemParams | None = None, *, electron_only: bool = False) -> EigenSystem:
    """Eigensolve and label one defect at lab field ``B``."""
    p = p or system_params(system)
    H = hamiltonian(system, B, o, p, electron_only=electron_only)
    tags = basis_labels(p.S, None if electron_only else p.I)
    frame = None if electron_only or system == "nv" else field_frame(p, o)
    return label_states(eigensolve(H), tags, frame)


@dataclass(frozen=True)
class TransitionLine:
    from_label: tuple
    to_label: tuple
    frequency: float
    B: float
    system: str
    orientation: Orientation = ON_AXIS

    @property
    def delta_ms(self) -> float:
        return self.to_label[0] - self.from_label[0]

    @property
    def delta_mi(self) -> float:
        return self.to_label[1] - self.from_label[1] if len(self.to_label) > 1 else 0.0


def _line_pairs(system: str, labels: list, full: bool):
    nuclear = len(labels[0]) > 1
    if system == "nv":
        starts = [x for x in labels if x[0] == 0]
        ends = [x for x in labels if abs(x[0]) == 1]
    else:
        starts = [x for x in labels if x[0] == -0.5]
        ends = [x for x in labels if x[0] == 0.5]
    for a in starts:
        for b in ends:
            if nuclear and not full and a[1] != b[1]:
                continue
            yield a, b


def transition_table(system: str, B: float, orientation: Orientation = ON_AXIS, *,
                     full: bool = False, params: SpinSystemParams | None = None,
                     electron_only: bool = False) -> list[TransitionLine]:
    """MW-addressable lines (Delta m_S = +-1) of ``system`` at field ``B``.

    NV lines start in m_S = 0, P1 lines go from m_S = -1/2 to +1/2.  Only
    nuclear-spin-conserving lines are returned unless ``full`` is set.  Each
    line is oriented so its frequency is positive.
    """
    if B < 0:
        raise ValueError("field magnitude must be non-negative")
    es = solve_system(system, B, orientation, params, electron_only=electron_only)
    lines = []
    for a, b in _line_pairs(system, es.labels, full):
        f = es.energy(b) - es.energy(a)
        if f < 0:
            a, b, f = b, a, -f
        lines.append(TransitionLine(a, b, f, B, system, orientation))
    lines.sort(key=lambda ln: ln.frequency)
    return lines


@dataclass
class LevelSweep:
    """Eigenvalues over a field grid, one continuity-tracked column per state."""

    fields: np.ndarray
    energies: np.ndarray
    labels: list
    vectors: np.ndarray = field(repr=False)
    system: str = "nv"
    orientation: Orientation = ON_AXIS

    def column(self, label) -> np.ndarray:
        return self.energies[:, self.labels.index(tuple(label))]

    def splitting(self, from_label, to_label) -> np.ndarray:
        return self.column(to_label) - self.column(from_label)


def track_states(vectors: np.ndarray, anchor: int) -> np.ndarray:
    """Permutation per step that follows each state by maximal eigenvector overlap.

    Returns ``perm`` with ``perm[i, k]`` the eigen-index at step ``i`` of the
    state occupying column ``k`` at ``anchor``.
    """
    steps, n, _ = vectors.shape
    perm = np.empty((steps, n), dtype=int)
    perm[anchor] = np.arange(n)

    def follow(i_from, i_to):
        prev = vectors[i_from][:, perm[i_from]]
        overlap = np.abs(prev.conj().T @ vectors[i_to]) ** 2
        rows, cols = linear_sum_assignment(-overlap)
        perm[i_to] = cols[np.argsort(rows)]

    for i in range(anchor + 1, steps):
        follow(i - 1, i)
    for i in range(anchor - 1, -1, -1):
        follow(i + 1, i)
    return perm


def level_sweep(system: str, B_range=(0.0, 110.0), steps: int | None = None, orientation: Orientation = ON_AXIS,
                *, step: float = 0.01, params: SpinSystemParams | None = None,
                electron_only: bool = False) -> LevelSweep:
    """Energy levels of ``system`` over a field range with labels followed adiabatically.

    Labels are fixed by the dominant basis component at the least-mixed grid
    point and carried to the others by eigenvector overlap of neighbours.
    ``steps`` (number of grid points) overrides ``step``.
    """
    b0, b1 = map(float, B_range)
    if not b1 > b0:
        raise ValueError("field range must be increasing")
    if steps is None:
        steps = int(round((b1 - b0) / step)) + 1
    if steps < 2:
        raise ValueError("a sweep needs at least two points")
    p = params or system_params(system)
    fields = np.linspace(b0, b1, steps)
    # H is affine in the field magnitude: H(B) = H(0) + B (H(1) - H(0))
    H0 = hamiltonian(system, 0.0, orientation, p, electron_only=electron_only)
    Z = hamiltonian(system, 1.0, orientation, p, electron_only=electron_only) - H0
    Hs = H0[None] + fields[:, None, None] * Z[None]
    values, vectors = jacobi_eigh(Hs)

    tags = basis_labels(p.S, None if electron_only else p.I)
    frame = None if electron_only or system == "nv" else field_frame(p, orientation)
    lab_vecs = vectors if frame is None else frame.conj().T @ vectors
    weights = np.abs(lab_vecs) ** 2
    anchor = int(np.argmax(weights.max(axis=1).min(axis=1)))
    basis_of = assign_labels(weights[anchor], values[anchor])
    perm = track_states(vectors, anchor)

    # columns in basis order: column j holds the state labeled tags[j]
    col_of_basis = np.argsort(basis_of)
    perm = perm[:, col_of_basis]
    energies = np.take_along_axis(values, perm, axis=1)
    tracked = np.take_along_axis(vectors, perm[:, None, :], axis=2)
    return LevelSweep(fields, energies, [tuple(t) for t in tags], tracked, system, orientation)


def manifold_energies(sweep: LevelSweep, ms: float) -> np.ndarray:
    """Weighted mean energy of the m_S = ``ms`` manifold at each field.

    Each eigenvalue contributes with its probability of lying in the
    manifold, so the result does not depend on how mixed states are labeled.
    """
    sel = np.array([t[0] == ms for t in sweep.labels])
    p = np.sum(np.abs(sweep.vectors[:, sel, :]) ** 2, axis=1)
    return np.sum(p * sweep.energies, axis=1) / np.sum(p, axis=1)


def manifold_gap(sweep: LevelSweep, ms_a: float = 0.0, ms_b: float = -1.0) -> np.ndarray:
    return manifold_energies(sweep, ms_b) - manifold_energies(sweep, ms_a)


def find_gslac(sweep: LevelSweep) -> float:
    """Field of the minimal m_S = 0 / -1 gap, refined by linear interpolation."""
    gap = manifold_gap(sweep, 0.0, -1.0)
    k = int(np.argmin(np.abs(gap)))
    for j in (k - 1, k):
        if 0 <= j < len(gap) - 1 and gap[j] * gap[j + 1] <= 0 and gap[j] != gap[j + 1]:
            b0, b1 = sweep.fields[j], sweep.fields[j + 1]
            return float(b0 - gap[j] * (b1 - b0) / (gap[j + 1] - gap[j]))
    return float(sweep.fields[k])


def hellmann_feynman_slopes(es: EigenSystem, dH: np.ndarray) -> np.ndarray:
    """<v_k| dH |v_k> for every eigenvector."""
    return np.real(np.einsum("ik,ij,jk->k", es.vectors.conj(), dH, es.vectors))
