import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crossrelax.eigen import (ConvergenceError, eigensolve, find_gslac, hellmann_feynman_slopes,
                              jacobi_eigh, label_states, level_sweep, manifold_gap, solve_system,
                              transition_table)
from crossrelax.spin import NV_PARAMS, OFF_AXIS, ON_AXIS, basis_labels, hamiltonian, zeeman_operator

from oracles import NV, P1, TETRA, gslac_centroid, labeled_levels


def random_hermitian(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


def test_jacobi_batch_against_numpy():
    rng = np.random.default_rng(0)
    H = np.array([random_hermitian(rng, 7) for _ in range(50)])
    w, V = jacobi_eigh(H)
    assert np.allclose(w, np.linalg.eigvalsh(H), atol=1e-12)
    assert np.allclose(H @ V, V * w[:, None, :], atol=1e-11)


def test_jacobi_diagonal_and_trivial():
    w, V = jacobi_eigh(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(w, [1, 2, 3])
    assert np.allclose(np.abs(V), np.eye(3)[:, [1, 2, 0]])
    w, V = jacobi_eigh(np.zeros((4, 4)))
    assert np.allclose(w, 0) and np.allclose(V, np.eye(4))


def test_jacobi_phase_convention():
    rng = np.random.default_rng(3)
    _, V = jacobi_eigh(random_hermitian(rng, 5))
    piv = V[np.argmax(np.abs(V), axis=0), np.arange(5)]
    assert np.allclose(piv.imag, 0) and np.all(piv.real > 0)


def test_jacobi_degenerate():
    rng = np.random.default_rng(4)
    Q, _ = np.linalg.qr(rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6)))
    H = Q @ np.diag([1, 1, 1, 2, 2, 5.0]) @ Q.conj().T
    w, V = jacobi_eigh(H)
    assert np.allclose(w, [1, 1, 1, 2, 2, 5], atol=1e-12)
    assert np.allclose(V.conj().T @ V, np.eye(6), atol=1e-12)


def test_jacobi_budget():
    rng = np.random.default_rng(5)
    with pytest.raises(ConvergenceError):
        jacobi_eigh(random_hermitian(rng, 9), max_sweeps=1)


@settings(max_examples=80, deadline=None)
@given(arrays(np.float64, (2, 4, 4), elements=st.floats(-1e3, 1e3)))
def test_jacobi_property(parts):
    H = parts[0] + 1j * parts[1]
    H = (H + H.conj().T) / 2
    w, V = jacobi_eigh(H)
    scale = max(np.linalg.norm(H), 1.0)
    assert np.linalg.norm(H @ V - V * w) <= 1e-10 * scale
    assert np.linalg.norm(V.conj().T @ V - np.eye(4)) <= 1e-10
    assert np.all(np.diff(w) >= 0)


def test_eigensolve_validation():
    with pytest.raises(ValueError):
        eigensolve(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        eigensolve(np.array([[np.nan, 0], [0, 1]]))
    with pytest.raises(ValueError):
        eigensolve(np.ones(3))


def test_labeling_tie_and_index():
    es = label_states(eigensolve(np.array([[0.0, 1.0], [1.0, 0.0]])))
    assert es.labels == [(0,), (1,)]
    assert np.allclose(es.dominant_weight, 0.5)
    assert es.index(1) == 1
    with pytest.raises(KeyError):
        es.index((7,))


@pytest.mark.parametrize("B", [1.0, 20.0, 51.2, 90.0])
def test_nv_labels_match_oracle(B):
    es = solve_system("nv", B)
    ref = labeled_levels(NV, B)
    for lab, e in ref.items():
        assert es.energy(lab) == pytest.approx(e, abs=1e-8)


def test_p1_labels_match_oracle():
    # below ~10 mT the P1 hyperfine term dominates and labels lose meaning
    for B in (20.0, 51.2, 90.0):
        es = solve_system("p1", B, OFF_AXIS)
        ref = labeled_levels(P1, B, TETRA)
        for lab, e in ref.items():
            assert es.energy(lab) == pytest.approx(e, abs=1e-8)


def test_off_axis_labels_are_clean():
    es = solve_system("p1", 51.2, OFF_AXIS)
    assert es.dominant_weight.min() > 0.95


def test_transition_table_zero_field():
    # at B = 0 the NV m_I-conserving lines sit near D
    lines = transition_table("nv", 0.0)
    assert len(lines) == 6
    assert all(abs(ln.frequency - 2870) < 5 for ln in lines)


def test_transition_table_structure():
    nv = transition_table("nv", 51.2)
    assert all(ln.delta_mi == 0 and abs(ln.delta_ms) == 1 for ln in nv)
    assert [ln.frequency for ln in nv] == sorted(ln.frequency for ln in nv)
    assert len(transition_table("p1", 51.2)) == 3
    full = transition_table("p1", 51.2, full=True)
    assert len(full) == 9 and all(ln.frequency > 0 for ln in full)
    eo = transition_table("nv", 51.2, electron_only=True)
    assert [ln.frequency for ln in eo] == pytest.approx([2870 - 28.025 * 51.2, 2870 + 28.025 * 51.2])
    with pytest.raises(ValueError):
        transition_table("nv", -1.0)


def test_p1_hyperfine_at_resonance():
    # the three m_I-conserving P1 lines are split by roughly A_par
    f = [ln.frequency for ln in transition_table("p1", 51.2)]
    assert f[1] - f[0] == pytest.approx(113.98, rel=0.05)
    assert f[2] - f[1] == pytest.approx(113.98, rel=0.05)


def test_hellmann_feynman():
    B, h = 37.3, 1e-4
    for system, o in (("nv", ON_AXIS), ("p1", OFF_AXIS)):
        es = eigensolve(hamiltonian(system, B, o))
        from crossrelax.spin import rotate_field, system_params
        d = rotate_field(1.0, o).as_array()
        slopes = hellmann_feynman_slopes(es, zeeman_operator(system_params(system), d))
        fd = (np.linalg.eigvalsh(hamiltonian(system, B + h, o)) - np.linalg.eigvalsh(hamiltonian(system, B - h, o))) / (2 * h)
        assert np.allclose(slopes, fd, rtol=1e-4, atol=1e-4 * np.abs(fd).max())


def test_level_sweep_shape_and_continuity():
    sw = level_sweep("nv", (40, 60), steps=201)
    assert sw.energies.shape == (201, 9)
    assert sw.labels == basis_labels(1.0)
    # tracked columns are smooth: no jumps above the largest Zeeman slope times the step
    assert np.abs(np.diff(sw.energies, axis=0)).max() < 28.1 * 0.1 + 1e-6
    s = sw.splitting((0.0, 0.0), (-1.0, 0.0))
    assert np.all(np.diff(s) < 0)


def test_level_sweep_p1_off_axis():
    sw = level_sweep("p1", (0, 110), steps=111, orientation=OFF_AXIS)
    assert sw.energies.shape == (111, 6)
    with pytest.raises(ValueError):
        level_sweep("nv", (5, 5))


def test_gslac_electron_only_is_D_over_gamma():
    sw = level_sweep("nv", (95, 110), step=0.01, electron_only=True)
    assert find_gslac(sw) == pytest.approx(2870 / 28.025, abs=1e-6)


def test_gslac_matches_oracle():
    sw = level_sweep("nv", (95, 110), step=0.01)
    assert find_gslac(sw) == pytest.approx(gslac_centroid(), abs=1e-3)
    gap = manifold_gap(sw)
    assert gap[0] > 0 > gap[-1]


def test_sweep_speed():
    t = time.perf_counter()
    level_sweep("nv", (0, 110), step=0.01)
    assert time.perf_counter() - t < 5.0
