import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossrelax import dynamics as dyn
from crossrelax.dynamics import (NV_OPS, P1_OPS, DipoleGeometry, DriveParams, bare_hamiltonian, cw_hamiltonian,
                                 dipolar_hamiltonian, evolve, evolve_full_oracle, initial_state, matched_field,
                                 rotating_frame, thermal_polarization, total_hamiltonian)

from oracles import boltzmann_doublet, ops, pair_dipolar

B0 = matched_field()
G = DipoleGeometry()
OMEGA_NV = 2870 - 28.025 * B0
# |m_NV, m_P1> indices in the 6-dim product basis
IDX = {lab: k for k, lab in enumerate(dyn.PAIR_LABELS)}

unit = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: tuple(np.array(v) / np.linalg.norm(v)))


def test_matched_field_is_analytic():
    assert B0 == pytest.approx(2870 / (2 * 28.025))


def test_geometry_validation():
    with pytest.raises(ValueError):
        DipoleGeometry(r_hat=(1.0, 1.0, 0.0))
    with pytest.raises(ValueError):
        DipoleGeometry(coupling=float("nan"))
    with pytest.raises(ValueError):
        DriveParams(omega=-1.0)


def test_dipolar_zero_coupling():
    assert np.allclose(dipolar_hamiltonian(DipoleGeometry(coupling=0.0)), 0)


def test_dipolar_along_z_symbolic():
    # r = z: c (Sx Sx + Sy Sy - 2 Sz Sz) = c ((S+ S- + S- S+)/2 - 2 Sz Sz)
    c = 0.37
    S1, S2 = ops(1.0), ops(0.5)
    p1, p2 = S1[0] + 1j * S1[1], S2[0] + 1j * S2[1]
    ref = c * ((np.kron(p1, p2.conj().T) + np.kron(p1.conj().T, p2)) / 2 - 2 * np.kron(S1[2], S2[2]))
    H = dipolar_hamiltonian(DipoleGeometry((0, 0, 1), c))
    assert np.allclose(H, ref)
    # flip-flop |0,-1/2> <-> |-1,+1/2> present, double flip |0,+1/2> <-> |-1,-1/2> absent
    assert abs(H[IDX[(0, -0.5)], IDX[(-1, 0.5)]]) > 0
    assert abs(H[IDX[(0, 0.5)], IDX[(-1, -0.5)]]) == 0


@settings(max_examples=40, deadline=None)
@given(unit, st.floats(-2, 2))
def test_dipolar_matches_loop_oracle(r, c):
    H = dipolar_hamiltonian(DipoleGeometry(r, c))
    assert np.allclose(H, pair_dipolar(c, r), atol=1e-12)
    assert abs(np.trace(H)) < 1e-12
    assert np.allclose(H, H.conj().T)


def test_total_hamiltonian_uncoupled_spectrum():
    H = total_hamiltonian(40.0, DipoleGeometry(coupling=0.0))
    e_nv = [2870 + 28.025 * 40, 0, 2870 - 28.025 * 40]
    e_p1 = [28.025 * 20, -28.025 * 20]
    assert np.allclose(np.linalg.eigvalsh(H), sorted(a + b for a in e_nv for b in e_p1))


@pytest.mark.parametrize("c", [1e-3, 2e-3, 4e-3])
def test_resonant_pair_splitting_degenerate_pt(c):
    # |0,+1/2> and |-1,-1/2> are degenerate at B0; their mixing splits them by
    # sqrt(d^2 + 4|w|^2) using the 2x2 block of the dipolar term
    g = DipoleGeometry(coupling=c)
    Hd = dipolar_hamiltonian(g)
    i, j = IDX[(0, 0.5)], IDX[(-1, -0.5)]
    d = (Hd[i, i] - Hd[j, j]).real
    split_pt = math.sqrt(d * d + 4 * abs(Hd[i, j]) ** 2)
    w = np.linalg.eigvalsh(total_hamiltonian(B0, g))
    e_mean = 28.025 * B0 / 2
    near = np.sort(w[np.argsort(np.abs(w - e_mean))[:2]])
    assert near[1] - near[0] == pytest.approx(split_pt, rel=1e-3)


def test_cw_hamiltonian():
    H = total_hamiltonian(B0, G)
    d = DriveParams(OMEGA_NV, 1.0, 1.0)
    assert np.allclose(cw_hamiltonian(H, DriveParams(OMEGA_NV), 0.3), H)
    assert np.allclose(cw_hamiltonian(H, d, 1 / (4 * OMEGA_NV)), H, atol=1e-12)
    drive = cw_hamiltonian(H, d, 0.0) - H
    for a, la in enumerate(dyn.PAIR_LABELS):
        for b, lb in enumerate(dyn.PAIR_LABELS):
            if abs(drive[a, b]) > 0:
                dn, dp = abs(la[0] - lb[0]), abs(la[1] - lb[1])
                assert (dn, dp) in ((1, 0), (0, 1))


def test_rotating_frame_far_detuned_is_diagonal():
    rf = rotating_frame(total_hamiltonian(40.0, G), DriveParams(), cutoff=1.0)
    assert np.allclose(rf.H, np.diag(np.diag(rf.H)))
    assert not rf.kept_static.any()


def test_rotating_frame_matched_block():
    H = total_hamiltonian(B0, G)
    rf = rotating_frame(H, DriveParams())
    i, j = IDX[(0, 0.5)], IDX[(-1, -0.5)]
    Hd = dipolar_hamiltonian(G)
    # analytic rotating-frame element: the bare dipolar matrix element itself
    assert rf.H[i, j] == pytest.approx(Hd[i, j], abs=1e-12)
    off = rf.H - np.diag(np.diag(rf.H))
    off[i, j] = off[j, i] = 0
    assert np.allclose(off, 0)
    assert rf.kept_static[i, j] and rf.kept_static.sum() == 2


def test_rotating_frame_with_drive_structure():
    H = total_hamiltonian(B0, G)
    rf = rotating_frame(H, DriveParams(OMEGA_NV, 1.0, 1.0))
    # drive elements sit only on single spin flips, with amplitude Omega/2 <m'|S_x|m>
    for a, b in zip(*np.nonzero(rf.kept_drive)):
        la, lb = dyn.PAIR_LABELS[a], dyn.PAIR_LABELS[b]
        assert (abs(la[0] - lb[0]), abs(la[1] - lb[1])) in ((1, 0), (0, 1))
        op = NV_OPS[0] if la[1] == lb[1] else P1_OPS[0]
        assert abs(rf.H[a, b]) == pytest.approx(abs(op[a, b]) / 2)
    # NV 0 <-> -1 and P1 flips are resonant; NV 0 <-> +1 is not
    assert rf.kept_drive[IDX[(0, 0.5)], IDX[(-1, 0.5)]]
    assert rf.kept_drive[IDX[(0, 0.5)], IDX[(0, -0.5)]]
    assert not rf.kept_drive[IDX[(0, 0.5)], IDX[(1, 0.5)]]
    assert np.allclose(rf.H, rf.H.conj().T)


def test_initial_state():
    rho = initial_state()
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.trace(rho @ P1_OPS[2]).real == pytest.approx(0.0)
    assert np.trace(rho @ NV_OPS[2]).real == pytest.approx(0.0)
    assert np.trace(rho @ NV_OPS[2] @ NV_OPS[2]).real == pytest.approx(0.0)


def test_evolve_diagonal_constant():
    H = np.diag(np.arange(6.0))
    res = evolve(initial_state(), H, np.linspace(0, 10, 50))
    assert np.allclose(res.p1_polarization, res.p1_polarization[0])


def test_evolve_two_level_oracle():
    # on the resonant pair: P(t) = sin^2(2 pi |w| t), <S_P1z> = -P/2
    H = rotating_frame(total_hamiltonian(B0, G), DriveParams()).H
    w = abs(H[IDX[(0, 0.5)], IDX[(-1, -0.5)]])
    d = (H[IDX[(0, 0.5)], IDX[(0, 0.5)]] - H[IDX[(-1, -0.5)], IDX[(-1, -0.5)]]).real
    Om = math.sqrt(d * d + 4 * w * w)
    t = np.linspace(0, 30, 601)
    P = (4 * w * w / Om**2) * np.sin(math.pi * Om * t) ** 2
    res = evolve(initial_state(), H, t)
    assert np.allclose(res.p1_polarization, -P / 2, atol=1e-10)


def test_coupling_zero_no_polarization():
    g = DipoleGeometry(coupling=0.0)
    res = evolve(initial_state(), rotating_frame(total_hamiltonian(B0, g), DriveParams()).H, dyn.default_times())
    assert np.allclose(res.p1_polarization, 0)


def _first_peak_time(c):
    g = DipoleGeometry(coupling=c)
    H = rotating_frame(total_hamiltonian(B0, g), DriveParams()).H
    t = np.linspace(0, 1.5 / (8 * c * 0.7071), 20001)
    res = evolve(initial_state(), H, t)
    return t[np.argmax(np.abs(res.p1_polarization))]


def test_doubling_coupling_doubles_frequency():
    t1, t2 = _first_peak_time(0.1), _first_peak_time(0.2)
    assert t1 / t2 == pytest.approx(2.0, rel=0.02)


def test_state_properties_along_trajectory():
    H = rotating_frame(total_hamiltonian(B0, G), DriveParams(OMEGA_NV, 1.0, 1.0)).H
    res = evolve(initial_state(), H, np.linspace(0, 50, 101), keep_states=True)
    ev0 = np.linalg.eigvalsh(initial_state())
    for rho in res.states:
        assert np.allclose(rho, rho.conj().T, atol=1e-12)
        assert abs(np.trace(rho) - 1) <= 1e-10
        ev = np.linalg.eigvalsh(rho)
        assert ev.min() >= -1e-10
    assert np.allclose(np.linalg.eigvalsh(res.states[-1]), ev0, atol=1e-10)
    assert np.all(np.abs(res.p1_polarization) <= 0.5 + 1e-12)


def test_drive_speeds_up_transfer_and_lowers_peak():
    off = dyn.polarization_transfer(rabi=0.0)
    on = dyn.polarization_transfer(rabi=1.0)
    assert on.time_to_fraction(0.5) < off.time_to_fraction(0.5)
    assert off.peak() > on.peak()


def test_oracle_zero_hamiltonian():
    # zero coupling, no drive and zero splittings: rho constant
    from crossrelax.spin import SpinSystemParams
    nv0 = SpinSystemParams(D=0.0, gamma_e=1e-9)
    p10 = SpinSystemParams(D=0.0, gamma_e=1e-9, S=0.5)
    rho0 = initial_state()
    res = evolve_full_oracle(rho0, 0.0, DipoleGeometry(coupling=0.0), DriveParams(), [0.0, 1.0, 3.0],
                             step=1e-3, nv=nv0, p1=p10)
    for rho in res.states:
        assert np.allclose(rho, rho0)


def test_oracle_rejects_coarse_step():
    with pytest.raises(ValueError):
        evolve_full_oracle(initial_state(), B0, G, DriveParams(), [0.0, 1.0], step=1e-3)


@pytest.mark.parametrize("rabi", [0.0, 1.0])
def test_oracle_agrees_with_rotating_frame(rabi):
    d = DriveParams(OMEGA_NV, rabi, rabi)
    t = np.linspace(0, 200, 401)
    a = evolve(initial_state(), rotating_frame(total_hamiltonian(B0, G), d).H, t)
    b = evolve_full_oracle(initial_state(), B0, G, d, t)
    assert np.abs(a.p1_polarization - b.p1_polarization).max() <= 0.05


def test_oracle_step_halving_stable():
    d = DriveParams(OMEGA_NV, 1.0, 1.0)
    t = np.linspace(0, 20, 41)
    fmax = dyn.max_frequency(total_hamiltonian(B0, G), d)
    a = evolve_full_oracle(initial_state(), B0, G, d, t, step=1 / (40 * fmax))
    b = evolve_full_oracle(initial_state(), B0, G, d, t, step=1 / (80 * fmax))
    assert np.abs(a.p1_polarization - b.p1_polarization).max() < 1e-3


def test_oracle_energy_conservation_drive_off():
    H = total_hamiltonian(B0, G)
    rho0 = np.zeros((6, 6), complex)
    psi = np.ones(6) / math.sqrt(6)
    rho0 += np.outer(psi, psi)
    res = evolve_full_oracle(rho0, B0, G, DriveParams(), np.linspace(0, 5, 11))
    E = [np.trace(r @ H).real for r in res.states]
    assert np.ptp(E) < 1e-6
    assert max(abs(np.trace(r) - 1) for r in res.states) <= 1e-8


def test_thermal_polarization():
    assert thermal_polarization(0.0, 295) == 0.0
    v = thermal_polarization(51.2, 295)
    lo, hi = boltzmann_doublet(51.2, 295)
    # population difference relative to the mean population of the doublet
    assert v == pytest.approx((lo - hi) / ((lo + hi) / 2), rel=1e-9)
    assert 2.0e-4 <= v <= 2.6e-4
    vals = [thermal_polarization(51.2, T) for T in (10, 100, 1e3, 1e5)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        thermal_polarization(51.2, 0)


def test_second_order_frame_tracks_oracle_at_strong_coupling():
    g = DipoleGeometry(coupling=1.0)
    d = DriveParams(dyn.NV_PARAMS.D - dyn.NV_PARAMS.gamma_e * B0, 1.0, 1.0)
    t = np.linspace(0, 200, 2000)
    full = evolve_full_oracle(initial_state(), B0, g, d, t)
    H = total_hamiltonian(B0, g)
    first = evolve(initial_state(), rotating_frame(H, d).H, t)
    second = evolve(initial_state(), rotating_frame(H, d, second_order=True).H, t)
    err1 = np.abs(first.p1_polarization - full.p1_polarization).max()
    err2 = np.abs(second.p1_polarization - full.p1_polarization).max()
    assert err2 < 1e-3 < err1


def test_second_order_frame_is_hermitian_and_keeps_pattern():
    d = DriveParams(dyn.NV_PARAMS.D - dyn.NV_PARAMS.gamma_e * B0, 1.0, 1.0)
    H = total_hamiltonian(B0, G)
    a, b = rotating_frame(H, d), rotating_frame(H, d, second_order=True)
    assert np.allclose(b.H, b.H.conj().T, atol=1e-14)
    assert np.array_equal(a.kept_static, b.kept_static)
    assert np.abs(b.H - a.H).max() < 1e-3
