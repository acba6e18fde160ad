"""Cross-relaxation resonances: fields where an NV splitting equals a partner splitting."""

from __future__ import annotations

import string
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .eigen import ConvergenceError, TransitionLine, level_sweep, solve_system
from .spin import NV_PARAMS, ON_AXIS, P1_PARAMS, Orientation, SpinSystemParams, orientation

RESIDUAL_TOL = 1e-3
DEFAULT_CLUSTER_TOL = 0.15
PEAK_LETTERS = string.ascii_uppercase[:9]


def splitting(system: str, from_label, to_label, B: float, o: Orientation = ON_AXIS,
              params: SpinSystemParams | None = None, *, electron_only: bool = False) -> float:
    """E(to_label) - E(from_label) in MHz at lab field ``B``.

    Labels are (m_S, m_I) tags, (m_S,) tags for electron-only systems, or
    plain ints meaning the level index in ascending energy.
    """
    es = solve_system(system, B, o, params, electron_only=electron_only)
    return es.energy(to_label) - es.energy(from_label)


@dataclass(frozen=True)
class LevelPair:
    """A pair of levels of one defect whose splitting takes part in a match."""

    system: str
    from_label: tuple | int
    to_label: tuple | int
    orientation: Orientation = ON_AXIS
    params: SpinSystemParams | None = None
    electron_only: bool = False

    def splitting(self, B: float) -> float:
        return splitting(self.system, self.from_label, self.to_label, B, self.orientation,
                         self.params, electron_only=self.electron_only)

    def line(self, B: float) -> TransitionLine:
        return TransitionLine(self.from_label, self.to_label, self.splitting(B), B,
                              self.system, self.orientation)


@dataclass
class ResonanceMatch:
    """Field ``B_star`` where two splittings coincide.

    The second partner is normally a P1 line but may be another NV line
    (on-axis versus off-axis NV cross-relaxation).
    """

    nv_line: TransitionLine
    p1_line: TransitionLine
    B_star: float
    orientation: str
    residual: float
    delta_m: int | None = None
    weight: float = 1.0
    peak_id: str | None = None

    @property
    def flagged(self) -> bool | None:
        """True when |delta m| <= 2."""
        return None if self.delta_m is None else self.delta_m <= 2


def _projection_change(line: TransitionLine) -> float:
    return sum(b - a for a, b in zip(line.from_label, line.to_label))


def classify_delta_m(m: ResonanceMatch) -> int:
    """|dm_S,NV + dm_I,NV + dm_S,P1 + dm_I,P1| of a match."""
    for line in (m.nv_line, m.p1_line):
        if not isinstance(line.from_label, tuple):
            raise ValueError("delta m needs projection labels, not level indices")
    return int(round(abs(_projection_change(m.nv_line) + _projection_change(m.p1_line))))


def _bracketed_root(f, a, b, fa, fb, ftol, xtol, max_iter):
    # secant steps kept inside the bracket; bisection whenever the bracket
    # fails to halve over two consecutive iterations
    width = b - a
    stalled = 0
    for _ in range(max_iter):
        x = b - fb * (b - a) / (fb - fa) if fb != fa else 0.5 * (a + b)
        if stalled >= 2 or not a < x < b:
            x = 0.5 * (a + b)
            stalled = 0
        fx = f(x)
        if abs(fx) <= ftol:
            return x, fx
        if np.sign(fx) == np.sign(fa):
            a, fa = x, fx
        else:
            b, fb = x, fx
        if b - a <= xtol:
            x = a if abs(fa) < abs(fb) else b
            return x, fa if x == a else fb
        stalled = stalled + 1 if b - a > 0.5 * width else 0
        width = b - a
    raise ConvergenceError(f"root not found in {max_iter} iterations; bracket [{a}, {b}]")


def match_resonance(first: LevelPair, second: LevelPair, bracket, *, ftol: float = 1e-6,
                    xtol: float = 1e-7, max_iter: int = 200, guess: float | None = None):
    """Field in ``bracket`` where ``first`` and ``second`` have equal splittings.

    Returns None when the splitting difference has no sign change over the
    bracket.  Raises :class:`ConvergenceError` if the iteration budget runs
    out or the difference jumps across zero (a label discontinuity).
    """
    a, b = map(float, bracket)
    f = lambda B: first.splitting(B) - second.splitting(B)  # noqa: E731
    fa, fb = f(a), f(b)
    if fa == 0:
        x, fx = a, fa
    elif fb == 0:
        x, fx = b, fb
    elif np.sign(fa) == np.sign(fb):
        return None
    else:
        if guess is not None and a < guess < b:
            fg = f(guess)
            if abs(fg) <= ftol:
                x, fx = guess, fg
                return _make_match(first, second, x, fx)
            if np.sign(fg) == np.sign(fa):
                a, fa = guess, fg
            else:
                b, fb = guess, fg
        x, fx = _bracketed_root(f, a, b, fa, fb, ftol, xtol, max_iter)
    if abs(fx) > RESIDUAL_TOL:
        raise ConvergenceError(f"splitting difference jumps across zero near {x:.6f} mT (|f| = {abs(fx):.3g} MHz)")
    return _make_match(first, second, x, fx)


def _make_match(first: LevelPair, second: LevelPair, x: float, fx: float) -> ResonanceMatch:
    m = ResonanceMatch(first.line(x), second.line(x), float(x), second.orientation.kind, float(abs(fx)))
    if isinstance(first.from_label, tuple) and isinstance(second.from_label, tuple):
        m.delta_m = classify_delta_m(m)
    return m


@dataclass(frozen=True)
class ResonanceConfig:
    """Selection of lines and search settings for :func:`resonance_table`."""

    nv_initial: tuple = (0.0, 1.0)
    window: tuple = (45.0, 57.0)
    scan_step: float = 0.005
    orientations: tuple = ("on", "off")
    include_p1_flips: bool = True
    electron_only: bool = False
    nv_params: SpinSystemParams = NV_PARAMS
    p1_params: SpinSystemParams = P1_PARAMS
    off_axis_weight: float = 3.0

    def __post_init__(self):
        if not self.window[1] > self.window[0]:
            raise ValueError("search window must be increasing")
        if not self.scan_step > 0:
            raise ValueError("scan step must be positive")
        for o in self.orientations:
            orientation(o)


def nv_pairs(cfg: ResonanceConfig) -> list[LevelPair]:
    """NV 0 -> -1 family starting from the configured initial sublevel."""
    if cfg.electron_only:
        return [LevelPair("nv", (0.0,), (-1.0,), ON_AXIS, cfg.nv_params, True)]
    start = tuple(float(x) for x in cfg.nv_initial)
    return [LevelPair("nv", start, (-1.0, mi), ON_AXIS, cfg.nv_params) for mi in (1.0, 0.0, -1.0)]


def p1_pairs(cfg: ResonanceConfig, kind: str) -> list[LevelPair]:
    o = orientation(kind)
    if cfg.electron_only:
        return [LevelPair("p1", (-0.5,), (0.5,), o, cfg.p1_params, True)]
    out = []
    for m in (1.0, 0.0, -1.0):
        for mp in (1.0, 0.0, -1.0):
            if cfg.include_p1_flips or m == mp:
                out.append(LevelPair("p1", (-0.5, m), (0.5, mp), o, cfg.p1_params))
    return out


def _sweep_splittings(pairs: list[LevelPair], grid: np.ndarray) -> np.ndarray:
    p = pairs[0]
    sweep = level_sweep(p.system, (grid[0], grid[-1]), len(grid), p.orientation,
                        params=p.params, electron_only=p.electron_only)
    out = []
    for q in pairs:
        if isinstance(q.from_label, int):
            out.append(np.sort(sweep.energies, axis=1)[:, q.to_label] - np.sort(sweep.energies, axis=1)[:, q.from_label])
        else:
            out.append(sweep.splitting(q.from_label, q.to_label))
    return np.array(out)


def scan_matches(first: list[LevelPair], second: list[LevelPair], window, step: float,
                 weight: float = 1.0, diagnostics: list | None = None) -> list[ResonanceMatch]:
    """Grid-scan every (first, second) pair over ``window`` and refine each sign change."""
    n = int(round((window[1] - window[0]) / step)) + 1
    grid = np.linspace(window[0], window[1], n)
    fa = _sweep_splittings(first, grid)
    fb = _sweep_splittings(second, grid)
    matches = []
    for i, pa in enumerate(first):
        for j, pb in enumerate(second):
            diff = fa[i] - fb[j]
            for k in np.nonzero(np.sign(diff[:-1]) * np.sign(diff[1:]) <= 0)[0]:
                if diff[k + 1] == 0 and k + 2 < n:
                    continue  # counted by the next interval
                lo, hi = grid[k], grid[k + 1]
                guess = lo - diff[k] * (hi - lo) / (diff[k + 1] - diff[k]) if diff[k + 1] != diff[k] else None
                try:
                    m = match_resonance(pa, pb, (lo, hi), guess=guess)
                except ConvergenceError as exc:
                    if diagnostics is None:
                        raise
                    diagnostics.append(f"{pa.to_label} vs {pb.from_label}->{pb.to_label}: {exc}")
                    continue
                if m is not None:
                    m.weight = weight
                    matches.append(m)
    return matches


def resonance_table(cfg: ResonanceConfig | None = None, diagnostics: list | None = None) -> list[ResonanceMatch]:
    """Every NV 0 -> -1 hyperfine line matched against every selected P1 line.

    Off-axis matches carry ``cfg.off_axis_weight`` (three equivalent axes).
    Rows that fail to converge are appended to ``diagnostics`` when a list is
    given; otherwise the error propagates.
    """
    cfg = cfg or ResonanceConfig()
    matches = []
    for kind in cfg.orientations:
        w = 1.0 if kind == "on" else cfg.off_axis_weight
        matches += scan_matches(nv_pairs(cfg), p1_pairs(cfg, kind), cfg.window, cfg.scan_step, w, diagnostics)
    matches.sort(key=lambda m: m.B_star)
    return matches


def nv_nv_resonances(bracket=(55.0, 65.0), step: float = 0.01, params: SpinSystemParams = NV_PARAMS):
    """Electron-only on-axis NV 0 -> -1 matched against every off-axis NV level pair."""
    first = [LevelPair("nv", (0.0,), (-1.0,), ON_AXIS, params, True)]
    off = orientation("off")
    second = [LevelPair("nv", i, j, off, params, True) for i, j in combinations(range(3), 2)]
    return scan_matches(first, second, bracket, step)


@dataclass
class PeakCluster:
    """A group of matches that show up as one cross-relaxation peak.

    ``entries`` are the positions that were clustered: with NV hyperfine
    triplets collapsed, one mean field per (orientation, partner line).
    """

    peak_id: str
    members: list = field(repr=False)
    mean_B: float
    multiplicity: float
    entries: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def orientations(self) -> set:
        return {m.orientation for m in self.members}

    @property
    def flagged_count(self) -> int:
        return sum(1 for m in self.members if m.flagged)


def _entries(matches, collapse_nv: bool):
    if not collapse_nv:
        return [(m.B_star, [m]) for m in matches]
    groups: dict = {}
    for m in matches:
        key = (m.orientation, m.p1_line.from_label, m.p1_line.to_label)
        groups.setdefault(key, []).append(m)
    return [(float(np.mean([m.B_star for m in g])), g) for g in groups.values()]


def cluster_peaks(matches, tol: float = DEFAULT_CLUSTER_TOL, *, collapse_nv: bool = True) -> list[PeakCluster]:
    """Single-linkage clustering of match fields.

    With ``collapse_nv`` each NV hyperfine triplet against one partner line
    is first replaced by its mean field, the quantity tabulated per peak.
    Clusters are ordered by field and lettered A-I when exactly nine form;
    any other count gets neutral ids and a warning.  Sets ``peak_id`` on
    every member match.
    """
    if not tol > 0:
        raise ValueError("cluster tolerance must be positive")
    entries = sorted(_entries(matches, collapse_nv), key=lambda e: e[0])
    groups: list[list] = []
    for pos, members in entries:
        if groups and pos - groups[-1][-1][0] <= tol:
            groups[-1].append((pos, members))
        else:
            groups.append([(pos, members)])
    if len(groups) == len(PEAK_LETTERS):
        ids = list(PEAK_LETTERS)
    else:
        warnings.warn(f"{len(groups)} clusters formed instead of 9; using neutral peak ids", stacklevel=2)
        ids = [f"X{k + 1}" for k in range(len(groups))]
    clusters = []
    for pid, g in zip(ids, groups):
        members = [m for _, ms in g for m in ms]
        for m in members:
            m.peak_id = pid
        clusters.append(PeakCluster(
            pid, members,
            float(np.mean([m.B_star for m in members])),
            float(sum(m.weight for m in members)),
            np.array([pos for pos, _ in g]),
        ))
    return clusters
