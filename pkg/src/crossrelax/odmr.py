"""ODMR lineshapes: synthesis, contrast, and Lorentzian fits.

Two estimators follow the scikit-learn regressor protocol (``fit(X, y)``,
``predict(X)``, ``get_params``), with X a single column of frequencies
(MHz) or fields (mT):

* :class:`TripleLorentzianRegressor` fits a hyperfine triplet of dips with
  one common width.
* :class:`LorentzianPeaksRegressor` fits a sum of peaks, such as contrast or
  linewidth plotted against field.

The functions ``fit_triple_lorentzian`` and ``fit_peak_profile`` wrap them
and return plain result records.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._lm import FitError, levenberg_marquardt
from .eigen import transition_table
from .spin import NV_PARAMS, ON_AXIS, SpinSystemParams

__all__ = [
    "FitError", "OdmrSpectrum", "TripleLorentzianFit", "PeakProfileFit", "hyperfine_spacing",
    "synthesize_spectrum", "contrast", "TripleLorentzianRegressor", "LorentzianPeaksRegressor",
    "fit_triple_lorentzian", "fit_peak_profile",
]


@dataclass(frozen=True)
class OdmrSpectrum:
    """Normalized fluorescence on a strictly increasing frequency grid (MHz)."""

    frequencies: np.ndarray
    signal: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        y = np.asarray(self.signal, dtype=float)
        if f.ndim != 1 or f.shape != y.shape or f.size == 0:
            raise ValueError("frequencies and signal must be equal-length, nonempty 1-D arrays")
        if np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        if not np.all(np.isfinite(y)) or np.any(y <= 0):
            raise ValueError("signal must be finite and positive")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "signal", y)


@dataclass(frozen=True)
class TripleLorentzianFit:
    center: float
    spacing: float
    width: float
    amplitudes: tuple
    baseline: float
    contrast: float
    residual_norm: float
    iterations: int = 0


@dataclass(frozen=True)
class PeakProfileFit:
    centers: tuple
    fwhm: tuple
    amplitudes: tuple
    baseline: float
    residual_norm: float
    iterations: int = 0


def hyperfine_spacing(B: float, branch: int = -1, params: SpinSystemParams = NV_PARAMS) -> float:
    """Mean adjacent spacing (MHz) of the three Delta m_I = 0 lines of the NV 0 -> ``branch`` transition."""
    if branch not in (-1, 1):
        raise ValueError("branch must be -1 or +1")
    if not 0.0 <= B <= 110.0:
        raise ValueError(f"B = {B} mT outside [0, 110]")
    freqs = [ln.frequency for ln in transition_table("nv", B, ON_AXIS, params=params)
             if {ln.from_label[0], ln.to_label[0]} == {0.0, float(branch)}]
    if len(freqs) != 3:
        raise RuntimeError(f"expected three hyperfine lines, found {len(freqs)}")
    return (max(freqs) - min(freqs)) / 2


def _lorentz(x, c, w):
    h2 = (w / 2) ** 2
    return h2 / ((x - c) ** 2 + h2)


def triplet_model(f, center, spacing, width, amplitudes, baseline):
    f = np.asarray(f, dtype=float)
    a = np.asarray(amplitudes, dtype=float)
    return baseline - sum(a[k + 1] * _lorentz(f, center + k * spacing, width) for k in (-1, 0, 1))


def synthesize_spectrum(center: float, spacing: float, width: float, amplitudes, baseline: float = 1.0,
                        grid=None) -> OdmrSpectrum:
    """Three equal-width Lorentzian dips at center - spacing, center, center + spacing."""
    if not width > 0:
        raise ValueError("width must be positive")
    if len(amplitudes) != 3:
        raise ValueError("need three amplitudes")
    if grid is None:
        half = 2 * abs(spacing) + 10 * width
        grid = np.linspace(center - half, center + half, 801)
    grid = np.asarray(grid, dtype=float)
    return OdmrSpectrum(grid, triplet_model(grid, center, spacing, width, amplitudes, baseline))


def contrast(s: OdmrSpectrum) -> float:
    """1 - min/max of the signal."""
    y = s.signal if isinstance(s, OdmrSpectrum) else np.asarray(s, dtype=float)
    if y.size == 0:
        raise ValueError("empty signal")
    return float(1 - y.min() / y.max())


# parameter vector: [center, spacing, width, a_-1, a_0, a_+1, baseline], center relative to x0
def _triplet_residual(x, y):
    def res(p):
        return triplet_model(x, p[0], p[1], p[2], p[3:6], p[6]) - y
    return res


def _triplet_jacobian(x):
    def jac(p):
        c, s, w = p[0], p[1], p[2]
        h = w / 2
        J = np.zeros((x.size, 7))
        for i, k in enumerate((-1, 0, 1)):
            a = p[3 + i]
            d = x - (c + k * s)
            den = d**2 + h**2
            L = h**2 / den
            dLdc = L * 2 * d / den
            dLdw = h * d**2 / den**2
            J[:, 0] -= a * dLdc
            J[:, 1] -= a * k * dLdc
            J[:, 2] -= a * dLdw
            J[:, 3 + i] = -L
        J[:, 6] = 1.0
        return J
    return jac


def _orient_dips(y: np.ndarray) -> np.ndarray:
    mid = np.median(y)
    if y.max() - mid > mid - y.min():
        warnings.warn("dominant excursion is positive; treating the spectrum as inverted", stacklevel=3)
        return 2 * mid - y
    return y


class TripleLorentzianRegressor(RegressorMixin, BaseEstimator):
    """Three equal-width Lorentzian dips with a fixed or free spacing.

    Parameters
    ----------
    spacing : float, optional
        Fixed hyperfine spacing in MHz.  When None and ``field`` is given it
        is computed from the NV Hamiltonian; when both are None it is fitted.
    field : float, optional
        Magnetic field (mT) used to compute the spacing.
    branch : {-1, 1}
        NV transition whose hyperfine spacing applies.
    init : dict, optional
        Starting values for any of center, spacing, width, amplitudes, baseline.
    xtol, max_iter : float, int
        Convergence controls of the damped Gauss-Newton loop.
    """

    def __init__(self, spacing=None, field=None, branch=-1, init=None, xtol=1e-8, max_iter=500):
        self.spacing = spacing
        self.field = field
        self.branch = branch
        self.init = init
        self.xtol = xtol
        self.max_iter = max_iter

    def _fixed_spacing(self):
        if self.spacing is not None:
            return float(self.spacing)
        if self.field is not None:
            return hyperfine_spacing(self.field, self.branch)
        return None

    def _start(self, x, y, fixed):
        init = dict(self.init or {})
        span = x[-1] - x[0]
        depth = y.max() - y.min()
        spacing = init.get("spacing", fixed if fixed is not None else span / 10)
        amps = init.get("amplitudes", (depth / 2,) * 3)
        p = np.array([x[np.argmin(y)], spacing, init.get("width", span / 20), *amps,
                      init.get("baseline", y.max())], dtype=float)
        if "center" in init:
            p[0] = init["center"] - self._x0
        return p, "center" in init

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 1:
            raise ValueError("X must be a single column of frequencies")
        order = np.argsort(X[:, 0], kind="stable")
        f = X[order, 0]
        y = _orient_dips(y[order].astype(float))
        self._x0 = 0.5 * (f[0] + f[-1])
        x = f - self._x0
        fixed = self._fixed_spacing()
        free = np.ones(7, bool)
        if fixed is not None:
            free[1] = False
        p0, pinned = self._start(x, y, fixed)
        res, jac = _triplet_residual(x, y), _triplet_jacobian(x)
        # the deepest point may be an outer component: also try the neighbours
        starts = [p0] if pinned else [p0 + np.eye(7)[0] * k * p0[1] for k in (0, -1, 1)]
        best, errors = None, []
        for start in starts:
            try:
                r = levenberg_marquardt(res, jac, start, free=free, xtol=self.xtol, max_iter=self.max_iter)
            except FitError as exc:
                errors.append(exc)
                continue
            if best is None or r.residual_norm < best.residual_norm:
                best = r
        if best is None:
            raise errors[0]
        p = best.params
        self.center_ = float(p[0] + self._x0)
        self.spacing_ = float(p[1])
        self.width_ = float(abs(p[2]))
        self.amplitudes_ = tuple(float(a) for a in p[3:6])
        self.baseline_ = float(p[6])
        self.residual_norm_ = best.residual_norm
        self.n_iter_ = best.iterations
        self.converged_ = best.converged
        self.contrast_ = contrast(self.predict(f[:, None]))
        return self

    def predict(self, X):
        check_is_fitted(self, "center_")
        X = check_array(X)
        return triplet_model(X[:, 0], self.center_, self.spacing_, self.width_, self.amplitudes_, self.baseline_)

    def result(self) -> TripleLorentzianFit:
        check_is_fitted(self, "center_")
        return TripleLorentzianFit(self.center_, self.spacing_, self.width_, self.amplitudes_, self.baseline_,
                                   self.contrast_, self.residual_norm_, self.n_iter_)


def fit_triple_lorentzian(s: OdmrSpectrum, spacing: float | None = None, field: float | None = None,
                          branch: int = -1, init: dict | None = None) -> TripleLorentzianFit:
    """Fit an ODMR hyperfine triplet; see :class:`TripleLorentzianRegressor`."""
    est = TripleLorentzianRegressor(spacing=spacing, field=field, branch=branch, init=init)
    return est.fit(s.frequencies[:, None], s.signal).result()


def peaks_model(x, centers, fwhm, amplitudes, baseline):
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, float(baseline))
    for c, w, a in zip(centers, fwhm, amplitudes):
        out += a * _lorentz(x, c, w)
    return out


class LorentzianPeaksRegressor(RegressorMixin, BaseEstimator):
    """Sum of ``n_peaks`` Lorentzian peaks over a shared baseline.

    Parameters
    ----------
    n_peaks : int
    init_centers : sequence of float
        Starting centers, for example cluster means of the resonance table.
    freeze_centers : bool
        Keep the centers at ``init_centers`` and fit only widths, amplitudes
        and the baseline.
    init_width : float, optional
        Starting FWHM; defaults to a fifth of the smallest center gap (or a
        twentieth of the span for one peak).
    """

    def __init__(self, n_peaks=1, init_centers=None, freeze_centers=False, init_width=None,
                 xtol=1e-8, max_iter=500):
        self.n_peaks = n_peaks
        self.init_centers = init_centers
        self.freeze_centers = freeze_centers
        self.init_width = init_width
        self.xtol = xtol
        self.max_iter = max_iter

    def fit(self, X, y):
        n = int(self.n_peaks)
        if n < 1:
            raise ValueError("n_peaks must be at least 1")
        if self.init_centers is None or len(self.init_centers) != n:
            raise ValueError("init_centers must list one starting center per peak")
        X, y = check_X_y(X, y, y_numeric=True)
        x = X[:, 0].astype(float)
        y = y.astype(float)
        centers = np.asarray(self.init_centers, dtype=float)
        if self.init_width is not None:
            w0 = float(self.init_width)
        elif n > 1:
            w0 = float(np.min(np.diff(np.sort(centers)))) / 5
        else:
            w0 = float(np.ptp(x)) / 20
        base = float(np.min(y))
        amps = [max(float(np.interp(c, np.sort(x), y[np.argsort(x)])) - base, 1e-12) for c in centers]
        p0 = np.concatenate([centers, np.full(n, w0), amps, [base]])
        free = np.ones(p0.size, bool)
        if self.freeze_centers:
            free[:n] = False

        def res(p):
            return peaks_model(x, p[:n], p[n:2 * n], p[2 * n:3 * n], p[-1]) - y

        def jac(p):
            J = np.zeros((x.size, p.size))
            for k in range(n):
                c, w, a = p[k], p[n + k], p[2 * n + k]
                h = w / 2
                d = x - c
                den = d**2 + h**2
                L = h**2 / den
                J[:, k] = a * L * 2 * d / den
                J[:, n + k] = a * h * d**2 / den**2
                J[:, 2 * n + k] = L
            J[:, -1] = 1.0
            return J

        r = levenberg_marquardt(res, jac, p0, free=free, xtol=self.xtol, max_iter=self.max_iter)
        p = r.params
        self.centers_ = tuple(float(v) for v in p[:n])
        self.fwhm_ = tuple(float(abs(v)) for v in p[n:2 * n])
        self.amplitudes_ = tuple(float(v) for v in p[2 * n:3 * n])
        self.baseline_ = float(p[-1])
        self.residual_norm_ = r.residual_norm
        self.n_iter_ = r.iterations
        self.converged_ = r.converged
        return self

    def predict(self, X):
        check_is_fitted(self, "centers_")
        X = check_array(X)
        return peaks_model(X[:, 0], self.centers_, self.fwhm_, self.amplitudes_, self.baseline_)

    def result(self) -> PeakProfileFit:
        check_is_fitted(self, "centers_")
        return PeakProfileFit(self.centers_, self.fwhm_, self.amplitudes_, self.baseline_,
                              self.residual_norm_, self.n_iter_)


def fit_peak_profile(sweep, n_peaks: int, init_centers, freeze_centers: bool = False,
                     init_width: float | None = None) -> PeakProfileFit:
    """Fit Lorentzian peaks to (B, y) pairs; see :class:`LorentzianPeaksRegressor`."""
    data = np.asarray(sweep, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("sweep must be a sequence of (B, y) pairs")
    est = LorentzianPeaksRegressor(n_peaks, init_centers, freeze_centers, init_width)
    return est.fit(data[:, :1], data[:, 1]).result()
