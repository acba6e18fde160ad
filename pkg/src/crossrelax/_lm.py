"""Small damped Gauss-Newton (Levenberg-Marquardt) least-squares engine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

XTOL = 1e-8
MAX_ITER = 500


class FitError(RuntimeError):
    """Least-squares failure.  ``params`` holds the last accepted iterate."""

    def __init__(self, message: str, params: np.ndarray | None = None, iterations: int = 0):
        super().__init__(message)
        self.params = params
        self.iterations = iterations


@dataclass
class LMResult:
    params: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


def levenberg_marquardt(residual, jacobian, p0, *, free=None, xtol: float = XTOL,
                        max_iter: int = MAX_ITER, lam0: float = 1e-3) -> LMResult:
    """Minimize ||residual(p)||^2.

    Normal equations (J^T J + lam diag(J^T J)) dp = -J^T r.  ``lam`` is
    multiplied by 10 when a step raises the cost and divided by 10 when it
    lowers it.  Stops once ||dp|| <= xtol (||p|| + xtol).  ``free`` is a
    boolean mask of parameters allowed to move.
    """
    p = np.array(p0, dtype=float)
    free = np.ones(p.size, bool) if free is None else np.asarray(free, bool)
    r = residual(p)
    cost = float(r @ r)
    lam = lam0
    for it in range(1, max_iter + 1):
        J = jacobian(p)[:, free]
        JtJ = J.T @ J
        g = J.T @ r
        diag = np.diag(JtJ).copy()
        if not np.all(np.isfinite(JtJ)) or np.any(diag <= 0):
            raise FitError("singular normal equations (a parameter has no influence on the model)", p, it)
        while True:
            A = JtJ + lam * np.diag(diag)
            try:
                dp = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                raise FitError("singular normal equations", p, it) from None
            trial = p.copy()
            trial[free] += dp
            r_new = residual(trial)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                lam = max(lam / 10, 1e-15)
                break
            lam *= 10
            if lam > 1e16:
                # no downhill direction left: at a minimum to working precision
                return LMResult(p, float(np.sqrt(cost)), it, True)
        step = np.linalg.norm(trial - p)
        p, r, cost = trial, r_new, cost_new
        if step <= xtol * (np.linalg.norm(p) + xtol):
            return LMResult(p, float(np.sqrt(cost)), it, True)
    return LMResult(p, float(np.sqrt(cost)), max_iter, False)
