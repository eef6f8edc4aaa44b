"""Small-signal linearization and eigenvalue analysis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError


@dataclass
class EigResult:
    eigenvalues: np.ndarray
    sigma_M: float
    dominant_state: list | None = None

    @property
    def critical(self) -> complex:
        return complex(self.eigenvalues[np.argmax(self.eigenvalues.real)])


def schur_reduce(fx, fy, gx, gy, cond_limit: float = 1e14):
    """``A = fx - fy gy^-1 gx``; raises if the algebraic Jacobian is singular."""
    if gy.size == 0:
        return np.array(fx, dtype=float)
    cond = np.linalg.cond(gy)
    if not np.isfinite(cond) or cond > cond_limit:
        raise NumericalError("algebraic Jacobian is singular (network degeneracy)", condition=cond)
    return fx - fy @ np.linalg.solve(gy, gx)


def linearize(system, x=None, y=None):
    """Reduced state matrix of a DAE object exposing ``jacobians(x, y)``.

    Defaults to the system's consistent initial point ``(x0, y0)``.
    """
    x = system.x0 if x is None else x
    y = system.y0 if y is None else y
    return schur_reduce(*system.jacobians(x, y))


def eigen_analysis(A, state_names=None) -> EigResult:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NumericalError("state matrix must be square")
    if not np.all(np.isfinite(A)):
        raise NumericalError("state matrix contains non-finite entries")
    try:
        if state_names is None:
            lam = np.linalg.eigvals(A)
            dom = None
        else:
            lam, V = np.linalg.eig(A)
            W = np.linalg.inv(V)
            part = np.abs(V * W.T)  # participation factors
            dom = [state_names[int(np.argmax(part[:, k]))] for k in range(lam.size)]
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigen-decomposition failed: {exc}") from None
    order = np.argsort(-lam.real)
    lam = lam[order]
    if dom is not None:
        dom = [dom[k] for k in order]
    return EigResult(lam, float(lam.real.max()) if lam.size else -np.inf, dom)
