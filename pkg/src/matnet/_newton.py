"""Damped Newton iteration shared by the history and forecast solvers."""

from __future__ import annotations

import numpy as np


class NonConvergenceError(RuntimeError):
    """Newton iteration hit its iteration cap."""

    def __init__(self, message, last_iterate=None, residual_norm=None, step=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual_norm = residual_norm
        self.step = step


class LinearSolveError(RuntimeError):
    """The Newton linear system could not be solved."""


def solve_linear(jac, rhs):
    """Dense solve with row/column equilibration."""
    jac = np.asarray(jac, dtype=float)
    col = np.max(np.abs(jac), axis=0)
    row = np.max(np.abs(jac), axis=1)
    if np.any(col == 0) or np.any(row == 0):
        raise LinearSolveError("Jacobian has an all-zero row or column")
    scaled = jac / row[:, None] / col[None, :]
    try:
        y = np.linalg.solve(scaled, rhs / row)
    except np.linalg.LinAlgError as exc:
        raise LinearSolveError(f"singular Jacobian: {exc}") from exc
    x = y / col
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("non-finite Newton update")
    return x


def newton(assemble, x0, tol_residual, tol_update, max_iter, damping=1.0, max_step=None,
           lower=None):
    """Solve ``R(x) = 0`` given ``assemble(x) -> (R, J)``.

    Converged when every ``|R| < tol_residual`` and every Newton update
    ``|dx| < tol_update`` at the same iterate; that iterate is returned
    unmodified.  ``max_step`` caps each component of the applied update by
    uniform scaling; ``lower`` keeps iterates strictly above a bound.

    Returns ``(x, n_iterations, residual_norms)``.
    """
    x = np.array(x0, dtype=float)
    norms = []
    for it in range(1, max_iter + 1):
        r, jac = assemble(x)
        norms.append(float(np.max(np.abs(r))))
        dx = solve_linear(jac, -r)
        if np.all(np.abs(r) < tol_residual) and np.all(np.abs(dx) < tol_update):
            return x, it, norms
        dx = damping * dx
        if max_step is not None:
            ratio = np.max(np.abs(dx) / max_step)
            if ratio > 1.0:
                dx = dx / ratio
        if lower is not None:
            for _ in range(60):
                if np.all(x + dx > lower):
                    break
                dx = 0.5 * dx
        x = x + dx
    raise NonConvergenceError(
        f"Newton did not converge in {max_iter} iterations (|R|max = {norms[-1]:.3e})",
        last_iterate=x, residual_norm=norms[-1],
    )
