"""
Dense two-phase tableau simplex.

Solves ``min/max c.x`` subject to ``A_ub x <= b_ub``, ``A_lb x >= b_lb`` and
``x >= 0``. Pivoting follows Bland's rule (smallest eligible index for both
the entering and the leaving variable), so degenerate problems terminate.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .logs import get_logger

logger = get_logger('simplex')

TOLERANCE = 1e-9


class LPError(ValueError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    objective: float
    iterations: int = 0


def _pivot(tableau: np.ndarray, row: int, col: int):
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])


def _objective_row(tableau: np.ndarray, basis: list, costs: np.ndarray):
    row = np.zeros(tableau.shape[1])
    row[:costs.size] = costs
    for i, var in enumerate(basis):
        if row[var] != 0.0:
            row -= row[var] * tableau[i]
    tableau[-1] = row


def _iterate(tableau: np.ndarray, basis: list, allowed: int, max_iter: int) -> int:
    """Minimize the objective row in place over the first ``allowed`` columns."""
    iterations = 0
    m = len(basis)
    while True:
        entering = np.nonzero(tableau[-1, :allowed] < -TOLERANCE)[0]
        if entering.size == 0:
            return iterations
        if iterations >= max_iter:
            raise LPError(f"simplex did not converge in {max_iter} iterations")
        col = int(entering[0])

        column = tableau[:m, col]
        candidates = np.nonzero(column > TOLERANCE)[0]
        if candidates.size == 0:
            raise LPError("linear program is unbounded")
        ratios = tableau[candidates, -1] / column[candidates]
        best = ratios.min()
        tied = candidates[ratios <= best + TOLERANCE * max(1.0, abs(best))]
        row = int(min(tied, key=lambda r: basis[r]))

        _pivot(tableau, row, col)
        basis[row] = col
        iterations += 1


def solve_lp(c, A_ub=None, b_ub=None, A_lb=None, b_lb=None, maximize: bool = False,
             max_iter: Optional[int] = None) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_lb = np.zeros((0, n)) if A_lb is None else np.asarray(A_lb, dtype=float).reshape(-1, n)
    b_lb = np.zeros(0) if b_lb is None else np.asarray(b_lb, dtype=float)
    if A_ub.shape[0] != b_ub.size or A_lb.shape[0] != b_lb.size:
        raise LPError("constraint matrix and right-hand side sizes differ")
    if n == 0:
        return LPResult(np.zeros(0), 0.0)

    # every row as  a.x (<=|>=) b  with b >= 0
    rows, rhs, is_ge = [], [], []
    for a, b in zip(A_ub, b_ub):
        rows.append(a if b >= 0 else -a)
        rhs.append(abs(b))
        is_ge.append(b < 0)
    for a, b in zip(A_lb, b_lb):
        rows.append(a if b >= 0 else -a)
        rhs.append(abs(b))
        is_ge.append(b >= 0)
    m = len(rows)
    if m == 0:
        improving = (c > 0) if maximize else (c < 0)
        if improving.any():
            raise LPError("linear program is unbounded")
        return LPResult(np.zeros(n), 0.0)

    n_slack = m
    n_art = sum(is_ge)
    width = n + n_slack + n_art
    tableau = np.zeros((m + 1, width + 1))
    basis = []
    art = n + n_slack
    for i, (a, b, ge) in enumerate(zip(rows, rhs, is_ge)):
        tableau[i, :n] = a
        tableau[i, -1] = b
        if ge:
            tableau[i, n + i] = -1.0
            tableau[i, art] = 1.0
            basis.append(art)
            art += 1
        else:
            tableau[i, n + i] = 1.0
            basis.append(n + i)

    max_iter = max_iter or 50 * (m + width)
    iterations = 0
    if n_art:
        phase_one = np.zeros(width)
        phase_one[n + n_slack:] = 1.0
        _objective_row(tableau, basis, phase_one)
        iterations += _iterate(tableau, basis, width, max_iter)
        if -tableau[-1, -1] > TOLERANCE * max(1.0, float(np.abs(rhs).max())):
            raise LPError("linear program is infeasible")

        # drive leftover artificials out of the basis; drop redundant rows
        keep = []
        for i in range(m):
            if basis[i] >= n + n_slack:
                pivots = np.nonzero(np.abs(tableau[i, :n + n_slack]) > TOLERANCE)[0]
                if pivots.size == 0:
                    continue
                _pivot(tableau, i, int(pivots[0]))
                basis[i] = int(pivots[0])
            keep.append(i)
        tableau = np.vstack([tableau[keep][:, list(range(n + n_slack)) + [width]], np.zeros((1, n + n_slack + 1))])
        basis = [basis[i] for i in keep]
        width = n + n_slack

    costs = np.zeros(width)
    costs[:n] = -c if maximize else c
    _objective_row(tableau, basis, costs)
    iterations += _iterate(tableau, basis, width, max_iter)

    x = np.zeros(width)
    for i, var in enumerate(basis):
        x[var] = tableau[i, -1]
    x = np.maximum(x[:n], 0.0)
    objective = float(c @ x)
    logger.debug("lp solved: %d vars, %d rows, %d pivots, objective %.6g", n, m, iterations, objective)
    return LPResult(x, objective, iterations)
