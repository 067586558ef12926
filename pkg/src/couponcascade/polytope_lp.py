"""Small dense LP solver for the inner ascent step and the exact oracles.

Problems are maximizations of a linear objective over {x >= 0, Ax <= b}
with b >= 0, which covers every LP in this package: the per-iteration
ascent direction (row caps, knapsacks, box) and the oracle LPs over policy
or convex-combination weights.  The origin is always feasible, so a single
primal simplex phase with Bland's rule suffices; every optimal solve is
certified by the dual solution read off the final tableau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from couponcascade.instance import Instance


class LpError(RuntimeError):
    pass


class UnboundedError(LpError):
    pass


class NumericError(LpError):
    pass


@dataclass
class PolytopeSpec:
    """The ascent polytope: row caps, redemption knapsack, optional distribution knapsack."""

    n: int
    m: int
    redemption_weights: np.ndarray  # (n, m), p_v(d) * value(d)
    budget_B: float
    dist_cost: np.ndarray | None = None  # (n,), per-user a_v
    budget_K: float | None = None

    @staticmethod
    def from_instance(inst: Instance, k_scale: float | None = None) -> "PolytopeSpec":
        """Build the constraint polytope; with k_scale, bound the distribution knapsack by k_scale*K."""
        budget_K = None
        dist = None
        if k_scale is not None:
            if inst.budget_K is None:
                raise LpError("instance has no distribution budget")
            budget_K = k_scale * inst.budget_K
            dist = np.asarray(inst.dist_cost, dtype=float)
        return PolytopeSpec(inst.n, inst.m, inst.redemption_weights,
                            inst.budget_B, dist, budget_K)

    def constraint_rows(self):
        """(A, b) for {y flat >= 0, A y <= b}: caps, knapsack(s), box."""
        nm = self.n * self.m
        rows, bounds = [], []
        for v in range(self.n):
            row = np.zeros(nm)
            row[v * self.m:(v + 1) * self.m] = 1.0
            rows.append(row)
            bounds.append(1.0)
        rows.append(self.redemption_weights.reshape(-1))
        bounds.append(self.budget_B)
        if self.budget_K is not None:
            rows.append(np.repeat(self.dist_cost, self.m))
            bounds.append(self.budget_K)
        eye = np.eye(nm)
        rows.extend(eye)
        bounds.extend([1.0] * nm)
        return np.array(rows), np.array(bounds)

    def check_feasible(self, y: np.ndarray, tol: float = 1e-9) -> None:
        if np.any(y < -tol) or np.any(y > 1 + tol):
            raise NumericError("box constraint violated")
        if np.any(y.sum(axis=1) > 1 + tol):
            raise NumericError("per-user cap violated")
        if float(np.sum(self.redemption_weights * y)) > self.budget_B + tol * (1 + self.budget_B):
            raise NumericError("redemption knapsack violated")
        if self.budget_K is not None:
            spend = float(np.sum(self.dist_cost[:, None] * y))
            if spend > self.budget_K + tol * (1 + self.budget_K):
                raise NumericError("distribution knapsack violated")


@dataclass
class LpSolution:
    x: np.ndarray
    objective_value: float
    status: str  # "optimal" (infeasible cannot occur: the origin is feasible)
    dual: np.ndarray
    duality_gap: float

    def matrix(self, n: int, m: int) -> np.ndarray:
        return self.x.reshape(n, m)


def simplex_maximize(c, A, b, tol: float = 1e-10):
    """Primal simplex, slack start, Bland's rule (anti-cycling, deterministic).

    Maximize c.x subject to A x <= b, x >= 0, with b >= 0.
    Returns (x, value, dual).
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n_rows, n_vars = A.shape
    if np.any(b < 0):
        raise LpError("right-hand sides must be nonnegative (origin-feasible form)")
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise NumericError("non-finite LP data")

    T = np.zeros((n_rows + 1, n_vars + n_rows + 1))
    T[:n_rows, :n_vars] = A
    T[:n_rows, n_vars:n_vars + n_rows] = np.eye(n_rows)
    T[:n_rows, -1] = b
    T[-1, :n_vars] = -c
    basis = list(range(n_vars, n_vars + n_rows))

    max_pivots = 50_000
    for _ in range(max_pivots):
        reduced = T[-1, :-1]
        enter = -1
        for j in range(n_vars + n_rows):
            if reduced[j] < -tol:
                enter = j
                break
        if enter < 0:
            break
        col = T[:n_rows, enter]
        leave_row, best = -1, None
        for i in range(n_rows):
            if col[i] > tol:
                ratio = T[i, -1] / col[i]
                key = (ratio, basis[i])
                if best is None or key < best:
                    best = key
                    leave_row = i
        if leave_row < 0:
            raise UnboundedError("LP is unbounded")
        pivot = T[leave_row, enter]
        T[leave_row] /= pivot
        for i in range(n_rows + 1):
            if i != leave_row and T[i, enter] != 0.0:
                T[i] -= T[i, enter] * T[leave_row]
        basis[leave_row] = enter
    else:
        raise NumericError("pivot limit exceeded")

    x = np.zeros(n_vars + n_rows)
    for i, var in enumerate(basis):
        x[var] = T[i, -1]
    dual = T[-1, n_vars:n_vars + n_rows].copy()
    return x[:n_vars], float(T[-1, -1]), dual


def _certify(c, A, b, x, value, dual):
    """Strong-duality certificate; raises NumericError when it fails."""
    scale = 1.0 + abs(value)
    if np.any(dual < -1e-8):
        raise NumericError("dual infeasible: negative multiplier")
    slack = A.T @ dual - c
    if np.any(slack < -1e-8 * scale):
        raise NumericError("dual infeasible: reduced cost below zero")
    gap = abs(float(b @ dual) - value)
    if gap > 1e-8 * scale:
        raise NumericError(f"duality gap {gap:.3e} exceeds tolerance")
    return gap


def solve_generic_lp(c, A, b) -> LpSolution:
    """Maximize c.x over {x >= 0, A x <= b} with certificate."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    x, value, dual = simplex_maximize(c, A, b)
    gap = _certify(c, A, b, x, value, dual)
    return LpSolution(x, value, "optimal", dual, gap)


def solve_inner_lp(weights: np.ndarray, spec: PolytopeSpec) -> LpSolution:
    """The ascent-direction LP: maximize sum omega_vd y_vd over the polytope."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (spec.n, spec.m):
        raise LpError(f"weights must be {spec.n}x{spec.m}")
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise LpError("weights must be finite and nonnegative (clamp before solving)")
    nm = spec.n * spec.m
    if not weights.any():
        # Any feasible point is optimal; zero is the canonical choice.
        zero = np.zeros(nm)
        return LpSolution(zero, 0.0, "optimal", np.zeros(spec_row_count(spec)), 0.0)
    A, b = spec.constraint_rows()
    sol = solve_generic_lp(weights.reshape(-1), A, b)
    spec.check_feasible(sol.matrix(spec.n, spec.m))
    return sol


def spec_row_count(spec: PolytopeSpec) -> int:
    return spec.n + 1 + (1 if spec.budget_K is not None else 0) + spec.n * spec.m
