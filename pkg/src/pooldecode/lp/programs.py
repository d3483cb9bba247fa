"""LP relaxations for non-defective subset recovery and their diagnostics.

All programs are written in the "defectiveness" variable ``w = 1 - z``
where ``z`` is the non-defective confidence: ``w`` lives in ``[0, 1]^N``
with the budget row ``sum(w) >= N - L``, and the declared set is the ``L``
smallest entries of the optimal ``w``.

* LP0a minimizes the negative-test mass ``negcount @ w``.
* LP1 adds one row ``X[r] @ w >= 1 - eps0`` per positive test ``r``.
* LP2 minimizes ``(negcount - psi_lp * poscount) @ w``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..decoders import (RecoveredSet, negative_counts, positive_counts, psi0_prime,
                        select_top_L)
from ..model import Instance, channel_stats
from .simplex import LpProblem, LpSolution, solve_lp, solve_lp_rowgen

__all__ = [
    "LP_TIE_TOL",
    "DEFAULT_EPS0",
    "KktReport",
    "LpDecodeResult",
    "build_lp0a",
    "build_lp1",
    "build_lp2",
    "decode_lp",
    "decode_rolpal",
    "decode_rolpalpp",
    "decode_colpal",
    "default_psi_lp",
    "kkt_check",
]

LP_TIE_TOL = 1e-7
DEFAULT_EPS0 = 0.01


def _budget_problem(instance: Instance, L: int, c: np.ndarray, label: str) -> LpProblem:
    N = instance.design.N
    if not 0 <= L <= N:
        raise ValueError(f"L must lie in [0, N={N}], got {L}")
    return LpProblem(
        c=c.astype(float),
        A_ub=-np.ones((1, N)),
        b_ub=[-(N - L)],
        lo=np.zeros(N),
        hi=np.ones(N),
        label=label,
        row_groups={"nu": [0]},
        meta={"mz_zero": instance.M_z == 0},
    )


def build_lp0a(instance: Instance, L: int) -> LpProblem:
    return _budget_problem(instance, L, negative_counts(instance), "LP0a")


def build_lp1(instance: Instance, L: int, eps0: float = DEFAULT_EPS0) -> LpProblem:
    """LP0a plus a coverage row per positive test with nonempty support.

    Positive tests that contain no item can only be additive-noise events;
    their rows are infeasible and are dropped (counted in ``meta``).
    """
    if not 0.0 < eps0 < 1.0:
        raise ValueError(f"eps0 must lie in (0, 1), got {eps0}")
    base = build_lp0a(instance, L)
    Xp = instance.design.X[instance.y].astype(float)
    nonempty = Xp.sum(axis=1) > 0
    Xp = Xp[nonempty]
    A_ub = np.vstack([base.A_ub, -Xp])
    b_ub = np.concatenate([base.b_ub, np.full(len(Xp), -(1.0 - eps0))])
    meta = dict(base.meta)
    meta["dropped_rows"] = int((~nonempty).sum())
    meta["positive_tests"] = np.flatnonzero(instance.y)[nonempty]
    meta["eps0"] = eps0
    return LpProblem(base.c, A_ub, b_ub, lo=base.lo, hi=base.hi, label="LP1",
                     row_groups={"nu": [0], "mu": np.arange(1, 1 + len(Xp))}, meta=meta)


def build_lp2(instance: Instance, L: int, psi_lp: float) -> LpProblem:
    if psi_lp < 0:
        raise ValueError("psi_lp must be nonnegative")
    c = negative_counts(instance) - psi_lp * positive_counts(instance)
    prob = _budget_problem(instance, L, c, "LP2")
    prob.meta["psi_lp"] = float(psi_lp)
    return prob


def default_psi_lp(instance: Instance, K: int | None = None) -> float:
    K = instance.K if K is None else K
    return psi0_prime(channel_stats(instance.design.p, max(K, 1), instance.noise))


@dataclass(eq=False)
class LpDecodeResult:
    recovered: RecoveredSet
    problem: LpProblem
    solution: LpSolution


def _select(instance, problem, solution, L, tie_rule, tie_seed, flags):
    if not solution.optimal:
        raise RuntimeError(f"{problem.label} solve ended {solution.status}")
    if problem.meta.get("mz_zero"):
        flags.add("mz_zero")
    out = select_top_L(-solution.x, L, tie_rule, tie_seed, tie_tol=LP_TIE_TOL)
    return LpDecodeResult(RecoveredSet(out.items, out.flags | frozenset(flags)),
                          problem, solution)


def decode_lp(instance: Instance, L: int, program: str = "LP0a", *,
              eps0: float = DEFAULT_EPS0, psi_lp: float | None = None,
              tie_rule: str = "random", tie_seed: int = 0,
              tol: float = 1e-9) -> LpDecodeResult:
    """Build, solve and select for one of ``LP0a``, ``LP1`` or ``LP2``."""
    flags = set()
    if program == "LP0a":
        prob = build_lp0a(instance, L)
        sol = solve_lp(prob, tol)
    elif program == "LP2":
        if psi_lp is None:
            psi_lp = default_psi_lp(instance)
        prob = build_lp2(instance, L, psi_lp)
        sol = solve_lp(prob, tol)
    elif program == "LP1":
        prob = build_lp1(instance, L, eps0)
        if prob.meta["dropped_rows"]:
            flags.add("rows_dropped")
        sol = solve_lp_rowgen(prob, core_rows=prob.row_groups["nu"], tol=tol)
        if sol.status == "infeasible":
            fallback = decode_lp(instance, L, "LP0a", tie_rule=tie_rule,
                                 tie_seed=tie_seed, tol=tol)
            rec = fallback.recovered
            fallback.recovered = RecoveredSet(
                rec.items, rec.flags | flags | {"lp_infeasible_fallback"})
            return fallback
    else:
        raise ValueError(f"unknown program {program!r}")
    return _select(instance, prob, sol, L, tie_rule, tie_seed, flags)


def decode_rolpal(instance: Instance, L: int, tie_rule: str = "random",
                  tie_seed: int = 0) -> RecoveredSet:
    return decode_lp(instance, L, "LP0a", tie_rule=tie_rule, tie_seed=tie_seed).recovered


def decode_rolpalpp(instance: Instance, L: int, eps0: float = DEFAULT_EPS0,
                    tie_rule: str = "random", tie_seed: int = 0) -> RecoveredSet:
    return decode_lp(instance, L, "LP1", eps0=eps0, tie_rule=tie_rule,
                     tie_seed=tie_seed).recovered


def decode_colpal(instance: Instance, L: int, tie_rule: str = "random",
                  tie_seed: int = 0, psi_lp: float | None = None) -> RecoveredSet:
    return decode_lp(instance, L, "LP2", psi_lp=psi_lp, tie_rule=tie_rule,
                     tie_seed=tie_seed).recovered


@dataclass(frozen=True)
class KktReport:
    stationarity_residual: float
    comp_slack_residual: float
    primal_infeas: float
    dual_infeas: float
    nu_bracket: tuple | None  # (theta0, nu, theta1)
    prop1_condition: bool | None
    scale: float

    @property
    def max_residual(self) -> float:
        return max(self.stationarity_residual, self.comp_slack_residual,
                   self.primal_infeas, self.dual_infeas)

    def passed(self, tol: float = 1e-8) -> bool:
        return self.max_residual <= tol * self.scale

    def nu_in_bracket(self, tol: float = 1e-8) -> bool | None:
        if self.nu_bracket is None:
            return None
        t0, nu, t1 = self.nu_bracket
        return t0 - tol * self.scale <= nu < t1 + tol * self.scale


def _finite_mask_product(mult, gap):
    fin = np.isfinite(gap)
    out = np.zeros_like(mult)
    out[fin] = mult[fin] * gap[fin]
    return out


def kkt_check(problem: LpProblem, solution: LpSolution, defective_set=None,
              tol: float = 1e-8) -> KktReport:
    """Residuals of the optimality conditions at ``solution``.

    For the budget-form programs (LP0a, LP1, LP2) the report also carries
    ``(theta0, nu, theta1)`` where ``theta0``/``theta1`` are the max/min
    of the effective gradient over items with zero/positive lower-bound
    multiplier, and, given the defective set, whether every defective has
    a strictly positive upper-bound multiplier.
    """
    if not solution.optimal:
        raise ValueError("kkt_check needs an optimal solution")
    x = solution.x
    y_ub, y_eq = solution.y_ub, solution.y_eq
    l1, l2 = solution.lam_lo, solution.lam_hi
    grad = problem.c + problem.A_ub.T @ y_ub + problem.A_eq.T @ y_eq
    stat = grad - l1 + l2
    slack_ub = problem.b_ub - problem.A_ub @ x
    cs = np.concatenate([
        _finite_mask_product(l1, x - problem.lo),
        _finite_mask_product(l2, problem.hi - x),
        y_ub * slack_ub,
    ])
    primal = np.concatenate([
        problem.lo - x, x - problem.hi, -slack_ub,
        np.abs(problem.A_eq @ x - problem.b_eq), [0.0],
    ])
    dual = np.concatenate([
        -l1, -l2, -y_ub,
        np.abs(l1[~np.isfinite(problem.lo)]), np.abs(l2[~np.isfinite(problem.hi)]), [0.0],
    ])
    scale = 1.0 + problem.max_coefficient()
    bracket = None
    prop1 = None
    if "nu" in problem.row_groups:
        nu_rows = problem.row_groups["nu"]
        # effective gradient without the budget row
        g = problem.c + problem.A_ub.T @ y_ub - problem.A_ub[nu_rows].T @ y_ub[nu_rows]
        thr = tol * scale
        zero_l1 = l1 <= thr
        theta0 = float(g[zero_l1].max()) if zero_l1.any() else -np.inf
        theta1 = float(g[~zero_l1].min()) if (~zero_l1).any() else np.inf
        bracket = (theta0, float(y_ub[nu_rows][0]), theta1)
        if defective_set is not None:
            S = np.asarray(defective_set, dtype=np.int64)
            prop1 = bool((l2[S] > thr).all()) if S.size else True
    return KktReport(
        stationarity_residual=float(np.abs(stat).max(initial=0.0)),
        comp_slack_residual=float(np.abs(cs).max(initial=0.0)),
        primal_infeas=float(np.max(primal)),
        dual_infeas=float(np.max(dual)),
        nu_bracket=bracket,
        prop1_condition=prop1,
        scale=scale,
    )
