"""Dense bounded-variable primal simplex with dual extraction.

Problems are stated as::

    minimize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                lo <= x <= hi

Bounds may be infinite.  The solver works on the equality form obtained by
adding one slack per ``<=`` row, keeps nonbasic variables at a bound (or at
zero when free), and runs a two-phase method with one artificial per row
whose starting residual has the wrong sign.

Multiplier conventions (stationarity ``c + A_ub' y_ub + A_eq' y_eq
- lam_lo + lam_hi = 0``): ``y_ub, lam_lo, lam_hi >= 0`` and ``y_eq`` free.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LpProblem",
    "LpSolution",
    "NumericalFailure",
    "solve_lp",
    "solve_lp_rowgen",
    "dump_lp",
    "load_lp",
]

log = logging.getLogger(__name__)

_LOWER, _UPPER, _FREE, _BASIC = 0, 1, 2, 3
# consecutive degenerate pivots tolerated before switching to Bland's rule
_STALL_LIMIT = 10


class NumericalFailure(RuntimeError):
    """Raised when the simplex cannot finish; carries the last iterate."""

    def __init__(self, message, x=None, iterations=0):
        super().__init__(message)
        self.x = x
        self.iterations = iterations


def _as_matrix(A, n):
    if A is None:
        return np.zeros((0, n))
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1) if A.size else np.zeros((0, n))
    return A


@dataclass(eq=False)
class LpProblem:
    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    label: str = "generic"
    # names for groups of <= rows, e.g. {"nu": [0], "mu": [1, 2]}
    row_groups: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub = _as_matrix(self.A_ub, n)
        self.A_eq = _as_matrix(self.A_eq, n)
        self.b_ub = np.asarray([] if self.b_ub is None else self.b_ub, dtype=float).ravel()
        self.b_eq = np.asarray([] if self.b_eq is None else self.b_eq, dtype=float).ravel()
        self.lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float).ravel()
        self.hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).ravel()
        if self.A_ub.shape != (self.b_ub.size, n):
            raise ValueError(f"A_ub has shape {self.A_ub.shape}, expected ({self.b_ub.size}, {n})")
        if self.A_eq.shape != (self.b_eq.size, n):
            raise ValueError(f"A_eq has shape {self.A_eq.shape}, expected ({self.b_eq.size}, {n})")
        if self.lo.size != n or self.hi.size != n:
            raise ValueError("bounds must have one entry per variable")
        for name in ("c", "A_ub", "b_ub", "A_eq", "b_eq"):
            if not np.isfinite(getattr(self, name)).all():
                raise ValueError(f"{name} has non-finite entries")
        if np.isnan(self.lo).any() or np.isnan(self.hi).any():
            raise ValueError("bounds must not be NaN")
        if (self.lo > self.hi).any():
            raise ValueError("lo must not exceed hi")
        self.row_groups = {k: np.asarray(v, dtype=np.int64) for k, v in self.row_groups.items()}

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m_ub(self) -> int:
        return self.b_ub.size

    @property
    def m_eq(self) -> int:
        return self.b_eq.size

    def max_coefficient(self) -> float:
        parts = [self.c, self.A_ub.ravel(), self.b_ub, self.A_eq.ravel(), self.b_eq,
                 self.lo[np.isfinite(self.lo)], self.hi[np.isfinite(self.hi)]]
        return max((float(np.abs(p).max()) for p in parts if p.size), default=0.0)

    def subproblem(self, ub_rows) -> "LpProblem":
        """Same problem keeping only the listed ``<=`` rows."""
        ub_rows = np.asarray(ub_rows, dtype=np.int64)
        return LpProblem(self.c, self.A_ub[ub_rows], self.b_ub[ub_rows], self.A_eq,
                         self.b_eq, self.lo, self.hi, self.label)


@dataclass(eq=False)
class LpSolution:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: np.ndarray | None
    objective: float
    y_ub: np.ndarray | None = None
    y_eq: np.ndarray | None = None
    lam_lo: np.ndarray | None = None
    lam_hi: np.ndarray | None = None
    iterations: int = 0
    duals: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def lambda1(self):
        return self.lam_lo

    @property
    def lambda2(self):
        return self.lam_hi

    @property
    def nu(self) -> float | None:
        v = self.duals.get("nu")
        return None if v is None or not len(v) else float(v[0])

    @property
    def mu(self):
        return self.duals.get("mu")


class _Simplex:
    def __init__(self, prob: LpProblem, tol: float, max_iter: int):
        self.prob = prob
        n, m_ub, m_eq = prob.n, prob.m_ub, prob.m_eq
        m = m_ub + m_eq
        self.n, self.m_ub, self.m = n, m_ub, m
        scale = max(1.0, prob.max_coefficient())
        self.feas_tol = tol * scale
        self.opt_tol = tol * scale
        self.piv_tol = 1e-9
        self.max_iter = max_iter
        self.iterations = 0

        # structural | slacks | artificials
        ntot = n + m_ub + m
        A = np.zeros((m, ntot))
        A[:m_ub, :n] = prob.A_ub
        A[m_ub:, :n] = prob.A_eq
        A[:m_ub, n:n + m_ub] = np.eye(m_ub)
        self.b = np.concatenate([prob.b_ub, prob.b_eq])
        self.lo = np.concatenate([prob.lo, np.zeros(m_ub + m)])
        self.hi = np.concatenate([prob.hi, np.full(m_ub, np.inf), np.zeros(m)])
        self.c2 = np.concatenate([prob.c, np.zeros(m_ub + m)])

        # crash: park each structural at the bound its cost prefers
        x = np.zeros(ntot)
        state = np.full(ntot, _LOWER, dtype=np.int8)
        lo, hi, c = prob.lo, prob.hi, prob.c
        for j in range(n):
            if np.isfinite(hi[j]) and (c[j] < 0 or not np.isfinite(lo[j])):
                x[j], state[j] = hi[j], _UPPER
            elif np.isfinite(lo[j]):
                x[j] = lo[j]
            else:
                state[j] = _FREE
        resid = self.b - A[:, :n] @ x[:n]
        basis = np.empty(m, dtype=np.int64)
        art = n + m_ub
        self.c1 = np.zeros(ntot)
        for i in range(m):
            if i < m_ub and resid[i] >= 0:
                basis[i] = n + i
                x[n + i] = resid[i]
            else:
                sgn = 1.0 if resid[i] >= 0 else -1.0
                A[i, art + i] = sgn
                self.hi[art + i] = np.inf
                self.c1[art + i] = 1.0
                basis[i] = art + i
                x[art + i] = abs(resid[i])
            state[basis[i]] = _BASIC
        self.A, self.x, self.state, self.basis = A, x, state, basis
        self.art_slice = slice(art, art + m)

    def _refresh(self, cost):
        B = self.A[:, self.basis]
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular basis", self.x[:self.n].copy(),
                                   self.iterations) from exc
        xN = np.where(self.state == _BASIC, 0.0, self.x)
        self.x[self.basis] = Binv @ (self.b - self.A @ xN)
        pi = cost[self.basis] @ Binv
        d = cost - pi @ self.A
        return Binv, d

    def _candidates(self, d):
        s, tol = self.state, self.opt_tol
        movable = self.hi > self.lo
        up = (s == _LOWER) & (d < -tol) & movable
        down = (s == _UPPER) & (d > tol) & movable
        free = (s == _FREE) & (np.abs(d) > tol)
        return np.flatnonzero(up | down | free)

    def _steps(self, alpha, sigma, xB):
        """Step limits per basic row (rows) for each candidate column."""
        loB = self.lo[self.basis][:, None]
        hiB = self.hi[self.basis][:, None]
        a = alpha * sigma
        steps = np.full(a.shape, np.inf)
        dec = a > self.piv_tol
        inc = a < -self.piv_tol
        with np.errstate(invalid="ignore", over="ignore"):
            lim_dec = (xB - loB) / np.where(dec, a, 1.0)
            lim_inc = (hiB - xB) / np.where(inc, -a, 1.0)
        steps = np.where(dec, lim_dec, steps)
        steps = np.where(inc, lim_inc, steps)
        steps = np.where(np.isnan(steps), np.inf, np.maximum(steps, 0.0))
        return steps

    def run(self, cost, secondary=None) -> str:
        stall = 0
        bland = False
        while True:
            if self.iterations >= self.max_iter:
                raise NumericalFailure(f"iteration cap {self.max_iter} reached",
                                       self.x[:self.n].copy(), self.iterations)
            Binv, d = self._refresh(cost)
            cand = self._candidates(d)
            if cand.size == 0:
                return "optimal"
            if bland:
                cand = cand[:1]
            else:
                sec = np.zeros(cand.size) if secondary is None else secondary[cand] * np.where(
                    self.state[cand] == _UPPER, -1.0, 1.0)
                cand = cand[np.lexsort((cand, sec, -np.abs(d[cand])))]
            st = self.state[cand]
            sigma = np.where(st == _LOWER, 1.0, np.where(st == _UPPER, -1.0, -np.sign(d[cand])))
            t_flip = self.hi[cand] - self.lo[cand]
            alpha = Binv @ self.A[:, cand]
            # Candidates are tried in order and flip to their opposite bound
            # while no basic variable blocks first; the basis (hence d) is
            # unchanged by flips, so the whole flip prefix is exact.
            flips = np.isfinite(t_flip)
            shift = np.where(flips, sigma * np.where(flips, t_flip, 0.0), 0.0) * alpha
            xB0 = self.x[self.basis]
            before = xB0[:, None] - (np.cumsum(shift, axis=1) - shift)
            steps = self._steps(alpha, sigma, before)
            t_basic = steps.min(axis=0) if self.m else np.full(cand.size, np.inf)
            ok = flips & (t_flip <= t_basic)
            r_star = int(np.argmin(ok)) if not ok.all() else cand.size
            if r_star:
                fj = cand[:r_star]
                self.x[self.basis] = before[:, r_star - 1] - shift[:, r_star - 1] if self.m else xB0
                up = self.state[fj] == _LOWER
                self.x[fj] = np.where(up, self.hi[fj], self.lo[fj])
                self.state[fj] = np.where(up, _UPPER, _LOWER)
                self.iterations += r_star
                stall, bland = 0, False
            if r_star == cand.size:
                continue
            j = cand[r_star]
            tb = t_basic[r_star]
            if not np.isfinite(tb):
                return "unbounded"
            col = alpha[:, r_star]
            sg = sigma[r_star]
            srow = steps[:, r_star]
            ties = np.flatnonzero(srow <= tb + self.piv_tol * max(1.0, tb))
            if bland:
                r = ties[np.argmin(self.basis[ties])]
            else:
                r = ties[np.argmax(np.abs(col[ties]))]
            t = srow[r]
            leave = self.basis[r]
            self.x[self.basis] = before[:, r_star] - sg * t * col
            self.x[j] += sg * t
            if sg * col[r] > 0:
                self.x[leave], self.state[leave] = self.lo[leave], _LOWER
            else:
                self.x[leave], self.state[leave] = self.hi[leave], _UPPER
            self.basis[r] = j
            self.state[j] = _BASIC
            self.iterations += 1
            if r_star == 0 and t * abs(d[j]) <= self.opt_tol * 1e-3:
                stall += 1
                if stall > _STALL_LIMIT:
                    bland = True
            else:
                stall, bland = 0, False

    def infeasibility(self) -> float:
        return float(self.x[self.art_slice].sum())

    def finish(self) -> LpSolution:
        prob, n, m_ub = self.prob, self.n, self.m_ub
        B = self.A[:, self.basis]
        xN = np.where(self.state == _BASIC, 0.0, self.x)
        if self.m:
            self.x[self.basis] = np.linalg.solve(B, self.b - self.A @ xN)
            pi = np.linalg.solve(B.T, self.c2[self.basis])
        else:
            pi = np.zeros(0)
        d = self.c2 - pi @ self.A
        ds, st = d[:n], self.state[:n]
        lam_lo = np.zeros(n)
        lam_hi = np.zeros(n)
        at_lo, at_hi = st == _LOWER, st == _UPPER
        fixed = prob.lo == prob.hi
        lam_lo[at_lo & ~fixed] = ds[at_lo & ~fixed]
        lam_hi[at_hi & ~fixed] = -ds[at_hi & ~fixed]
        lam_lo[fixed] = np.maximum(ds[fixed], 0.0)
        lam_hi[fixed] = np.maximum(-ds[fixed], 0.0)
        x = self.x[:n].copy()
        return LpSolution("optimal", x, float(prob.c @ x), y_ub=-pi[:m_ub], y_eq=-pi[m_ub:],
                          lam_lo=lam_lo, lam_hi=lam_hi, iterations=self.iterations)


def _name_duals(prob: LpProblem, sol: LpSolution) -> None:
    sol.duals = {"lambda1": sol.lam_lo, "lambda2": sol.lam_hi}
    for name, rows in prob.row_groups.items():
        sol.duals[name] = sol.y_ub[rows]
    if prob.m_eq:
        sol.duals["eq"] = sol.y_eq


def solve_lp(problem: LpProblem, tol: float = 1e-9, max_iter: int | None = None) -> LpSolution:
    """Solve ``problem``; infeasible and unbounded outcomes are reported by status."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter is None:
        max_iter = 50 * (problem.n + problem.m_ub + problem.m_eq) + 1000
    s = _Simplex(problem, tol, max_iter)
    if s.c1.any():
        s.run(s.c1, secondary=s.c2)
        if s.infeasibility() > s.feas_tol * max(1, s.m):
            return LpSolution("infeasible", s.x[:s.n].copy(), np.nan, iterations=s.iterations)
        s.hi[s.art_slice] = 0.0
        s.x[s.art_slice] = np.where(s.state[s.art_slice] == _BASIC, s.x[s.art_slice], 0.0)
    status = s.run(s.c2)
    if status == "unbounded":
        return LpSolution("unbounded", s.x[:s.n].copy(), -np.inf, iterations=s.iterations)
    sol = s.finish()
    _name_duals(problem, sol)
    log.debug("%s solved in %d iterations, objective %.6g", problem.label,
              sol.iterations, sol.objective)
    return sol


def solve_lp_rowgen(problem: LpProblem, core_rows, tol: float = 1e-9,
                    batch: int = 200) -> LpSolution:
    """Solve by adding violated ``<=`` rows lazily to the ``core_rows`` set.

    The returned solution is for the full problem: rows that never entered
    the working set are satisfied at the optimum and get zero multipliers.
    """
    core = np.unique(np.asarray(core_rows, dtype=np.int64))
    active = core
    lazy_mask = np.ones(problem.m_ub, dtype=bool)
    lazy_mask[core] = False
    feas_tol = tol * max(1.0, problem.max_coefficient())
    iterations = 0
    while True:
        sol = solve_lp(problem.subproblem(active), tol)
        iterations += sol.iterations
        if not sol.optimal:
            sol.iterations = iterations
            return sol
        viol = problem.A_ub @ sol.x - problem.b_ub
        viol[~lazy_mask] = -np.inf
        bad = np.flatnonzero(viol > feas_tol)
        if bad.size == 0:
            break
        bad = bad[np.argsort(-viol[bad], kind="stable")][:batch]
        lazy_mask[bad] = False
        active = np.sort(np.concatenate([active, bad]))
    y_ub = np.zeros(problem.m_ub)
    y_ub[active] = sol.y_ub
    full = LpSolution("optimal", sol.x, sol.objective, y_ub=y_ub, y_eq=sol.y_eq,
                      lam_lo=sol.lam_lo, lam_hi=sol.lam_hi, iterations=iterations)
    _name_duals(problem, full)
    return full


def _fmt(v) -> str:
    return " ".join(repr(float(a)) for a in np.atleast_1d(v))


def dump_lp(problem: LpProblem) -> str:
    """Plain-text canonical form: objective, rows, then per-variable bounds."""
    lines = [f"# {problem.label}", f"dims {problem.n} {problem.m_ub} {problem.m_eq}",
             f"min {_fmt(problem.c)}"]
    for a, b in zip(problem.A_ub, problem.b_ub):
        lines.append(f"le {_fmt(a)} | {float(b)!r}")
    for a, b in zip(problem.A_eq, problem.b_eq):
        lines.append(f"eq {_fmt(a)} | {float(b)!r}")
    for lo, hi in zip(problem.lo, problem.hi):
        lines.append(f"bound {float(lo)!r} {float(hi)!r}")
    return "\n".join(lines) + "\n"


def load_lp(text: str) -> LpProblem:
    label, c, ub, eq, bounds = "generic", None, [], [], []
    for line in text.splitlines():
        if line.startswith("# "):
            label = line[2:].strip()
            continue
        tag, _, rest = line.partition(" ")
        if tag == "min":
            c = [float(v) for v in rest.split()]
        elif tag in ("le", "eq"):
            row, _, rhs = rest.partition("|")
            (ub if tag == "le" else eq).append(([float(v) for v in row.split()], float(rhs)))
        elif tag == "bound":
            bounds.append([float(v) for v in rest.split()])
    if c is None:
        raise ValueError("missing objective line")
    n = len(c)
    lo = np.array([b[0] for b in bounds]) if bounds else None
    hi = np.array([b[1] for b in bounds]) if bounds else None
    return LpProblem(c, np.array([r for r, _ in ub]).reshape(len(ub), n), [b for _, b in ub],
                     np.array([r for r, _ in eq]).reshape(len(eq), n), [b for _, b in eq],
                     lo, hi, label)
