"""Joint quantile-regression fitting of Velander parameters.

The fit minimises the average pinball loss over all customers and quantile
levels subject to the constraint regime, a linear program.  For speed the
LP is solved in its dual form (one bounded variable per customer x level,
one multiplier per constraint row); the primal parameters are recovered
from the equality-row marginals.  A recomputed-loss guard falls back to a
direct primal solve if the recovered parameters do not reproduce the LP
objective.

``verify_optimality`` is an independent check: a coarse grid search with
iterative refinement over a regime-specific parameterisation, sharing no
code with the LP path.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .model import (
    CONSTRAINT_REGIMES,
    REGIME_TOL,
    CustomerRecord,
    QuantileGrid,
    QuantileParamSet,
    apl_arrays,
    average_pinball_loss,
    parameter_count,
)

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """The optimisation backend failed or returned an unusable solution."""


@dataclass(frozen=True)
class LinearConstraint:
    """One linear row over the stacked parameters (alpha_1..m, beta_1..m).

    Encodes ``alpha_coef . alpha + beta_coef . beta <= 0`` (or ``== 0`` when
    ``equality`` is set).
    """

    alpha_coef: tuple[float, ...]
    beta_coef: tuple[float, ...]
    equality: bool = False

    def row(self) -> np.ndarray:
        return np.asarray(self.alpha_coef + self.beta_coef, dtype=float)


def _adjacent_row(m: int, k: int) -> tuple[float, ...]:
    row = [0.0] * m
    row[k] = 1.0
    row[k + 1] = -1.0
    return tuple(row)


_ZERO = lambda m: (0.0,) * m


def compile_constraints(
    grid: QuantileGrid, constraint: str, ec_domain=None
) -> list[LinearConstraint]:
    """Constraint rows for a regime over the stacked (alpha, beta) vector.

    C1 has none.  C2 pins the prediction ordering at the endpoints of the
    consumption domain (predictions are affine in sqrt(E), so endpoint
    ordering implies ordering on the whole interval).  C3 orders adjacent
    alphas and betas.  C4 equates alphas and orders betas.
    """
    if constraint not in CONSTRAINT_REGIMES:
        raise ValueError(f"unknown constraint regime {constraint!r}")
    m = len(grid)
    rows: list[LinearConstraint] = []
    if constraint == "C1" or m < 2:
        return rows
    if constraint == "C2":
        if ec_domain is None or len(ec_domain) == 0:
            raise ValueError("C2 requires a non-empty consumption domain")
        dom = np.asarray(ec_domain, dtype=float)
        if np.any(dom < 0) or not np.all(np.isfinite(dom)):
            raise ValueError("consumption domain must be finite and non-negative")
        s_points = sorted({math.sqrt(float(dom.min())), math.sqrt(float(dom.max()))})
        for k in range(m - 1):
            adj = _adjacent_row(m, k)
            for s in s_points:
                rows.append(
                    LinearConstraint(tuple(s * c for c in adj), adj, equality=False)
                )
        return rows
    if constraint == "C3":
        for k in range(m - 1):
            adj = _adjacent_row(m, k)
            rows.append(LinearConstraint(adj, _ZERO(m), equality=False))
            rows.append(LinearConstraint(_ZERO(m), adj, equality=False))
        return rows
    # C4: equal alphas, non-decreasing betas
    for k in range(m - 1):
        adj = _adjacent_row(m, k)
        rows.append(LinearConstraint(adj, _ZERO(m), equality=True))
        rows.append(LinearConstraint(_ZERO(m), adj, equality=False))
    return rows


@dataclass(frozen=True)
class FitProblem:
    """A fitting task: records, quantile grid, regime and solver knobs.

    ``ec_domain`` is the consumption set on which C2 enforces non-crossing;
    it defaults to the training consumptions.  ``beta_l2`` adds an L2
    penalty on adjacent beta differences (0 disables it and keeps the
    problem a pure LP).
    """

    records: tuple[CustomerRecord, ...]
    grid: QuantileGrid
    constraint: str = "C4"
    tolerance: float = 1e-7
    ec_domain: tuple[float, ...] | None = None
    beta_l2: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        if len(self.records) == 0:
            raise ValueError("fit problem needs at least one record")
        bad = [r.customer_id for r in self.records if not r.energy > 0.0]
        if bad:
            shown = ", ".join(repr(c) for c in bad[:5])
            raise ValueError(
                f"fit requires strictly positive consumption; offending "
                f"records: {shown}{'...' if len(bad) > 5 else ''}"
            )
        if not isinstance(self.grid, QuantileGrid):
            object.__setattr__(self, "grid", QuantileGrid(tuple(self.grid)))
        if self.constraint not in CONSTRAINT_REGIMES:
            raise ValueError(f"unknown constraint regime {self.constraint!r}")
        if not (self.tolerance > 0):
            raise ValueError("tolerance must be positive")
        if self.ec_domain is not None:
            dom = tuple(float(x) for x in self.ec_domain)
            if len(dom) == 0:
                raise ValueError("ec_domain must be non-empty when given")
            if any(not math.isfinite(x) or x < 0 for x in dom):
                raise ValueError("ec_domain values must be finite and >= 0")
            object.__setattr__(self, "ec_domain", dom)
        if self.beta_l2 < 0:
            raise ValueError("beta_l2 must be >= 0")

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])

    @property
    def peaks(self) -> np.ndarray:
        return np.array([r.peak for r in self.records])

    def effective_ec_domain(self) -> np.ndarray:
        if self.ec_domain is not None:
            return np.asarray(self.ec_domain, dtype=float)
        return self.energies


@dataclass(frozen=True)
class FitResult:
    params: QuantileParamSet
    achieved_apl: float
    iterations: int
    solver_status: str
    parameter_count: int


def _constraint_matrices(constraints):
    """Split compiled rows into dense (<=, ==) matrices over 2m columns."""
    le = [c.row() for c in constraints if not c.equality]
    eq = [c.row() for c in constraints if c.equality]
    G_le = np.array(le) if le else None
    G_eq = np.array(eq) if eq else None
    return G_le, G_eq


def _highs_options(tolerance: float) -> dict:
    tol = min(max(tolerance, 1e-10), 1e-7)
    return {
        "presolve": True,
        "primal_feasibility_tolerance": tol,
        "dual_feasibility_tolerance": tol,
    }


def _solve_dual_lp(E, P, taus, G_le, G_eq, tolerance):
    """Solve the joint pinball LP in dual form; return (alpha, beta, obj, nit).

    Dual variables: for each level k and customer i, y_{ki} in
    [-(1-tau_k)/(nm), tau_k/(nm)] (level-major), plus one multiplier per
    constraint row (non-negative for inequalities, free for equalities).
    The stationarity rows sum(E_i y_{ki}) and sum(sqrt(E_i) y_{ki}) minus
    the transposed constraint rows must vanish; their marginals are the
    primal parameters (negated).
    """
    n, m = len(E), len(taus)
    nm = n * m
    s = np.sqrt(E)
    e_row = sparse.csc_matrix(E.reshape(1, n))
    s_row = sparse.csc_matrix(s.reshape(1, n))
    Im = sparse.identity(m, format="csc")
    A_y = sparse.vstack(
        [sparse.kron(Im, e_row), sparse.kron(Im, s_row)], format="csc"
    )
    blocks = [A_y]
    n_le = 0 if G_le is None else G_le.shape[0]
    n_eq = 0 if G_eq is None else G_eq.shape[0]
    if n_le or n_eq:
        G = np.vstack([g for g in (G_le, G_eq) if g is not None])
        blocks.append(sparse.csc_matrix(-G.T))
    A = sparse.hstack(blocks, format="csc")
    c = np.concatenate([-np.tile(P, m), np.zeros(n_le + n_eq)])
    lo = np.concatenate(
        [
            np.repeat(-(1.0 - taus), n) / nm,
            np.zeros(n_le),
            np.full(n_eq, -np.inf),
        ]
    )
    hi = np.concatenate([np.repeat(taus, n) / nm, np.full(n_le + n_eq, np.inf)])
    res = linprog(
        c,
        A_eq=A,
        b_eq=np.zeros(2 * m),
        bounds=np.column_stack([lo, hi]),
        method="highs",
        options=_highs_options(tolerance),
    )
    if res.status != 0 or res.eqlin is None or res.eqlin.marginals is None:
        raise SolverError(f"dual LP failed: {res.message}")
    marg = -np.asarray(res.eqlin.marginals)
    return marg[:m], marg[m:], float(-res.fun), int(res.nit)


def _solve_dual_lp_shared_alpha(E, P, taus, tolerance):
    """Dual LP for C4 with alpha as a single shared parameter.

    Same construction as `_solve_dual_lp` but with one stationarity row for
    alpha (summing over every level block) and the beta-ordering rows
    expressed over the reduced (alpha, beta_1..m) vector, so no equality
    rows are needed and the recovered alphas are exactly equal.
    """
    n, m = len(E), len(taus)
    nm = n * m
    s = np.sqrt(E)
    s_row = sparse.csc_matrix(s.reshape(1, n))
    Im = sparse.identity(m, format="csc")
    A_y = sparse.vstack(
        [sparse.csc_matrix(np.tile(E, m).reshape(1, nm)), sparse.kron(Im, s_row)],
        format="csc",
    )
    blocks = [A_y]
    n_le = m - 1
    if n_le:
        G = np.zeros((n_le, m + 1))
        for k in range(n_le):
            G[k, 1 + k] = 1.0
            G[k, 2 + k] = -1.0
        blocks.append(sparse.csc_matrix(-G.T))
    A = sparse.hstack(blocks, format="csc")
    c = np.concatenate([-np.tile(P, m), np.zeros(n_le)])
    lo = np.concatenate([np.repeat(-(1.0 - taus), n) / nm, np.zeros(n_le)])
    hi = np.concatenate([np.repeat(taus, n) / nm, np.full(n_le, np.inf)])
    res = linprog(
        c,
        A_eq=A,
        b_eq=np.zeros(m + 1),
        bounds=np.column_stack([lo, hi]),
        method="highs",
        options=_highs_options(tolerance),
    )
    if res.status != 0 or res.eqlin is None or res.eqlin.marginals is None:
        raise SolverError(f"dual LP failed: {res.message}")
    marg = -np.asarray(res.eqlin.marginals)
    alphas = np.full(m, marg[0])
    return alphas, marg[1:], float(-res.fun), int(res.nit)


def _solve_primal_lp(E, P, taus, G_le, G_eq, tolerance):
    """Direct primal solve: variables (alpha, beta, u, v) with u, v >= 0."""
    n, m = len(E), len(taus)
    nm = n * m
    s = np.sqrt(E)
    Im = sparse.identity(m, format="csc")
    Inm = sparse.identity(nm, format="csc")
    e_col = sparse.csc_matrix(E.reshape(n, 1))
    s_col = sparse.csc_matrix(s.reshape(n, 1))
    A_eq = sparse.hstack(
        [sparse.kron(Im, e_col), sparse.kron(Im, s_col), Inm, -Inm], format="csc"
    )
    b_eq = np.tile(P, m)
    n_le = 0 if G_le is None else G_le.shape[0]
    n_eq = 0 if G_eq is None else G_eq.shape[0]
    A_ub = b_ub = None
    if n_le:
        A_ub = sparse.hstack(
            [sparse.csc_matrix(G_le), sparse.csc_matrix((n_le, 2 * nm))],
            format="csc",
        )
        b_ub = np.zeros(n_le)
    if n_eq:
        A_extra = sparse.hstack(
            [sparse.csc_matrix(G_eq), sparse.csc_matrix((n_eq, 2 * nm))],
            format="csc",
        )
        A_eq = sparse.vstack([A_eq, A_extra], format="csc")
        b_eq = np.concatenate([b_eq, np.zeros(n_eq)])
    c = np.concatenate(
        [np.zeros(2 * m), np.repeat(taus, n) / nm, np.repeat(1.0 - taus, n) / nm]
    )
    lo = np.concatenate([np.full(2 * m, -np.inf), np.zeros(2 * nm)])
    hi = np.full(2 * m + 2 * nm, np.inf)
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=np.column_stack([lo, hi]),
        method="highs",
        options=_highs_options(tolerance),
    )
    if res.status != 0:
        raise SolverError(f"primal LP failed: {res.message}")
    x = np.asarray(res.x)
    return x[:m], x[m : 2 * m], float(res.fun), int(res.nit)


def _solve_qp(E, P, taus, G_le, G_eq, beta_l2):
    """Pinball loss + beta_l2 * sum of squared adjacent beta differences."""
    import cvxpy as cp

    n, m = len(E), len(taus)
    s = np.sqrt(E)
    a = cp.Variable(m)
    b = cp.Variable(m)
    terms = []
    for k in range(m):
        r = P - E * a[k] - s * b[k]
        terms.append(cp.sum(cp.maximum(taus[k] * r, (taus[k] - 1.0) * r)))
    objective = cp.sum(cp.hstack(terms)) / (n * m)
    if m > 1:
        objective = objective + beta_l2 * cp.sum_squares(cp.diff(b))
    theta = cp.hstack([a, b])
    cons = []
    if G_le is not None:
        cons.append(G_le @ theta <= 0)
    if G_eq is not None:
        cons.append(G_eq @ theta == 0)
    prob = cp.Problem(cp.Minimize(objective), cons)
    try:
        prob.solve(solver=cp.CLARABEL)
    except (cp.SolverError, ValueError):
        prob.solve()
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise SolverError(f"QP solve failed with status {prob.status!r}")
    stats = prob.solver_stats
    nit = int(stats.num_iters) if stats and stats.num_iters is not None else 0
    return np.asarray(a.value, dtype=float), np.asarray(b.value, dtype=float), nit


def _project_to_regime(constraint, alphas, betas, s_points):
    """Round a near-feasible solution onto the regime exactly.

    C3/C4 use running maxima (exact in floating point); C2 bumps each
    beta upward just enough to restore ordering at the domain endpoints.
    """
    a = np.array(alphas, dtype=float)
    b = np.array(betas, dtype=float)
    if constraint == "C3":
        a = np.maximum.accumulate(a)
        b = np.maximum.accumulate(b)
    elif constraint == "C4":
        a = np.full_like(a, float(np.mean(a)))
        b = np.maximum.accumulate(b)
    elif constraint == "C2":
        for k in range(len(a) - 1):
            bump = 0.0
            for s in s_points:
                bump = max(bump, (a[k] - a[k + 1]) * s + (b[k] - b[k + 1]))
            if bump > 0.0:
                b[k + 1] += bump
    return a, b


def _crossing_violation(alphas, betas, energies) -> float:
    """Worst adjacent-level crossing (kW) of the predictions at ``energies``."""
    e = np.asarray(energies, dtype=float)
    pred = e[:, None] * alphas[None, :] + np.sqrt(e)[:, None] * betas[None, :]
    if pred.shape[1] < 2:
        return 0.0
    return float(np.maximum(-np.diff(pred, axis=1), 0.0).max())


def fit(problem: FitProblem) -> FitResult:
    """Fit the quantile Velander model for ``problem``.

    Returns exactly-feasible parameters (regime violations at most
    ``REGIME_TOL``) and the average pinball loss they achieve on the
    training records.
    """
    E = problem.energies
    P = problem.peaks
    taus = problem.grid.as_array()
    m = len(taus)
    dom = problem.effective_ec_domain()
    constraints = compile_constraints(problem.grid, problem.constraint, dom)
    G_le, G_eq = _constraint_matrices(constraints)

    if problem.beta_l2 > 0.0:
        alphas, betas, nit = _solve_qp(E, P, taus, G_le, G_eq, problem.beta_l2)
        status = "optimal-qp"
    else:
        if problem.constraint == "C4":
            alphas, betas, objective, nit = _solve_dual_lp_shared_alpha(
                E, P, taus, problem.tolerance
            )
        else:
            alphas, betas, objective, nit = _solve_dual_lp(
                E, P, taus, G_le, G_eq, problem.tolerance
            )
        status = "optimal"
        recovered = apl_arrays(E, P, taus, alphas, betas)
        scale = max(abs(objective), 1.0)
        if not math.isfinite(recovered) or abs(recovered - objective) > 1e-6 * scale:
            logger.warning(
                "dual-recovered loss %.3e disagrees with LP objective %.3e; "
                "re-solving in primal form",
                recovered,
                objective,
            )
            alphas, betas, objective, nit2 = _solve_primal_lp(
                E, P, taus, G_le, G_eq, problem.tolerance
            )
            nit += nit2
            status = "optimal-primal-fallback"

    if problem.constraint == "C2":
        lo, hi = float(dom.min()), float(dom.max())
        s_points = (math.sqrt(lo), math.sqrt(hi))
        fit_range = (lo, hi)
    else:
        s_points = ()
        fit_range = (float(E.min()), float(E.max()))
    alphas, betas = _project_to_regime(problem.constraint, alphas, betas, s_points)

    params = QuantileParamSet(
        constraint=problem.constraint,
        levels=problem.grid.levels,
        alpha=tuple(float(v) for v in alphas),
        beta=tuple(float(v) for v in betas),
        fit_ec_range=fit_range,
    )

    if problem.constraint != "C1":
        scan_points = np.unique(np.concatenate([E, dom]))
        worst = _crossing_violation(np.asarray(alphas), np.asarray(betas), scan_points)
        if worst > REGIME_TOL:
            raise SolverError(
                f"post-fit scan found a {worst:.3e} kW quantile crossing"
            )

    achieved = average_pinball_loss(problem.records, params)
    return FitResult(
        params=params,
        achieved_apl=achieved,
        iterations=nit,
        solver_status=status,
        parameter_count=parameter_count(m, problem.constraint),
    )


# ---------------------------------------------------------------------------
# Independent optimality check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimalityCheck:
    """Outcome of the grid-search check.

    ``gap`` is candidate APL minus the best APL the search found (never
    negative: the candidate itself is always evaluated).  ``verdict`` is
    one of ``confirmed`` (search converged, candidate within tolerance of
    the best point), ``improvable`` (a clearly better point was found) or
    ``inconclusive`` (evaluation budget exhausted before the grid
    resolution reached the tolerance).
    """

    verdict: str
    candidate_apl: float
    best_apl: float
    gap: float
    evaluations: int
    best_alpha: tuple[float, ...]
    best_beta: tuple[float, ...]


def _coords_from_params(constraint, a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if constraint == "C4":
        return np.concatenate([a[:1], b[:1], np.maximum(np.diff(b), 0.0)])
    if constraint == "C3":
        return np.concatenate(
            [a[:1], np.maximum(np.diff(a), 0.0), b[:1], np.maximum(np.diff(b), 0.0)]
        )
    return np.concatenate([a, b])


def _params_from_coords(constraint, T, m):
    T = np.atleast_2d(T)
    if constraint == "C4":
        A = np.repeat(T[:, :1], m, axis=1)
        B = np.cumsum(T[:, 1:], axis=1)
    elif constraint == "C3":
        A = np.cumsum(T[:, :m], axis=1)
        B = np.cumsum(T[:, m:], axis=1)
    else:
        A = T[:, :m]
        B = T[:, m:]
    return A, B


def _nonneg_dims(constraint, m):
    if constraint == "C4":
        return np.array([False, False] + [True] * (m - 1))
    if constraint == "C3":
        return np.array(([False] + [True] * (m - 1)) * 2)
    return np.zeros(2 * m, dtype=bool)


def _coord_lipschitz(constraint, m, mean_e, mean_s):
    """Per-coordinate bound on |dAPL/dcoord| (loss is 1-Lipschitz in the
    prediction; a cumulative coordinate moves every later level)."""
    if constraint == "C4":
        tail = np.arange(m, 0, -1) / m
        return np.concatenate([[mean_e], mean_s * tail])
    if constraint == "C3":
        tail = np.arange(m, 0, -1) / m
        return np.concatenate([mean_e * tail, mean_s * tail])
    return np.concatenate([np.full(m, mean_e / m), np.full(m, mean_s / m)])


def _batch_apl(A, B, E, P, taus, chunk=4096):
    s = np.sqrt(E)
    out = np.empty(A.shape[0])
    for start in range(0, A.shape[0], chunk):
        sl = slice(start, start + chunk)
        pred = A[sl, None, :] * E[None, :, None] + B[sl, None, :] * s[None, :, None]
        d = P[None, :, None] - pred
        loss = np.where(d >= 0.0, taus[None, None, :] * d, (taus[None, None, :] - 1.0) * d)
        out[sl] = loss.mean(axis=(1, 2))
    return out


def _grid_points_per_dim(d: int) -> int:
    if d <= 2:
        return 9
    if d <= 4:
        return 7
    if d <= 6:
        return 5
    return 3


def verify_optimality(
    problem: FitProblem,
    candidate: QuantileParamSet,
    budget: int = 400_000,
    rel_tol: float = 1e-4,
) -> OptimalityCheck:
    """Cross-check a candidate fit against a grid search with refinement.

    The search runs in a regime-specific coordinate system (differences for
    the monotone regimes, an explicit feasibility filter for C2), halving
    the box around the incumbent until the achievable improvement per cell
    drops below ``rel_tol`` of the incumbent loss, or ``budget`` points
    have been evaluated.  Intended for small problems (a few records, a
    handful of levels); cost grows exponentially with the level count.
    """
    if tuple(candidate.levels) != problem.grid.levels:
        raise ValueError("candidate was fitted on a different quantile grid")
    if candidate.constraint != problem.constraint:
        raise ValueError("candidate was fitted under a different regime")
    if len(problem.records) > 10 or len(problem.grid) > 3:
        raise ValueError(
            "the optimality check supports at most 10 records and 3 levels"
        )
    E = problem.energies
    P = problem.peaks
    taus = problem.grid.as_array()
    m = len(taus)
    regime = problem.constraint

    dom = problem.effective_ec_domain()
    s_ends = np.array([math.sqrt(dom.min()), math.sqrt(dom.max())])

    def feasible_mask(A, B):
        if regime != "C2" or m < 2:
            return np.ones(A.shape[0], dtype=bool)
        da = np.diff(A, axis=1)
        db = np.diff(B, axis=1)
        ok = np.ones(A.shape[0], dtype=bool)
        for s in s_ends:
            ok &= np.all(da * s + db >= -REGIME_TOL, axis=1)
        return ok

    cand = _coords_from_params(regime, candidate.alpha, candidate.beta)
    d = cand.size
    nonneg = _nonneg_dims(regime, m)
    lipschitz = _coord_lipschitz(regime, m, float(E.mean()), float(np.sqrt(E).mean()))

    peak_scale = max(float(np.abs(P).max()), 1e-9)
    n_alpha_dims = 1 if regime == "C4" else m
    floor = np.where(
        np.arange(d) < n_alpha_dims,
        peak_scale / max(float(E.max()), 1e-12),
        peak_scale / max(float(np.sqrt(E).max()), 1e-12),
    )

    cand_A, cand_B = _params_from_coords(regime, cand[None, :], m)
    candidate_apl = float(_batch_apl(cand_A, cand_B, E, P, taus)[0])
    best = cand.copy()
    best_apl = candidate_apl
    center = cand.copy()
    half = np.maximum(np.abs(cand), floor)
    r = _grid_points_per_dim(d)
    evaluations = 0
    converged = False
    apl_floor = max(1e-12, 1e-12 * peak_scale)

    for _stage in range(400):
        axes = []
        for j in range(d):
            ax = np.linspace(center[j] - half[j], center[j] + half[j], r)
            if nonneg[j]:
                ax = np.maximum(ax, 0.0)
            axes.append(ax)
        pts = np.array(list(itertools.product(*axes)))
        pts = np.vstack([pts, best[None, :], cand[None, :]])
        A, B = _params_from_coords(regime, pts, m)
        mask = feasible_mask(A, B)
        if not mask.any():
            mask[-1] = True  # the candidate itself is always feasible
        apls = np.full(pts.shape[0], np.inf)
        apls[mask] = _batch_apl(A[mask], B[mask], E, P, taus)
        evaluations += int(mask.sum())
        k_best = int(np.argmin(apls))
        if apls[k_best] < best_apl:
            best_apl = float(apls[k_best])
            best = pts[k_best].copy()
        # Did the incumbent land on the search-box edge (not a clip floor)?
        on_edge = False
        for j in range(d):
            lo_j, hi_j = axes[j][0], axes[j][-1]
            if best[j] >= hi_j - 1e-15 * max(1.0, abs(hi_j)) and half[j] > 0:
                on_edge = True
            if (
                best[j] <= lo_j + 1e-15 * max(1.0, abs(lo_j))
                and not (nonneg[j] and lo_j <= 0.0)
                and half[j] > 0
            ):
                on_edge = True
        center = best.copy()
        if not on_edge:
            half = half * 0.5
        resolution = float(np.sum(half * lipschitz)) * 2.0 / (r - 1)
        if best_apl <= apl_floor or resolution <= 0.5 * rel_tol * max(
            best_apl, apl_floor
        ):
            converged = True
            break
        if evaluations >= budget:
            break

    gap = max(candidate_apl - best_apl, 0.0)
    threshold = rel_tol * max(best_apl, apl_floor)
    if gap > threshold:
        verdict = "improvable"
    elif converged:
        verdict = "confirmed"
    else:
        verdict = "inconclusive"
    best_A, best_B = _params_from_coords(regime, best[None, :], m)
    return OptimalityCheck(
        verdict=verdict,
        candidate_apl=candidate_apl,
        best_apl=best_apl,
        gap=gap,
        evaluations=evaluations,
        best_alpha=tuple(float(v) for v in best_A[0]),
        best_beta=tuple(float(v) for v in best_B[0]),
    )
