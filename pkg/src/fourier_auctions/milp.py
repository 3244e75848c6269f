"""MILP models for winner determination and their solution.

Three WDP families are built here: Fourier-sparse (one constraint block per
transform), ReLU-network surrogates (big-M encoding) and plain reported
bids.  :func:`solve` runs a small branch and bound over a dense two-phase
simplex, or optionally HiGHS through ``scipy.optimize.milp``.
"""
from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

from .core import Allocation, CapacityError, popcount
from .fourier import SparseSpectrum, TransformKind, inverse

log = logging.getLogger(__name__)

INT_TOL = 1e-6
OBJ_TOL = 1e-7
EXHAUSTIVE_LIMIT = 10**7


class VarKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    INTEGER = "integer"


class ModelBuildError(ValueError):
    pass


@dataclass
class MilpModel:
    """A maximization MILP: ``max c x + const`` subject to linear rows."""

    names: list[str] = field(default_factory=list)
    kinds: list[VarKind] = field(default_factory=list)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    obj: dict[int, float] = field(default_factory=dict)
    obj_const: float = 0.0
    # constraint rows as (column indices, coefficients, sense, rhs)
    rows: list[tuple[np.ndarray, np.ndarray, str, float]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return len(self.names)

    def add_var(self, name: str, kind=VarKind.CONTINUOUS, lb: float = 0.0, ub: float = math.inf) -> int:
        kind = VarKind(kind)
        if kind is VarKind.BINARY:
            lb, ub = 0.0, 1.0
        if kind is VarKind.INTEGER and not (math.isfinite(lb) and math.isfinite(ub)):
            raise ModelBuildError(f"integer variable {name} needs finite bounds")
        if lb > ub:
            raise ModelBuildError(f"empty bounds on {name}: [{lb}, {ub}]")
        self.names.append(name)
        self.kinds.append(kind)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        return len(self.names) - 1

    def add_vars(self, prefix: str, count: int, kind=VarKind.CONTINUOUS, lb=0.0, ub=math.inf) -> np.ndarray:
        lbs = np.broadcast_to(np.asarray(lb, dtype=float), (count,))
        ubs = np.broadcast_to(np.asarray(ub, dtype=float), (count,))
        return np.array([self.add_var(f"{prefix}[{t}]", kind, lbs[t], ubs[t]) for t in range(count)], dtype=np.int64)

    def add_constr(self, idx, coef, sense: str, rhs: float) -> None:
        if sense not in ("<=", ">=", "="):
            raise ModelBuildError(f"bad constraint sense {sense!r}")
        idx = np.asarray(idx, dtype=np.int64).reshape(-1)
        coef = np.broadcast_to(np.asarray(coef, dtype=float), idx.shape).copy()
        if idx.size and (idx.min() < 0 or idx.max() >= self.num_vars):
            raise ModelBuildError("constraint references an undeclared variable")
        self.rows.append((idx, coef, sense, float(rhs)))

    def add_objective(self, idx, coef) -> None:
        idx = np.asarray(idx, dtype=np.int64).reshape(-1)
        coef = np.broadcast_to(np.asarray(coef, dtype=float), idx.shape)
        for j, c in zip(idx.tolist(), coef.tolist()):
            self.obj[j] = self.obj.get(j, 0.0) + c

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.num_vars)
        for j, v in self.obj.items():
            c[j] = v
        return c

    def constraint_matrix(self) -> tuple[sparse.csr_matrix, np.ndarray, np.ndarray]:
        data, ri, ci = [], [], []
        lo = np.empty(len(self.rows))
        hi = np.empty(len(self.rows))
        for r, (idx, coef, sense, rhs) in enumerate(self.rows):
            ri.append(np.full(idx.size, r))
            ci.append(idx)
            data.append(coef)
            lo[r] = rhs if sense in (">=", "=") else -np.inf
            hi[r] = rhs if sense in ("<=", "=") else np.inf
        if self.rows:
            A = sparse.csr_matrix(
                (np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))),
                shape=(len(self.rows), self.num_vars),
            )
        else:
            A = sparse.csr_matrix((0, self.num_vars))
        return A, lo, hi

    def to_lp(self) -> str:
        """Plain-text dump in CPLEX LP style, for debugging."""

        def term(c, j):
            return f"{'+' if c >= 0 else '-'} {abs(c):.12g} {self.names[j]}"

        lines = ["Maximize", " obj: " + " ".join(term(c, j) for j, c in sorted(self.obj.items()))]
        if self.obj_const:
            lines[-1] += f" + {self.obj_const:.12g}"
        lines.append("Subject To")
        for r, (idx, coef, sense, rhs) in enumerate(self.rows):
            lhs = " ".join(term(c, j) for j, c in zip(idx.tolist(), coef.tolist())) or "0"
            lines.append(f" c{r}: {lhs} {sense} {rhs:.12g}")
        lines.append("Bounds")
        for j, name in enumerate(self.names):
            if self.kinds[j] is not VarKind.BINARY:
                lines.append(f" {self.lb[j]:.12g} <= {name} <= {self.ub[j]:.12g}")
        for label, kind in (("Binaries", VarKind.BINARY), ("Generals", VarKind.INTEGER)):
            group = [self.names[j] for j in range(self.num_vars) if self.kinds[j] is kind]
            if group:
                lines.append(label)
                lines.append(" " + " ".join(group))
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class MilpSolution:
    status: str  # "optimal", "infeasible", "iteration-limit", "unbounded", "error"
    objective: float | None
    x: np.ndarray | None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def values(self, idx) -> np.ndarray:
        return self.x[np.asarray(idx, dtype=np.int64)]


def solve(model: MilpModel, node_limit: int | None = None, time_limit: float | None = None,
          backend: str = "bnb") -> MilpSolution:
    """Solve ``model`` to proven optimality unless a node or time limit hits first.

    ``backend="bnb"`` runs the built-in branch and bound over a dense simplex;
    ``backend="highs"`` hands the model to HiGHS (much faster on the larger
    network WDPs, same optimality guarantee at zero relative gap).
    """
    n = model.num_vars
    if n == 0:
        feasible = all(
            (s == "<=" and 0 <= rhs + OBJ_TOL) or (s == ">=" and 0 >= rhs - OBJ_TOL) or (s == "=" and abs(rhs) <= OBJ_TOL)
            for _, _, s, rhs in model.rows
        )
        if not feasible:
            return MilpSolution("infeasible", None, None)
        return MilpSolution("optimal", model.obj_const, np.zeros(0))
    if backend == "bnb":
        status, x, msg = _branch_and_bound(model, node_limit, time_limit)
    elif backend == "highs":
        status, x, msg = _solve_highs(model, node_limit, time_limit)
    else:
        raise ValueError(f"unknown MILP backend {backend!r}")
    if x is None:
        return MilpSolution(status, None, None, msg)
    ints = _int_mask(model)
    frac = np.abs(x[ints] - np.round(x[ints]))
    if frac.size and frac.max() > INT_TOL:
        log.warning("integrality violated by %.2e", frac.max())
    x = x.copy()
    x[ints] = np.round(x[ints])
    obj = float(model.objective_vector() @ x + model.obj_const)
    return MilpSolution(status, obj, x, msg)


def _int_mask(model: MilpModel) -> np.ndarray:
    return np.array([k is not VarKind.CONTINUOUS for k in model.kinds], dtype=bool)


def _solve_highs(model, node_limit, time_limit):
    c = -model.objective_vector()
    A, lo, hi = model.constraint_matrix()
    options = {"mip_rel_gap": 0.0, "presolve": True}
    if node_limit is not None:
        options["node_limit"] = int(node_limit)
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    cons = [LinearConstraint(A, lo, hi)] if A.shape[0] else []
    res = milp(c, integrality=_int_mask(model).astype(int), bounds=Bounds(np.array(model.lb), np.array(model.ub)),
               constraints=cons, options=options)
    if res.status == 2:
        return "infeasible", None, res.message
    if res.status == 3:
        return "unbounded", None, res.message
    if res.x is None:
        return ("iteration-limit" if res.status == 1 else "error"), None, res.message
    return ("optimal" if res.status == 0 else "iteration-limit"), np.array(res.x, dtype=float), res.message


# --------------------------------------------------------------------------
# dense simplex

PIVOT_TOL = 1e-9
DEGENERATE_SWITCH = 50


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _simplex_iterate(T: np.ndarray, basis: np.ndarray, ncols: int, max_iter: int) -> str:
    """Minimize the cost held in the last tableau row over the first ``ncols`` columns.

    Dantzig pricing; after a run of degenerate pivots it falls back to
    Bland's rule, which cannot cycle.
    """
    R = T.shape[0] - 1
    stall = 0
    last = T[-1, -1]
    for _ in range(max_iter):
        d = T[-1, :ncols]
        cand = np.flatnonzero(d < -PIVOT_TOL)
        if cand.size == 0:
            return "optimal"
        bland = stall >= DEGENERATE_SWITCH
        c = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
        col = T[:R, c]
        pos = np.flatnonzero(col > PIVOT_TOL)
        if pos.size == 0:
            return "unbounded"
        ratios = T[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = int(ties[np.argmin(basis[ties])]) if bland else int(ties[np.argmax(np.abs(col[ties]))])
        _pivot(T, r, c)
        basis[r] = c
        # the last entry holds minus the objective; track progress for the cycling guard
        stall = stall + 1 if abs(T[-1, -1] - last) <= 1e-12 else 0
        last = T[-1, -1]
    return "iteration-limit"


def dense_simplex(c, A, senses, b, lb, ub, max_iter: int = 50_000):
    """Maximize ``c x`` s.t. ``A x (senses) b``, ``lb <= x <= ub`` by two-phase tableau simplex.

    Returns ``(status, x, objective)`` with status one of ``optimal``,
    ``infeasible``, ``unbounded`` or ``iteration-limit``.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, c.size)
    b = np.asarray(b, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    n = c.size
    # substitute x = shift + S x' with x' >= 0
    shift = np.zeros(n)
    S_cols = []
    bound_rows = []  # (column of x', upper bound)
    for j in range(n):
        if lb[j] > ub[j]:
            return "infeasible", None, None
        if np.isfinite(lb[j]):
            shift[j] = lb[j]
            S_cols.append((j, 1.0))
            if np.isfinite(ub[j]):
                bound_rows.append((len(S_cols) - 1, ub[j] - lb[j]))
        elif np.isfinite(ub[j]):
            shift[j] = ub[j]
            S_cols.append((j, -1.0))
        else:
            S_cols.append((j, 1.0))
            S_cols.append((j, -1.0))
    p = len(S_cols)
    S = np.zeros((n, p))
    for t, (j, s) in enumerate(S_cols):
        S[j, t] = s
    rows = A @ S
    rhs = b - A @ shift
    senses = list(senses)
    if bound_rows:
        extra = np.zeros((len(bound_rows), p))
        for r, (t, u) in enumerate(bound_rows):
            extra[r, t] = 1.0
        rows = np.vstack([rows, extra])
        rhs = np.concatenate([rhs, [u for _, u in bound_rows]])
        senses += ["<="] * len(bound_rows)
    R = rows.shape[0]
    rows = rows.copy()
    rhs = rhs.copy()
    for r in range(R):
        if rhs[r] < 0:
            rows[r] *= -1
            rhs[r] *= -1
            senses[r] = {"<=": ">=", ">=": "<=", "=": "="}[senses[r]]
    n_slack = sum(s in ("<=", ">=") for s in senses)
    n_art = sum(s in (">=", "=") for s in senses)
    N = p + n_slack + n_art
    T = np.zeros((R + 1, N + 1))
    T[:R, :p] = rows
    T[:R, -1] = rhs
    basis = np.empty(R, dtype=np.int64)
    k_s, k_a = p, p + n_slack
    for r, s in enumerate(senses):
        if s == "<=":
            T[r, k_s] = 1.0
            basis[r] = k_s
            k_s += 1
        else:
            if s == ">=":
                T[r, k_s] = -1.0
                k_s += 1
            T[r, k_a] = 1.0
            basis[r] = k_a
            k_a += 1
    art0 = p + n_slack
    if n_art:
        # phase I: minimize the sum of artificials
        art_rows = basis >= art0
        T[-1, :art0] = -T[:R][art_rows, :art0].sum(axis=0)
        T[-1, -1] = -T[:R][art_rows, -1].sum()
        status = _simplex_iterate(T, basis, art0, max_iter)
        if status == "iteration-limit":
            return status, None, None
        if -T[-1, -1] > 1e-7 * max(1.0, np.abs(rhs).max(initial=0.0)):
            return "infeasible", None, None
        # drive artificials out of the basis, dropping redundant rows
        keep = np.ones(R, dtype=bool)
        for r in range(R):
            if basis[r] >= art0:
                nz = np.flatnonzero(np.abs(T[r, :art0]) > PIVOT_TOL)
                if nz.size:
                    _pivot(T, r, int(nz[0]))
                    basis[r] = int(nz[0])
                else:
                    keep[r] = False
        T = np.vstack([T[:R][keep], T[-1:]])
        basis = basis[keep]
        R = int(keep.sum())
        T = np.delete(T, np.s_[art0:N], axis=1)
    # phase II: minimize -c' x'
    cost = np.zeros(art0)
    cost[:p] = -(S.T @ c)
    T[-1, :] = 0.0
    T[-1, :art0] = cost - cost[basis] @ T[:R, :art0]
    T[-1, -1] = -cost[basis] @ T[:R, -1]
    status = _simplex_iterate(T, basis, art0, max_iter)
    if status != "optimal":
        return status, None, None
    xp = np.zeros(art0)
    xp[basis] = T[:R, -1]
    x = shift + S @ xp[:p]
    return "optimal", x, float(c @ x)


# --------------------------------------------------------------------------
# branch and bound

def _branch_and_bound(model: MilpModel, node_limit, time_limit):
    c = model.objective_vector()
    A, lo, hi = model.constraint_matrix()
    A = A.toarray()
    # split two-sided rows into one-sided senses for the tableau
    rows, senses, rhs = [], [], []
    for r, (_, _, s, v) in enumerate(model.rows):
        rows.append(A[r])
        senses.append(s)
        rhs.append(v)
    A = np.array(rows).reshape(-1, model.num_vars)
    ints = _int_mask(model)
    t0 = time.monotonic()
    best_obj, best_x = -math.inf, None
    # open nodes: (parent bound, sequence number, lb, ub)
    open_nodes = [(math.inf, 0, np.array(model.lb), np.array(model.ub))]
    seq = 1
    processed = 0
    limited = False
    while open_nodes:
        if (node_limit is not None and processed >= node_limit) or (
            time_limit is not None and time.monotonic() - t0 > time_limit
        ):
            limited = True
            break
        if best_x is None:
            pick = max(range(len(open_nodes)), key=lambda t: open_nodes[t][1])  # dive: newest first
        else:
            pick = max(range(len(open_nodes)), key=lambda t: (open_nodes[t][0], -open_nodes[t][1]))
        bound, _, lb, ub = open_nodes.pop(pick)
        if bound <= best_obj + OBJ_TOL:
            continue
        processed += 1
        status, x, obj = dense_simplex(c, A, senses, rhs, lb, ub)
        if status == "unbounded" and best_x is None and processed == 1:
            return "unbounded", None, "LP relaxation unbounded"
        if status != "optimal" or obj <= best_obj + OBJ_TOL:
            continue
        frac = np.abs(x - np.round(x))
        frac[~ints] = 0.0
        if frac.max(initial=0.0) <= INT_TOL:
            best_obj, best_x = obj, x
            continue
        j = int(np.argmax(np.where(frac > INT_TOL, 0.5 - np.abs(frac - 0.5), -1.0)))  # most fractional
        down_ub = ub.copy()
        down_ub[j] = math.floor(x[j])
        up_lb = lb.copy()
        up_lb[j] = math.ceil(x[j])
        # the child on the rounding side gets the higher sequence number, so the dive takes it first
        up_first = x[j] - math.floor(x[j]) >= 0.5
        open_nodes.append((obj, seq + (not up_first), lb, down_ub))
        open_nodes.append((obj, seq + up_first, up_lb, ub))
        seq += 2
    if best_x is None:
        return ("iteration-limit" if limited else "infeasible"), None, f"{processed} nodes"
    return ("iteration-limit" if limited else "optimal"), best_x, f"{processed} nodes"


# --------------------------------------------------------------------------
# WDP builders

def _allocation_block(model: MilpModel, m: int, active: Sequence[bool]) -> np.ndarray:
    """Binary ``a[i, j]`` for active bidders (``-1`` for inactive) plus item rows."""
    n = len(active)
    alloc = np.full((n, m), -1, dtype=np.int64)
    for i in range(n):
        if active[i]:
            alloc[i] = model.add_vars(f"a{i}", m, VarKind.BINARY)
    if sum(active) > 1:
        for j in range(m):
            col = alloc[:, j]
            model.add_constr(col[col >= 0], 1.0, "<=", 1.0)
    model.meta["alloc"] = alloc
    model.meta["m"] = m
    return alloc


def _add_exclusions(model: MilpModel, alloc: np.ndarray, exclusions) -> None:
    # Hamming distance >= 1 from every excluded bundle
    if not exclusions:
        return
    m = alloc.shape[1]
    for i, excl in enumerate(exclusions):
        if not excl or alloc[i, 0] < 0:
            continue
        for x in excl:
            x = int(x)
            inside = np.array([(x >> j) & 1 for j in range(m)], dtype=bool)
            coef = np.where(inside, -1.0, 1.0)
            model.add_constr(alloc[i], coef, ">=", 1.0 - inside.sum())


def big_m(m: int) -> float:
    return float(m + 1)


def build_ft_wdp(spectra: Sequence[SparseSpectrum | None], exclusions=None) -> MilpModel:
    """MILP whose optima maximize the summed sparse approximations over feasible allocations.

    ``spectra[i] is None`` leaves bidder ``i`` out (empty bundle).
    ``exclusions[i]`` lists bundles bidder ``i`` must not receive.
    """
    present = [s for s in spectra if s is not None]
    if not present:
        raise ModelBuildError("no bidder spectra given")
    kinds = {s.kind for s in present}
    if len(kinds) != 1:
        raise ModelBuildError(f"mixed transform kinds {sorted(k.value for k in kinds)} in one WDP")
    ms = {s.m for s in present}
    if len(ms) != 1:
        raise ModelBuildError("spectra disagree on the number of items")
    kind, m = kinds.pop(), ms.pop()
    C = big_m(m)
    model = MilpModel()
    alloc = _allocation_block(model, m, [s is not None for s in spectra])
    model.meta.update(kind=kind, spectra=list(spectra), alpha={}, beta={}, gamma={}, big_m=C)
    for i, s in enumerate(spectra):
        if s is None or len(s) == 0:
            continue
        k = len(s)
        W = s.support_matrix()
        sizes = W.sum(axis=1)
        if kind is TransformKind.WHT:
            alpha = model.add_vars(f"alpha{i}", k, VarKind.CONTINUOUS, -1.0, 1.0)
            beta = model.add_vars(f"beta{i}", k, VarKind.BINARY)
            gamma = model.add_vars(f"gamma{i}", k, VarKind.INTEGER, 0.0, sizes // 2)
            for l in range(k):
                items_l = alloc[i][W[l] == 1]
                # alpha = 1 - 2 beta
                model.add_constr([alpha[l], beta[l]], [1.0, 2.0], "=", 1.0)
                # beta = W a - 2 gamma
                model.add_constr(np.r_[beta[l], gamma[l], items_l], np.r_[1.0, 2.0, -np.ones(items_l.size)], "=", 0.0)
        else:
            alpha = model.add_vars(f"alpha{i}", k, VarKind.CONTINUOUS, 0.0, C)
            beta = model.add_vars(f"beta{i}", k, VarKind.BINARY)
            gamma = None
            for l in range(k):
                items_l = alloc[i][W[l] == 1]
                # eta = 1 - W(1 - a) = 1 - |y| + W a  (FT3);  eta = 1 - W a  (FT4)
                if kind is TransformKind.FT3:
                    sign, const = 1.0, 1.0 - sizes[l]
                else:
                    sign, const = -1.0, 1.0
                ones = np.ones(items_l.size)
                # alpha >= eta
                model.add_constr(np.r_[alpha[l], items_l], np.r_[1.0, -sign * ones], ">=", const)
                # alpha <= eta + C beta
                model.add_constr(np.r_[alpha[l], items_l, beta[l]], np.r_[1.0, -sign * ones, -C], "<=", const)
                # alpha <= C (1 - beta)
                model.add_constr([alpha[l], beta[l]], [1.0, C], "<=", C)
        model.add_objective(alpha, s.coeffs)
        model.meta["alpha"][i] = alpha
        model.meta["beta"][i] = beta
        if gamma is not None:
            model.meta["gamma"][i] = gamma
    _add_exclusions(model, alloc, exclusions)
    return model


def build_reported_wdp(reports: Sequence, exclusions=None, m: int | None = None) -> MilpModel:
    """Reported-welfare WDP: each bidder wins at most one of its reported bundles."""
    model = MilpModel()
    selectors: list[tuple[int, int, int]] = []
    per_item: dict[int, list[int]] = {}
    for i, r in enumerate(reports):
        banned = set(int(x) for x in exclusions[i]) if exclusions and exclusions[i] else set()
        mine = []
        for b, v in r.items():
            b = int(b)
            if b in banned:
                continue
            z = model.add_var(f"z{i}_{b}", VarKind.BINARY)
            model.add_objective([z], [float(v)])
            selectors.append((i, b, z))
            mine.append(z)
            j = 0
            while b >> j:
                if (b >> j) & 1:
                    per_item.setdefault(j, []).append(z)
                j += 1
        if len(mine) > 1:
            model.add_constr(mine, 1.0, "<=", 1.0)
    for j, zs in sorted(per_item.items()):
        if len(zs) > 1:
            model.add_constr(zs, 1.0, "<=", 1.0)
    model.meta.update(selectors=selectors, n=len(reports), m=m)
    return model


def interval_bounds(weights, biases, lo, hi):
    """Pre-activation bounds per layer by interval arithmetic on ReLU layers."""
    bounds = []
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    for W, b in zip(weights, biases):
        Wp, Wn = np.maximum(W, 0), np.minimum(W, 0)
        zl = Wp @ lo + Wn @ hi + b
        zu = Wp @ hi + Wn @ lo + b
        if not (np.all(np.isfinite(zl)) and np.all(np.isfinite(zu))):
            raise ModelBuildError("activation bounds overflow")
        bounds.append((zl, zu))
        lo, hi = np.maximum(zl, 0), np.maximum(zu, 0)
    return bounds


def build_nn_wdp(networks: Sequence, exclusions=None) -> MilpModel:
    """Big-M MILP maximizing summed network outputs over feasible allocations.

    Every layer (hidden and output) applies ReLU.  Units whose bounds are
    one-signed get no binary.  ``networks[i] is None`` leaves bidder ``i``
    out of the economy.
    """
    present = [net for net in networks if net is not None]
    if not present:
        raise ModelBuildError("no networks given")
    m = present[0].weights[0].shape[1]
    model = MilpModel()
    alloc = _allocation_block(model, m, [net is not None for net in networks])
    model.meta["outputs"] = {}
    for i, net in enumerate(networks):
        if net is None:
            continue
        bounds = interval_bounds(net.weights, net.biases, np.zeros(m), np.ones(m))
        # each layer input is (variable indices, constant offsets): value = x[var] or const
        prev = [(int(v), 0.0) for v in alloc[i]]
        for layer, (W, b) in enumerate(zip(net.weights, net.biases)):
            zl, zu = bounds[layer]
            cur = []
            for u in range(W.shape[0]):
                idx = [v for v, _ in prev if v >= 0]
                coef = [W[u, t] for t, (v, _) in enumerate(prev) if v >= 0]
                const = b[u] + sum(W[u, t] * c for t, (v, c) in enumerate(prev) if v < 0)
                if zu[u] <= 0:
                    cur.append((-1, 0.0))
                    continue
                y = model.add_var(f"y{i}_{layer}_{u}", VarKind.CONTINUOUS, 0.0, float(zu[u]))
                if zl[u] >= 0:
                    # always active: y = z
                    model.add_constr([y] + idx, [1.0] + [-c for c in coef], "=", const)
                else:
                    d = model.add_var(f"d{i}_{layer}_{u}", VarKind.BINARY)
                    # y >= z
                    model.add_constr([y] + idx, [1.0] + [-c for c in coef], ">=", const)
                    # y <= z - L (1 - d)
                    model.add_constr([y, d] + idx, [1.0, -float(zl[u])] + [-c for c in coef], "<=", const - float(zl[u]))
                    # y <= U d
                    model.add_constr([y, d], [1.0, -float(zu[u])], "<=", 0.0)
                cur.append((y, 0.0))
            prev = cur
        out_var, out_const = prev[0]
        if out_var >= 0:
            model.add_objective([out_var], [1.0])
        model.meta["outputs"][i] = out_var
    _add_exclusions(model, alloc, exclusions)
    return model


def decode_allocation(model: MilpModel, sol: MilpSolution) -> Allocation:
    if "alloc" in model.meta:
        alloc = model.meta["alloc"]
        bundles = []
        for row in alloc:
            if row[0] < 0:
                bundles.append(0)
                continue
            bits = np.round(sol.x[row]).astype(np.int64)
            bundles.append(int((bits << np.arange(row.size)).sum()))
        return Allocation(bundles)
    bundles = [0] * model.meta["n"]
    for i, b, z in model.meta["selectors"]:
        if sol.x[z] > 0.5:
            bundles[i] = b
    return Allocation(bundles)


def solve_wdp(model: MilpModel, **limits) -> tuple[Allocation, float, MilpSolution]:
    """Solve a WDP model and decode the allocation."""
    sol = solve(model, **limits)
    if sol.x is None:
        raise RuntimeError(f"WDP not solved: {sol.status} {sol.message}")
    return decode_allocation(model, sol), float(sol.objective), sol


# --------------------------------------------------------------------------
# exact oracles

def _tables(values, m: int) -> list[np.ndarray]:
    out = []
    for v in values:
        if hasattr(v, "dense"):
            t = np.asarray(v.dense(), dtype=float)
        elif callable(v):
            t = np.asarray(v(np.arange(1 << m, dtype=np.int64)), dtype=float)
        else:
            t = np.asarray(v, dtype=float)
        if t.shape != (1 << m,):
            raise ValueError("value table has the wrong length")
        out.append(t)
    return out


def exhaustive_wdp(values, m: int, exclusions=None) -> tuple[Allocation, float]:
    """Best feasible allocation by enumerating all ``(n+1)^m`` item assignments.

    Ties go to the lexicographically smallest tuple of bundle integers.
    """
    n = len(values)
    if (n + 1) ** m > EXHAUSTIVE_LIMIT:
        raise CapacityError(f"(n+1)^m = {(n + 1) ** m} assignments exceed {EXHAUSTIVE_LIMIT}")
    tables = _tables(values, m)
    for i, excl in enumerate(exclusions or []):
        if excl:
            tables[i] = tables[i].copy()
            tables[i][np.asarray(list(excl), dtype=np.int64)] = -np.inf
    # owner of item j: 0 = unassigned, i+1 = bidder i; enumerate all owner vectors
    base = n + 1
    codes = np.arange(base**m, dtype=np.int64)
    bundles = np.zeros((n, codes.size), dtype=np.int64)
    rest = codes
    for j in range(m):
        owner = rest % base
        rest = rest // base
        for i in range(n):
            bundles[i] |= (owner == i + 1).astype(np.int64) << j
    welfare = np.zeros(codes.size)
    for i in range(n):
        welfare += tables[i][bundles[i]]
    best = welfare.max()
    if not np.isfinite(best):
        raise ValueError("every allocation is excluded")
    cand = np.flatnonzero(welfare >= best - 1e-9 * max(1.0, abs(best)))
    keys = tuple(bundles[i, cand] for i in reversed(range(n)))
    pick = cand[np.lexsort(keys)[0]] if n else 0
    return Allocation([int(bundles[i, pick]) for i in range(n)]), float(welfare[pick])


DP_LIMIT = 15
_DP_CACHE: dict[int, tuple] = {}


def _dp_pairs(m: int):
    """All ``(S, T)`` with ``T`` a subset of ``S``, grouped by ``S`` (cached per ``m``)."""
    if m not in _DP_CACHE:
        # ternary digit per item: 0 not in S, 1 in S only, 2 in S and T
        codes = np.arange(3**m, dtype=np.int64)
        S = np.zeros_like(codes)
        T = np.zeros_like(codes)
        rest = codes
        for j in range(m):
            d = rest % 3
            rest //= 3
            S |= (d > 0).astype(np.int64) << j
            T |= (d == 2).astype(np.int64) << j
        order = np.argsort(S, kind="stable")
        S, T = S[order], T[order]
        starts = np.flatnonzero(np.r_[True, S[1:] != S[:-1]])
        _DP_CACHE.clear()
        _DP_CACHE[m] = (T, S ^ T, starts)
    return _DP_CACHE[m]


def _submasks(S: int) -> np.ndarray:
    out = [0]
    t = S
    while t:
        out.append(t)
        t = (t - 1) & S
    return np.array(sorted(out), dtype=np.int64)


def subset_dp_wdp(values, m: int, exclusions=None) -> tuple[Allocation, float]:
    """Exact WDP on dense value tables by max-plus subset convolution, ``O(n 3^m)``.

    ``values[i] is None`` leaves bidder ``i`` out.  Excluded bundles get value
    ``-inf``.  Among optimal bundles for a bidder the smallest integer wins,
    scanning bidders from last to first.
    """
    if m > DP_LIMIT:
        raise CapacityError(f"subset DP limited to m <= {DP_LIMIT}, got {m}")
    n = len(values)
    present = [i for i in range(n) if values[i] is not None]
    tables = dict(zip(present, _tables([values[i] for i in present], m)))
    for i, excl in enumerate(exclusions or []):
        if excl and i in tables:
            tables[i] = tables[i].copy()
            tables[i][np.asarray(list(excl), dtype=np.int64)] = -np.inf
    T, rest, starts = _dp_pairs(m)
    f = np.zeros(1 << m)  # best welfare of the bidders so far within item set S
    history = []
    for i in present:
        history.append(f)
        f = np.maximum.reduceat(tables[i][T] + f[rest], starts)
    full = (1 << m) - 1
    best = float(f[full])
    if not np.isfinite(best):
        raise ValueError("every allocation is excluded")
    bundles = [0] * n
    S = full
    for i, prev in zip(reversed(present), reversed(history)):
        sub = _submasks(S)
        cand = tables[i][sub] + prev[S ^ sub]
        top = cand.max()
        t = int(sub[np.flatnonzero(cand >= top - 1e-9 * max(1.0, abs(top)))[0]])
        bundles[i] = t
        S ^= t
    return Allocation(bundles), best


def dense_tables_wdp(evaluators, m: int, exclusions=None) -> tuple[Allocation, float]:
    """Exact WDP for evaluable value models (networks, sparse spectra, oracles, tables) at small ``m``."""
    bundles = np.arange(1 << m, dtype=np.int64)
    tables = []
    for ev in evaluators:
        if ev is None:
            tables.append(None)
        elif isinstance(ev, SparseSpectrum):
            tables.append(inverse(ev.to_dense(), ev.kind))
        elif hasattr(ev, "dense"):
            tables.append(np.asarray(ev.dense(), dtype=float))
        elif callable(ev):
            tables.append(np.asarray(ev(bundles), dtype=float))
        else:
            tables.append(np.asarray(ev, dtype=float))
    return subset_dp_wdp(tables, m, exclusions)
