"""Support discovery, reconstruction queries and sparse fitting from reports."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .core import complement
from .fourier import (
    NONZERO_TOL,
    SparseSpectrum,
    TransformKind,
    forward,
    inverse_entries,
    rank_frequencies,
)

log = logging.getLogger(__name__)

DEFAULT_SUPERSET = 2000
DEFAULT_SUPPORT = 100


@dataclass
class SupportSuperset:
    """Candidate frequencies ranked by descending selection score.

    ``model_coeffs`` holds the coefficients of the model the frequencies
    were discovered from (same order), used to rank reconstruction queries.
    """

    kind: TransformKind
    m: int
    frequencies: np.ndarray
    model_coeffs: np.ndarray | None = None

    def __post_init__(self):
        self.kind = TransformKind.parse(self.kind)
        self.frequencies = np.asarray(self.frequencies, dtype=np.int64).reshape(-1)
        if len(np.unique(self.frequencies)) != len(self.frequencies):
            raise ValueError("duplicate frequency in support superset")
        if self.model_coeffs is not None:
            self.model_coeffs = np.asarray(self.model_coeffs, dtype=float).reshape(-1)

    def __len__(self) -> int:
        return len(self.frequencies)


@dataclass
class FitConfig:
    support_size: int = DEFAULT_SUPPORT
    path_points: int = 100
    ridge: float = 1e-10
    path_ratio: float = 1e-6  # smallest lambda as a fraction of lambda_max
    cd_tol: float = 1e-10
    cd_max_sweeps: int = 10_000
    debias: bool = True
    method: str = "lars"  # exact homotopy path; "cd" walks a geometric grid instead

    def __post_init__(self):
        if self.method not in ("lars", "cd"):
            raise ValueError(f"unknown path method {self.method!r}")
        if self.support_size < 1:
            raise ValueError("support_size must be >= 1")
        if self.path_points < 2:
            raise ValueError("path_points must be >= 2")


def _dense_of(model, m: int | None = None) -> np.ndarray:
    if hasattr(model, "dense"):
        return np.asarray(model.dense(), dtype=float)
    if m is None:
        m = model.m
    return np.asarray(model(np.arange(1 << m, dtype=np.int64)), dtype=float)


def discover_support(model, kind, size: int) -> SupportSuperset:
    """Top ``size`` frequencies of the full transform of ``model``.

    ``model`` is anything with ``dense()`` (value table over all ``2**m``
    bundles) or a vectorized callable with an ``m`` attribute.
    """
    kind = TransformKind.parse(kind)
    values = _dense_of(model)
    m = values.size.bit_length() - 1
    phi = forward(values, kind)
    ranked = rank_frequencies(phi, kind)
    ranked = ranked[np.abs(phi[ranked]) > NONZERO_TOL][: max(0, int(size))]
    return SupportSuperset(kind, m, ranked, phi[ranked])


def reconstruction_queries(
    s1: SupportSuperset,
    n_queries: int,
    model_spectrum: SparseSpectrum | Mapping[int, float] | None = None,
    exclude: Iterable[int] = (),
) -> list[int]:
    """Bundles to query so the coefficients on ``s1`` become identifiable.

    FT3 queries the frequencies themselves, FT4 their complements.  WHT has
    no sampling theorem; it queries complements of the ``n_queries``
    frequencies with the largest model coefficients.  Bundles in ``exclude``
    (already reported) are skipped and the next-ranked frequency is used
    instead, so fewer queries come back only when candidates run out.
    """
    m = s1.m
    freqs = s1.frequencies
    if s1.kind is TransformKind.WHT:
        if model_spectrum is not None:
            coeffs = model_spectrum.as_dict() if isinstance(model_spectrum, SparseSpectrum) else model_spectrum
            mag = np.array([abs(coeffs.get(int(y), 0.0)) for y in freqs])
        elif s1.model_coeffs is not None:
            mag = np.abs(s1.model_coeffs)
        else:
            mag = np.zeros(len(freqs))
        # stable: equal magnitudes keep superset order
        freqs = freqs[np.argsort(-mag, kind="stable")]
    excluded = set(int(b) for b in exclude)
    out: list[int] = []
    for y in freqs:
        if len(out) >= n_queries:
            break
        q = int(y) if s1.kind is TransformKind.FT3 else complement(int(y), m)
        if q in excluded or q in out:
            continue
        out.append(q)
    if len(out) < n_queries:
        log.info("reconstruction queries: %d of %d available", len(out), n_queries)
    return out


def design_matrix(bundles, freqs, kind) -> np.ndarray:
    """``A[r, l] = Finv[x_r, y_l]``."""
    x = np.asarray(bundles, dtype=np.int64).reshape(-1, 1)
    y = np.asarray(freqs, dtype=np.int64).reshape(1, -1)
    return inverse_entries(x, y, kind)


def _report_arrays(reports) -> tuple[np.ndarray, np.ndarray]:
    if len(reports) == 0:
        raise ValueError("cannot fit to an empty report set")
    xs = np.fromiter((int(b) for b in reports.keys()), dtype=np.int64, count=len(reports))
    vs = np.fromiter((float(v) for v in reports.values()), dtype=float, count=len(reports))
    return xs, vs


def _cd_lasso(A, b, lam, w, col_sq, tol, max_sweeps):
    """Coordinate descent for ``(1/2n)|b - Aw|^2 + lam |w|_1``, warm started.

    Sweeps only the active set until it converges, then checks the KKT
    conditions on all coordinates and repeats if any are violated.
    """
    n = A.shape[0]
    r = b - A @ w
    for _ in range(1000):
        active = np.flatnonzero(w)
        for _ in range(max_sweeps):
            max_step = 0.0
            for j in active:
                aj = A[:, j]
                old = w[j]
                rho = aj @ r / n + col_sq[j] * old
                new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
                if new != old:
                    r -= aj * (new - old)
                    w[j] = new
                    max_step = max(max_step, abs(new - old))
            if max_step <= tol:
                break
        grad = A.T @ r / n
        viol = np.flatnonzero((w == 0) & (np.abs(grad) > lam * (1 + 1e-9)))
        if viol.size == 0:
            return w
        # admit the worst violators and iterate
        for j in viol[np.argsort(-np.abs(grad[viol]))][: max(1, viol.size // 4 + 1)]:
            rho = grad[j] + col_sq[j] * w[j]
            w[j] = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
            r -= A[:, j] * w[j]
    log.warning("coordinate descent hit the outer iteration cap at lambda=%g", lam)
    return w


def lasso_path(A, b, n_lambdas=100, ratio=1e-6, tol=1e-10, max_sweeps=10_000, max_nonzero=None):
    """Solutions of the L1 problem over a geometric grid of penalties.

    Yields ``(lam, w)`` from the largest penalty (all-zero solution) down.
    Stops early once more than ``max_nonzero`` coefficients are active.
    """
    n, p = A.shape
    col_sq = (A * A).sum(axis=0) / n
    col_sq[col_sq == 0] = np.inf
    lam_max = float(np.max(np.abs(A.T @ b)) / n) if p else 0.0
    w = np.zeros(p)
    if lam_max <= 0:
        yield 0.0, w.copy()
        return
    for lam in np.geomspace(lam_max, lam_max * ratio, n_lambdas):
        w = _cd_lasso(A, b, lam, w, col_sq, tol, max_sweeps)
        yield float(lam), w.copy()
        if max_nonzero is not None and np.count_nonzero(w) > max_nonzero:
            return


def lars_lasso_path(A, b, tol=1e-12, max_steps=None):
    """Exact L1 regularization path by least-angle regression with the lasso drop rule.

    Yields ``(lam, w)`` at every breakpoint, from the all-zero solution at
    ``lam_max`` down to the end of the path (zero correlation, or no column
    left to add).  ``lam`` is on the ``(1/2n)|b - Aw|^2 + lam |w|_1`` scale.
    """
    n, p = A.shape
    w = np.zeros(p)
    r = np.array(b, dtype=float)
    c = A.T @ r
    scale = max(1.0, float(np.abs(c).max(initial=0.0)))
    active: list[int] = []
    banned = np.zeros(p, dtype=bool)  # columns found linearly dependent on the active set
    yield float(np.abs(c).max(initial=0.0)) / n, w.copy()
    dropped = False
    for _ in range(max_steps or 8 * max(n, 1) + p):
        if not dropped:
            free = np.ones(p, dtype=bool)
            free[active] = False
            free &= ~banned
            if not free.any():
                break
            cmax = float(np.abs(c[free]).max())
            if cmax <= tol * scale:
                break
            # every column tied at the maximal correlation enters together
            ties = np.flatnonzero(free & (np.abs(c) >= cmax - 1e-10 * scale))
            added = 0
            for j in ties[np.argsort(-np.abs(c[ties]), kind="stable")]:
                active.append(int(j))
                G = A[:, active].T @ A[:, active]
                if np.linalg.matrix_rank(G, tol=1e-10 * max(1.0, np.abs(G).max())) < len(active):
                    # the newcomer adds no direction: exclude it for good
                    banned[active.pop()] = True
                else:
                    added += 1
            if not added:
                continue
        dropped = False
        Aa = A[:, active]
        sgn = np.sign(c[active])
        sgn[sgn == 0] = 1.0
        G = Aa.T @ Aa
        z = np.linalg.solve(G, sgn)
        AA = 1.0 / np.sqrt(sgn @ z)
        d = AA * z
        u = Aa @ d
        a = A.T @ u
        C = float(np.abs(c[active]).max())
        gamma = C / AA
        cand = np.ones(p, dtype=bool)
        cand[active] = False
        cand &= ~banned
        for num, den in ((C - c, AA - a), (C + c, AA + a)):
            with np.errstate(divide="ignore", invalid="ignore"):
                g = num / den
            g = g[cand & (den > 1e-15)]
            g = g[g > 1e-15]
            if g.size:
                gamma = min(gamma, float(g.min()))
        # lasso modification: a coefficient hitting zero leaves the active set
        wa = w[active]
        with np.errstate(divide="ignore", invalid="ignore"):
            gz = -wa / d
        hit = np.flatnonzero((gz > 1e-15) & (gz < gamma))
        drop = None
        if hit.size:
            k = int(hit[np.argmin(gz[hit])])
            gamma = float(gz[k])
            drop = k
        w[active] += gamma * d
        r -= gamma * u
        c = A.T @ r
        if drop is not None:
            w[active[drop]] = 0.0
            active.pop(drop)
            dropped = True
        lam = max(C - gamma * AA, 0.0) / n
        yield lam, w.copy()
        if lam * n <= tol * scale:
            break


def fit_wht_lasso(reports, s1: SupportSuperset, cfg: FitConfig | None = None) -> SparseSpectrum:
    """WHT coefficients on ``s1`` fitted to reports by L1-regularized regression.

    Walks the regularization path from large to small penalty and keeps the
    solution with the smallest penalty among those with at most
    ``cfg.support_size`` nonzeros.  The path is exact (LARS breakpoints) by
    default, or sampled on a geometric grid with ``cfg.method = "cd"``.  With ``cfg.debias`` (the default) each
    path point's active set is refitted by plain least squares and the
    nonzero count is taken after the refit, so coefficients the L1 penalty
    only shrinks towards zero asymptotically do not count.
    """
    cfg = cfg or FitConfig()
    if s1.kind is not TransformKind.WHT:
        raise ValueError("fit_wht_lasso needs a WHT support superset")
    xs, vs = _report_arrays(reports)
    empty = SparseSpectrum(TransformKind.WHT, s1.m, [], [])
    scale = float(np.abs(vs).max())
    if scale == 0.0 or len(s1) == 0:
        return empty
    A = design_matrix(xs, s1.frequencies, TransformKind.WHT)
    b = vs / scale
    best_idx, best_w = np.array([], dtype=np.int64), np.array([])
    if cfg.method == "lars":
        path = lars_lasso_path(A, b)
    else:
        path = lasso_path(A, b, cfg.path_points, cfg.path_ratio, cfg.cd_tol, cfg.cd_max_sweeps)
    for _, w in path:
        idx = np.flatnonzero(np.abs(w) > 1e-9)
        coef = w[idx]
        if cfg.debias and idx.size:
            coef = np.linalg.lstsq(A[:, idx], b, rcond=None)[0]
            nz = np.abs(coef) > 1e-9
            idx, coef = idx[nz], coef[nz]
        if idx.size <= cfg.support_size:
            best_idx, best_w = idx, coef
            if np.sum((b - A[:, idx] @ coef) ** 2) <= 1e-24 * max(1.0, b @ b):
                break
    return SparseSpectrum(TransformKind.WHT, s1.m, s1.frequencies[best_idx], best_w * scale).pruned()


def fit_least_squares(reports, s1: SupportSuperset, ridge: float = 1e-10) -> SparseSpectrum:
    """Least-squares coefficients on ``s1`` (FT3/FT4), ridge-stabilized normal equations."""
    if s1.kind is TransformKind.WHT:
        raise ValueError("use fit_wht_lasso for the WHT")
    xs, vs = _report_arrays(reports)
    if len(s1) == 0:
        return SparseSpectrum(s1.kind, s1.m, [], [])
    A = design_matrix(xs, s1.frequencies, s1.kind)
    G = A.T @ A
    G[np.diag_indices_from(G)] += ridge * max(np.trace(G), 1.0)
    w = np.linalg.solve(G, A.T @ vs)
    return SparseSpectrum(s1.kind, s1.m, s1.frequencies, w).pruned()


def fit_sparse(reports, s1: SupportSuperset, cfg: FitConfig | None = None) -> SparseSpectrum:
    """Kind-appropriate fit: L1 path for WHT, least squares otherwise."""
    cfg = cfg or FitConfig()
    if s1.kind is TransformKind.WHT:
        return fit_wht_lasso(reports, s1, cfg)
    return fit_least_squares(reports, s1, cfg.ridge)


def energy_ratio(selected, best, truth) -> float:
    """Spectral energy of ``selected`` frequencies relative to the ``best`` ones."""
    phi = np.asarray(truth, dtype=float)
    sel = np.fromiter((int(y) for y in selected), dtype=np.int64)
    top = np.fromiter((int(y) for y in best), dtype=np.int64)
    if len(set(sel.tolist())) != len(set(top.tolist())):
        raise ValueError("selected and best sets differ in size")
    den = float(np.sum(phi[top] ** 2))
    if not den > 0:
        raise ValueError("best frequencies carry no energy")
    return float(np.sum(phi[sel] ** 2)) / den


def design_rank(bundles, freqs, kind) -> int:
    """Rank of the reconstruction system, reported as a diagnostic."""
    if len(bundles) == 0 or len(freqs) == 0:
        return 0
    return int(np.linalg.matrix_rank(design_matrix(bundles, freqs, kind)))
