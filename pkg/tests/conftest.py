import itertools

import numpy as np
import pytest

from fourier_auctions.core import bundle_from_str

# worked example on 3 items, listed in the row order 000,100,010,001,110,101,011,111
PAPER_ORDER = ["000", "100", "010", "001", "110", "101", "011", "111"]
TABLE1_V = [0, 1, 1, 1, 3, 3, 3, 5]
TABLE1 = {
    "ft3": [0, 1, 1, 1, 1, 1, 1, -1],
    "ft4": [5, -2, -2, -2, 0, 0, 0, 1],
    "wht": [17 / 8, -7 / 8, -7 / 8, -7 / 8, 1 / 8, 1 / 8, 1 / 8, 1 / 8],
}
TABLE2 = {  # percent per cardinality 0..3
    "ft3": [0.00, 42.86, 42.86, 14.28],
    "ft4": [65.79, 31.58, 0.00, 2.63],
    "wht": [65.69, 33.41, 0.68, 0.22],
}
PAPER_IDX = [bundle_from_str(s) for s in PAPER_ORDER]


def from_paper(vals) -> np.ndarray:
    """Paper row order -> bitmask index order."""
    out = np.zeros(8)
    out[PAPER_IDX] = vals
    return out


def to_paper(arr) -> np.ndarray:
    return np.asarray(arr)[PAPER_IDX]


def indicator(b, m):
    return np.array([(b >> j) & 1 for j in range(m)])


def oracle_forward(m, kind):
    """Forward matrix entry by entry from the componentwise min/max definitions."""
    n = 1 << m
    F = np.zeros((n, n))
    for y in range(n):
        yv = indicator(y, m)
        for x in range(n):
            xv = indicator(x, m)
            mn = np.minimum(xv, yv)
            if kind == "ft3":
                F[y, x] = (-1.0) ** (yv.sum() - xv.sum()) if np.array_equal(mn, xv) else 0.0
            elif kind == "ft4":
                F[y, x] = (-1.0) ** mn.sum() if np.all(np.maximum(xv, yv) == 1) else 0.0
            else:
                F[y, x] = (-1.0) ** mn.sum() / n
    return F


def oracle_inverse(m, kind):
    n = 1 << m
    G = np.zeros((n, n))
    for x in range(n):
        xv = indicator(x, m)
        for y in range(n):
            yv = indicator(y, m)
            mn = np.minimum(xv, yv)
            if kind == "ft3":
                G[x, y] = float(np.array_equal(mn, yv))
            elif kind == "ft4":
                G[x, y] = float(mn.sum() == 0)
            else:
                G[x, y] = (-1.0) ** mn.sum()
    return G


def brute_force_wdp(values, m):
    """Best welfare over every item-to-bidder-or-nobody assignment, by plain loops."""
    n = len(values)
    best, arg = -np.inf, None
    for owner in itertools.product(range(n + 1), repeat=m):
        bundles = [0] * n
        for j, o in enumerate(owner):
            if o < n:
                bundles[o] |= 1 << j
        w = sum(values[i](bundles[i]) for i in range(n))
        if w > best + 1e-12:
            best, arg = w, tuple(bundles)
    return arg, best


@pytest.fixture
def table1():
    return from_paper(TABLE1_V)


def brute_vcg(reports, m, a_star=None):
    """Payments by enumerating every item assignment, straight from the externality definition.

    ``a_star`` fixes which optimal allocation the payments refer to when
    several tie; it must itself be optimal.
    """
    n = len(reports)
    allocs = []
    for owner in itertools.product(range(n + 1), repeat=m):
        allocs.append([sum(1 << j for j in range(m) if owner[j] == i) for i in range(n)])

    def best(present):
        vals = [sum(reports[i].get(a[i], 0.0) for i in present) for a in allocs if all(a[i] == 0 or i in present for i in range(n))]
        return max(vals)

    everyone = set(range(n))
    full = best(everyone)
    if a_star is None:
        a_star = next(a for a in allocs if sum(reports[i].get(a[i], 0.0) for i in everyone) == full)
    assert abs(sum(reports[i].get(a_star[i], 0.0) for i in everyone) - full) <= 1e-9
    pay = []
    for i in range(n):
        others_at_star = sum(reports[j].get(a_star[j], 0.0) for j in everyone - {i})
        pay.append(best(everyone - {i}) - others_at_star)
    return pay, full
