"""Permutation-test linear statistics and the distribution plumbing they need.

The central object is :class:`LinStat`: a linear statistic ``t`` accumulated
from covariate and outcome transformations together with its conditional
expectation ``mu`` and covariance ``sigma`` under random permutation of the
outcome rows.  Standardizing ``t`` with a quadratic form (:func:`c_quad`) or
a maximum of coordinates (:func:`c_max`) yields asymptotic p-values.

Conventions
-----------
``g`` is an (n, p) covariate transformation (identity column for a
continuous covariate, one-hot indicators for a categorical one) and ``h``
an (n, q) outcome transformation.  ``t = vec(sum_i w_i g_i h_i')`` is laid
out h-column-major, i.e. ``t[(j-1)*p + i]`` pairs g-coordinate ``i`` with
h-coordinate ``j``, so that ``sigma = kron(V, G)`` with ``V`` the (q, q)
covariance of the h rows and ``G`` the (p, p) covariate part.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import erfc, gammaincc, gammaln

from .data import Column

QUAD = "quad"
MAX = "max"
SUPLM = "suplm"

#: Standard-normal 97.5% point; the default limits-of-agreement multiplier.
NORMAL_Q975 = 1.959963984540054


@dataclass(frozen=True)
class LinStat:
    """A linear statistic with its permutation moments.

    ``t`` and ``mu`` have length ``p * q``; ``sigma`` is the symmetric
    positive semi-definite ``(p*q, p*q)`` covariance.
    """

    t: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    p: int
    q: int


@dataclass(frozen=True)
class TestResult:
    """Outcome of one standardized test.

    ``df`` is the rank of the covariance (quadratic statistics only; 0
    otherwise).  ``p_adjusted`` equals ``p_raw`` until a multiplicity
    correction is applied.
    """

    statistic: float
    kind: str
    df: int
    p_raw: float
    p_adjusted: float

    def adjusted(self, multiplier: int) -> "TestResult":
        return replace(self, p_adjusted=bonferroni(self.p_raw, multiplier))


def h_transform(y, weights) -> np.ndarray:
    """Agreement transformation: row i is ``(y_i, (y_i - ybar_w)^2)``.

    ``ybar_w`` is the weighted mean over included rows (weight 1).  Rows
    with weight 0 are populated with the same centring but excluded from
    any downstream moment computation through the weights.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights)
    nw = w.sum()
    if nw == 0:
        raise ValueError("h_transform: all weights are zero")
    ybar = float((w * y).sum() / nw)
    return np.column_stack([y, (y - ybar) ** 2])


def g_transform(col: Column) -> np.ndarray:
    """Covariate transformation: identity column or one-hot indicators."""
    if col.is_categorical:
        codes = col.values.astype(int)
        out = np.zeros((codes.shape[0], col.n_levels))
        out[np.arange(codes.shape[0]), codes - 1] = 1.0
        return out
    return np.asarray(col.values, dtype=float)[:, None]


def linear_statistic(g, h, weights) -> LinStat:
    """Linear statistic with conditional expectation and covariance.

    With ``n_w`` included rows, ``H = sum_i w_i h_i`` and weighted h-row
    covariance ``V`` (divisor ``n_w``):

    - ``t  = vec(sum_i w_i g_i h_i')``
    - ``mu = vec((sum_i w_i g_i) H' / n_w)``
    - ``sigma = n_w/(n_w-1) * kron(V, sum w g g')
               - 1/(n_w-1) * kron(V, (sum w g)(sum w g)')``
    """
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    w = np.asarray(weights, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if h.ndim == 1:
        h = h[:, None]
    if not (g.shape[0] == h.shape[0] == w.shape[0]):
        raise ValueError("linear_statistic: row counts of g, h, weights differ")
    nw = w.sum()
    if nw < 2:
        raise ValueError("linear_statistic: needs at least 2 included rows")

    wg = g * w[:, None]
    sg = wg.sum(axis=0)
    t = (wg.T @ h).flatten(order="F")
    hbar = (h * w[:, None]).sum(axis=0) / nw
    mu = np.outer(sg, hbar).flatten(order="F")

    hc = h - hbar
    V = hc.T @ (hc * w[:, None]) / nw
    GG = g.T @ wg
    sigma = nw / (nw - 1.0) * np.kron(V, GG) - np.kron(V, np.outer(sg, sg)) / (nw - 1.0)
    sigma = (sigma + sigma.T) / 2.0
    return LinStat(t=t, mu=mu, sigma=sigma, p=g.shape[1], q=h.shape[1])


def pseudo_inverse(sym, tol: float = 1e-10) -> tuple[np.ndarray, int]:
    """Moore-Penrose inverse of a symmetric matrix via eigendecomposition.

    Eigenvalues below ``tol`` times the largest eigenvalue are treated as
    zero; the rank is the number of retained eigenvalues.
    """
    a = np.asarray(sym, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("pseudo_inverse: matrix must be square")
    scale = np.abs(a).max() if a.size else 0.0
    if not np.allclose(a, a.T, atol=max(scale, 1.0) * 1e-8):
        raise ValueError("pseudo_inverse: matrix is not symmetric")
    evals, evecs = np.linalg.eigh((a + a.T) / 2.0)
    top = np.abs(evals).max() if evals.size else 0.0
    if top <= 0.0:
        return np.zeros_like(a), 0
    keep = np.abs(evals) > tol * top
    rank = int(keep.sum())
    inv = (evecs[:, keep] / evals[keep]) @ evecs[:, keep].T
    return inv, rank


def c_quad(ls: LinStat, tol: float = 1e-10) -> TestResult:
    """Quadratic standardization ``(t-mu) sigma^+ (t-mu)'``.

    Asymptotically chi-squared with degrees of freedom equal to the rank of
    ``sigma``; a zero-rank covariance yields statistic 0 and p-value 1.
    """
    d = ls.t - ls.mu
    inv, rank = pseudo_inverse(ls.sigma, tol=tol)
    if rank == 0:
        return TestResult(0.0, QUAD, 0, 1.0, 1.0)
    stat = float(max(d @ inv @ d, 0.0))
    p = chi2_sf(stat, rank)
    return TestResult(stat, QUAD, rank, p, p)


def c_max(ls: LinStat, tol: float = 1e-10) -> TestResult:
    """Maximum absolute standardized coordinate of ``t - mu``.

    Coordinates with (numerically) zero variance are skipped.  The p-value
    uses the independence approximation ``1 - (2 Phi(c) - 1)^m`` with ``m``
    the number of non-degenerate coordinates.
    """
    d = ls.t - ls.mu
    diag = np.diag(ls.sigma)
    top = diag.max() if diag.size else 0.0
    live = diag > tol * max(top, 0.0)
    m = int(live.sum())
    if m == 0:
        raise ValueError("c_max: all coordinates have zero variance")
    stat = float(np.max(np.abs(d[live]) / np.sqrt(diag[live])))
    p = float(1.0 - (2.0 * normal_cdf(stat) - 1.0) ** m)
    p = min(max(p, 0.0), 1.0)
    return TestResult(stat, MAX, 0, p, p)


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-squared distribution (regularized incomplete gamma)."""
    if df < 1 or df != int(df):
        raise ValueError(f"chi2_sf: df must be a positive integer, got {df}")
    if x < 0:
        raise ValueError(f"chi2_sf: x must be >= 0, got {x}")
    return float(gammaincc(df / 2.0, x / 2.0))


def normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return float(0.5 * erfc(-x / math.sqrt(2.0)))


def bonferroni(p: float, count: int) -> float:
    """Bonferroni adjustment: ``min(1, count * p)``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"bonferroni: p must be in [0, 1], got {p}")
    if count < 1:
        raise ValueError(f"bonferroni: count must be >= 1, got {count}")
    return min(1.0, count * p)


def _suplm_tail_raw(x: float, k: int, span: float) -> float:
    # Boundary-crossing expansion for sup of a squared k-dim Bessel bridge
    # over an interval of log-odds length `span`.
    logdens = (k / 2.0) * math.log(x) - x / 2.0 - (k / 2.0) * math.log(2.0) - gammaln(k / 2.0)
    return math.exp(logdens) * ((1.0 - k / x) * span + 4.0 / x)


@functools.lru_cache(maxsize=32)
def _suplm_peak(k: int, span: float) -> float:
    # Argmax of the raw tail expression; below it the expansion is invalid
    # and the p-value is pinned to 1.
    grid = np.linspace(max(k - 3.0, 0.05), 3.0 * k + 12.0, 600)
    vals = [_suplm_tail_raw(float(x), k, span) for x in grid]
    return float(grid[int(np.argmax(vals))])


def suplm_pvalue(stat: float, k: int, trim: float) -> float:
    """Tail approximation for the supLM parameter-instability statistic.

    Approximates ``P(sup ||B(t)||^2 / (t(1-t)) > stat)`` for a k-dimensional
    Brownian bridge over ``t in [trim, 1-trim]`` with the classical
    boundary-crossing expansion.  Accurate in the testing-relevant tail
    (p < 0.2); pinned to 1 below the expansion's turning point.
    """
    if not 0.0 < trim < 0.5:
        raise ValueError(f"suplm_pvalue: trim must be in (0, 0.5), got {trim}")
    if k < 1:
        raise ValueError("suplm_pvalue: needs at least one parameter")
    span = math.log((1.0 - trim) ** 2 / trim**2)
    if stat <= _suplm_peak(k, span):
        return 1.0
    return min(1.0, max(0.0, _suplm_tail_raw(stat, k, span)))
