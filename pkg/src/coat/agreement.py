"""Bland-Altman estimation and the two-sample Bland-Altman test.

:func:`ba_estimates` summarizes one set of differences by bias, standard
deviation and limits of agreement.  :func:`ba_test` compares two predefined
groups with three quadratic tests: jointly on (bias, variance), on the bias
alone, and on the variance alone.  The three p-values are reported
unadjusted; :func:`sequential_ba_test` applies the closed sequential
procedure (joint test first, components only on rejection).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import t as student_t

from .data import CATEGORICAL, Column
from .kernel import (
    NORMAL_Q975,
    TestResult,
    c_quad,
    g_transform,
    h_transform,
    linear_statistic,
)


@dataclass(frozen=True)
class BaEstimates:
    """Bias, spread and limits of agreement for one group of differences."""

    n: int
    bias: float
    sd: float
    loa_lower: float
    loa_upper: float
    quantile: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "bias": self.bias,
            "sd": self.sd,
            "loa_lower": self.loa_lower,
            "loa_upper": self.loa_upper,
            "quantile": self.quantile,
        }


@dataclass(frozen=True)
class BaTestResult:
    """Three-test comparison of agreement between two groups.

    ``joint`` targets equality of bias and variance simultaneously (df 2
    when both coordinates are informative); ``mean_only`` and ``var_only``
    target the individual quantities (df 1 each).
    """

    joint: TestResult
    mean_only: TestResult
    var_only: TestResult
    group_estimates: tuple[tuple[str, BaEstimates], ...]

    def to_dict(self) -> dict:
        def test_dict(r: TestResult) -> dict:
            return {
                "statistic": r.statistic,
                "df": r.df,
                "p_value": r.p_raw,
            }

        return {
            "joint": test_dict(self.joint),
            "mean_only": test_dict(self.mean_only),
            "var_only": test_dict(self.var_only),
            "groups": {label: est.to_dict() for label, est in self.group_estimates},
        }


def loa_quantile(kind: str = "normal", n: int | None = None) -> float:
    """Limits-of-agreement multiplier: normal 97.5% point or t with n-1 df."""
    if kind == "normal":
        return NORMAL_Q975
    if kind == "t":
        if n is None or n < 2:
            raise ValueError("t quantile needs a sample size of at least 2")
        return float(student_t.ppf(0.975, n - 1))
    raise ValueError(f"unknown quantile kind {kind!r}")


def ba_estimates(y, quantile: float = NORMAL_Q975) -> BaEstimates:
    """Bland-Altman summary of a set of differences.

    ``bias`` is the mean, ``sd`` the standard deviation with divisor n-1,
    and the limits of agreement are ``bias +- quantile * sd``.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] < 2:
        raise ValueError("ba_estimates: needs at least 2 observations")
    bias = float(y.mean())
    sd = float(y.std(ddof=1))
    return BaEstimates(
        n=int(y.shape[0]),
        bias=bias,
        sd=sd,
        loa_lower=bias - quantile * sd,
        loa_upper=bias + quantile * sd,
        quantile=quantile,
    )


def ba_test(y, group, quantile: float = NORMAL_Q975) -> BaTestResult:
    """Two-sample Bland-Altman test of agreement between predefined groups.

    The group labels act as the covariate of a stump: the joint test uses
    the agreement transformation (difference and squared deviation from the
    pooled mean), the component tests use each coordinate alone.  P-values
    are intentionally left unadjusted.
    """
    y = np.asarray(y, dtype=float)
    labels = [str(g) for g in group]
    if len(labels) != y.shape[0]:
        raise ValueError("ba_test: y and group must have equal length")
    levels: list[str] = []
    for lab in labels:
        if lab not in levels:
            levels.append(lab)
    if len(levels) != 2:
        raise ValueError(f"ba_test: exactly two groups required, got {levels}")
    codes = np.array([levels.index(lab) + 1 for lab in labels])
    counts = [int((codes == 1).sum()), int((codes == 2).sum())]
    if min(counts) < 2:
        raise ValueError("ba_test: each group needs at least 2 members")

    col = Column(name="group", kind=CATEGORICAL, values=codes, levels=tuple(levels))
    g = g_transform(col)
    w = np.ones(y.shape[0])
    h = h_transform(y, w)

    joint = c_quad(linear_statistic(g, h, w))
    mean_only = c_quad(linear_statistic(g, h[:, :1], w))
    var_only = c_quad(linear_statistic(g, h[:, 1:], w))

    estimates = tuple(
        (lev, ba_estimates(y[codes == i + 1], quantile=quantile))
        for i, lev in enumerate(levels)
    )
    return BaTestResult(
        joint=joint, mean_only=mean_only, var_only=var_only, group_estimates=estimates
    )


REJECTED = "rejected"
RETAINED = "retained"
NOT_ASSESSED = "not assessed"


def sequential_ba_test(result: BaTestResult, alpha: float = 0.05) -> list[tuple[str, float, str]]:
    """Closed sequential decisions: joint first, components only if rejected.

    Returns ``(test name, p-value, decision)`` triples in test order.
    Rejection requires ``p < alpha`` strictly.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    decisions = []
    joint_rejected = result.joint.p_raw < alpha
    decisions.append(("joint", result.joint.p_raw, REJECTED if joint_rejected else RETAINED))
    for name, test in (("mean", result.mean_only), ("variance", result.var_only)):
        if not joint_rejected:
            decisions.append((name, test.p_raw, NOT_ASSESSED))
        else:
            decisions.append((name, test.p_raw, REJECTED if test.p_raw < alpha else RETAINED))
    return decisions
