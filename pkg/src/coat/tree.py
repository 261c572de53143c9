"""Recursive partitioning of method agreement with pluggable engines.

Four engines share one recursion: a node is tested for association between
the outcome transformation and each covariate; the covariate with the
smallest significant adjusted p-value is selected; the split point is the
candidate maximizing the engine's objective; recursion stops when no test
is significant or nodes get too small.

Engines
-------
``ctree_trafo``
    Permutation test on the agreement transformation (difference, squared
    deviation from the node mean), so both bias and spread shifts register.
``disttree``
    Permutation test on the per-observation score contributions of a fitted
    normal distribution.  For continuous covariates its quadratic statistic
    equals the ``ctree_trafo`` one.
``mob``
    Parameter-instability (score fluctuation) tests: supLM along ordered
    continuous covariates, a chi-squared aggregation over categorical
    levels; split points maximize the children's summed log-likelihood.
``ctree``
    Baseline permutation test on the raw differences only (mean shifts).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .agreement import BaEstimates, ba_estimates
from .data import Column, Dataset
from .kernel import (
    MAX,
    QUAD,
    SUPLM,
    LinStat,
    TestResult,
    c_max,
    c_quad,
    chi2_sf,
    g_transform,
    h_transform,
    linear_statistic,
    pseudo_inverse,
    suplm_pvalue,
)

CTREE_TRAFO = "ctree_trafo"
DISTTREE = "disttree"
MOB = "mob"
CTREE = "ctree"

ENGINES = (CTREE_TRAFO, DISTTREE, MOB, CTREE)

MODEL_SCHEMA = "coat-model/1"


class DegenerateVarianceError(ValueError):
    """All outcome values in a node coincide; no scale parameter is estimable."""


@dataclass(frozen=True)
class FitConfig:
    """Tuning knobs of a tree fit.

    ``minsplit`` is the smallest node that is still tested for splitting,
    ``minbucket`` the smallest admissible child.  ``statistic`` selects the
    quadratic or maximum standardization for the permutation engines.
    ``mob_trim`` trims the supLM scan to ``[trim, 1 - trim]``.
    """

    engine: str = CTREE_TRAFO
    alpha: float = 0.05
    minsplit: int = 20
    minbucket: int = 7
    maxdepth: int | None = None
    bonferroni: bool = True
    statistic: str = QUAD
    mob_trim: float = 0.1
    max_categorical_levels: int = 12

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}; expected one of {ENGINES}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.minbucket < 2:
            raise ValueError(f"minbucket must be >= 2, got {self.minbucket}")
        if self.minsplit < 2:
            raise ValueError(f"minsplit must be >= 2, got {self.minsplit}")
        if self.maxdepth is not None and self.maxdepth < 0:
            raise ValueError(f"maxdepth must be >= 0, got {self.maxdepth}")
        if self.statistic not in (QUAD, MAX):
            raise ValueError(f"statistic must be {QUAD!r} or {MAX!r}")
        if not 0.0 < self.mob_trim < 0.5:
            raise ValueError(f"mob_trim must be in (0, 0.5), got {self.mob_trim}")
        if self.max_categorical_levels < 2:
            raise ValueError("max_categorical_levels must be >= 2")


@dataclass(frozen=True)
class NormalFit:
    """Maximum-likelihood normal fit with per-observation score contributions.

    ``scores`` has one row per input observation, columns are the partial
    derivatives of the log-likelihood in (location, scale) evaluated at the
    estimates.  Over the fitted observations each column sums to zero.
    """

    mu_hat: float
    sigma_hat: float
    loglik: float
    scores: np.ndarray


def normal_ml_fit(y, weights=None) -> NormalFit:
    """Fit a normal distribution by maximum likelihood (divisor n variance).

    Scores are evaluated for every row of ``y``, also the zero-weight ones,
    so the caller's weights keep selecting the relevant rows downstream.
    Raises :class:`DegenerateVarianceError` when the included values are
    constant.
    """
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    nw = w.sum()
    if nw < 2:
        raise ValueError("normal_ml_fit: needs at least 2 included observations")
    mu = float((w * y).sum() / nw)
    sigma2 = float((w * (y - mu) ** 2).sum() / nw)
    if sigma2 <= 0.0:
        raise DegenerateVarianceError("constant outcome: sigma_hat = 0")
    sigma = math.sqrt(sigma2)
    loglik = -0.5 * nw * (math.log(2.0 * math.pi * sigma2) + 1.0)
    s_mu = (y - mu) / sigma2
    s_sigma = -1.0 / sigma + (y - mu) ** 2 / sigma**3
    return NormalFit(mu_hat=mu, sigma_hat=sigma, loglik=loglik,
                     scores=np.column_stack([s_mu, s_sigma]))


def _engine_h(engine: str, y, weights) -> np.ndarray:
    if engine == CTREE_TRAFO:
        return h_transform(y, weights)
    if engine == CTREE:
        return np.asarray(y, dtype=float)[:, None]
    if engine == DISTTREE:
        return normal_ml_fit(y, weights).scores
    raise ValueError(f"engine {engine!r} has no linear statistic")


def engine_statistic(engine: str, y, col: Column, weights) -> LinStat:
    """Linear statistic of one covariate under the given engine.

    Not defined for ``mob``, which tests via :func:`mob_fluctuation_test`.
    """
    if engine == MOB:
        raise ValueError("mob uses the fluctuation test, not a linear statistic")
    h = _engine_h(engine, y, weights)
    return linear_statistic(g_transform(col), h, weights)


def mob_fluctuation_test(scores, col: Column, trim: float = 0.1) -> TestResult:
    """Score-fluctuation test of parameter instability along one covariate.

    Continuous covariates: order the score rows by the covariate, form the
    scaled cumulative process ``W(t) = J^(-1/2) n^(-1/2) sum_{i<=nt} s_i``
    with ``J = (1/n) sum s_i s_i'``, and take the supremum of
    ``||W(t)||^2 / (t (1-t))`` over ``t in [trim, 1-trim]``.  Categorical
    covariates: chi-squared aggregation of the per-level score sums with
    ``k (K - 1)`` degrees of freedom.  A singular ``J`` is handled by its
    pseudo-inverse (rank-reduced inner product).
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    n = s.shape[0]
    if col.values.shape[0] != n:
        raise ValueError("mob_fluctuation_test: scores and covariate length differ")
    J = s.T @ s / n
    Jinv, rank = pseudo_inverse(J)
    if rank == 0:
        return TestResult(0.0, SUPLM if not col.is_categorical else QUAD, 0, 1.0, 1.0)

    if col.is_categorical:
        codes = col.values.astype(int)
        observed = np.unique(codes)
        stat = 0.0
        for lev in observed:
            sl = s[codes == lev].sum(axis=0)
            stat += float(sl @ Jinv @ sl) / int((codes == lev).sum())
        df = rank * (len(observed) - 1)
        if df == 0:
            return TestResult(0.0, QUAD, 0, 1.0, 1.0)
        p = chi2_sf(max(stat, 0.0), df)
        return TestResult(max(stat, 0.0), QUAD, df, p, p)

    order = np.argsort(np.asarray(col.values, dtype=float), kind="stable")
    cs = np.cumsum(s[order], axis=0)
    i0 = max(int(math.ceil(n * trim)), 1)
    i1 = min(int(math.floor(n * (1.0 - trim))), n - 1)
    if i0 > i1:
        return TestResult(0.0, SUPLM, 0, 1.0, 1.0)
    idx = np.arange(i0, i1 + 1)
    tt = idx / n
    quad = np.einsum("ij,jk,ik->i", cs[idx - 1], Jinv, cs[idx - 1]) / n
    stat = float(np.max(quad / (tt * (1.0 - tt))))
    p = suplm_pvalue(stat, rank, trim)
    return TestResult(stat, SUPLM, 0, p, p)


@dataclass(frozen=True)
class SplitSpec:
    """A binary split rule: ``x <= threshold`` goes left, or levels in
    ``left_levels`` (1-based codes) go left."""

    variable: int
    name: str
    threshold: float | None = None
    left_levels: tuple[int, ...] | None = None

    def __post_init__(self):
        if (self.threshold is None) == (self.left_levels is None):
            raise ValueError("split needs exactly one of threshold / left_levels")

    def goes_left(self, values: np.ndarray) -> np.ndarray:
        if self.threshold is not None:
            return np.asarray(values, dtype=float) <= self.threshold
        return np.isin(np.asarray(values, dtype=int), self.left_levels)


@dataclass
class TreeNode:
    """One node of a fitted tree; a leaf has no split and no children."""

    id: int
    n: int
    depth: int
    ba: BaEstimates | None = None
    tests: dict[str, TestResult] = field(default_factory=dict)
    selected: str | None = None
    node_p: float | None = None
    split: SplitSpec | None = None
    children: tuple["TreeNode", "TreeNode"] | None = None
    mask: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None


@dataclass(frozen=True)
class ColumnInfo:
    """Covariate schema entry retained by a fitted model."""

    name: str
    kind: str
    levels: tuple[str, ...] | None = None


@dataclass
class CoatModel:
    """A fitted conditional method agreement tree."""

    config: FitConfig
    root: TreeNode
    n: int
    schema: tuple[ColumnInfo, ...]

    def nodes(self) -> list[TreeNode]:
        out: list[TreeNode] = []

        def walk(node: TreeNode):
            out.append(node)
            if node.children:
                for child in node.children:
                    walk(child)

        walk(self.root)
        return out

    def leaves(self) -> list[TreeNode]:
        return [node for node in self.nodes() if node.is_leaf]

    def leaf_assignments(self) -> np.ndarray:
        """Leaf node id per training observation (requires fitted masks)."""
        if self.root.mask is None:
            raise ValueError("model was deserialized; training masks unavailable")
        out = np.zeros(self.root.mask.shape[0], dtype=int)
        for leaf in self.leaves():
            out[leaf.mask] = leaf.id
        return out


# ---------------------------------------------------------------------------
# split-point search


def _pair_stats(D: np.ndarray, kk: np.ndarray, m: int, V: np.ndarray, statistic: str) -> np.ndarray:
    # Two-sample statistic for each candidate left-subset: the covariance of
    # the indicator statistic is V * k(m-k)/(m-1), so candidates share one
    # pseudo-inverse of V.
    kappa = kk * (m - kk) / (m - 1.0)
    if statistic == QUAD:
        Vinv, rank = pseudo_inverse(np.atleast_2d(V))
        if rank == 0:
            return np.zeros(len(kk))
        return np.einsum("ij,jk,ik->i", D, Vinv, D) / kappa
    diag = np.diag(np.atleast_2d(V))
    live = diag > 1e-10 * max(diag.max(), 0.0)
    if not live.any():
        return np.zeros(len(kk))
    z = np.abs(D[:, live]) / np.sqrt(np.outer(kappa, diag[live]))
    return z.max(axis=1)


def _subset_candidates(observed: np.ndarray):
    # All unordered binary partitions of the observed levels: subsets that
    # contain the first level, excluding the full set.
    k = len(observed)
    for mask in range(2 ** (k - 1) - 1):
        chosen = [0] + [j + 1 for j in range(k - 1) if mask >> j & 1]
        yield [int(observed[i]) for i in chosen]


def _search_pairwise(h: np.ndarray, col_values: np.ndarray, col: Column,
                     config: FitConfig) -> tuple[float | None, tuple[int, ...] | None]:
    # Maximize the two-sample statistic of the engine's transformation over
    # all admissible split candidates.  Ties resolve to the first (lowest
    # threshold / earliest subset) candidate.
    m = h.shape[0]
    hc = h - h.sum(axis=0) / m
    V = hc.T @ hc / m
    # Centred rows sum to zero, so the partial sums of hc are exactly the
    # centred statistic t - mu of the left subset (no cancellation issues).

    if not col.is_categorical:
        x = np.asarray(col_values, dtype=float)
        order = np.argsort(x, kind="stable")
        xo = x[order]
        ks = np.arange(1, m)
        cum = np.cumsum(hc[order], axis=0)[:-1]
        valid = (xo[:-1] < xo[1:]) & (ks >= config.minbucket) & (m - ks >= config.minbucket)
        if not valid.any():
            return None, None
        stats = _pair_stats(cum[valid], ks[valid].astype(float), m, V, config.statistic)
        best = int(np.argmax(stats))
        k = int(ks[valid][best])
        return float((xo[k - 1] + xo[k]) / 2.0), None

    codes = np.asarray(col_values, dtype=int)
    observed = np.unique(codes)
    if len(observed) < 2:
        return None, None
    sums = np.vstack([hc[codes == lev].sum(axis=0) for lev in observed])
    counts = np.array([(codes == lev).sum() for lev in observed])
    best_stat, best_subset = -np.inf, None
    for subset in _subset_candidates(observed):
        sel = np.isin(observed, subset)
        k = int(counts[sel].sum())
        if k < config.minbucket or m - k < config.minbucket:
            continue
        D = sums[sel].sum(axis=0)[None, :]
        stat = float(_pair_stats(D, np.array([float(k)]), m, V, config.statistic)[0])
        if stat > best_stat:
            best_stat, best_subset = stat, tuple(subset)
    if best_subset is None:
        return None, None
    return None, best_subset


def _gauss_loglik(n, ss):
    # Profile log-likelihood of a normal fit: -(n/2) (log(2 pi ss / n) + 1).
    return -0.5 * n * (np.log(2.0 * math.pi * ss / n) + 1.0)


def _search_mob(y: np.ndarray, col_values: np.ndarray, col: Column,
                config: FitConfig) -> tuple[float | None, tuple[int, ...] | None]:
    # Maximize the sum of the children's normal log-likelihoods; children
    # with (numerically) zero variance are not admissible.  Centring y keeps
    # the sum-of-squares differences well conditioned (child variances are
    # shift-invariant).
    m = y.shape[0]
    y = y - y.mean()
    total_ss = float((y**2).sum())
    ss_floor = 1e-12 * max(total_ss, 1e-300)

    if not col.is_categorical:
        x = np.asarray(col_values, dtype=float)
        order = np.argsort(x, kind="stable")
        xo, yo = x[order], y[order]
        c1 = np.cumsum(yo)
        c2 = np.cumsum(yo**2)
        ks = np.arange(1, m)
        ssl = np.maximum(c2[:-1] - c1[:-1] ** 2 / ks, 0.0)
        ssr = np.maximum((c2[-1] - c2[:-1]) - (c1[-1] - c1[:-1]) ** 2 / (m - ks), 0.0)
        valid = (
            (xo[:-1] < xo[1:])
            & (ks >= config.minbucket)
            & (m - ks >= config.minbucket)
            & (ssl > ss_floor)
            & (ssr > ss_floor)
        )
        if not valid.any():
            return None, None
        ll = _gauss_loglik(ks[valid], ssl[valid]) + _gauss_loglik(m - ks[valid], ssr[valid])
        best = int(np.argmax(ll))
        k = int(ks[valid][best])
        return float((xo[k - 1] + xo[k]) / 2.0), None

    codes = np.asarray(col_values, dtype=int)
    observed = np.unique(codes)
    if len(observed) < 2:
        return None, None
    n_l = np.array([(codes == lev).sum() for lev in observed])
    s1 = np.array([y[codes == lev].sum() for lev in observed])
    s2 = np.array([(y[codes == lev] ** 2).sum() for lev in observed])
    best_ll, best_subset = -np.inf, None
    for subset in _subset_candidates(observed):
        sel = np.isin(observed, subset)
        k = int(n_l[sel].sum())
        if k < config.minbucket or m - k < config.minbucket:
            continue
        ssl = max(float(s2[sel].sum() - s1[sel].sum() ** 2 / k), 0.0)
        ssr = max(float(s2[~sel].sum() - s1[~sel].sum() ** 2 / (m - k)), 0.0)
        if ssl <= ss_floor or ssr <= ss_floor:
            continue
        ll = float(_gauss_loglik(k, ssl) + _gauss_loglik(m - k, ssr))
        if ll > best_ll:
            best_ll, best_subset = ll, tuple(subset)
    if best_subset is None:
        return None, None
    return None, best_subset


def find_best_split(engine: str, y, col: Column, weights, config: FitConfig,
                    variable: int = 0) -> SplitSpec | None:
    """Best admissible split of one covariate inside a node.

    Continuous candidates are the midpoints between consecutive distinct
    sorted values; categorical candidates are all binary partitions of the
    observed levels.  Returns ``None`` when no candidate satisfies
    ``minbucket`` on both sides.
    """
    if col.is_categorical and col.n_levels > config.max_categorical_levels:
        raise ValueError(
            f"covariate {col.name!r} has {col.n_levels} levels, more than "
            f"max_categorical_levels={config.max_categorical_levels}; "
            "reduce the number of levels before fitting"
        )
    w = np.asarray(weights).astype(bool)
    y_sub = np.asarray(y, dtype=float)[w]
    values = col.values[w]
    if engine == MOB:
        threshold, subset = _search_mob(y_sub, values, col, config)
    else:
        h = _engine_h(engine, y_sub, np.ones(y_sub.shape[0]))
        threshold, subset = _search_pairwise(h, values, col, config)
    if threshold is None and subset is None:
        return None
    return SplitSpec(variable=variable, name=col.name, threshold=threshold,
                     left_levels=subset)


# ---------------------------------------------------------------------------
# variable selection and recursion


def _is_degenerate(col: Column, mask: np.ndarray) -> bool:
    values = col.values[mask]
    if values.shape[0] == 0:
        return True
    if col.is_categorical:
        return len(np.unique(values.astype(int))) < 2
    values = values.astype(float)
    return bool(np.all(values == values[0]))


def select_split_variable(
    engine: str, y, covariates: tuple[Column, ...], weights, config: FitConfig
) -> tuple[dict[str, TestResult], int | None]:
    """Test every usable covariate and pick the most significant one.

    Constant-in-node covariates are skipped and do not enter the Bonferroni
    multiplier.  Returns the per-covariate results and the index of the
    selected covariate, or ``None`` when no adjusted p-value falls below
    ``alpha`` (strictly).
    """
    mask = np.asarray(weights).astype(bool)
    w = mask.astype(float)
    y = np.asarray(y, dtype=float)

    usable = [j for j, col in enumerate(covariates) if not _is_degenerate(col, mask)]
    if not usable:
        return {}, None

    raw: dict[int, TestResult] = {}
    if engine == MOB:
        nf = normal_ml_fit(y[mask])
        for j in usable:
            col = covariates[j]
            sub = replace(col, values=col.values[mask])
            raw[j] = mob_fluctuation_test(nf.scores, sub, trim=config.mob_trim)
    else:
        h = _engine_h(engine, y, w)
        standardize = c_quad if config.statistic == QUAD else c_max
        for j in usable:
            ls = linear_statistic(g_transform(covariates[j]), h, w)
            raw[j] = standardize(ls)

    multiplier = len(raw) if config.bonferroni else 1
    tests = {
        covariates[j].name: (raw[j].adjusted(multiplier) if config.bonferroni else raw[j])
        for j in raw
    }

    best_j, best_p = None, None
    for j in usable:
        p = tests[covariates[j].name].p_adjusted
        if best_p is None or p < best_p:
            best_j, best_p = j, p
    if best_p is not None and best_p < config.alpha:
        return tests, best_j
    return tests, None


def fit_coat(dataset: Dataset, config: FitConfig | None = None) -> CoatModel:
    """Fit a conditional method agreement tree.

    Deterministic for fixed input and configuration: stable orderings and
    fixed tie-breaks everywhere.  Nodes whose outcome is constant terminate
    the recursion for the parametric engines; nodes smaller than
    ``minsplit`` or deeper than ``maxdepth`` are not tested at all.
    """
    config = config or FitConfig()
    covariates = dataset.model_covariates()
    y = dataset.y
    counter = {"next": 1}

    def build(mask: np.ndarray, depth: int) -> TreeNode:
        node = TreeNode(id=counter["next"], n=int(mask.sum()), depth=depth, mask=mask)
        counter["next"] += 1
        if node.n >= 2:
            node.ba = ba_estimates(y[mask])
        if node.n < config.minsplit:
            return node
        if config.maxdepth is not None and depth >= config.maxdepth:
            return node
        try:
            tests, selected = select_split_variable(config.engine, y, covariates, mask, config)
        except DegenerateVarianceError:
            return node
        node.tests = tests
        if selected is None:
            return node
        col = covariates[selected]
        node.selected = col.name
        node.node_p = tests[col.name].p_adjusted
        split = find_best_split(config.engine, y, col, mask, config, variable=selected)
        if split is None:
            return node
        node.split = split
        left = np.zeros_like(mask)
        left[mask] = split.goes_left(col.values[mask])
        right = mask & ~left
        node.children = (build(left, depth + 1), build(right, depth + 1))
        return node

    root = build(np.ones(dataset.n, dtype=bool), 0)
    schema = tuple(ColumnInfo(c.name, c.kind, c.levels) for c in covariates)
    return CoatModel(config=config, root=root, n=dataset.n, schema=schema)


def predict_node(model: CoatModel, row: Mapping[str, object]) -> tuple[int, BaEstimates | None]:
    """Route one covariate row to its leaf; returns (leaf id, leaf estimates)."""
    info = {c.name: c for c in model.schema}
    node = model.root
    while not node.is_leaf:
        split = node.split
        if split.name not in row:
            raise ValueError(f"missing covariate {split.name!r} in row")
        value = row[split.name]
        if split.threshold is not None:
            go_left = float(value) <= split.threshold
        else:
            levels = info[split.name].levels or ()
            label = str(value)
            if label not in levels:
                raise ValueError(
                    f"unseen level {label!r} for covariate {split.name!r}"
                )
            go_left = (levels.index(label) + 1) in split.left_levels
        node = node.children[0] if go_left else node.children[1]
    return node.id, node.ba


# ---------------------------------------------------------------------------
# serialization (schema "coat-model/1")


def _test_to_dict(r: TestResult) -> dict:
    return {
        "statistic": r.statistic,
        "kind": r.kind,
        "df": r.df,
        "p_raw": r.p_raw,
        "p_adjusted": r.p_adjusted,
    }


def _test_from_dict(d: dict) -> TestResult:
    return TestResult(d["statistic"], d["kind"], d["df"], d["p_raw"], d["p_adjusted"])


def model_to_dict(model: CoatModel) -> dict:
    """Flat-node JSON document for a fitted model."""
    info = {c.name: c for c in model.schema}
    nodes = []

    def walk(node: TreeNode, parent: int | None):
        entry = {
            "id": node.id,
            "parent": parent,
            "depth": node.depth,
            "n": node.n,
            "ba": node.ba.to_dict() if node.ba else None,
            "tests": {name: _test_to_dict(t) for name, t in node.tests.items()},
            "selected": node.selected,
            "p_adjusted": node.node_p,
            "split": None,
            "children": None,
        }
        if node.split is not None:
            rule: dict = {"variable": node.split.name}
            if node.split.threshold is not None:
                rule["threshold"] = node.split.threshold
            else:
                levels = info[node.split.name].levels
                rule["left_levels"] = [levels[i - 1] for i in node.split.left_levels]
            entry["split"] = rule
        if node.children:
            entry["children"] = [child.id for child in node.children]
        nodes.append(entry)
        if node.children:
            for child in node.children:
                walk(child, node.id)

    walk(model.root, None)
    cfg = model.config
    return {
        "schema": MODEL_SCHEMA,
        "config": {
            "engine": cfg.engine,
            "alpha": cfg.alpha,
            "minsplit": cfg.minsplit,
            "minbucket": cfg.minbucket,
            "maxdepth": cfg.maxdepth,
            "bonferroni": cfg.bonferroni,
            "statistic": cfg.statistic,
            "mob_trim": cfg.mob_trim,
            "max_categorical_levels": cfg.max_categorical_levels,
        },
        "n": model.n,
        "covariates": [
            {"name": c.name, "kind": c.kind,
             "levels": list(c.levels) if c.levels else None}
            for c in model.schema
        ],
        "nodes": nodes,
    }


def model_from_dict(doc: dict) -> CoatModel:
    """Rebuild a model from its JSON document (training masks are not kept)."""
    if doc.get("schema") != MODEL_SCHEMA:
        raise ValueError(f"unsupported model schema {doc.get('schema')!r}")
    config = FitConfig(**doc["config"])
    schema = tuple(
        ColumnInfo(c["name"], c["kind"], tuple(c["levels"]) if c["levels"] else None)
        for c in doc["covariates"]
    )
    by_name = {c.name: i for i, c in enumerate(schema)}
    nodes: dict[int, TreeNode] = {}
    children_ids: dict[int, list[int]] = {}
    for entry in doc["nodes"]:
        ba = BaEstimates(**entry["ba"]) if entry["ba"] else None
        split = None
        if entry["split"]:
            rule = entry["split"]
            idx = by_name[rule["variable"]]
            if "threshold" in rule:
                split = SplitSpec(idx, rule["variable"], threshold=rule["threshold"])
            else:
                levels = schema[idx].levels
                split = SplitSpec(
                    idx, rule["variable"],
                    left_levels=tuple(levels.index(lab) + 1 for lab in rule["left_levels"]),
                )
        node = TreeNode(
            id=entry["id"], n=entry["n"], depth=entry["depth"], ba=ba,
            tests={k: _test_from_dict(v) for k, v in entry["tests"].items()},
            selected=entry["selected"], node_p=entry["p_adjusted"], split=split,
        )
        nodes[node.id] = node
        if entry["children"]:
            children_ids[node.id] = entry["children"]
    for nid, (lo, hi) in ((k, tuple(v)) for k, v in children_ids.items()):
        nodes[nid].children = (nodes[lo], nodes[hi])
    root = nodes[doc["nodes"][0]["id"]]
    return CoatModel(config=config, root=root, n=doc["n"], schema=schema)


def model_to_json(model: CoatModel, indent: int | None = 2) -> str:
    return json.dumps(model_to_dict(model), indent=indent)


def model_from_json(text: str) -> CoatModel:
    return model_from_dict(json.loads(text))
