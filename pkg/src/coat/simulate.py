"""Scenario generators, the adjusted Rand index, and the Monte-Carlo runner.

Three data-generating scenario families are provided: a pure-noise Null
case, Stump cases with one informative covariate shifting the bias and/or
the spread of the differences, and Tree cases with two informative
covariates defining three or four subgroups.  :func:`run_simulation`
replays them over a grid of sample sizes, fits every requested engine to
the same generated data, and aggregates rejection rates, power, and
subgroup recovery.

Replication ``r`` of a scenario at sample size ``n`` derives its seed from
``(base seed, scenario code, n, r)`` only, so results are independent of
scheduling and identical across engines.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import numpy as np
from scipy.special import ndtri

from .data import CONTINUOUS, Column, Dataset
from .tree import ENGINES, FitConfig, fit_coat

NULL = "null"
STUMP = "stump"
TREE = "tree"

#: Environment variable capping worker processes for replication batches.
THREADS_ENV = "COAT_THREADS"


@dataclass(frozen=True)
class Scenario:
    """One simulation scenario: ``null``, ``stump`` k in 1..3, ``tree`` k in 1..2."""

    kind: str
    k: int = 0

    def __post_init__(self):
        if self.kind == NULL:
            if self.k != 0:
                raise ValueError("null scenario has no variant index")
        elif self.kind == STUMP:
            if self.k not in (1, 2, 3):
                raise ValueError(f"stump variant must be 1, 2 or 3, got {self.k}")
        elif self.kind == TREE:
            if self.k not in (1, 2):
                raise ValueError(f"tree variant must be 1 or 2, got {self.k}")
        else:
            raise ValueError(f"unknown scenario kind {self.kind!r}")

    @property
    def label(self) -> str:
        return self.kind if self.kind == NULL else f"{self.kind}{self.k}"

    @property
    def code(self) -> int:
        # Stable small integer identifying the scenario in seed derivation.
        return {NULL: 0, STUMP: 10, TREE: 20}[self.kind] + self.k

    @classmethod
    def parse(cls, label: str) -> "Scenario":
        label = label.strip().lower()
        if label == NULL:
            return cls(NULL)
        for kind in (STUMP, TREE):
            if label.startswith(kind) and label[len(kind):].isdigit():
                return cls(kind, int(label[len(kind):]))
        raise ValueError(f"cannot parse scenario {label!r}")


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected pair-counting concordance of two partitions.

    Hubert-Arabie form; 1 for identical partitions (including the case of
    two single-cluster partitions), around 0 for independent ones.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("adjusted_rand_index: partitions must share one length")
    n = a.shape[0]
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ra, rb = int(ai.max()) + 1, int(bi.max()) + 1
    table = np.zeros((ra, rb), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def comb2(x):
        return x * (x - 1) // 2

    sum_cells = int(comb2(table).sum())
    sum_a = int(comb2(table.sum(axis=1)).sum())
    sum_b = int(comb2(table.sum(axis=0)).sum())
    total = comb2(n)
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    denom = 0.5 * (sum_a + sum_b) - expected
    if denom == 0.0:
        # Zero denominator only when both partitions are all-singleton or
        # both single-cluster; either way they are identical as partitions.
        return 1.0
    return float((sum_cells - expected) / denom)


def _covariate_columns(X: np.ndarray) -> tuple[Column, ...]:
    return tuple(
        Column(name=f"x{j + 1}", kind=CONTINUOUS, values=X[:, j])
        for j in range(X.shape[1])
    )


def generate_scenario(scenario: Scenario, n: int, seed) -> tuple[Dataset, np.ndarray]:
    """Draw one dataset plus its true subgroup partition.

    Covariates are five independent standard normals (drawn first), the
    outcome noise second, so identical seeds give byte-identical data.
    Split points sit at standard-normal quantiles; subgroup labels follow
    the cells of the generating partition.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 5))
    noise = rng.standard_normal(n)

    if scenario.kind == NULL:
        y = noise
        truth = np.zeros(n, dtype=int)
    elif scenario.kind == STUMP:
        ind = (X[:, 0] > ndtri(0.25)).astype(float)
        mu = {1: 0.3 * ind, 2: np.zeros(n), 3: 0.4 * ind}[scenario.k]
        sd = {1: np.ones(n), 2: 1.0 + ind, 3: 1.0 + ind}[scenario.k]
        y = mu + sd * noise
        truth = ind.astype(int)
    else:
        i1 = (X[:, 0] >= ndtri(0.4)).astype(float)
        if scenario.k == 1:
            i2 = (X[:, 1] >= ndtri(0.75)).astype(float)
            mu = 0.3 * i2 + 0.5 * (1.0 - i2) * i1
            sd = 1.0 + i2
            truth = np.where(i2 == 1.0, 0, np.where(i1 == 1.0, 1, 2))
        else:
            i2 = (X[:, 1] >= ndtri(0.6)).astype(float)
            mu = 0.5 * i1
            sd = 1.0 + i2
            truth = (2 * i1 + i2).astype(int)
        y = mu + sd * noise

    dataset = Dataset(y=y, covariates=_covariate_columns(X))
    return dataset, truth


@dataclass(frozen=True)
class SimConfig:
    """Monte-Carlo study layout: scenarios x methods x sample sizes."""

    scenarios: tuple[Scenario, ...]
    methods: tuple[str, ...]
    ns: tuple[int, ...]
    replications: int
    seed: int = 0
    alpha: float = 0.05

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        for n in self.ns:
            if n < 10:
                raise ValueError(f"sample sizes below 10 are not supported, got {n}")
        for m in self.methods:
            if m not in ENGINES:
                raise ValueError(f"unknown method {m!r}; expected one of {ENGINES}")
        if not (self.scenarios and self.methods and self.ns):
            raise ValueError("scenarios, methods and sample sizes must be non-empty")


@dataclass(frozen=True)
class SimRow:
    """One aggregate: a metric value with its pointwise 95% interval."""

    scenario: str
    method: str
    n: int
    metric: str
    value: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class SimResult:
    """All aggregates of one study plus failure and timing accounting.

    ``fit_seconds`` maps (scenario, method, n) to the summed fitting wall
    time of the surviving replications.
    """

    rows: tuple[SimRow, ...]
    failures: tuple[tuple[str, str, int, int], ...]
    fit_seconds: tuple[tuple[str, str, int, float], ...]
    wall_time_s: float

    def value(self, scenario: str, method: str, n: int, metric: str) -> float:
        for row in self.rows:
            if (row.scenario, row.method, row.n, row.metric) == (scenario, method, n, metric):
                return row.value
        raise KeyError((scenario, method, n, metric))


def _replication_seed(base: int, scenario: Scenario, n: int, r: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base), scenario.code, int(n), int(r)])


def _run_replication(args) -> tuple[int, dict]:
    scenario, methods, n, base_seed, alpha, r = args
    out: dict[str, dict] = {}
    try:
        dataset, truth = generate_scenario(scenario, n, _replication_seed(base_seed, scenario, n, r))
    except Exception:
        return r, {m: {"failed": True} for m in methods}
    for method in methods:
        t0 = time.perf_counter()
        try:
            model = fit_coat(dataset, FitConfig(engine=method, alpha=alpha))
            root = model.root
            rejected = root.node_p is not None and root.node_p < alpha
            record = {
                "failed": False,
                "rejected": bool(rejected),
                "selected_x1": bool(rejected and root.selected == "x1"),
                "ari": adjusted_rand_index(model.leaf_assignments(), truth),
                "seconds": time.perf_counter() - t0,
            }
            if scenario.kind == TREE and scenario.k == 1:
                hit = (
                    root.split is not None
                    and root.split.name == "x2"
                    and root.children is not None
                    and root.children[0].split is not None
                    and root.children[0].split.name == "x1"
                )
                record["structure"] = bool(hit)
            out[method] = record
        except Exception:
            out[method] = {"failed": True}
    return r, out


def _worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError:
        workers = 1
    return max(1, min(workers, os.cpu_count() or 1))


def _binomial_row(scenario, method, n, metric, hits, count) -> SimRow:
    rate = hits / count
    half = 1.959963984540054 * math.sqrt(rate * (1.0 - rate) / count)
    return SimRow(scenario, method, n, metric, rate,
                  max(rate - half, 0.0), min(rate + half, 1.0))


def run_simulation(cfg: SimConfig) -> SimResult:
    """Run the full study; failures are counted per combination, never fatal."""
    t0 = time.perf_counter()
    workers = _worker_count()
    rows: list[SimRow] = []
    failures: list[tuple[str, str, int, int]] = []
    timings: list[tuple[str, str, int, float]] = []

    for scenario in cfg.scenarios:
        for n in cfg.ns:
            tasks = [
                (scenario, cfg.methods, n, cfg.seed, cfg.alpha, r)
                for r in range(cfg.replications)
            ]
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    results = dict(pool.map(_run_replication, tasks, chunksize=16))
            else:
                results = dict(map(_run_replication, tasks))
            records = [results[r] for r in sorted(results)]

            for method in cfg.methods:
                ok = [rec[method] for rec in records if not rec[method].get("failed")]
                n_fail = cfg.replications - len(ok)
                if n_fail:
                    failures.append((scenario.label, method, n, n_fail))
                if not ok:
                    continue
                count = len(ok)
                timings.append((scenario.label, method, n,
                                float(sum(rec["seconds"] for rec in ok))))
                rows.append(_binomial_row(
                    scenario.label, method, n, "rejection_rate",
                    sum(rec["rejected"] for rec in ok), count))
                if scenario.kind == STUMP:
                    rows.append(_binomial_row(
                        scenario.label, method, n, "power",
                        sum(rec["selected_x1"] for rec in ok), count))
                if scenario.kind != NULL:
                    aris = np.array([rec["ari"] for rec in ok])
                    half = 1.959963984540054 * aris.std(ddof=1) / math.sqrt(count) if count > 1 else 0.0
                    rows.append(SimRow(scenario.label, method, n, "mean_ari",
                                       float(aris.mean()),
                                       float(aris.mean() - half), float(aris.mean() + half)))
                if scenario.kind == TREE and scenario.k == 1:
                    rows.append(_binomial_row(
                        scenario.label, method, n, "structure_recovery",
                        sum(rec["structure"] for rec in ok), count))

    return SimResult(rows=tuple(rows), failures=tuple(failures),
                     fit_seconds=tuple(timings),
                     wall_time_s=time.perf_counter() - t0)


CSV_HEADER = "scenario,method,n,metric,value,ci_low,ci_high"


def results_to_csv(result: SimResult) -> str:
    """Deterministic delimited export, one row per aggregate."""
    lines = [CSV_HEADER]
    for row in result.rows:
        lines.append(
            f"{row.scenario},{row.method},{row.n},{row.metric},"
            f"{row.value:.10g},{row.ci_low:.10g},{row.ci_high:.10g}"
        )
    return "\n".join(lines) + "\n"


def write_results_csv(result: SimResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(results_to_csv(result))


def desk_preset(seed: int = 20240, replications: int = 500) -> SimConfig:
    """Reduced study grid that finishes at desk scale."""
    return SimConfig(
        scenarios=(Scenario(NULL), Scenario(STUMP, 1), Scenario(STUMP, 2),
                   Scenario(STUMP, 3), Scenario(TREE, 1), Scenario(TREE, 2)),
        methods=ENGINES,
        ns=(50, 100, 200, 500, 1000),
        replications=replications,
        seed=seed,
    )


def paper_preset(seed: int = 20240) -> SimConfig:
    """Full-scale grid mirroring the original study layout (slow)."""
    return SimConfig(
        scenarios=(Scenario(NULL), Scenario(STUMP, 1), Scenario(STUMP, 2),
                   Scenario(STUMP, 3), Scenario(TREE, 1), Scenario(TREE, 2)),
        methods=ENGINES,
        ns=tuple(range(50, 1001, 50)),
        replications=10000,
        seed=seed,
    )
