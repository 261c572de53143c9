"""Conditional method agreement trees.

Bland-Altman analysis embedded in recursive partitioning: trees whose
leaves carry their own bias and limits of agreement, a two-sample test of
agreement between predefined groups, and a Monte-Carlo study harness.
"""

from .agreement import (
    BaEstimates,
    BaTestResult,
    ba_estimates,
    ba_test,
    loa_quantile,
    sequential_ba_test,
)
from .data import (
    CATEGORICAL,
    CONTINUOUS,
    Column,
    CsvSchema,
    Dataset,
    LoadReport,
    MethodPair,
    ValidationError,
    derive_differences,
    load_csv,
    validate_dataset,
)
from .kernel import (
    LinStat,
    TestResult,
    bonferroni,
    c_max,
    c_quad,
    chi2_sf,
    g_transform,
    h_transform,
    linear_statistic,
    normal_cdf,
    pseudo_inverse,
    suplm_pvalue,
)
from .render import render_ba_svg, render_tree_text
from .simulate import (
    Scenario,
    SimConfig,
    SimResult,
    adjusted_rand_index,
    desk_preset,
    generate_scenario,
    paper_preset,
    run_simulation,
    results_to_csv,
    write_results_csv,
)
from .tree import (
    CTREE,
    CTREE_TRAFO,
    DISTTREE,
    ENGINES,
    MOB,
    CoatModel,
    DegenerateVarianceError,
    FitConfig,
    NormalFit,
    SplitSpec,
    TreeNode,
    engine_statistic,
    find_best_split,
    fit_coat,
    mob_fluctuation_test,
    model_from_json,
    model_to_json,
    normal_ml_fit,
    predict_node,
    select_split_variable,
)

__version__ = "0.1.0"
