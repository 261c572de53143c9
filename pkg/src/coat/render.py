"""Text and SVG rendering of fitted trees and Bland-Altman scatter plots.

The SVG output is self-contained (inline styles, no external fonts) inside
a fixed 800x600 viewBox with 40px margins.  Reference geometry is strict:
data points are ``<circle>`` elements and the bias/limit-of-agreement
levels are horizontal ``<line>`` elements; axes and ticks use ``<rect>``
and ``<path>`` so they never masquerade as reference lines.
"""

from __future__ import annotations

import numpy as np

from .agreement import BaEstimates
from .kernel import MAX, QUAD, SUPLM, TestResult
from .tree import CoatModel, TreeNode

SVG_WIDTH = 800
SVG_HEIGHT = 600
SVG_MARGIN = 40

_PALETTE = (
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e",
    "#e6ab02", "#a6761d", "#666666", "#1f78b4", "#b2df8a",
)


def _fmt(x: float) -> str:
    return format(x, ".4g")


def _stat_label(t: TestResult) -> str:
    return {QUAD: "chi2", MAX: "max|z|", SUPLM: "supLM"}.get(t.kind, t.kind)


def _ba_text(node: TreeNode) -> str:
    if node.ba is None:
        return f"n={node.n}"
    ba = node.ba
    return (
        f"n={ba.n}, bias={_fmt(ba.bias)}, sd={_fmt(ba.sd)}, "
        f"LoA [{_fmt(ba.loa_lower)}, {_fmt(ba.loa_upper)}]"
    )


def _rule_text(node: TreeNode, model: CoatModel, left: bool) -> str:
    split = node.split
    if split.threshold is not None:
        op = "<=" if left else ">"
        return f"{split.name} {op} {_fmt(split.threshold)}"
    levels = next(c.levels for c in model.schema if c.name == split.name)
    members = [levels[i - 1] for i in split.left_levels]
    if left:
        return f"{split.name} in {{{', '.join(members)}}}"
    rest = [lab for lab in levels if lab not in members]
    return f"{split.name} in {{{', '.join(rest)}}}"


def render_tree_text(model: CoatModel) -> str:
    """Indented one-line-per-node rendering of a fitted tree.

    Inner nodes show the split rule with the selected covariate's test
    (statistic, df, adjusted p); leaves show their agreement estimates.
    """
    lines: list[str] = []

    def walk(node: TreeNode, prefix: str, rule: str):
        if node.is_leaf:
            lines.append(f"{prefix}[{node.id}] {rule}: {_ba_text(node)}")
            return
        test = node.tests[node.selected]
        label = _stat_label(test)
        df = f", df={test.df}" if test.df else ""
        head = _rule_text(node, model, left=True)
        lines.append(
            f"{prefix}[{node.id}] {head} ({label}={_fmt(test.statistic)}{df}, "
            f"p={_fmt(test.p_adjusted)})"
        )
        walk(node.children[0], prefix + "|   ", _rule_text(node, model, left=True))
        walk(node.children[1], prefix + "|   ", _rule_text(node, model, left=False))

    if model.root.is_leaf:
        return f"[{model.root.id}] <root> {_ba_text(model.root)}\n"
    walk(model.root, "", "<root>")
    return "\n".join(lines) + "\n"


def _scale(lo: float, hi: float, size: int, invert: bool):
    if hi - lo <= 0:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    inner = size - 2 * SVG_MARGIN

    def to_px(v: float) -> float:
        frac = (v - lo) / (hi - lo)
        if invert:
            frac = 1.0 - frac
        return SVG_MARGIN + frac * inner

    return to_px, lo, hi


def ba_svg_y_transform(y_values, estimates: BaEstimates):
    """The vertical pixel mapping used by :func:`render_ba_svg` (documented
    so plots are checkable: 5% padded data+LoA range onto the inner box)."""
    lo = min(float(np.min(y_values)), estimates.loa_lower)
    hi = max(float(np.max(y_values)), estimates.loa_upper)
    to_px, _, _ = _scale(lo, hi, SVG_HEIGHT, invert=True)
    return to_px


def render_ba_svg(
    y,
    m,
    estimates: BaEstimates,
    leaf_ids=None,
) -> str:
    """Bland-Altman scatter: differences against means, with reference lines.

    A solid horizontal line marks the bias, dashed lines the two limits of
    agreement.  When ``leaf_ids`` is given the points are colored per leaf
    and a legend maps colors to node ids.
    """
    y = np.asarray(y, dtype=float)
    m = np.asarray(m, dtype=float)
    if y.shape != m.shape or y.ndim != 1:
        raise ValueError("render_ba_svg: y and m must be equal-length vectors")
    if y.size == 0:
        raise ValueError("render_ba_svg: no data to plot")

    x_px, _, _ = _scale(float(m.min()), float(m.max()), SVG_WIDTH, invert=False)
    y_px = ba_svg_y_transform(y, estimates)
    x0, x1 = SVG_MARGIN, SVG_WIDTH - SVG_MARGIN
    y0, y1 = SVG_MARGIN, SVG_HEIGHT - SVG_MARGIN

    if leaf_ids is not None:
        leaf_ids = np.asarray(leaf_ids)
        uniq = sorted(int(v) for v in np.unique(leaf_ids))
        color_of = {v: _PALETTE[i % len(_PALETTE)] for i, v in enumerate(uniq)}
    else:
        uniq, color_of = [], {}

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" '
        f'width="{SVG_WIDTH}" height="{SVG_HEIGHT}">',
        '<style>text { font: 14px sans-serif; fill: #222; }</style>',
        f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" '
        'fill="white" stroke="#444" stroke-width="1"/>',
    ]

    for level, dash in ((estimates.bias, None),
                        (estimates.loa_lower, "6 4"),
                        (estimates.loa_upper, "6 4")):
        py = y_px(level)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        parts.append(
            f'<line x1="{x0}" y1="{py:.3f}" x2="{x1}" y2="{py:.3f}" '
            f'stroke="#333" stroke-width="1.5"{dash_attr}/>'
        )

    for i in range(y.size):
        color = color_of.get(int(leaf_ids[i]), "#1f77b4") if leaf_ids is not None else "#1f77b4"
        parts.append(
            f'<circle cx="{x_px(float(m[i])):.3f}" cy="{y_px(float(y[i])):.3f}" '
            f'r="3.5" fill="{color}" fill-opacity="0.75"/>'
        )

    # axis ticks as paths, labels as text
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        tx = x0 + frac * (x1 - x0)
        ty = y1 - frac * (y1 - y0)
        parts.append(f'<path d="M {tx:.3f} {y1} v 6" stroke="#444" stroke-width="1"/>')
        parts.append(f'<path d="M {x0} {ty:.3f} h -6" stroke="#444" stroke-width="1"/>')
    parts.append(
        f'<text x="{(x0 + x1) / 2:.1f}" y="{SVG_HEIGHT - 8}" '
        'text-anchor="middle">mean of methods</text>'
    )
    parts.append(
        f'<text x="14" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(y0 + y1) / 2:.1f})">difference</text>'
    )

    if uniq:
        for i, leaf in enumerate(uniq):
            ly = y0 + 14 + 18 * i
            parts.append(
                f'<g class="legend-entry">'
                f'<rect x="{x1 - 110}" y="{ly - 10}" width="12" height="12" '
                f'fill="{color_of[leaf]}"/>'
                f'<text x="{x1 - 92}" y="{ly}">node {leaf}</text></g>'
            )

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
