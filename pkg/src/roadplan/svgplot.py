"""Deterministic grouped-bar SVG chart for per-scenario solution costs.

Hand-rolled so two identical benchmark runs emit byte-identical documents;
general plotting libraries embed run-dependent identifiers.
"""

from __future__ import annotations


class PlotError(ValueError):
    pass


_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")

_CHART_HEIGHT = 220.0
_BAR_WIDTH = 18.0
_BAR_GAP = 4.0
_GROUP_GAP = 26.0
_MARGIN_LEFT = 60.0
_MARGIN_TOP = 30.0
_MARGIN_BOTTOM = 70.0


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def emit_cost_plot(results) -> str:
    """Grouped bar chart over scenarios solved by every compared planner.

    `results` is an iterable with `scenario_id`, `planner_id`, `status` and
    `cost.total` fields (duck-typed; dict rows with the CSV column names work
    too). Returns a standalone SVG document.
    """
    rows = []
    for r in results:
        if isinstance(r, dict):
            rows.append((r["scenario"], r["planner"], r["status"],
                         float(r["cost_total"]) if r.get("cost_total") not in (None, "")
                         else None))
        else:
            rows.append((r.scenario_id, r.planner_id, r.status,
                         r.cost.total if r.cost is not None else None))

    planners = sorted({p for _, p, _, _ in rows})
    solved: dict[str, dict[str, float]] = {}
    for scenario, planner, status, total in rows:
        if status == "solved" and total is not None:
            solved.setdefault(scenario, {})[planner] = total
    common = sorted(s for s, per in solved.items() if len(per) == len(planners))
    if not planners or not common:
        raise PlotError("no scenario was solved by every compared planner")

    max_cost = max(solved[s][p] for s in common for p in planners)
    max_cost = max(max_cost, 1e-9)
    group_w = len(planners) * _BAR_WIDTH + (len(planners) - 1) * _BAR_GAP
    width = _MARGIN_LEFT + len(common) * (group_w + _GROUP_GAP) + 20.0
    height = _MARGIN_TOP + _CHART_HEIGHT + _MARGIN_BOTTOM
    base_y = _MARGIN_TOP + _CHART_HEIGHT

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
        f'<line x1="{_fmt(_MARGIN_LEFT - 6)}" y1="{_fmt(base_y)}" '
        f'x2="{_fmt(width - 10)}" y2="{_fmt(base_y)}" stroke="#333" stroke-width="1"/>',
        f'<text x="{_fmt(10.0)}" y="{_fmt(_MARGIN_TOP - 10)}" font-size="12" '
        f'font-family="sans-serif">solution cost</text>',
    ]
    for i, scenario in enumerate(common):
        gx = _MARGIN_LEFT + i * (group_w + _GROUP_GAP)
        for j, planner in enumerate(planners):
            cost = solved[scenario][planner]
            h = _CHART_HEIGHT * cost / max_cost
            x = gx + j * (_BAR_WIDTH + _BAR_GAP)
            y = base_y - h
            parts.append(
                f'<rect class="bar" data-scenario="{scenario}" data-planner="{planner}" '
                f'x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(_BAR_WIDTH)}" '
                f'height="{_fmt(h)}" fill="{_COLORS[j % len(_COLORS)]}"/>'
            )
        label_x = gx + group_w / 2
        parts.append(
            f'<text x="{_fmt(label_x)}" y="{_fmt(base_y + 12)}" font-size="9" '
            f'font-family="sans-serif" text-anchor="end" '
            f'transform="rotate(-45 {_fmt(label_x)} {_fmt(base_y + 12)})">{scenario}</text>'
        )
    # legend
    for j, planner in enumerate(planners):
        lx = _MARGIN_LEFT + j * 130.0
        ly = height - 18.0
        parts.append(
            f'<rect x="{_fmt(lx)}" y="{_fmt(ly - 9)}" width="10" height="10" '
            f'fill="{_COLORS[j % len(_COLORS)]}"/>'
        )
        parts.append(
            f'<text x="{_fmt(lx + 14)}" y="{_fmt(ly)}" font-size="11" '
            f'font-family="sans-serif">{planner}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
