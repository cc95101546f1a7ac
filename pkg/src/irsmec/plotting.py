"""Figure scripts and PNG rendering for sweep tables.

:func:`emit_plot_script` writes a standalone matplotlib script that reads a
table CSV through a path relative to the script itself.  :func:`render_figure`
draws the same figure in-process with the Agg backend; both run the drawing
routine kept in ``_DRAW_SOURCE``, so the PNG and the script agree.
"""

from __future__ import annotations

import os
from dataclasses import asdict

from .errors import ValidationError
from .experiments import GroupRow, parse_scheme

FAMILIES = {
    "energy_vs_M": {"param": "M", "panels": [("mean_energy_J", "Total energy (J)")], "rows": "table"},
    "runtime_vs_M": {"param": "M", "panels": [("mean_solver_time_s", "Mean run time (s)")], "rows": "table"},
    "energy_vs_N": {"param": "N", "panels": [("mean_energy_J", "Total energy (J)")], "rows": "table"},
    "runtime_vs_N": {"param": "N", "panels": [("mean_solver_time_s", "Mean run time (s)")], "rows": "table"},
    "offload_prob": {
        "param": None,
        "panels": [
            ("offload_prob_near_irs", "Offloading probability, near IRS"),
            ("offload_prob_near_server", "Offloading probability, near server"),
        ],
        "rows": "table",
    },
    "group_energy": {
        "param": None,
        "panels": [
            ("mean_energy_near_irs_J", "Energy near IRS (J)"),
            ("mean_energy_near_server_J", "Energy near server (J)"),
        ],
        "rows": "groups",
    },
    "discrete_loss": {"param": None, "panels": [("mean_energy_J", "Total energy (J)")], "rows": "table"},
}

X_LABELS = {
    "M": "Number of reflecting elements M",
    "N": "Number of devices N",
    "L": "Number of phase levels L",
}

_DRAW_SOURCE = '''
def draw(plt, rows, curves, panels, xlabel, title):
    fig, axes = plt.subplots(1, len(panels), figsize=(5.0 * len(panels), 4.0), squeeze=False)
    for ax, (column, ylabel) in zip(axes[0], panels):
        for scheme in curves:
            pts = sorted((float(r["param_value"]), float(r[column])) for r in rows if r["scheme"] == scheme)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=scheme)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        ax.legend()
    fig.suptitle(title)
    fig.tight_layout()
    return fig
'''

_SCRIPT_TEMPLATE = '''"""{title}.  Generated file: reads {csv_name} next to this script."""

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
CSV_PATH = os.path.join(HERE, {csv_name!r})
PNG_PATH = os.path.join(HERE, {png_name!r})
CURVES = {curves!r}
PANELS = {panels!r}
XLABEL = {xlabel!r}
TITLE = {title!r}
{draw}

if __name__ == "__main__":
    with open(CSV_PATH, newline="") as fh:
        rows = list(csv.DictReader(fh))
    fig = draw(plt, rows, CURVES, PANELS, XLABEL, TITLE)
    fig.savefig(PNG_PATH, dpi=120, metadata={{"Software": None}})
'''


def _rows_as_dicts(rows):
    return [r if isinstance(r, dict) else asdict(r) for r in rows]


def figure_spec(rows, family: str) -> dict:
    """Check that ``rows`` fit ``family`` and return what the figure needs."""
    if family not in FAMILIES:
        raise ValidationError(f"unknown figure family {family!r}; valid: {', '.join(FAMILIES)}")
    spec = FAMILIES[family]
    dicts = _rows_as_dicts(rows)
    if not dicts:
        raise ValidationError(f"figure {family} needs a non-empty table")
    is_groups = isinstance(rows[0], GroupRow) or "mean_energy_near_irs_J" in dicts[0]
    if (spec["rows"] == "groups") != is_groups:
        want = "group-energy" if spec["rows"] == "groups" else "sweep"
        raise ValidationError(f"figure {family} needs the {want} table")
    params = {d["param_name"] for d in dicts}
    if len(params) != 1:
        raise ValidationError(f"table mixes swept parameters {sorted(params)}")
    param = params.pop()
    if spec["param"] is not None and param != spec["param"]:
        raise ValidationError(f"figure {family} needs a sweep over {spec['param']}, table sweeps {param}")
    curves = []
    for d in dicts:
        if d["scheme"] not in curves:
            curves.append(d["scheme"])
    if family == "discrete_loss":
        if not any(parse_scheme(c).phases in ("discrete", "quantized") for c in curves):
            raise ValidationError("figure discrete_loss needs at least one discrete or quantized scheme")
    return {
        "curves": curves,
        "panels": [list(p) for p in spec["panels"]],
        "xlabel": X_LABELS.get(param, param),
        "title": family.replace("_", " "),
    }


def emit_plot_script(rows, family: str, csv_name: str, png_name: str | None = None) -> str:
    """Text of a standalone matplotlib script, one curve per scheme."""
    spec = figure_spec(rows, family)
    if png_name is None:
        png_name = f"{family}.png"
    return _SCRIPT_TEMPLATE.format(
        title=spec["title"],
        csv_name=csv_name,
        png_name=png_name,
        curves=spec["curves"],
        panels=spec["panels"],
        xlabel=spec["xlabel"],
        draw=_DRAW_SOURCE,
    )


def render_figure(rows, family: str, path) -> str:
    """Draw ``family`` from ``rows`` into a PNG at ``path`` (Agg backend)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    spec = figure_spec(rows, family)
    scope: dict = {}
    exec(_DRAW_SOURCE, scope)
    fig = scope["draw"](plt, _rows_as_dicts(rows), spec["curves"], spec["panels"], spec["xlabel"], spec["title"])
    path = os.fspath(path)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path
