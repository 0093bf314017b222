"""Report rendering: delimited tables, json-lines, and companion figures.

Every report is a (columns, rows) pair.  The CLI prints an aligned table or
json-lines to stdout and, when an output directory is given, writes both a
.tsv file and a .png chart next to each other.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .audit import ErrorRateReport
from .consistency import DisagreementReport, DuplicateConflictStats, Tier
from .workflow import WorkflowState

TIER_COLORS = {Tier.HIGH: "#c6e0b4", Tier.MEDIUM: "#ffe699", Tier.LOW: "#fce4d6"}

Row = Sequence[object]


def _fmt(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def render_table(columns: Sequence[str], rows: Sequence[Row]) -> str:
    cells = [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(col), *(len(r[i]) for r in cells)) if cells else len(col)
              for i, col in enumerate(columns)]
    lines = ["  ".join(col.ljust(w) for col, w in zip(columns, widths)).rstrip()]
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def render_json_lines(columns: Sequence[str], rows: Sequence[Row]) -> str:
    return "\n".join(json.dumps(dict(zip(columns, row))) for row in rows)


def render(columns: Sequence[str], rows: Sequence[Row], format: str = "table") -> str:
    if format == "json-lines":
        return render_json_lines(columns, rows)
    return render_table(columns, rows)


def write_tsv(columns: Sequence[str], rows: Sequence[Row], path: Path) -> None:
    with path.open("w") as fh:
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


# -- consistency -------------------------------------------------------------

CONSISTENCY_COLUMNS = ("attribute", "n_d", "n_images", "consistency", "tier")


def consistency_rows(reports: list[DisagreementReport]) -> list[Row]:
    ordered = sorted(reports, key=lambda r: -r.n_d)
    return [(r.attribute, r.n_d, r.n_images, r.consistency, r.tier.value)
            for r in ordered]


def consistency_figure(reports: list[DisagreementReport], path: Path) -> None:
    ordered = sorted(reports, key=lambda r: r.n_d)
    fig, ax = plt.subplots(figsize=(7, max(3, 0.22 * len(ordered))))
    colors = [TIER_COLORS[r.tier] for r in ordered]
    ax.barh([r.attribute for r in ordered], [r.n_d for r in ordered],
            color=colors, edgecolor="#666666", linewidth=0.4)
    ax.set_xlabel("annotation-pass disagreements")
    ax.set_title("Two-pass disagreement per attribute")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


# -- duplicate-pair inconsistency ---------------------------------------------

PIN_COLUMNS = ("attribute", "n_differ", "n_n", "n_p", "p_in")


def pin_rows(stats: list[DuplicateConflictStats],
             exclude: Sequence[str] = ()) -> list[Row]:
    kept = [s for s in stats if s.attribute not in set(exclude)]
    ordered = sorted(kept, key=lambda s: -s.p_in)
    return [(s.attribute, s.n_differ, s.n_n, s.n_p, round(s.p_in, 3))
            for s in ordered]


def pin_figure(stats: list[DuplicateConflictStats], path: Path,
               exclude: Sequence[str] = ()) -> None:
    kept = sorted((s for s in stats if s.attribute not in set(exclude)),
                  key=lambda s: s.p_in)
    fig, ax = plt.subplots(figsize=(7, max(3, 0.22 * len(kept))))
    ax.barh([s.attribute for s in kept], [s.p_in for s in kept],
            color="#7aa6c2", edgecolor="#666666", linewidth=0.4)
    ax.axvline(1.0, color="#c0392b", linestyle="--", linewidth=1,
               label="random-equivalent")
    ax.set_xlabel("inconsistency level over duplicate pairs")
    ax.set_title("Duplicate-pair label inconsistency")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


# -- audit error rates ---------------------------------------------------------

ERROR_COLUMNS = ("attribute", "n_n", "n_p", "err_n", "err_p",
                 "ci_n_lo", "ci_n_hi", "ci_p_lo", "ci_p_hi", "info_not_visible")


def error_rows(reports: list[ErrorRateReport]) -> list[Row]:
    rows = []
    for r in reports:
        neg, pos = r.negative, r.positive
        rows.append((
            r.attribute,
            neg.n if neg else None, pos.n if pos else None,
            round(100 * neg.err, 2) if neg else None,
            round(100 * pos.err, 2) if pos else None,
            round(100 * neg.ci[0], 2) if neg else None,
            round(100 * neg.ci[1], 2) if neg else None,
            round(100 * pos.ci[0], 2) if pos else None,
            round(100 * pos.ci[1], 2) if pos else None,
            (neg.info_not_visible if neg else 0) + (pos.info_not_visible if pos else 0),
        ))
    return rows


def error_figure(reports: list[ErrorRateReport], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    attrs = [r.attribute for r in reports]
    x = range(len(attrs))
    for offset, (which, color) in enumerate(
            (("negative", "#7aa6c2"), ("positive", "#d98866"))):
        vals, errs, pos = [], [[], []], []
        for i, r in enumerate(reports):
            stratum = getattr(r, which)
            if stratum is None:
                continue
            pos.append(i + (offset - 0.5) * 0.35)
            vals.append(100 * stratum.err)
            errs[0].append(100 * (stratum.err - stratum.ci[0]))
            errs[1].append(100 * (stratum.ci[1] - stratum.err))
        if pos:
            ax.bar(pos, vals, width=0.35, yerr=errs, capsize=3,
                   color=color, label=f"original {which}")
    ax.set_xticks(list(x))
    ax.set_xticklabels(attrs, rotation=45, ha="right")
    ax.set_ylabel("estimated error rate (%)")
    ax.set_title("Audited label error rates (95% Wilson intervals)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


# -- workflow ---------------------------------------------------------------------

WORKFLOW_COLUMNS = ("votes", "size", "decision", "audited_error",
                    "ci_lo", "ci_hi")


def workflow_rows(state: WorkflowState) -> list[Row]:
    rows = []
    for b in sorted(state.bins, key=lambda b: b.votes):
        ci = b.audited_ci or (None, None)
        rows.append((b.votes, len(b.members), b.decision.value,
                     b.audited_error, ci[0], ci[1]))
    return rows


def workflow_figure(state: WorkflowState, path: Path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    rounds = [h["round"] for h in state.history]
    ax1.plot(rounds, [h["cleaned"] for h in state.history], "o-",
             label="cleaned pool")
    ax1.plot(rounds, [h["uncleaned"] for h in state.history], "s-",
             label="uncleaned pool")
    ax1.set_xlabel("round")
    ax1.set_ylabel("images")
    ax1.set_title("Pool sizes at round start")
    ax1.legend()

    bins = sorted(state.bins, key=lambda b: b.votes)
    ax2.bar([str(b.votes) for b in bins], [len(b.members) for b in bins],
            color="#7aa6c2")
    ax2.set_xlabel("ensemble TRUE votes")
    ax2.set_ylabel("bin size")
    ax2.set_title(f"Agreement bins, round {state.round} ({state.status.value})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
