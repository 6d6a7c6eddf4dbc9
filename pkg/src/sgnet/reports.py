"""Versioned JSON reports and their plain-text table views."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import stats

SCHEMA_VERSION = 1
METRIC_KEYS = ("dice", "precision", "recall", "hd95")


class ReportError(ValueError):
    pass


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _cohort(records) -> dict:
    out = {"n": len(records)}
    for key in METRIC_KEYS:
        values = [r[key] for r in records]
        # subject-index order, fixed reduction
        entry = {"mean": float(np.mean(values)) if values else float("nan")}
        if len(values) >= 2:
            s = stats.summarize(values)
            entry.update(sd=s.sd, ci_low=s.ci_low, ci_high=s.ci_high)
        out[key] = entry
    out["flagged_subjects"] = sum(1 for r in records if r["flags"])
    return out


def metrics_report(model_info: dict, split: str, subjects) -> dict:
    """``subjects`` is an iterable of ``(subject_id, SubjectMetrics)``."""
    records = [
        {"id": sid, "dice": m.dice, "precision": m.precision, "recall": m.recall, "hd95": m.hd95, "flags": list(m.flags)}
        for sid, m in subjects
    ]
    return {
        "schema": "sgnet-metrics",
        "schema_version": SCHEMA_VERSION,
        "model": model_info,
        "split": split,
        "subjects": records,
        "cohort": _cohort(records),
    }


def load_metrics_report(path) -> dict:
    try:
        rep = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ReportError(f"{path}: not valid JSON ({exc})") from exc
    if rep.get("schema") != "sgnet-metrics":
        raise ReportError(f"{path}: not a metrics report")
    if rep.get("schema_version") != SCHEMA_VERSION:
        raise ReportError(f"{path}: unsupported schema version {rep.get('schema_version')}")
    return rep


def _fmt(v, digits=4):
    if isinstance(v, float):
        if np.isnan(v):
            return "nan"
        return f"{v:.{digits}f}"
    return str(v)


def table(headers, rows) -> str:
    cells = [list(map(str, headers))] + [[_fmt(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def metrics_table(rep: dict) -> str:
    rows = [[r["id"], r["dice"], r["precision"], r["recall"], r["hd95"], ",".join(r["flags"]) or "-"] for r in rep["subjects"]]
    c = rep["cohort"]
    rows.append(["MEAN", c["dice"]["mean"], c["precision"]["mean"], c["recall"]["mean"], c["hd95"]["mean"], ""])
    title = f"model={rep['model'].get('name', rep['model'].get('kind'))} split={rep['split']}\n"
    return title + table(["subject", "dice", "precision", "recall", "hd95_mm", "flags"], rows)


def comparison(reports: list, reference: str, metrics=METRIC_KEYS, alpha: float = 0.05) -> dict:
    """Per-model summaries plus paired tests of every model against ``reference``."""
    names = [r["model"]["name"] for r in reports]
    if len(set(names)) != len(names):
        raise ReportError(f"model names must be unique, got {names}")
    if reference not in names:
        raise ReportError(f"reference model {reference!r} not among {names}")
    ids = [r["subjects"] and [s["id"] for s in r["subjects"]] for r in reports]
    ref_rep = reports[names.index(reference)]
    ref_ids = [s["id"] for s in ref_rep["subjects"]]
    for name, sid in zip(names, ids):
        if sorted(sid) != sorted(ref_ids):
            raise ReportError(f"report {name!r} covers different subjects than {reference!r}")
    k = max(1, len(reports) - 1)

    def column(rep, key):
        by_id = {s["id"]: s[key] for s in rep["subjects"]}
        return [by_id[i] for i in ref_ids]

    models = []
    for name, rep in zip(names, reports):
        entry = {"name": name, "summary": {}, "vs_reference": {}}
        for key in metrics:
            s = stats.summarize(column(rep, key))
            entry["summary"][key] = {"mean": s.mean, "sd": s.sd, "ci_low": s.ci_low, "ci_high": s.ci_high, "n": s.n}
            if name != reference:
                t = stats.paired_t_test(column(rep, key), column(ref_rep, key))
                p_adj = stats.bonferroni(t.p, k)
                entry["vs_reference"][key] = {
                    "t": t.t if np.isfinite(t.t) else ("inf" if t.t > 0 else "-inf"),
                    "df": t.df, "p_raw": t.p, "p_bonferroni": p_adj, "significant": p_adj < alpha,
                }
        models.append(entry)
    return {
        "schema": "sgnet-comparison",
        "schema_version": SCHEMA_VERSION,
        "reference": reference,
        "bonferroni_k": k,
        "alpha": alpha,
        "subjects": ref_ids,
        "models": models,
    }


def comparison_table(cmp: dict) -> str:
    rows = []
    for m in cmp["models"]:
        d = m["summary"]["dice"]
        star = "*" if m["vs_reference"].get("dice", {}).get("significant") else ""
        cell = f"{d['mean']:.2f} ± {d['sd']:.2f} [{d['ci_low']:.2f}, {d['ci_high']:.2f}]{star}"
        p = m["vs_reference"].get("dice", {}).get("p_bonferroni")
        rows.append([
            m["name"], cell, f"{m['summary']['precision']['mean']:.2f}", f"{m['summary']['recall']['mean']:.2f}",
            f"{m['summary']['hd95']['mean']:.2f}", "-" if p is None else f"{p:.4f}",
        ])
    foot = f"* p < {cmp['alpha']} vs. {cmp['reference']} (paired t-test, Bonferroni k={cmp['bonferroni_k']})\n"
    return table(["model", "dice (95% CI)", "precision", "recall", "hd95_mm", "p_adj"], rows) + foot
