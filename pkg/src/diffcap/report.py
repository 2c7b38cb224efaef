"""Evaluation reports: assemble metric summaries and write them as structured
JSON, tab-delimited text, and a rendered figure."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .inference import decode_multi, decode_single
from .metrics import bleu, cider, rouge_l
from .training import ModelCheckpoint, TrainingExample, perplexity

REPORT_FIELDS = ("bleu1", "bleu2", "bleu3", "bleu4", "rougeL", "cider",
                 "perplexity", "lenRatio")


def build_report(model: ModelCheckpoint, examples: list[TrainingExample],
                 setting: str = "multi",
                 rng: np.random.Generator | None = None) -> dict:
    """Metric report over a split.

    In the multi setting each hypothesis is the concatenation of the decoded
    sentences (conditioned on the ground-truth sentence count) scored against
    the concatenated annotation. In the single setting one decoded sentence is
    scored against all annotation sentences as separate references.
    """
    if setting not in ("single", "multi"):
        raise InvalidInputError(f"unknown evaluation setting {setting!r}")
    rng = rng if rng is not None else np.random.default_rng(0)
    usable = [ex for ex in examples if ex.k >= 1]
    if not usable:
        raise InvalidInputError("no examples with clusters to evaluate")
    hyps, refsets = [], []
    for ex in usable:
        if setting == "multi":
            sents = decode_multi(model, ex, len(ex.sentences), rng=rng)
            hyps.append([t for s in sents for t in s])
            refsets.append([[t for s in ex.sentences for t in s]])
        else:
            hyps.append(decode_single(model, ex, rng=rng))
            refsets.append([list(s) for s in ex.sentences])
    hyp_mean = float(np.mean([len(h) for h in hyps]))
    ref_mean = float(np.mean([np.mean([len(r) for r in refs]) for refs in refsets]))
    report = {
        "setting": setting,
        "examples": len(usable),
        "bleu1": bleu(hyps, refsets, 1),
        "bleu2": bleu(hyps, refsets, 2),
        "bleu3": bleu(hyps, refsets, 3),
        "bleu4": bleu(hyps, refsets, 4),
        "rougeL": rouge_l(hyps, refsets),
        "cider": cider(hyps, refsets),
        "perplexity": perplexity(model, usable),
        "lenRatio": hyp_mean / ref_mean if ref_mean > 0 else 0.0,
    }
    return report


def write_report(report: dict, out_dir) -> dict[str, Path]:
    """Write report.json, report.tsv, and metrics.png into a directory."""
    from .viz import render_metric_bars

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    tsv_path = out_dir / "report.tsv"
    with open(tsv_path, "w", encoding="utf-8") as fh:
        for key in sorted(report):
            fh.write(f"{key}\t{report[key]}\n")
    fig_path = render_metric_bars(
        {k: report[k] for k in REPORT_FIELDS if k in report}, out_dir / "metrics.png")
    return {"json": json_path, "tsv": tsv_path, "figure": fig_path}


def format_report(report: dict) -> str:
    return "\n".join(f"{key}\t{report[key]}" for key in sorted(report))
