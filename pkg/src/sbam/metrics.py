"""Performance-improvement-over-masking-ratio curves and the sweep that feeds them.

``pimr`` rescales one model's performances to [0, 1] using that model's own
extremes; ``global_pimr`` uses the extremes pooled over every model compared.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from sbam.errors import DegenerateSweepError, ParameterError
from sbam.masking import MaskingConfig
from sbam.trainer import TrainConfig, evaluate, train, with_ratio
from sbam.tokenize import normalize_targets, patchify

PERFORMANCE_HEADER = "# performance=neg_holdout_loss"
CSV_FIELDS = ("model", "ratio", "performance", "pimr", "global_pimr")


@dataclass(frozen=True)
class SweepRecord:
    model_name: str
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(r), float(p)) for r, p in self.points)
        ratios = [r for r, _ in pts]
        if any(b <= a for a, b in zip(ratios, ratios[1:])):
            raise ParameterError(f"{self.model_name}: ratios must be strictly increasing, got {ratios}")
        object.__setattr__(self, "points", pts)

    @property
    def ratios(self) -> list[float]:
        return [r for r, _ in self.points]

    @property
    def performances(self) -> list[float]:
        return [p for _, p in self.points]


def _rescale(rec: SweepRecord, lo: float, hi: float) -> list[tuple[float, float]]:
    return [(r, (p - lo) / (hi - lo)) for r, p in rec.points]


def pimr(rec: SweepRecord, reference: str = "observed") -> list[tuple[float, float]]:
    """Rescale a record's performances by its own range.

    ``reference="observed"`` (default) uses the minimum and maximum observed
    performance. ``reference="lowest_ratio"`` anchors 0 at the performance of
    the lowest masking ratio instead, keeping the maximum as 1; values can
    then be negative.
    """
    if len(rec.points) < 2:
        raise ParameterError(f"{rec.model_name}: PIMR needs at least 2 points")
    perf = rec.performances
    if reference == "observed":
        lo = min(perf)
    elif reference == "lowest_ratio":
        lo = perf[0]
    else:
        raise ParameterError(f"unknown PIMR reference {reference!r}")
    hi = max(perf)
    if hi == lo:
        raise DegenerateSweepError(f"{rec.model_name}: performance range is zero, PIMR undefined")
    return _rescale(rec, lo, hi)


def global_pimr(recs) -> list[list[tuple[float, float]]]:
    """Rescale every record by the min and max performance pooled across all records."""
    recs = list(recs)
    pooled = [p for rec in recs for p in rec.performances]
    if not pooled:
        raise ParameterError("global PIMR needs at least one record with points")
    lo, hi = min(pooled), max(pooled)
    if hi == lo:
        raise DegenerateSweepError("pooled performance range is zero, global PIMR undefined")
    return [_rescale(rec, lo, hi) for rec in recs]


def _threads() -> int:
    raw = os.environ.get("SBAM_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ParameterError(f"SBAM_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ParameterError(f"SBAM_THREADS must be >= 0, got {n}")
    return n or (os.cpu_count() or 1)


def holdout_split(n: int, holdout_fraction: float = 0.25) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic split: the last ``ceil(n * fraction)`` items are held out."""
    if n < 2:
        raise ParameterError("a sweep needs at least 2 images (train + holdout)")
    k = min(n - 1, max(1, int(np.ceil(n * holdout_fraction))))
    idx = np.arange(n)
    return idx[: n - k], idx[n - k :]


def sweep(
    strategies,
    ratios,
    data,
    train_cfg: TrainConfig,
    eval_masking: MaskingConfig | None = None,
    eval_seed: int = 12345,
    holdout_fraction: float = 0.25,
    threads: int | None = None,
) -> list[SweepRecord]:
    """Train one model per (strategy, ratio) and score it on held-out images.

    Performance is the negative masked reconstruction loss on the holdout
    split, measured with one fixed evaluation mask protocol (random masking at
    ratio 0.75 by default) so that scores are comparable across training
    ratios.
    """
    ratios = [float(r) for r in ratios]
    if len(ratios) < 2:
        raise ParameterError(f"a sweep needs at least 2 ratios, got {len(ratios)}")
    strategies = list(strategies)
    if not strategies:
        raise ParameterError("a sweep needs at least one strategy")
    data = list(data)
    train_idx, hold_idx = holdout_split(len(data), holdout_fraction)
    train_data = [data[i] for i in train_idx]
    hold_tokens = patchify([data[i] for i in hold_idx], train_cfg.patch_side)
    hold_targets = normalize_targets(hold_tokens, train_cfg.eps)
    eval_masking = eval_masking or MaskingConfig(strategy="random", base_ratio=0.75, delta_r=0.0)

    def cell(strategy: MaskingConfig, ratio: float) -> float:
        cfg = with_ratio(replace(train_cfg, masking=strategy), ratio)
        params, _ = train(train_data, cfg)
        return -evaluate(params, hold_tokens, hold_targets, eval_masking, eval_seed)

    jobs = [(s, r) for s in strategies for r in ratios]
    workers = min(threads or _threads(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            perf = list(pool.map(lambda job: cell(*job), jobs))
    else:
        perf = [cell(*job) for job in jobs]

    records = []
    for i, strategy in enumerate(strategies):
        row = perf[i * len(ratios) : (i + 1) * len(ratios)]
        records.append(SweepRecord(strategy.strategy, tuple(zip(ratios, row))))
    return records


def sweep_rows(recs, reference: str = "observed") -> list[dict]:
    """One row per (model, ratio) with PIMR and global PIMR filled in."""
    recs = list(recs)
    glob = global_pimr(recs)
    rows = []
    for rec, g in zip(recs, glob):
        local = pimr(rec, reference)
        for (ratio, perf), (_, pv), (_, gv) in zip(rec.points, local, g):
            rows.append(
                {"model": rec.model_name, "ratio": ratio, "performance": perf, "pimr": pv, "global_pimr": gv}
            )
    return rows


def format_sweep_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(PERFORMANCE_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for row in rows:
        # repr() round-trips floats exactly
        w.writerow([row["model"]] + [repr(float(row[k])) for k in CSV_FIELDS[1:]])
    return buf.getvalue()


def parse_sweep_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    rows = []
    for row in csv.DictReader(lines):
        rows.append({"model": row["model"], **{k: float(row[k]) for k in CSV_FIELDS[1:]}})
    return rows


def records_from_rows(rows) -> list[SweepRecord]:
    """Regroup parsed CSV rows into records, keeping first-seen model order."""
    grouped: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        grouped.setdefault(row["model"], []).append((row["ratio"], row["performance"]))
    return [SweepRecord(name, tuple(pts)) for name, pts in grouped.items()]
