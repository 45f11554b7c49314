"""Summary reports over segmented trips and model results.

Covers the episode-type distribution (counts and cumulative duration),
the context-coverage matrix per episode type and source category, percent
deviations of model-estimated trip figures against ground truth, and mean
judge scores per model.
"""
from __future__ import annotations

import csv
import io
import json
from typing import Dict, List, Optional, Sequence

from .narrate import deviation_stats
from .segment import EpisodeType, Trip

TYPE_LABELS = [t.label for t in (
    EpisodeType.SAILING,
    EpisodeType.TURNING,
    EpisodeType.MANEUVERING,
    EpisodeType.STOPPED,
    EpisodeType.GAP,
)]

COVERAGE_SOURCES = ("geospatial", "weather", "bathymetry")


def _coverage_flags(ep) -> Dict[str, bool]:
    ctx = ep.context
    if ctx is None:
        return {src: False for src in COVERAGE_SOURCES}
    return {
        "geospatial": bool(ctx.placemarks),
        "weather": ctx.wind_beaufort is not None,
        "bathymetry": ctx.sea_depth_m is not None,
    }


def _percent(part: float, whole: float) -> float:
    return 0.0 if whole == 0 else part / whole * 100.0


def _model_section(trips_by_id: Dict[str, Trip], records: Sequence[dict]) -> Dict[str, dict]:
    by_model: Dict[str, List[dict]] = {}
    for rec in records:
        by_model.setdefault(rec["model_id"], []).append(rec)

    out: Dict[str, dict] = {}
    for model_id in sorted(by_model):
        recs = by_model[model_id]
        duration_pairs = []
        distance_pairs = []
        excluded = 0
        advisories = 0
        scores = {"relevance": [], "faithfulness": [], "correctness": []}
        for rec in recs:
            trip = trips_by_id.get(rec["trip_id"])
            stats = rec.get("stats")
            if trip is None or stats is None:
                excluded += 1
            else:
                gt_duration = trip.stats.duration_s
                gt_distance = trip.stats.distance_nm
                if gt_duration > 0 and gt_distance > 0:
                    duration_pairs.append((float(stats["total_duration"]), float(gt_duration)))
                    distance_pairs.append((float(stats["traveled_distance"]), float(gt_distance)))
                else:
                    excluded += 1
                # advisory cross-check: enrichment saw strong wind but the
                # model reported no adverse weather
                strong = trip is not None and any(
                    ep.context is not None
                    and ep.context.wind_beaufort is not None
                    and ep.context.wind_beaufort >= 6
                    for ep in trip.episodes
                )
                if strong and not stats.get("adverse_weather_conditions"):
                    advisories += 1
            verdict = rec.get("verdict")
            if verdict:
                scores["relevance"].append(verdict["relevance_score"])
                scores["faithfulness"].append(verdict["faithfulness_score"])
                scores["correctness"].append(verdict["correctness_score"])

        entry: Dict[str, object] = {"responses": len(recs), "excluded": excluded}
        for label, pairs in (("duration_deviation", duration_pairs),
                             ("distance_deviation", distance_pairs)):
            if pairs:
                ds = deviation_stats(pairs)
                entry[label] = {"mean": ds.mean, "stdev": ds.stdev, "max": ds.max}
            else:
                entry[label] = None
        if scores["relevance"]:
            entry["judge_scores"] = {
                dim: sum(vals) / len(vals) for dim, vals in scores.items()
            }
            entry["judged"] = len(scores["relevance"])
        else:
            entry["judge_scores"] = None
            entry["judged"] = 0
        entry["adverse_weather_advisories"] = advisories
        out[model_id] = entry
    return out


def report(trips: Sequence[Trip], records: Optional[Sequence[dict]] = None) -> dict:
    """Assemble the full report bundle as a plain dict."""
    counts = {label: 0 for label in TYPE_LABELS}
    durations = {label: 0 for label in TYPE_LABELS}
    covered = {label: {src: 0 for src in COVERAGE_SOURCES} for label in TYPE_LABELS}
    for trip in trips:
        for ep in trip.episodes:
            label = ep.type.label
            counts[label] += 1
            durations[label] += ep.stats.duration_s
            for src, hit in _coverage_flags(ep).items():
                if hit:
                    covered[label][src] += 1

    total_eps = sum(counts.values())
    total_dur = sum(durations.values())
    bundle = {
        "trips": {
            "count": len(trips),
            "vessels": len({t.vessel_id for t in trips}),
        },
        "episodes": {
            "total": total_eps,
            "counts": counts,
            "percent": {lb: _percent(counts[lb], total_eps) for lb in TYPE_LABELS},
        },
        "duration": {
            "total_seconds": total_dur,
            "seconds": durations,
            "percent": {lb: _percent(durations[lb], total_dur) for lb in TYPE_LABELS},
        },
        "coverage": {
            lb: {
                src: _percent(covered[lb][src], counts[lb]) for src in COVERAGE_SOURCES
            }
            for lb in TYPE_LABELS
        },
        "models": {},
    }
    if records:
        trips_by_id = {t.trip_id: t for t in trips}
        bundle["models"] = _model_section(trips_by_id, records)
    return bundle


def report_csv(bundle: dict) -> str:
    """Flatten the bundle to section,item,metric,value rows."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["section", "item", "metric", "value"])

    writer.writerow(["trips", "", "count", bundle["trips"]["count"]])
    writer.writerow(["trips", "", "vessels", bundle["trips"]["vessels"]])
    for label in TYPE_LABELS:
        writer.writerow(["episodes", label, "count", bundle["episodes"]["counts"][label]])
        writer.writerow(["episodes", label, "percent", bundle["episodes"]["percent"][label]])
        writer.writerow(["duration", label, "seconds", bundle["duration"]["seconds"][label]])
        writer.writerow(["duration", label, "percent", bundle["duration"]["percent"][label]])
        for src in COVERAGE_SOURCES:
            writer.writerow(["coverage", label, src, bundle["coverage"][label][src]])
    for model_id, entry in bundle["models"].items():
        writer.writerow(["models", model_id, "responses", entry["responses"]])
        writer.writerow(["models", model_id, "excluded", entry["excluded"]])
        for label in ("duration_deviation", "distance_deviation"):
            stats = entry[label]
            if stats:
                for metric in ("mean", "stdev", "max"):
                    writer.writerow(["models", model_id, f"{label}_{metric}", stats[metric]])
        if entry["judge_scores"]:
            for dim, value in entry["judge_scores"].items():
                writer.writerow(["models", model_id, f"judge_{dim}", value])
        writer.writerow(
            ["models", model_id, "adverse_weather_advisories", entry["adverse_weather_advisories"]]
        )
    return buf.getvalue()


def write_report(bundle: dict, out_dir) -> None:
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(bundle, indent=2), encoding="utf-8")
    (out / "report.csv").write_text(report_csv(bundle), encoding="utf-8")
