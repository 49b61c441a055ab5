"""Similarity and image benchmarks with per-category aggregation."""

from __future__ import annotations

import csv
import json
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chamfer import chamfer_l1
from .images import image_rmse, image_ssim
from .mesh import Mesh, load_obj, normalize_mesh, sample_surface

# short column names for the common furniture classes
CATEGORY_ABBREV = {
    "bathtub": "bath",
    "bookshelf": "bkslf",
    "cabinet": "cab",
    "chair": "chr",
    "display": "disp",
    "sofa": "sfa",
    "table": "tbl",
    "bin": "bin",
}


@dataclass
class MetricReport:
    instances: list[dict] = field(default_factory=list)
    excluded: list[dict] = field(default_factory=list)
    metric: str = "cd_l1"

    def per_category(self) -> dict[str, tuple[float, int]]:
        groups: dict[str, list[float]] = {}
        for inst in self.instances:
            groups.setdefault(inst["category"], []).append(inst[self.metric])
        return {c: (float(np.mean(v)), len(v)) for c, v in sorted(groups.items())}

    @property
    def avg_instance(self) -> float | None:
        if not self.instances:
            return None
        return float(np.mean([i[self.metric] for i in self.instances]))

    @property
    def avg_class(self) -> float | None:
        cats = self.per_category()
        if not cats:
            return None
        return float(np.mean([m for m, _ in cats.values()]))

    def weighted_category_mean(self) -> float | None:
        cats = self.per_category()
        if not cats:
            return None
        total = sum(n for _, n in cats.values())
        return sum(m * n for m, n in cats.values()) / total

    def check_aggregation(self, tol: float = 1e-12) -> bool:
        if not self.instances:
            return True
        return abs(self.avg_instance - self.weighted_category_mean()) <= tol

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "instances": self.instances,
            "per_category": {c: {"mean": m, "count": n} for c, (m, n) in self.per_category().items()},
            "avg_cad": self.avg_instance,
            "avg_class": self.avg_class,
            "excluded": self.excluded,
        }

    def to_markdown(self, method: str = "scenesmith") -> str:
        """One-row table: method, avg/CAD, avg/class, then one column per category."""
        if not self.instances:
            return "| Method |\n|---|\n| " + method + " |\n"
        cats = self.per_category()
        head = ["Method", "avg/CAD", "avg/class"] + [CATEGORY_ABBREV.get(c, c) for c in cats]
        row = [method, f"{self.avg_instance:.4f}", f"{self.avg_class:.4f}"] + [f"{m:.4f}" for m, _ in cats.values()]
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head), "| " + " | ".join(row) + " |"]
        if self.excluded:
            lines.append("")
            lines += [f"excluded: {e['pair_id']} ({e['error']})" for e in self.excluded]
        return "\n".join(lines) + "\n"


def _mesh(x) -> Mesh:
    return x if isinstance(x, Mesh) else load_obj(x)


def run_similarity_benchmark(pairs, n: int = 10000, seed: int = 0, fit: str = "extent") -> MetricReport:
    """normalize -> sample -> chamfer for each (gt, retrieved, category) pair.

    Both meshes in a pair are sampled with the same seed, so an identity pair
    scores exactly zero.  Failed pairs are excluded and listed.
    """
    report = MetricReport()
    for idx, (gt, ret, cat) in enumerate(pairs):
        pid = f"{idx:05d}"
        gid = gt.id if isinstance(gt, Mesh) else str(gt)
        rid = ret.id if isinstance(ret, Mesh) else str(ret)
        try:
            a = sample_surface(normalize_mesh(_mesh(gt), fit), n, seed)
            b = sample_surface(normalize_mesh(_mesh(ret), fit), n, seed)
            cd = chamfer_l1(a, b)
        except (OSError, ValueError) as exc:
            report.excluded.append({"pair_id": pid, "gt": gid, "retrieved": rid, "error": str(exc)})
            continue
        report.instances.append({"pair_id": pid, "gt": gid, "retrieved": rid, "category": cat, "cd_l1": cd})
    return report


def read_pairs_csv(path) -> list[tuple[str, str, str]]:
    """Rows ``gt,retrieved,category``; relative paths resolve against the CSV's folder."""
    base = Path(path).parent
    out = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "gt":
                continue
            gt, ret, cat = (s.strip() for s in row[:3])
            out.append((str(base / gt), str(base / ret), cat))
    return out


class ExternalMetric:
    """Subprocess plug-in: ``cmd a.png b.png`` prints one float."""

    def __init__(self, command: list[str], name: str = "lpips", timeout: float = 60.0):
        self.command = list(command)
        self.name = name
        self.timeout = timeout

    def __call__(self, a_path, b_path) -> float:
        res = subprocess.run(
            self.command + [str(a_path), str(b_path)], capture_output=True, text=True, timeout=self.timeout, check=True
        )
        return float(res.stdout.strip().split()[-1])


@dataclass
class ImageReport:
    instances: list[dict] = field(default_factory=list)
    excluded: list[dict] = field(default_factory=list)
    metrics: tuple[str, ...] = ("rmse", "ssim")

    def means(self) -> dict[str, float]:
        return {m: float(np.mean([i[m] for i in self.instances])) for m in self.metrics if self.instances}

    def to_dict(self) -> dict:
        return {"instances": self.instances, "means": self.means(), "excluded": self.excluded}

    def to_markdown(self, method: str = "scenesmith") -> str:
        head = ["Method"] + [m.upper() for m in self.metrics]
        means = self.means()
        row = [method] + [f"{means[m]:.4f}" if m in means else "-" for m in self.metrics]
        return "| " + " | ".join(head) + " |\n|" + "---|" * len(head) + "\n| " + " | ".join(row) + " |\n"


def run_image_benchmark(pairs, external: ExternalMetric | None = None) -> ImageReport:
    """Pairs of (scan crop, rendered view[, category]) image paths."""
    metrics = ("rmse", "ssim") + ((external.name,) if external else ())
    report = ImageReport(metrics=metrics)
    for idx, pair in enumerate(pairs):
        a, b = pair[0], pair[1]
        pid = f"{idx:05d}"
        try:
            inst = {"pair_id": pid, "a": str(a), "b": str(b), "rmse": image_rmse(a, b), "ssim": image_ssim(a, b)}
            if external:
                inst[external.name] = external(a, b)
        except (OSError, ValueError, subprocess.SubprocessError) as exc:
            report.excluded.append({"pair_id": pid, "error": str(exc)})
            continue
        report.instances.append(inst)
    return report


def write_report(report, out) -> None:
    out = Path(out)
    if out.suffix == ".md":
        out.write_text(report.to_markdown())
    else:
        out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
