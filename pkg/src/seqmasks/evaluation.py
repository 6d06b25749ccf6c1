"""Retrieval metrics: CMC/mAP ranking and the 11-view cross-view protocol.

Distances are Euclidean on the raw descriptors; ranking ties break by
gallery index (stable sort), so every number here is deterministic.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

log = logging.getLogger(__name__)

CMC_RANKS = (1, 5, 10, 20)
VIEW_ANGLES = tuple(range(0, 181, 18))  # the 11 canonical views
CONDITIONS = ("NM", "BG", "CL")


@dataclass(frozen=True)
class RetrievalProblem:
    """Query/gallery embeddings plus the metadata the protocols filter on."""

    query_emb: np.ndarray
    gallery_emb: np.ndarray
    query_ids: np.ndarray
    gallery_ids: np.ndarray
    query_cams: np.ndarray | None = None
    gallery_cams: np.ndarray | None = None
    query_views: np.ndarray | None = None
    gallery_views: np.ndarray | None = None
    query_conds: np.ndarray | None = None
    gallery_conds: np.ndarray | None = None

    def __post_init__(self) -> None:
        q, g = np.asarray(self.query_emb), np.asarray(self.gallery_emb)
        if q.ndim != 2 or g.ndim != 2 or q.shape[1] != g.shape[1]:
            raise InvalidInputError("query/gallery embeddings must be 2-D with equal width")
        for name in ("query_ids", "query_cams", "query_views", "query_conds"):
            v = getattr(self, name)
            if v is not None and len(v) != q.shape[0]:
                raise InvalidInputError(f"{name} length must match query count")
        for name in ("gallery_ids", "gallery_cams", "gallery_views", "gallery_conds"):
            v = getattr(self, name)
            if v is not None and len(v) != g.shape[0]:
                raise InvalidInputError(f"{name} length must match gallery count")


@dataclass
class EvalReport:
    """CMC points, mAP, and (when applicable) per-condition view matrices."""

    cmc: dict[int, float] | None = None
    map: float | None = None
    excluded_queries: int = 0
    casia: dict[str, dict] | None = None  # cond -> {matrix, including, excluding}

    def to_dict(self) -> dict:
        out: dict = {"excluded_queries": self.excluded_queries}
        if self.cmc is not None:
            out.update({f"rank{k}": v for k, v in self.cmc.items()})
            out["map"] = self.map
        if self.casia is not None:
            out["casia"] = {
                cond: {
                    "matrix": np.asarray(block["matrix"]).tolist(),
                    "including": block["including"],
                    "excluding": block["excluding"],
                }
                for cond, block in self.casia.items()
            }
        return out

    def write_json(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if self.cmc is not None:
                cols = [f"rank{k}" for k in self.cmc] + ["map"]
                w.writerow(cols)
                w.writerow([self.cmc[k] for k in self.cmc] + [self.map])
            if self.casia is not None:
                w.writerow(["condition", "including", "excluding"])
                for cond, block in self.casia.items():
                    w.writerow([cond, block["including"], block["excluding"]])

    def write_casia_matrices(self, out_dir: Path | str) -> list[Path]:
        """One 11x11 CSV per condition (probe views as rows)."""
        if self.casia is None:
            return []
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for cond, block in self.casia.items():
            path = out_dir / f"casia_rank1_{cond.lower()}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["probe_view"] + [str(v) for v in VIEW_ANGLES])
                for pv, row in zip(VIEW_ANGLES, np.asarray(block["matrix"])):
                    w.writerow([pv] + [f"{x:.6f}" if np.isfinite(x) else "" for x in row])
            paths.append(path)
        return paths


def average_precision(sorted_relevance: Sequence[bool]) -> float:
    """AP of a ranked relevance list: mean of precision@k at the relevant ranks."""
    rel = np.asarray(sorted_relevance, dtype=bool)
    n_rel = int(rel.sum())
    if n_rel == 0:
        raise InvalidInputError("average precision needs at least one relevant item")
    hits = np.cumsum(rel)
    precision_at = hits / np.arange(1, rel.size + 1)
    return float(precision_at[rel].sum() / n_rel)


def _euclidean(q: np.ndarray, g: np.ndarray) -> np.ndarray:
    diff = q[:, None, :].astype(np.float64) - g[None, :, :].astype(np.float64)
    return np.sqrt((diff * diff).sum(axis=-1))


def cmc_map(problem: RetrievalProblem, ranks: Sequence[int] = CMC_RANKS) -> EvalReport:
    """Ranked retrieval with the same-identity-same-camera gallery exclusion.

    CMC saturates at the full-gallery hit rate for ranks beyond the gallery
    size; queries left without any correct match are excluded and counted.
    """
    q = np.asarray(problem.query_emb, dtype=np.float64)
    g = np.asarray(problem.gallery_emb, dtype=np.float64)
    if q.shape[0] < 1 or g.shape[0] < 1:
        raise InvalidInputError("need at least one query and one gallery item")
    q_ids = np.asarray(problem.query_ids)
    g_ids = np.asarray(problem.gallery_ids)
    q_cams = problem.query_cams
    g_cams = problem.gallery_cams

    dist = _euclidean(q, g)
    max_rank = max(ranks)
    hits = np.zeros(max_rank, dtype=np.float64)
    aps: list[float] = []
    excluded = 0
    for i in range(q.shape[0]):
        keep = np.ones(g.shape[0], dtype=bool)
        if q_cams is not None and g_cams is not None:
            keep &= ~((g_ids == q_ids[i]) & (np.asarray(g_cams) == np.asarray(q_cams)[i]))
        order = np.argsort(dist[i][keep], kind="stable")
        matches = (g_ids[keep][order] == q_ids[i])
        if not matches.any():
            excluded += 1
            continue
        first = int(np.flatnonzero(matches)[0])
        if first < max_rank:
            hits[first:] += 1.0
        aps.append(average_precision(matches))
    n_valid = q.shape[0] - excluded
    if n_valid == 0:
        raise InvalidInputError("every query was excluded; nothing to evaluate")
    cmc = {int(k): float(hits[k - 1] / n_valid) for k in ranks}
    return EvalReport(cmc=cmc, map=float(np.mean(aps)), excluded_queries=excluded)


def casia_eval(problem: RetrievalProblem) -> EvalReport:
    """Per-condition 11x11 cross-view rank-1 matrices with both averages.

    Cell (probe view, gallery view) is rank-1 accuracy with the gallery
    restricted to that single view. "Including" averages all 121 cells,
    "excluding" drops the identical-view diagonal; empty cells are left
    absent and skipped by both averages.
    """
    for name in ("query_views", "gallery_views", "query_conds", "gallery_conds"):
        if getattr(problem, name) is None:
            raise InvalidInputError(f"cross-view protocol requires {name}")
    g_conds = np.asarray(problem.gallery_conds)
    if not (g_conds == "NM").all():
        raise InvalidInputError("gallery must contain only normal-walk sequences")

    q = np.asarray(problem.query_emb, dtype=np.float64)
    g = np.asarray(problem.gallery_emb, dtype=np.float64)
    q_ids, g_ids = np.asarray(problem.query_ids), np.asarray(problem.gallery_ids)
    q_views = np.asarray(problem.query_views).astype(int)
    g_views = np.asarray(problem.gallery_views).astype(int)
    q_conds = np.asarray(problem.query_conds)

    dist = _euclidean(q, g)
    casia: dict[str, dict] = {}
    for cond in CONDITIONS:
        matrix = np.full((len(VIEW_ANGLES), len(VIEW_ANGLES)), np.nan)
        for pi, pv in enumerate(VIEW_ANGLES):
            probe_sel = np.flatnonzero((q_conds == cond) & (q_views == pv))
            for gi, gv in enumerate(VIEW_ANGLES):
                gal_sel = np.flatnonzero(g_views == gv)
                if probe_sel.size == 0 or gal_sel.size == 0:
                    log.warning("no data for condition %s probe view %d gallery view %d", cond, pv, gv)
                    continue
                sub = dist[np.ix_(probe_sel, gal_sel)]
                nearest = gal_sel[np.argmin(sub, axis=1)]  # argmin keeps lowest index on ties
                matrix[pi, gi] = float((g_ids[nearest] == q_ids[probe_sel]).mean())
        off_diag = matrix[~np.eye(len(VIEW_ANGLES), dtype=bool)]
        casia[cond] = {
            "matrix": matrix,
            "including": float(np.nanmean(matrix)) if np.isfinite(matrix).any() else float("nan"),
            "excluding": float(np.nanmean(off_diag)) if np.isfinite(off_diag).any() else float("nan"),
        }
    return EvalReport(casia=casia)
