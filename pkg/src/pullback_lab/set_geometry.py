"""Finite point clouds in a normed phase space.

Bounded sets are represented by finite samples. This module provides the
Hausdorff semidistance, diameters, open-ball neighborhoods and covering
estimates of the ball measure of noncompactness, with the bracket
beta <= kappa <= 2 beta for the Kuratowski measure.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

INFLATE_EPS = 1e-9
DEFAULT_MAX_CENTERS = 4096
EXACT_MAX_POINTS = 12


class CloudError(ValueError):
    """Invalid cloud or incompatible pair of clouds."""


@dataclass(frozen=True)
class PointCloud:
    """Nonempty finite set of equal-dimension state vectors."""

    points: np.ndarray
    norm_tag: str = "euclidean"
    label: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise CloudError("a cloud needs at least one point and a 2-D layout")
        if not np.all(np.isfinite(pts)):
            raise CloudError(f"cloud {self.label!r} has non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)

    def relabel(self, label: str) -> "PointCloud":
        return PointCloud(self.points, self.norm_tag, label)

    def union(self, other: "PointCloud", label: str | None = None) -> "PointCloud":
        _check_compatible(self, other)
        return PointCloud(np.vstack([self.points, other.points]), self.norm_tag,
                          label if label is not None else f"{self.label} | {other.label}")

    @classmethod
    def concat(cls, clouds: list["PointCloud"], label: str = "") -> "PointCloud":
        if not clouds:
            raise CloudError("cannot concatenate an empty list of clouds")
        for c in clouds[1:]:
            _check_compatible(clouds[0], c)
        return cls(np.vstack([c.points for c in clouds]), clouds[0].norm_tag, label)

    # -- io ---------------------------------------------------------------
    def save(self, path: str | Path) -> None:
        """CSV with one point per row plus a ``.meta.json`` sidecar."""
        path = Path(path)
        np.savetxt(path, self.points, delimiter=",", fmt="%.17g")
        meta = {"label": self.label, "norm_tag": self.norm_tag, "dim": self.dim,
                "count": len(self)}
        path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PointCloud":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".meta.json").read_text())
        pts = np.loadtxt(path, delimiter=",", ndmin=2)
        if pts.shape != (meta["count"], meta["dim"]):
            raise CloudError(f"{path}: shape {pts.shape} disagrees with metadata")
        return cls(pts, meta["norm_tag"], meta["label"])


def _check_compatible(U: PointCloud, V: PointCloud) -> None:
    if U.dim != V.dim:
        raise CloudError(f"dimension mismatch: {U.dim} vs {V.dim}")
    if U.norm_tag != V.norm_tag:
        raise CloudError(f"norm mismatch: {U.norm_tag!r} vs {V.norm_tag!r}")


def hausdorff_semidist(U: PointCloud, V: PointCloud, chunk: int = 4096) -> float:
    """sup over u in U of the distance from u to V; zero iff U is inside V."""
    _check_compatible(U, V)
    best = 0.0
    for i in range(0, len(U), chunk):
        d = cdist(U.points[i:i + chunk], V.points)
        best = max(best, float(d.min(axis=1).max()))
    return best


def diameter(C: PointCloud) -> float:
    """Largest pairwise distance."""
    if len(C) < 2:
        return 0.0
    return float(pdist(C.points).max())


def neighborhood_inflate(A: PointCloud, r: float, directions_per_point: int,
                         seed: int = 0, eps: float = INFLATE_EPS) -> PointCloud:
    """Add points at distance r(1-eps) around every point of A.

    Directions are uniform on the sphere; in dimension one they alternate
    between +1 and -1 so that two directions give both neighbors.
    """
    if not r > 0:
        raise CloudError(f"inflation radius must be positive, got {r}")
    if directions_per_point < 1:
        raise CloudError("need at least one direction per point")
    n, d = A.points.shape
    if d == 1:
        signs = np.where(np.arange(directions_per_point) % 2 == 0, 1.0, -1.0)
        dirs = np.broadcast_to(signs[None, :, None], (n, directions_per_point, 1))
    else:
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((n, directions_per_point, d))
        dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    new = A.points[:, None, :] + r * (1.0 - eps) * dirs
    return PointCloud(np.vstack([A.points, new.reshape(-1, d)]), A.norm_tag,
                      f"O_{r:g}({A.label})")


# ---------------------------------------------------------------------------
# covers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoverEstimate:
    """Cover of a cloud by balls centered at cloud points.

    ``success`` is False when the greedy pass hit its center cap; in that case
    ``centers`` holds the centers chosen before giving up.
    """

    radius: float
    centers: np.ndarray
    method: Literal["greedy", "exact-brute-force"]
    success: bool = True
    center_index: tuple[int, ...] = field(default=())

    @property
    def n_centers(self) -> int:
        return len(self.centers)


def _greedy_centers(pts: np.ndarray, radius: float, cap: int) -> tuple[list[int], bool]:
    """Farthest-point greedy: the next center is the worst-covered point."""
    dist = np.linalg.norm(pts - pts[0], axis=1)
    centers = [0]
    while True:
        far = int(np.argmax(dist))
        if dist[far] <= radius:
            return centers, True
        if len(centers) >= cap:
            return centers, False
        centers.append(far)
        np.minimum(dist, np.linalg.norm(pts - pts[far], axis=1), out=dist)


def verify_cover(B: PointCloud, cover: CoverEstimate) -> bool:
    """Post-hoc check that every point sits within the radius of a center."""
    if len(cover.centers) == 0:
        return False
    d = cdist(B.points, np.asarray(cover.centers)).min(axis=1)
    return bool(np.all(d <= cover.radius * (1 + 1e-12) + 1e-15))


def ball_measure_greedy(B: PointCloud, radius: float,
                        max_centers: int = DEFAULT_MAX_CENTERS) -> CoverEstimate:
    """Try to cover B by balls of the given radius; a failed attempt is reported."""
    if not radius > 0:
        raise CloudError(f"radius must be positive, got {radius}")
    idx, ok = _greedy_centers(B.points, radius, max_centers)
    return CoverEstimate(float(radius), B.points[idx], "greedy", ok, tuple(idx))


def _candidate_radii(B: PointCloud) -> np.ndarray:
    if len(B) < 2:
        return np.array([0.0])
    return np.unique(np.concatenate([[0.0], pdist(B.points)]))


def ball_measure_upper(B: PointCloud, tol: float = 1e-9,
                       max_centers: int = DEFAULT_MAX_CENTERS) -> CoverEstimate:
    """Least radius at which the greedy cover succeeds with at most
    ``max_centers`` centers.

    Any optimal radius among centers drawn from the cloud is a pairwise
    distance, so the search runs over the sorted distances; ``tol`` only
    guards the comparison. Greedy success is monotone in the radius, so a
    binary search is exact for the greedy procedure.
    """
    radii = _candidate_radii(B)

    def ok(r: float) -> bool:
        return _greedy_centers(B.points, r + tol * 0.5, max_centers)[1]

    lo, hi = 0, radii.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(radii[mid]):
            hi = mid
        else:
            lo = mid + 1
    r = float(radii[lo])
    idx, _ = _greedy_centers(B.points, r + tol * 0.5, max_centers)
    return CoverEstimate(r, B.points[idx], "greedy", True, tuple(idx))


def ball_measure_exact(B: PointCloud, k_max: int) -> float:
    """Least r such that at most k_max cloud points cover B within r."""
    n = len(B)
    if n > EXACT_MAX_POINTS:
        raise CloudError(f"exact mode limited to {EXACT_MAX_POINTS} points, got {n}")
    if k_max < 1:
        raise CloudError("k_max must be at least 1")
    if k_max >= n:
        return 0.0
    D = squareform(pdist(B.points))
    best = np.inf
    for combo in itertools.combinations(range(n), k_max):
        best = min(best, float(D[:, combo].min(axis=1).max()))
    return best


def _k_colorable(adj: np.ndarray, k: int) -> bool:
    """Backtracking k-coloring of a small graph (vertices in degree order)."""
    n = adj.shape[0]
    order = list(np.argsort(-adj.sum(axis=1), kind="stable"))
    colors = [-1] * n

    def place(pos: int, used: int) -> bool:
        if pos == n:
            return True
        v = order[pos]
        banned = {colors[u] for u in range(n) if adj[v, u] and colors[u] >= 0}
        for c in range(min(used + 1, k)):
            if c not in banned:
                colors[v] = c
                if place(pos + 1, max(used, c + 1)):
                    return True
                colors[v] = -1
        return False

    return place(0, 0)


def kappa_exact(B: PointCloud, k_max: int | None = None) -> float:
    """Kuratowski measure of a small cloud: the least achievable largest
    group diameter over partitions into at most k_max groups.

    With k_max unset every point may form its own group and the result is 0;
    the finite-set value is only informative for a bounded number of pieces.
    """
    n = len(B)
    if n > EXACT_MAX_POINTS:
        raise CloudError(f"exact mode limited to {EXACT_MAX_POINTS} points, got {n}")
    k = n if k_max is None else k_max
    if k >= n:
        return 0.0
    D = squareform(pdist(B.points))
    radii = _candidate_radii(B)
    lo, hi = 0, radii.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _k_colorable(D > radii[mid], k):
            hi = mid
        else:
            lo = mid + 1
    return float(radii[lo])


def kappa_bounds(B: PointCloud, tol: float = 1e-9,
                 max_centers: int = DEFAULT_MAX_CENTERS) -> tuple[float, float]:
    """Bracket (beta_hat, 2 beta_hat) from the greedy ball-measure estimate."""
    beta = ball_measure_upper(B, tol, max_centers).radius
    return beta, 2.0 * beta
