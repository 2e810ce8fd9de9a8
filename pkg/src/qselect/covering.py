"""Coverings of the unit cube by small boxes with light overlaps.

The construction cuts every coordinate axis into L cells.  Inside each
cell it picks the subinterval of length t'/L with the least marginal mass
and uses it as the overlap strip between two consecutive intervals.  The
boxes are products of these intervals.  Masses are exact for piecewise
constant densities because the cumulative integral is piecewise bilinear.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ParamOutOfRange, ResolutionTooCoarse, ValidationError


@dataclass(frozen=True)
class DensityGrid:
    """Nonnegative piecewise constant density on n^m equal cells of [0, 1]^m."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim not in (1, 2) or (v.ndim == 2 and v.shape[0] != v.shape[1]):
            raise ValidationError("density must be a vector or a square array")
        if (v < 0).any() or not np.isfinite(v).all():
            raise ValidationError("density values must be finite and nonnegative")
        if v.sum() <= 0:
            raise ValidationError("density has zero mass")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        # cumulative integral on cell corners
        cw = 1.0 / v.shape[0]
        C = v * cw**v.ndim
        for ax in range(v.ndim):
            C = np.cumsum(C, axis=ax)
        C = np.pad(C, [(1, 0)] * v.ndim)
        edges = np.linspace(0, 1, v.shape[0] + 1)
        object.__setattr__(self, "_cum", RegularGridInterpolator((edges,) * v.ndim, C, method="linear"))

    @property
    def m(self) -> int:
        return self.values.ndim

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def total(self) -> float:
        return float(self.values.sum() / self.n**self.m)

    def box_mass(self, lo, hi):
        """Mass of boxes prod [lo_k, hi_k] clipped to the cube; rows of lo/hi give several boxes."""
        lo = np.clip(np.asarray(lo, dtype=float), 0, 1)
        hi = np.clip(np.asarray(hi, dtype=float), 0, 1)
        single = lo.ndim == 1
        lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
        total = np.zeros(len(lo))
        for corner in product((0, 1), repeat=self.m):
            pt = np.where(np.array(corner) == 1, hi, lo)
            total += (-1) ** (self.m - sum(corner)) * self._cum(pt)
        total = np.where((hi > lo).all(axis=1), np.maximum(total, 0.0), 0.0)
        return float(total[0]) if single else total

    def marginal(self, k: int) -> np.ndarray:
        """Density of the k-th coordinate marginal, on the same n cells."""
        if self.m == 1:
            return self.values.copy()
        return self.values.mean(axis=1 - k)

    @classmethod
    def from_csv(cls, path) -> "DensityGrid":
        v = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(v.ravel() if 1 in v.shape else v)


def uniform_density(m: int, n: int = 64) -> DensityGrid:
    return DensityGrid(np.ones((n,) * m))


def spike_density(m: int, n: int = 64, center=None, width: int = 1) -> DensityGrid:
    """Background 1e-3 plus a block of ``width`` cells carrying unit weight."""
    v = np.full((n,) * m, 1e-3)
    c = [n // 3] * m if center is None else [int(round(ci * n)) for ci in np.broadcast_to(center, (m,))]
    v[tuple(slice(ci, ci + width) for ci in c)] = n**m / width**m
    return DensityGrid(v)


def strip_density(n: int = 64, width: int = 2) -> DensityGrid:
    """Mass concentrated on a thin band around the diagonal of the square."""
    i, j = np.indices((n, n))
    return DensityGrid(np.where(np.abs(i - j) < width, 1.0, 1e-4))


def left_half_density(L: int, n: int = 64) -> DensityGrid:
    """1D density that lives on the left half of each of L cells."""
    x = (np.arange(n) + 0.5) / n
    frac = (x * L) % 1.0
    return DensityGrid(np.where(frac < 0.5, 1.0, 0.0))


def random_density(m: int, rng: np.random.Generator, n: int = 64) -> DensityGrid:
    """Mixture of a few anisotropic bumps, a lognormal texture and occasional point masses."""
    x = (np.arange(n) + 0.5) / n
    grids = np.meshgrid(*([x] * m), indexing="ij")
    v = np.zeros((n,) * m)
    for _ in range(rng.integers(1, 6)):
        c = rng.random(m)
        s = rng.uniform(0.01, 0.3, m)
        v += rng.uniform(0.1, 1.0) * np.exp(-sum(((g - ci) / si) ** 2 for g, ci, si in zip(grids, c, s)))
    v *= np.exp(rng.normal(0, 0.5, v.shape))
    if rng.random() < 0.3:
        idx = tuple(rng.integers(0, n, m))
        v[idx] += v.sum() * rng.uniform(0.1, 1.0)
    return DensityGrid(v + 1e-12)


# --- construction ----------------------------------------------------------------

def cell_count(a: float, m: int) -> int:
    """Smallest L with 2 sqrt(m) / L < a."""
    return int(np.floor(2 * np.sqrt(m) / a)) + 1


def inverse_integer_below(x: float) -> Fraction:
    """Largest 1/k <= x with k a positive integer (requires x > 0)."""
    if x <= 0:
        raise ParamOutOfRange("no inverse integer below a nonpositive number")
    return Fraction(1, max(1, int(np.ceil(1 / x - 1e-12))))


def _interval_mass_1d(g: np.ndarray):
    n = len(g)
    F = np.concatenate([[0.0], np.cumsum(g) / n])
    edges = np.linspace(0, 1, n + 1)
    return lambda lo, hi: np.interp(hi, edges, F) - np.interp(lo, edges, F)


@dataclass(frozen=True)
class Selection:
    centers: np.ndarray
    ratios: np.ndarray


def marginal_select(g, L: int, t_prime) -> Selection:
    """Per cell [l/L, (l+1)/L], the lightest of the 1/t' subintervals of length t'/L.

    The lightest one carries at most a fraction t' of the cell mass, since
    the subintervals partition the cell.
    """
    g = np.asarray(g, dtype=float)
    t_prime = Fraction(t_prime).limit_denominator(10**6)
    if t_prime.numerator != 1:
        raise ValidationError("t' must be the inverse of an integer")
    K = t_prime.denominator
    if K * L > len(g):
        raise ResolutionTooCoarse(f"subintervals of length 1/{K * L} are finer than the grid 1/{len(g)}")
    mass = _interval_mass_1d(g)
    centers, ratios = [], []
    for ell in range(L):
        lo = ell / L + np.arange(K) / (K * L)
        sub = mass(lo, lo + 1 / (K * L))
        best = int(np.argmin(sub))
        cell = mass(ell / L, (ell + 1) / L)
        centers.append(lo[best] + 0.5 / (K * L))
        ratios.append(sub[best] / cell if cell > 0 else 0.0)
    return Selection(np.array(centers), np.array(ratios))


@dataclass(frozen=True)
class BoxCover:
    """Open boxes, given by lower and upper corners, with the parameters used."""

    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)
    index: np.ndarray = field(repr=False)
    a: float
    t: float
    t_prime: float
    L: int

    @property
    def m(self) -> int:
        return self.lower.shape[1]

    def __len__(self) -> int:
        return len(self.lower)

    def to_dict(self) -> dict:
        return {"a": self.a, "t": self.t, "t_prime": self.t_prime, "L": self.L,
                "boxes": [{"lower": lo.tolist(), "upper": hi.tolist(), "index": ix.tolist()}
                          for lo, hi, ix in zip(self.lower, self.upper, self.index)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def without(self, j: int) -> "BoxCover":
        keep = np.arange(len(self)) != j
        return BoxCover(self.lower[keep], self.upper[keep], self.index[keep], self.a, self.t, self.t_prime, self.L)


def axis_intervals(centers: np.ndarray, L: int, t_prime: float) -> np.ndarray:
    """L + 1 intervals whose consecutive overlaps are the selected strips."""
    half = t_prime / (2 * L)
    lo = np.concatenate([[0.0], centers - half])
    hi = np.concatenate([centers + half, [1.0]])
    return np.column_stack([lo, hi])


def cut_cover(f: DensityGrid, a: float, t: float) -> BoxCover:
    if not 0 < a <= 0.25:
        raise ParamOutOfRange("a must lie in (0, 1/4]")
    if not 0 < t < 1:
        raise ParamOutOfRange("t must lie in (0, 1)")
    m = f.m
    L = cell_count(a, m)
    # at least two candidate strips per cell, otherwise the strips fill whole cells
    tp = min(inverse_integer_below(t * a * L / 2), Fraction(1, 2))
    axes = [axis_intervals(marginal_select(f.marginal(k), L, tp).centers, L, float(tp)) for k in range(m)]
    idx = np.array(list(product(range(L + 1), repeat=m)))
    lower = np.stack([axes[k][idx[:, k], 0] for k in range(m)], axis=1)
    upper = np.stack([axes[k][idx[:, k], 1] for k in range(m)], axis=1)
    return BoxCover(lower, upper, idx, a, t, float(tp), L)


# --- verification ----------------------------------------------------------------

@dataclass(frozen=True)
class CoverReport:
    covers: bool
    diameters_ok: bool
    overlap_ok: bool
    separation_ok: bool
    max_diameter: float
    overlap_mass: float
    overlap_ratio: float
    separation: float
    separation_over_ta: float
    neighbors_only: bool

    @property
    def ok(self) -> bool:
        return self.covers and self.diameters_ok and self.overlap_ok and self.separation_ok


def _separation(cover: BoxCover) -> tuple[float, bool]:
    """min_j dist(core_j, cube minus U_j), where core_j is the part of the cube covered by U_j alone.

    Computed on the arrangement cut out by all box faces: every cell of it
    lies inside or outside each box.
    """
    m = cover.m
    cuts = [np.unique(np.concatenate([[0.0, 1.0], cover.lower[:, k], cover.upper[:, k]])) for k in range(m)]
    cells = [np.column_stack([c[:-1], c[1:]]) for c in cuts]
    cells = [c[c[:, 1] - c[:, 0] > 1e-13] for c in cells]
    grid = np.stack(np.meshgrid(*[np.arange(len(c)) for c in cells], indexing="ij"), -1).reshape(-1, m)
    clo = np.stack([cells[k][grid[:, k], 0] for k in range(m)], axis=1)
    chi = np.stack([cells[k][grid[:, k], 1] for k in range(m)], axis=1)
    best = np.inf
    for start in range(0, len(clo), 2048):
        lo, hi = clo[start:start + 2048, None], chi[start:start + 2048, None]
        inside = np.all((cover.lower[None] <= lo + 1e-13) & (cover.upper[None] >= hi - 1e-13), axis=2)
        if not inside.any(axis=1).all():
            return 0.0, False
        core = inside.sum(axis=1) == 1
        if not core.any():
            continue
        owner = np.argmax(inside[core], axis=1)
        blo, bhi = cover.lower[owner], cover.upper[owner]
        lo_gap = np.where(blo > 0, lo[core, 0] - blo, np.inf)
        hi_gap = np.where(bhi < 1, bhi - hi[core, 0], np.inf)
        best = min(best, float(np.minimum(lo_gap, hi_gap).min()))
    return best, True


def verify_cover(cover: BoxCover, f: DensityGrid, a: float, t: float) -> CoverReport:
    """Recompute coverage, diameters, overlap mass and separation from the boxes alone."""
    m, n = f.m, f.n
    centers = (np.arange(n) + 0.5) / n
    pts = np.stack(np.meshgrid(*([centers] * m), indexing="ij"), axis=-1).reshape(-1, m)

    def contains(p):
        lo_ok = (cover.lower[None] < p[:, None]) | (cover.lower[None] == 0) & (p[:, None] >= 0)
        hi_ok = (p[:, None] < cover.upper[None]) | (cover.upper[None] == 1) & (p[:, None] <= 1)
        return np.all(lo_ok & hi_ok, axis=2)

    covered = bool(contains(pts).any(axis=1).all())
    sep, covered_cells = _separation(cover)
    covered = covered and covered_cells
    diam = np.sqrt(((cover.upper - cover.lower) ** 2).sum(axis=1))
    i, j = np.triu_indices(len(cover), 1)
    lo = np.maximum(cover.lower[i], cover.lower[j])
    hi = np.minimum(cover.upper[i], cover.upper[j])
    hit = (hi > lo + 1e-12).all(axis=1)
    overlap = float(f.box_mass(lo[hit], hi[hit]).sum()) if hit.any() else 0.0
    neighbors_only = bool((np.abs(cover.index[i[hit]] - cover.index[j[hit]]).max(axis=1, initial=0) <= 1).all())
    total = f.total
    tol = 1e-12
    return CoverReport(
        covers=covered,
        diameters_ok=bool(diam.max() < a),
        overlap_ok=bool(overlap <= 4 * m * t * total * (1 + tol)),
        separation_ok=bool(sep >= cover.t_prime / cover.L * (1 - 1e-9)),
        max_diameter=float(diam.max()),
        overlap_mass=float(overlap),
        overlap_ratio=float(overlap / total),
        separation=sep,
        separation_over_ta=float(sep / (t * a)),
        neighbors_only=neighbors_only,
    )


def naive_cover(m: int, L: int, overlap: float = 0.5, a: float = 0.2, t: float = 0.1) -> BoxCover:
    """Uniform product cover whose neighbours share a fraction ``overlap`` of a cell."""
    w = overlap / (2 * L)
    edges = np.arange(L) / L
    axis = np.column_stack([np.clip(edges - w, 0, 1), np.clip(edges + 1 / L + w, 0, 1)])
    idx = np.array(list(product(range(L), repeat=m)))
    lower = np.stack([axis[idx[:, k], 0] for k in range(m)], axis=1)
    upper = np.stack([axis[idx[:, k], 1] for k in range(m)], axis=1)
    return BoxCover(lower, upper, idx, a, t, overlap, L)
