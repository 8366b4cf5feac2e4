"""Spline bases and design matrices for the log-linear mean model.

Runs enter through a cubic B-spline in ``log(max(runs, 1))`` with knots at
the quintiles; each opposition gets its own cubic B-spline in calendar year
with knots at decade midpoints (years ending in 5) inside its observed span.
One opposition/year pair is pinned to zero by eliminating a coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .data import Dataset

DEGREE = 3
REFERENCE_OPPOSITION = "Australia"
REFERENCE_YEAR = 2020


@dataclass(frozen=True)
class SplineSpec:
    internal_knots: tuple[float, ...]
    boundary_knots: tuple[float, float]
    degree: int = DEGREE

    def __post_init__(self):
        object.__setattr__(self, "internal_knots", tuple(float(k) for k in self.internal_knots))
        object.__setattr__(self, "boundary_knots", tuple(float(k) for k in self.boundary_knots))
        lo, hi = self.boundary_knots
        if not lo < hi:
            raise ValueError(f"boundary knots must satisfy lo < hi, got {self.boundary_knots}")
        k = np.asarray(self.internal_knots)
        if k.size and (np.any(np.diff(k) < 0) or k[0] <= lo or k[-1] >= hi):
            raise ValueError("internal knots must be non-decreasing and strictly inside the boundary knots")
        if self.degree < 0:
            raise ValueError("degree must be >= 0")

    @property
    def n_basis(self) -> int:
        return len(self.internal_knots) + self.degree + 1

    @property
    def knot_vector(self) -> np.ndarray:
        lo, hi = self.boundary_knots
        p = self.degree
        return np.concatenate([np.full(p + 1, lo), self.internal_knots, np.full(p + 1, hi)])


def basis_matrix(spec: SplineSpec, x) -> np.ndarray:
    """Evaluate every basis function at each point of ``x``; shape (n, n_basis).

    Points outside the boundary knots are clamped to the nearest boundary.
    Uses the triangular Cox-de Boor recursion on the non-zero span, so each
    row has at most ``degree + 1`` non-zero entries.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo, hi = spec.boundary_knots
    x = np.clip(x, lo, hi)
    t = spec.knot_vector
    p = spec.degree
    n = spec.n_basis
    span = np.searchsorted(t, x, side="right") - 1
    span = np.clip(span, p, n - 1)
    m = x.shape[0]
    vals = np.zeros((m, p + 1))
    vals[:, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(m)
        for r in range(j):
            temp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    out = np.zeros((m, n))
    rows = np.arange(m)
    for r in range(p + 1):
        out[rows, span - p + r] = vals[:, r]
    return out


def bspline_basis(spec: SplineSpec, x: float) -> np.ndarray:
    return basis_matrix(spec, [x])[0]


def log_runs(runs) -> np.ndarray:
    """Runs on the spline scale; zero-run innings are treated as one run."""
    return np.log(np.maximum(np.asarray(runs, dtype=float), 1.0))


def runs_spline_spec(runs) -> SplineSpec:
    """Quintile knots of log runs (type-7 percentiles), boundaries at min/max."""
    lr = log_runs(runs)
    if np.unique(lr).size < 5:
        raise ValueError("need at least 5 distinct runs values to place quintile knots")
    knots = np.percentile(lr, [20, 40, 60, 80])
    return SplineSpec(tuple(knots), (float(lr.min()), float(lr.max())))


def decade_midpoints(lo: float, hi: float) -> list[int]:
    """Years ending in 5 strictly between ``lo`` and ``hi``."""
    first = int(math.floor(lo / 10.0)) * 10 + 5
    return [y for y in range(first, int(math.ceil(hi)) + 1, 10) if lo < y < hi]


def opposition_spline_spec(years) -> SplineSpec:
    years = np.asarray(years, dtype=float)
    if years.size == 0:
        raise ValueError("opposition has no records")
    lo, hi = float(years.min()), float(years.max())
    if lo == hi:
        # single observed year: nominal one-year span around it
        lo, hi = lo - 0.5, hi + 0.5
    return SplineSpec(tuple(decade_midpoints(lo, hi)), (lo, hi))


def opposition_spline_specs(dataset: Dataset) -> dict[int, SplineSpec]:
    return {o: opposition_spline_spec(y) for o, y in dataset.opposition_years().items()}


@dataclass(frozen=True)
class OmegaLayout:
    """Map between full per-opposition spline coefficients and free ones.

    ``full = expand @ free``; the reference opposition's ``dependent``
    coefficient is a fixed linear combination of its other coefficients so
    that its spline is exactly zero at the reference year.
    """

    offsets: tuple[int, ...]
    sizes: tuple[int, ...]
    reference: int
    reference_year: float
    dependent: int
    expand: np.ndarray = field(repr=False)
    free_to_full: np.ndarray = field(repr=False)

    @property
    def n_full(self) -> int:
        return int(sum(self.sizes))

    @property
    def n_free(self) -> int:
        return self.n_full - 1

    def full(self, free: np.ndarray) -> np.ndarray:
        return self.expand @ free

    def block(self, full: np.ndarray, o: int) -> np.ndarray:
        return full[self.offsets[o] : self.offsets[o] + self.sizes[o]]

    def free_label(self, f: int) -> tuple[int, int]:
        g = int(self.free_to_full[f])
        o = int(np.searchsorted(self.offsets, g, side="right") - 1)
        return o, g - self.offsets[o]


def omega_layout(opp_specs: dict[int, SplineSpec], reference: int, reference_year: float) -> OmegaLayout:
    sizes = [opp_specs[o].n_basis for o in range(len(opp_specs))]
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
    n_full = int(sum(sizes))
    b_ref = bspline_basis(opp_specs[reference], reference_year)
    d_local = int(np.argmax(b_ref))
    dep = int(offsets[reference] + d_local)
    free_to_full = np.array([g for g in range(n_full) if g != dep])
    expand = np.zeros((n_full, n_full - 1))
    expand[free_to_full, np.arange(n_full - 1)] = 1.0
    for q in range(sizes[reference]):
        if q != d_local:
            f = int(np.searchsorted(free_to_full, offsets[reference] + q))
            expand[dep, f] = -b_ref[q] / b_ref[d_local]
    return OmegaLayout(tuple(int(v) for v in offsets), tuple(sizes), reference, float(reference_year), dep, expand, free_to_full)


@dataclass(frozen=True)
class DesignMatrices:
    runs_spec: SplineSpec
    opp_specs: dict[int, SplineSpec]
    omega: OmegaLayout
    runs_basis: np.ndarray  # (N, n_runs_basis)
    opp_basis_full: sp.csr_matrix  # (N, n_full omega), block-sparse by opposition
    omega_design: sp.csc_matrix  # (N, n_free omega)
    player: np.ndarray
    opposition: np.ndarray
    away: np.ndarray  # 1.0 where home_away == 2
    match_innings: np.ndarray  # 1..4
    toss_first: np.ndarray  # 1.0 where toss won and first innings
    wickets: np.ndarray
    n_players: int

    @property
    def n_records(self) -> int:
        return self.runs_basis.shape[0]


def resolve_reference(dataset: Dataset, name: str = REFERENCE_OPPOSITION) -> int:
    try:
        return dataset.oppositions.index(name)
    except ValueError:
        raise ValueError(f"reference opposition {name!r} not present in data (levels: {dataset.oppositions})") from None


def build_design(
    dataset: Dataset,
    runs_spec: SplineSpec | None = None,
    opp_specs: dict[int, SplineSpec] | None = None,
    reference_opposition: str = REFERENCE_OPPOSITION,
    reference_year: float = REFERENCE_YEAR,
) -> DesignMatrices:
    cols = dataset.columns()
    if runs_spec is None:
        runs_spec = runs_spline_spec(cols["runs"])
    if opp_specs is None:
        opp_specs = opposition_spline_specs(dataset)
    n_opp = len(dataset.oppositions)
    for k, o in enumerate(cols["opposition"]):
        if o not in opp_specs:
            raise ValueError(f"record {k}: opposition {dataset.oppositions[o]!r} has no spline spec")
    if set(opp_specs) != set(range(n_opp)):
        raise ValueError("opposition spline specs must cover exactly the dataset's opposition levels")
    ref = resolve_reference(dataset, reference_opposition)
    layout = omega_layout(opp_specs, ref, reference_year)

    runs_basis = basis_matrix(runs_spec, log_runs(cols["runs"]))
    n = len(dataset)
    rows, colz, vals = [], [], []
    for o in range(n_opp):
        idx = np.flatnonzero(cols["opposition"] == o)
        if idx.size == 0:
            continue
        b = basis_matrix(opp_specs[o], cols["year"][idx])
        r, c = np.nonzero(b)
        rows.append(idx[r])
        colz.append(layout.offsets[o] + c)
        vals.append(b[r, c])
    opp_full = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(colz))), shape=(n, layout.n_full)
    )
    omega_design = sp.csc_matrix(opp_full @ sp.csr_matrix(layout.expand))
    omega_design.eliminate_zeros()
    omega_design.sort_indices()
    return DesignMatrices(
        runs_spec=runs_spec,
        opp_specs=dict(opp_specs),
        omega=layout,
        runs_basis=runs_basis,
        opp_basis_full=opp_full,
        omega_design=omega_design,
        player=cols["player"].copy(),
        opposition=cols["opposition"].copy(),
        away=(cols["home_away"] == 2).astype(float),
        match_innings=cols["match_innings"].copy(),
        toss_first=((cols["toss"] == 1) & (cols["match_innings"] == 1)).astype(float),
        wickets=cols["wickets"].copy(),
        n_players=dataset.n_players,
    )
