"""Synthetic innings data with known generating parameters.

Covariates are simulated first:

* runs: ``round(exp(N(log runs_median, runs_log_sd)))`` clipped to [1, 298];
* year: uniform within each player's career window, careers starting
  uniformly in ``year_range``;
* opposition, home/away, match innings and toss: uniform over their levels.

The design (knots) is built from those covariates, the truth is expressed in
that design's coordinates, and wickets are drawn from the truncated CMP at
the implied means.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, InningsRecord
from .design import basis_matrix, build_design
from .model import CmpRegression, ParamLayout, ParamVector, ETA_SD

TEST_NATIONS = (
    "Australia",
    "England",
    "South Africa",
    "West Indies",
    "New Zealand",
    "India",
    "Pakistan",
    "Sri Lanka",
    "Zimbabwe",
    "Bangladesh",
    "Ireland",
    "Afghanistan",
)


class GenerationError(ValueError):
    pass


@dataclass
class SyntheticLayout:
    n_players: int = 50
    innings_per_player: int | list[int] = 60
    oppositions: tuple[str, ...] = TEST_NATIONS
    year_range: tuple[int, int] = (1980, 2020)
    career_years: int = 12
    runs_median: float = 40.0
    runs_log_sd: float = 0.8

    def innings(self) -> list[int]:
        if isinstance(self.innings_per_player, int):
            counts = [self.innings_per_player] * self.n_players
        else:
            counts = list(self.innings_per_player)
        if len(counts) != self.n_players or min(counts) < 1 or self.n_players < 1:
            raise GenerationError("layout needs a positive innings count for every player")
        return counts


def default_runs_curve(log_r: np.ndarray) -> np.ndarray:
    """Log mean wickets against log runs: rising, flattening above ~80 runs."""
    r = np.exp(log_r)
    return np.log(0.06 * r**0.85 / (1.0 + r / 150.0))


@dataclass
class SyntheticTruth:
    """How the generating parameters are chosen.

    Explicit arrays override the random draws. ``eta`` may be given per
    player; otherwise it is drawn from N(0, eta_sd).
    """

    theta_sd: float = 0.3
    eta_sd: float = ETA_SD
    eta: list[float] | None = None
    theta: list[float] | None = None
    omega_level_sd: float = 0.15
    omega_wiggle_sd: float = 0.08
    zeta2: float = math.log(0.92)
    xi: tuple[float, float, float] = (math.log(1.07), math.log(1.03), 0.0)
    gamma: float = math.log(1.12)
    beta: list[float] | None = None


def _simulate_covariates(layout: SyntheticLayout, rng: np.random.Generator) -> Dataset:
    counts = layout.innings()
    lo, hi = layout.year_range
    span = max(hi - lo - layout.career_years, 0)
    players = [f"P{i + 1:03d}" for i in range(layout.n_players)]
    n_opp = len(layout.oppositions)
    records = []
    for i, n in enumerate(counts):
        start = lo + int(rng.integers(0, span + 1))
        end = min(start + layout.career_years, hi)
        years = np.sort(rng.integers(start, end + 1, size=n))
        runs = np.clip(np.round(np.exp(rng.normal(math.log(layout.runs_median), layout.runs_log_sd, size=n))), 1, 298)
        opp = rng.integers(0, n_opp, size=n)
        home = rng.integers(1, 3, size=n)
        inns = rng.integers(1, 5, size=n)
        toss = rng.integers(1, 3, size=n)
        month = rng.integers(1, 13, size=n)
        day = rng.integers(1, 29, size=n)
        for k in range(n):
            records.append(
                InningsRecord(
                    player=i,
                    year=int(years[k]),
                    runs=int(runs[k]),
                    wickets=0,
                    opposition=int(opp[k]),
                    home_away=int(home[k]),
                    match_innings=int(inns[k]),
                    toss=int(toss[k]),
                    date=f"{int(years[k]):04d}-{int(month[k]):02d}-{int(day[k]):02d}",
                )
            )
    # every opposition level must occur so its spline is defined
    seen = {r.opposition for r in records}
    if len(seen) < n_opp:
        raise GenerationError("some oppositions have no innings; increase the number of innings")
    return Dataset(records, players, list(layout.oppositions), source="synthetic").relabelled()


def _truth_params(model: CmpRegression, truth: SyntheticTruth, rng: np.random.Generator) -> ParamVector:
    d = model.design
    lay = model.layout
    p = model.zero_params()
    if truth.beta is not None:
        p.beta = np.asarray(truth.beta, dtype=float)
    else:
        lo, hi = d.runs_spec.boundary_knots
        grid = np.linspace(lo, hi, 400)
        B = basis_matrix(d.runs_spec, grid)
        p.beta = np.linalg.lstsq(B, default_runs_curve(grid), rcond=None)[0]
    full = np.zeros(d.omega.n_full)
    for o, size in enumerate(d.omega.sizes):
        level = rng.normal(0.0, truth.omega_level_sd)
        wiggle = np.cumsum(rng.normal(0.0, truth.omega_wiggle_sd, size))
        full[d.omega.offsets[o] : d.omega.offsets[o] + size] = level + wiggle - wiggle.mean()
    p.omega = full[d.omega.free_to_full]
    if truth.theta is not None:
        theta = np.asarray(truth.theta, dtype=float)
    else:
        theta = rng.normal(0.0, truth.theta_sd, lay.n_players)
    p.theta = theta - theta.mean()
    p.eta = np.asarray(truth.eta, dtype=float) if truth.eta is not None else rng.normal(0.0, truth.eta_sd, lay.n_players)
    if p.eta.shape != (lay.n_players,):
        raise GenerationError("eta must have one value per player")
    p.zeta2 = float(truth.zeta2)
    p.xi = np.asarray(truth.xi, dtype=float)
    p.gamma = float(truth.gamma)
    return p


def generate_synthetic(layout: SyntheticLayout, truth: SyntheticTruth | None = None, seed: int = 0):
    """Simulate a dataset; returns ``(dataset, truth_params, model)``."""
    truth = truth or SyntheticTruth()
    rng = np.random.default_rng(seed)
    covariates = _simulate_covariates(layout, rng)
    model = CmpRegression(build_design(covariates))
    params = _truth_params(model, truth, rng)
    lin = model.linear_predictor(params)
    if np.any(lin >= math.log(10.0)):
        raise GenerationError("truth implies a mean of 10 or more wickets for some innings")
    wickets = model.simulate(params, rng)
    records = [
        replace(r, wickets=int(w)) for r, w in zip(covariates.records, wickets)
    ]
    dataset = Dataset(records, covariates.players, covariates.oppositions, source=f"synthetic(seed={seed})")
    model = CmpRegression(build_design(dataset))
    return dataset, params, model


def truth_to_json(params: ParamVector, model: CmpRegression, dataset: Dataset) -> str:
    lay = ParamLayout.of(params)
    names = lay.names(model.design, dataset.players, dataset.oppositions)
    return json.dumps({"parameters": dict(zip(names, params.to_flat().tolist()))}, indent=1)
