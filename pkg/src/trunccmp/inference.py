"""Posterior summaries: HDIs, player rankings, game effects, fitted curves,
and posterior predictive checks.

Every transformed quantity (``exp(theta)``, ``nu = exp(eta)``, curve values)
is computed draw by draw and only then averaged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import T_MAX, Dataset
from .design import basis_matrix, log_runs
from .model import CmpRegression
from .sampler import PosteriorDraws

MIN_HDI_SAMPLES = 100


def hdi(samples, level: float = 0.95) -> tuple[float, float]:
    """Shortest interval holding ``ceil(level * n)`` of the sorted samples.

    Among equally short windows the one with the smallest lower bound wins.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < MIN_HDI_SAMPLES:
        raise ValueError(f"HDI needs at least {MIN_HDI_SAMPLES} samples, got {n}")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    # guard against level * n landing a hair above an integer
    m = max(1, math.ceil(level * n - 1e-9))
    widths = x[m - 1 :] - x[: n - m + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + m - 1])


def _hdi_rows(values: np.ndarray, level: float) -> np.ndarray:
    """HDI of each column of an (n_samples, k) array; returns (k, 2)."""
    return np.array([hdi(values[:, j], level) for j in range(values.shape[1])]).reshape(-1, 2)


@dataclass(frozen=True)
class ParameterSummary:
    name: str
    mean: float
    sd: float
    hdi_low: float
    hdi_high: float


def parameter_summary(draws: PosteriorDraws, level: float = 0.95) -> list[ParameterSummary]:
    pooled = draws.pooled()
    bands = _hdi_rows(pooled, level)
    mean, sd = pooled.mean(axis=0), pooled.std(axis=0, ddof=1)
    return [ParameterSummary(n, float(mean[j]), float(sd[j]), *map(float, bands[j])) for j, n in enumerate(draws.names)]


@dataclass(frozen=True)
class PlayerRow:
    rank: int
    player: str
    debut: int
    innings: int
    mean_exp_theta: float
    sd_exp_theta: float
    mean_nu: float


def player_table(draws: PosteriorDraws, dataset: Dataset) -> list[PlayerRow]:
    """Players ranked by posterior mean of ``exp(theta)``, highest first."""
    theta = draws.block("theta").reshape(-1, dataset.n_players)
    eta = draws.block("eta").reshape(-1, dataset.n_players)
    rate = np.exp(theta)
    e_rate = rate.mean(axis=0)
    sd_rate = rate.std(axis=0, ddof=1) if rate.shape[0] > 1 else np.zeros(dataset.n_players)
    e_nu = np.exp(eta).mean(axis=0)
    debut = dataset.player_debut()
    innings = dataset.player_innings()
    order = np.argsort(-e_rate, kind="stable")
    return [
        PlayerRow(r + 1, dataset.players[i], int(debut[i]), int(innings[i]), float(e_rate[i]), float(sd_rate[i]), float(e_nu[i]))
        for r, i in enumerate(order)
    ]


GAME_EFFECTS = (
    ("xi2", "second innings"),
    ("xi3", "third innings"),
    ("xi4", "fourth innings"),
    ("zeta2", "away"),
    ("gamma", "won toss, first innings"),
)


@dataclass(frozen=True)
class EffectRow:
    parameter: str
    label: str
    mean: float
    hdi_low: float
    hdi_high: float


def game_effects_table(draws: PosteriorDraws, level: float = 0.95) -> list[EffectRow]:
    """Multiplicative game effects ``exp(.)`` with posterior mean and HDI."""
    rows = []
    for name, label in GAME_EFFECTS:
        v = np.exp(draws.column(name).ravel())
        rows.append(EffectRow(name, label, float(v.mean()), *hdi(v, level)))
    return rows


@dataclass(frozen=True)
class Curve:
    x: np.ndarray
    mean: np.ndarray
    hdi_low: np.ndarray
    hdi_high: np.ndarray


def _curve(x, B: np.ndarray, coef_draws: np.ndarray, level: float) -> Curve:
    values = np.exp(coef_draws @ B.T)  # (n_samples, n_grid)
    band = _hdi_rows(values, level)
    return Curve(np.asarray(x), values.mean(axis=0), band[:, 0], band[:, 1])


def runs_curve(draws: PosteriorDraws, model: CmpRegression, runs=None, level: float = 0.95) -> Curve:
    """Mean wickets against runs conceded for the reference innings.

    Home, first innings, toss lost, an average player (theta = 0) against
    the reference opposition in the reference year, where its term is 0.
    """
    runs = np.arange(1, 301) if runs is None else np.asarray(runs)
    B = basis_matrix(model.design.runs_spec, log_runs(runs))
    return _curve(runs, B, draws.block("beta").reshape(-1, B.shape[1]), level)


def opposition_curves(draws: PosteriorDraws, model: CmpRegression, level: float = 0.95) -> dict[int, Curve]:
    """Multiplicative opposition effect by calendar year, one curve per opposition.

    Years run over each opposition's boundary knots in whole years.
    """
    d = model.design
    free = draws.block("omega").reshape(-1, d.omega.n_free)
    full = free @ d.omega.expand.T
    out = {}
    for o, spec in d.opp_specs.items():
        lo, hi = spec.boundary_knots
        years = np.arange(math.ceil(lo), math.floor(hi) + 1)
        if years.size == 0:
            years = np.array([0.5 * (lo + hi)])
        B = basis_matrix(spec, years)
        out[o] = _curve(years, B, d.omega.block(full.T, o).T, level)
    return out


@dataclass(frozen=True)
class PpcTable:
    """Observed vs posterior predictive proportions for counts 0..T.

    ``se`` is the standard deviation of an observed proportion under the
    posterior predictive (binomial noise given a draw plus spread across
    draws) combined with the Monte Carlo error of ``expected``.
    """

    counts: np.ndarray
    observed_n: np.ndarray
    observed: np.ndarray
    expected: np.ndarray
    se: np.ndarray
    n_draws: int

    def z(self) -> np.ndarray:
        return np.divide(self.observed - self.expected, self.se, out=np.zeros_like(self.se), where=self.se > 0)


def posterior_predictive_check(
    draws: PosteriorDraws,
    model: CmpRegression,
    rng: np.random.Generator,
    n_draws: int = 1000,
    wickets=None,
) -> PpcTable:
    """Average per-record truncated-CMP pmfs over a subsample of draws.

    ``wickets`` overrides the observed counts (e.g. a replicate data set on
    the same covariates); by default the model's own data are used.
    """
    pooled = draws.pooled()
    if pooled.shape[0] == 0:
        raise ValueError("no posterior draws")
    take = min(n_draws, pooled.shape[0])
    idx = np.sort(rng.choice(pooled.shape[0], size=take, replace=False))
    n = model.n_records
    agg = np.empty((take, T_MAX + 1))
    binom = np.empty((take, T_MAX + 1))
    for s, j in enumerate(idx):
        P = model.pmf_matrix(model.layout.unflatten(pooled[j]))
        if not np.all(np.isfinite(P)):
            raise ValueError("a posterior draw implies an invalid mean")
        agg[s] = P.mean(axis=0)
        binom[s] = (P * (1.0 - P)).sum(axis=0) / (n * n)
    expected = agg.mean(axis=0)
    spread = agg.var(axis=0, ddof=1) if take > 1 else np.zeros(T_MAX + 1)
    se = np.sqrt(binom.mean(axis=0) + spread + spread / take)
    x = model.x if wickets is None else np.asarray(wickets)
    observed_n = np.bincount(x, minlength=T_MAX + 1)
    return PpcTable(np.arange(T_MAX + 1), observed_n, observed_n / n, expected, se, take)
