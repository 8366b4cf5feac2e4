"""Bayesian truncated mean-parameterised CMP regression for wickets.

The mean of each innings' wicket count is log-linear::

    log mu = B_runs(log r) . beta + B_opp,o(year) . omega_o + theta_i
             + zeta_2 I(away) + xi_m + gamma I(toss won) I(first innings)

with ``xi_1 = 0``, ``sum(theta) = 0`` and the reference opposition's spline
pinned to zero at the reference year.  Each player carries a dispersion
``nu_i = exp(eta_i)``.  Given (mu, nu) the rate of the truncated CMP is the
unique root of the finite mean equation, solved per record.

:class:`CachedPosterior` holds per-record linear predictors, log-rates,
variances and log-likelihood terms so that a proposal touching one
coordinate re-solves only the records that coordinate reaches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from . import cmp
from .cmp import SOLVER_MAX_ITER, SOLVER_TOL, fast_stats, log_factorials, solve_log_lambda
from .design import DesignMatrices

T_MAX = cmp.T_MAX
LOG_T = math.log(T_MAX)
LF = log_factorials(T_MAX)

GAME_SD = 0.5 * math.log(2.0)  # zeta, xi, gamma and theta
SPLINE_SD = 1.0  # beta and free omega coordinates
ETA_SD = 0.5 * math.log(3.0)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorScales:
    game: float = GAME_SD
    theta: float = GAME_SD
    spline: float = SPLINE_SD
    eta: float = ETA_SD


@dataclass
class ParamVector:
    beta: np.ndarray
    omega: np.ndarray
    theta: np.ndarray
    zeta2: float
    xi: np.ndarray
    gamma: float
    eta: np.ndarray

    @classmethod
    def zeros(cls, n_beta: int, n_omega: int, n_players: int) -> "ParamVector":
        return cls(np.zeros(n_beta), np.zeros(n_omega), np.zeros(n_players), 0.0, np.zeros(3), 0.0, np.zeros(n_players))

    def to_flat(self) -> np.ndarray:
        return np.concatenate(
            [self.beta, self.omega, self.theta, [self.zeta2], self.xi, [self.gamma], self.eta]
        ).astype(float)

    def copy(self) -> "ParamVector":
        return ParamLayout.of(self).unflatten(self.to_flat())


@dataclass(frozen=True)
class ParamLayout:
    """Positions of each parameter block in the flat vector."""

    n_beta: int
    n_omega: int
    n_players: int

    @classmethod
    def of(cls, p: ParamVector) -> "ParamLayout":
        return cls(len(p.beta), len(p.omega), len(p.theta))

    @classmethod
    def for_design(cls, d: DesignMatrices) -> "ParamLayout":
        return cls(d.runs_basis.shape[1], d.omega.n_free, d.n_players)

    @property
    def slices(self) -> dict[str, slice]:
        out = {}
        pos = 0
        for name, size in (
            ("beta", self.n_beta),
            ("omega", self.n_omega),
            ("theta", self.n_players),
            ("zeta", 1),
            ("xi", 3),
            ("gamma", 1),
            ("eta", self.n_players),
        ):
            out[name] = slice(pos, pos + size)
            pos += size
        return out

    @property
    def size(self) -> int:
        return self.n_beta + self.n_omega + 2 * self.n_players + 5

    def unflatten(self, x: np.ndarray) -> ParamVector:
        s = self.slices
        x = np.asarray(x, dtype=float)
        return ParamVector(
            beta=x[s["beta"]].copy(),
            omega=x[s["omega"]].copy(),
            theta=x[s["theta"]].copy(),
            zeta2=float(x[s["zeta"]][0]),
            xi=x[s["xi"]].copy(),
            gamma=float(x[s["gamma"]][0]),
            eta=x[s["eta"]].copy(),
        )

    def names(self, design: DesignMatrices | None = None, players=None, oppositions=None) -> list[str]:
        names = [f"beta[{p + 1}]" for p in range(self.n_beta)]
        for f in range(self.n_omega):
            if design is not None:
                o, q = design.omega.free_label(f)
                oname = oppositions[o] if oppositions is not None else str(o)
                names.append(f"omega[{oname},{q + 1}]")
            else:
                names.append(f"omega[{f + 1}]")
        pl = players if players is not None else [str(i) for i in range(self.n_players)]
        names += [f"theta[{p}]" for p in pl]
        names += ["zeta2", "xi2", "xi3", "xi4", "gamma"]
        names += [f"eta[{p}]" for p in pl]
        return names


def linear_predictor(p: ParamVector, d: DesignMatrices, index=None):
    """log mu for every record, or for the records selected by ``index``."""
    if index is None:
        index = slice(None)
    omega_term = d.omega_design @ p.omega
    xi_full = np.concatenate([[0.0], p.xi])
    lp = (
        d.runs_basis[index] @ p.beta
        + omega_term[index]
        + p.theta[d.player[index]]
        + p.zeta2 * d.away[index]
        + xi_full[d.match_innings[index] - 1]
        + p.gamma * d.toss_first[index]
    )
    return lp


# ---------------------------------------------------------------------------
# compiled likelihood kernels
# ---------------------------------------------------------------------------


@nb.njit(cache=True)
def _record_loglik(lin, player, nu_p, ctab, x, lf, out_a, out_v, out_ll):
    """Cold-start solve for every record. Returns False if any record is invalid."""
    ok = True
    for k in range(lin.shape[0]):
        if not (lin[k] < LOG_T):
            out_ll[k] = -np.inf
            out_a[k] = np.nan
            out_v[k] = np.nan
            ok = False
            continue
        p = player[k]
        a, lg, v, status = solve_log_lambda(math.exp(lin[k]), nu_p[p], ctab[p], lf, np.nan, SOLVER_TOL, SOLVER_MAX_ITER)
        if status != 0:
            out_ll[k] = -np.inf
            out_a[k] = np.nan
            out_v[k] = np.nan
            ok = False
            continue
        out_a[k] = a
        out_v[k] = v
        out_ll[k] = x[k] * a - nu_p[p] * lf[x[k]] - lg
    return ok


@nb.njit(cache=True)
def _stage_shift(idx, coef, sign, delta, lin, loga, var, player, nu_p, ctab, x, lf, ll, off, b_lin, b_a, b_v, b_ll):
    """Stage log mu += delta * coef (or * sign when coef is empty) on ``idx``.

    Writes candidate values into the buffers from position ``off`` and
    returns the log-likelihood change, or -inf if any record becomes invalid.
    """
    tot = 0.0
    use_coef = coef.shape[0] > 0
    for j in range(idx.shape[0]):
        k = idx[j]
        dl = delta * (coef[j] if use_coef else sign)
        l = lin[k] + dl
        if not (l < LOG_T):
            return -np.inf
        p = player[k]
        nu = nu_p[p]
        mu = math.exp(l)
        a0 = loga[k] + math.exp(lin[k]) * dl / var[k] if var[k] > 0.0 else np.nan
        a, lg, v, status = solve_log_lambda(mu, nu, ctab[p], lf, a0, SOLVER_TOL, SOLVER_MAX_ITER)
        if status != 0:
            return -np.inf
        nl = x[k] * a - nu * lf[x[k]] - lg
        b_lin[off + j] = l
        b_a[off + j] = a
        b_v[off + j] = v
        b_ll[off + j] = nl
        tot += nl - ll[k]
    return tot


@nb.njit(cache=True)
def _stage_nu(idx, nu_new, c_new, lin, loga, var, nu_old, x, lf, ll, b_lin, b_a, b_v, b_ll):
    """Stage a dispersion change for one player's records."""
    tot = 0.0
    dnu = nu_new - nu_old
    for j in range(idx.shape[0]):
        k = idx[j]
        mu = math.exp(lin[k])
        a, lg, v, status = solve_log_lambda(mu, nu_new, c_new, lf, loga[k] + dnu * lin[k], SOLVER_TOL, SOLVER_MAX_ITER)
        if status != 0:
            return -np.inf
        nl = x[k] * a - nu_new * lf[x[k]] - lg
        b_lin[j] = lin[k]
        b_a[j] = a
        b_v[j] = v
        b_ll[j] = nl
        tot += nl - ll[k]
    return tot


@nb.njit(cache=True)
def _commit(idx, off, b_lin, b_a, b_v, b_ll, lin, loga, var, ll):
    for j in range(idx.shape[0]):
        k = idx[j]
        lin[k] = b_lin[off + j]
        loga[k] = b_a[off + j]
        var[k] = b_v[off + j]
        ll[k] = b_ll[off + j]


@nb.njit(cache=True)
def _pmf_matrix(lin, nu_rec, lf, out):
    """Per-record pmf over 0..T; rows of NaN where the mean is invalid."""
    n = lf.shape[0]
    c = np.empty(n)
    for k in range(lin.shape[0]):
        if not (lin[k] < LOG_T):
            out[k, :] = np.nan
            continue
        for r in range(n):
            c[r] = math.exp(-nu_rec[k] * lf[r])
        a, lg, v, status = solve_log_lambda(math.exp(lin[k]), nu_rec[k], c, lf, np.nan, SOLVER_TOL, SOLVER_MAX_ITER)
        if status != 0:
            out[k, :] = np.nan
            continue
        for r in range(n):
            out[k, r] = math.exp(r * a - nu_rec[k] * lf[r] - lg)


def _ctab(nu: np.ndarray) -> np.ndarray:
    return np.exp(-np.outer(nu, LF))


def _normal_logpdf_sum(x, sd) -> float:
    x = np.asarray(x, dtype=float)
    return float(-0.5 * np.sum(x * x) / (sd * sd) - x.size * (math.log(sd) + _HALF_LOG_2PI))


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


class CmpRegression:
    """Likelihood and prior of the wickets model over a fixed design."""

    def __init__(self, design: DesignMatrices, priors: PriorScales = PriorScales()):
        self.design = design
        self.priors = priors
        self.layout = ParamLayout.for_design(design)
        d = design
        self.x = np.ascontiguousarray(d.wickets, dtype=np.int64)
        self.player = np.ascontiguousarray(d.player, dtype=np.int64)
        order = np.argsort(self.player, kind="stable")
        bounds = np.searchsorted(self.player[order], np.arange(d.n_players + 1))
        self.player_records = [order[bounds[i] : bounds[i + 1]].astype(np.int64) for i in range(d.n_players)]
        self.away_records = np.flatnonzero(d.away > 0).astype(np.int64)
        self.innings_records = [np.flatnonzero(d.match_innings == m).astype(np.int64) for m in (2, 3, 4)]
        self.toss_records = np.flatnonzero(d.toss_first > 0).astype(np.int64)
        W = d.omega_design
        self.omega_records = [W.indices[W.indptr[f] : W.indptr[f + 1]].astype(np.int64) for f in range(W.shape[1])]
        self.omega_coefs = [W.data[W.indptr[f] : W.indptr[f + 1]].astype(float) for f in range(W.shape[1])]

    @property
    def n_records(self) -> int:
        return self.design.n_records

    def zero_params(self) -> ParamVector:
        return ParamVector.zeros(self.layout.n_beta, self.layout.n_omega, self.layout.n_players)

    def linear_predictor(self, p: ParamVector, index=None):
        return linear_predictor(p, self.design, index)

    def record_loglik(self, p: ParamVector):
        """Per-record log-likelihood terms plus solved log-rates and variances."""
        lin = np.ascontiguousarray(self.linear_predictor(p), dtype=float)
        nu = np.exp(p.eta)
        n = lin.shape[0]
        a, v, ll = np.empty(n), np.empty(n), np.empty(n)
        _record_loglik(lin, self.player, nu, _ctab(nu), self.x, LF, a, v, ll)
        return ll, lin, a, v

    def log_likelihood(self, p: ParamVector, subset=None) -> float:
        ll = self.record_loglik(p)[0]
        if subset is not None:
            ll = ll[subset]
        return float(math.fsum(ll)) if np.all(np.isfinite(ll)) else -math.inf

    def log_prior(self, p: ParamVector) -> float:
        s = self.priors
        return (
            _normal_logpdf_sum([p.zeta2, *p.xi, p.gamma], s.game)
            + _normal_logpdf_sum(p.theta, s.theta)
            + _normal_logpdf_sum(p.beta, s.spline)
            + _normal_logpdf_sum(p.omega, s.spline)
            + _normal_logpdf_sum(p.eta, s.eta)
        )

    def log_posterior(self, p: ParamVector) -> float:
        ll = self.log_likelihood(p)
        if ll == -math.inf:
            return -math.inf
        return ll + self.log_prior(p)

    def pmf_matrix(self, p: ParamVector) -> np.ndarray:
        """(N, T+1) truncated-CMP probabilities for each record."""
        lin = np.ascontiguousarray(self.linear_predictor(p), dtype=float)
        nu_rec = np.exp(p.eta)[self.player]
        out = np.empty((lin.shape[0], T_MAX + 1))
        _pmf_matrix(lin, nu_rec, LF, out)
        return out

    def simulate(self, p: ParamVector, rng: np.random.Generator) -> np.ndarray:
        """Wicket counts drawn record-wise by inverse CDF."""
        probs = self.pmf_matrix(p)
        if not np.all(np.isfinite(probs)):
            raise ValueError("parameters imply a mean outside (0, 10) for some record")
        cdf = np.cumsum(probs, axis=1)
        cdf[:, -1] = 1.0
        u = rng.random(probs.shape[0])
        return (u[:, None] >= cdf).sum(axis=1).astype(np.int64)

    def initial_params(self, rng: np.random.Generator) -> ParamVector:
        """Zeros except theta and eta drawn from their priors, theta centred."""
        p = self.zero_params()
        theta = rng.normal(0.0, self.priors.theta, self.layout.n_players)
        p.theta = theta - theta.mean()
        p.eta = rng.normal(0.0, self.priors.eta, self.layout.n_players)
        return p


# ---------------------------------------------------------------------------
# cached evaluator (sampler target)
# ---------------------------------------------------------------------------

_EMPTY_F = np.zeros(0)
_EMPTY_I = np.zeros(0, dtype=np.int64)


class CachedPosterior:
    """Incrementally updated log posterior of :class:`CmpRegression`.

    Implements the sampler target protocol: ``blocks`` lists the sweep order
    as ``(name, kind, size)``; ``propose_*`` stage a move and return the
    log-posterior change; ``commit`` accepts the staged move.
    """

    # sweep order: game effects, theta pairs, dispersions, opposition splines, runs spline
    blocks: list

    def __init__(self, model: CmpRegression, params: ParamVector, level_move: bool = True):
        self.model = model
        self.layout = model.layout
        self.slices = self.layout.slices
        n = model.n_records
        self.blocks = [
            ("zeta", "scalar", 1),
            ("xi", "scalar", 3),
            ("gamma", "scalar", 1),
            ("theta", "pair", self.layout.n_players),
            ("eta", "scalar", self.layout.n_players),
            ("omega", "scalar", self.layout.n_omega),
            ("beta", "vector", self.layout.n_beta),
        ]
        if level_move:
            self.blocks.append(("level", "shift", 1))
        self.prior_sd = {
            "zeta": model.priors.game,
            "xi": model.priors.game,
            "gamma": model.priors.game,
            "theta": model.priors.theta,
            "eta": model.priors.eta,
            "omega": model.priors.spline,
            "beta": model.priors.spline,
        }
        self._buf = [np.empty(n) for _ in range(4)]
        self._staged = None
        self._ones = {
            "zeta": [self.model.away_records],
            "xi": self.model.innings_records,
            "gamma": [self.model.toss_records],
        }
        self._all = np.arange(n, dtype=np.int64)
        # Level move: beta + c with every non-reference omega - c leaves the
        # mean unchanged except on reference-opposition records (partition of
        # unity of both bases), so it travels along the intercept ridge.
        om = model.design.omega
        self._level_omega = np.array(
            [f for f in range(om.n_free) if om.free_label(f)[0] != om.reference], dtype=np.int64
        )
        self._level_records = np.flatnonzero(model.design.opposition == om.reference).astype(np.int64)
        self.set_params(params)

    # -- state --------------------------------------------------------------

    def set_params(self, params: ParamVector) -> None:
        self.x = params.to_flat()
        self.view = {name: self.x[s] for name, s in self.slices.items()}
        self.refresh()

    def set_values(self, x: np.ndarray) -> None:
        self.set_params(self.layout.unflatten(x))

    def refresh(self) -> None:
        """Rebuild every cache from the current parameters."""
        p = self.params
        ll, lin, a, v = self.model.record_loglik(p)
        if not np.all(np.isfinite(ll)):
            raise ValueError("current parameters give an invalid mean for some record")
        self.ll, self.lin, self.loga, self.var = ll, lin, a, v
        self.nu = np.exp(p.eta)
        self.ctab = _ctab(self.nu)
        self.log_prior = self.model.log_prior(p)
        self.current = float(math.fsum(self.ll)) + self.log_prior

    @property
    def params(self) -> ParamVector:
        return self.layout.unflatten(self.x)

    def values(self) -> np.ndarray:
        return self.x.copy()

    def block_values(self, name: str) -> np.ndarray:
        return self.view[name].copy()

    def log_density(self) -> float:
        """Fresh log posterior of the current parameters (no caches)."""
        return self.model.log_posterior(self.params)

    def renormalize(self) -> None:
        """Remove floating-point drift from the sum-to-zero constraint."""
        th = self.view["theta"]
        th -= th.mean()
        self.refresh()

    # -- proposals ----------------------------------------------------------

    def _prior_delta(self, name, old, new) -> float:
        sd = self.prior_sd[name]
        return (old * old - new * new) / (2.0 * sd * sd)

    def _stage(self, segments, delta):
        b_lin, b_a, b_v, b_ll = self._buf
        off = 0
        tot = 0.0
        staged = []
        for idx, coef, sign in segments:
            d = _stage_shift(
                idx, coef, sign, delta, self.lin, self.loga, self.var, self.model.player, self.nu, self.ctab,
                self.model.x, LF, self.ll, off, b_lin, b_a, b_v, b_ll,
            )
            if d == -math.inf:
                return -math.inf, None
            tot += d
            staged.append((idx, off))
            off += idx.shape[0]
        return tot, staged

    def propose_scalar(self, name: str, i: int, delta: float) -> float:
        old = self.view[name][i]
        new = old + delta
        if name == "eta":
            return self._propose_eta(i, old, new)
        if name == "omega":
            segments = [(self.model.omega_records[i], self.model.omega_coefs[i], 1.0)]
        else:
            segments = [(self._ones[name][i], _EMPTY_F, 1.0)]
        dll, staged = self._stage(segments, delta)
        if staged is None:
            self._staged = None
            return -math.inf
        dlp = self._prior_delta(name, old, new)
        self._staged = (staged, ((name, i, new),), dlp, None)
        return dll + dlp

    def _propose_eta(self, i, old, new) -> float:
        idx = self.model.player_records[i]
        nu_new = math.exp(new)
        c_new = np.exp(-nu_new * LF)
        b_lin, b_a, b_v, b_ll = self._buf
        dll = _stage_nu(idx, nu_new, c_new, self.lin, self.loga, self.var, self.nu[i], self.model.x, LF, self.ll, b_lin, b_a, b_v, b_ll)
        if dll == -math.inf:
            self._staged = None
            return -math.inf
        dlp = self._prior_delta("eta", old, new)
        self._staged = ([(idx, 0)], (("eta", i, new),), dlp, (i, nu_new, c_new))
        return dll + dlp

    def propose_pair(self, name: str, i: int, j: int, delta: float) -> float:
        th = self.view[name]
        recs = self.model.player_records
        dll, staged = self._stage([(recs[i], _EMPTY_F, 1.0), (recs[j], _EMPTY_F, -1.0)], delta)
        if staged is None:
            self._staged = None
            return -math.inf
        oi, oj = th[i], th[j]
        ni, nj = oi + delta, oj - delta
        dlp = self._prior_delta(name, oi, ni) + self._prior_delta(name, oj, nj)
        self._staged = (staged, ((name, i, ni), (name, j, nj)), dlp, None)
        return dll + dlp

    def propose_vector(self, name: str, delta: np.ndarray) -> float:
        dl = np.ascontiguousarray(self.model.design.runs_basis @ delta)
        dll, staged = self._stage([(self._all, dl, 1.0)], 1.0)
        if staged is None:
            self._staged = None
            return -math.inf
        old = self.view[name]
        new = old + delta
        sd = self.prior_sd[name]
        dlp = float(np.dot(old, old) - np.dot(new, new)) / (2.0 * sd * sd)
        self._staged = (staged, ((name, None, new),), dlp, None)
        return dll + dlp

    def proposal_cov(self, name: str) -> np.ndarray:
        """Inverse conditional Fisher information of a vector block.

        With dispersion fixed the model is an exponential family in log rate,
        so the information on the log mean is ``mu**2 / Var`` per record.
        """
        if name != "beta":
            raise KeyError(name)
        B = self.model.design.runs_basis
        mu = np.exp(self.lin)
        w = mu * mu / np.maximum(self.var, 1e-12)
        sd = self.prior_sd[name]
        info = (B * w[:, None]).T @ B + np.eye(B.shape[1]) / (sd * sd)
        return np.linalg.inv(info)

    def propose_shift(self, name: str, delta: float) -> float:
        if name != "level":
            raise KeyError(name)
        dll, staged = self._stage([(self._level_records, _EMPTY_F, 1.0)], delta)
        if staged is None:
            self._staged = None
            return -math.inf
        beta = self.view["beta"]
        omega = self.view["omega"]
        w_old = omega[self._level_omega]
        b_new = beta + delta
        w_new = w_old - delta
        sd_b, sd_w = self.prior_sd["beta"], self.prior_sd["omega"]
        dlp = float(np.dot(beta, beta) - np.dot(b_new, b_new)) / (2.0 * sd_b * sd_b) + float(
            np.dot(w_old, w_old) - np.dot(w_new, w_new)
        ) / (2.0 * sd_w * sd_w)
        self._staged = (staged, (("beta", None, b_new), ("omega", self._level_omega, w_new)), dlp, None)
        return dll + dlp

    def commit(self) -> None:
        if self._staged is None:
            raise RuntimeError("no staged proposal to commit")
        staged, updates, dlp, nu_update = self._staged
        b_lin, b_a, b_v, b_ll = self._buf
        old_ll = 0.0
        new_ll = 0.0
        for idx, off in staged:
            old_ll += self.ll[idx].sum()
            new_ll += b_ll[off : off + idx.shape[0]].sum()
            _commit(idx, off, b_lin, b_a, b_v, b_ll, self.lin, self.loga, self.var, self.ll)
        for name, i, value in updates:
            if i is None:
                self.view[name][:] = value
            else:
                self.view[name][i] = value
        if nu_update is not None:
            i, nu_new, c_new = nu_update
            self.nu[i] = nu_new
            self.ctab[i] = c_new
        self.log_prior += dlp
        self.current += (new_ll - old_ll) + dlp
        self._staged = None
