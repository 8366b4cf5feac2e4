"""Metropolis-within-Gibbs sampling with warm-up adaptation.

A *target* exposes its parameters as named blocks, each visited once per
sweep in the order given by ``target.blocks``:

``scalar``
    Gaussian random-walk proposal on one coordinate at a time.
``pair``
    ``x_i += d, x_j -= d`` for consecutive entries of a fresh random
    permutation, which keeps ``sum(x)`` fixed (sum-to-zero constraint).
``vector``
    joint multivariate-normal random walk on the whole block.
``shift``
    one scalar random walk along a fixed direction spanning several blocks
    (the target decides which), tuned like a scalar.

Targets implement ``propose_scalar(name, i, delta)``,
``propose_pair(name, i, j, delta)``, ``propose_vector(name, delta)``,
``propose_shift(name, delta)`` (each
returning the log-density change of a staged move), ``commit()``,
``values()``, ``block_values(name)``, ``log_density()`` and the cached value
``current``.  :class:`~trunccmp.model.CachedPosterior` is the production
target; :class:`DensityTarget` wraps an arbitrary log density for testing.

Step sizes are tuned during warm-up only (Robbins-Monro on windowed
acceptance rates, empirical covariance for vector blocks) and frozen after.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class SamplerError(RuntimeError):
    pass


@dataclass
class SamplerConfig:
    n_chains: int = 4
    n_warmup: int = 1000
    n_iter: int = 5000
    seed: int = 0
    init_step: float = 0.1
    target_accept: float = 0.44
    target_accept_block: float = 0.234
    thin: int = 1
    adapt_window: int = 50
    adapt_gain: float = 3.0
    check_every: int = 500
    check_tol: float = 1e-6
    renormalize_every: int = 1000
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    n_workers: int = 1
    max_stored_values: int = 50_000_000
    cov_min_draws: int = 250
    block_proposal: str = "curvature"
    random_scan: bool = False
    level_move: bool = True

    def __post_init__(self):
        for name in ("n_chains", "n_iter", "thin", "adapt_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_warmup < 0:
            raise ValueError("n_warmup must be >= 0")
        if not (0 < self.target_accept < 1 and 0 < self.target_accept_block < 1):
            raise ValueError("target acceptance rates must lie in (0, 1)")
        if self.block_proposal not in ("curvature", "empirical"):
            raise ValueError("block_proposal must be 'curvature' or 'empirical'")
        if self.adapt_gain <= 0:
            raise ValueError("adapt_gain must be positive")
        if self.init_step <= 0:
            raise ValueError("init_step must be positive")

    def effective_thin(self, dim: int) -> int:
        """Thinning after the memory guard: at least 5 above the stored-value cap."""
        stored = self.n_chains * (self.n_iter // self.thin) * dim
        if stored > self.max_stored_values:
            return max(self.thin, 5)
        return self.thin


@dataclass
class ChainState:
    target: object
    rng: np.random.Generator
    steps: dict[str, np.ndarray]
    block_cov: dict[str, np.ndarray]
    block_chol: dict[str, np.ndarray]
    accepted: dict[str, np.ndarray]
    proposed: dict[str, np.ndarray]
    iteration: int = 0
    adapt_round: int = 0
    cov_estimated: dict = field(default_factory=dict)
    # acceptance tallies when sampling started (None during warm-up)
    sample_start: dict | None = None

    @classmethod
    def initial(cls, target, rng: np.random.Generator, config: SamplerConfig) -> "ChainState":
        steps, cov, chol, acc, prop = {}, {}, {}, {}, {}
        for name, kind, size in target.blocks:
            if kind == "vector":
                steps[name] = np.ones(1)
                if hasattr(target, "proposal_cov"):
                    cov[name] = target.proposal_cov(name) * (2.38**2 / size)
                else:
                    cov[name] = np.eye(size) * config.init_step**2
                chol[name] = np.linalg.cholesky(cov[name])
                acc[name] = np.zeros(1)
                prop[name] = np.zeros(1)
            else:
                steps[name] = np.full(size, config.init_step)
                acc[name] = np.zeros(size)
                prop[name] = np.zeros(size)
        return cls(target, rng, steps, cov, chol, acc, prop)


# ---------------------------------------------------------------------------
# updates
# ---------------------------------------------------------------------------


def _accept(state: ChainState, log_ratio: float) -> bool:
    # log(0) = -inf never beats a -inf ratio, so invalid moves always fail
    u = state.rng.random()
    return log_ratio >= 0.0 or (u > 0.0 and math.log(u) < log_ratio)


def mh_scalar_update(state: ChainState, name: str, i: int, delta: float | None = None) -> bool:
    if delta is None:
        delta = state.steps[name][i] * state.rng.standard_normal()
    r = state.target.propose_scalar(name, i, delta)
    ok = _accept(state, r)
    if ok:
        state.target.commit()
    state.proposed[name][i] += 1
    state.accepted[name][i] += ok
    return ok


def mh_theta_pair_update(state: ChainState, i: int, j: int, delta: float | None = None, name: str = "theta") -> bool:
    """Constraint-preserving move ``x_i += d, x_j -= d``."""
    if i == j:
        raise ValueError("pair update needs two distinct components")
    s = state.steps[name]
    if delta is None:
        delta = math.sqrt(0.5 * (s[i] * s[i] + s[j] * s[j])) * state.rng.standard_normal()
    r = state.target.propose_pair(name, i, j, delta)
    ok = _accept(state, r)
    if ok:
        state.target.commit()
    for k in (i, j):
        state.proposed[name][k] += 1
        state.accepted[name][k] += ok
    return ok


def mh_block_update_beta(state: ChainState, name: str = "beta", z: np.ndarray | None = None) -> bool:
    """Joint random walk ``x + L z`` with ``L L^T = scale * cov``."""
    L = state.block_chol[name]
    if z is None:
        z = state.rng.standard_normal(L.shape[0])
    delta = math.sqrt(state.steps[name][0]) * (L @ z)
    r = state.target.propose_vector(name, delta)
    ok = _accept(state, r)
    if ok:
        state.target.commit()
    state.proposed[name][0] += 1
    state.accepted[name][0] += ok
    return ok


def mh_shift_update(state: ChainState, name: str, delta: float | None = None) -> bool:
    if delta is None:
        delta = state.steps[name][0] * state.rng.standard_normal()
    r = state.target.propose_shift(name, delta)
    ok = _accept(state, r)
    if ok:
        state.target.commit()
    state.proposed[name][0] += 1
    state.accepted[name][0] += ok
    return ok


def sweep(state: ChainState, config: SamplerConfig) -> None:
    rng = state.rng
    for name, kind, size in state.target.blocks:
        if kind == "scalar":
            order = rng.permutation(size) if config.random_scan else range(size)
            for i in order:
                mh_scalar_update(state, name, int(i))
        elif kind == "pair":
            if size < 2:
                continue
            perm = rng.permutation(size)
            for k in range(size - 1):
                mh_theta_pair_update(state, int(perm[k]), int(perm[k + 1]), name=name)
        elif kind == "vector":
            mh_block_update_beta(state, name)
        elif kind == "shift":
            mh_shift_update(state, name)
        else:
            raise ValueError(f"unknown block kind {kind!r}")
    state.iteration += 1


# ---------------------------------------------------------------------------
# adaptation
# ---------------------------------------------------------------------------


@dataclass
class WarmupHistory:
    """Acceptance tallies for the current window plus stored vector-block draws."""

    window_accepted: dict[str, np.ndarray]
    window_proposed: dict[str, np.ndarray]
    block_draws: dict[str, list] = field(default_factory=dict)

    @classmethod
    def start(cls, state: ChainState) -> "WarmupHistory":
        vec = {name: [] for name, kind, _ in state.target.blocks if kind == "vector"}
        return cls({k: v.copy() for k, v in state.accepted.items()}, {k: v.copy() for k, v in state.proposed.items()}, vec)

    def window_rates(self, state: ChainState) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        return {
            k: (state.accepted[k] - self.window_accepted[k], state.proposed[k] - self.window_proposed[k])
            for k in state.accepted
        }

    def reset_window(self, state: ChainState) -> None:
        self.window_accepted = {k: v.copy() for k, v in state.accepted.items()}
        self.window_proposed = {k: v.copy() for k, v in state.proposed.items()}


def adapt_warmup(state: ChainState, history: WarmupHistory, config: SamplerConfig) -> None:
    """One Robbins-Monro round on step sizes; refresh vector-block covariances.

    ``log step += adapt_gain * (rate - target) / sqrt(round)``.  A vector block's proposal
    covariance is ``2.38**2 / d`` times either the target's local
    covariance ``target.proposal_cov(name)`` at the current state
    (``block_proposal="curvature"``) or the empirical covariance of the later
    half of the warm-up draws plus ``1e-6 I`` (``"empirical"``, used for any
    target without ``proposal_cov``).  The empirical rule waits for
    ``cov_min_draws`` draws in that half, tracking the curvature until then.
    """
    state.adapt_round += 1
    gain = config.adapt_gain / math.sqrt(state.adapt_round)
    kinds = {name: kind for name, kind, _ in state.target.blocks}
    for name, (acc, prop) in history.window_rates(state).items():
        seen = prop > 0
        if not np.any(seen):
            continue
        target = config.target_accept_block if kinds[name] == "vector" else config.target_accept
        rate = np.where(seen, acc / np.maximum(prop, 1), target)
        s = state.steps[name]
        s *= np.exp(gain * (rate - target))
        np.clip(s, 1e-8, 1e4, out=s)
    for name, draws in history.block_draws.items():
        dim = state.block_cov[name].shape[0]
        tail = draws[len(draws) // 2 :]
        enough = len(tail) >= max(config.cov_min_draws, 2 * dim)
        if hasattr(state.target, "proposal_cov") and (config.block_proposal == "curvature" or not enough):
            cov = state.target.proposal_cov(name) * (2.38**2 / dim)
            state.block_cov[name] = cov
            state.block_chol[name] = np.linalg.cholesky(cov)
            continue
        if not enough:
            continue
        emp = np.cov(np.asarray(tail), rowvar=False).reshape(dim, dim)
        cov = emp * (2.38**2 / dim) + 1e-6 * np.eye(dim)
        first = not state.cov_estimated.get(name, False)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            log.warning("proposal covariance for %s not positive definite; using its diagonal", name)
            cov = np.diag(np.maximum(np.diag(cov), 1e-6))
            chol = np.linalg.cholesky(cov)
        state.block_cov[name] = cov
        state.block_chol[name] = chol
        if first:
            # scale was tuned for the previous proposal shape
            state.steps[name][:] = 1.0
            state.cov_estimated[name] = True
    history.reset_window(state)


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------


@dataclass
class ChainResult:
    draws: np.ndarray  # (n_kept, dim)
    accept_rate: dict[str, float]  # per block, sampling phase only
    steps: dict[str, np.ndarray]
    block_cov: dict[str, np.ndarray]


def _checkpoint_path(config: SamplerConfig, chain: int) -> Path | None:
    if not config.checkpoint_every or not config.checkpoint_dir:
        return None
    return Path(config.checkpoint_dir) / f"chain{chain}.npz"


def save_checkpoint(path, state: ChainState, history: WarmupHistory | None, kept: list) -> None:
    """Versioned npz: parameter vector, tuning state, rng state, stored draws.

    ``meta`` is a JSON string with the format version, iteration counter,
    adaptation round and the numpy bit-generator state.
    """
    arrays = {"x": state.target.values(), "draws": np.asarray(kept) if kept else np.zeros((0, state.target.values().size))}
    for k in state.steps:
        arrays[f"steps/{k}"] = state.steps[k]
        arrays[f"accepted/{k}"] = state.accepted[k]
        arrays[f"proposed/{k}"] = state.proposed[k]
    for k in state.block_cov:
        arrays[f"cov/{k}"] = state.block_cov[k]
    if history is not None:
        for k in history.window_accepted:
            arrays[f"win_acc/{k}"] = history.window_accepted[k]
            arrays[f"win_prop/{k}"] = history.window_proposed[k]
        for k, v in history.block_draws.items():
            arrays[f"hist/{k}"] = np.asarray(v).reshape(len(v), -1)
    meta = {
        "version": CHECKPOINT_VERSION,
        "iteration": state.iteration,
        "adapt_round": state.adapt_round,
        "cov_estimated": state.cov_estimated,
        "rng": state.rng.bit_generator.state,
        "has_history": history is not None,
        "sample_start": state.sample_start,
    }
    arrays["meta"] = np.array(json.dumps(meta, default=int))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, **arrays)
    os.replace(tmp, path)


def load_checkpoint(path, state: ChainState):
    """Restore ``state`` in place; returns (history or None, kept draws list)."""
    with np.load(path) as z:
        meta = json.loads(str(z["meta"]))
        if meta["version"] != CHECKPOINT_VERSION:
            raise SamplerError(f"unsupported checkpoint version {meta['version']}")
        state.target.set_values(z["x"])
        for k in state.steps:
            state.steps[k] = z[f"steps/{k}"].copy()
            state.accepted[k] = z[f"accepted/{k}"].copy()
            state.proposed[k] = z[f"proposed/{k}"].copy()
        for k in state.block_cov:
            state.block_cov[k] = z[f"cov/{k}"].copy()
            state.block_chol[k] = np.linalg.cholesky(state.block_cov[k])
        state.iteration = meta["iteration"]
        state.adapt_round = meta["adapt_round"]
        state.cov_estimated = dict(meta["cov_estimated"])
        state.rng.bit_generator.state = meta["rng"]
        start = meta.get("sample_start")
        state.sample_start = None if start is None else {k: tuple(v) for k, v in start.items()}
        history = None
        if meta["has_history"]:
            history = WarmupHistory(
                {k: z[f"win_acc/{k}"].copy() for k in state.steps},
                {k: z[f"win_prop/{k}"].copy() for k in state.steps},
                {k: list(z[f"hist/{k}"]) for k in state.block_cov},
            )
        kept = list(z["draws"])
    return history, kept


def _tallies(state: ChainState) -> dict:
    return {k: (float(state.accepted[k].sum()), float(state.proposed[k].sum())) for k in state.accepted}


def run_chain(target, config: SamplerConfig, rng: np.random.Generator, chain: int = 0) -> ChainResult:
    state = ChainState.initial(target, rng, config)
    dim = target.values().size
    thin = config.effective_thin(dim)
    ckpt = _checkpoint_path(config, chain)
    history = WarmupHistory.start(state) if config.n_warmup > 0 else None
    kept: list[np.ndarray] = []
    if ckpt is not None and ckpt.exists():
        history, kept = load_checkpoint(ckpt, state)
    total = config.n_warmup + config.n_iter
    vec_blocks = [name for name, kind, _ in target.blocks if kind == "vector"]
    while state.iteration < total:
        sweep(state, config)
        it = state.iteration
        if it <= config.n_warmup:
            for name in vec_blocks:
                history.block_draws[name].append(target.block_values(name))
            if it % config.adapt_window == 0 or it == config.n_warmup:
                adapt_warmup(state, history, config)
            if it == config.n_warmup:
                history = None
                state.sample_start = _tallies(state)
        elif (it - config.n_warmup) % thin == 0:
            kept.append(target.values())
        if config.renormalize_every and it % config.renormalize_every == 0 and hasattr(target, "renormalize"):
            target.renormalize()
        if config.check_every and it % config.check_every == 0:
            fresh = target.log_density()
            if not abs(fresh - target.current) <= config.check_tol:
                raise SamplerError(
                    f"chain {chain} iteration {it}: cached log density {target.current!r} "
                    f"differs from fresh evaluation {fresh!r}"
                )
        if ckpt is not None and it % config.checkpoint_every == 0:
            save_checkpoint(ckpt, state, history, kept)
    n_keep = config.n_iter // thin
    start = state.sample_start or {k: (0.0, 0.0) for k in state.accepted}
    rates = {}
    for k in state.accepted:
        acc0, prop0 = start[k]
        rates[k] = float((state.accepted[k].sum() - acc0) / max(state.proposed[k].sum() - prop0, 1))
    return ChainResult(np.asarray(kept[:n_keep]).reshape(-1, dim), rates, state.steps, dict(state.block_cov))


# ---------------------------------------------------------------------------
# multi-chain driver
# ---------------------------------------------------------------------------


@dataclass
class PosteriorDraws:
    draws: np.ndarray  # (n_chains, n_kept, dim)
    names: list[str]
    accept_rate: list[dict[str, float]]
    slices: dict[str, slice] = field(default_factory=dict)

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    def pooled(self) -> np.ndarray:
        return self.draws.reshape(-1, self.draws.shape[-1])

    def block(self, name: str) -> np.ndarray:
        """(n_chains, n_kept, size) draws of a named block."""
        return self.draws[:, :, self.slices[name]]

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, :, self.names.index(name)]


def chain_seeds(seed: int, n_chains: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n_chains)


def _model_chain(args):
    model, config, seed_seq, chain = args
    from .model import CachedPosterior

    rng = np.random.Generator(np.random.PCG64(seed_seq))
    target = CachedPosterior(model, model.initial_params(rng), level_move=config.level_move)
    return run_chain(target, config, rng, chain)


def run_chains(make_target, config: SamplerConfig, names=None, slices=None) -> PosteriorDraws:
    """Run ``config.n_chains`` chains of ``make_target(rng)`` serially."""
    results = []
    for c, ss in enumerate(chain_seeds(config.seed, config.n_chains)):
        rng = np.random.Generator(np.random.PCG64(ss))
        results.append(run_chain(make_target(rng), config, rng, c))
    return _collect(results, names, slices)


def run(config: SamplerConfig, model) -> PosteriorDraws:
    """Sample the posterior of a :class:`~trunccmp.model.CmpRegression`.

    Chains use independent child seeds of ``config.seed``; with
    ``n_workers > 1`` they run in separate processes, with identical results.
    """
    jobs = [(model, config, ss, c) for c, ss in enumerate(chain_seeds(config.seed, config.n_chains))]
    if config.n_workers > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.n_workers, config.n_chains)) as pool:
            results = list(pool.map(_model_chain, jobs))
    else:
        results = [_model_chain(j) for j in jobs]
    return _collect(results, model.layout.names(model.design), model.layout.slices)


def _collect(results, names, slices) -> PosteriorDraws:
    draws = np.stack([r.draws for r in results])
    dim = draws.shape[-1]
    names = list(names) if names is not None else [f"x[{i}]" for i in range(dim)]
    return PosteriorDraws(draws, names, [r.accept_rate for r in results], dict(slices or {}))


# ---------------------------------------------------------------------------
# generic target for analytic checks
# ---------------------------------------------------------------------------


class DensityTarget:
    """Target protocol over an arbitrary log density of a flat vector.

    ``blocks`` entries are ``(name, kind, indices)``-compatible: pass
    ``blocks=[("x", "scalar", d)]`` etc.; blocks are laid out contiguously in
    the order given.
    """

    def __init__(self, log_density, x0, blocks):
        self._f = log_density
        self.x = np.array(x0, dtype=float)
        self.blocks = list(blocks)
        self.slices = {}
        pos = 0
        for name, _, size in self.blocks:
            self.slices[name] = slice(pos, pos + size)
            pos += size
        if pos != self.x.size:
            raise ValueError("block sizes do not cover the parameter vector")
        self.current = float(self._f(self.x))
        self._staged = None

    def _stage(self, x_new):
        f = float(self._f(x_new))
        self._staged = (x_new, f)
        return f - self.current

    def _start(self, name, i):
        return self.slices[name].start + i

    def propose_scalar(self, name, i, delta):
        x = self.x.copy()
        x[self._start(name, i)] += delta
        return self._stage(x)

    def propose_pair(self, name, i, j, delta):
        x = self.x.copy()
        x[self._start(name, i)] += delta
        x[self._start(name, j)] -= delta
        return self._stage(x)

    def propose_vector(self, name, delta):
        x = self.x.copy()
        x[self.slices[name]] += delta
        return self._stage(x)

    def commit(self):
        self.x, self.current = self._staged
        self._staged = None

    def values(self):
        return self.x.copy()

    def set_values(self, x):
        self.x = np.array(x, dtype=float)
        self.current = float(self._f(self.x))

    def block_values(self, name):
        return self.x[self.slices[name]].copy()

    def log_density(self):
        return float(self._f(self.x))


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def _split(chains: np.ndarray) -> np.ndarray:
    n = chains.shape[1] // 2
    return np.concatenate([chains[:, :n], chains[:, chains.shape[1] - n :]], axis=0)


def _rank_normalize(chains: np.ndarray) -> np.ndarray:
    flat = chains.ravel()
    r = rankdata(flat, method="average")
    z = ndtri((r - 0.375) / (flat.size + 0.25))
    return z.reshape(chains.shape)


def _rhat_basic(chains: np.ndarray) -> float:
    m, n = chains.shape
    means = chains.mean(axis=1)
    w = chains.var(axis=1, ddof=1).mean()
    b = n * means.var(ddof=1)
    if w <= 0:
        return math.nan
    var_hat = (n - 1) / n * w + b / n
    return math.sqrt(var_hat / w)


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    m = 1 << (2 * n - 1).bit_length()
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, n=m)
    acov = np.fft.irfft(f * np.conj(f), n=m)[..., :n]
    return acov / n


def _ess_basic(chains: np.ndarray) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence."""
    m, n = chains.shape
    acov = _autocov(chains)
    chain_var = acov[:, 0] * n / (n - 1)
    mean_var = chain_var.mean()
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return math.nan
    rho = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # pair sums, truncated at the first non-positive pair, made monotone
    total = 0.0
    prev = math.inf
    t = 0
    while t + 1 < n:
        p = rho[t] + rho[t + 1]
        if p <= 0:
            break
        p = min(p, prev)
        total += p
        prev = p
        t += 2
    tau = -1.0 + 2.0 * total
    tau = max(tau, 1.0 / math.log10(m * n)) if m * n > 1 else tau
    return m * n / tau


def rhat(chains: np.ndarray) -> float:
    """Rank-normalised split R-hat: max of bulk and folded versions."""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2 or chains.shape[0] < 2:
        raise ValueError("R-hat needs at least two chains, shape (n_chains, n_draws)")
    if np.ptp(chains) == 0:
        return math.nan
    s = _split(chains)
    bulk = _rhat_basic(_rank_normalize(s))
    folded = _rhat_basic(_rank_normalize(np.abs(s - np.median(s))))
    return max(bulk, folded)


def ess(chains: np.ndarray) -> float:
    """Bulk effective sample size on rank-normalised split chains."""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2 or chains.shape[0] < 2:
        raise ValueError("ESS needs at least two chains, shape (n_chains, n_draws)")
    if np.ptp(chains) == 0:
        return math.nan
    return _ess_basic(_rank_normalize(_split(chains)))


def diagnostics(draws) -> dict[str, np.ndarray]:
    """Per-parameter R-hat and ESS for (n_chains, n_draws, dim) draws."""
    arr = draws.draws if isinstance(draws, PosteriorDraws) else np.asarray(draws)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.shape[0] < 2:
        raise ValueError("diagnostics need at least two chains")
    dim = arr.shape[2]
    return {
        "rhat": np.array([rhat(arr[:, :, k]) for k in range(dim)]),
        "ess": np.array([ess(arr[:, :, k]) for k in range(dim)]),
    }


def config_dict(config: SamplerConfig) -> dict:
    return asdict(config)
