"""Command-line front end: ``trunccmp {ingest-check,synth,fit,summarize,ppc}``.

Exit codes: 0 success, 1 unexpected error, 2 invalid input or configuration,
3 convergence gate failed (some R-hat above ``rhat_gate``; every output is
still written so the run can be inspected).

All tables are comma-separated text written with Python's own float
formatting, which does not depend on the process locale.
"""

from __future__ import annotations

import argparse
import csv
import gzip
import hashlib
import io
import json
import logging
import math
import os
import platform
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .data import T_MAX, Dataset, IngestError, ingest, write_dataset
from .design import REFERENCE_OPPOSITION, REFERENCE_YEAR, SplineSpec, build_design, log_runs, opposition_spline_specs
from .inference import game_effects_table, opposition_curves, player_table, posterior_predictive_check, runs_curve
from .model import CmpRegression, PriorScales
from .sampler import PosteriorDraws, SamplerConfig, SamplerError, diagnostics, run
from .synthetic import GenerationError, SyntheticLayout, generate_synthetic, truth_to_json

log = logging.getLogger("trunccmp")

EXIT_OK, EXIT_ERROR, EXIT_INVALID, EXIT_GATE = 0, 1, 2, 3
OUT_ENV = "TRUNCCMP_OUT"
DEFAULT_OUT = "trunccmp-out"
DRAWS_FILE = "draws.csv.gz"
MANIFEST_FILE = "manifest.json"
TABLE_DIGITS = 10  # significant digits in summary tables


class ConfigError(ValueError):
    pass


@dataclass
class FitConfig:
    """Everything that determines a fit besides the data.

    ``runs_knots`` (interior knots in runs) and ``opposition_knots``
    (interior knots in calendar years, keyed by opposition name) replace the
    default quintile and decade-midpoint rules; boundary knots always come
    from the data.
    """

    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    priors: PriorScales = field(default_factory=PriorScales)
    runs_knots: list[float] | None = None
    opposition_knots: dict[str, list[float]] | None = None
    reference_opposition: str = REFERENCE_OPPOSITION
    reference_year: float = REFERENCE_YEAR
    truncation: int = T_MAX
    ppc_draws: int = 1000
    hdi_level: float = 0.95
    rhat_gate: float = 1.1
    out_dir: str | None = None

    def __post_init__(self):
        if self.truncation != T_MAX:
            raise ConfigError(f"the truncation point is fixed at {T_MAX}")
        if self.ppc_draws < 1:
            raise ConfigError("ppc_draws must be positive")
        if not 0.0 < self.hdi_level < 1.0:
            raise ConfigError("hdi_level must lie strictly between 0 and 1")
        if self.rhat_gate <= 1.0:
            raise ConfigError("rhat_gate must exceed 1")
        for name in ("game", "theta", "spline", "eta"):
            if not getattr(self.priors, name) > 0:
                raise ConfigError(f"prior scale {name!r} must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("out_dir")  # where results go does not change them
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "FitConfig":
        raw = dict(raw)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        try:
            if "sampler" in raw:
                raw["sampler"] = SamplerConfig(**raw["sampler"])
            if "priors" in raw:
                raw["priors"] = PriorScales(**raw["priors"])
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()

    def design_for(self, dataset: Dataset):
        runs_spec = None
        if self.runs_knots is not None:
            lr = log_runs(dataset.columns()["runs"])
            runs_spec = SplineSpec(tuple(np.log(self.runs_knots)), (float(lr.min()), float(lr.max())))
        opp_specs = None
        if self.opposition_knots:
            opp_specs = opposition_spline_specs(dataset)
            for name, knots in self.opposition_knots.items():
                if name not in dataset.oppositions:
                    raise ConfigError(f"opposition_knots names {name!r}, which is not in the data")
                o = dataset.oppositions.index(name)
                opp_specs[o] = SplineSpec(tuple(knots), opp_specs[o].boundary_knots)
        return build_design(dataset, runs_spec, opp_specs, self.reference_opposition, self.reference_year)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def load_config(path) -> FitConfig:
    """Read a JSON config; a run manifest is accepted too (its ``config`` entry)."""
    if path is None:
        return FitConfig()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if isinstance(raw, dict) and "config_hash" in raw and "config" in raw:
        raw = raw["config"]
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return FitConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# text output
# ---------------------------------------------------------------------------


def fmt(x, digits: int = TABLE_DIGITS) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.{digits}g}"


def write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_draws(path: Path, draws: PosteriorDraws) -> None:
    """Gzipped CSV, one row per stored draw; floats use round-trip repr."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["chain", "draw", *draws.names])
    for c in range(draws.n_chains):
        for k, row in enumerate(draws.draws[c]):
            w.writerow([c, k, *map(repr, row.tolist())])
    # mtime=0 and no embedded file name: equal draws give equal bytes
    with open(path, "wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
        gz.write(buf.getvalue().encode("utf-8"))


def read_draws(path: Path, slices: dict) -> PosteriorDraws:
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in r] for r in reader])
    names = header[2:]
    chain = rows[:, 0].astype(int)
    n_chains = int(chain.max()) + 1
    values = rows[:, 2:].reshape(n_chains, -1, len(names))
    return PosteriorDraws(values, names, [], dict(slices))


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    import numba
    import scipy

    return {
        "trunccmp": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


# ---------------------------------------------------------------------------
# pipeline pieces
# ---------------------------------------------------------------------------


def _named_draws(draws: PosteriorDraws, model: CmpRegression, dataset: Dataset) -> PosteriorDraws:
    draws.names = model.layout.names(model.design, dataset.players, dataset.oppositions)
    return draws


def write_summaries(out: Path, draws: PosteriorDraws, model: CmpRegression, dataset: Dataset, config: FitConfig) -> list[str]:
    """Player table, game effects, curves and diagnostics; returns file names."""
    level = config.hdi_level
    write_table(
        out / "player_table.csv",
        ["rank", "player", "debut", "innings", "mean_exp_theta", "sd_exp_theta", "mean_nu"],
        [asdict(r).values() for r in player_table(draws, dataset)],
    )
    write_table(
        out / "game_effects.csv",
        ["parameter", "label", "mean", "hdi_low", "hdi_high"],
        [asdict(r).values() for r in game_effects_table(draws, level)],
    )
    rc = runs_curve(draws, model, level=level)
    write_table(out / "runs_curve.csv", ["runs", "mean", "hdi_low", "hdi_high"], zip(rc.x.tolist(), rc.mean, rc.hdi_low, rc.hdi_high))
    opp_rows = []
    for o, c in opposition_curves(draws, model, level).items():
        opp_rows += [(dataset.oppositions[o], x, m, lo, hi) for x, m, lo, hi in zip(c.x.tolist(), c.mean, c.hdi_low, c.hdi_high)]
    write_table(out / "opposition_curves.csv", ["opposition", "year", "mean", "hdi_low", "hdi_high"], opp_rows)
    diag = diagnostics(draws)
    pooled = draws.pooled()
    write_table(
        out / "diagnostics.csv",
        ["parameter", "mean", "sd", "rhat", "ess"],
        zip(draws.names, pooled.mean(axis=0), pooled.std(axis=0, ddof=1), diag["rhat"], diag["ess"]),
    )
    return ["player_table.csv", "game_effects.csv", "runs_curve.csv", "opposition_curves.csv", "diagnostics.csv"]


def write_ppc(out: Path, draws: PosteriorDraws, model: CmpRegression, seed: int, n_draws: int) -> str:
    rng = np.random.default_rng([seed, 1])
    t = posterior_predictive_check(draws, model, rng, n_draws)
    write_table(
        out / "ppc.csv",
        ["wickets", "observed_n", "observed", "expected", "se", "z"],
        zip(t.counts.tolist(), t.observed_n.tolist(), t.observed, t.expected, t.se, t.z()),
    )
    return "ppc.csv"


def gate_failures(draws: PosteriorDraws, threshold: float) -> list[tuple[str, float]]:
    r = diagnostics(draws)["rhat"]
    return [(n, float(v)) for n, v in zip(draws.names, r) if np.isfinite(v) and v > threshold]


def fit(dataset: Dataset, config: FitConfig, out: Path, data_path: str | None = None) -> int:
    """Run the whole pipeline into ``out``; returns the exit code."""
    out.mkdir(parents=True, exist_ok=True)
    model = CmpRegression(config.design_for(dataset), config.priors)
    s = config.sampler
    log.info("fitting %d records, %d parameters: %d chains x (%d + %d)", len(dataset), model.layout.size, s.n_chains, s.n_warmup, s.n_iter)
    draws = _named_draws(run(s, model), model, dataset)
    write_draws(out / DRAWS_FILE, draws)
    files = [DRAWS_FILE, *write_summaries(out, draws, model, dataset, config)]
    files.append(write_ppc(out, draws, model, s.seed, config.ppc_draws))
    bad = gate_failures(draws, config.rhat_gate)
    accept = {k: float(np.mean([a[k] for a in draws.accept_rate])) for k in draws.accept_rate[0]}
    manifest = {
        "seed": s.seed,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "versions": versions(),
        "data": {
            "path": data_path,
            "sha256": sha256_file(Path(data_path)) if data_path else None,
            "n_records": len(dataset),
            "n_players": dataset.n_players,
            "wicket_histogram": dataset.wicket_histogram().tolist(),
        },
        "acceptance": {k: round(v, 6) for k, v in accept.items()},
        "convergence": {"rhat_gate": config.rhat_gate, "passed": not bad, "failures": [n for n, _ in bad]},
        "files": {f: sha256_file(out / f) for f in files},
    }
    (out / MANIFEST_FILE).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    if bad:
        worst = max(bad, key=lambda t: t[1])
        log.warning(
            "convergence gate failed: %d parameter(s) with R-hat > %g (worst %s = %.3f); see diagnostics.csv",
            len(bad), config.rhat_gate, worst[0], worst[1],
        )
        return EXIT_GATE
    return EXIT_OK


def _load_run(out: Path, data_arg: str | None, scorecard: bool):
    """Dataset, config, model and draws of a finished fit in ``out``."""
    try:
        manifest = json.loads((out / MANIFEST_FILE).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"no fit found in {out}: {exc}") from None
    config = FitConfig.from_dict(manifest["config"])
    path = data_arg or manifest["data"]["path"]
    if path is None:
        raise ConfigError("the manifest records no data file; pass --data")
    dataset = ingest(path, scorecard_format=scorecard)
    model = CmpRegression(config.design_for(dataset), config.priors)
    draws = read_draws(out / DRAWS_FILE, model.layout.slices)
    if draws.draws.shape[-1] != model.layout.size:
        raise ConfigError("stored draws do not match the model built from this data")
    return dataset, config, model, draws


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def _out_dir(args, config: FitConfig | None = None) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or (config.out_dir if config else None) or DEFAULT_OUT)


def _apply_overrides(config: FitConfig, args) -> FitConfig:
    s = asdict(config.sampler)
    for flag, key in (("seed", "seed"), ("chains", "n_chains"), ("warmup", "n_warmup"), ("iters", "n_iter"), ("workers", "n_workers")):
        v = getattr(args, flag, None)
        if v is not None:
            s[key] = v
    raw = asdict(config)
    raw["sampler"] = s
    if getattr(args, "ppc_draws", None) is not None:
        raw["ppc_draws"] = args.ppc_draws
    return FitConfig.from_dict(raw)


def cmd_ingest_check(args) -> int:
    ds = ingest(args.data, scorecard_format=args.scorecard_format)
    years = ds.columns()["year"]
    print(f"records: {len(ds)}")
    print(f"players: {ds.n_players}")
    print(f"oppositions: {len(ds.oppositions)} ({', '.join(ds.oppositions)})")
    print(f"years: {int(years.min())}-{int(years.max())}")
    print("wickets histogram:")
    for w, n in enumerate(ds.wicket_histogram().tolist()):
        print(f"  {w:2d}  {n}")
    return EXIT_OK


def cmd_synth(args) -> int:
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    layout = SyntheticLayout(n_players=args.players, innings_per_player=args.innings)
    dataset, params, model = generate_synthetic(layout, seed=args.seed)
    write_dataset(dataset, out / "data.csv")
    (out / "truth.json").write_text(truth_to_json(params, model, dataset) + "\n", encoding="utf-8")
    print(f"wrote {len(dataset)} innings to {out / 'data.csv'} and the truth to {out / 'truth.json'}")
    return EXIT_OK


def cmd_fit(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    dataset = ingest(args.data, scorecard_format=args.scorecard_format)
    out = _out_dir(args, config)
    code = fit(dataset, config, out, data_path=str(args.data))
    print(f"outputs in {out}")
    return code


def cmd_summarize(args) -> int:
    out = _out_dir(args)
    dataset, config, model, draws = _load_run(out, args.data, args.scorecard_format)
    write_summaries(out, draws, model, dataset, config)
    print(f"{'rank':>4}  {'player':<20} {'E exp(theta)':>12} {'E nu':>6}")
    for r in player_table(draws, dataset)[: args.top]:
        print(f"{r.rank:>4}  {r.player:<20} {r.mean_exp_theta:12.3f} {r.mean_nu:6.2f}")
    print()
    for e in game_effects_table(draws, config.hdi_level):
        print(f"{e.label:<26} {e.mean:.3f} ({e.hdi_low:.3f}-{e.hdi_high:.3f})")
    return EXIT_OK


def cmd_ppc(args) -> int:
    out = _out_dir(args)
    dataset, config, model, draws = _load_run(out, args.data, args.scorecard_format)
    seed = config.sampler.seed if args.seed is None else args.seed
    write_ppc(out, draws, model, seed, args.ppc_draws or config.ppc_draws)
    with open(out / "ppc.csv", encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trunccmp", description="Truncated CMP regression for bowling figures.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def data_flags(sp, required):
        sp.add_argument("--data", required=required, help="delimited innings file with a header row")
        sp.add_argument("--scorecard-format", action="store_true", help="read runs and wickets from an O-M-R-W 'figures' column")

    def out_flag(sp):
        sp.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or {DEFAULT_OUT})")

    sp = sub.add_parser("ingest-check", help="validate a data file and print its summary")
    data_flags(sp, True)
    sp.set_defaults(func=cmd_ingest_check)

    sp = sub.add_parser("synth", help="write a synthetic data set and its generating truth")
    out_flag(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--players", type=int, default=50)
    sp.add_argument("--innings", type=int, default=60, help="innings per player")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("fit", help="fit the model and write every output")
    data_flags(sp, True)
    out_flag(sp)
    sp.add_argument("--config", help="JSON config (a manifest.json from an earlier run also works)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--chains", type=int)
    sp.add_argument("--warmup", type=int)
    sp.add_argument("--iters", type=int)
    sp.add_argument("--workers", type=int, help="processes for running chains")
    sp.add_argument("--ppc-draws", type=int)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("summarize", help="rebuild the summary tables from stored draws")
    data_flags(sp, False)
    out_flag(sp)
    sp.add_argument("--top", type=int, default=10, help="players to print")
    sp.set_defaults(func=cmd_summarize)

    sp = sub.add_parser("ppc", help="rerun the posterior predictive check from stored draws")
    data_flags(sp, False)
    out_flag(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--ppc-draws", type=int)
    sp.set_defaults(func=cmd_ppc)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (IngestError, ConfigError, GenerationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SamplerError as exc:
        print(f"sampler error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
