import csv
import gzip
import json
import math

import numpy as np
import pytest

from trunccmp.cli import (
    DRAWS_FILE,
    EXIT_GATE,
    EXIT_INVALID,
    EXIT_OK,
    ConfigError,
    FitConfig,
    fmt,
    gate_failures,
    load_config,
    main,
    read_draws,
    write_draws,
)
from trunccmp.data import ingest
from trunccmp.sampler import PosteriorDraws

GOLDEN_DEFAULTS = {
    "sampler": {
        "n_chains": 4,
        "n_warmup": 1000,
        "n_iter": 5000,
        "seed": 0,
        "init_step": 0.1,
        "target_accept": 0.44,
        "target_accept_block": 0.234,
        "thin": 1,
        "adapt_window": 50,
        "adapt_gain": 3.0,
        "check_every": 500,
        "check_tol": 1e-6,
        "renormalize_every": 1000,
        "checkpoint_every": 0,
        "checkpoint_dir": None,
        "n_workers": 1,
        "max_stored_values": 50_000_000,
        "cov_min_draws": 250,
        "block_proposal": "curvature",
        "random_scan": False,
        "level_move": True,
    },
    "priors": {
        "game": 0.5 * math.log(2.0),
        "theta": 0.5 * math.log(2.0),
        "spline": 1.0,
        "eta": 0.5 * math.log(3.0),
    },
    "runs_knots": None,
    "opposition_knots": None,
    "reference_opposition": "Australia",
    "reference_year": 2020,
    "truncation": 10,
    "ppc_draws": 1000,
    "hdi_level": 0.95,
    "rhat_gate": 1.1,
}

FIT_FLAGS = ["--chains", "2", "--warmup", "100", "--iters", "150", "--ppc-draws", "50"]
OUTPUTS = [
    DRAWS_FILE,
    "player_table.csv",
    "game_effects.csv",
    "runs_curve.csv",
    "opposition_curves.csv",
    "ppc.csv",
    "diagnostics.csv",
    "manifest.json",
]


def test_default_config_is_golden():
    assert FitConfig().to_dict() == GOLDEN_DEFAULTS


def test_prior_sds_mean_factor_two_and_three_at_two_sd():
    p = FitConfig().priors
    assert math.exp(2 * p.game) == pytest.approx(2.0)
    assert math.exp(2 * p.eta) == pytest.approx(3.0)


def test_config_round_trips_through_dict():
    c = FitConfig.from_dict({"sampler": {"n_chains": 3, "seed": 9}, "runs_knots": [10, 20, 40, 80]})
    again = FitConfig.from_dict(c.to_dict())
    assert again == c
    assert again.config_hash() == c.config_hash()
    assert c.config_hash() != FitConfig().config_hash()


@pytest.mark.parametrize(
    "raw",
    [
        {"bogus": 1},
        {"sampler": {"n_chains": 0}},
        {"sampler": {"not_a_field": 1}},
        {"priors": {"game": -1.0}},
        {"truncation": 12},
        {"hdi_level": 1.5},
        {"rhat_gate": 0.9},
        {"ppc_draws": 0},
    ],
)
def test_invalid_config_rejected(raw):
    with pytest.raises(ConfigError):
        FitConfig.from_dict(raw)


def test_load_config_reads_file_and_manifest(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"sampler": {"seed": 5}}))
    assert load_config(tmp_path / "c.json").sampler.seed == 5
    manifest = {"config": {"sampler": {"seed": 6}}, "config_hash": "x"}
    (tmp_path / "m.json").write_text(json.dumps(manifest))
    assert load_config(tmp_path / "m.json").sampler.seed == 6
    (tmp_path / "bad.json").write_text("[1, 2")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")
    assert load_config(None) == FitConfig()


def test_knot_overrides_change_design(small):
    dataset, _, _ = small
    c = FitConfig(runs_knots=[10.0, 30.0, 60.0], opposition_knots={"England": [2010.0]})
    d = c.design_for(dataset)
    assert np.exp(d.runs_spec.internal_knots) == pytest.approx([10.0, 30.0, 60.0])
    eng = dataset.oppositions.index("England")
    assert d.opp_specs[eng].internal_knots == (2010.0,)
    with pytest.raises(ConfigError):
        FitConfig(opposition_knots={"Narnia": [2010.0]}).design_for(dataset)


def test_fmt_is_fixed_precision_and_locale_free():
    assert fmt(1 / 3) == "0.3333333333"
    assert fmt(1234567.891234) == "1234567.891"
    assert fmt(np.int64(7)) == "7"
    assert fmt(float("nan")) == "nan"
    assert fmt("England") == "England"


def test_draws_archive_round_trip_and_bytes(tmp_path):
    rng = np.random.default_rng(0)
    d = PosteriorDraws(rng.normal(size=(2, 5, 3)), ["a", "b", "c"], [], {"x": slice(0, 3)})
    write_draws(tmp_path / "one.csv.gz", d)
    write_draws(tmp_path / "two.csv.gz", d)
    assert (tmp_path / "one.csv.gz").read_bytes() == (tmp_path / "two.csv.gz").read_bytes()
    back = read_draws(tmp_path / "one.csv.gz", d.slices)
    assert back.names == d.names
    np.testing.assert_array_equal(back.draws, d.draws)


def test_gate_flags_only_unconverged():
    rng = np.random.default_rng(1)
    good = rng.normal(size=(4, 500))
    bad = good + np.arange(4)[:, None] * 3.0
    d = PosteriorDraws(np.stack([good, bad], axis=-1), ["good", "bad"], [], {})
    assert [n for n, _ in gate_failures(d, 1.1)] == ["bad"]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(out), "--players", "8", "--innings", "40", "--seed", "4"]) == EXIT_OK
    return out


def test_synth_is_deterministic(synth_dir, tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--players", "8", "--innings", "40", "--seed", "4"]) == EXIT_OK
    for f in ("data.csv", "truth.json"):
        assert (tmp_path / f).read_bytes() == (synth_dir / f).read_bytes()
    truth = json.loads((synth_dir / "truth.json").read_text())["parameters"]
    assert {"zeta2", "gamma", "xi2", "theta[P001]", "eta[P008]"} <= set(truth)


def test_synth_rejects_bad_layout(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path), "--players", "0"]) == EXIT_INVALID
    assert "error" in capsys.readouterr().err


def test_ingest_check_reports_histogram(synth_dir, capsys):
    assert main(["ingest-check", "--data", str(synth_dir / "data.csv")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "records: 320" in out
    hist = ingest(synth_dir / "data.csv").wicket_histogram()
    assert f"   0  {hist[0]}" in out


def test_ingest_check_invalid_row_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text(
        "player,year,opposition,home_away,match_innings,toss,runs,wickets\n"
        "A,2001,England,1,1,1,40,2\n"
        "A,2001,England,1,1,1,40,11\n"
    )
    assert main(["ingest-check", "--data", str(path)]) == EXIT_INVALID
    assert "line 3" in capsys.readouterr().err


def test_scorecard_flag(tmp_path, capsys):
    path = tmp_path / "sc.csv"
    path.write_text("player,date,opposition,home_away,match_innings,toss,figures\nA,2001-03-04,England,home,2,won,25.5-5-61-2\n")
    assert main(["ingest-check", "--data", str(path), "--scorecard-format"]) == EXIT_OK
    assert "records: 1" in capsys.readouterr().out


@pytest.fixture(scope="module")
def fitted(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    code = main(["fit", "--data", str(synth_dir / "data.csv"), "--out", str(out), "--seed", "2", *FIT_FLAGS])
    return out, code


def test_fit_writes_every_output(fitted):
    out, code = fitted
    assert code in (EXIT_OK, EXIT_GATE)
    for f in OUTPUTS:
        assert (out / f).is_file(), f
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 2
    assert manifest["config"]["sampler"]["n_chains"] == 2
    assert manifest["config_hash"] == FitConfig.from_dict(manifest["config"]).config_hash()
    assert set(manifest["versions"]) >= {"trunccmp", "numpy", "python"}
    assert manifest["data"]["n_records"] == 320


def test_fit_tables_have_expected_shape(fitted, synth_dir):
    out, _ = fitted
    with open(out / "player_table.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["rank"]) for r in rows] == list(range(1, 9))
    means = [float(r["mean_exp_theta"]) for r in rows]
    assert means == sorted(means, reverse=True)
    with open(out / "ppc.csv") as fh:
        ppc = list(csv.DictReader(fh))
    assert [int(r["wickets"]) for r in ppc] == list(range(11))
    assert sum(float(r["expected"]) for r in ppc) == pytest.approx(1.0, abs=1e-9)
    assert sum(int(r["observed_n"]) for r in ppc) == 320
    with gzip.open(out / DRAWS_FILE, "rt") as fh:
        header = fh.readline().strip().split(",")
        n_rows = sum(1 for _ in fh)
    assert header[:2] == ["chain", "draw"]
    assert n_rows == 2 * 150


def test_rerun_from_manifest_gives_identical_draws(fitted, synth_dir, tmp_path):
    out, code = fitted
    again = main(["fit", "--data", str(synth_dir / "data.csv"), "--config", str(out / "manifest.json"), "--out", str(tmp_path)])
    assert again == code
    assert (tmp_path / DRAWS_FILE).read_bytes() == (out / DRAWS_FILE).read_bytes()
    a = json.loads((out / "manifest.json").read_text())
    b = json.loads((tmp_path / "manifest.json").read_text())
    assert a["files"] == b["files"]


def test_short_chains_trip_the_gate(synth_dir, tmp_path, caplog):
    flags = ["--chains", "2", "--warmup", "0", "--iters", "60", "--ppc-draws", "10", "--seed", "1"]
    code = main(["fit", "--data", str(synth_dir / "data.csv"), "--out", str(tmp_path), *flags])
    assert code == EXIT_GATE
    assert "convergence gate failed" in caplog.text
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["convergence"]["passed"] is False
    assert (tmp_path / "diagnostics.csv").is_file()


def test_env_var_sets_output_dir(synth_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("TRUNCCMP_OUT", str(tmp_path / "envout"))
    assert main(["synth", "--players", "3", "--innings", "40"]) == EXIT_OK
    assert (tmp_path / "envout" / "data.csv").is_file()


def test_summarize_and_ppc_reuse_stored_draws(fitted, capsys):
    out, _ = fitted
    before = (out / "player_table.csv").read_bytes()
    assert main(["summarize", "--out", str(out), "--top", "3"]) == EXIT_OK
    assert (out / "player_table.csv").read_bytes() == before
    text = capsys.readouterr().out
    assert "away" in text and "won toss" in text
    assert main(["ppc", "--out", str(out), "--ppc-draws", "20"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("wickets,observed_n")


def test_summarize_without_fit_exits_2(tmp_path, capsys):
    assert main(["summarize", "--out", str(tmp_path)]) == EXIT_INVALID
    assert "no fit found" in capsys.readouterr().err
