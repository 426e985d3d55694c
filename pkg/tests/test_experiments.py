import csv
import math

import numpy as np
import pytest

import snfg.experiments as ex
import snfg.sim as sim_mod
from snfg import cli, config
from snfg.encounter.game import PilotDecisionError
from snfg.sim import EncounterConfig, EncounterSim, OutcomeRecord, encounter_rng, generate_encounter
from snfg.strategy import Decision


def rec(F, nmac=False, discarded=False, failed=False, seed=0):
    return OutcomeRecord(seed=seed, d_min=max(F, 1.0), nmac=nmac, F=F, discarded=discarded, failed=failed)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def test_defaults_resolve_to_default_config():
    assert config.build(config.defaults()) == EncounterConfig()


def test_parse_overrides_and_comments():
    v = config.parse("# sweep point\nnoise.M_w = 2   # doubled\n\nstrategy.M = 10\ntcas.DMOD=5000\n")
    cfg = config.build(v)
    assert cfg.pilot_noise == 2.0 and cfg.pilot.M == 10 and cfg.tcas.dmod == 5000.0
    assert isinstance(v["strategy.M"], int)


@pytest.mark.parametrize("text", ["strategy.M = 2.5", "nosuch.key = 1", "noise.M_w 2", "noise.M_w = fast"])
def test_parse_errors(text):
    with pytest.raises(config.ConfigError):
        config.parse(text)


def test_invalid_values_fail_at_build():
    with pytest.raises(config.ConfigError):
        config.build(config.parse("noise.M_w = -1"))
    with pytest.raises(config.ConfigError):
        config.build(config.parse("sim.mode = diagonal"))


def test_dump_roundtrip_and_documented_defaults():
    v = config.parse("utility.alpha1 = 2.5\nsim.mode = horizontal")
    assert config.parse(config.dump(v)) == v
    assert config.parse(config.documented_defaults()) == config.defaults()


def test_load_missing_file(tmp_path):
    with pytest.raises(config.ConfigError):
        config.load(tmp_path / "absent.cfg")


def test_angles_read_in_degrees():
    cfg = config.build(config.parse("horizontal.hard_rate = 6\nsim.approach_angle_max = 180"))
    assert cfg.heading_rates[0] == pytest.approx(math.radians(6))
    assert cfg.approach_angle_range[1] == pytest.approx(math.pi)


# ---------------------------------------------------------------------------
# Batches and statistics
# ---------------------------------------------------------------------------

def test_bootstrap_ci_contains_mean_and_is_seeded():
    x = np.random.default_rng(0).normal(100, 10, 50)
    lo, hi = ex.bootstrap_ci(x, seed=3)
    assert lo <= x.mean() <= hi
    assert (lo, hi) == ex.bootstrap_ci(x, seed=3)
    assert ex.bootstrap_ci([5.0]) == (5.0, 5.0)


def test_summarize_counts():
    outs = [rec(100.0), rec(0.0, nmac=True), rec(50.0, discarded=True), rec(10.0, failed=True)]
    m = ex.summarize(outs, config.defaults(), 1)
    assert (m.encounters, m.completed, m.discarded, m.failed) == (4, 2, 1, 1)
    assert m.completed + m.discarded + m.failed == m.encounters
    assert m.mean_F == 50.0 and m.nmac_rate == 0.5
    assert m.ci[0] <= m.mean_F <= m.ci[1]


def test_single_encounter_batch_equals_record():
    for seed in range(10):
        m, outs = ex.run_batch(None, 1, seed)
        if outs[0].usable:
            assert m.mean_F == outs[0].F
            return
    pytest.fail("no usable encounter")


def test_batch_independent_of_worker_count():
    m1, o1 = ex.run_batch(None, 6, 21, workers=1)
    m2, o2 = ex.run_batch(None, 6, 21, workers=2)
    assert m1.mean_F == m2.mean_F and m1.ci == m2.ci
    assert [o.canonical_bytes() for o in o1] == [o.canonical_bytes() for o in o2]


def test_all_failed_batch_raises(monkeypatch):
    game = sim_mod.get_game(EncounterConfig().game_params())

    def boom(*a, **k):
        raise PilotDecisionError("advisory never reproduced", ra=25)

    monkeypatch.setattr(game, "decide", boom)
    with pytest.raises(ex.BatchError):
        ex.run_batch(None, 3, 5, workers=1, max_failure_fraction=1.0)


def test_worker_env_override(monkeypatch):
    monkeypatch.setenv(ex.WORKERS_ENV, "3")
    assert ex.resolve_workers() == 3
    assert ex.resolve_workers(2) == 2
    monkeypatch.setenv(ex.WORKERS_ENV, "many")
    with pytest.raises(ValueError):
        ex.resolve_workers()


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def test_sweep_spec_validation():
    with pytest.raises(config.ConfigError):
        ex.SweepSpec("noise.loudness", (1.0,))
    with pytest.raises(ValueError):
        ex.SweepSpec("noise.M_w", ())
    with pytest.raises(ValueError):
        ex.SweepSpec("noise.M_w", (1.0,), encounters=0)


def test_single_point_sweep_is_a_batch():
    res = ex.run_sweep(ex.SweepSpec("tcas.DMOD", (3500.0,), encounters=4, root_seed=8))
    m, _ = ex.run_batch(None, 4, 8)
    assert res.manifests[0].mean_F == m.mean_F


def test_sweep_points_use_disjoint_streams():
    res = ex.run_sweep(ex.SweepSpec("noise.M_w", (1.0, 1.0), encounters=3, root_seed=2))
    a, b = res.outcomes
    assert [o.d_min for o in a] != [o.d_min for o in b]
    assert len(list(res.rows())) == 2


def test_spearman_trend_direction():
    grid = (1, 2, 3, 4)
    pts = [[rec(100.0 * g + j) for j in range(20)] for g in grid]
    rho, p = ex.spearman_trend(grid, pts)
    assert rho > 0.9 and p < 1e-6
    pts[0].append(rec(1e6, discarded=True))
    assert ex.spearman_trend(grid, pts)[0] == rho


# ---------------------------------------------------------------------------
# Horizontal advisories
# ---------------------------------------------------------------------------

H_CFG = EncounterConfig(mode="horizontal")


def _second_alert(monkeypatch=None, seed=30):
    """Run until the second aircraft's first advisory and capture the search inputs."""
    captured = {}

    def policy(sim, i, cur, ra, w_tcas):
        captured.update(sim=sim.clone(np.random.default_rng(0)), i=i, cur=cur, ra=ra, w_tcas=w_tcas)
        return 0.0

    for k in range(40):
        rng = encounter_rng(seed, 0, k)
        sim = EncounterSim(H_CFG, generate_encounter(H_CFG, rng), rng, hra_policy=policy).run()
        if captured:
            return captured
    pytest.fail("no doubly alerted encounter")


def test_candidate_order_prefers_maintain_then_small_turns():
    rates = H_CFG.heading_rates
    order = ex.candidate_order(rates)
    assert order[0] == 0.0
    assert [abs(r) for r in order] == sorted(abs(r) for r in rates)


def test_search_ties_choose_maintain(monkeypatch):
    c = _second_alert()
    game = sim_mod.get_game(H_CFG.game_params())
    monkeypatch.setattr(game, "decide", lambda *a, **k: Decision((0.0, 0.0)))
    choice = ex.horizontal_ra_search(c["sim"], c["i"], c["cur"], c["ra"], c["w_tcas"], 3, np.random.default_rng(1))
    assert len(set(choice.means.values())) == 1
    assert choice.value == 0.0


def test_search_returns_argmax():
    c = _second_alert()
    choice = ex.horizontal_ra_search(c["sim"], c["i"], c["cur"], c["ra"], c["w_tcas"], 3, np.random.default_rng(2))
    assert choice.means[choice.value] >= choice.means[0.0]
    assert choice.means[choice.value] == max(choice.means.values())
    assert set(choice.means) == set(H_CFG.heading_rates)


def test_search_requires_horizontal_mode():
    s = generate_encounter(EncounterConfig(), np.random.default_rng(3))
    sim = EncounterSim(EncounterConfig(), s, np.random.default_rng(3))
    with pytest.raises(ValueError):
        ex.horizontal_ra_search(sim, 1, s, 25, None, 3, np.random.default_rng(0))


def test_horizontal_comparison_is_paired():
    comp = ex.run_horizontal(None, 3, 4, rollouts=2)
    assert len(comp.search) == len(comp.baseline) == 3
    for a, b in zip(comp.search, comp.baseline):
        assert a.seed == b.seed
        # the first alerted aircraft always maintains heading
        assert 0.0 in a.hra or a.hra == (None, None)
    assert comp.manifest_search.label["policy"] == "search"


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _lines(path):
    return list(csv.reader(open(path)))


def test_report_empty_outcomes(tmp_path):
    paths = ex.emit_report(None, [], tmp_path)
    assert _lines(paths["outcomes"]) == [list(ex.OUTCOME_COLUMNS)]


def test_report_three_outcomes(tmp_path):
    outs = [rec(10.0, seed=(1, 0, 0)), rec(0.0, nmac=True, seed=(1, 0, 1)), rec(700.0, seed=(1, 0, 2))]
    m = ex.summarize(outs, config.defaults(), 1)
    paths = ex.emit_report(m, outs, tmp_path, hist_bins=4)
    rows = _lines(paths["outcomes"])
    assert len(rows) == 4 and rows[0][:11] == ["seed", "d_min", "nmac", "F", "discarded", "ra1", "ra2",
                                                "action1", "action2", "t_ra1", "t_ra2"]
    hist = _lines(paths["histogram"])
    assert sum(int(r[2]) for r in hist[1:]) == 3
    kv = dict(line.split(" = ", 1) for line in open(paths["manifest"]).read().splitlines())
    assert kv["encounters"] == "3" and kv["config.noise.M_w"] == "1.0"
    assert float(kv["ci_low"]) <= float(kv["mean_F"]) <= float(kv["ci_high"])


def test_histogram_counts_sum():
    x = np.random.default_rng(0).exponential(1000, 137)
    edges, counts = ex.histogram(x, 7)
    assert counts.sum() == 137 and len(edges) == 8


def test_report_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        ex.emit_report(None, [], blocker / "sub")


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

def test_cli_config_listing(capsys):
    assert cli.main(["config"]) == 0
    assert "noise.M_w = 1.0" in capsys.readouterr().out


def test_cli_batch_writes_outputs(tmp_path):
    assert cli.main(["batch", "--encounters", "2", "--seed", "3", "--out", str(tmp_path),
                     "--emit-trajectories"]) == 0
    assert len(_lines(tmp_path / "outcomes.csv")) == 3
    assert (tmp_path / "manifest.txt").exists() and (tmp_path / "histogram.csv").exists()
    assert len(list((tmp_path / "trajectories").iterdir())) == 2


def test_cli_simulate(tmp_path):
    assert cli.main(["simulate", "--seed", "2", "--out", str(tmp_path)]) == 0
    assert _lines(tmp_path / "trajectory.csv")[0][0] == "time"


def test_cli_sweep(tmp_path):
    code = cli.main(["sweep", "--param", "tcas.ZTHR", "--values", "400,800", "--encounters", "2",
                     "--out", str(tmp_path)])
    assert code == 0
    assert len(_lines(tmp_path / "sweep.csv")) == 3


def test_cli_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("tcas.DMODD = 4000\n")
    assert cli.main(["batch", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert cli.main(["batch", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 1
    assert cli.main(["sweep", "--param", "x.y", "--values", "1", "--out", str(tmp_path)]) == 1
    assert cli.main(["batch", "--set", "noise.M_w=-2", "--out", str(tmp_path)]) == 1


def test_cli_config_file_applied(tmp_path, monkeypatch):
    good = tmp_path / "good.cfg"
    good.write_text("noise.M_w = 0.5\n")
    seen = {}

    def fake(values, n, seed, **kw):
        seen.update(values)
        return ex.summarize([rec(5.0)], values, seed), [rec(5.0)]

    monkeypatch.setattr(ex, "run_batch", fake)
    assert cli.main(["batch", "--config", str(good), "--encounters", "1", "--out", str(tmp_path)]) == 0
    assert seen["noise.M_w"] == 0.5


def test_cli_runtime_failure_exit_code(tmp_path, monkeypatch):
    def fail(*a, **k):
        raise ex.BatchError("7 of 10 encounters failed")

    monkeypatch.setattr(ex, "run_batch", fail)
    assert cli.main(["batch", "--out", str(tmp_path)]) == 2


def test_cli_bad_worker_env(tmp_path, monkeypatch):
    monkeypatch.setenv(ex.WORKERS_ENV, "0")
    assert cli.main(["batch", "--encounters", "1", "--out", str(tmp_path)]) == 1
