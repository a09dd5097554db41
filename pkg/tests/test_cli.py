import json

import pytest

from catenoid_tails.cli import dispatch, read_config, verify_manifest

RUN_CFG = """\
# short free evolution
l = 0
rmin = 0.5
nodes = 401
tmax = 4
R = 2
bump.center = 6
bump.width = 1.5
observers = 3, 5
p_list = 0.5, 1.0, 1.4
record_every = 4
"""


def test_verify_exit_codes(capsys):
    assert dispatch(["verify"]) == 0
    assert "FAIL" not in capsys.readouterr().out
    assert dispatch(["verify", "--corrupt", "--json"]) == 1
    recs = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert set(recs[0]) == {"identity", "pass", "residual"}
    assert [r["identity"] for r in recs if not r["pass"]] == ["Q1K"]


def test_usage_errors(tmp_path, capsys):
    assert dispatch(["evolve", "--out", str(tmp_path)]) == 2
    assert dispatch(["evolve", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 2
    assert dispatch(["nonsense"]) == 2
    assert dispatch(["verify", "--bogus-flag"]) == 2
    assert dispatch([]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("l = 0\nwidth_of_universe = 3\n")
    assert dispatch(["evolve", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "usage" in capsys.readouterr().err


def test_config_parsing(tmp_path):
    f = tmp_path / "a.cfg"
    f.write_text("a = 1\nb = 2.5  # comment\nc = 1, 2\nd = true\ne = inf\nsource.kind = power\n")
    c = read_config(f)
    assert c == {"a": 1, "b": 2.5, "c": (1, 2), "d": True, "e": float("inf"), "source.kind": "power"}


def test_evolve_outputs_and_reproducibility(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(RUN_CFG)
    a, b = tmp_path / "a", tmp_path / "b"
    assert dispatch(["evolve", "--config", str(cfg), "--out", str(a)]) == 0
    assert dispatch(["evolve", "--config", str(cfg), "--out", str(b), "--threads", "2"]) == 0
    names = {"timeseries.csv", "tails.json", "hierarchy.json", "manifest.json"}
    assert {f.name for f in a.iterdir()} == names
    for name in names - {"manifest.json"}:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    header = (a / "timeseries.csv").read_text().splitlines()[0].split(",")
    assert header == ["tau", "E^0.5", "E^1", "E^1.4", "tildeE^0.5", "tildeE^1", "tildeE^1.4", "u(3)", "u(5)"]
    tails = json.loads((a / "tails.json").read_text())
    assert [t["observer"] for t in tails] == [3.0, 5.0]
    assert not any(t["sufficient"] for t in tails)  # 4 time units cannot resolve a tail
    hier = json.loads((a / "hierarchy.json").read_text())
    assert {(h["form"], h["p"]) for h in hier} == {("u", 0.5), ("u", 1.0), ("u", 1.4), ("Y", 0.5),
                                                   ("Y", 1.0), ("Y", 1.4)}
    m = json.loads((a / "manifest.json").read_text())
    assert m["subcommand"] == "evolve" and m["config"]["nodes"] == 401 and m["config"]["threads"] == 1
    assert verify_manifest(a)
    (a / "tails.json").write_text("[]")
    assert not verify_manifest(a)


def test_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("CATENOID_TAILS_THREADS", "3")
    assert dispatch(["smooth", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["config"]["threads"] == 3
    monkeypatch.setenv("CATENOID_TAILS_THREADS", "many")
    assert dispatch(["smooth", "--out", str(tmp_path)]) == 2


def test_profile_and_spectrum(tmp_path, capsys):
    assert dispatch(["profile", "--grid", "0:4:5", "--out", str(tmp_path / "p" / "profile.csv")]) == 0
    lines = (tmp_path / "p" / "profile.csv").read_text().splitlines()
    assert lines[0] == "rho,Z,g_rr,F_rho,II2" and len(lines) == 6
    assert verify_manifest(tmp_path / "p")
    capsys.readouterr()
    assert dispatch(["spectrum", "--lmax", "2", "--nodes", "400", "--json"]) == 0
    recs = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert [r["l"] for r in recs] == [0, 1, 2]
    assert recs[0]["mu2"] > 0 and recs[1]["mu2"] is None
    assert isinstance(recs[1]["zero_residual"], float)


def test_toy_subcommands(tmp_path, capsys):
    assert dispatch(["shoot", "--out", str(tmp_path / "s")]) == 0
    assert {f.name for f in (tmp_path / "s").iterdir()} == {"trajectory.csv", "shoot.json", "manifest.json"}
    big = tmp_path / "big.cfg"
    big.write_text("eps = 5\n")
    assert dispatch(["shoot", "--config", str(big)]) == 1
    hc = tmp_path / "h.cfg"
    hc.write_text("trials = 10\n")
    assert dispatch(["hardy", "--config", str(hc), "--seed", "7"]) == 0
    assert dispatch(["smooth", "--json"]) == 0


def test_f0_decay_footer(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("nr = 3\n")
    assert dispatch(["f0-decay", "--config", str(cfg), "--out", str(tmp_path / "f0.csv")]) == 0
    lines = (tmp_path / "f0.csv").read_text().splitlines()
    assert lines[0] == "tau,r,theta,F0" and len(lines) == 5
    footer = json.loads(lines[-1][2:])
    assert set(footer) == {"fitted_slope", "leading", "subleading"}
