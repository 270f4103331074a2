import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from plateau import cli
from plateau import io as pio
from plateau.plots import PlotSpec, emit_plot


def run(tmp_path, *argv):
    return cli.main(list(argv) + ["--out-dir", str(tmp_path)])


def test_csv_roundtrip_bit_exact(tmp_path, rng):
    vals = rng.normal(size=50) * 10.0 ** rng.integers(-300, 300, size=50)
    rows = [[i, v] for i, v in enumerate(vals)]
    path = pio.write_csv(tmp_path / "a.csv", ["i", "v"], rows)
    header, back = pio.read_csv(path)
    assert header == ["i", "v"]
    assert all(b[1] == v and isinstance(b[1], float) for b, v in zip(back, vals))


def test_srw_closed_form_row(tmp_path):
    assert run(tmp_path, "srw", "--dim", "1", "--mu-omega", "0.5", "--box", "40",
               "--nmax", "200") == 0
    header, rows = pio.read_csv(tmp_path / "srw.csv")
    row0 = rows[0]
    assert row0[0] == 0
    assert abs(row0[1] - 1.154701) < 1e-6
    man = pio.read_json(tmp_path / "manifest.json")
    assert man["subcommand"] == "srw" and man["tool"]["name"] == "plateau"
    assert "wall_time_s" in man and man["config"]["box"] == 40


def test_torus_circulant_rows(tmp_path):
    assert run(tmp_path, "torus-srw", "--dim", "1", "--period", "3", "--z-omega", "0.5",
               "--route", "fourier") == 0
    _, rows = pio.read_csv(tmp_path / "torus_srw.csv")
    assert [r[0] for r in rows] == [0, 1, 2]
    assert np.allclose([r[1] for r in rows], [1.2, 0.4, 0.4], atol=1e-15)


def test_empty_observable_is_usage_error(tmp_path, capsys):
    code = run(tmp_path, "wsaw", "--dim", "2", "--beta", "0.5", "--nmax", "4")
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config"


@pytest.mark.parametrize("argv", [
    ["srw", "--dim", "0", "--mu", "0.1"],
    ["torus-srw", "--dim", "2", "--period", "2", "--z", "0.1"],
    ["srw", "--dim", "2", "--mu", "0.1", "--mu-omega", "0.5"],
    ["wsaw", "--dim", "2", "--beta", "1.5", "--nmax", "4", "--observable", "chi", "--z", "0.1"],
])
def test_invalid_config_exit_two(tmp_path, argv):
    assert run(tmp_path, *argv) == 2


def test_budget_refusal_exit_three(tmp_path):
    assert run(tmp_path, "wsaw", "--dim", "5", "--beta", "0.1", "--nmax", "30",
               "--observable", "chi", "--z", "0.05") == 3
    assert run(tmp_path, "torus-srw", "--dim", "3", "--period", "40", "--z", "0.1",
               "--route", "solve") == 3


def test_check_failure_exit_four(tmp_path, monkeypatch):
    from plateau import torus

    real = torus.plateau_check_srw

    def broken(*a, **k):
        rep = real(*a, **k)
        rep.assertion = "armed"
        rep.scaled_min = -1.0
        return rep

    monkeypatch.setattr(torus, "plateau_check_srw", broken)
    assert run(tmp_path, "torus-srw", "--dim", "3", "--period", "6", "--rho", "0.01",
               "--check", "plateau") == 4


def test_config_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dim": 1, "mu_omega": 0.5, "box": 7, "nmax": 50}))
    out = tmp_path / "o"
    assert cli.main(["srw", "--config", str(cfg), "--box", "9", "--out-dir", str(out)]) == 0
    man = pio.read_json(out / "manifest.json")
    assert man["config"]["box"] == 9 and man["config"]["nmax"] == 50
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert cli.main(["srw", "--config", str(bad), "--out-dir", str(out)]) == 2


def test_env_default_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUT, str(tmp_path / "env"))
    assert cli.main(["torus-srw", "--dim", "1", "--period", "3", "--z", "0.25"]) == 0
    assert (tmp_path / "env" / "torus_srw.csv").exists()


def test_rerun_from_manifest_bit_exact(tmp_path):
    a = tmp_path / "a"
    assert cli.main(["wsaw-mc", "--dim", "2", "--period", "4", "--beta", "0.3", "--z", "0.1",
                     "--samples", "5000", "--shards", "2", "--seed", "8",
                     "--out-dir", str(a)]) == 0
    b = tmp_path / "b"
    assert cli.main(["rerun", str(a / "manifest.json"), "--out-dir", str(b)]) == 0
    assert (a / "wsaw_mc.csv").read_bytes() == (b / "wsaw_mc.csv").read_bytes()
    header, _ = pio.read_csv(a / "wsaw_mc.csv")
    assert header == ["shell", "x_repr", "mean", "stderr", "n_eff"]


def test_lace_json_fields(tmp_path):
    assert run(tmp_path, "lace", "--dim", "2", "--beta", "0.2", "--z", "0.12",
               "--nmax", "8") == 0
    rep = pio.read_json(tmp_path / "lace.json")
    for key in ("lambda", "mu_omega", "pi_moment0", "pi_moment2", "e_moment_residuals",
                "f_sup_weighted", "identity_residual"):
        assert key in rep


def _svg_counts(path):
    root = ET.parse(path).getroot()
    return sum(1 for _ in root.iter())


def test_plot_profile_structure(tmp_path):
    assert run(tmp_path, "torus-srw", "--dim", "3", "--period", "8", "--p", "2",
               "--check", "plateau", "--plot", "on") == 0
    svg = tmp_path / "torus_srw_profile.svg"
    text = svg.read_text()
    assert text.startswith("<?xml") and "<svg" in text
    _, rows = pio.read_csv(tmp_path / "torus_srw_profile.csv")
    dist = np.array([r[0] for r in rows])
    val = np.array([r[1] for r in rows])
    # decay then flat: steep near the origin, within a small factor far out
    assert val[dist == 0].max() / val[np.abs(dist - 2) < 1e-9].max() > 10
    far = val[dist >= 4]
    assert far.max() / far.min() < 10
    # one marker per data row
    root = ET.parse(svg).getroot()
    data = [e for e in root.iter() if e.get("id") == "data"]
    assert len(data) == 1
    assert sum(1 for e in data[0].iter() if e.tag.endswith("use")) == len(rows)
    assert _svg_counts(svg) > 50


def test_plot_is_deterministic(tmp_path):
    data = pio.write_csv(tmp_path / "d.csv", ["n", "value"], [[n, 2.0 ** -n] for n in range(1, 9)])
    spec = PlotSpec("loglog-fit", "n", "value", logx=True,
                    fit={"amplitude": 1.0, "power": 0.0, "rate": np.log(2), "residual": 0.0})
    a = emit_plot(spec, data, tmp_path / "a.svg").read_bytes()
    b = emit_plot(spec, data, tmp_path / "b.svg").read_bytes()
    assert a == b
    assert b"residual" in a


def test_window_scaling_plot(tmp_path):
    data = pio.write_csv(tmp_path / "w.csv", ["r", "chi"], [[6, 21.0], [8, 42.5], [10, 71.9]])
    spec = PlotSpec("window-scaling", "r", "chi",
                    fit={"slope": 2.4, "intercept": -1.25, "expected_slope": 2.5})
    text = emit_plot(spec, data, tmp_path / "w.svg").read_text()
    assert "slope" in text


def test_plot_missing_column(tmp_path):
    data = pio.write_csv(tmp_path / "d.csv", ["n", "value"], [[1, 1.0]])
    with pytest.raises(KeyError):
        emit_plot(PlotSpec("profile", "n", "nope"), data, tmp_path / "x.svg")
    assert run(tmp_path, "plot", "--kind", "profile", "--data", str(data), "--x", "n",
               "--y", "nope") == 2
