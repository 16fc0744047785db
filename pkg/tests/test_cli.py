import json
import subprocess
import sys

import pytest

from quantswitch.cli import main
from quantswitch.config import ConfigError, build_model, parse_config

MINIMAL = {"model": {"family": "benchmark_gbm"}, "markovian": {"m": 10, "delta": 0.1, "n_quant": 50}}

BAD_COSTS = {
    "model": {"family": "gbm", "d": 1, "q": 3, "T": 1.0, "drift": [0, 0, 0], "vol": [1, 1, 1],
              "profit": {"kind": "linear", "intercept": [0, 0, 0], "slope": [[0], [0], [0]]},
              "terminal": {"kind": "zero"},
              "costs": [[0, 1, 3], [1, 0, 1], [3, 1, 0]]},
    "x0": 1.0,
    "markovian": {"m": 2, "delta": 0.5, "R": 3.0, "n_quant": 3},
}


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_minimal_config_round_trips():
    cfg = parse_config(json.dumps(MINIMAL))
    again = parse_config(cfg.to_json())
    assert again.to_json() == cfg.to_json()
    assert cfg.scheme == "markovian" and cfg.seed == 0
    assert cfg.x0() == [3.0]


def test_nonpositive_delta_names_field():
    bad = json.loads(json.dumps(MINIMAL))
    bad["markovian"]["delta"] = 0
    with pytest.raises(ConfigError) as exc:
        parse_config(json.dumps(bad))
    assert any(e.startswith("markovian.delta") for e in exc.value.errors)


def test_both_schemes_rejected():
    both = dict(MINIMAL, marginal={"m": 10, "nbar": 100})
    with pytest.raises(ConfigError, match="exactly one scheme"):
        parse_config(json.dumps(both))


@pytest.mark.parametrize("mutate", [
    lambda c: c.update(bogus=1),
    lambda c: c["markovian"].pop("m"),
    lambda c: c["markovian"].update(m="ten"),
    lambda c: c["markovian"].update(R=3.0, r_mult=10.0),
    lambda c: c["model"].update(family="heston"),
])
def test_schema_violations(mutate):
    cfg = json.loads(json.dumps(MINIMAL))
    mutate(cfg)
    with pytest.raises(ConfigError):
        parse_config(json.dumps(cfg))


def test_all_errors_are_listed():
    cfg = {"model": {"family": "gbm"}, "markovian": {"m": -1, "delta": -1, "n_quant": 0}}
    with pytest.raises(ConfigError) as exc:
        parse_config(json.dumps(cfg))
    assert len(exc.value.errors) >= 5


def test_build_affine_family():
    spec = {"family": "affine", "d": 2, "q": 1, "T": 1.0, "costs": [[0]],
            "profit": {"kind": "linear", "intercept": [1.0], "slope": [[0.0, 1.0]]},
            "terminal": {"kind": "zero"}, "vol_matrix": [[[1, 0], [0, 1]]]}
    model, sol = build_model(spec)
    assert model.d == 2 and sol is None


def test_validate_exit_codes(tmp_path, capsys):
    assert main(["validate", "--config", write(tmp_path, BAD_COSTS)]) == 2
    assert "FAIL" in capsys.readouterr().out
    assert main(["validate", "--config", write(tmp_path, MINIMAL)]) == 0


def test_config_error_is_structured(tmp_path, capsys):
    bad = dict(MINIMAL, extra=True)
    assert main(["solve-markovian", "--config", write(tmp_path, bad)]) == 2
    report = json.loads(capsys.readouterr().err)
    assert report["error"] == "config"


def test_solve_refuses_invalid_model(tmp_path, capsys):
    assert main(["solve-markovian", "--config", write(tmp_path, BAD_COSTS), "--out", str(tmp_path / "o")]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "validation"


def test_markovian_run_is_deterministic(tmp_path, capsys):
    cfg = write(tmp_path, dict(MINIMAL, output={"surface_csv": True}))
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["solve-markovian", "--config", cfg, "--out", str(out), "--seed", "4"]) == 0
        outs.append(out)
    for f in ("values.csv", "surface.csv"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    assert {"config_sha256", "seed", "versions", "timings_seconds"} <= set(manifest)
    assert manifest["seed"] == 4
    assert "v_1" in capsys.readouterr().out


def test_marginal_run_is_deterministic(tmp_path):
    flags = ["solve-marginal", "--m", "3", "--nbar", "12", "--paths", "20000", "--n-train", "5000"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(flags + ["--out", str(a)]) == 0
    assert main(flags + ["--out", str(b)]) == 0
    assert (a / "values.csv").read_bytes() == (b / "values.csv").read_bytes()


def test_marginal_tree_file(tmp_path):
    cfg = {"model": {"family": "benchmark_gbm"}, "marginal": {"m": 2, "nbar": 6, "n_mc": 10000, "n_train": 2000},
           "output": {"dir": str(tmp_path / "o"), "tree_file": True}}
    assert main(["solve-marginal", "--config", write(tmp_path, cfg)]) == 0
    assert (tmp_path / "o" / "tree.mq1").read_text().startswith("MQ1")


def test_quantize_gaussian(tmp_path, capsys):
    path = tmp_path / "g.txt"
    assert main(["quantize-gaussian", "--n-quant", "8", "--out-file", str(path)]) == 0
    assert path.read_text().startswith("GQ1\n1 8\n")
    cfg = dict(MINIMAL, markovian=dict(MINIMAL["markovian"], quantizer_file=str(path), n_quant=8))
    assert main(["solve-markovian", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0


def test_benchmark_preset(capsys, tmp_path):
    out = tmp_path / "t.csv"
    assert main(["benchmark", "--preset", "table1:(10,10,100)", "--out-csv", str(out)]) == 0
    assert "error=2.7" in capsys.readouterr().out
    assert out.read_text().startswith("m,delta_inv,N,value")
    assert main(["benchmark", "--preset", "table3:(1)"]) == 2


def test_convergence_sweep(capsys):
    assert main(["convergence", "--m-list", "5,10", "--delta-inv", "10", "--n-quant", "50"]) == 0
    assert capsys.readouterr().out.count("m=") == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "quantswitch.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("validate", "solve-markovian", "solve-marginal", "quantize-gaussian", "benchmark", "convergence"):
        assert cmd in proc.stdout
