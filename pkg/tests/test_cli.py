import json
import subprocess
import sys

import numpy as np
import pytest

from fourier_auctions.cli import main, read_dense, read_table

from conftest import PAPER_ORDER, TABLE1, TABLE1_V, from_paper


def write_rows(path, rows, header="bundle,value"):
    path.write_text(header + "\n" + "".join(f"{b},{v}\n" for b, v in rows))
    return str(path)


@pytest.fixture
def table1_csv(tmp_path):
    return write_rows(tmp_path / "v.csv", zip(PAPER_ORDER, TABLE1_V))


def test_transform_table1(tmp_path, table1_csv):
    out = tmp_path / "phi.csv"
    assert main(["transform", table1_csv, "--kind", "wht", "--out", str(out)]) == 0
    freqs, coeffs, m = read_table(str(out))
    phi = np.zeros(8)
    phi[freqs] = coeffs
    np.testing.assert_allclose(phi, from_paper(TABLE1["wht"]), atol=1e-12)
    back = tmp_path / "v2.csv"
    assert main(["transform", str(out), "--kind", "wht", "--direction", "inv", "--out", str(back)]) == 0
    np.testing.assert_allclose(read_dense(str(back)), read_dense(table1_csv), atol=1e-12)


def test_fit_and_wdp(tmp_path, table1_csv, capsys):
    supp = write_rows(tmp_path / "s.csv", [(b, "") for b in PAPER_ORDER], "frequency")
    spec = tmp_path / "ft3.csv"
    assert main(["fit", "--reports", table1_csv, "--support", supp, "--kind", "ft3", "--out", str(spec)]) == 0
    lp = tmp_path / "model.lp"
    assert main(["wdp", str(spec), "--kind", "ft3", "--lp", str(lp)]) == 0
    out = capsys.readouterr().out
    assert "bidder 0: 111" in out and "objective: 5" in out
    assert lp.read_text().startswith("Maximize")


def test_gen_writes_instance(tmp_path):
    out = tmp_path / "inst"
    assert main(["gen", "--m", "4", "--family", "sparse-synthetic", "--seed", "3", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["instance"]["seed"] == 3 and manifest["instance"]["m"] == 4
    assert (out / "bidder_0.csv").exists() and (out / "bidder_0_wht_spectrum.csv").exists()
    v = read_dense(str(out / "bidder_0.csv"))
    assert v[0] == 0.0 and v.min() >= 0


def test_run_mechanisms(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "instance": {"m": 4, "roster": [["national", 1], ["regional", 1]], "family": "global-synergy"},
        "seeds": [0, 1],
        "mechanism": {"split": [3, 2, 1, 2], "superset": 16, "train": {"epochs": 50}},
    }))
    for cmd in ("run-hybrid", "run-mlca"):
        out = tmp_path / cmd
        assert main([cmd, "--config", str(cfg), "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert [r["seed"] for r in manifest["runs"]] == [0, 1]
        assert all(0 <= r["efficiency"] <= 1 for r in manifest["runs"])
        assert (out / "trace.csv").read_text().startswith("seed,phase,efficiency")


def test_experiment(tmp_path):
    cfg = tmp_path / "e.json"
    cfg.write_text(json.dumps({"id": "spectral-energy", "instance": {"m": 6, "family": "global-synergy"}, "seeds": 2}))
    out = tmp_path / "res"
    assert main(["experiment", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "spectral_energy.csv").exists() and (out / "manifest.json").exists()


def test_exit_codes(tmp_path, table1_csv):
    assert main(["gen", "--m", "40", "--out", str(tmp_path / "x")]) == 3
    assert main(["gen", "--family", "mrvm", "--out", str(tmp_path / "x")]) == 2
    assert main(["transform", str(tmp_path / "missing.csv"), "--kind", "wht"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["experiment", "--config", str(bad)]) == 2
    assert main(["experiment", "--out", str(tmp_path / "y")]) == 2  # no id
    short = write_rows(tmp_path / "short.csv", [("000", 0), ("100", 1)])
    assert main(["transform", short, "--kind", "wht"]) == 2
    with pytest.raises(SystemExit) as e:
        main(["transform", table1_csv, "--kind", "ft9"])
    assert e.value.code == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "fourier_auctions", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
