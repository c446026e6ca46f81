import csv
import io
import json

import numpy as np
import pytest

from fnnqkd.cli import CSV_HEADER, main, sweep_rows
from fnnqkd.qstate import SingularTriple
from fnnqkd.security import Protocol, compare_protocols, security_report

WORKED_EXAMPLE_STATES = ['{"diag":[0.95,-0.91,0.9]}', '{"diag":[0.95,-0.88,0.85]}', '{"diag":[0.96,-0.85,0.82]}']


def _characterize(capsys, *states, extra=()):
    argv = ["characterize"]
    for s in states:
        argv += ["--state", s]
    code = main(argv + list(extra))
    return code, capsys.readouterr()


def test_characterize_useful(capsys):
    code, out = _characterize(capsys, '{"werner":0.95}')
    assert code == 0
    assert "classification Useful" in out.out
    assert "margin +0.217599" in out.out


def test_characterize_trilocal(capsys):
    code, out = _characterize(capsys, '{"werner":0.85}')
    assert code == 1
    assert "[Trilocal] classification Trilocal" in out.out
    # the same state is Useful for the CHSH protocol
    assert _characterize(capsys, '{"werner":0.85}', extra=["--protocol", "Chsh"])[0] == 0


def test_characterize_worked_example(capsys):
    code, out = _characterize(capsys, *WORKED_EXAMPLE_STATES)
    assert code == 0
    assert "margin +0.095221" in out.out
    assert "expanded lhs 30.5669" in out.out


def test_characterize_json(capsys):
    code, out = _characterize(capsys, *WORKED_EXAMPLE_STATES, extra=["--json"])
    data = json.loads(out.out)
    assert not data["identical"]
    tri = data["protocols"]["Trilocal"]
    assert tri["criterion_variant"] == ["C_N4_1", "C_N4_2"]
    assert tri["second_check"]["expanded_lhs"] == pytest.approx(30.566878, abs=1e-5)


@pytest.mark.parametrize(
    "states",
    [("nope",), ('{"werner":0.9}', '{"werner":0.9}'), ('{"diag":[0.95,0.91,0.9]}',), ('{"werner":2}',)],
)
def test_characterize_input_errors(capsys, states):
    code, out = _characterize(capsys, *states)
    assert code == 2
    assert out.err.startswith("error:")


def test_verify_thresholds_json(capsys):
    code = main(["verify-thresholds", "--grid-step", "0.05", "--json"])
    data = json.loads(capsys.readouterr().out)
    assert code == 0
    assert data["tolerance"] == pytest.approx(5e-3)
    assert len(data["rows"]) == 5
    assert all(r["delta"] <= 5e-3 for r in data["rows"])


def test_simulate_bundled(capsys, tmp_path):
    out = tmp_path / "run.json"
    assert main(["simulate", "phi_plus", "--out", str(out)]) == 0
    assert "abort stage: None" in capsys.readouterr().out
    data = json.loads(out.read_text())
    assert data["qber"]["estimate"] == 0.0
    assert len(data["hub_key"].split()) == data["sifted_length"]
    assert main(["simulate", "eve_all_links"]) == 1
    assert "abort stage: WitnessTest" in capsys.readouterr().out


def test_simulate_variant_divergence(capsys):
    # Werner(0.75) passes both CHSH checks but not the trilocal witness
    assert main(["simulate", "werner_075_chsh", "--json"]) == 0
    chsh = json.loads(capsys.readouterr().out)
    assert main(["simulate", "werner_075_chsh", "--variant", "trilocal", "--json"]) == 1
    tri = json.loads(capsys.readouterr().out)
    assert chsh["abort_stage"] is None
    assert tri["abort_stage"] == "WitnessTest"


def test_simulate_config_file_and_overrides(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"states": [{"werner": 0.95}], "rounds": 5000}))
    assert main(["simulate", str(cfg), "--rounds", "20000", "--seed", "3", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["seed"] == 3
    assert data["sifting_rounds"] == 10_000


@pytest.mark.parametrize("argv", [["simulate", "missing_config"], ["simulate", "phi_plus", "--rounds", "10"]])
def test_simulate_errors(capsys, argv):
    assert main(argv) == 2


def _read_sweep(text):
    lines = text.splitlines()
    assert lines[0] == CSV_HEADER
    body = [l for l in lines if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def test_sweep_identical_plane(capsys, tmp_path):
    out = tmp_path / "plane.csv"
    assert main(["sweep", "--grid-step", "0.01", "--out", str(out)]) == 0
    rows = _read_sweep(out.read_text())
    assert len(rows) == 101 * 101
    useful = np.mean([r["class_trilocal"] == "Useful" for r in rows])
    gap = 2 - 2 ** (5 / 6)
    # area above the line t1 + t2 = 2^{5/6}, within two cells along the boundary
    assert abs(useful - gap**2 / 2) <= 2 * 0.01 * np.sqrt(2) * gap


@pytest.mark.parametrize("family, column", [("Ext3", "chsh_pass_fnn_fail"), ("Ext4", "product_band")])
def test_sweep_ext_regions_nonempty(family, column):
    cols = sweep_rows(family, 0.02)
    assert np.any(cols[column])


@pytest.mark.parametrize("family", ["Ext1", "Ext2", "Ext3", "Ext4"])
def test_sweep_matches_security_module(family):
    cols = sweep_rows(family, 0.05)
    fixed = {"Ext1": (0.95, 0.95, 0.96), "Ext2": (0.92, 0.91, 0.93),
             "Ext3": (0.92, 0.94, 0.95), "Ext4": (0.92, 0.91, 0.94)}[family]
    rng = np.random.default_rng(0)
    for k in rng.choice(len(cols["t12"]), size=40, replace=False):
        triples = [SingularTriple(t1, cols[c][k]) for t1, c in zip(fixed, ("t12", "t22", "t32"))]
        cmp = compare_protocols(triples, identical=False)
        assert cols["fnn_first_margin"][k] == pytest.approx(cmp.first_trilocal.margin, abs=1e-12)
        assert cols["fnn_second_margin"][k] == pytest.approx(cmp.second_trilocal.margin, abs=1e-12)
        assert cols["chsh_first_margin"][k] == pytest.approx(cmp.first_chsh.margin, abs=1e-12)
        assert cols["chsh_pass_fnn_fail"][k] == cmp.r2_witness
        assert cols["class_trilocal"][k] == security_report(triples, Protocol.TRILOCAL, False).classification.value
        assert cols["class_chsh"][k] == security_report(triples, Protocol.CHSH, False).classification.value


def test_sweep_plane_matches_security_module():
    cols = sweep_rows("IdenticalPlane", 0.05)
    for k in range(0, len(cols["t1"]), 7):
        t1, t2 = cols["t1"][k], cols["t2"][k]
        triples = [SingularTriple.from_values([t1, t2])] * 3
        assert cols["class_trilocal"][k] == security_report(triples, Protocol.TRILOCAL).classification.value
        assert cols["class_chsh"][k] == security_report(triples, Protocol.CHSH).classification.value


def test_sweep_json(capsys):
    assert main(["sweep", "--family", "Ext2", "--grid-step", "0.2", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["schema"] == "fnn-qkd-lab sweep v1"
    assert set(data["rows"][0]) >= {"t12", "t22", "t32", "class_trilocal", "qber_min"}


@pytest.mark.parametrize(
    "argv",
    [
        ["sweep", "--grid-step", "0"],
        ["sweep", "--range", "0.5", "1.5"],
        ["sweep", "--family", "Ext9"],
        ["sweep", "--out", "/nonexistent/dir/x.csv"],
    ],
)
def test_sweep_errors(capsys, argv):
    assert main(argv) == 2


def test_bound(capsys):
    assert main(["bound", "--t", "0.9,0.9", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["bound"] == pytest.approx(np.sqrt(2) * 0.9)
    assert data["violation"]
    assert main(["bound", "--state", '{"werner":0.85}']) == 0
    assert "no violation" in capsys.readouterr().out
    assert main(["bound"]) == 2


def test_parser_errors(capsys):
    assert main(["--help"]) == 0
    assert main(["frobnicate"]) == 2
    assert main([]) == 2
