import json

import pytest

from pairfx import oracle
from pairfx.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_default_estimate_grid(capsys, tmp_path):
    code, out, _ = run(capsys, "estimate", "--out", str(tmp_path / "r"))
    assert code == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    cells = {(c["stratum"], c["model"], c["estimand"]) for c in rep["cells"]}
    assert cells == {(s, m, e) for s in ("All", "MZ", "DZ") for m in ("M1", "M2")
                     for e in ("spillover", "main")}
    assert rep["ctc"]
    assert "CTC" in out and out == (tmp_path / "r.txt").read_text()


def test_single_cell_and_render_round_trip(capsys, tmp_path):
    prefix = tmp_path / "one"
    code, out, _ = run(capsys, "estimate", "--model", "M2", "--estimand", "spillover",
                       "--ci", "wald", "--out", str(prefix))
    assert code == 0
    rep = json.loads((tmp_path / "one.json").read_text())
    assert [(c["stratum"], c["model"], c["estimand"]) for c in rep["cells"]] == [("All", "M2", "spillover")]
    code, again, _ = run(capsys, "render", str(tmp_path / "one.json"), "--out", str(tmp_path / "again.txt"))
    assert code == 0
    assert (tmp_path / "again.txt").read_bytes() == (tmp_path / "one.txt").read_bytes()


def test_invalid_estimand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["estimate", "--estimand", "bogus"])
    assert exc.value.code == 2


def test_missing_data_file_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["estimate", str(tmp_path / "nope.csv")])
    assert exc.value.code == 2


def test_malformed_data_exits_1(capsys, tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("pair_id,y1\n1,2\n")
    code, _, err = run(capsys, "estimate", str(path))
    assert code == 1 and err.startswith("error: MissingColumn")


def test_simulate_is_deterministic(capsys, tmp_path, monkeypatch):
    monkeypatch.delenv("PAIRFX_SEED", raising=False)
    for k in ("a", "b"):
        assert run(capsys, "simulate", "--preset", "dgm2", "--models", "M1", "--reps", "3",
                   "--n", "200", "--seed", "7", "--out", str(tmp_path / k))[0] == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    monkeypatch.setenv("PAIRFX_SEED", "7")
    run(capsys, "simulate", "--preset", "dgm2", "--models", "M1", "--reps", "3",
        "--n", "200", "--out", str(tmp_path / "env.json"))
    assert (tmp_path / "env.json").read_bytes() == (tmp_path / "a.json").read_bytes()


def test_simulate_preset_rows(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", "--preset", "table3", "--reps", "1", "--n", "300",
                       "--out", str(tmp_path / "t3"))
    assert code == 0
    rows = [r["name"] for r in json.loads((tmp_path / "t3.json").read_text())["rows"]]
    assert rows == ["beta1", "beta1_wr.prop", "beta1_wr.outc", "beta1_wr.both", "beta2"]
    assert "Btstp" in out


def test_simulate_rejects_zero_reps():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--preset", "dgm1", "--reps", "0"])
    assert exc.value.code == 2


def test_verify_clean_checkout(capsys):
    code, out, _ = run(capsys, "verify")
    lines = [l for l in out.splitlines() if l.startswith(("PASS", "FAIL"))]
    assert code == 0 and len(lines) >= 10
    assert all(l.startswith("PASS") for l in lines)
    assert out.strip().endswith("all checks passed")


def test_verify_corrupted_world(capsys, tmp_path):
    d = oracle.world_to_dict(oracle.shipped_worlds()["identified"])
    d["atoms"][0]["p"] -= 0.1
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(d))
    code, out, _ = run(capsys, "verify", "--world", str(path))
    assert code == 1
    assert "FAIL" in out and "identified" in out and "sum" in out


def test_verify_confounded_reports_gap(capsys):
    path = next(p for p in oracle.shipped_world_paths() if p.stem == "confounded")
    code, out, _ = run(capsys, "verify", "--world", str(path))
    assert code == 0
    assert "PASS confounded: g-formula gap under confounding" in out


def test_gen_data(capsys, tmp_path):
    from pairfx.data import load_dataset
    from pairfx.simulate import bank_schema
    path = tmp_path / "d.csv"
    assert run(capsys, "gen-data", "--preset", "dgm1", "--n", "50", "--replicate", "2",
               "--out", str(path))[0] == 0
    ds = load_dataset(path, bank_schema())
    assert ds.n == 50


def test_render_rejects_foreign_json(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"kind": "other"}')
    with pytest.raises(SystemExit) as exc:
        main(["render", str(path)])
    assert exc.value.code == 2
