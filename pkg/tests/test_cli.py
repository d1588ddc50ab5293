import json
import subprocess
import sys

import pytest

from gkappa.cli import main


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_lint_reports_hierarchy(capsys, model_path):
    code, out, err = run_cli(capsys, "lint", model_path("shc"))
    assert code == 0
    assert "children: p66, p52, p46" in out
    assert err == ""


def test_lint_cycle_exits_1(capsys, tmp_path):
    f = tmp_path / "cyc.gka"
    f.write_text("R(x)\nA = B\nB = A\n")
    code, _, err = run_cli(capsys, "lint", f)
    assert code == 1
    assert f"{f}:" in err and "cycle" in err


def test_lint_bad_fringe(capsys, model_path):
    code, _, err = run_cli(capsys, "lint", model_path("mkp"), "--fringe", "Nope")
    assert code == 1 and "Nope" in err


def test_missing_file_exits_2(capsys, tmp_path):
    code, _, err = run_cli(capsys, "compile", tmp_path / "absent.gka")
    assert code == 2 and "cannot read" in err


def test_unwritable_output_exits_2(capsys, model_path, tmp_path):
    code, _, err = run_cli(capsys, "compile", model_path("shc"), "-o", tmp_path / "no" / "dir.gka")
    assert code == 2 and "cannot write" in err


def test_parse_error_is_located(capsys, tmp_path):
    f = tmp_path / "bad.gka"
    f.write_text("A(x)\n'r' A(x) -> B(x)\n")
    code, _, err = run_cli(capsys, "compile", f)
    assert code == 1
    assert err.startswith(f"{f}:2:5: error:")


@pytest.mark.parametrize("name, n", [("shc", 6), ("polymer", 4), ("mkp", 79)])
def test_compile_rule_counts(capsys, model_path, name, n):
    code, out, _ = run_cli(capsys, "compile", model_path(name), "--emit", "json")
    assert code == 0
    assert len(json.loads(out)["rules"]) == n


def test_compile_csv_and_fringe(capsys, model_path):
    code, out, _ = run_cli(capsys, "compile", model_path("shc"), "--fringe", "Shc", "--emit", "csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "name,source,rule,rate,unary_rate,provenance"
    assert len(lines) == 2


def test_compile_text_recompiles(capsys, model_path, tmp_path):
    out_file = tmp_path / "mkp.compiled.gka"
    assert run_cli(capsys, "compile", model_path("mkp"), "-o", out_file)[0] == 0
    code, out, _ = run_cli(capsys, "compile", out_file, "--emit", "json")
    assert code == 0 and len(json.loads(out)["rules"]) == 79


def test_below_fringe_flag(capsys, tmp_path):
    f = tmp_path / "m.gka"
    f.write_text("A(x~u~p)\nB = A\n'r' B(x~u) -> B(x~p)\n%concrete: A\n")
    assert run_cli(capsys, "compile", f)[0] == 1
    code, _, err = run_cli(capsys, "compile", f, "--drop-below-fringe")
    assert code == 0 and "dropped" in err


def test_simulate_end_time_zero(capsys, model_path):
    code, out, _ = run_cli(capsys, "simulate", model_path("polymer"), "--end-time", "0")
    assert code == 0
    assert out.splitlines() == ["time,T,bonds", "0.0,20,0"]


def test_simulate_is_deterministic(capsys, model_path, tmp_path):
    outs = []
    for k in range(2):
        traj, ev = tmp_path / f"t{k}.csv", tmp_path / f"e{k}.csv"
        args = ("simulate", model_path("mapk_cascades"), "--seed", 5, "--end-time", 10, "--sample", 0.5)
        assert run_cli(capsys, *args, "-o", traj, "--events", ev)[0] == 0
        outs.append((traj.read_bytes(), ev.read_bytes()))
    assert outs[0] == outs[1]
    assert outs[0][1].startswith(b"time,rule,molecularity\n")


def test_simulate_max_events(capsys, model_path):
    code, out, _ = run_cli(capsys, "simulate", model_path("polymer"), "--max-events", "10")
    assert code == 0 and len(out.splitlines()) == 12


def test_sweep_writes_one_file_per_value(capsys, model_path, tmp_path):
    out = tmp_path / "dose.csv"
    code, _, _ = run_cli(
        capsys, "simulate", model_path("distributive"), "--end-time", 2, "--sample", 1,
        "--sweep", "MAP2K_init=1,4", "--jobs", 1, "-o", out,
    )
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "dose.MAP2K_init=1.csv", "dose.MAP2K_init=4.csv", "dose.summary.csv",
    ]
    assert (tmp_path / "dose.summary.csv").read_text().splitlines()[0].startswith("MAP2K_init,final_ppMAPK")


@pytest.mark.parametrize(
    "extra, fragment",
    [
        ((), "--end-time or --max-events"),
        (("--end-time", "1", "--sweep", "kon=1,2"), "needs -o"),
        (("--end-time", "1", "--sweep", "kon", "-o", "x.csv"), "expects name="),
        (("--end-time", "1", "--sweep", "kon=a", "-o", "x.csv"), "not a number"),
        (("--end-time", "1", "--emit", "json"), "only emits csv"),
    ],
)
def test_simulate_usage_errors(capsys, model_path, extra, fragment):
    code, _, err = run_cli(capsys, "simulate", model_path("polymer"), *extra)
    assert code == 2 and fragment in err


def test_unknown_sweep_parameter_is_model_error(capsys, model_path, tmp_path):
    code, _, err = run_cli(
        capsys, "simulate", model_path("polymer"), "--end-time", 1, "--sweep", "nope=1", "-o", tmp_path / "x.csv",
    )
    assert code == 1 and "nope" in err


def test_argparse_usage_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_module_entry_point(model_path):
    proc = subprocess.run(
        [sys.executable, "-m", "gkappa", "compile", str(model_path("shc")), "--emit", "json"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert len(json.loads(proc.stdout)["rules"]) == 6
