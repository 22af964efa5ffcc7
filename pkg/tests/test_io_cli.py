from __future__ import annotations

import io
import json
import math
import shutil
import subprocess

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftstab.cli import main
from shiftstab.core import stability_exponential
from shiftstab.io import (
    ParseError,
    RunManifest,
    fmt,
    load_config,
    parse_cost_csv,
    parse_json,
    parse_table,
    preset_names,
    read_cost_csv,
    rows_to_csv,
    to_json,
)


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def write_costs(path, values, column="cost"):
    path.write_text(rows_to_csv([column], [[v] for v in values]))
    return path


# -- readers and writers -------------------------------------------------------


finite = st.floats(allow_nan=False, allow_infinity=False)


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=1, max_size=20))
def test_csv_float_round_trip_is_exact(values):
    text = rows_to_csv(["cost"], [[v] for v in values])
    back = parse_cost_csv(text).values
    assert [float(v) for v in back] == [float(v) for v in values]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(finite, st.just(math.inf)), min_size=1, max_size=10))
def test_table_round_trip_with_inf(values):
    header, rows = parse_table(rows_to_csv(["y", "tag"], [[v, "interior"] for v in values]))
    assert header == ["y", "tag"]
    assert [r[0] for r in rows] == values
    assert all(r[1] == "interior" for r in rows)


def test_json_round_trip_with_inf():
    obj = {"a": [1.0, math.inf, 0.1 + 0.2], "b": {"c": -math.inf}, "d": "text", "e": True}
    assert parse_json(to_json(obj)) == obj
    assert '"inf"' in to_json(obj)


@pytest.mark.parametrize("x,text", [(math.inf, "inf"), (0.1, "0.10000000000000001"), (3, "3"), (True, "true")])
def test_fmt(x, text):
    assert fmt(x) == text


def test_csv_uses_lf_and_header():
    text = rows_to_csv(["cost"], [[1.0], [2.0]])
    assert text == "cost\n1\n2\n"


def test_risk_table_keeps_group_keys():
    table = parse_cost_csv("group,risk\na,0.1\nb,0.2\na,0.3\n")
    assert table.column == "risk"
    assert table.keys == {"group": ["a", "b", "a"]}
    np.testing.assert_array_equal(table.values, [0.1, 0.2, 0.3])


def test_cost_column_preferred_over_risk():
    assert parse_cost_csv("risk,cost\n5,1\n").column == "cost"


@pytest.mark.parametrize(
    "text,line",
    [
        ("", 1),
        ("value\n1\n", 1),
        ("cost\n1\nabc\n", 3),
        ("cost\n1\n2\ninf\n", 4),
        ("cost,group\n1,a\n2\n", 3),
        ("cost\n", 1),
    ],
)
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as info:
        parse_cost_csv(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_blank_lines_are_skipped():
    assert parse_cost_csv("cost\n1\n\n2\n").values.tolist() == [1.0, 2.0]


def test_manifest_hash_is_stable_and_seed_sensitive():
    a = RunManifest("estimate", {"y": 1.5}, 0, "0.1.0", (("estimate.json", "ab"),))
    b = RunManifest("estimate", {"y": 1.5}, 0, "0.1.0", (("estimate.json", "ab"),))
    c = RunManifest("estimate", {"y": 1.5}, 1, "0.1.0", (("estimate.json", "ab"),))
    assert a.digest() == b.digest() != c.digest()
    assert a.to_dict()["hash"] == a.digest()


def test_presets_ship():
    names = preset_names()
    for name in ("exp_sigma0.9_y2", "exp_sigma1.0_y2", "exp_sigma1.1_y2", "hardpair_ld", "hardpair_md"):
        assert name in names
    configs = [load_config(f"exp_sigma{s}_y2") for s in ("0.9", "1.0", "1.1")]
    assert [c["family"]["sigma"] for c in configs] == [0.9, 1.0, 1.1]
    assert all(c["y"] == 2.0 and c["replications"] == 40 for c in configs)


def test_load_config_from_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"sigma": 2.0}))
    assert load_config(str(p)) == {"sigma": 2.0}


# -- estimate ------------------------------------------------------------------------


def test_estimate_two_point(tmp_path):
    code, out, _ = run("estimate", write_costs(tmp_path / "c.csv", [0.0, 2.0]), "--y", 1.5)
    rec = parse_json(out)
    assert code == 0
    # KL from (1/2, 1/2) to (1/4, 3/4)
    assert rec["stability"] == pytest.approx(0.75 * math.log(1.5) + 0.25 * math.log(0.5), abs=1e-9)
    assert rec["stability"] == pytest.approx(0.130812, abs=1e-6)
    assert rec["boundary"] == "Interior"
    assert (rec["n"], rec["mean"], rec["max"]) == (2, 1.0, 2.0)


def test_estimate_constant_sample(tmp_path):
    code, out, _ = run("estimate", write_costs(tmp_path / "c.csv", [2.0] * 5), "--y", 2)
    assert code == 0
    assert parse_json(out)["stability"] == 0.0


def test_estimate_risk_mode_above_max(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("group,risk\na,0.1\nb,0.4\nc,0.2\n")
    code, out, err = run("estimate", path, "--y", 0.9)
    rec = parse_json(out)
    assert code == 2
    assert rec["stability"] == math.inf and rec["boundary"] == "InfiniteOrAtMax"
    assert '"stability": "inf"' in out
    assert rec["column"] == "risk"
    assert "maximum" in err


def test_estimate_csv_format(tmp_path):
    code, out, _ = run("estimate", write_costs(tmp_path / "c.csv", [0.0, 2.0]), "--y", 1.5, "--format", "csv")
    header, rows = parse_table(out)
    assert code == 0 and "stability" in header and len(rows) == 1


def test_malformed_csv_exits_one_with_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("cost\n1\n2\nx\n")
    code, out, err = run("estimate", path, "--y", 1)
    assert code == 1 and out == ""
    assert "line 4" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["estimate", "c.csv"],
        ["estimate", "c.csv", "--y", "abc"],
        ["nosuch"],
        [],
        ["sweep", "c.csv", "--y-min", "1"],
        ["estimate", "c.csv", "--y", "1", "--format", "xml"],
        ["hardpair", "xy"],
    ],
)
def test_usage_errors_exit_one(argv):
    code, _, err = run(*argv)
    assert code == 1
    assert "error" in err


def test_missing_input_file_exits_one(tmp_path):
    assert run("estimate", tmp_path / "none.csv", "--y", 1)[0] == 1


def test_custom_column(tmp_path):
    path = tmp_path / "q.csv"
    path.write_text("path_id,cumulative_cost\n0,1\n1,3\n")
    code, out, _ = run("estimate", path, "--y", 2.5, "--column", "cumulative_cost")
    assert code == 0 and parse_json(out)["column"] == "cumulative_cost"


def test_global_flags_before_or_after_subcommand(tmp_path):
    path = write_costs(tmp_path / "c.csv", [0.0, 1.0, 3.0])
    a = run("--format", "csv", "estimate", path, "--y", 2)
    b = run("estimate", path, "--y", 2, "--format", "csv")
    assert a == b and a[0] == 0


# -- sweep ---------------------------------------------------------------------------


def test_sweep_two_steps(tmp_path):
    code, out, _ = run("sweep", write_costs(tmp_path / "c.csv", [0.0, 1.0, 5.0]),
                       "--y-min", 2, "--y-max", 4, "--steps", 2)
    header, rows = parse_table(out)
    assert code == 0
    assert header[:3] == ["y", "stability", "lambda_star"]
    assert len(rows) == 2


def test_sweep_is_nondecreasing_and_marks_inf(tmp_path):
    values = np.random.default_rng(3).gamma(2.0, size=500)
    path = write_costs(tmp_path / "c.csv", values.tolist())
    code, out, _ = run("sweep", path, "--y-min", values.mean(), "--y-max", values.max() + 1, "--steps", 40)
    _, rows = parse_table(out)
    stab = [r[1] for r in rows]
    assert code == 0
    assert all(b >= a for a, b in zip(stab, stab[1:]))
    assert stab[-1] == math.inf and rows[-1][3] == "InfiniteOrAtMax"
    assert out.splitlines()[-1].split(",")[1] == "inf"


@pytest.mark.parametrize("argv", [["--y-min", 3, "--y-max", 1, "--steps", 3], ["--y-min", 1, "--y-max", 3, "--steps", 1]])
def test_sweep_bad_grid(tmp_path, argv):
    assert run("sweep", write_costs(tmp_path / "c.csv", [0.0, 1.0]), *argv)[0] == 1


def test_sweep_exponential_matches_closed_form(tmp_path):
    values = np.random.default_rng(20240).exponential(size=100_000)
    path = write_costs(tmp_path / "c.csv", values.tolist())
    code, out, _ = run("sweep", path, "--y-min", 1, "--y-max", 3, "--steps", 21)
    _, rows = parse_table(out)
    assert code == 0
    for y, stab, *_ in rows:
        assert abs(stab - stability_exponential(1.0, y).stability) <= 0.03


def test_sweep_json_matches_csv(tmp_path):
    path = write_costs(tmp_path / "c.csv", [0.0, 1.0, 5.0])
    argv = ["sweep", path, "--y-min", 1, "--y-max", 5, "--steps", 5]
    _, text_csv, _ = run(*argv)
    _, text_json, _ = run(*argv, "--format", "json")
    _, rows = parse_table(text_csv)
    recs = parse_json(text_json)
    assert [[r["y"], r["stability"], r["lambda_star"], r["boundary"]] for r in recs] == rows


# -- converge ------------------------------------------------------------------------


def test_converge_is_byte_deterministic(tmp_path):
    argv = ["converge", "exp_sigma1.0_y2", "--sizes", "50,200", "--replications", 3]
    a = run(*argv, "--out-dir", tmp_path / "a")
    b = run(*argv, "--out-dir", tmp_path / "b")
    assert a == b and a[0] == 0
    for name in ("converge.csv", "converge.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "converge"
    assert {o["file"] for o in manifest["outputs"]} == {"converge.csv", "converge.json"}
    header, rows = parse_table(a[1])
    assert header == ["n", "mse", "mean_error", "sd_error", "boundary_count"]
    assert [r[0] for r in rows] == [50.0, 200.0]


def test_converge_seed_changes_hash(tmp_path):
    argv = ["converge", "exp_sigma1.0_y2", "--sizes", "50,200", "--replications", 3]
    run(*argv, "--out-dir", tmp_path / "a")
    run(*argv, "--seed", 5, "--out-dir", tmp_path / "b")
    ha = json.loads((tmp_path / "a" / "manifest.json").read_text())["hash"]
    hb = json.loads((tmp_path / "b" / "manifest.json").read_text())["hash"]
    assert ha != hb


def test_converge_at_mean_preset(tmp_path):
    code, out, _ = run("converge", "exp_y_mean", "--sizes", "1000,10000", "--replications", 10)
    _, rows = parse_table(out)
    assert code == 0
    for n, mse, *_ in rows:
        assert 0.0 <= mse <= 10.0 / n**2


def test_converge_config_file(tmp_path):
    cfg = load_config("exp_sigma0.9_y2")
    cfg.update(sample_sizes=[30, 60], replications=2)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert run("converge", path)[0] == 0


def test_converge_unknown_preset():
    assert run("converge", "no_such_preset")[0] == 1


# -- hardpair -------------------------------------------------------------------------


def test_hardpair_md_zero_omega():
    code, out, _ = run("hardpair", "md", "--omega", 0)
    rep = parse_json(out)
    assert code == 0
    assert rep["kl"]["quadrature"] == pytest.approx(0.0, abs=1e-15)
    assert rep["kl"]["closed_form"] == 0.0
    assert rep["separation"]["value"] == pytest.approx(0.0, abs=1e-12)
    assert rep["all_pass"]


def test_hardpair_ld_preset_passes():
    code, out, _ = run("hardpair", "ld", "--params", "hardpair_ld")
    rep = parse_json(out)
    assert code == 0
    assert rep["x0"] == pytest.approx(40.75000199887035, rel=1e-12)
    assert rep["kl"]["pass"] and rep["separation"]["pass"] and rep["c_bracket"]["pass"]
    assert rep["all_pass"]


def test_hardpair_ld_small_x0_flags_hypotheses():
    code, out, err = run("hardpair", "ld", "--x0", 1.01)
    rep = parse_json(out)
    assert code == 3
    assert rep["violated"]
    assert "separation" not in rep and "kl" not in rep
    assert "violated" in err


def test_hardpair_csv_is_flat():
    code, out, _ = run("hardpair", "md", "--format", "csv")
    header, rows = parse_table(out)
    assert code == 0 and len(rows) == 1 and "x0" in header


# -- queue ----------------------------------------------------------------------------


def test_queue_single_path():
    code, out, _ = run("queue", "--paths", 1)
    header, rows = parse_table(out)
    assert code == 0
    assert header == ["path_id", "policy", "scenario", "cumulative_cost"]
    assert len(rows) == 1 and rows[0][1] == "gcmu" and rows[0][2] == "baseline"


@pytest.mark.parametrize("argv", [["--policy", "lifo"], ["--scenario", "7"], ["--threshold-from", "srpt"], ["--paths", 0]])
def test_queue_bad_arguments(argv):
    assert run("queue", "--paths", 2, *argv)[0] == 1


def test_queue_summary_and_threshold_reference(tmp_path):
    code, _, _ = run("queue", "--paths", 200, "--policy", "fifo", "--threshold-from", "gcmu",
                     "--seed", 3, "--out-dir", tmp_path)
    assert code == 0
    summary = parse_json((tmp_path / "queue.json").read_text())
    _, gc_out, _ = run("queue", "--paths", 200, "--seed", 3, "--format", "json")
    gc = parse_json(gc_out)
    assert summary["threshold"] == pytest.approx(2 * gc["mean"], rel=1e-15)
    assert summary["threshold_policy"] == "gcmu"
    # the csv re-ingests as a cost sample with the same mean
    table = read_cost_csv(tmp_path / "queue.csv", "cumulative_cost")
    assert table.values.mean() == pytest.approx(summary["mean"], rel=1e-12)
    assert table.keys["policy"] == ["fifo"] * 200


def test_queue_is_deterministic():
    assert run("queue", "--paths", 20, "--scenario", "3", "--seed", 1) == \
        run("queue", "--paths", 20, "--scenario", "3", "--seed", 1)


@pytest.mark.slow
@pytest.mark.parametrize("policy", ["gcmu", "fifo"])
def test_queue_step_surge_raises_cost(policy):
    base = parse_json(run("queue", "--policy", policy, "--paths", 10_000, "--format", "json")[1])
    surge = parse_json(run("queue", "--policy", policy, "--scenario", 2, "--paths", 10_000,
                           "--format", "json")[1])
    assert surge["mean"] - base["mean"] > 4 * math.hypot(base["se"], surge["se"])


# -- cramer ---------------------------------------------------------------------------


def test_cramer_exponential():
    code, out, _ = run("cramer", "--m", 5, "--y", 2, "--trials", 100_000, "--seed", 1)
    rec = parse_json(out)
    assert code == 0
    assert rec["closedFormI"] == pytest.approx(1 - math.log(2), abs=1e-15)
    assert rec["trials"] == 100_000 and rec["successes"] > 0
    assert rec["rateProxy"] == pytest.approx(-math.log(rec["pHat"]) / 5, rel=1e-12)


def test_cramer_zero_successes_reports_inf():
    code, out, _ = run("cramer", "--m", 50, "--y", 10, "--trials", 1000)
    rec = parse_json(out)
    assert code == 0
    assert rec["successes"] == 0 and rec["rateProxy"] == math.inf
    assert rec["zeroCount"] is True


@pytest.mark.parametrize(
    "argv,closed",
    [(["--dist", "gamma", "--alpha", 2, "--sigma", 1], 3 - 2 - 2 * math.log(1.5)),
     (["--dist", "chisq", "--k", 2], 0.5 * 3 - 1 - math.log(1.5))],
)
def test_cramer_closed_forms(argv, closed):
    code, out, _ = run("cramer", *argv, "--m", 3, "--y", 3, "--trials", 1000)
    assert code == 0
    assert parse_json(out)["closedFormI"] == pytest.approx(closed, abs=1e-14)


# -- entry point ----------------------------------------------------------------------


@pytest.mark.skipif(shutil.which("shiftstab") is None, reason="console script not installed")
def test_console_script(tmp_path):
    path = write_costs(tmp_path / "c.csv", [0.0, 2.0])
    proc = subprocess.run(["shiftstab", "estimate", str(path), "--y", "1.5"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["stability"] == pytest.approx(0.130812, abs=1e-6)
