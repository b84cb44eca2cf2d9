import json

import numpy as np
import pytest
import yaml

from hcmcrit import experiments as ex
from hcmcrit.cli import main
from hcmcrit.community import (CommunityDistribution, critical_cm_catalog, distribution_to_config,
                               make_household)


def test_round3_half_up():
    assert ex.round3(0.6295) == 0.630
    assert ex.round3(0.6285) == 0.629
    assert ex.round3(-0.0005) == -0.001


def test_report_roundtrip(tmp_path):
    rep = ex.ExperimentReport("demo", {"seed": 3, "n": [10]})
    rep.cells.append({"n": 10, "v": [3, 2]})
    rep.check("ok", True)
    rep.check("soft", False, soft=True)
    assert rep.ok
    rep.write(tmp_path)
    data = json.loads((tmp_path / "demo.json").read_text())
    assert [c["status"] for c in data["checks"]] == ["PASS", "WARN"]
    m1 = json.loads((tmp_path / "demo.manifest.json").read_text())
    assert m1 == ex.manifest({"n": [10], "seed": 3})
    rep.check("hard", False)
    assert not rep.ok and rep.lines()[-1].startswith("[FAIL]")


def test_seed_streams_distinct():
    a = ex._seed(1, 0, 0).generate_state(2)
    b = ex._seed(1, 0, 1).generate_state(2)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, ex._seed(1, 0, 0).generate_state(2))


def test_scaling_smoke():
    rep = ex.run_scaling_experiment(critical_cm_catalog(), [1000, 2000], replicas=1, seed=4, slope_range=None)
    assert all(c.passed for c in rep.checks)
    assert {c["n"] for c in rep.cells} == {1000, 2000}
    assert "slope" in rep.summary


def test_scaling_deterministic():
    a = ex.run_scaling_experiment(critical_cm_catalog(), [500], replicas=2, seed=9)
    b = ex.run_scaling_experiment(critical_cm_catalog(), [500], replicas=2, seed=9)
    assert a.cells == b.cells


def test_tail_statistic():
    v = np.array([10, 1, 1] + [2] * 12)
    assert ex.tail_statistic(v, 8, K=10) == pytest.approx((3 * 4 + 2) / 16)


def test_perc_equiv_rejects_few_replicas():
    with pytest.raises(ValueError):
        ex.run_percolation_equivalence(CommunityDistribution.single(make_household(3)), 0.7, 100, 10)


def test_resolve_distribution(tmp_path):
    assert ex.resolve_distribution("critical-mixed").nu == 1
    path = tmp_path / "d.txt"
    path.write_text(yaml.safe_dump(distribution_to_config(critical_cm_catalog())))
    assert ex.resolve_distribution(str(path)) == critical_cm_catalog()


def test_cli_tables(tmp_path, capsys):
    assert main(["table-star", f"--out={tmp_path}"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 10
    assert (tmp_path / "table_star.csv").exists()
    assert main(["table-line", "--n=100000", "--lambda=0", f"--out={tmp_path}"]) == 0


def test_cli_graph_pipeline(tmp_path):
    g = tmp_path / "g.hcm"
    assert main(["generate", "--dist=household3", "--n=300", f"--out={g}"]) == 0
    assert main(["explore", f"--graph={g}", "--walk", f"--out={tmp_path / 'e'}"]) == 0
    assert (tmp_path / "e" / "walk.csv").exists()
    assert main(["percolate", f"--graph={g}", "--pi=0.6", f"--out={tmp_path / 'p'}"]) == 0
    assert (tmp_path / "p" / "summary.csv").exists()


def test_cli_critical_window(tmp_path):
    assert main(["critical-window", "--dist=star5", "--n=100000", "--lambda=-10,0", "--approx", "--curve",
                 "--grid=20", f"--out={tmp_path}"]) == 0
    rows = (tmp_path / "critical_window.csv").read_text().splitlines()
    assert rows[0] == "lambda,n,pi_exact,pi_approx,c_star,nu_at_pi,residual" and len(rows) == 3


def test_cli_failing_check_exit_code(tmp_path):
    # a slope window nobody can hit turns into exit status 1 through the scaling checks
    rep = ex.run_scaling_experiment(critical_cm_catalog(), [300, 600], replicas=1, seed=1,
                                    slope_range=(5.0, 6.0))
    assert not rep.ok
    assert main(["scaling", "--n=300,600", "--replicas=1", "--ratio-tol=0.0", f"--out={tmp_path}"]) == 1
