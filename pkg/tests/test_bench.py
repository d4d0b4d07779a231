import csv
import io

import numpy as np
import pytest

from esqm.bench import (
    COLUMNS,
    TIMING_COLUMNS,
    ConfigError,
    RunConfig,
    build_parser,
    main,
    run_benchmark,
    to_csv,
    to_markdown,
    trial_seed,
)

SMALL = ["--q", "36", "--n", "128", "--k", "6", "--trials", "2",
         "--threads", "1"]


@pytest.fixture(scope="module")
def rows():
    return run_benchmark(RunConfig(q=36, n=128, k=6, trials=3))


def _parse(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_csv_schema(rows):
    parsed = _parse(to_csv(rows))
    assert list(parsed[0].keys()) == list(COLUMNS)
    assert len(parsed) == 3 * 2 + 2
    for r in parsed:
        if r["trial"] != "AVG":
            assert r["status"] == "ok"
            assert int(r["iter"]) >= 1
            float(r["RecErr"]), float(r["Residual"])


def test_empty_table_is_header_only():
    assert to_csv([]) == ",".join(COLUMNS) + "\n"


def test_one_average_row_per_algorithm(rows):
    avgs = [r for r in rows if r["trial"] == "AVG"]
    assert [r["algorithm"] for r in avgs] == ["esqm_e", "esqm_b"]
    for a in avgs:
        per = [r["iter"] for r in rows
               if r["trial"] != "AVG" and r["algorithm"] == a["algorithm"]]
        assert a["iter"] == pytest.approx(np.mean(per))


def test_markdown_means_match_csv(rows):
    md = to_markdown(rows)
    avg = {r["algorithm"]: r for r in _parse(to_csv(rows))
           if r["trial"] == "AVG"}
    for name, key in (("ESQM_e", "esqm_e"), ("ESQM_b", "esqm_b")):
        assert f"| Iter | {name} | {avg[key]['iter']} |" in md
        assert f"| RecErr | {name} | {avg[key]['RecErr']} |" in md


def test_extrapolation_pays_off(rows):
    avg = {r["algorithm"]: r for r in rows if r["trial"] == "AVG"}
    assert avg["esqm_e"]["iter"] < avg["esqm_b"]["iter"]


def _numeric(text):
    return [{k: v for k, v in r.items() if k not in TIMING_COLUMNS}
            for r in _parse(text)]


def test_deterministic_apart_from_timing():
    cfg = RunConfig(q=36, n=128, k=6, trials=2, seed=11)
    a, b = to_csv(run_benchmark(cfg)), to_csv(run_benchmark(cfg))
    assert _numeric(a) == _numeric(b)


def test_threads_do_not_change_results():
    base = dict(q=36, n=128, k=6, trials=3, seed=5)
    a = to_csv(run_benchmark(RunConfig(**base)))
    b = to_csv(run_benchmark(RunConfig(**base, threads=2)))
    assert _numeric(a) == _numeric(b)


def test_trial_seeds_differ():
    seeds = {trial_seed(0, t) for t in range(50)}
    assert len(seeds) == 50
    assert trial_seed(3, 1) == trial_seed(3, 1)


def test_config_errors():
    for kw in ({"model": "huber"}, {"k": 0}, {"trials": 0}, {"mu": 1.0},
               {"algorithms": ("fista",)}, {"epsilon": 0}):
        with pytest.raises(ConfigError):
            RunConfig(**kw)
    assert RunConfig(model="lorentz").K == 48
    assert RunConfig(restart_K=7).K == 7


def test_main_success(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert main(SMALL + ["--out", str(out)]) == 0
    assert len(_parse(out.read_text())) == 2 * 2 + 2
    assert main(SMALL + ["--format", "markdown"]) == 0
    assert capsys.readouterr().out.startswith("| | Method | mean |")


def test_main_lorentz(tmp_path):
    out = tmp_path / "l.csv"
    assert main(["--model", "lorentz", "--q", "36", "--n", "128", "--k", "4",
                 "--trials", "1", "--out", str(out)]) == 0


def test_main_failed_trials_exit_one(tmp_path):
    out = tmp_path / "t.csv"
    assert main(SMALL + ["--max-iters", "2", "--out", str(out)]) == 1
    statuses = {r["status"] for r in _parse(out.read_text())}
    assert "max_iters" in statuses


def test_main_unwritable_output_exit_one(tmp_path):
    assert main(SMALL + ["--out", str(tmp_path / "no" / "dir.csv")]) == 1


def test_main_config_error_exit_two(capsys):
    assert main(["--q", "36", "--n", "128", "--k", "500"]) == 2
    assert main(["--q", "36"]) == 2
    assert main(["--scale-i", "1", "--q", "36"]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_threads_default_from_environment(monkeypatch):
    monkeypatch.setenv("ESQM_BENCH_THREADS", "3")
    assert build_parser().parse_args([]).threads == 3
