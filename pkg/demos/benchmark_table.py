"""Produce a small results table with the benchmark harness.

Equivalent to

    esqm-bench --model quad --q 144 --n 512 --k 32 --trials 5 --format markdown

but driven from Python so the rows can be inspected directly.
"""

from esqm.bench import RunConfig, run_benchmark, to_markdown

rows = run_benchmark(RunConfig(model="quad", q=144, n=512, k=32, trials=5))
print(to_markdown(rows))

per_trial = [r for r in rows if r["trial"] != "AVG"]
by_algo = {}
for r in per_trial:
    by_algo.setdefault(r["algorithm"], []).append(r["iter"])
print("iterations per trial:", by_algo)
