"""Train and evaluate the maze regime; writes results/maze.json.

Usage: python scripts/run_maze.py [--config extra.yaml] [--out results]
Keys can also be overridden with GROUNDALIGN_* environment variables.
"""
import argparse
import json
from pathlib import Path

from groundalign.experiments import load_config, run_experiment, summarize

ap = argparse.ArgumentParser()
ap.add_argument("--config")
ap.add_argument("--out", default="results")
args = ap.parse_args()

cfg = load_config(args.config, base="maze")
result = run_experiment(cfg)
summary = summarize(result)

out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)
(out / "maze.json").write_text(json.dumps(summary, indent=2, ensure_ascii=False) + "\n")

print("model   ", result["report"].summary())
for name, rep in result["baselines"].items():
    print(f"{name:8s}", rep.summary())
for name, w in result["weights"].items():
    print(f"weight {name} = {w:+.3f}")
print(f"train {result['seconds']['train']:.1f}s, total {result['seconds']['total']:.1f}s")

# which single instructions fail most often
fails = {}
for ex in result["report"].examples:
    if not ex["success"]:
        fails[ex["id"].split("/")[0]] = fails.get(ex["id"].split("/")[0], 0) + 1
print(f"{sum(fails.values())} failures over {len(fails)} source routes")
