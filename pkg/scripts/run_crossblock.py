"""Train and evaluate the crossblock regime; writes results/crossblock.json.

Usage: python scripts/run_crossblock.py [--config extra.yaml] [--out results]
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

cfg = load_config(args.config, base="crossblock")
result = run_experiment(cfg)
summary = summarize(result)

out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)
(out / "crossblock.json").write_text(json.dumps(summary, indent=2, ensure_ascii=False) + "\n")

print("model   ", result["report"].summary())
for name, rep in result["baselines"].items():
    print(f"{name:8s}", rep.summary())
for name, w in result["weights"].items():
    print(f"weight {name} = {w:+.3f}")
print(f"train {result['seconds']['train']:.1f}s, total {result['seconds']['total']:.1f}s")

gap = result["report"].exact_match - result["baselines"]["notext"].exact_match
print(f"exact-match gain over text-free planning: {100 * gap:+.1f} points")
