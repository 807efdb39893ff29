"""Train and evaluate the map regime; writes results/map.json.

Usage: python scripts/run_map.py [--config extra.yaml] [--out results]
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

cfg = load_config(args.config, base="map")
result = run_experiment(cfg)
summary = summarize(result)

out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)
(out / "map.json").write_text(json.dumps(summary, indent=2, ensure_ascii=False) + "\n")

print("model   ", result["report"].summary())
for name, rep in result["baselines"].items():
    print(f"{name:8s}", rep.summary())
for name, w in result["weights"].items():
    print(f"weight {name} = {w:+.3f}")
print(f"train {result['seconds']['train']:.1f}s, total {result['seconds']['total']:.1f}s")

theta = result["model"].theta
top = sorted(((w, n) for n, w in zip(theta.index.names, theta.weights) if n.startswith("word=top")),
             reverse=True)[:8]
print("strongest word=top conjunctions:")
for w, n in top:
    print(f"  {w:+.3f}  {n}")
