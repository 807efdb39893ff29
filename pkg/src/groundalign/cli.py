"""Command line: ``groundalign {gen,train,predict,eval,align}``.

Every command writes under ``--out``.  Failures print one JSON error record
on stderr and exit with 2 (usage), 3 (bad data or model file) or 4 (runtime).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path as FsPath

import numpy as np

from . import io
from .env import ENVIRONMENTS, make_env
from .env.synth import generate_synthetic_dataset
from .errors import (
    ChecksumMismatch,
    GenerationFailure,
    GroundAlignError,
    IdMismatch,
    UnknownVersion,
    ValidationError,
)
from .experiments import PRESETS, load_config, predict
from .learn import TrainConfig, train_icm
from .metrics import evaluate, match_ids
from .seqmodel import Scorer, path_log_potential, viterbi_sequence_alignment
from .structalign import best_structure_alignment

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _config(args):
    """Preset for ``--env``, then ``--config``, then environment overrides, then ``--seed``."""
    cfg = load_config(args.config, base=args.env if args.env in PRESETS else None)
    if args.env:
        cfg.env = args.env
    if args.seed is not None:
        cfg.train = TrainConfig.from_dict({**cfg.train.to_dict(), "seed": args.seed})
    return cfg


def _out(args) -> FsPath:
    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(obj, path: FsPath):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                    encoding="utf-8")


# --- commands ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _config(args)
    seed = cfg.train_seed if args.seed is None else args.seed
    count = args.count if args.count is not None else cfg.train_count + cfg.test_count
    if count < 1:
        raise UsageError("--count must be positive")
    if not 0.0 <= args.split <= 1.0:
        raise UsageError("--split must lie in [0, 1]")
    demos = generate_synthetic_dataset(cfg.env, count, seed, redundancy=cfg.redundancy,
                                       drop=cfg.drop)
    order = np.random.default_rng(cfg.split_seed).permutation(count)
    n_train = int(round(args.split * count))
    out = _out(args)
    io.save_demos(out / "train.jsonl", [demos[i] for i in sorted(order[:n_train])])
    io.save_demos(out / "test.jsonl", [demos[i] for i in sorted(order[n_train:])])
    _dump({"env": cfg.env, "count": count, "seed": seed, "split_seed": cfg.split_seed,
           "train": n_train, "test": count - n_train,
           "redundancy": cfg.redundancy, "drop": cfg.drop}, out / "gen.json")
    print(f"wrote {n_train} train and {count - n_train} test demonstrations to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    demos = io.load_demos(args.data)
    if not demos:
        raise UsageError(f"{args.data} holds no demonstrations")
    kinds = {d.env_kind for d in demos}
    if len(kinds) != 1:
        raise ValidationError(f"mixed environment kinds {sorted(kinds)}")
    model = train_icm(demos, cfg.train, cfg.features)
    out = _out(args)
    checksum = io.save_model(model, out / "model.json")
    _dump({"checksum": checksum, "env": model.env_kind, "demos": len(demos),
           "features": model.theta.dim, "diagnostics": model.diagnostics},
          out / "train_report.json")
    d = model.diagnostics
    for r, (a, b) in enumerate(zip(d["objective_start"], d["objective_end"])):
        print(f"round {r}: objective {a:.4f} -> {b:.4f}, alignments changed {d['alignment_changes'][r]}")
    print(f"model {checksum[:12]} written to {out / 'model.json'}")
    return EXIT_OK


def _load_model(path):
    if not FsPath(path).is_file():
        raise FileNotFoundError(f"no model file at {path}")
    return io.load_model(path)


def cmd_predict(args) -> int:
    cfg = _config(args)
    model = _load_model(args.model)
    demos = io.load_demos(args.data)
    for d in demos:
        if d.env_kind != model.env_kind:
            raise ValidationError(f"model was trained on {model.env_kind!r}, "
                                  f"record {d.id!r} is {d.env_kind!r}")
    preds = predict(demos, model.theta, model.feature_cfg, cfg.plan, cfg.length_slack)
    records, failed = [], 0
    for d, (y, a, err) in zip(demos, preds):
        if y is None:
            failed += 1
            records.append({"id": d.id, "error": err})
        else:
            records.append({"id": d.id, "actions": [io.labels_to_json(x) for x in y.actions],
                            "alignment": list(a)})
    out = _out(args)
    io.write_jsonl(out / "predictions.jsonl", records)
    print(f"{len(records) - failed} predictions, {failed} without a path, "
          f"written to {out / 'predictions.jsonl'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    gold = io.load_demos(args.gold)
    recs = list(io.read_jsonl(args.pred))
    for r in recs:
        io.validate_prediction_record(r)
    match_ids([d.id for d in gold], [r["id"] for r in recs])
    pairs = []
    for d, r in zip(gold, recs):
        if "actions" not in r:
            pairs.append((d, None))
            continue
        env = make_env(d.env_kind, d.instance)
        try:
            y = env.replay(d.start_state, [io.labels_from_json(a) for a in r["actions"]])
        except GroundAlignError as e:
            raise ValidationError(f"prediction {r['id']!r} does not replay: {e}") from e
        pairs.append((d, y))
    report = evaluate(pairs)
    out = _out(args)
    _dump(report.to_dict(), out / "metrics.json")
    print(report.summary())
    return EXIT_OK


def _vertex_text(labels) -> str:
    return "{" + labels.serialize() + "}"


def cmd_align(args) -> int:
    model = _load_model(args.model)
    demos = io.load_demos(args.data)
    if args.id is not None:
        demos = [d for d in demos if d.id == args.id]
        if not demos:
            raise UsageError(f"no demonstration with id {args.id!r}")
    sc = Scorer(model.theta, model.feature_cfg)
    lines = []
    for d in demos[: args.limit]:
        x, y = d.instructions, d.path
        lines.append(f"# {d.id}: {len(x)} sentences, {len(y)} steps")
        if not len(x):
            lines.append("  (no instructions)")
            continue
        a, _ = viterbi_sequence_alignment(sc.pair_matrix(x, y.graphs))
        br = path_log_potential(x, y, a, model.theta, model.feature_cfg, scorer=sc)
        lines.append(f"  a = {a.one_based()}")
        for i, j in enumerate(a):
            b, s = best_structure_alignment(x[i], y[j].graph, model.theta, model.feature_cfg)
            lines.append(f"  [{i + 1}] {x[i].text()!r} -> step {j + 1} "
                         f"{y[j].action.serialize()}  pair={br.pair_terms[i]:.4f} best_b={s:.4f}")
            words = x[i].words()
            for tok, v in b.pairs:
                tag = "root" if v == y[j].graph.root else f"v{v}"
                lines.append(f"      {words[tok]} -> {tag} {_vertex_text(y[j].graph.vertices[v])}")
        lines.append(f"  length={br.length_term:.4f} steps={[round(s, 4) for s in br.step_terms]} "
                     f"total={br.total:.4f}")
    text = "\n".join(lines)
    print(text)
    if args.out:
        (_out(args) / "alignments.txt").write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


# --- entry point --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML/JSON experiment config")
    common.add_argument("--env", choices=sorted(ENVIRONMENTS), help="environment kind (selects its preset)")
    common.add_argument("--seed", type=int, help="overrides the configured seed")
    common.add_argument("--out", default="out", help="output directory")

    p = _Parser(prog="groundalign", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic train/test split")
    g.add_argument("--count", type=int)
    g.add_argument("--split", type=float, default=0.8, help="train fraction")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", parents=[common], help="train a model on a JSONL dataset")
    t.add_argument("--data", required=True)
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", parents=[common], help="plan paths for JSONL instances")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", parents=[common], help="score predictions against gold")
    e.add_argument("--pred", required=True)
    e.add_argument("--gold", required=True)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("align", parents=[common], help="dump model alignments of demonstrations")
    a.add_argument("--model", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--id")
    a.add_argument("--limit", type=int, default=5)
    a.set_defaults(func=cmd_align, out=None)
    return p


def _fail(code: int, exc: BaseException) -> int:
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(rec), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        return _fail(EXIT_USAGE, e)
    except (ValidationError, IdMismatch, ChecksumMismatch, UnknownVersion, GenerationFailure,
            FileNotFoundError, json.JSONDecodeError) as e:
        return _fail(EXIT_DATA, e)
    except (GroundAlignError, ArithmeticError, ValueError, OSError) as e:
        return _fail(EXIT_RUNTIME, e)


if __name__ == "__main__":
    sys.exit(main())
