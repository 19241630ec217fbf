"""Command-line entry point: ``latentbridge <verb> [options]``.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .evaluation import steering_metrics
from .experiment import (ExperimentConfig, dataset_from_stores, eval_direction, extract_store,
                         run_bridge, train_stock_model)
from .injection import InjectionPolicy
from .tensor import NumericError
from .text import encode, load_prompts
from .toymodel import extract_vector
from .trainer import FORWARD, REVERSE, TrainingError, train_bidirectional
from .translator import translate

log = logging.getLogger("latentbridge")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Outputs:
    """Records files written by a command so a failure can remove them."""

    def __init__(self, out_dir: Path):
        self.dir = Path(out_dir)
        self.written: list[Path] = []
        self._created_dir = not self.dir.exists()
        self.dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.written.append(p)
        return p

    def rollback(self):
        for p in self.written:
            if p.exists():
                p.unlink()
        if self._created_dir and self.dir.exists() and not any(self.dir.iterdir()):
            self.dir.rmdir()


def _tsv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = ["\t".join(header)] + ["\t".join(str(c) for c in r) for r in rows]
    io.atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


# -- verbs -------------------------------------------------------------------

def cmd_train_lm(args, out: Outputs) -> None:
    cfg = ExperimentConfig.load(args.config, args.seed)
    keys = ["model_a", "model_b"] if args.model == "both" else [f"model_{args.model}"]
    for key in keys:
        model, logrec = train_stock_model(cfg, key)
        io.save_model(model, out.path(f"{key}.toym"))
        io.write_json(out.path(f"{key}_lm_history.json"), logrec)
        log.info("trained %s: final loss %.4f", key, logrec.get("loss", [float("nan")])[-1])


def cmd_extract(args, out: Outputs) -> None:
    model = io.load_model(args.model)
    records = load_prompts(args.prompts)
    texts = [getattr(r, args.field) for r in records]
    store = extract_store(model, texts)
    name = args.name or Path(args.model).stem
    io.save_vectors(store, out.path(f"{name}.lvec"))


def cmd_train_translator(args, out: Outputs) -> None:
    cfg = ExperimentConfig.load(args.config, args.seed)
    src, tgt = io.load_vectors(args.src), io.load_vectors(args.tgt)
    if len(src) != len(tgt):
        raise ValueError(f"vector stores differ in count: {len(src)} vs {len(tgt)}")
    ds = dataset_from_stores(src, tgt, float(cfg.raw["split_fraction"]), cfg.seed)
    res = train_bidirectional(ds, cfg.train_config(), cfg.translator_config(ds.d_src, ds.d_tgt))
    io.save_checkpoint(res.forward, out.path("translator_forward.lbtr"))
    io.save_checkpoint(res.reverse, out.path("translator_reverse.lbtr"))
    io.write_json(out.path("history_forward.json"), res.forward_history.to_json())
    io.write_json(out.path("history_reverse.json"), res.reverse_history.to_json())
    n = int(cfg.raw["eval"]["n_shuffles"])
    report = {"forward": eval_direction(FORWARD, res.forward, ds, n, cfg.seed),
              "reverse": eval_direction(REVERSE, res.reverse, ds, n, cfg.seed)}
    io.write_json(out.path("alignment_report.json"), report)


def cmd_inject_generate(args, out: Outputs) -> None:
    cfg = ExperimentConfig.load(args.config, args.seed)
    target = io.load_model(args.model)
    source = io.load_model(args.source_model)
    f = io.load_checkpoint(args.translator)
    if f.config.d_src != source.config.d_model:
        raise ValueError(f"translator expects d_src={f.config.d_src}, source model has "
                         f"d_model={source.config.d_model}")
    if f.config.d_tgt != target.config.d_model:
        raise ValueError(f"translator produces d_tgt={f.config.d_tgt}, target model has "
                         f"d_model={target.config.d_model}")
    records = load_prompts(args.prompts)
    if not 0 <= args.index < len(records):
        raise UsageError(f"--index {args.index} outside [0, {len(records)})")
    rec = records[args.index]
    policy = cfg.policy()
    if args.alpha is not None:
        policy = InjectionPolicy(args.alpha, policy.target_layers, policy.target_positions,
                                 policy.active_steps)
    v = translate(f, extract_vector(source, encode(rec.full)))
    ev = cfg.raw["eval"]
    rep = steering_metrics(target, rec.part, rec.full, v, policy, int(ev["gen_steps"]),
                           seed=cfg.seed, temperature=float(ev["temperature"]))
    io.write_json(out.path("generations.json"),
                  {"prompt_id": args.index, "domain": rec.domain, "full_prompt": rec.full,
                   "part_prompt": rec.part, "baseline": rep.baseline_text,
                   "injected": rep.injected_text, "reference": rep.reference_text})
    io.write_json(out.path("steering_report.json"), {"policy": policy.to_json(), **rep.to_json()})


def cmd_eval_bridge(args, out: Outputs) -> None:
    cfg = ExperimentConfig.load(args.config, args.seed, out=str(out.dir))
    run = run_bridge(cfg, steering=not args.no_steering)
    io.save_model(run.model_a, out.path("model_a.toym"))
    io.save_model(run.model_b, out.path("model_b.toym"))
    ids = np.arange(len(run.dataset), dtype=np.uint32)
    io.save_vectors(io.VectorStore(ids, run.dataset.src_vectors), out.path("vectors_a.lvec"))
    io.save_vectors(io.VectorStore(ids, run.dataset.tgt_vectors), out.path("vectors_b.lvec"))
    io.save_checkpoint(run.forward, out.path("translator_forward.lbtr"))
    io.save_checkpoint(run.reverse, out.path("translator_reverse.lbtr"))
    for d, h in run.histories.items():
        io.write_json(out.path(f"history_{d}.json"), h.to_json())
    io.write_json(out.path("lm_history.json"), run.lm_logs)
    io.write_json(out.path("eval_report.json"), run.report)
    rows = []
    for d in (FORWARD, REVERSE):
        r = run.report[d]
        for pid, c in zip(run.report["heldout_ids"], r["per_pair"]):
            rows.append([d, pid, run.records[pid].domain, f"{c:.6f}"])
    _tsv(out.path("per_pair.tsv"), ["direction", "prompt_id", "domain", "cosine"], rows)
    summary = []
    for d in (FORWARD, REVERSE):
        r = run.report[d]
        summary.append([d, f"{r['initial_mean']:.6f}", f"{r['mean']:.6f}", f"{r['std_population']:.6f}",
                        f"{r['ci95'][0]:.6f}", f"{r['ci95'][1]:.6f}", f"{r['baseline']['value']:.6f}",
                        "" if r["effect_size"] is None else f"{r['effect_size']:.4f}"])
    _tsv(out.path("summary.tsv"), ["direction", "initial_mean", "mean", "std_population", "ci95_lo",
                                    "ci95_hi", "random_baseline", "effect_size"], summary)
    if not args.no_figures:
        from . import plots
        plots.training_curves(run.histories, out.path("training_curves.png"))
        plots.alignment_bars(run.report, out.path("alignment.png"))
        if "steering" in run.report[FORWARD]:
            plots.steering_kl(run.report[FORWARD]["steering"], out.path("steering_kl.png"))
    fwd, rev = run.report[FORWARD], run.report[REVERSE]
    print(f"forward mean cosine {fwd['mean']:.4f} (initial {fwd['initial_mean']:.4f}, "
          f"random baseline {fwd['baseline']['value']:.4f})")
    print(f"reverse mean cosine {rev['mean']:.4f}; asymmetry "
          f"{'undefined' if run.report['asymmetry'] is None else format(run.report['asymmetry'], '.3f')}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="latentbridge", description="Cross-model latent bridge on toy LMs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", type=str, default=None, help="experiment config JSON")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--out", type=str, required=True, help="output directory")

    sp = sub.add_parser("train-lm", help="train stock toy LMs")
    common(sp)
    sp.add_argument("--model", choices=["a", "b", "both"], default="both")
    sp.set_defaults(func=cmd_train_lm)

    sp = sub.add_parser("extract", help="extract semantic vectors into an LVEC store")
    common(sp, config=False)
    sp.add_argument("--model", required=True)
    sp.add_argument("--prompts", default="stock")
    sp.add_argument("--field", choices=["full", "part"], default="full")
    sp.add_argument("--name", default=None)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("train-translator", help="train forward and reverse translators")
    common(sp)
    sp.add_argument("--src", required=True)
    sp.add_argument("--tgt", required=True)
    sp.set_defaults(func=cmd_train_translator)

    sp = sub.add_parser("inject-generate", help="baseline / injected / reference generations")
    common(sp)
    sp.add_argument("--model", required=True, help="target model checkpoint")
    sp.add_argument("--source-model", required=True)
    sp.add_argument("--translator", required=True, help="forward translator checkpoint")
    sp.add_argument("--prompts", default="stock")
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--alpha", type=float, default=None)
    sp.set_defaults(func=cmd_inject_generate)

    sp = sub.add_parser("eval-bridge", help="run the full pipeline and write the report")
    common(sp)
    sp.add_argument("--no-figures", action="store_true")
    sp.add_argument("--no-steering", action="store_true")
    sp.set_defaults(func=cmd_eval_bridge)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        out = Outputs(Path(args.out))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        args.func(args, out)
    except UsageError as exc:
        out.rollback()
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, TrainingError) as exc:
        out.rollback()
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        out.rollback()
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
