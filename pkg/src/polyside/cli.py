"""Command-line entry point: ``polyside <command> --config run.yaml``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .dataset import Regime, read_splits, write_splits
from .errors import ConfigError, DataError, MissingArtifact, NumericDivergence, PolysideError, UnknownPair
from .explain import attribute, default_candidates, format_explanation, rank_candidates
from .features import Featurizer, read_manifest, write_manifest
from .ingest import PUBLISHED_STATS, format_stats_report, hash_files, ingest_dataset
from .model import (
    BaselineFeaturizer,
    Mode,
    load_baseline,
    load_checkpoint,
    poe_logit,
    save_baseline,
    save_checkpoint,
)
from .pipeline import MODEL_MODES, build_space, evaluate_model, fit, make_splits, prepare
from .synthetic import PlantedRuleConfig, generate, write_files
from .trainer import active_drugs, format_log

REGIME_MODELS = {
    Regime.FULL: ("baseline", "distmult", "kblrn"),
    Regime.DRUG_DRUG_ONLY: ("distmult", "kblrn"),
    Regime.TARGETED_DRUGS_ONLY: ("distmult", "kblrn"),
}
TABLE_LABELS = {
    "baseline": "Baseline",
    "distmult": "DistMult",
    "kblrn": "KBlrn",
}
REGIME_SUFFIX = {
    Regime.FULL: "",
    Regime.DRUG_DRUG_ONLY: " (drug-drug interactions only)",
    Regime.TARGETED_DRUGS_ONLY: " (drugs with protein targets only)",
}


def _sha256(path) -> str:
    return hash_files([path])


class Run:
    """One pipeline invocation: a config, its output directory, and a cached graph."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self._graph = None
        self._data_hash = None

    # -- paths -------------------------------------------------------------

    @property
    def regime(self) -> Regime:
        return Regime(self.cfg.regime)

    @property
    def regime_dir(self) -> Path:
        return self.out / self.regime.value

    @property
    def splits_path(self) -> Path:
        return self.out / "splits.tsv"

    @property
    def features_path(self) -> Path:
        return self.regime_dir / "features.txt"

    def checkpoint_path(self, model: str) -> Path:
        return self.regime_dir / f"{model}.ckpt"

    # -- shared state --------------------------------------------------------

    def graph(self):
        if self._graph is None:
            for p in self.cfg.paths():
                if not p.exists():
                    raise DataError(f"input file not found: {p}")
            self._graph, self._stats = ingest_dataset(self.cfg.paths(), self.cfg.schema())
        return self._graph

    def data_hash(self) -> str:
        if self._data_hash is None:
            self._data_hash = hash_files(self.cfg.paths())
        return self._data_hash

    def splits(self):
        if not self.splits_path.exists():
            raise MissingArtifact(self.splits_path, "split")
        splits, manifest = read_splits(self.splits_path, self.graph())
        if manifest.get("dataset") != self.data_hash():
            raise DataError(f"{self.splits_path} was built from different input files; rerun `polyside split`")
        return splits

    def prepared(self):
        return prepare(self.graph(), self.splits(), self.regime)

    def space(self, prep):
        if not self.features_path.exists():
            raise MissingArtifact(self.features_path, "featurize")
        return read_manifest(self.features_path, prep.train_graph, self.cfg.min_support)

    def write(self, path: Path, text: str | bytes):
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(text, bytes):
            path.write_bytes(text)
        else:
            path.write_text(text, encoding="utf-8")

    def manifest(self, command: str, outputs: list[Path], inputs: dict | None = None, extra=None):
        shared = command in ("ingest", "split", "reproduce")
        self.write((self.out if shared else self.regime_dir) / "config.yaml", self.cfg.to_yaml())
        entry = {
            "command": command,
            "version": __version__,
            "config": dataclasses.asdict(self.cfg),
            "config_sha256": self.cfg.digest(),
            "dataset_sha256": self.data_hash(),
            "inputs": {k: _sha256(v) for k, v in (inputs or {}).items()},
            "outputs": {str(p.relative_to(self.out)): _sha256(p) for p in outputs},
        }
        if extra:
            entry.update(extra)
        name = command if shared else f"{command}-{self.regime.value}"
        if extra and "model" in extra:
            name += f"-{extra['model']}"
        path = self.out / "manifests" / f"{name}.json"
        self.write(path, json.dumps(entry, indent=2, sort_keys=True) + "\n")
        return path


# -- commands -----------------------------------------------------------------

def cmd_ingest(run: Run) -> str:
    run.graph()
    report = format_stats_report(run._stats, PUBLISHED_STATS)
    out = run.out / "stats.txt"
    run.write(out, report)
    run.manifest("ingest", [out])
    return report


def cmd_split(run: Run) -> Path:
    g = run.graph()
    spec = run.cfg.split_spec()
    splits = make_splits(g, spec)
    run.out.mkdir(parents=True, exist_ok=True)
    header = {"dataset": run.data_hash(), "seed": spec.seed,
              "fractions": ",".join(repr(f) for f in spec.fractions)}
    write_splits(run.splits_path, g, splits, header)
    run.manifest("split", [run.splits_path])
    return run.splits_path


def cmd_featurize(run: Run) -> Path:
    prep = run.prepared()
    space = build_space(prep, run.cfg.min_support)
    run.regime_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(run.features_path, space, prep.train_graph)
    run.manifest("featurize", [run.features_path], {"splits": run.splits_path})
    return run.features_path


def cmd_train(run: Run, model: str) -> Path:
    prep = run.prepared()
    inputs = {"splits": run.splits_path}
    space = None
    if model == "kblrn":
        space = run.space(prep)
        inputs["features"] = run.features_path
    cfg = run.cfg.train_config()
    ckpt = run.checkpoint_path(model)
    log_path = run.regime_dir / f"{model}.log"
    try:
        result = fit(prep, model, cfg, space, deterministic=run.cfg.deterministic)
    except NumericDivergence as exc:
        run.write(log_path, format_log(exc.log))
        raise
    run.regime_dir.mkdir(parents=True, exist_ok=True)
    if model == "baseline":
        save_baseline(ckpt, result.params, BaselineFeaturizer(prep.train_graph).digest())
    else:
        digest = space.digest(prep.train_graph) if space is not None else "none"
        save_checkpoint(ckpt, result.params, digest, model)
    run.write(log_path, format_log(result.log))
    run.manifest("train", [ckpt, log_path], inputs, {"model": model, "best_epoch": result.best_epoch})
    return ckpt


def _load_model(run: Run, prep, model: str, checkpoint=None):
    ckpt = Path(checkpoint) if checkpoint else run.checkpoint_path(model)
    if not ckpt.exists():
        raise MissingArtifact(ckpt, f"train --model {model}")
    if model == "baseline":
        return load_baseline(ckpt, BaselineFeaturizer(prep.train_graph).digest()), None
    space = run.space(prep) if model == "kblrn" else None
    digest = space.digest(prep.train_graph) if space is not None else "none"
    params, _ = load_checkpoint(ckpt, digest)
    return params, space


def cmd_eval(run: Run, model: str, checkpoint=None):
    prep = run.prepared()
    params, space = _load_model(run, prep, model, checkpoint)
    report = evaluate_model(prep, model, params, space)
    if run.cfg.threads > 1:
        from .metrics import evaluate
        from .pipeline import scorer_for
        report = evaluate(scorer_for(prep, model, params, space), prep.splits.test,
                          threads=run.cfg.threads)
    g = prep.graph
    rep_path = run.regime_dir / f"{model}.report.txt"
    sum_path = run.regime_dir / f"{model}.summary.json"
    run.write(rep_path, report.format(g.relation_key))
    run.write(sum_path, report.summary_json())
    run.manifest("eval", [rep_path, sum_path], {"checkpoint": run.checkpoint_path(model)}, {"model": model})
    return report


def cmd_explain(run: Run, drug_a: str, drug_b: str, side_effect: str, top: int = 10,
                checkpoint=None) -> str:
    prep = run.prepared()
    g = prep.graph
    try:
        a, b = g.entity_id(drug_a), g.entity_id(drug_b)
        r = g.relation_id(side_effect)
    except KeyError as exc:
        raise UnknownPair(f"unknown drug or side effect {exc}") from None
    params, space = _load_model(run, prep, "kblrn", checkpoint)
    featurizer = Featurizer(space, prep.train_graph)
    drugs = active_drugs(prep.train_graph, prep.splits)
    candidates = default_candidates(g, r, drugs, prep.splits)
    query = np.array([[min(a, b), max(a, b)]], dtype=np.int64)
    if not (candidates == query).all(axis=1).any():
        candidates = np.vstack([candidates, query])
    logits, ranks = {}, {}
    n = 0
    for mode in (Mode.EMBEDDING_ONLY, Mode.COMBINED):
        ranking = rank_candidates(params, featurizer, r, candidates, mode)
        ranks[mode] = ranking.rank_of(a, b)
        logits[mode] = poe_logit(params, featurizer, min(a, b), r, max(a, b), mode)
        n = ranking.n_candidates
    attribution = attribute(params, featurizer, (a, b), r)
    text = format_explanation(g, (a, b), r, logits, ranks, attribution, n, top)
    out = run.regime_dir / f"explain-{drug_a}-{drug_b}-{side_effect}.txt"
    run.write(out, text)
    run.manifest("explain", [out], {"checkpoint": run.checkpoint_path("kblrn")},
                 {"model": "kblrn", "query": f"{drug_a}-{drug_b}-{side_effect}"})
    return text


def cmd_reproduce(run: Run) -> str:
    cmd_split(run)
    rows = []
    for regime, models in REGIME_MODELS.items():
        sub = Run(dataclasses.replace(run.cfg, regime=regime.value))
        sub._graph, sub._stats, sub._data_hash = run.graph(), run._stats, run.data_hash()
        cmd_featurize(sub)
        for model in models:
            cmd_train(sub, model)
            rep = cmd_eval(sub, model)
            rows.append((TABLE_LABELS[model] + REGIME_SUFFIX[regime], regime.value, model, rep.aggregate))
    width = max(len(r[0]) for r in rows)
    lines = [f"{'method':<{width}} {'auroc':>7} {'aupr':>7} {'ap50':>7}"]
    for label, _, _, (auroc, aupr, ap50) in rows:
        lines.append(f"{label:<{width}} {auroc:7.3f} {aupr:7.3f} {ap50:7.3f}")
    table = "\n".join(lines) + "\n"
    table_path = run.out / "results_table.txt"
    json_path = run.out / "results_table.json"
    run.write(table_path, table)
    run.write(json_path, json.dumps(
        [{"method": label, "regime": reg, "model": m, "auroc": a[0], "aupr": a[1], "ap50": a[2]}
         for label, reg, m, a in rows], indent=2) + "\n")
    run.manifest("reproduce", [table_path, json_path], {"splits": run.splits_path})
    return table


def cmd_synth(out_dir, target_coverage: float, seed: int) -> Path:
    out_dir = Path(out_dir)
    pcfg = PlantedRuleConfig(target_coverage=target_coverage, seed=seed)
    data = generate(pcfg)
    write_files(data, out_dir / "data")
    cfg = RunConfig(
        ppi_path="data/ppi.csv", targets_path="data/targets.csv",
        combo_path="data/combo.csv", mono_path="data/mono.csv",
        output_dir="run", dim=32, learning_rate=0.5, l2=0.01, batch_size=256,
        patience=10, seed=seed,
    )
    cfg_path = out_dir / "config.yaml"
    cfg_path.write_text(cfg.to_yaml(with_docs=True), encoding="utf-8")
    rules = "\n".join(f"{code} {p} {q}" for code, pairs in data.rules.items() for p, q in pairs)
    (out_dir / "planted_rules.txt").write_text(rules + "\n", encoding="utf-8")
    return cfg_path


# -- argument parsing --------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, help="worker threads (1 for deterministic runs)")
    common.add_argument("--deterministic", action="store_true", default=None,
                        help="bit-reproducible outputs (requires --threads 1)")
    common.add_argument("--regime", choices=[r.value for r in Regime], help="override the config regime")
    common.add_argument("--output-dir", help="override the config output directory")
    common.add_argument("--print-config", action="store_true",
                        help="print the effective configuration with documentation and exit")

    parser = _Parser(prog="polyside", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")
    sub.add_parser("ingest", parents=[common], help="parse inputs, report graph statistics")
    sub.add_parser("split", parents=[common], help="sample negatives and write stratified splits")
    sub.add_parser("featurize", parents=[common], help="enumerate relational feature templates")
    for name in ("train", "eval"):
        p = sub.add_parser(name, parents=[common], help=f"{name} one model")
        p.add_argument("--model", choices=["baseline", "distmult", "kblrn"])
        if name == "eval":
            p.add_argument("--checkpoint", type=Path)
    p = sub.add_parser("explain", parents=[common], help="rank and attribute one drug pair")
    p.add_argument("--pair", nargs=2, metavar=("DRUG_A", "DRUG_B"), required=True)
    p.add_argument("--side-effect", required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--checkpoint", type=Path)
    sub.add_parser("reproduce", parents=[common], help="all regimes and models, results table")
    p = sub.add_parser("synth", help="write a planted-rule synthetic dataset and config")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--target-coverage", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config_from_args(args) -> RunConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.deterministic:
        overrides["deterministic"] = True
    if args.regime is not None:
        overrides["regime"] = args.regime
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    if getattr(args, "model", None):
        overrides["model"] = args.model
    if overrides.get("threads", 1) > 1 and "deterministic" not in overrides:
        overrides["deterministic"] = False
    return load_config(args.config, overrides)


def run_command(args) -> int:
    if args.command == "synth":
        path = cmd_synth(args.out, args.target_coverage, args.seed)
        print(f"wrote {path}")
        return 0
    cfg = _config_from_args(args)
    if args.print_config:
        sys.stdout.write(cfg.to_yaml(with_docs=True))
        return 0
    if args.command is None:
        raise ConfigError("no command given (see --help)")
    run = Run(cfg)
    if args.command == "ingest":
        sys.stdout.write(cmd_ingest(run))
    elif args.command == "split":
        print(f"wrote {cmd_split(run)}")
    elif args.command == "featurize":
        print(f"wrote {cmd_featurize(run)}")
    elif args.command == "train":
        print(f"wrote {cmd_train(run, cfg.model)}")
    elif args.command == "eval":
        rep = cmd_eval(run, cfg.model, args.checkpoint)
        a = rep.aggregate
        print(f"aggregate auroc={a[0]:.4f} aupr={a[1]:.4f} ap50={a[2]:.4f}")
    elif args.command == "explain":
        sys.stdout.write(cmd_explain(run, args.pair[0], args.pair[1], args.side_effect,
                                     args.top, args.checkpoint))
    elif args.command == "reproduce":
        sys.stdout.write(cmd_reproduce(run))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return run_command(args)
    except ConfigError as exc:
        print(f"polyside: config error: {exc}", file=sys.stderr)
        return 1
    except NumericDivergence as exc:
        print(f"polyside: numeric divergence: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError) as exc:
        print(f"polyside: data error: {exc}", file=sys.stderr)
        return 2
    except PolysideError as exc:
        print(f"polyside: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
