"""Command-line entry point: ``discoref <subcommand> [options]``.

Every option can also come from a flat ``key = value`` file passed with
``--config``; flags given on the command line win.  Keys use the option
names with dashes or underscores (``learning-rate = 0.01``).

Exit codes: 0 success, 1 usage, 2 validation, 3 runtime.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import platform
import sys
import time
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import dlca_histogram
from .corpus_io import Clustering, ConllError, Corpus, read_corpus, write_conll
from .features import candidate_pairs, features_csv
from .metrics import evaluate, t_test_one_tailed
from .rst_tree import RstParseError, load_trees
from .scorer import (
    PRESETS, FileEmbeddings, HashedEmbeddings, ScorerParams, TrainConfig, evaluate_prepared,
    predict, prepare_doc, train,
)
from .synth import DEFAULT_SPLITS, SynthConfig, write_synth

log = logging.getLogger("discoref")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


class UsageError(Exception):
    pass


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- config file -----------------------------------------------------------------

def read_config(path: str | Path) -> dict[str, str]:
    """Parse a flat ``key = value`` file.  Blank lines and ``#`` comments are skipped."""
    out = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{line_no}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def config_hash(options: dict) -> str:
    blob = json.dumps(options, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def write_manifest(path: str | Path, command: str, options: dict, seeds=(), extra=None) -> dict:
    manifest = {
        "command": command,
        "options": options,
        "config_hash": config_hash(options),
        "seeds": list(seeds),
        "versions": {"discoref": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }
    if extra:
        manifest.update(extra)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


# -- helpers ----------------------------------------------------------------------

def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _splits(text: str) -> dict[str, int]:
    if not text.strip():
        return {}
    out = {}
    for item in text.split(","):
        name, _, n = item.partition("=")
        try:
            out[name.strip()] = int(n)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected name=count pairs, got {item!r}")
    return out


def _presets(text: str) -> list[str]:
    names = [p.strip() for p in text.split(",") if p.strip()]
    unknown = [p for p in names if p not in PRESETS]
    if unknown or not names:
        raise argparse.ArgumentTypeError(f"unknown preset(s) {unknown}; choose from {sorted(PRESETS)}")
    return names


def _existing(path, what="path") -> Path:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"{what} does not exist: {p}")
    return p


def load_data(corpus_path, rst_dir=None):
    """Read a corpus and its binarized trees (trees default to the corpus directory)."""
    corpus_path = _existing(corpus_path, "corpus")
    corpus = read_corpus(corpus_path)
    if not len(corpus):
        raise ValidationError(f"no documents found in {corpus_path}")
    rst_dir = Path(rst_dir) if rst_dir else (corpus_path if corpus_path.is_dir() else corpus_path.parent)
    return corpus, load_trees(_existing(rst_dir, "RST directory"), corpus)


def _provider(args):
    if args.embeddings:
        return FileEmbeddings(_existing(args.embeddings, "embedding file"))
    return HashedEmbeddings(args.embedding_dim, args.embedding_seed)


def _prepare(corpus, trees, provider, k):
    return [prepare_doc(d, trees[d.doc_id], provider, k) for d in corpus]


def _train_config(args, preset=None, seed=None) -> TrainConfig:
    cfg = TrainConfig(
        learning_rate=args.learning_rate, max_epochs=args.max_epochs, dropout=args.dropout,
        max_antecedents=args.max_antecedents, seed=args.seed if seed is None else seed,
        patience=args.patience, hidden=args.hidden, feature_dim=args.feature_dim,
    )
    return cfg.with_preset(preset or args.preset)


def _options(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
            if k not in ("func", "config")}


# -- subcommands ------------------------------------------------------------------

def cmd_synth(args, out):
    config = SynthConfig(seed=args.seed) if args.n_docs is None else SynthConfig(n_docs=args.n_docs, seed=args.seed)
    if args.synth_config:
        overrides = json.loads(_existing(args.synth_config, "synth config").read_text(encoding="utf-8"))
        config = SynthConfig.from_dict({**asdict(config), **overrides})
    sizes = args.splits if args.splits else None
    manifest = write_synth(args.out, config, sizes, args.seed)
    print(f"wrote {len(manifest['files'])} files to {args.out}", file=out)
    return EXIT_OK


def cmd_validate(args, out):
    corpus, trees = load_data(args.corpus, args.rst_dir)
    n_mentions = sum(len(d.mentions) for d in corpus)
    depth = max(t.max_depth() for t in trees.values())
    print(f"ok documents={len(corpus)} mentions={n_mentions} max_tree_depth={depth}", file=out)
    return EXIT_OK


def cmd_featurize(args, out):
    corpus, trees = load_data(args.corpus, args.rst_dir)
    text = features_csv(candidate_pairs(d, trees[d.doc_id], args.max_antecedents) for d in corpus)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
        write_manifest(f"{args.out}.manifest.json", "featurize", _options(args))
        print(f"wrote {text.count(chr(10)) - 1} pairs to {args.out}", file=out)
    else:
        out.write(text)
    return EXIT_OK


def cmd_train(args, out):
    provider = _provider(args)
    tr_corpus, tr_trees = load_data(args.train, args.train_rst_dir)
    dev_corpus, dev_trees = load_data(args.dev, args.dev_rst_dir)
    cfg = _train_config(args)
    params, history = train(_prepare(tr_corpus, tr_trees, provider, cfg.max_antecedents),
                            _prepare(dev_corpus, dev_trees, provider, cfg.max_antecedents),
                            cfg, token_dim=provider.dim)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    params.save(outdir / "model.npz")
    _write_history(outdir / "history.csv", history)
    write_manifest(outdir / "manifest.json", "train", _options(args), [cfg.seed],
                   {"train_config": asdict(cfg), "best_epoch": history.best_epoch})
    best = history.epochs[history.best_epoch]["dev_avg_f1"]
    print(f"best_epoch={history.best_epoch} dev_avg_f1={best:.4f} checkpoint={outdir / 'model.npz'}", file=out)
    return EXIT_OK


def _write_history(path, history):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "loss", "dev_avg_f1"])
        for e in history.epochs:
            w.writerow([e["epoch"], f"{e['loss']:.6f}", f"{e['dev_avg_f1']:.6f}"])


def cmd_predict(args, out):
    params = ScorerParams.load(_existing(args.checkpoint, "checkpoint"))
    provider = _provider(args)
    if provider.dim != params.token_dim:
        raise ValidationError(f"embedding width {provider.dim} does not match checkpoint ({params.token_dim})")
    corpus, trees = load_data(args.corpus, args.rst_dir)
    chunks = []
    for pd, doc in zip(_prepare(corpus, trees, provider, args.max_antecedents), corpus):
        chunks.append(write_conll(doc, predict(params, pd), keep_singletons=args.keep_singletons))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text("".join(chunks), encoding="utf-8")
    write_manifest(f"{args.out}.manifest.json", "predict", _options(args))
    print(f"wrote predictions for {len(corpus)} documents to {args.out}", file=out)
    return EXIT_OK


def score_corpora(gold: Corpus, pred: Corpus):
    by_id = pred.by_id()
    missing = [d.doc_id for d in gold if d.doc_id not in by_id]
    if missing:
        raise ValidationError(f"documents missing from predictions: {', '.join(missing)}")
    pairs = []
    for g in gold:
        p = by_id[g.doc_id]
        spans = {(m.start, m.end): m.id for m in g.mentions}
        try:
            clusters = [[spans[(p.mentions[k].start, p.mentions[k].end)] for k in c.mention_ids]
                        for c in p.gold_chains]
        except KeyError:
            raise ValidationError(f"{g.doc_id}: predicted mention spans not in gold") from None
        pairs.append((g.gold_clustering(), Clustering.from_sets(clusters)))
    return evaluate(pairs)


def cmd_score(args, out):
    gold = read_corpus(_existing(args.gold, "gold file"))
    pred = read_corpus(_existing(args.pred, "prediction file"))
    for line in score_corpora(gold, pred).lines():
        print(line, file=out)
    return EXIT_OK


def cmd_analyze(args, out):
    corpus, trees = load_data(args.corpus, args.rst_dir)
    hist = dlca_histogram(corpus, trees)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "dlca_hist.csv").write_text(hist.to_csv(), encoding="utf-8")
    write_manifest(outdir / "manifest.json", "analyze", _options(args))
    for line in hist.summary():
        print(line, file=out)
    return EXIT_OK


# -- experiment grid ------------------------------------------------------------------

def run_grid(prepared: dict, presets, seeds, base: TrainConfig, token_dim: int, outdir=None, progress=None):
    """Train and test every preset x seed.  ``prepared`` maps train/dev/test to
    lists of PreparedDoc.  Returns ``{preset: [test avg F1 per seed]}``."""
    scores = {}
    for preset in presets:
        scores[preset] = []
        for seed in seeds:
            cfg = replace(base, seed=seed).with_preset(preset)
            t0 = time.perf_counter()
            params, history = train(prepared["train"], prepared["dev"], cfg, token_dim=token_dim)
            f1 = evaluate_prepared(params, prepared["test"])
            scores[preset].append(f1)
            if outdir is not None:
                run_dir = Path(outdir) / "runs" / preset / f"seed{seed}"
                run_dir.mkdir(parents=True, exist_ok=True)
                _write_history(run_dir / "history.csv", history)
                params.save(run_dir / "model.npz")
            if progress:
                progress(f"{preset} seed={seed} test_avg_f1={f1:.4f} best_epoch={history.best_epoch} "
                         f"({time.perf_counter() - t0:.1f}s)")
    return scores


def results_rows(scores: dict, seeds, reference="baseline", alpha=0.01, paired=False):
    """One row per preset: per-seed and mean avg F1 (in points), p-value vs
    the reference preset, and a significance flag at ``alpha``."""
    rows = []
    for preset, vals in scores.items():
        row = {"preset": preset}
        row.update({f"seed{s}": 100 * v for s, v in zip(seeds, vals)})
        row["mean"] = 100 * float(np.mean(vals))
        if reference in scores and preset != reference and len(vals) >= 2:
            _, p = t_test_one_tailed(vals, scores[reference], paired=paired)
            row["p_value"], row["significant"] = p, p < alpha
        else:
            row["p_value"], row["significant"] = None, False
        rows.append(row)
    return rows


def format_table(rows, seeds) -> str:
    header = ["preset"] + [f"seed{s}" for s in seeds] + ["mean", "p_vs_baseline", "sig"]
    body = []
    for r in rows:
        cells = [r["preset"]] + [f"{r[f'seed{s}']:.2f}" for s in seeds] + [f"{r['mean']:.2f}"]
        cells.append("-" if r["p_value"] is None else f"{r['p_value']:.4g}")
        cells.append("*" if r["significant"] else "")
        body.append(cells)
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(line, widths)).rstrip() for line in [header] + body]
    return "\n".join(lines) + "\n"


def rows_csv(rows, seeds) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["preset"] + [f"seed{s}" for s in seeds] + ["mean_avg_f1", "p_value", "significant"])
    for r in rows:
        w.writerow([r["preset"]] + [f"{r[f'seed{s}']:.4f}" for s in seeds] + [f"{r['mean']:.4f}",
                   "" if r["p_value"] is None else f"{r['p_value']:.6g}", int(r["significant"])])
    return buf.getvalue()


def cmd_experiment(args, out):
    provider = _provider(args)
    outdir = Path(args.out)
    if args.data:
        data = {s: load_data(Path(args.data) / s) for s in ("train", "dev", "test")}
    else:
        from .synth import generate_splits
        data = generate_splits(SynthConfig(seed=args.synth_seed), DEFAULT_SPLITS, args.synth_seed)
    prepared = {s: _prepare(c, t, provider, args.max_antecedents) for s, (c, t) in data.items()}
    base = _train_config(args, preset="baseline")
    seeds = args.seeds
    if not seeds:
        raise UsageError("at least one seed is required")
    scores = run_grid(prepared, args.presets, seeds, base, provider.dim, outdir,
                      progress=lambda msg: print(msg, file=sys.stderr, flush=True))
    rows = results_rows(scores, seeds, alpha=args.alpha, paired=args.paired)
    table = format_table(rows, seeds)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "results.txt").write_text(table, encoding="utf-8")
    (outdir / "results.csv").write_text(rows_csv(rows, seeds), encoding="utf-8")
    write_manifest(outdir / "manifest.json", "experiment", _options(args), seeds,
                   {"train_config": asdict(base)})
    out.write(table)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def _add_data(p, corpus_flag="--corpus"):
    p.add_argument(corpus_flag, required=True, help="CoNLL file or directory of *.conll files")
    p.add_argument("--rst-dir", help="directory of <doc_id>.rst files (default: next to the corpus)")


def _add_embeddings(p):
    p.add_argument("--embeddings", help="per-document token vector file (default: hashed vectors)")
    p.add_argument("--embedding-dim", type=int, default=32)
    p.add_argument("--embedding-seed", type=int, default=0)


def _add_training(p):
    d = {f.name: f.default for f in fields(TrainConfig)}
    p.add_argument("--learning-rate", type=float, default=d["learning_rate"])
    p.add_argument("--max-epochs", type=int, default=d["max_epochs"])
    p.add_argument("--dropout", type=float, default=d["dropout"])
    p.add_argument("--patience", type=int, default=d["patience"])
    p.add_argument("--hidden", type=int, default=d["hidden"])
    p.add_argument("--feature-dim", type=int, default=d["feature_dim"])
    p.add_argument("--seed", type=int, default=d["seed"])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="discoref", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"discoref {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help):
        p = sub.add_parser(name, help=help, description=help)
        p.add_argument("--config", help="flat key = value file; command-line flags override it")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic corpus with RST trees")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--splits", type=_splits, default="train=200,dev=20,test=40",
                   help="name=count list; empty writes --n-docs documents without splits")
    p.add_argument("--n-docs", type=int, help="document count when --splits is empty")
    p.add_argument("--synth-config", help="JSON file of generator settings")

    p = add("validate", cmd_validate, "check CoNLL files and RST tree alignment")
    _add_data(p)

    p = add("featurize", cmd_featurize, "write pair features as CSV")
    _add_data(p)
    p.add_argument("--max-antecedents", type=int, default=50)
    p.add_argument("--out", help="output CSV (default: stdout)")

    p = add("train", cmd_train, "train a pair scorer with early stopping on dev")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--train-rst-dir")
    p.add_argument("--dev-rst-dir")
    p.add_argument("--preset", choices=sorted(PRESETS), default="+disc+type")
    p.add_argument("--max-antecedents", type=int, default=50)
    p.add_argument("--out", required=True, help="output directory")
    _add_training(p)
    _add_embeddings(p)

    p = add("predict", cmd_predict, "decode clusters with a trained checkpoint")
    _add_data(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--max-antecedents", type=int, default=50)
    p.add_argument("--keep-singletons", type=_bool, nargs="?", const=True, default=False)
    p.add_argument("--out", required=True, help="output CoNLL file")
    _add_embeddings(p)

    p = add("score", cmd_score, "score predicted against gold CoNLL")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)

    p = add("analyze", cmd_analyze, "d_lca distribution per mention-pair category")
    _add_data(p)
    p.add_argument("--out", required=True, help="output directory for dlca_hist.csv")

    p = add("experiment", cmd_experiment, "preset x seed grid with significance tests")
    p.add_argument("--data", help="directory with train/ dev/ test/ (default: generate the synthetic corpus)")
    p.add_argument("--synth-seed", type=int, default=0)
    p.add_argument("--presets", type=_presets, default="baseline,+type,+disc,+disc+type,+disc+type-ds")
    p.add_argument("--seeds", type=_int_list, default=",".join(map(str, DEFAULT_SEEDS)))
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--paired", type=_bool, nargs="?", const=True, default=False)
    p.add_argument("--max-antecedents", type=int, default=50)
    p.add_argument("--out", required=True)
    _add_training(p)
    _add_embeddings(p)
    return parser


def _config_path(argv):
    for k, tok in enumerate(argv):
        if tok == "--config":
            if k + 1 >= len(argv):
                raise UsageError("--config needs a file argument")
            return argv[k + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv):
    parser = build_parser()
    path = _config_path(argv)
    choices = parser._subparsers._group_actions[0].choices
    command = next((tok for tok in argv if tok in choices), None)
    if path and command:
        values = read_config(_existing(path, "config file"))
        sub = choices[command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(values) - known - {"config", "help"})
        if unknown:
            raise UsageError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
        # config values become defaults, so explicit flags still win
        sub.set_defaults(**values)
        for action in sub._actions:
            if action.dest in values:
                action.required = False
    return parser.parse_args(argv)


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(message)s", stream=sys.stderr)
        return args.func(args, out)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, ConllError, RstParseError, FileNotFoundError, KeyError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"validation error: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:  # noqa: BLE001 - map everything else to the runtime code
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
