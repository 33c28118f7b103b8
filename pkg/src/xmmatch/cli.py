"""Command line interface.

Subcommands: generate, cluster, match, train, eval, hist. Every flag can be
supplied through an environment variable named XMM_<FLAG> (dashes become
underscores, e.g. XMM_MIN_PTS=3); explicit flags win over the environment,
which wins over presets and built-in defaults.

Exit codes: 0 success, 1 usage error, 2 data error (the offending module
error name is printed verbatim).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from . import __version__
from .clustering import centroids, dbscan
from .data_model import Modality, load_embeddings, save_embeddings
from .errors import ParseError, XMMatchError
from .evaluation import CMC_KS, match_quality, positive_distance_histogram, retrieve_and_score
from .matching import bccm, mbccm
from .objective import HyperParams
from .synth import SynthConfig, generate
from .trainer import Ablation, TrainConfig, format_record, run

ENV_PREFIX = "XMM_"
_MISSING = object()


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this toolkit reserves 2 for
    data errors, so usage problems exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _bool_from_env(raw: str) -> bool:
    return raw.strip().lower() in ("1", "true", "yes", "on")


def _int_list(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(int(part) for part in raw.split(","))


def _add(sub: argparse.ArgumentParser, flag: str, *, cast=str, default=None, **kw):
    """add_argument plus registration for environment-variable fallback.

    ``required`` flags are enforced after the environment is consulted, so
    XMM_* variables can satisfy them too.
    """
    required = kw.pop("required", False)
    action = kw.get("action")
    dest = flag.lstrip("-").replace("-", "_")
    if action == "store_true":
        sub.add_argument(flag, dest=dest, action="store_true", default=_MISSING)
        cast = _bool_from_env
        default = False if default is None else default
    else:
        sub.add_argument(flag, dest=dest, type=cast, default=_MISSING, **kw)
    sub._env_registry[dest] = (flag, cast, default, kw.get("choices"), required)


def _resolve_env(args: argparse.Namespace, sub: argparse.ArgumentParser) -> None:
    """Fill unset flags from XMM_* variables, then built-in defaults."""
    for dest, (flag, cast, default, choices, required) in sub._env_registry.items():
        if getattr(args, dest) is not _MISSING:
            continue
        raw = os.environ.get(ENV_PREFIX + dest.upper())
        if raw is None:
            if required:
                sub.error(f"the following argument is required: {flag}")
            setattr(args, dest, default)
            continue
        try:
            value = cast(raw)
        except ValueError:
            sub.error(f"invalid value {raw!r} for {flag} (from {ENV_PREFIX}{dest.upper()})")
        if choices is not None and value not in choices:
            sub.error(f"invalid choice {value!r} for {flag} (from {ENV_PREFIX}{dest.upper()})")
        setattr(args, dest, value)


def _sniff_modality(path: str) -> Modality:
    """Infer a file's modality from its first record tag."""
    with open(path, "r", encoding="ascii") as fh:
        fh.readline()  # header
        for lineno, line in enumerate(fh, start=2):
            line = line.strip("\n")
            if not line:
                continue
            tag = line.split(" ", 1)[0]
            if tag == "v":
                return Modality.VISIBLE
            if tag == "r":
                return Modality.INFRARED
            raise ParseError(lineno, f"unknown modality tag {tag!r}")
    raise ParseError(2, "file contains no records")


def _open_out(path: str | None):
    return open(path, "w", encoding="ascii") if path else sys.stdout


def _write_lines(path: str | None, lines: list[str]) -> None:
    out = _open_out(path)
    try:
        for line in lines:
            out.write(line + "\n")
    finally:
        if out is not sys.stdout:
            out.close()


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# subcommand bodies


def _cmd_generate(args) -> int:
    cfg = SynthConfig(
        n_ids=args.n_ids,
        per_id_per_modality=args.per_id,
        dim=args.dim,
        intra_sigma=args.intra_sigma,
        modality_shift=args.modality_shift,
        split_prob=args.split_prob,
        seed=args.seed,
        split_offset=args.split_offset,
    )
    visible, infrared = generate(cfg)
    save_embeddings(visible, args.out_visible)
    save_embeddings(infrared, args.out_infrared)
    return 0


def _cmd_cluster(args) -> int:
    es = load_embeddings(args.input, _sniff_modality(args.input))
    labels = dbscan(es, args.eps, args.min_pts)
    lines = [f"#clusters {labels.cluster_count}"]
    lines.extend(str(int(l)) for l in labels.labels)
    _write_lines(args.out, lines)
    return 0


def _load_pair(visible_path: str, infrared_path: str):
    visible = load_embeddings(visible_path, Modality.VISIBLE)
    infrared = load_embeddings(infrared_path, Modality.INFRARED)
    return visible, infrared


def _cmd_match(args) -> int:
    visible, infrared = _load_pair(args.visible, args.infrared)
    labels_v = dbscan(visible, args.eps, args.min_pts)
    labels_r = dbscan(infrared, args.eps, args.min_pts)
    matcher = mbccm if args.mode == "mbccm" else bccm
    result = matcher(centroids(visible, labels_v), centroids(infrared, labels_r))

    pair_lines = [f"{a} {b}" for a, b in result.pairs()]
    quality_lines: list[str] = []
    if visible.ids is not None and infrared.ids is not None:
        mq = match_quality(result, labels_v, visible.ids, labels_r, infrared.ids)
        quality_lines = [
            f"pair_precision={mq.pair_precision:.10g}",
            f"pair_recall={mq.pair_recall:.10g}",
            f"coverage={mq.coverage:.10g}",
        ]
    if args.out:
        _write_lines(args.out, pair_lines)
        if quality_lines:
            _write_lines(args.quality_out or args.out + ".quality", quality_lines)
    else:
        _write_lines(None, pair_lines + [f"# {q}" for q in quality_lines])
    return 0


def _cmd_train(args) -> int:
    ids_per_batch = args.ids_per_batch
    instances_per_id = args.instances_per_id
    if ids_per_batch is None:
        ids_per_batch = 4 if args.desk else 12
    if instances_per_id is None:
        instances_per_id = 4 if args.desk else 12

    visible, infrared = _load_pair(args.visible, args.infrared)
    cfg = TrainConfig(
        epochs=args.epochs,
        pretrain_epochs=args.pretrain_epochs,
        ids_per_batch=ids_per_batch,
        instances_per_id=instances_per_id,
        lr=args.lr,
        lr_decay_epochs=args.lr_decay_epochs,
        lr_decay_factor=args.lr_decay_factor,
        ablation=Ablation(args.ablation),
        hp=HyperParams(tau=args.tau, mu=args.mu, alpha=args.alpha, beta=args.beta),
        eps=args.eps,
        min_pts=args.min_pts,
        seed=args.seed,
        intermediate_sigma=args.intermediate_sigma,
    )
    result = run(visible, infrared, cfg)

    os.makedirs(args.out_dir, exist_ok=True)
    artifacts = {
        "visible": "visible.emb",
        "infrared": "infrared.emb",
        "metrics": "metrics.log",
        "manifest": "manifest.json",
    }
    save_embeddings(result.visible, os.path.join(args.out_dir, artifacts["visible"]))
    save_embeddings(result.infrared, os.path.join(args.out_dir, artifacts["infrared"]))

    quality_by_epoch = dict(result.quality)
    lines = []
    last_epoch = None
    for rec in result.records:
        if last_epoch is not None and rec.epoch != last_epoch and last_epoch in quality_by_epoch:
            mq = quality_by_epoch[last_epoch]
            lines.append(
                f"# quality {last_epoch} {mq.pair_precision:.10g} "
                f"{mq.pair_recall:.10g} {mq.coverage:.10g}"
            )
        lines.append(format_record(rec))
        last_epoch = rec.epoch
    if last_epoch is not None and last_epoch in quality_by_epoch:
        mq = quality_by_epoch[last_epoch]
        lines.append(
            f"# quality {last_epoch} {mq.pair_precision:.10g} "
            f"{mq.pair_recall:.10g} {mq.coverage:.10g}"
        )
    _write_lines(os.path.join(args.out_dir, artifacts["metrics"]), lines)

    config_echo = {
        dest: getattr(args, dest)
        for dest in sorted(vars(args))
        if not dest.startswith("_") and dest not in ("func", "command", "out_dir")
    }
    config_echo["ids_per_batch"] = ids_per_batch
    config_echo["instances_per_id"] = instances_per_id
    config_echo["lr_decay_epochs"] = list(cfg.lr_decay_epochs)
    manifest = {
        "version": __version__,
        "command": "train",
        "config": config_echo,
        "inputs": {
            "visible": {"path": args.visible, "sha256": _sha256(args.visible)},
            "infrared": {"path": args.infrared, "sha256": _sha256(args.infrared)},
        },
        "artifacts": artifacts,
    }
    with open(os.path.join(args.out_dir, artifacts["manifest"]), "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def _cmd_eval(args) -> int:
    query = load_embeddings(args.query, _sniff_modality(args.query))
    gallery = load_embeddings(args.gallery, _sniff_modality(args.gallery))
    rep = retrieve_and_score(query, gallery)
    lines = [f"map={rep.map:.10g}"]
    lines.extend(f"rank{k}={rep.cmc[k]:.10g}" for k in CMC_KS)
    lines.extend(
        [
            f"minp={rep.minp:.10g}",
            f"n_queries={rep.n_queries}",
            f"n_excluded={rep.n_excluded}",
        ]
    )
    _write_lines(args.out, lines)
    return 0


def _cmd_hist(args) -> int:
    visible, infrared = _load_pair(args.visible, args.infrared)
    counts, edges = positive_distance_histogram(
        visible, infrared, args.pairs, args.bins, args.seed
    )
    _write_lines(args.out, [f"{edges[i]:.10g} {int(counts[i])}" for i in range(len(counts))])
    return 0


# ---------------------------------------------------------------------------
# parser construction


def _new_sub(subparsers, name: str, help_text: str) -> argparse.ArgumentParser:
    sub = subparsers.add_parser(name, help=help_text)
    sub._env_registry = {}
    sub.set_defaults(_sub=sub)
    return sub


def build_parser() -> _Parser:
    parser = _Parser(prog="xmmatch", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"xmmatch {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    g = _new_sub(subparsers, "generate", "write a synthetic cross-modality dataset")
    _add(g, "--n-ids", cast=int, default=20)
    _add(g, "--per-id", cast=int, default=16)
    _add(g, "--dim", cast=int, default=32)
    _add(g, "--intra-sigma", cast=float, default=0.05)
    _add(g, "--modality-shift", cast=float, default=0.3)
    _add(g, "--split-prob", cast=float, default=0.3)
    _add(g, "--split-offset", cast=float, default=0.8)
    _add(g, "--seed", cast=int, default=0)
    _add(g, "--out-visible", default="visible.emb")
    _add(g, "--out-infrared", default="infrared.emb")
    g.set_defaults(func=_cmd_generate)

    c = _new_sub(subparsers, "cluster", "density-cluster one embedding file")
    _add(c, "--input", required=True)
    _add(c, "--eps", cast=float, default=0.6)
    _add(c, "--min-pts", cast=int, default=4)
    _add(c, "--out", default=None)
    c.set_defaults(func=_cmd_cluster)

    m = _new_sub(subparsers, "match", "cluster both modalities and match the clusterings")
    _add(m, "--visible", required=True)
    _add(m, "--infrared", required=True)
    _add(m, "--eps", cast=float, default=0.6)
    _add(m, "--min-pts", cast=int, default=4)
    _add(m, "--mode", choices=("mbccm", "bccm"), default="mbccm")
    _add(m, "--out", default=None)
    _add(m, "--quality-out", default=None)
    m.set_defaults(func=_cmd_match)

    t = _new_sub(subparsers, "train", "run the alternating cluster-match-train loop")
    _add(t, "--visible", required=True)
    _add(t, "--infrared", required=True)
    _add(t, "--out-dir", required=True)
    _add(t, "--epochs", cast=int, default=30)
    _add(t, "--pretrain-epochs", cast=int, default=0)
    _add(t, "--ids-per-batch", cast=int, default=None)
    _add(t, "--instances-per-id", cast=int, default=None)
    _add(t, "--desk", action="store_true")
    _add(t, "--lr", cast=float, default=3.5e-4)
    _add(t, "--lr-decay-epochs", cast=_int_list, default=())
    _add(t, "--lr-decay-factor", cast=float, default=10.0)
    _add(t, "--ablation", choices=tuple(a.value for a in Ablation), default="full")
    _add(t, "--tau", cast=float, default=0.05)
    _add(t, "--mu", cast=float, default=0.1)
    _add(t, "--alpha", cast=float, default=0.9)
    _add(t, "--beta", cast=float, default=0.5)
    _add(t, "--eps", cast=float, default=0.6)
    _add(t, "--min-pts", cast=int, default=4)
    _add(t, "--seed", cast=int, default=0)
    _add(t, "--intermediate-sigma", cast=float, default=0.05)
    _add(t, "--threads", cast=int, default=1, help="worker-thread cap (reference implementation is single-threaded)")
    t.set_defaults(func=_cmd_train)

    e = _new_sub(subparsers, "eval", "cross-modality retrieval report for query vs gallery")
    _add(e, "--query", required=True)
    _add(e, "--gallery", required=True)
    _add(e, "--out", default=None)
    e.set_defaults(func=_cmd_eval)

    h = _new_sub(subparsers, "hist", "histogram of positive cross-modality pair distances")
    _add(h, "--visible", required=True)
    _add(h, "--infrared", required=True)
    _add(h, "--pairs", cast=int, default=20000)
    _add(h, "--bins", cast=int, default=20)
    _add(h, "--seed", cast=int, default=0)
    _add(h, "--out", default=None)
    h.set_defaults(func=_cmd_hist)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _resolve_env(args, args._sub)
    try:
        return args.func(args)
    except XMMatchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
