"""Command line entry point: ``memetrap <command> [options]``.

Every command accepts ``--seed``, ``--config`` (a JSON object of option
values; flags given on the command line win), ``--out`` (output directory) and
``--threads``. Each output directory gets a ``manifest.json`` holding the
resolved configuration, its hash, the seed and a digest of every file written.

Exit codes: 0 success, 1 usage error, 2 data error, 3 acceptance-check failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .cascade import MODELS, CascadeParams, run_ensemble
from .community import DETECTORS, detect, modularity, read_partition, write_partition
from .forest import TrainingError, train_forest
from .graph import (
    Interaction,
    IngestionError,
    InteractionLog,
    build_network,
    degree_stats,
    read_edge_list,
    read_interactions,
    read_node_ids,
    write_edge_list,
    write_interactions,
    write_node_ids,
)
from .metrics import EARLY_N, community_flow, new_meme_filter, write_curve, write_reports
from .predictor import (
    FEATURE_NAMES,
    LABEL_MODES,
    THETAS,
    evaluate,
    extract_features,
    label_viral,
    read_features,
    write_eval_csv,
    write_features,
)
from .trace import EmptyTraceError, read_traces, require_nonempty, traces_from_records, write_traces
from . import pipeline
from .synthgen import PlantedCascadeSpec, PlantedPartitionSpec, gen_cascades, gen_network, world_network_spec, write_world

log = logging.getLogger("memetrap")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ACCEPTANCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class AcceptanceFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


def _str_list(text):
    return [x.strip() for x in str(text).split(",") if x.strip()]


def _bool(text):
    t = str(text).lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


# option tables: key -> (type, default, help). A default of ``None`` with
# ``required`` in the help text is checked after merging with the config file.
_CASCADE_OPTS = {
    "p": (float, 0.85, "probability of spreading rather than restarting"),
    "target_tweets": (int, 50, "tweets kept per simulated trace"),
    "oversample": (int, 10, "raw events per kept event"),
    "sample_rate": (float, 0.10, "fraction of raw events kept"),
    "n_sims": (int, 100, "simulations per ensemble"),
    "n_samples": (int, 10, "subsamples per simulation"),
}
_NET_INPUTS = {
    "edges": (str, None, "edge list TSV (required)"),
    "nodes": (str, None, "node id table; defaults to nodes.csv next to the edge list when present"),
}

COMMANDS = {
    "ingest": {
        "help": "build network, traces and interaction log from raw files",
        "seeded": False,
        "opts": {
            "edges": (str, None, "follow edge list TSV (required)"),
            "tweets": (str, None, "tweets JSONL (required)"),
            "mode": (str, "reciprocal", "edge semantics: reciprocal or as-is"),
            "history": (str, None, "JSON object meme -> tweet count in the prior period"),
            "history_threshold": (int, 20, "memes with this many prior tweets or more are dropped"),
            "max_bad_fraction": (float, 0.01, "abort when more lines than this fraction fail to parse"),
        },
    },
    "communities": {
        "help": "detect communities",
        "seeded": True,
        "opts": {**_NET_INPUTS, "algorithm": (str, "louvain", f"one of {sorted(DETECTORS)}")},
    },
    "simulate": {
        "help": "run a baseline model ensemble",
        "seeded": True,
        "opts": {
            **_NET_INPUTS,
            "partition": (str, None, "partition CSV (required)"),
            "model": (str, "M2", f"one of {MODELS}"),
            "mode": (str, "tweets", "M1 sampling mode: tweets or users"),
            "early_n": (int, EARLY_N, "early-stage window"),
            "keep_traces": (_bool, False, "also write the sampled traces"),
            **_CASCADE_OPTS,
        },
    },
    "metrics": {
        "help": "concentration measures relative to random sampling, plus community flow",
        "seeded": True,
        "opts": {
            **_NET_INPUTS,
            "partition": (str, None, "partition CSV (required)"),
            "traces": (str, None, "trace JSONL (required)"),
            "interactions": (str, None, "interaction JSONL for edge weights and focus"),
            "early_n": (int, EARLY_N, "early-stage window"),
            **_CASCADE_OPTS,
        },
    },
    "features": {
        "help": "early-stage feature table",
        "seeded": False,
        "opts": {
            **_NET_INPUTS,
            "partition": (str, None, "partition CSV (required)"),
            "traces": (str, None, "trace JSONL (required)"),
            "interactions": (str, None, "interaction JSONL"),
            "early_n": (int, EARLY_N, "early-stage window"),
        },
    },
    "train": {
        "help": "train the forest on a feature table",
        "seeded": True,
        "opts": {
            "features": (str, None, "features CSV (required)"),
            "theta": (int, 90, "virality percentile"),
            "label_mode": (str, "users", "popularity measure: tweets or users"),
            "n_trees": (int, 500, "trees in the forest"),
            "features_per_tree": (int, 4, "random features per tree"),
            "per_split": (_bool, False, "redraw features at every split"),
            "include_short": (_bool, False, "keep memes whose whole trace is shorter than the early window"),
        },
    },
    "eval": {
        "help": "cross-validated precision/recall grid with both baselines",
        "seeded": True,
        "opts": {
            "features": (str, None, "features CSV (required)"),
            "thetas": (_int_list, list(THETAS), "comma-separated percentiles"),
            "label_modes": (_str_list, list(LABEL_MODES), "comma-separated popularity measures"),
            "folds": (int, 10, "cross-validation folds"),
            "n_trees": (int, 500, "trees per forest"),
            "features_per_tree": (int, 4, "random features per tree"),
            "trials": (int, 1000, "random-guess trials"),
            "include_short": (_bool, False, "keep memes whose whole trace is shorter than the early window"),
        },
    },
    "synth": {
        "help": "generate a planted world",
        "seeded": True,
        "opts": {
            "preset": (str, "world", "network preset: world or reference"),
            "n_memes": (int, 600, "number of memes"),
            "network": (json.loads, None, "JSON object overriding network generator fields"),
            "cascades": (json.loads, None, "JSON object overriding cascade generator fields"),
        },
    },
    "reproduce": {
        "help": "run the full synthetic pipeline and the acceptance checks",
        "seeded": True,
        "opts": {
            "n_memes": (int, 600, "memes in the planted world"),
            "algorithm": (str, "louvain", "community detection algorithm"),
            "thetas": (_int_list, list(THETAS), "comma-separated percentiles"),
            "folds": (int, 10, "cross-validation folds"),
            "n_trees": (int, 500, "trees per forest"),
            "features_per_tree": (int, 4, "random features per tree"),
            "trials": (int, 1000, "random-guess trials"),
            "early_n": (int, EARLY_N, "early-stage window"),
            **_CASCADE_OPTS,
        },
    },
}

# keys that never change results and so stay out of the manifest hash
_VOLATILE = ("out", "threads", "config")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="memetrap", description="Meme concentration in network communities.")
    parser.add_argument("--version", action="version", version=f"memetrap {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, spec in COMMANDS.items():
        p = sub.add_parser(name, help=spec["help"], description=spec["help"])
        p.add_argument("--seed", type=int, default=None, help="master seed" + (" (required)" if spec["seeded"] else ""))
        p.add_argument("--config", default=None, help="JSON file of option values; flags override it")
        p.add_argument("--out", default=None, help="output directory (required)")
        p.add_argument("--threads", type=int, default=None, help="worker thread cap (default 1)")
        p.add_argument("-v", "--verbose", action="count", default=0)
        for key, (typ, default, text) in spec["opts"].items():
            shown = "" if default is None else f" (default {default})"
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None, help=text + shown)
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    spec = COMMANDS[command]
    cfg = {k: d for k, (_, d, _) in spec["opts"].items()}
    cfg.update(seed=None, threads=1, out=None)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {args.config} is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {unknown}")
        for k, v in loaded.items():
            typ = spec["opts"][k][0] if k in spec["opts"] else int
            if v is not None and typ in (int, float) and not isinstance(v, (int, float)):
                raise UsageError(f"config key {k!r} must be numeric")
            cfg[k] = v
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if cfg["out"] is None:
        raise UsageError("--out is required")
    if spec["seeded"] and cfg["seed"] is None:
        raise UsageError(f"{command} needs an explicit --seed")
    if cfg["threads"] < 1:
        raise UsageError("--threads must be >= 1")
    for k, (_, _, text) in spec["opts"].items():
        if "(required)" in text and cfg[k] is None:
            raise UsageError(f"--{k.replace('_', '-')} is required")
    return cfg


def config_hash(cfg: dict) -> str:
    stable = {k: v for k, v in cfg.items() if k not in _VOLATILE}
    return hashlib.sha256(json.dumps(stable, sort_keys=True).encode()).hexdigest()


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: dict, extra: dict | None = None) -> dict:
    own = out / "manifest.json"
    files = sorted(p for p in out.rglob("*") if p.is_file() and p != own)
    doc = {
        "command": command,
        "version": __version__,
        "seed": cfg.get("seed"),
        "config": {k: v for k, v in cfg.items() if k not in _VOLATILE},
        "config_hash": config_hash(cfg),
        "files": {p.relative_to(out).as_posix(): _digest(p) for p in files},
    }
    if extra:
        doc.update(extra)
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return doc


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _clean(obj):
    """Replace NaN/inf by None so reports stay valid JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _exists(path, what):
    if path is None or not Path(path).is_file():
        raise DataError(f"{what} not found: {path}")
    return Path(path)


def load_network(cfg: dict):
    edges = _exists(cfg["edges"], "edge list")
    nodes_path = cfg.get("nodes")
    if nodes_path is None and (edges.parent / "nodes.csv").is_file():
        nodes_path = edges.parent / "nodes.csv"
    nodes = read_node_ids(_exists(nodes_path, "node table")) if nodes_path else ()
    return build_network(read_edge_list(edges), "as-is", nodes)


def _params(cfg, target=None) -> CascadeParams:
    return CascadeParams(cfg["p"], target or cfg["target_tweets"], cfg["oversample"], cfg["sample_rate"], cfg["seed"])


# ---------------------------------------------------------------- commands


def cmd_ingest(cfg: dict, out: Path) -> int:
    edges = read_edge_list(_exists(cfg["edges"], "edge list"))
    tweets_path = _exists(cfg["tweets"], "tweets file")
    if cfg["mode"] not in ("reciprocal", "as-is"):
        raise UsageError(f"--mode must be reciprocal or as-is, not {cfg['mode']!r}")

    records, inter, users = [], [], set()
    bad, total, no_tags, self_skipped = [], 0, 0, 0
    with open(tweets_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            total += 1
            try:
                t = json.loads(line)
                user, ts = str(t["user"]), t["ts"]
                if not isinstance(ts, int) or isinstance(ts, bool):
                    raise ValueError("ts must be an integer")
                tags = t.get("hashtags") or []
                mentions = t.get("mentions") or []
                rt = t.get("retweet_of")
                if not isinstance(tags, list) or not isinstance(mentions, list):
                    raise ValueError("hashtags and mentions must be lists")
            except (ValueError, KeyError, TypeError) as exc:
                log.warning("tweets line %d unparseable: %s", lineno, exc)
                bad.append(lineno)
                continue
            users.add(user)
            memes = tuple(dict.fromkeys(str(h).lstrip("#").lower() for h in tags if str(h).lstrip("#")))
            if not memes:
                no_tags += 1
            for m in memes:
                records.append((m, ts, user))
            targets = ([("retweet", str(rt))] if rt is not None else []) + [("mention", str(x)) for x in mentions]
            for kind, target in targets:
                users.add(target)
                if target == user:
                    self_skipped += 1
                    continue
                inter.append((user, target, kind, ts, memes))
    if total and len(bad) / total > cfg["max_bad_fraction"]:
        raise DataError(f"{len(bad)} of {total} tweet lines unparseable (first at line {bad[0]}); aborting")

    net = build_network(edges, cfg["mode"], users)
    idx = {s: i for i, s in enumerate(net.ids)}
    traces = traces_from_records((m, ts, idx[u]) for m, ts, u in records)
    dropped_new = []
    if cfg["history"]:
        history = json.loads(_exists(cfg["history"], "history file").read_text(encoding="utf-8"))
        kept = new_meme_filter(traces, history, cfg["history_threshold"])
        dropped_new = sorted(set(traces) - set(kept))
        traces = kept
    ilog = InteractionLog([Interaction(idx[a], idx[b], k, ts, m) for a, b, k, ts, m in inter])

    write_edge_list(net, out / "edges.tsv")
    write_node_ids(net, out / "nodes.csv")
    write_traces([traces[m] for m in sorted(traces)], net, out / "traces.jsonl")
    write_interactions(ilog, net, out / "interactions.jsonl")
    report = {
        "tweet_lines": total,
        "unparseable_lines": len(bad),
        "unparseable_line_numbers": bad[:100],
        "tweets_without_hashtags": no_tags,
        "self_interactions_skipped": self_skipped,
        "memes": len(traces),
        "trace_events": int(sum(len(t) for t in traces.values())),
        "interactions": len(ilog),
        "dropped_not_new": dropped_new,
        "network": {**degree_stats(net), **net.ingest_stats},
    }
    _dump(out / "ingest_report.json", _clean(report))
    return EXIT_OK


def cmd_communities(cfg: dict, out: Path) -> int:
    net = load_network(cfg)
    if cfg["algorithm"] not in DETECTORS:
        raise UsageError(f"unknown algorithm {cfg['algorithm']!r}; choose from {sorted(DETECTORS)}")
    part = detect(net, cfg["algorithm"], cfg["seed"])
    write_partition(part, net, out / "partition.csv")
    summary = {
        "algorithm": cfg["algorithm"],
        "C": part.C,
        "sizes": part.sizes().tolist(),
        "modularity": modularity(net, part) if net.edge_count else None,
        "meta": part.meta,
    }
    _dump(out / "communities.json", _clean(summary))
    return EXIT_OK


def cmd_simulate(cfg: dict, out: Path) -> int:
    if cfg["model"] not in MODELS:
        raise UsageError(f"unknown model {cfg['model']!r}; choose from {MODELS}")
    net = load_network(cfg)
    part = read_partition(_exists(cfg["partition"], "partition"), net)
    params = _params(cfg)
    ens = run_ensemble(net, part, cfg["model"], params, cfg["n_sims"], cfg["n_samples"], cfg["mode"],
                       keep_traces=cfg["keep_traces"], n_early=cfg["early_n"])
    doc = ens.to_json()
    doc["params"] = asdict(params)
    _dump(out / "ensemble.json", _clean(doc))
    with open(out / "ensemble_values.csv", "w", encoding="utf-8") as fh:
        names = list(ens.values)
        fh.write(",".join(names) + "\n")
        for row in zip(*(ens.values[k].tolist() for k in names)):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    if cfg["keep_traces"]:
        write_traces(ens.traces, net, out / "traces.jsonl")
    return EXIT_OK


def cmd_metrics(cfg: dict, out: Path) -> int:
    net = load_network(cfg)
    part = read_partition(_exists(cfg["partition"], "partition"), net)
    traces = read_traces(_exists(cfg["traces"], "traces"), net)
    ordered = [traces[m] for m in sorted(traces)]
    for tr in ordered:
        if tr.T < 2:
            raise EmptyTraceError(f"empty or sub-minimal trace: {tr.meme_id}")
        require_nonempty(tr)
    m1 = pipeline.M1Cache(net, part, _params(cfg), cfg["n_sims"], cfg["n_samples"])
    reports = pipeline.relative_reports(ordered, net, part, m1, cfg["early_n"])
    write_reports(reports, out / "concentration.csv")
    curves = out / "curves"
    curves.mkdir(exist_ok=True)
    for m, rows in pipeline.concentration_curves(reports).items():
        write_curve(rows, curves / f"{m}.csv")
    if cfg["interactions"]:
        ilog = read_interactions(_exists(cfg["interactions"], "interactions"), net)
        _dump(out / "flow.json", _clean(community_flow(ilog, net, part).summary()))
    return EXIT_OK


def cmd_features(cfg: dict, out: Path) -> int:
    net = load_network(cfg)
    part = read_partition(_exists(cfg["partition"], "partition"), net)
    traces = read_traces(_exists(cfg["traces"], "traces"), net)
    bym = {}
    if cfg["interactions"]:
        bym = read_interactions(_exists(cfg["interactions"], "interactions"), net).by_meme()
    ids = sorted(traces)
    vecs = [extract_features(traces[m], net, part, bym.get(m, []), cfg["early_n"]) for m in ids]
    n = cfg["early_n"]
    write_features(ids, vecs, out / "features.csv",
                   extra={"T_total": [traces[m].T for m in ids], "U_total": [traces[m].U for m in ids],
                          "short": [int(traces[m].T < n) for m in ids]})
    return EXIT_OK


def _load_features(cfg):
    ids, X, extra = read_features(_exists(cfg["features"], "features"))
    try:
        pop = {"tweets": [int(v) for v in extra["T_total"]], "users": [int(v) for v in extra["U_total"]]}
    except KeyError:
        raise DataError("features table lacks T_total/U_total popularity columns") from None
    if not cfg["include_short"] and "short" in extra:
        keep = [v == "0" for v in extra["short"]]
        dropped = len(keep) - sum(keep)
        if dropped:
            log.info("leaving out %d memes shorter than the early window", dropped)
        ids = [m for m, k in zip(ids, keep) if k]
        X = X[np.asarray(keep, dtype=bool)]
        pop = {k: [v for v, f in zip(vals, keep) if f] for k, vals in pop.items()}
    return ids, X, pop


def cmd_train(cfg: dict, out: Path) -> int:
    if cfg["label_mode"] not in LABEL_MODES:
        raise UsageError(f"--label-mode must be one of {LABEL_MODES}")
    ids, X, pop = _load_features(cfg)
    y = label_viral(pop[cfg["label_mode"]], cfg["theta"])
    model = train_forest(X, y, cfg["n_trees"], cfg["features_per_tree"], cfg["seed"], cfg["per_split"],
                         cfg["threads"], metadata={"feature_names": list(FEATURE_NAMES), "theta": cfg["theta"],
                                                   "label_mode": cfg["label_mode"], "n_viral": int(y.sum()),
                                                   "n": int(len(y))})
    model.save(out / "model.json")
    pred = model.predict(X)
    with open(out / "train_predictions.csv", "w", encoding="utf-8") as fh:
        fh.write("meme_id,label,predicted,vote_share\n")
        for m, a, b, s in zip(ids, y.tolist(), pred.tolist(), model.predict_proba(X).tolist()):
            fh.write(f"{m},{a},{b},{s!r}\n")
    return EXIT_OK


def cmd_eval(cfg: dict, out: Path) -> int:
    bad = [m for m in cfg["label_modes"] if m not in LABEL_MODES]
    if bad:
        raise UsageError(f"unknown label modes {bad}")
    _, X, pop = _load_features(cfg)
    report = evaluate(X, pop, cfg["thetas"], cfg["label_modes"], cfg["folds"], cfg["seed"], cfg["n_trees"],
                      cfg["features_per_tree"], cfg["trials"], cfg["threads"])
    _dump(out / "eval.json", _clean(report.to_json()))
    write_eval_csv(report, out / "eval.csv")
    return EXIT_OK


def _synth_specs(cfg):
    seed = cfg["seed"]
    if cfg["preset"] == "world":
        base = asdict(world_network_spec(seed))
    elif cfg["preset"] == "reference":
        base = asdict(pipeline.reference_network_spec(seed))
    else:
        raise UsageError("--preset must be world or reference")
    try:
        net_spec = PlantedPartitionSpec(**{**base, **(cfg["network"] or {}), "seed": seed})
        cascade_spec = PlantedCascadeSpec(**{"n_memes": cfg["n_memes"], **(cfg["cascades"] or {}), "seed": seed})
    except TypeError as exc:
        raise UsageError(str(exc)) from None
    return net_spec, cascade_spec


def cmd_synth(cfg: dict, out: Path) -> int:
    net_spec, cascade_spec = _synth_specs(cfg)
    net, truth = gen_network(net_spec)
    memes = gen_cascades(net, truth, cascade_spec)
    write_world(out / "world", net, truth, memes, net_spec, cascade_spec)
    write_node_ids(net, out / "world" / "nodes.csv")
    return EXIT_OK


def cmd_reproduce(cfg: dict, out: Path) -> int:
    seed, threads = cfg["seed"], cfg["threads"]
    params = _params(cfg)
    checks = {}

    log.info("reference network ensembles")
    ref_net, ref_part = gen_network(pipeline.reference_network_spec(seed))
    ref_ens = pipeline.model_ensembles(ref_net, ref_part, params, cfg["n_sims"], cfg["n_samples"], cfg["early_n"])
    checks["model_ordering"] = pipeline.ordering_check(ref_ens)

    log.info("planted world")
    world = pipeline.build_world(seed, cfg["n_memes"], cfg["algorithm"])
    write_world(out / "world", world.net, world.truth, world.memes, world.net_spec, world.cascade_spec)
    write_node_ids(world.net, out / "world" / "nodes.csv")
    write_partition(world.part, world.net, out / "communities.csv")

    log.info("world ensembles")
    world_ens = pipeline.model_ensembles(world.net, world.part, params, cfg["n_sims"], cfg["n_samples"],
                                         cfg["early_n"])
    _dump(out / "ensembles.json", _clean({
        "reference": {m: e.to_json() for m, e in ref_ens.items()},
        "world": {m: e.to_json() for m, e in world_ens.items()},
        "params": asdict(params),
    }))

    log.info("concentration reports")
    m1 = pipeline.M1Cache(world.net, world.part, params, cfg["n_sims"], cfg["n_samples"])
    reports = pipeline.relative_reports(world.memes.traces, world.net, world.part, m1, cfg["early_n"])
    write_reports(reports, out / "concentration.csv")
    curves = out / "curves"
    curves.mkdir(exist_ok=True)
    for m, rows in pipeline.concentration_curves(reports).items():
        write_curve(rows, curves / f"{m}.csv")
    _dump(curves / "models.json", _clean(pipeline.model_reference_lines(world_ens)))

    checks["community_flow"] = pipeline.flow_check(world.memes, world.net, world.part)
    _dump(out / "flow.json", _clean(checks["community_flow"]))
    checks["virality_dichotomy"] = pipeline.dichotomy_check(world.memes.traces, world.memes.contagion, world.net,
                                                            world.part, cfg["early_n"])

    log.info("features and evaluation")
    vecs, X = pipeline.world_features(world, cfg["early_n"])
    ids = [tr.meme_id for tr in world.memes.traces]
    write_features(ids, vecs, out / "features.csv",
                   extra={"T_total": [tr.T for tr in world.memes.traces],
                          "U_total": [tr.U for tr in world.memes.traces],
                          "short": [int(tr.T < cfg["early_n"]) for tr in world.memes.traces]})
    report = pipeline.evaluate_world(X, world, seed, cfg["thetas"], cfg["folds"], cfg["n_trees"],
                                     cfg["features_per_tree"], cfg["trials"], threads)
    _dump(out / "eval.json", _clean(report.to_json()))
    write_eval_csv(report, out / "eval.csv")
    if 90 in cfg["thetas"]:
        checks["prediction_lift"] = pipeline.lift_check(report, 90, "users")

    passed = all(c["passed"] for c in checks.values())
    _dump(out / "acceptance.json", _clean({"checks": checks, "passed": passed}))
    for name, c in checks.items():
        log.info("%s %s", "PASS" if c["passed"] else "FAIL", name)
    if not passed:
        raise AcceptanceFailure("failed checks: " + ", ".join(k for k, c in checks.items() if not c["passed"]))
    return EXIT_OK


HANDLERS = {
    "ingest": cmd_ingest,
    "communities": cmd_communities,
    "simulate": cmd_simulate,
    "metrics": cmd_metrics,
    "features": cmd_features,
    "train": cmd_train,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "reproduce": cmd_reproduce,
}

_DATA_ERRORS = (DataError, IngestionError, EmptyTraceError, TrainingError, ValueError, KeyError, IndexError,
                OSError, RuntimeError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and argparse usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.__dict__.get("verbose", 0) > 1 else
                        logging.INFO if args.__dict__.get("verbose", 0) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    cmd = args.command
    try:
        cfg = resolve_config(cmd, args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        try:
            code = HANDLERS[cmd](cfg, out)
        finally:
            # partial artifacts keep a manifest even when a stage fails
            write_manifest(out, cmd, cfg)
        return code
    except UsageError as exc:
        print(f"memetrap {cmd}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AcceptanceFailure as exc:
        print(f"memetrap {cmd}: acceptance check failed: {exc}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    except _DATA_ERRORS as exc:
        line = getattr(exc, "line", None)
        where = f" (line {line})" if line else ""
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"memetrap {cmd}: data error{where}: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
