"""Command-line entry point wiring every subcommand.

Configuration precedence is flags > environment (CONVSQL_<NAME>) > config file
(--config JSON keyed by flag names) > built-in defaults. Every run emits a
RunManifest (resolved config, tool version, input digests, seed) on stderr;
manifests carry no timestamps so identical inputs reproduce identical output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import __version__
from .corpus import CorpusError, load_dataset, save_dataset
from .executor import DEFAULT_FLOAT_TOL, ExecLimits, GoldExecutionFailed
from .llmio import BackendError, BackendSpec
from .metrics import (
    MalformedPrediction,
    evaluate_run,
    format_report,
    load_predictions,
    report_to_dict,
)
from .sqlnorm import GoldUnparseable, MultipleStatements, ParseError

ENV_PREFIX = "CONVSQL_"

# content-level failures exit 1; usage errors exit 2 (argparse default)
_CONTENT_ERRORS = (CorpusError, GoldExecutionFailed, GoldUnparseable,
                   MalformedPrediction, BackendError, ParseError,
                   MultipleStatements, FileNotFoundError, ValueError)


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    config: dict
    version: str
    input_digests: dict
    seed: Optional[int]

    def to_json(self) -> str:
        return json.dumps({
            "subcommand": self.subcommand,
            "config": self.config,
            "version": self.version,
            "input_digests": self.input_digests,
            "seed": self.seed,
        }, sort_keys=True, ensure_ascii=False)


def _digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _coerce(raw: str, like) -> object:
    if isinstance(like, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    return raw


def resolve_config(args: argparse.Namespace, defaults: dict) -> dict:
    """Layer flag > env > config-file > default for every known option."""
    file_cfg = {}
    if getattr(args, "config", None):
        file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    resolved = {}
    for name, default in defaults.items():
        flag_val = getattr(args, name, None)
        env_val = os.environ.get(ENV_PREFIX + name.upper())
        if flag_val is not None:
            resolved[name] = flag_val
        elif env_val is not None:
            resolved[name] = _coerce(env_val, default)
        elif name in file_cfg:
            resolved[name] = file_cfg[name]
        else:
            resolved[name] = default
    return resolved


def _manifest(subcommand: str, cfg: dict, input_paths: list,
              seed: Optional[int] = None) -> RunManifest:
    digests = {}
    for p in input_paths:
        if p and Path(p).is_file():
            digests[str(p)] = _digest_file(p)
    return RunManifest(subcommand=subcommand, config=cfg, version=__version__,
                       input_digests=digests, seed=seed)


def _emit_manifest(manifest: RunManifest) -> None:
    print(manifest.to_json(), file=sys.stderr)


def _backend_from(cfg: dict, parser: argparse.ArgumentParser):
    kind = cfg.get("backend")
    if kind == "replay":
        if not cfg.get("cassette"):
            parser.error("--cassette is required with --backend replay")
        return BackendSpec(kind="replay", model_id=cfg.get("model") or "default",
                           cassette_path=cfg["cassette"])
    if kind == "live":
        if not cfg.get("endpoint") or not cfg.get("credential_env"):
            parser.error("--endpoint and --credential-env are required with "
                         "--backend live")
        return BackendSpec(kind="live", model_id=cfg.get("model") or "default",
                           endpoint_url=cfg["endpoint"],
                           credential_env_name=cfg["credential_env"],
                           cassette_path=cfg.get("record_cassette"))
    parser.error("--backend must be 'replay' or 'live'")


def _add_backend_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--backend", choices=["replay", "live"])
    sp.add_argument("--cassette", help="replay cassette path")
    sp.add_argument("--record-cassette", dest="record_cassette",
                    help="write-through cassette for live runs")
    sp.add_argument("--endpoint", help="live chat-completions base URL")
    sp.add_argument("--model", help="model identifier")
    sp.add_argument("--credential-env", dest="credential_env",
                    help="env var holding the live API key")


_BACKEND_DEFAULTS = {"backend": "replay", "cassette": None, "record_cassette": None,
                     "endpoint": None, "model": None, "credential_env": None}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convsql",
        description="Evaluation harness and agent runtime for multi-turn, "
                    "multi-type text-to-SQL.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("evaluate", help="score a prediction file against a dataset")
    sp.add_argument("--dataset")
    sp.add_argument("--preds")
    sp.add_argument("--db-root", dest="db_root")
    sp.add_argument("--gold-policy", dest="gold_policy", choices=["any", "first"])
    sp.add_argument("--timeout-ms", dest="timeout_ms", type=int)
    sp.add_argument("--float-tol", dest="float_tol", type=float)
    sp.add_argument("--rqs", help="judge records to fold into the report")
    sp.add_argument("--report-out", dest="report_out")
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--config")

    sp = sub.add_parser("judge", help="score response quality with an LLM judge")
    sp.add_argument("--dataset")
    sp.add_argument("--preds")
    sp.add_argument("--out")
    sp.add_argument("--samples-k", dest="samples_k", type=int)
    sp.add_argument("--judge-model", dest="model")
    _add_backend_flags(sp)
    sp.add_argument("--config")

    sp = sub.add_parser("agent-run", help="answer a dataset with the agent pipeline")
    sp.add_argument("--dataset")
    sp.add_argument("--db-root", dest="db_root")
    sp.add_argument("--out")
    sp.add_argument("--trace-out", dest="trace_out")
    sp.add_argument("--ablation", help="comma list of selector,detector,decomposer,refiner")
    sp.add_argument("--table-threshold", dest="table_threshold", type=int)
    sp.add_argument("--column-threshold", dest="column_threshold", type=int)
    sp.add_argument("--max-refine-retries", dest="max_refine_retries", type=int)
    sp.add_argument("--max-rewrites", dest="max_rewrites", type=int)
    sp.add_argument("--timeout-ms", dest="timeout_ms", type=int)
    sp.add_argument("--jobs", type=int)
    _add_backend_flags(sp)
    sp.add_argument("--config")

    sp = sub.add_parser("augment", help="generate and filter synthetic dialogues")
    sp.add_argument("--seed-dataset", dest="seed_dataset")
    sp.add_argument("--db-root", dest="db_root")
    sp.add_argument("--gen-config", dest="gen_config", help="JSON generation config")
    sp.add_argument("--out")
    sp.add_argument("--log-out", dest="log_out")
    sp.add_argument("--seed", type=int)
    _add_backend_flags(sp)
    sp.add_argument("--config")

    sp = sub.add_parser("compare", help="pairwise annotation-quality comparison")
    sp.add_argument("--original")
    sp.add_argument("--enhanced")
    _add_backend_flags(sp)
    sp.add_argument("--config")

    sp = sub.add_parser("correlate",
                        help="validate judge scores against human ratings")
    sp.add_argument("--rqs", help="judge records (JSON lines)")
    sp.add_argument("--human", help="human scores: JSON lines of "
                                    "{dialogue_id, turn_index, score}")
    sp.add_argument("--permutations", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--config")

    sp = sub.add_parser("serve", help="run the HTTP gateway")
    sp.add_argument("--db-root", dest="db_root")
    sp.add_argument("--host")
    sp.add_argument("--port", type=int)
    sp.add_argument("--static-dir", dest="static_dir")
    sp.add_argument("--timeout-ms", dest="timeout_ms", type=int)
    _add_backend_flags(sp)
    sp.add_argument("--config")

    sp = sub.add_parser("sqlnorm", help="SQL canonicalization debug tools")
    norm_sub = sp.add_subparsers(dest="sqlnorm_cmd", required=True)
    ep = norm_sub.add_parser("explain", help="print the clause decomposition as JSON")
    ep.add_argument("sql")
    ep.add_argument("--db", help="database file for schema-aware resolution")

    return parser


# ---------------------------------------------------------------------------
# subcommand bodies


def _cmd_evaluate(args, parser) -> int:
    defaults = {"dataset": None, "preds": None, "db_root": None,
                "gold_policy": "any", "timeout_ms": 30_000,
                "float_tol": DEFAULT_FLOAT_TOL, "rqs": None,
                "report_out": None, "jobs": os.cpu_count() or 1}
    cfg = resolve_config(args, defaults)
    for req in ("dataset", "preds", "db_root"):
        if not cfg[req]:
            parser.error(f"--{req.replace('_', '-')} is required")
    manifest = _manifest("evaluate", cfg, [cfg["dataset"], cfg["preds"], cfg["rqs"]])
    _emit_manifest(manifest)

    dataset = load_dataset(cfg["dataset"])
    predictions = load_predictions(cfg["preds"])
    rqs_by_turn = None
    if cfg["rqs"]:
        from .judge import load_rqs_records
        rqs_by_turn = load_rqs_records(cfg["rqs"])
    limits = ExecLimits(timeout_ms=cfg["timeout_ms"])
    _, report = evaluate_run(dataset, predictions, cfg["db_root"], limits=limits,
                             gold_policy=cfg["gold_policy"],
                             float_tol=cfg["float_tol"],
                             rqs_by_turn=rqs_by_turn, jobs=cfg["jobs"])
    sys.stdout.write(format_report(report))
    if cfg["report_out"]:
        payload = {"manifest": json.loads(manifest.to_json()),
                   "report": report_to_dict(report)}
        Path(cfg["report_out"]).write_text(
            json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8")
    return 0


def _cmd_judge(args, parser) -> int:
    from .judge import JudgeConfig, judge_run
    defaults = {"dataset": None, "preds": None, "out": None, "samples_k": 3,
                **_BACKEND_DEFAULTS}
    cfg = resolve_config(args, defaults)
    for req in ("dataset", "preds", "out"):
        if not cfg[req]:
            parser.error(f"--{req} is required")
    backend = _backend_from(cfg, parser)
    _emit_manifest(_manifest("judge", cfg, [cfg["dataset"], cfg["preds"],
                                            cfg["cassette"]]))
    dataset = load_dataset(cfg["dataset"])
    predictions = load_predictions(cfg["preds"])
    jcfg = JudgeConfig(backend=backend, samples_k=cfg["samples_k"])
    records, (tokens_in, tokens_out) = judge_run(jcfg, dataset, predictions)
    with open(cfg["out"], "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
    print(f"judged {len(records)} turns; cost: input_tokens={tokens_in} "
          f"output_tokens={tokens_out}")
    return 0


def _cmd_agent_run(args, parser) -> int:
    from .agents import AgentConfig, run_benchmark
    defaults = {"dataset": None, "db_root": None, "out": None, "trace_out": None,
                "ablation": "", "table_threshold": 10, "column_threshold": None,
                "max_refine_retries": 3, "max_rewrites": 3,
                "timeout_ms": 30_000, "jobs": 1, **_BACKEND_DEFAULTS}
    cfg = resolve_config(args, defaults)
    for req in ("dataset", "db_root", "out"):
        if not cfg[req]:
            parser.error(f"--{req.replace('_', '-')} is required")
    backend = _backend_from(cfg, parser)
    _emit_manifest(_manifest("agent-run", cfg, [cfg["dataset"], cfg["cassette"]]))

    ablation = frozenset(x.strip() for x in (cfg["ablation"] or "").split(",")
                         if x.strip())
    agent_cfg = AgentConfig(
        schema_table_threshold=cfg["table_threshold"],
        schema_column_threshold=cfg["column_threshold"],
        max_refine_retries=cfg["max_refine_retries"],
        max_rewrites=cfg["max_rewrites"],
        ablation=ablation)
    dataset = load_dataset(cfg["dataset"])
    limits = ExecLimits(timeout_ms=cfg["timeout_ms"])
    predictions, traces = run_benchmark(dataset, cfg["db_root"], backend,
                                        config=agent_cfg, limits=limits,
                                        jobs=cfg["jobs"])
    with open(cfg["out"], "w", encoding="utf-8") as fh:
        for rec in predictions:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
    trace_out = cfg["trace_out"] or (cfg["out"] + ".trace.jsonl")
    with open(trace_out, "w", encoding="utf-8") as fh:
        for rec in traces:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
    print(f"answered {len(predictions)} turns -> {cfg['out']}")
    return 0


def _cmd_augment(args, parser) -> int:
    from .augment import GenConfig, augment_dataset
    # generation knobs resolve through the same layering, so a --config file
    # holding {"turns_min": ..., "type_weights": ...} configures the generator
    defaults = {"seed_dataset": None, "db_root": None, "gen_config": None,
                "out": None, "log_out": None, "seed": 0,
                "turns_min": 2, "turns_max": 4, "quality_cutoff": 7.0,
                "type_weights": None, "relation_pool": None, **_BACKEND_DEFAULTS}
    cfg = resolve_config(args, defaults)
    for req in ("seed_dataset", "db_root", "out"):
        if not cfg[req]:
            parser.error(f"--{req.replace('_', '-')} is required")
    backend = _backend_from(cfg, parser)
    _emit_manifest(_manifest("augment", cfg,
                             [cfg["seed_dataset"], cfg["gen_config"],
                              cfg["cassette"]], seed=cfg["seed"]))
    gen_cfg_dict = {k: cfg[k] for k in
                    ("turns_min", "turns_max", "quality_cutoff", "type_weights",
                     "relation_pool") if cfg[k] is not None}
    if cfg["gen_config"]:
        gen_cfg_dict.update(
            json.loads(Path(cfg["gen_config"]).read_text(encoding="utf-8")))
    gen_cfg_dict.setdefault("seed", cfg["seed"])
    gen_cfg = GenConfig.from_dict(gen_cfg_dict)
    seed_dataset = load_dataset(cfg["seed_dataset"])
    augmented, log = augment_dataset(seed_dataset, cfg["db_root"], gen_cfg, backend)
    save_dataset(augmented, cfg["out"])
    if cfg["log_out"]:
        with open(cfg["log_out"], "w", encoding="utf-8") as fh:
            for rec in log:
                fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
    kept = sum(1 for rec in log if rec.get("kept"))
    print(f"kept {kept}/{len(log)} candidate dialogues -> {cfg['out']}")
    return 0


def _cmd_compare(args, parser) -> int:
    from .augment import compare_datasets
    defaults = {"original": None, "enhanced": None, **_BACKEND_DEFAULTS}
    cfg = resolve_config(args, defaults)
    for req in ("original", "enhanced"):
        if not cfg[req]:
            parser.error(f"--{req} is required")
    backend = _backend_from(cfg, parser)
    _emit_manifest(_manifest("compare", cfg,
                             [cfg["original"], cfg["enhanced"], cfg["cassette"]]))
    counts = compare_datasets(load_dataset(cfg["original"]),
                              load_dataset(cfg["enhanced"]), backend)
    print(json.dumps(counts, sort_keys=True))
    return 0


def _cmd_correlate(args, parser) -> int:
    from .judge import load_rqs_records
    from .metrics import correlations
    defaults = {"rqs": None, "human": None, "permutations": 10_000, "seed": 0}
    cfg = resolve_config(args, defaults)
    for req in ("rqs", "human"):
        if not cfg[req]:
            parser.error(f"--{req} is required")
    _emit_manifest(_manifest("correlate", cfg, [cfg["rqs"], cfg["human"]],
                             seed=cfg["seed"]))
    judged = load_rqs_records(cfg["rqs"])
    human = {}
    with open(cfg["human"], encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            human[(obj["dialogue_id"], obj["turn_index"])] = float(obj["score"])
    keys = sorted(set(judged) & set(human))
    if len(keys) < 3:
        print(f"error: only {len(keys)} paired scores; need at least 3",
              file=sys.stderr)
        return 1
    result = correlations([human[k] for k in keys], [judged[k] for k in keys],
                          permutations=cfg["permutations"], seed=cfg["seed"])
    print(json.dumps({
        "paired_turns": len(keys),
        "pearson_r": result.pearson_r,
        "spearman_rho": result.spearman_rho,
        "kendall_tau": result.kendall_tau,
        "p_values": result.p_values,
    }, sort_keys=True))
    return 0


def _cmd_serve(args, parser) -> int:
    from .gateway import serve
    defaults = {"db_root": None, "host": "127.0.0.1", "port": 8080,
                "static_dir": None, "timeout_ms": 30_000, **_BACKEND_DEFAULTS}
    cfg = resolve_config(args, defaults)
    if not cfg["db_root"]:
        parser.error("--db-root is required")
    backend = _backend_from(cfg, parser)
    _emit_manifest(_manifest("serve", cfg, [cfg["cassette"]]))
    serve(cfg["db_root"], backend, host=cfg["host"], port=cfg["port"],
          limits=ExecLimits(timeout_ms=cfg["timeout_ms"]),
          static_dir=cfg["static_dir"])
    return 0


def _cmd_sqlnorm(args, parser) -> int:
    from .corpus import introspect_schema
    from .sqlnorm import decompose_clauses, normalize
    if args.sqlnorm_cmd == "explain":
        _emit_manifest(_manifest("sqlnorm explain",
                                 {"sql": args.sql, "db": args.db}, [args.db]))
        schema = introspect_schema(args.db) if args.db else None
        cs = decompose_clauses(normalize(args.sql, schema))
        print(json.dumps(cs.to_dict(), indent=2, sort_keys=True))
        return 0
    parser.error("unknown sqlnorm subcommand")
    return 2


_DISPATCH = {
    "evaluate": _cmd_evaluate,
    "judge": _cmd_judge,
    "agent-run": _cmd_agent_run,
    "augment": _cmd_augment,
    "compare": _cmd_compare,
    "correlate": _cmd_correlate,
    "serve": _cmd_serve,
    "sqlnorm": _cmd_sqlnorm,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _DISPATCH[args.subcommand]
    try:
        return handler(args, parser)
    except _CONTENT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
