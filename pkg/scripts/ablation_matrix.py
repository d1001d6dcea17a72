#!/usr/bin/env python3
"""Run the agent pipeline over a dataset once per ablation setting and print
the metric panel for each row: the full pipeline, then each component
disabled in turn.

Usage:
  python scripts/ablation_matrix.py \
      --dataset tests/fixtures/dialogues/flights_demo.json \
      --db-root tests/fixtures/db \
      --cassette tests/fixtures/cassettes/pipeline.jsonl
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from convsql.agents import AgentConfig, run_benchmark, trace_signature  # noqa: E402
from convsql.corpus import load_dataset  # noqa: E402
from convsql.llmio import BackendSpec  # noqa: E402
from convsql.metrics import PredictionRecord, QuestionType, evaluate_run  # noqa: E402


def _records(preds: list[dict]) -> list[PredictionRecord]:
    return [PredictionRecord(
        dialogue_id=p["dialogue_id"], turn_index=p["turn_index"],
        pred_type=QuestionType.parse(p["pred_type"]),
        pred_sqls=tuple(p["pred_sqls"]), response=p["response"]) for p in preds]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dataset", required=True)
    ap.add_argument("--db-root", required=True)
    ap.add_argument("--cassette", help="replay cassette (default backend)")
    ap.add_argument("--endpoint", help="live chat-completions base URL")
    ap.add_argument("--model", default="scripted")
    ap.add_argument("--credential-env", default=None)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    if args.endpoint:
        backend = BackendSpec(kind="live", model_id=args.model,
                              endpoint_url=args.endpoint,
                              credential_env_name=args.credential_env)
    else:
        if not args.cassette:
            ap.error("--cassette or --endpoint is required")
        backend = BackendSpec(kind="replay", model_id=args.model,
                              cassette_path=args.cassette)

    dataset = load_dataset(args.dataset)
    settings = [("full", frozenset())] + [
        (f"w/o {c}", frozenset({c}))
        for c in ("selector", "detector", "decomposer", "refiner")]

    print(f"{'setting':<16}{'TDEX':>8}{'EX':>8}{'EM':>8}{'Macro-F1':>10}  signature")
    for label, ablation in settings:
        preds, traces = run_benchmark(dataset, args.db_root, backend,
                                      config=AgentConfig(ablation=ablation),
                                      jobs=args.jobs)
        _, report = evaluate_run(dataset, _records(preds), args.db_root)
        pct = lambda x: "-" if x is None else f"{x * 100:.1f}"  # noqa: E731
        print(f"{label:<16}{pct(report.tdex):>8}{pct(report.ex):>8}"
              f"{pct(report.em):>8}{pct(report.macro_f1):>10}  "
              f"{trace_signature(traces)[:12]}")


if __name__ == "__main__":
    main()
