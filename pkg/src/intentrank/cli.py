"""Command-line entry points: eval, mine, verify-theory, trace, synth, serve."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import (
    ambiguous_sample_to_document,
    load_bundle,
    load_detections,
    load_ground_truth,
    load_queries,
    mine_ambiguous,
)
from .errors import ConfigError, IntentRankError
from .intent import Feedback
from .metrics import evaluate_turn_protocol, score_trace
from .ranking import RankerConfig, SinkhornConfig
from .session import OracleConfig, SessionConfig, scripted_session
from .synth import SynthConfig, generate_dataset, write_dataset
from .theory import AmbiguityInstance, min_resolving_lambda, verify_resolution
from .vecmath import l2_normalize


def _add_ranker_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda", dest="negative_weight", type=float, default=1.0,
                        help="negative penalty weight (default 1.0)")
    parser.add_argument("--aggregation", choices=["max", "mean"], default="max")
    parser.add_argument("--scorer", choices=["contrastive", "sinkhorn"], default="contrastive")
    parser.add_argument("--epsilon", type=float, default=0.1,
                        help="entropic regularization for the sinkhorn scorer")


def _add_session_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, default=0.6, help="modality fusion weight")
    parser.add_argument("--turns", "--k", dest="max_turns", type=int, default=2,
                        help="max feedback rounds K (default 2)")
    parser.add_argument("--present-k", type=int, default=1)
    parser.add_argument("--exclude-rejected", "--exclude-rejected-from-presentation",
                        dest="exclude_rejected", action=argparse.BooleanOptionalAction,
                        default=True, help="hide rejected regions from the presented slice")
    parser.add_argument("--init-mode", choices=["fused", "separate"], default="fused")
    parser.add_argument("--state-mode", choices=["accumulate", "last-feedback"],
                        default="accumulate")


def _session_config(args: argparse.Namespace) -> SessionConfig:
    return SessionConfig(
        max_turns=args.max_turns,
        alpha=args.alpha,
        ranker=RankerConfig(negative_weight=args.negative_weight,
                            aggregation=args.aggregation),
        present_k=args.present_k,
        exclude_rejected_from_presentation=args.exclude_rejected,
        init_mode=args.init_mode,
        state_mode=args.state_mode,
        scorer=args.scorer,
        sinkhorn=SinkhornConfig(epsilon=args.epsilon),
    )


def _load_dataset(bundles_dir: str, queries_path: str):
    bundles = {}
    for manifest in sorted(Path(bundles_dir).glob("*.json")):
        bundle = load_bundle(manifest)
        bundles[bundle.image_id] = bundle
    dataset = []
    for query in load_queries(queries_path):
        if query.image_id not in bundles:
            raise ConfigError(f"no bundle for image {query.image_id!r}")
        dataset.append((bundles[query.image_id], query))
    return dataset


def cmd_eval(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.bundles_dir, args.queries)
    splits = None
    if args.splits:
        with open(args.splits, encoding="utf-8") as fh:
            splits = json.load(fh)
    report, _ = evaluate_turn_protocol(
        dataset,
        _session_config(args),
        OracleConfig(iou_threshold=args.iou_threshold),
        splits=splits,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_document(), fh, indent=2)
        fh.write("\n")
    with open(out / "report.csv", "w", encoding="utf-8") as fh:
        for row in report.csv_rows():
            fh.write(",".join(str(v) for v in row) + "\n")
    table = report.format_table()
    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    if args.figures:
        from .plots import render_ap_figure

        render_ap_figure(report, out / "ap_by_turn.png")
    print(table)
    return 0


def cmd_mine(args: argparse.Namespace) -> int:
    samples = mine_ambiguous(
        load_ground_truth(args.ground_truth),
        load_detections(args.detections),
        iou_low=args.iou_low,
        verify_against_gt=args.verify_against_gt,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(ambiguous_sample_to_document(sample)) + "\n")
    print(f"mined {len(samples)} ambiguous samples -> {args.out}")
    return 0


def cmd_verify_theory(args: argparse.Namespace) -> int:
    if args.trials < 1:
        raise ConfigError("trials must be >= 1")
    if args.dim < 2:
        raise ConfigError("dim must be >= 2")
    rng = np.random.default_rng(args.seed)
    passed = failed = 0
    while passed + failed < args.trials:
        q, target, distractor = (l2_normalize(rng.standard_normal(args.dim)) for _ in range(3))
        inst = AmbiguityInstance.from_vectors(q, target, distractor)
        if not inst.is_ambiguous or inst.sim_td > 1 - 1e-6:
            continue
        weight = min_resolving_lambda(inst) + args.margin / (1 - inst.sim_td)
        if verify_resolution(q, target, distractor, weight):
            passed += 1
        else:
            failed += 1
    print(f"verify-theory: {passed} passed, {failed} failed "
          f"({args.trials} trials, dim={args.dim}, seed={args.seed})")
    return 0 if failed == 0 else 1


def _load_script(path: str) -> list[Feedback]:
    script = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            embedding = doc.get("new_prompt_embedding")
            script.append(
                Feedback(
                    kind=doc["kind"],
                    region_id=doc.get("region_id"),
                    new_prompt_embedding=None if embedding is None else l2_normalize(embedding),
                )
            )
    return script


def cmd_trace(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.bundle)
    queries = load_queries(args.queries)
    if args.query_id is not None:
        queries = [q for q in queries if q.query_id == args.query_id]
        if not queries:
            raise ConfigError(f"query {args.query_id!r} not found")
    query = queries[0]
    script = _load_script(args.script) if args.script else []
    cfg = _session_config(args)
    if len(script) > cfg.max_turns:
        cfg = replace(cfg, max_turns=len(script))
    transcript = scripted_session(bundle, query, script, cfg)
    trace = score_trace(transcript, normalize=args.normalize)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(trace.csv_lines()) + "\n")
    if args.figures:
        from .plots import render_trace_figure

        render_trace_figure(trace, out.with_suffix(".png"))
    print(f"wrote {trace.matrix.shape[0]}x{trace.matrix.shape[1]} trace -> {out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = SynthConfig(
        scenes=args.scenes,
        distractors_min=args.distractors_min,
        distractors_max=args.distractors_max,
        spread_deg=args.spread_deg,
        target_angle_deg=args.target_angle_deg,
        dim=args.dim,
        regions=args.regions,
        deep_frac=args.deep_frac,
        ambiguous_frac=args.ambiguous_frac,
        seed=args.seed,
    )
    dataset = generate_dataset(cfg)
    write_dataset(dataset, args.out_dir)
    print(f"wrote {len(dataset)} scenes -> {args.out_dir}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ServiceState, build_app

    state = ServiceState(log_dir=args.session_log_dir)
    uvicorn.run(build_app(state), host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intentrank")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="run the turn protocol and write a report")
    p_eval.add_argument("--bundles-dir", required=True)
    p_eval.add_argument("--queries", required=True)
    p_eval.add_argument("--out-dir", required=True)
    p_eval.add_argument("--splits", help="JSON map of category -> split label")
    p_eval.add_argument("--iou-threshold", type=float, default=0.5)
    p_eval.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    _add_session_flags(p_eval)
    _add_ranker_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_mine = sub.add_parser("mine", help="mine the ambiguous benchmark subset")
    p_mine.add_argument("--ground-truth", required=True)
    p_mine.add_argument("--detections", required=True)
    p_mine.add_argument("--out", required=True)
    p_mine.add_argument("--iou-low", type=float, default=0.5)
    p_mine.add_argument("--verify-against-gt", action="store_true")
    p_mine.set_defaults(func=cmd_mine)

    p_theory = sub.add_parser("verify-theory", help="property-check the resolution bound")
    p_theory.add_argument("--trials", type=int, default=1000)
    p_theory.add_argument("--dim", type=int, default=512)
    p_theory.add_argument("--seed", type=int, default=0)
    p_theory.add_argument("--margin", type=float, default=1e-6)
    p_theory.set_defaults(func=cmd_verify_theory)

    p_trace = sub.add_parser("trace", help="export a per-region score trace CSV")
    p_trace.add_argument("--bundle", required=True)
    p_trace.add_argument("--queries", required=True)
    p_trace.add_argument("--query-id")
    p_trace.add_argument("--script", help="JSONL feedback script")
    p_trace.add_argument("--out", required=True)
    p_trace.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=True)
    p_trace.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    _add_session_flags(p_trace)
    _add_ranker_flags(p_trace)
    p_trace.set_defaults(func=cmd_trace)

    p_synth = sub.add_parser("synth", help="generate a synthetic benchmark")
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--scenes", type=int, required=True)
    p_synth.add_argument("--distractors-min", type=int, default=3)
    p_synth.add_argument("--distractors-max", type=int, default=9)
    p_synth.add_argument("--spread-deg", type=float, default=10.0)
    p_synth.add_argument("--target-angle-deg", type=float, default=20.0)
    p_synth.add_argument("--dim", type=int, default=32)
    p_synth.add_argument("--regions", type=int, default=24)
    p_synth.add_argument("--deep-frac", type=float, default=0.35)
    p_synth.add_argument("--ambiguous-frac", type=float, default=1.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    p_serve = sub.add_parser("serve", help="run the HTTP session service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8008)
    p_serve.add_argument("--session-log-dir", help="append-only per-session transcript log")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IntentRankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
