"""Operator command line: pack generation, runs, serving, rescoring,
reporting, and digest audits.

All randomness flows from the --seed flag; no command reads the clock or
OS entropy on any path that affects outputs, so every command is
idempotent given identical inputs.
"""

import argparse
import csv
import json
import sys
from multiprocessing import Pool
from pathlib import Path

from .agents import PolicyConfig, run_policy
from .analytics import (
    COUNTERFACTUAL_POLICIES,
    aggregate,
    compare_feedback,
    rescore_counterfactual,
)
from .canon import canon_bytes, canon_dumps, derive_seed
from .contract import PROFILE_NAME, PROMPT_POLICY, render_prompt
from .engine import RunConfig, replay_trace
from .episodes import FAMILIES
from .generate import build_pack, load_pack, write_pack
from .settlement import Trace
from .wire import DEFAULT_TURN_TIMEOUT, WireServer

AGENTS = ("oracle", "drift", "eager_reporter", "honest_fail", "random", "state_coupled")


def _prompt_policy_digest() -> str:
    _, digest = render_prompt("<TASK_INSTRUCTION>")
    return digest


def _parse_families(value: str):
    if value == "all":
        return list(FAMILIES)
    families = [f.strip().lower() for f in value.split(",") if f.strip()]
    for family in families:
        if family not in FAMILIES:
            raise SystemExit(f"unknown family: {family}")
    return families


def cmd_generate(args) -> int:
    families = _parse_families(args.families)
    if args.count < 1:
        raise SystemExit("--count must be >= 1")
    manifest, episodes = build_pack(
        families, args.count, args.seed, pack_name=Path(args.out).name
    )
    write_pack(args.out, manifest, episodes)
    print(f"pack {manifest.pack_name}: {len(episodes)} episodes")
    print(f"content_hash {manifest.content_hash}")
    return 0


def _base_run_config(args, pack_hash: str) -> tuple[RunConfig, PolicyConfig]:
    policy_config = PolicyConfig(
        policy=args.agent,
        report_delay=args.report_delay,
        execution_noise=args.noise,
        stumbles=args.stumbles,
        seed=args.seed,
    )
    run_config = RunConfig(
        agent_id=args.agent,
        agent_params=policy_config.params(),
        feedback=args.feedback,
        seed=args.seed,
        pack_hash=pack_hash,
    )
    return run_config, policy_config


def _episode_job(payload):
    spec_dict, policy_kwargs, run_kwargs = payload
    from .episodes import EpisodeSpec

    spec = EpisodeSpec.from_dict(spec_dict)
    policy_config = PolicyConfig(**policy_kwargs)
    run_config = RunConfig(**run_kwargs)
    trace = run_policy(spec, policy_config, feedback=run_config.feedback, run_config=run_config)
    return trace.to_jsonl()


def _write_run(out_dir: Path, manifest: dict, traces_jsonl: dict) -> dict:
    traces_dir = out_dir / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)
    digests = {}
    from .canon import sha256_hex

    for episode_id, jsonl in traces_jsonl.items():
        data = jsonl.encode("utf-8")
        (traces_dir / f"{episode_id}.jsonl").write_bytes(data)
        digests[episode_id] = sha256_hex(data)
    (out_dir / "digests.json").write_bytes(canon_bytes(digests))
    return digests


def load_run(run_dir) -> tuple[dict, list]:
    run = Path(run_dir)
    manifest = json.loads((run / "manifest.json").read_text())
    traces = []
    for path in sorted((run / "traces").glob("*.jsonl")):
        traces.append(Trace.from_jsonl(path.read_text()))
    return manifest, traces


def _summary_line(metrics) -> str:
    overall = metrics.overall
    rates = metrics.rates

    def fmt(v):
        return "n/a" if v is None else f"{v:.1f}"

    return (
        f"W={fmt(overall['w'])} B={fmt(overall['b'])} delta={fmt(overall['delta'])} "
        f"FR={fmt(rates['fr'])} NR={fmt(rates['nr'])} IL={fmt(rates['il'])} "
        f"Stop%={fmt(rates['stop_pct'])}"
    )


def cmd_run(args) -> int:
    try:
        pack_manifest, episodes = load_pack(args.pack, verify=True)
    except ValueError as exc:
        raise SystemExit(str(exc))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_config, policy_config = _base_run_config(args, pack_manifest.content_hash)

    manifest = {
        "run_id": out.name,
        "pack_hash": pack_manifest.content_hash,
        "pack_path": str(Path(args.pack)),
        "agent": {"policy": args.agent, **policy_config.params()},
        "prompt_policy": PROMPT_POLICY,
        "prompt_policy_digest": _prompt_policy_digest(),
        "profile": PROFILE_NAME,
        "feedback": args.feedback,
        "seed": args.seed,
        "trace_dir": "traces",
        "episode_ids": [e.episode_id for e in episodes],
    }
    (out / "manifest.json").write_bytes(canon_bytes(manifest))

    jobs = []
    for spec in episodes:
        episode_seed = derive_seed(args.seed, spec.episode_id)
        policy_kwargs = dict(
            policy=args.agent,
            report_delay=args.report_delay,
            execution_noise=args.noise,
            stumbles=args.stumbles,
            seed=episode_seed,
        )
        run_kwargs = dict(
            agent_id=run_config.agent_id,
            agent_params=PolicyConfig(**policy_kwargs).params(),
            feedback=args.feedback,
            seed=args.seed,
            pack_hash=pack_manifest.content_hash,
        )
        jobs.append((spec.to_dict(), policy_kwargs, run_kwargs))

    if args.workers > 1:
        with Pool(args.workers) as pool:
            results = pool.map(_episode_job, jobs)
    else:
        results = [_episode_job(job) for job in jobs]

    traces_jsonl = {spec.episode_id: jsonl for spec, jsonl in zip(episodes, results)}
    _write_run(out, manifest, traces_jsonl)

    traces = [Trace.from_jsonl(j) for j in results]
    metrics = aggregate(traces)
    (out / "summary.json").write_bytes(canon_bytes(metrics.to_dict()))
    print(_summary_line(metrics))
    return 0


def cmd_serve(args) -> int:
    try:
        pack_manifest, episodes = load_pack(args.pack, verify=True)
    except ValueError as exc:
        raise SystemExit(str(exc))
    if args.episodes:
        wanted = set(args.episodes.split(","))
        episodes = [e for e in episodes if e.episode_id in wanted]
    host, _, port = args.listen.partition(":")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    manifest = {
        "run_id": out.name,
        "pack_hash": pack_manifest.content_hash,
        "pack_path": str(Path(args.pack)),
        "agent": {"policy": "wire"},
        "prompt_policy": PROMPT_POLICY,
        "prompt_policy_digest": _prompt_policy_digest(),
        "profile": PROFILE_NAME,
        "feedback": args.feedback,
        "seed": args.seed,
        "trace_dir": "traces",
        "episode_ids": [e.episode_id for e in episodes],
    }
    (out / "manifest.json").write_bytes(canon_bytes(manifest))

    def config_for(spec):
        return RunConfig(
            agent_id="wire",
            agent_params={},
            feedback=args.feedback,
            seed=args.seed,
            pack_hash=pack_manifest.content_hash,
        )

    server = WireServer(
        episodes, config_for, host=host or "127.0.0.1", port=int(port or 0),
        turn_timeout=args.turn_timeout,
    )
    actual_host, actual_port = server.address
    print(f"listening on {actual_host}:{actual_port} for {len(episodes)} episodes", flush=True)

    traces_jsonl = {}

    def on_trace(trace):
        traces_jsonl[trace.episode_id] = trace.to_jsonl()

    traces = server.serve_all(on_trace=on_trace)
    _write_run(out, manifest, traces_jsonl)
    metrics = aggregate(traces)
    (out / "summary.json").write_bytes(canon_bytes(metrics.to_dict()))
    print(_summary_line(metrics))
    return 0


def cmd_rescore(args) -> int:
    _, traces = load_run(args.run)
    actual = aggregate(traces).overall["b"]
    value = rescore_counterfactual(traces, args.policy)
    out = {
        "policy": args.policy,
        "b_actual": actual,
        "b_counterfactual": value,
    }
    path = Path(args.run) / f"rescore_{args.policy}.json"
    path.write_bytes(canon_bytes(out))
    print(f"B actual={actual:.4f} {args.policy}={value:.4f}")
    return 0


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return value


def cmd_report(args) -> int:
    _, traces = load_run(args.run)
    metrics = aggregate(traces)
    out = Path(args.out) if args.out else Path(args.run) / "report"
    out.mkdir(parents=True, exist_ok=True)

    feedback = None
    if args.paired:
        _, base_traces = load_run(args.paired)
        feedback = compare_feedback(base_traces, traces)
        metrics.feedback = feedback

    (out / "metrics.json").write_bytes(canon_bytes(metrics.to_dict()))

    rows = []
    for family, block in metrics.families.items():
        rows.append([family, block["n"], _fmt(block["w"]), _fmt(block["b"]), _fmt(block["delta"])])
    rows.append(["all", metrics.overall["n"], _fmt(metrics.overall["w"]),
                 _fmt(metrics.overall["b"]), _fmt(metrics.overall["delta"])])
    _write_csv(out / "outcomes.csv", ["family", "n", "w", "b", "delta"], rows)

    rates = metrics.rates
    lag = metrics.belief_lag
    fs = metrics.false_success
    _write_csv(
        out / "closure.csv",
        ["stat", "value"],
        [
            ["fr", _fmt(rates["fr"])],
            ["nr", _fmt(rates["nr"])],
            ["il", _fmt(rates["il"])],
            ["stop_pct", _fmt(rates["stop_pct"])],
            ["p_report_given_w0", _fmt(rates["p_report_given_w0"])],
            ["p_noreport_given_w1", _fmt(rates["p_noreport_given_w1"])],
            ["n_w0", rates["n_w0"]],
            ["n_w1", rates["n_w1"]],
            ["belief_lag_mean", _fmt(lag["mean"])],
            ["belief_lag_n", lag["n"]],
            ["false_success_n", fs["n"]],
            ["false_success_at_zero_pct", _fmt(fs["at_zero_pct"])],
            ["false_success_intermediate_pct", _fmt(fs["intermediate_pct"])],
            ["false_success_above_075_pct", _fmt(fs["above_075_pct"])],
        ],
    )

    cf = metrics.counterfactual
    _write_csv(
        out / "counterfactual.csv",
        ["policy", "b"],
        [
            ["actual", _fmt(cf["actual"])],
            ["always_success", _fmt(cf["always_success"])],
            ["random_expected", _fmt(cf["random_expected"])],
            ["oracle", _fmt(cf["oracle"])],
        ],
    )

    if feedback is not None:
        _write_csv(
            out / "feedback.csv",
            ["stat", "base", "feedback", "delta"],
            [
                ["w", _fmt(feedback["base"]["w"]), _fmt(feedback["feedback"]["w"]), _fmt(feedback["delta_w"])],
                ["b", _fmt(feedback["base"]["b"]), _fmt(feedback["feedback"]["b"]), _fmt(feedback["delta_b"])],
                ["fr", _fmt(feedback["base"]["fr"]), _fmt(feedback["feedback"]["fr"]), _fmt(feedback["delta_fr"])],
                ["nr", _fmt(feedback["base"]["nr"]), _fmt(feedback["feedback"]["nr"]), _fmt(feedback["delta_nr"])],
                ["too_far_mean", _fmt(feedback["base"]["too_far_mean"]),
                 _fmt(feedback["feedback"]["too_far_mean"]), ""],
                ["path_blocked_mean", _fmt(feedback["base"]["path_blocked_mean"]),
                 _fmt(feedback["feedback"]["path_blocked_mean"]), ""],
                ["retry_mean", _fmt(feedback["base"]["retry_mean"]),
                 _fmt(feedback["feedback"]["retry_mean"]), ""],
            ],
        )

    print(f"report written to {out}")
    return 0


def cmd_audit(args) -> int:
    run = Path(args.run)
    manifest = json.loads((run / "manifest.json").read_text())
    digests = json.loads((run / "digests.json").read_text())
    failures = []
    from .canon import sha256_hex

    for episode_id, expected in digests.items():
        data = (run / "traces" / f"{episode_id}.jsonl").read_bytes()
        if sha256_hex(data) != expected:
            failures.append(f"trace digest mismatch: {episode_id}")

    pack_path = Path(manifest["pack_path"])
    if pack_path.exists():
        try:
            pack_manifest, episodes = load_pack(pack_path, verify=True)
        except ValueError as exc:
            failures.append(str(exc))
            episodes = []
        else:
            if pack_manifest.content_hash != manifest["pack_hash"]:
                failures.append("run manifest pack hash does not match pack")
        if args.replay and episodes:
            by_id = {e.episode_id: e for e in episodes}
            for path in sorted((run / "traces").glob("*.jsonl")):
                trace = Trace.from_jsonl(path.read_text())
                spec = by_id.get(trace.episode_id)
                if spec is None:
                    failures.append(f"episode missing from pack: {trace.episode_id}")
                    continue
                replayed = replay_trace(spec, trace)
                if canon_dumps(replayed.settlement.to_dict()) != canon_dumps(trace.settlement.to_dict()):
                    failures.append(f"replay settlement mismatch: {trace.episode_id}")
    elif args.replay:
        failures.append(f"pack path not found for replay: {pack_path}")

    if failures:
        for failure in failures:
            print(failure, file=sys.stderr)
        return 1
    print("audit ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridclosure")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate and freeze an episode pack")
    p.add_argument("--families", default="all")
    p.add_argument("--count", type=int, required=True, help="episodes per family")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="run a scripted agent over a pack")
    p.add_argument("--pack", required=True)
    p.add_argument("--agent", choices=AGENTS, required=True)
    p.add_argument("--feedback", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--report-delay", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--stumbles", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="serve episodes to external agents over TCP")
    p.add_argument("--pack", required=True)
    p.add_argument("--listen", default="127.0.0.1:0")
    p.add_argument("--feedback", action="store_true")
    p.add_argument("--turn-timeout", type=float, default=DEFAULT_TURN_TIMEOUT)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", default="", help="comma-separated episode id filter")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("rescore", help="counterfactual report-policy rescoring")
    p.add_argument("--run", required=True)
    p.add_argument("--policy", choices=COUNTERFACTUAL_POLICIES, required=True)
    p.set_defaults(func=cmd_rescore)

    p = sub.add_parser("report", help="emit metric tables for a run")
    p.add_argument("--run", required=True)
    p.add_argument("--paired", default="", help="base run for feedback deltas")
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("audit", help="verify trace digests and pack hash")
    p.add_argument("--run", required=True)
    p.add_argument("--replay", action="store_true",
                   help="also replay stored steps and compare settlements")
    p.set_defaults(func=cmd_audit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
