"""Operator CLI and experiment harness.

Exit codes: 0 ok, 2 connection error, 3 parse error, 4 experiment self-check
failure.

Job files for ``submit`` are JSON::

    {"job_id": "j1", "owner": "alice", "data_site": null,
     "tasks": [{"task_id": "t1", "attributes": {"user": "alice", ...},
                "true_runtime": 283, "checkpointable": false}],
     "edges": [["t1", "t2"]]}
"""

from __future__ import annotations

import argparse
import json
import sys

EXIT_OK = 0
EXIT_CONNECTION = 2
EXIT_PARSE = 3
EXIT_ASSERTION = 4


def _parse_sweep(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def cmd_submit(args) -> int:
    from .gateway import RpcClient, RpcError

    try:
        with open(args.jobfile) as fh:
            job_doc = json.load(fh)
    except OSError as exc:
        print(f"cannot read job file: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except json.JSONDecodeError as exc:
        print(f"malformed job file at line {exc.lineno}: {exc.msg}", file=sys.stderr)
        return EXIT_PARSE
    try:
        client = RpcClient(args.gateway)
        result = client.call("scheduler.plan", job=job_doc)
    except RpcError as exc:
        print(f"rpc error: {exc}", file=sys.stderr)
        return EXIT_PARSE if exc.code == -32700 else EXIT_ASSERTION
    except Exception as exc:
        print(f"cannot reach gateway {args.gateway}: {exc}", file=sys.stderr)
        return EXIT_CONNECTION
    print(json.dumps(result, indent=2))
    return EXIT_OK


def cmd_experiment_runtime(args) -> int:
    from .errors import UnreadableSource
    from .experiments import experiment_runtime

    try:
        result = experiment_runtime(args.history, args.test, out_csv=args.out)
    except (OSError, UnreadableSource, ValueError, KeyError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    print(f"cases={len(result['cases'])} "
          f"signed_mean_error={result['signed_mean_error']:.4f}% "
          f"mape={result['mape']:.4f}%")
    return EXIT_OK


def cmd_experiment_load(args) -> int:
    from .experiments import experiment_load

    try:
        rows = experiment_load(gateway_url=args.gateway, sweep=_parse_sweep(args.sweep),
                               requests_per_client=args.requests, out_csv=args.out)
    except ConnectionError as exc:
        print(f"connection error: {exc}", file=sys.stderr)
        return EXIT_CONNECTION
    for row in rows:
        print(f"clients={row['clients']} mean_ms={row['mean_ms']:.3f} "
              f"p95_ms={row['p95_ms']:.3f} failures={row['failures']}")
    if any(row["failures"] for row in rows):
        print("self-check failed: requests failed during the sweep", file=sys.stderr)
        return EXIT_ASSERTION
    return EXIT_OK


def cmd_experiment_migration(args) -> int:
    from .experiments import ExperimentCheckFailed, experiment_migration

    try:
        result = experiment_migration(out_csv=args.out, checkpointable=args.checkpointable)
    except ExperimentCheckFailed as exc:
        print(f"self-check failed: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    print(f"decision_time={result['decision_time']} "
          f"reference_completion={result['reference_completion']} "
          f"stay_completion={result['stay_completion']} "
          f"migrated_completion={result['migrated_completion']}")
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    from .tracegen import generate_trace_files

    generate_trace_files(args.history, args.test, n_history=args.n_history,
                         n_test=args.n_test, sigma=args.sigma, seed=args.seed)
    print(f"wrote {args.history} ({args.n_history} rows) and {args.test} ({args.n_test} rows)")
    return EXIT_OK


def cmd_serve(args) -> int:
    import os

    from .errors import UnreadableSource
    from .scenario import load_scenario
    from .stack import GridStack

    addr = args.addr or os.environ.get("GRIDHELM_ADDR", "127.0.0.1:8780")
    store = args.store or os.environ.get("GRIDHELM_STORE")
    scenario_path = args.scenario or os.environ.get("GRIDHELM_SCENARIO")
    host, _, port = addr.partition(":")
    try:
        scenario = load_scenario(scenario_path) if scenario_path else None
    except UnreadableSource as exc:
        print(f"cannot load scenario: {exc}", file=sys.stderr)
        return EXIT_PARSE
    stack = GridStack(scenario, store_dir=store)
    server = stack.serve(host=host, port=int(port or 0))
    print(f"gridhelm gateway listening on {server.url}")
    try:
        server._thread.join()
    except KeyboardInterrupt:
        server.stop()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridhelm", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("submit", help="submit a JSON job file through the gateway")
    s.add_argument("jobfile")
    s.add_argument("--gateway", default="http://127.0.0.1:8780")
    s.set_defaults(func=cmd_submit)

    s = sub.add_parser("experiment-runtime", help="runtime-estimator evaluation protocol")
    s.add_argument("history")
    s.add_argument("test")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_experiment_runtime)

    s = sub.add_parser("experiment-load", help="concurrent-client latency sweep")
    s.add_argument("--gateway", default=None,
                   help="gateway URL; a local demo stack is started when omitted")
    s.add_argument("--sweep", default="1,5,10,25,50")
    s.add_argument("--requests", type=int, default=100)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_experiment_load)

    s = sub.add_parser("experiment-migration", help="two-site migration timeline")
    s.add_argument("--out", default=None)
    s.add_argument("--checkpointable", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dual-run", action="store_true", default=True,
                   help="keep the source copy running (always on; chart needs both series)")
    s.set_defaults(func=cmd_experiment_migration)

    s = sub.add_parser("gen-trace", help="generate a seeded synthetic accounting trace pair")
    s.add_argument("--history", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--n-history", type=int, default=100)
    s.add_argument("--n-test", type=int, default=20)
    s.add_argument("--sigma", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gen_trace)

    s = sub.add_parser("serve", help="run the JSON-RPC gateway")
    s.add_argument("--addr", default=None, help="host:port (default env GRIDHELM_ADDR)")
    s.add_argument("--scenario", default=None)
    s.add_argument("--store", default=None)
    s.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
