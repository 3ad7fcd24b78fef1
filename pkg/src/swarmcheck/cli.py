"""Command-line front end.

Subcommands: count (preprocess a subsystem), hive (serve trace numbers),
worker (run searches against a hive), run (one-shot orchestration of hive
plus N workers on loopback), explore (exhaustive reference search),
swarm-dfs (randomized full-search baseline).

Exit codes: 0 completed with no bug, 2 a bug was found, 1 any error.
"""

from __future__ import annotations

import argparse
import json
import logging
import subprocess
import sys
import tempfile
import threading
import time
from pathlib import Path

from .counting import CycleError, WeightedFileError, count_traces, load_weighted, save_weighted
from .hive import HiveState, serve
from .lts import LtsFormatError, NetworkError, load_lts, load_network
from .ranges import TraceRangeList
from .search import StateLimitExceeded, run_full_bfs, run_swarm_dfs
from .worker import WorkerConfig, worker_loop
from . import report as report_mod

log = logging.getLogger("swarmcheck")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BUG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmcheck",
        description="Coordinated swarm exploration of networks of labelled "
        "transition systems.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("count", help="preprocess a subsystem LTS into weighted files")
    p.add_argument("--getswarm", required=True, metavar="BASE",
                   help="base path for the .swh/.swc/.sww output files")
    p.add_argument("--swbound", type=int, default=None, metavar="N",
                   help="cut traces after N transitions (required for cyclic subsystems)")
    p.add_argument("lts", help="subsystem LTS file")

    p = sub.add_parser("hive", help="serve swarm traces to workers")
    p.add_argument("port", type=int, help="TCP port to listen on (0 = pick one)")
    p.add_argument("base", help="base path of the preprocessed .swh/.swc/.sww files")
    p.add_argument("--net", required=True, help="network manifest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feedback-batch", type=int, default=1, metavar="N",
                   help="apply feedback only once N results are queued")
    p.add_argument("--report", type=Path, default=None, help="write the run report here")
    p.add_argument("--lease-timeout", type=float, default=None, metavar="S",
                   help="seconds before an unanswered trace is re-issued "
                   "(default: adaptive)")
    p.add_argument("--drain-timeout", type=float, default=15.0, metavar="S")
    p.add_argument("--resume-ledger", type=Path, default=None,
                   help="preload a ledger snapshot")
    p.add_argument("--ledger-out", type=Path, default=None,
                   help="write the final ledger snapshot here")

    p = sub.add_parser("worker", help="run searches against a hive")
    p.add_argument("--swarm", required=True, metavar="BASE",
                   help="base path of the preprocessed files (.swh is read)")
    p.add_argument("--hiveserver", required=True, metavar="HOST")
    p.add_argument("--hiveport", required=True, type=int, metavar="PORT")
    p.add_argument("--net", required=True, help="network manifest")
    p.add_argument("--cap", type=int, default=None, help="per-search state cap")
    p.add_argument("--worker-id", default="worker")
    p.add_argument("--log", type=Path, default=None, help="JSON-lines run log")
    p.add_argument("--dump-visited", type=Path, default=None, metavar="DIR",
                   help="write each search's visited states under DIR")
    p.add_argument("--detect-deadlocks", action="store_true")
    p.add_argument("--retries", type=int, default=10)
    p.add_argument("--crash-after-get", type=int, default=None, metavar="N",
                   help="testing hook: exit abruptly on the Nth received trace")

    p = sub.add_parser("run", help="orchestrate a hive plus N workers on loopback")
    p.add_argument("--workers", type=int, required=True, metavar="N")
    p.add_argument("--net", required=True)
    p.add_argument("--swarm", required=True, metavar="BASE")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--feedback-batch", type=int, default=1)
    p.add_argument("--report", type=Path, default=None)
    p.add_argument("--outdir", type=Path, default=None,
                   help="write report, run table CSV, figures, and logs here")
    p.add_argument("--dump-visited", type=Path, default=None, metavar="DIR")
    p.add_argument("--detect-deadlocks", action="store_true")
    p.add_argument("--lease-timeout", type=float, default=None)
    p.add_argument("--timeout", type=float, default=600.0,
                   help="kill everything after S seconds")
    p.add_argument("--crash-worker", default=None, metavar="IDX:N",
                   help="testing hook: worker IDX exits on its Nth trace")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("explore", help="exhaustive reference search of the product")
    p.add_argument("--net", required=True)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--dump-states", type=Path, default=None,
                   help="write the canonical visited set here")

    p = sub.add_parser("swarm-dfs", help="randomized full-search baseline")
    p.add_argument("--net", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--cap", type=int, default=None)

    return parser


def cmd_count(args) -> int:
    try:
        sub_lts = load_lts(args.lts)
        weighted = count_traces(sub_lts, depth_bound=args.swbound)
    except (LtsFormatError, CycleError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    save_weighted(weighted, args.getswarm)
    print(weighted.total)
    return EXIT_OK


def cmd_hive(args) -> int:
    try:
        weighted = load_weighted(args.base)
        net = load_network(args.net)
        ledger = None
        if args.resume_ledger is not None:
            with open(args.resume_ledger, "r", encoding="utf-8") as fh:
                ledger = TraceRangeList.load(fh, weighted.total)
        state = HiveState(
            weighted,
            net,
            seed=args.seed,
            feedback_batch=args.feedback_batch,
            lease_timeout=args.lease_timeout,
            ledger=ledger,
        )
    except (WeightedFileError, LtsFormatError, NetworkError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    def announce(port: int) -> None:
        print(f"LISTENING {port}", flush=True)

    try:
        hive_report = serve(
            state,
            port=args.port,
            drain_timeout=args.drain_timeout,
            ready_callback=announce,
        )
    except OSError as exc:
        print(f"error: cannot serve: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.report is not None:
        args.report.parent.mkdir(parents=True, exist_ok=True)
        args.report.write_text(json.dumps(hive_report, indent=2) + "\n", encoding="utf-8")
    if args.ledger_out is not None:
        with open(args.ledger_out, "w", encoding="utf-8", newline="\n") as fh:
            state.ledger.dump(fh)
    for line in report_mod.summary_lines(hive_report):
        print(line)
    return EXIT_BUG if hive_report["termination"] == "bug" else EXIT_OK


def cmd_worker(args) -> int:
    cfg = WorkerConfig(
        host=args.hiveserver,
        port=args.hiveport,
        manifest=Path(args.net),
        swarm_base=Path(args.swarm),
        worker_id=args.worker_id,
        state_cap=args.cap,
        detect_deadlocks=args.detect_deadlocks,
        log_path=args.log,
        dump_visited=args.dump_visited,
        max_retries=args.retries,
        crash_after_get=args.crash_after_get,
    )
    try:
        result = worker_loop(cfg)
    except (WeightedFileError, LtsFormatError, NetworkError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(
        f"worker {args.worker_id}: {result.runs} runs, "
        f"{result.total_states} states, terminate={result.terminate_reason}"
    )
    return result.exit_code


def cmd_run(args) -> int:
    outdir = args.outdir
    tmp_ctx = tempfile.TemporaryDirectory(prefix="swarmcheck-")
    workdir = Path(outdir) if outdir is not None else Path(tmp_ctx.name)
    workdir.mkdir(parents=True, exist_ok=True)
    logdir = workdir / "worker-logs"
    logdir.mkdir(exist_ok=True)
    hive_report_path = workdir / "hive_report.json"

    crash_idx, crash_n = None, None
    if args.crash_worker:
        crash_idx, crash_n = (int(p) for p in args.crash_worker.split(":"))

    deadline = time.monotonic() + args.timeout
    hive_cmd = [
        sys.executable, "-m", "swarmcheck", "hive", "0", args.swarm,
        "--net", args.net, "--seed", str(args.seed),
        "--feedback-batch", str(args.feedback_batch),
        "--report", str(hive_report_path),
    ]
    if args.lease_timeout is not None:
        hive_cmd += ["--lease-timeout", str(args.lease_timeout)]
    procs: list[subprocess.Popen] = []
    try:
        hive = subprocess.Popen(hive_cmd, stdout=subprocess.PIPE, text=True)
        procs.append(hive)
        line = hive.stdout.readline()
        if not line.startswith("LISTENING "):
            rest = hive.stdout.read()
            print(f"error: hive failed to start: {line!r} {rest!r}", file=sys.stderr)
            return EXIT_ERROR
        port = int(line.split()[1])
        # keep draining hive stdout so its summary cannot block the pipe
        threading.Thread(target=hive.stdout.read, daemon=True).start()

        workers: list[subprocess.Popen] = []
        for i in range(args.workers):
            worker_cmd = [
                sys.executable, "-m", "swarmcheck", "worker",
                f"--swarm={args.swarm}", "--hiveserver=127.0.0.1",
                f"--hiveport={port}", "--net", args.net,
                "--worker-id", f"w{i}", "--log", str(logdir / f"w{i}.jsonl"),
            ]
            if args.cap is not None:
                worker_cmd += ["--cap", str(args.cap)]
            if args.dump_visited is not None:
                worker_cmd += ["--dump-visited", str(args.dump_visited)]
            if args.detect_deadlocks:
                worker_cmd.append("--detect-deadlocks")
            if crash_idx == i:
                worker_cmd += ["--crash-after-get", str(crash_n)]
            workers.append(subprocess.Popen(worker_cmd, stdout=subprocess.DEVNULL))
        procs.extend(workers)

        for proc in workers:
            proc.wait(timeout=max(1.0, deadline - time.monotonic()))
        hive.wait(timeout=max(1.0, deadline - time.monotonic()))
    except subprocess.TimeoutExpired:
        print("error: run timed out, killing children", file=sys.stderr)
        for proc in procs:
            proc.kill()
        return EXIT_ERROR
    finally:
        for proc in procs:
            if proc.poll() is None:
                proc.kill()

    if not hive_report_path.exists():
        print("error: hive exited without writing a report", file=sys.stderr)
        return EXIT_ERROR
    hive_report = json.loads(hive_report_path.read_text(encoding="utf-8"))
    records = report_mod.load_run_records(sorted(logdir.glob("*.jsonl")))
    consolidated = report_mod.consolidate(hive_report, records, args.workers)

    if consolidated["termination"] == "complete":
        total = consolidated["est_runs"]
        if consolidated["ledger"] != [[0, total]]:
            print("error: hive reported completion but the ledger has gaps",
                  file=sys.stderr)
            return EXIT_ERROR

    report_path = args.report if args.report is not None else (
        workdir / "report.json" if outdir is not None else None
    )
    if report_path is not None:
        Path(report_path).parent.mkdir(parents=True, exist_ok=True)
        Path(report_path).write_text(
            json.dumps(consolidated, indent=2) + "\n", encoding="utf-8"
        )
    if outdir is not None:
        report_mod.write_run_table(consolidated["per_run"], workdir / "runs.csv")
        if not args.no_figures:
            report_mod.render_figures(consolidated, records, workdir / "figures")

    for line in report_mod.summary_lines(consolidated):
        print(line)
    tmp_ctx.cleanup()
    if consolidated["termination"] == "bug":
        return EXIT_BUG
    if consolidated["termination"] == "complete":
        return EXIT_OK
    print("error: run ended without completing", file=sys.stderr)
    return EXIT_ERROR


def cmd_explore(args) -> int:
    try:
        net = load_network(args.net)
        result = run_full_bfs(net, state_cap=args.cap)
    except StateLimitExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (LtsFormatError, NetworkError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.dump_states is not None:
        lines = sorted(",".join(str(s) for s in state) for state in result.visited)
        args.dump_states.parent.mkdir(parents=True, exist_ok=True)
        args.dump_states.write_text(
            "".join(line + "\n" for line in lines), encoding="utf-8"
        )
    print(f"states: {result.states_explored}")
    print(f"transitions: {result.transitions_fired}")
    print(f"time: {result.duration:.3f} s")
    return EXIT_OK


def cmd_swarm_dfs(args) -> int:
    try:
        net = load_network(args.net)
        result = run_swarm_dfs(net, args.seed, state_cap=args.cap)
    except StateLimitExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (LtsFormatError, NetworkError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"states: {result.states_explored}")
    print(f"transitions: {result.transitions_fired}")
    print(f"time: {result.duration:.3f} s")
    if result.bug is not None:
        print("bug: " + " ".join(lab.name for lab in result.bug.witness))
        return EXIT_BUG
    return EXIT_OK


_COMMANDS = {
    "count": cmd_count,
    "hive": cmd_hive,
    "worker": cmd_worker,
    "run": cmd_run,
    "explore": cmd_explore,
    "swarm-dfs": cmd_swarm_dfs,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
