"""Command line entry points for every process in the system.

One binary, four roles:

    fedmask server       run the coordination server
    fedmask compensator  run the noise-aggregation service
    fedmask client       join a project, run it, check its status
    fedmask simnet       deterministic single-process simulation runs
"""

from __future__ import annotations

import argparse
import getpass
import json
import logging
import sys

from fedmask.client import ClientRunner, ClientSession, join_flow, load_dataset_csv
from fedmask.compensator import CompensatorApi, CompensatorCore
from fedmask.errors import FedMaskError
from fedmask.httpserve import ApiHttpServer
from fedmask.masking import RngHandle
from fedmask.server import ServerApi, ServerCore
from fedmask.simnet import run_simulation
from fedmask.storage import SqliteStorage
from fedmask.transport import HttpTransport

log = logging.getLogger(__name__)

DEFAULT_SESSION_FILE = "fedmask-session.json"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedmask",
        description="Privacy-preserving federated aggregation toolkit.",
    )
    parser.add_argument(
        "--verbose", action="store_true", help="enable debug logging"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    server = commands.add_parser("server", help="run the coordination server")
    server.add_argument("--host", default="127.0.0.1")
    server.add_argument("--port", type=int, default=8470)
    server.add_argument(
        "--storage", default="fedmask-server.sqlite3",
        help="sqlite database path (':memory:' for ephemeral state)",
    )
    server.add_argument(
        "--timeout", type=float, default=300.0,
        help="per-round timeout in seconds",
    )
    server.add_argument(
        "--webroot", default=None,
        help="directory of static frontend files to serve alongside the API",
    )

    compensator = commands.add_parser(
        "compensator", help="run the noise-aggregation service"
    )
    compensator.add_argument("--host", default="127.0.0.1")
    compensator.add_argument("--port", type=int, default=8471)
    compensator.add_argument("--timeout", type=float, default=300.0)
    compensator.add_argument(
        "--retries", type=int, default=3,
        help="delivery attempts for the outbound compensation message",
    )

    client = commands.add_parser("client", help="participant commands")
    client_commands = client.add_subparsers(dest="client_command", required=True)

    join = client_commands.add_parser("join", help="join a project")
    join.add_argument("--server", required=True, help="server base URL")
    join.add_argument("--compensator", required=True, help="compensator base URL")
    join.add_argument("--project", required=True, help="project id")
    join.add_argument("--username", required=True)
    join.add_argument("--token", required=True, help="participation token")
    join.add_argument(
        "--password", default=None,
        help="account password (prompted when omitted)",
    )
    join.add_argument(
        "--signup", action="store_true",
        help="create the account before joining",
    )
    join.add_argument(
        "--yes", action="store_true",
        help="skip the interactive consent prompt",
    )
    join.add_argument("--session", default=DEFAULT_SESSION_FILE)

    run = client_commands.add_parser("run", help="run the joined project")
    run.add_argument("--dataset", required=True, help="local CSV file")
    run.add_argument("--session", default=DEFAULT_SESSION_FILE)
    run.add_argument(
        "--seed", type=int, default=None,
        help="use a seeded generator for masking noise (testing only)",
    )
    run.add_argument(
        "--out", default=None,
        help="result file path (default: result-<project>.csv)",
    )
    run.add_argument("--poll", type=float, default=1.0)

    status = client_commands.add_parser("status", help="show project status")
    status.add_argument("--session", default=DEFAULT_SESSION_FILE)

    simnet = commands.add_parser("simnet", help="single-process simulation")
    simnet_commands = simnet.add_subparsers(dest="simnet_command", required=True)
    simrun = simnet_commands.add_parser("run", help="run a simulated project")
    simrun.add_argument("--algorithm", default="variance")
    simrun.add_argument("--clients", type=int, default=3)
    simrun.add_argument(
        "--data", required=True,
        help="comma-separated CSV paths, one per client",
    )
    simrun.add_argument("--seed", type=int, default=0)
    simrun.add_argument(
        "--no-masking", action="store_true",
        help="debug mode: send every parameter in clear",
    )
    simrun.add_argument("--transport", choices=("memory", "http"), default="memory")
    simrun.add_argument("--trace", default="trace.jsonl", help="trace output path")

    return parser


# -- server / compensator processes -------------------------------------------------


def cmd_server(args) -> int:
    storage = SqliteStorage(args.storage)
    core = ServerCore(storage, round_timeout=args.timeout)
    http = ApiHttpServer(
        ServerApi(core), host=args.host, port=args.port, webroot=args.webroot
    )
    print(f"coordination server listening on {http.url}")
    try:
        http.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        http.stop()
        storage.close()
    return 0


def cmd_compensator(args) -> int:
    core = CompensatorCore(
        connect=HttpTransport,
        round_timeout=args.timeout,
        retries=args.retries,
    )
    http = ApiHttpServer(CompensatorApi(core), host=args.host, port=args.port)
    print(f"compensator listening on {http.url}")
    try:
        http.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        http.stop()
    return 0


# -- participant commands -------------------------------------------------------------


def _consent_prompt(info: dict) -> bool:
    config = info.get("project", {})
    print("project information:")
    print(f"  name:          {config.get('name', '')}")
    print(f"  coordinator:   {info.get('creator', '')}")
    print(f"  algorithm:     {config.get('algorithm', '')}")
    print(f"  participants:  {config.get('participant_count', '')}")
    print(f"  description:   {config.get('description', '')}")
    answer = input("join this project? [y/N] ").strip().lower()
    return answer in ("y", "yes")


def cmd_client_join(args) -> int:
    password = args.password
    if password is None:
        password = getpass.getpass("account password: ")
    server = HttpTransport(args.server)
    if args.signup:
        server.post_json(
            "/auth/signup", {"username": args.username, "password": password}
        ).unwrap()
        print(f"account {args.username!r} created")
    confirm = (lambda info: True) if args.yes else _consent_prompt
    session = join_flow(
        server,
        project_id=args.project,
        username=args.username,
        password=password,
        token=args.token,
        server_url=args.server,
        compensator_url=args.compensator,
        confirm=confirm,
    )
    with open(args.session, "w", encoding="utf-8") as fh:
        json.dump(session.to_wire(), fh, indent=2, sort_keys=True)
    print(f"joined project {args.project}; session saved to {args.session}")
    return 0


def _load_session(path: str) -> ClientSession:
    with open(path, encoding="utf-8") as fh:
        return ClientSession.from_wire(json.load(fh))


def cmd_client_run(args) -> int:
    session = _load_session(args.session)
    data = load_dataset_csv(args.dataset)
    print(f"dataset {args.dataset}: {data.shape[0]} rows, {data.shape[1]} columns")
    if args.seed is None:
        rng = RngHandle(0, algorithm="os")
    else:
        rng = RngHandle(args.seed, algorithm="prng")
    runner = ClientRunner(
        session,
        data,
        server=HttpTransport(session.server_url),
        compensator=HttpTransport(session.compensator_url),
        rng=rng,
        poll_interval=args.poll,
    )
    final = runner.run()
    print(f"project finished with status {final}")
    if runner.result_payload is not None:
        out = args.out or f"result-{session.project_id}.csv"
        with open(out, "wb") as fh:
            fh.write(runner.result_payload)
        print(f"result written to {out}")
    return 0 if final == "Done" else 1


def cmd_client_status(args) -> int:
    session = _load_session(args.session)
    server = HttpTransport(session.server_url)
    status = server.get(
        f"/projects/{session.project_id}/status",
        headers=session.auth_headers(),
    ).unwrap()
    print(json.dumps(status, indent=2, sort_keys=True))
    return 0


# -- simulation --------------------------------------------------------------------


def cmd_simnet_run(args) -> int:
    paths = [p for p in args.data.split(",") if p]
    if len(paths) != args.clients:
        print(
            f"error: {args.clients} clients need {args.clients} data files, "
            f"got {len(paths)}",
            file=sys.stderr,
        )
        return 2
    partitions = [load_dataset_csv(p) for p in paths]
    report = run_simulation(
        clients=args.clients,
        partitions=partitions,
        algorithm=args.algorithm,
        seed=args.seed,
        masking=not args.no_masking,
        transport=args.transport,
    )
    sys.stdout.write(report.result.decode("utf-8"))
    if report.trace:
        report.write_trace(args.trace)
        print(f"trace ({len(report.trace)} events) written to {args.trace}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        if args.command == "server":
            return cmd_server(args)
        if args.command == "compensator":
            return cmd_compensator(args)
        if args.command == "client":
            handler = {
                "join": cmd_client_join,
                "run": cmd_client_run,
                "status": cmd_client_status,
            }[args.client_command]
            return handler(args)
        if args.command == "simnet":
            return cmd_simnet_run(args)
        return 2
    except FedMaskError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
