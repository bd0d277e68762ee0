"""Thin-client command line.

Every subcommand except ``serve`` is an HTTP client of the service: with
``--server`` it talks to a running instance, otherwise it spins up a
private in-process server on an ephemeral port for the duration of the
command. Exit codes: 0 success, 1 usage error, 2 oracle/IO error, 3
attack failed (budget exhausted).
"""
from __future__ import annotations

import argparse
import os
import sys
import threading
import time
from contextlib import contextmanager

import httpx

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ERROR = 2
EXIT_ATTACK_FAILED = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def _add_attack_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--algorithm",
        choices=["restart", "iterative"],
        default="restart",
        help="search algorithm (default: restart)",
    )
    parser.add_argument("--restarts", type=int, default=100, help="restart budget (default: 100)")
    parser.add_argument("--iters", type=int, default=50, help="iterations per restart (default: 50)")
    parser.add_argument("--patch-min", type=int, default=3, help="minimum patch side (default: 3)")
    parser.add_argument("--patch-max", type=int, default=3, help="maximum patch side (default: 3)")
    parser.add_argument(
        "--mapping",
        choices=["random", "similarity", "distance", "similarity-dist", "distance-dist"],
        default="random",
        help="destination mapping rule (default: random)",
    )
    parser.add_argument(
        "--mode",
        choices=["overwrite", "swap"],
        default="overwrite",
        help="pixel transfer mode (default: overwrite)",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="random seed (default: $PIXLE_SEED if set, else 0)",
    )
    parser.add_argument(
        "--no-early-stop",
        action="store_true",
        help="run the full budget even after the goal is met",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="pixle", description=__doc__)
    parser.add_argument("--server", default=None, help="URL of a running service instance")
    sub = parser.add_subparsers(dest="command", required=True)

    p_attack = sub.add_parser("attack", help="attack a single image")
    p_attack.add_argument("--oracle", required=True, help="builtin:NAME | linear:PATH | process:CMD | tcp:ADDR")
    p_attack.add_argument("--image", required=True, help="PNG file to attack")
    p_attack.add_argument("--label", type=int, required=True, help="true class index")
    p_attack.add_argument("--target", type=int, default=None, help="target class (default: untargeted)")
    p_attack.add_argument("--out", default=None, help="directory for adversarial PNG, outcome JSON, trajectory CSV (default: none)")
    _add_attack_flags(p_attack)

    p_campaign = sub.add_parser("campaign", help="attack every item of a manifest")
    p_campaign.add_argument("--oracle", required=True)
    p_campaign.add_argument("--manifest", required=True, help="id,path,label CSV manifest")
    p_campaign.add_argument("--quota", type=int, default=None, help="per-class selection quota (default: keep all correct)")
    p_campaign.add_argument("--workers", type=int, default=1, help="parallel attacks when the oracle allows (default: 1)")
    p_campaign.add_argument("--out", default=None, help="campaign output directory (default: none)")
    _add_attack_flags(p_campaign)

    p_matrix = sub.add_parser("matrix", help="targeted class-pair success matrix")
    p_matrix.add_argument("--oracle", required=True)
    p_matrix.add_argument("--manifest", required=True)
    p_matrix.add_argument("--per-pair-quota", type=int, default=5, help="images per ordered class pair (default: 5)")
    p_matrix.add_argument("--workers", type=int, default=1, help="parallel attacks when the oracle allows (default: 1)")
    p_matrix.add_argument("--out", default=None, help="matrix output directory (default: none)")
    _add_attack_flags(p_matrix)

    p_plot = sub.add_parser("plot", help="emit plot data from a campaign directory")
    p_plot.add_argument("--campaign", required=True, help="campaign output directory")
    p_plot.add_argument("--out", default=None, help="plot output directory (default: <campaign>/plots)")

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    return parser


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("PIXLE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"PIXLE_SEED must be an integer, got {env!r}") from exc
    return 0


def _settings(args) -> dict:
    return {
        "algorithm": args.algorithm,
        "restarts": args.restarts,
        "iters": args.iters,
        "patch_min": args.patch_min,
        "patch_max": args.patch_max,
        "mapping": args.mapping,
        "mode": args.mode,
        "seed": _resolve_seed(args),
        "early_stop": not args.no_early_stop,
    }


@contextmanager
def _local_server():
    import uvicorn

    from .service.app import app

    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 15.0
    while not server.started:
        if not thread.is_alive() or time.monotonic() > deadline:
            raise RuntimeError("local service failed to start")
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    try:
        yield f"http://127.0.0.1:{port}"
    finally:
        server.should_exit = True
        thread.join(timeout=10)


@contextmanager
def _client(args):
    if args.server is not None:
        with httpx.Client(base_url=args.server, timeout=None) as client:
            yield client
        return
    with _local_server() as base_url:
        with httpx.Client(base_url=base_url, timeout=None) as client:
            yield client


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    response = client.post(path, json=payload)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise ServiceError(f"{path} failed ({response.status_code}): {detail}")
    return response.json()


class ServiceError(Exception):
    pass


def _cmd_attack(client, args) -> int:
    payload = {
        "oracle": args.oracle,
        "image": args.image,
        "label": args.label,
        "target": args.target,
        "settings": _settings(args),
        "out_dir": args.out,
    }
    result = _post(client, "/api/attack", payload)
    print(
        "success={success} queries={queries} l0={l0} final_loss={final_loss}".format(
            **result
        )
    )
    for name, path in result.get("outputs", {}).items():
        print(f"{name}: {path}")
    return EXIT_OK if result["success"] else EXIT_ATTACK_FAILED


def _cmd_campaign(client, args) -> int:
    payload = {
        "oracle": args.oracle,
        "manifest": args.manifest,
        "settings": _settings(args),
        "quota": args.quota,
        "workers": args.workers,
        "out_dir": args.out,
    }
    result = _post(client, "/api/campaign", payload)
    report = result["report"]
    for warning in result.get("selection_warnings", []):
        print(f"warning: {warning}", file=sys.stderr)
    print(
        "attacked={n} success_rate={sr:.1f} iterations={im:.1f}±{isd:.1f}".format(
            n=len(report["per_image"]),
            sr=report["success_rate"],
            im=report["iterations_mean"],
            isd=report["iterations_std"],
        )
    )
    if report["l0_mean"] is not None:
        print("l0={:.2f}±{:.2f}".format(report["l0_mean"], report["l0_std"]))
    if args.out:
        print(f"report: {os.path.join(args.out, 'report.json')}")
    failed = result.get("failed_items", [])
    if failed:
        print(f"error: {len(failed)} items failed: {', '.join(failed[:5])}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def _cmd_matrix(client, args) -> int:
    payload = {
        "oracle": args.oracle,
        "manifest": args.manifest,
        "settings": _settings(args),
        "per_pair_quota": args.per_pair_quota,
        "workers": args.workers,
        "out_dir": args.out,
    }
    result = _post(client, "/api/matrix", payload)
    matrix = result["matrix"]
    for warning in matrix.get("warnings", []):
        print(f"warning: {warning}", file=sys.stderr)
    print(f"overall_success_rate={matrix['overall_success_rate']:.1f}")
    for s, row in enumerate(matrix["cells"]):
        cells = " ".join("  -  " if v is None else f"{v:5.1f}" for v in row)
        print(f"class {s}: {cells}")
    return EXIT_OK


def _cmd_plot(client, args) -> int:
    payload = {"campaign_dir": args.campaign, "out_dir": args.out}
    result = _post(client, "/api/plot", payload)
    for name, path in result["outputs"].items():
        print(f"{name}: {path}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "serve":
        return _cmd_serve(args)
    handlers = {
        "attack": _cmd_attack,
        "campaign": _cmd_campaign,
        "matrix": _cmd_matrix,
        "plot": _cmd_plot,
    }
    try:
        with _client(args) as client:
            return handlers[args.command](client, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ServiceError, httpx.HTTPError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
