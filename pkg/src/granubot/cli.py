"""Command-line entry points: offline pipeline plus server and chat client."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import Config, load_config
from .errors import GranubotError

ROUND_REDUCTION_BOUND = 0.75  # grc avg rounds must not exceed this share of kmeans
HIT_GAP_BOUND = 2.0  # percentage points


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="granubot",
                                     description="granular-pruning dialog engine")
    parser.add_argument("--config", help="JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="write a synthetic catalog")
    gen.add_argument("--out", default="catalog.csv")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--types", type=int, default=None)
    gen.add_argument("--providers", type=int, default=None)
    gen.add_argument("--preset", choices=["paper", "fixture"], default="paper")

    build = sub.add_parser("build", help="compile the knowledge graph and policy trees")
    build.add_argument("--catalog")
    build.add_argument("--store")
    build.add_argument("--seed", type=int)
    build.add_argument("--strategy", choices=["grc", "kmeans", "both"], default="both")
    build.add_argument("--x", type=int)
    build.add_argument("--n", type=int)
    build.add_argument("--auto-n", action="store_true")
    build.add_argument("--embeddings", action="store_true",
                       help="also train goal-inference embeddings")

    sim = sub.add_parser("simulate", help="replay all dialog paths and compare strategies")
    sim.add_argument("--store")
    sim.add_argument("--out", default=None, help="report directory (defaults to the store)")
    sim.add_argument("--check", action="store_true",
                     help="exit nonzero when the comparison thresholds are violated")

    serve = sub.add_parser("serve", help="run the HTTP session API")
    serve.add_argument("--store")
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    serve.add_argument("--ttl", type=float)
    serve.add_argument("--strategy", choices=["grc", "kmeans"])
    serve.add_argument("--transcript", help="append turn records to this JSONL file")

    chat = sub.add_parser("chat", help="interactive thin client against a running server")
    chat.add_argument("--url", default="http://127.0.0.1:8000")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            **{
                key: getattr(args, attr)
                for key, attr in (
                    ("catalog", "catalog"), ("store", "store"), ("seed", "seed"),
                    ("x", "x"), ("n", "n"), ("host", "host"), ("port", "port"),
                    ("session_ttl", "ttl"),
                )
                if hasattr(args, attr)
            },
        )
        handler = {
            "gen-data": cmd_gen_data,
            "build": cmd_build,
            "simulate": cmd_simulate,
            "serve": cmd_serve,
            "chat": cmd_chat,
        }[args.command]
        return handler(args, cfg)
    except GranubotError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def cmd_gen_data(args, cfg: Config) -> int:
    from .synth import SyntheticCatalogSpec, fixture_catalog, generate_catalog

    if args.preset == "fixture":
        catalog = fixture_catalog()
    else:
        spec = SyntheticCatalogSpec(seed=args.seed if args.seed is not None else cfg.seed)
        if args.providers:
            spec.providers = args.providers
        if args.types:
            spec.type_names = spec.type_names[: args.types]
            spec.type_sizes = None
        catalog = generate_catalog(spec)
    path = catalog.write(args.out)
    print(f"wrote {len(catalog.table.records)} providers to {path}")
    return 0


def cmd_build(args, cfg: Config) -> int:
    from .policy import PolicyBuildConfig
    from .registry import STRATEGIES, build_registry, save_store

    catalog_path = Path(cfg.catalog)
    strategies = STRATEGIES if args.strategy == "both" else (args.strategy,)
    use_auto = args.auto_n or cfg.auto_n
    registry = build_registry(
        catalog_path,
        PolicyBuildConfig(fuzzifier=cfg.fuzzifier, epsilon=cfg.epsilon,
                          max_iter=cfg.max_iter, tau=cfg.tau, x=cfg.x, seed=cfg.seed),
        strategies=strategies,
        n_override=None if use_auto else cfg.n,
        use_auto_n=use_auto,
        with_embeddings=args.embeddings,
    )
    store = save_store(registry, cfg.store,
                       catalog_text=catalog_path.read_text(encoding="utf-8"))
    if registry.catalog.rejected:
        print(f"warning: dropped {registry.catalog.rejected} malformed records",
              file=sys.stderr)
    for (service_type, strategy), tree in sorted(registry.trees.items()):
        print(f"{service_type} [{strategy}]: N={tree.n_threshold}, "
              f"{len(tree.leaves())} leaves, depth {tree.max_depth()}")
    print(f"store written to {store}")
    return 0


def cmd_simulate(args, cfg: Config) -> int:
    from .evaluation import (
        catalog_fingerprint,
        compare,
        merge_reports,
        simulate_all_paths,
        write_curves,
        write_report,
    )
    from .registry import load_registry

    registry = load_registry(cfg.store)
    out_dir = Path(args.out) if args.out else Path(cfg.store)
    out_dir.mkdir(parents=True, exist_ok=True)

    reports = {}
    for strategy in ("grc", "kmeans"):
        trees = [registry.tree_for(t, strategy) for t in registry.service_types()]
        fingerprint = catalog_fingerprint(trees)
        reports[strategy] = merge_reports(
            [simulate_all_paths(t) for t in trees], fingerprint
        )
        write_report(reports[strategy], out_dir / f"simulation.{strategy}.txt")

    result = compare(reports["grc"], reports["kmeans"])
    (out_dir / "comparison.txt").write_text(result.to_text(), encoding="utf-8")
    write_curves(result, out_dir / "comparison")
    print(result.to_text())

    if args.check:
        failures = []
        if result.grc_avg_rounds > ROUND_REDUCTION_BOUND * result.km_avg_rounds:
            failures.append(
                f"round reduction: grc {result.grc_avg_rounds:.3f} exceeds "
                f"{ROUND_REDUCTION_BOUND} x kmeans {result.km_avg_rounds:.3f}"
            )
        if result.hit_gap > HIT_GAP_BOUND:
            failures.append(f"hit gap {result.hit_gap:.2f} points exceeds {HIT_GAP_BOUND}")
        for failure in failures:
            print(f"CHECK FAILED: {failure}", file=sys.stderr)
        if failures:
            return 1
        print("checks passed")
    return 0


def cmd_serve(args, cfg: Config) -> int:
    import uvicorn

    from .registry import load_registry
    from .service import create_app

    registry = load_registry(cfg.store)
    app = create_app(registry, session_ttl=cfg.session_ttl,
                     strategy=args.strategy, transcript_path=args.transcript)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
    return 0


def cmd_chat(args, cfg: Config) -> int:
    import httpx

    base = args.url.rstrip("/")
    client = httpx.Client(base_url=base, timeout=10.0)
    health = client.get("/health")
    health.raise_for_status()
    print(f"connected: {', '.join(health.json()['service_types'])}")
    print("you> ", end="", flush=True)
    session_id = None
    for line in sys.stdin:
        utterance = line.strip()
        if not utterance or utterance in ("quit", "exit"):
            break
        if session_id is None:
            data = client.post("/sessions", json={"utterance": utterance}).json()
            session_id = data["session_id"]
            reply = data["reply"]
        else:
            response = client.post(f"/sessions/{session_id}/turns",
                                   json={"utterance": utterance})
            if response.status_code == 404:
                session_id = None
                print("(session expired; starting over)")
                continue
            reply = response.json()
        print(f"bot> {reply['text']}")
        for option in reply.get("options", []):
            print(f"     {option['index'] + 1}) {option['label']}")
        if reply.get("end_tag"):
            session_id = None
            print("(dialogue finished; type a new request)")
        print("you> ", end="", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
