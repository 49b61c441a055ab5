"""Command-line entry point: ``scenesmith <command> ...``.

Exit codes: 0 ok, 2 validation error, 3 stage failure, 4 service failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .model import ScanValidationError
from .pipeline import (
    ConfigError,
    PipelineConfig,
    StageError,
    _json,
    resolve_cache_dir,
    run_pipeline,
    stage_assemble,
    stage_graph,
    stage_paint,
    stage_parse,
    stage_retrieve,
)
from .services import ResponseCache, ServiceError, make_oracle, make_provider

EXIT_OK, EXIT_VALIDATION, EXIT_STAGE, EXIT_SERVICE = 0, 2, 3, 4

log = logging.getLogger("scenesmith")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scenesmith", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"scenesmith {__version__}")
    p.add_argument("--config", help="pipeline config (JSON)")
    p.add_argument("--cache", help="cache directory (overrides config; SCENESMITH_CACHE overrides both)")
    p.add_argument("--seed-override", type=int, help="replace every configured seed")
    p.add_argument("--offline", action="store_true", help="replay service calls from the cache only")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("parse", help="validate a scan and parse the room layout")
    s.add_argument("--scan", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("graph", help="scene graph and collision resolution")
    s.add_argument("--scene", "--parsed", dest="scene", required=True, help="output of `parse`")
    s.add_argument("--out", required=True)
    s.add_argument("--report", default=None, help="write the collision report here as well")

    s = sub.add_parser("retrieve", help="hierarchical asset retrieval")
    s.add_argument("--graph", required=True)
    s.add_argument("--scan", required=True, help="scan JSON (frame images resolve against its folder)")
    s.add_argument("--db", required=True)
    s.add_argument("--provider", default=None, help="url or 'stub' (overrides config)")
    s.add_argument("--oracle", default=None, help="url or 'stub' (overrides config)")
    s.add_argument("--out", required=True)
    s.add_argument("--trace", default=None, help="directory for one trace JSON per object")

    s = sub.add_parser("paint", help="material painting")
    s.add_argument("--graph", required=True)
    s.add_argument("--assignments", required=True, help="retrieval output")
    s.add_argument("--scan", required=True)
    s.add_argument("--db", required=True, help="asset database")
    s.add_argument("--masks", required=True)
    s.add_argument("--matdb", required=True)
    s.add_argument("--oracle", default=None, help="url or 'stub' (overrides config)")
    s.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("assemble", help="assemble and export scene.json")
    s.add_argument("--graph", required=True)
    s.add_argument("--retrieval", required=True)
    s.add_argument("--materials", default=None)
    s.add_argument("--db", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--physics-oracle", default=None, help="url or 'stub' (overrides config)")

    s = sub.add_parser("run", help="full pipeline with stage caching")
    s.add_argument("--scan", required=True)
    s.add_argument("--db", required=True)
    s.add_argument("--matdb", default=None)
    s.add_argument("--masks", default=None)
    s.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("bench", help="evaluation benchmarks")
    bsub = s.add_subparsers(dest="bench", required=True)
    b = bsub.add_parser("similarity", help="chamfer benchmark over mesh pairs")
    b.add_argument("--pairs", required=True, help="CSV: gt,retrieved,category")
    b.add_argument("--n", type=int, default=10000)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--fit", choices=("extent", "diagonal"), default="extent")
    b.add_argument("--out", required=True, help="report .json or .md")
    b = bsub.add_parser("images", help="RMSE/SSIM over image pairs")
    b.add_argument("--pairs", required=True, help="CSV: a,b")
    b.add_argument("--lpips-cmd", default=None, help="external metric command (two paths in, float out)")
    b.add_argument("--out", required=True)

    s = sub.add_parser("demo", help="write the synthetic demo inputs")
    s.add_argument("--out", required=True)
    return p


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed_override is not None:
        cfg = cfg.with_seed(args.seed_override)
    return cfg


def _read(path) -> dict:
    return json.loads(Path(path).read_text())


def _write(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _services(args, cfg):
    cache = ResponseCache(resolve_cache_dir(cfg, args.cache) / "services")
    densities = cfg.assemble.density_table()
    provider = make_provider(cfg.provider_endpoint, cache, args.offline, cfg.embedding_dim, cfg.seeds["stub"], cfg.policy)
    oracle = make_oracle(cfg.oracle_endpoint, cache, args.offline, densities, cfg.assemble.default_density, cfg.policy)
    return cache, provider, oracle


def _endpoint_overrides(args, cfg: PipelineConfig) -> PipelineConfig:
    patch = {}
    if getattr(args, "provider", None):
        patch["provider_endpoint"] = args.provider
    if getattr(args, "oracle", None):
        patch["oracle_endpoint"] = args.oracle
    return PipelineConfig.from_dict(cfg.to_dict() | patch) if patch else cfg


def _dispatch(args) -> int:
    cfg = _config(args)
    logging.basicConfig(level=getattr(logging, str(cfg.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    cmd = args.command
    if cmd == "demo":
        from .fixtures import generate_demo

        print(generate_demo(args.out, seed=cfg.seeds["stub"], dim=cfg.embedding_dim))
        return EXIT_OK
    if cmd == "run":
        res = run_pipeline(args.scan, args.db, args.matdb, cfg, args.out, args.masks, args.offline, args.cache)
        for r in res.stages:
            print(f"{r.name:9s} {'cached' if r.cached else 'ran':6s} {r.sha256[:16]} {r.seconds:.3f}s")
        print(res.scene_path)
        return EXIT_OK
    if cmd == "parse":
        try:
            doc = _read(args.scan)
        except json.JSONDecodeError as exc:
            raise ScanValidationError([f"scan is not valid JSON: {exc}"]) from exc
        _write(args.out, _json(stage_parse(doc, Path(args.scan).parent, cfg)))
        return EXIT_OK
    if cmd == "graph":
        art = stage_graph(_read(args.scene), cfg)
        _write(args.out, _json(art))
        if args.report:
            _write(args.report, _json(art["collision"]))
        return EXIT_OK
    if cmd == "bench":
        return _bench(args, cfg)

    from .retrieval import AssetDatabase

    cfg = _endpoint_overrides(args, cfg)
    _, provider, oracle = _services(args, cfg)
    if cmd == "retrieve":
        db = AssetDatabase.load(args.db)
        art = stage_retrieve(_read(args.graph), Path(args.scan).parent, db, cfg, provider, oracle)
        _write(args.out, _json(art))
        if args.trace:
            for tr in art["traces"]:
                for obj_id in tr["object_ids"]:
                    _write(Path(args.trace) / f"{obj_id}.json", _json(tr))
        return EXIT_OK
    if cmd == "paint":
        from .material import MaterialDatabase

        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        art = stage_paint(
            _read(args.graph), _read(args.assignments), Path(args.scan).parent, args.masks,
            AssetDatabase.load(args.db), MaterialDatabase.load(args.matdb), cfg, provider, oracle, out,
        )
        _write(out / "materials.json", _json(art))
        return EXIT_OK
    if cmd == "assemble":
        endpoint = args.physics_oracle or cfg.physics_oracle_endpoint
        cache = ResponseCache(resolve_cache_dir(cfg, args.cache) / "services")
        physics = make_oracle(endpoint, cache, args.offline, cfg.assemble.density_table(), cfg.assemble.default_density)
        from .pipeline import CODE_VERSION, STAGE_VERSIONS
        from .assemble import config_hash

        provenance = {
            "code_version": CODE_VERSION,
            "config_hash": config_hash(cfg.to_dict() | {"cache_dir": None, "log_level": None}),
            "seeds": dict(cfg.seeds),
            "stage_versions": dict(STAGE_VERSIONS),
        }
        paint = _read(args.materials) if args.materials else None
        text = stage_assemble(_read(args.graph), _read(args.retrieval), paint, AssetDatabase.load(args.db), cfg,
                              physics, provenance)
        _write(args.out, text)
        return EXIT_OK
    raise AssertionError(cmd)


def _bench(args, cfg) -> int:
    from .evalbench import ExternalMetric, read_pairs_csv, run_image_benchmark, run_similarity_benchmark, write_report

    if args.bench == "similarity":
        seed = args.seed if args.seed is not None else cfg.seeds["sampling"]
        report = run_similarity_benchmark(read_pairs_csv(args.pairs), n=args.n, seed=seed, fit=args.fit)
        write_report(report, args.out)
        print(report.to_markdown(), end="")
        return EXIT_OK
    pairs = read_pairs_csv_images(args.pairs)
    ext = ExternalMetric(args.lpips_cmd.split()) if args.lpips_cmd else None
    report = run_image_benchmark(pairs, ext)
    write_report(report, args.out)
    print(report.to_markdown(), end="")
    return EXIT_OK


def read_pairs_csv_images(path) -> list[tuple[str, str]]:
    import csv

    base = Path(path).parent
    out = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if len(row) < 2 or row[0].startswith("#") or row[0] == "a":
                continue
            out.append((str(base / row[0].strip()), str(base / row[1].strip())))
    return out


def _caused_by_service(exc: BaseException | None) -> bool:
    seen = set()
    while exc is not None and id(exc) not in seen:
        if isinstance(exc, ServiceError):
            return True
        seen.add(id(exc))
        exc = getattr(exc, "cause", None) or exc.__cause__ or exc.__context__
    return False


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ScanValidationError, ConfigError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ServiceError as exc:
        print(f"service failure: {exc}", file=sys.stderr)
        return EXIT_SERVICE
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SERVICE if _caused_by_service(exc) else EXIT_STAGE
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"error: stage {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_SERVICE if _caused_by_service(exc) else EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
