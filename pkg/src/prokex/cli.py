"""``prokex`` command line: extract, validate, eval.

Exit codes: 0 ok, 1 usage/IO error, 2 stage failure, 3 graph invalid,
4 validation violations.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .agreement import METRICS, agreement_report, format_report, load_ratings
from .backend import BackendConfig, HttpBackend
from .chain import DATA_DIR, FewShotAssets, Limits, load_stage_specs, run_pipeline
from .domain import ProcedureText
from .errors import (
    BackendError,
    GraphInvalid,
    MissingCredential,
    ProkexError,
    StageFailed,
    TurtleSyntaxError,
)
from .heuristic import HeuristicBackend, Lexicons
from .kg import OntologyTerms, emit_turtle, parse_turtle, validate_graph

log = logging.getLogger("prokex")

EXIT_OK, EXIT_USAGE, EXIT_STAGE, EXIT_GRAPH, EXIT_VIOLATIONS = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    backend: BackendConfig = field(default_factory=BackendConfig)
    prompts_dir: Path = DATA_DIR / "prompts"
    assets_dir: Path = DATA_DIR / "assets"
    lexicons_dir: Path = DATA_DIR / "lexicons"
    terms_file: Optional[Path] = None
    limits: Limits = field(default_factory=Limits)
    output_dir: Path = Path("prokex-out")

    def __post_init__(self):
        for name in ("prompts_dir", "assets_dir", "lexicons_dir", "terms_file"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise UsageError(f"{name} does not exist: {path}")

    @classmethod
    def load(cls, path: Optional[str]) -> "RunConfig":
        if not path:
            return cls()
        cfg_path = Path(path)
        try:
            data = json.loads(cfg_path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        here = cfg_path.parent

        def rel(p):
            return None if p is None else (here / p)

        kwargs = {}
        try:
            if "backend" in data:
                kwargs["backend"] = BackendConfig(**data["backend"])
            if "limits" in data:
                lim = dict(data["limits"])
                timeout = lim.pop("timeout_seconds", None)
                kwargs["limits"] = Limits(**lim)
                if timeout is not None:
                    backend = kwargs.get("backend", BackendConfig())
                    kwargs["backend"] = BackendConfig(**{**backend.__dict__,
                                                         "timeout_seconds": timeout})
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad config {path}: {exc}") from exc
        for name in ("prompts_dir", "assets_dir", "lexicons_dir", "terms_file", "output_dir"):
            if data.get(name) is not None:
                kwargs[name] = rel(data[name])
        return cls(**kwargs)

    def terms(self) -> OntologyTerms:
        return OntologyTerms.load(self.terms_file) if self.terms_file else OntologyTerms()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
    common.add_argument("--output", default=argparse.SUPPRESS, help="output directory")

    parser = _Parser(prog="prokex", description="Procedural knowledge extraction toolkit.",
                     parents=[common])
    parser.add_argument("-q", "--quiet", action="store_true", help="no progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ex = sub.add_parser("extract", parents=[common], help="run the prompt chain on a procedure")
    ex.add_argument("input", help="procedure file (title line + body) or directory of .txt files")
    ex.add_argument("--backend", choices=["heuristic", "http"], help="override config backend")
    ex.add_argument("--terms", help="ontology terms JSON")
    ex.add_argument("--max-retries", type=int)
    ex.add_argument("--jobs", type=int, default=1, help="parallel procedures in directory mode")

    va = sub.add_parser("validate", parents=[common], help="check a Turtle graph against its source")
    va.add_argument("graph")
    va.add_argument("source", help="procedure file the graph was extracted from")
    va.add_argument("--terms", help="ontology terms JSON")

    ev = sub.add_parser("eval", parents=[common], help="agreement report for a ratings CSV")
    ev.add_argument("ratings")
    ev.add_argument("--metric", choices=METRICS, default="interval")
    return parser


def _make_backend(cfg: RunConfig, specs, terms):
    if cfg.backend.kind == "http":
        return HttpBackend(cfg.backend)
    return HeuristicBackend(specs, Lexicons.load(cfg.lexicons_dir), terms)


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8", newline="\n")


def extract_one(source: Path, out_dir: Path, cfg: RunConfig, backend, assets, specs,
                terms) -> int:
    try:
        proc = ProcedureText.from_file_text(source.read_text(encoding="utf-8"), source.stem)
    except (OSError, ValueError) as exc:
        print(f"prokex: cannot read procedure {source}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir.mkdir(parents=True, exist_ok=True)
    status, trace, graph = EXIT_OK, None, None
    try:
        trace, graph = run_pipeline(proc, backend, assets, cfg.limits, specs, terms)
    except GraphInvalid as exc:
        status, trace = EXIT_GRAPH, exc.trace
        log.error("%s: %s", proc.id, exc)
    except StageFailed as exc:
        status, trace = EXIT_STAGE, exc.trace
        log.error("%s: %s", proc.id, exc)
    except BackendError as exc:
        from .chain import PipelineTrace

        status, trace = EXIT_STAGE, PipelineTrace(proc.id, error=f"{type(exc).__name__}: {exc}")
        log.error("%s: backend error: %s", proc.id, exc)

    for i, doc in enumerate(trace.documents(), 1):
        _write(out_dir / f"stage{i}.json", doc.dumps())
    if graph is not None:
        _write(out_dir / "graph.ttl", emit_turtle(graph))
    for w in trace.warnings:
        log.warning("%s: %s", proc.id, w)
    _write(out_dir / "trace.json", json.dumps(trace.to_json(), ensure_ascii=False, indent=2) + "\n")
    return status


def cmd_extract(cfg: RunConfig, input_path: str, jobs: int = 1) -> int:
    src = Path(input_path)
    if not src.exists():
        print(f"prokex: input not found: {src}", file=sys.stderr)
        return EXIT_USAGE
    specs = load_stage_specs(cfg.prompts_dir)
    assets = FewShotAssets.load(cfg.assets_dir)
    problems = assets.check(specs)
    if problems:
        print("prokex: unusable few-shot assets: " + "; ".join(problems), file=sys.stderr)
        return EXIT_USAGE
    terms = cfg.terms()
    try:
        backend = _make_backend(cfg, specs, terms)
    except MissingCredential as exc:
        print(f"prokex: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if src.is_file():
        return extract_one(src, cfg.output_dir, cfg, backend, assets, specs, terms)
    sources = sorted(src.glob("*.txt"))
    if not sources:
        print(f"prokex: no .txt procedures in {src}", file=sys.stderr)
        return EXIT_USAGE
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        codes = list(pool.map(lambda p: extract_one(p, cfg.output_dir / p.stem, cfg, backend,
                                                    assets, specs, terms), sources))
    return max(codes)


def cmd_validate(graph_file: str, source_file: str, terms: OntologyTerms) -> int:
    try:
        graph = parse_turtle(Path(graph_file).read_text(encoding="utf-8"))
        src = Path(source_file)
        proc = ProcedureText.from_file_text(src.read_text(encoding="utf-8"), src.stem)
    except (OSError, ValueError, TurtleSyntaxError) as exc:
        print(f"prokex: {exc}", file=sys.stderr)
        return EXIT_USAGE
    violations = validate_graph(graph, terms, proc)
    for v in violations:
        print(v)
    if violations:
        print(f"{len(violations)} violation(s)", file=sys.stderr)
        return EXIT_VIOLATIONS
    print("graph is valid")
    return EXIT_OK


def cmd_eval(ratings_file: str, metric: str, out_dir: Path) -> int:
    try:
        matrix = load_ratings(Path(ratings_file).read_text(encoding="utf-8"))
    except (OSError, ProkexError) as exc:
        print(f"prokex: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = agreement_report(matrix, metric)
    print(format_report(report), end="")
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        cfg = RunConfig.load(getattr(args, "config", None))
        output = getattr(args, "output", None)
        if args.command == "extract":
            if output:
                cfg.output_dir = Path(output)
            if args.backend:
                backend = cfg.backend
                if args.backend == "http" and backend.kind != "http":
                    raise UsageError("http backend needs base_url and model_name in --config")
                if args.backend == "heuristic":
                    cfg.backend = BackendConfig("heuristic")
            if args.max_retries is not None:
                cfg.limits = Limits(args.max_retries, cfg.limits.temperature,
                                    cfg.limits.max_output_tokens)
            if args.terms:
                cfg.terms_file = Path(args.terms)
            return cmd_extract(cfg, args.input, args.jobs)
        if args.command == "validate":
            terms_file = args.terms or cfg.terms_file
            terms = OntologyTerms.load(terms_file) if terms_file else OntologyTerms()
            return cmd_validate(args.graph, args.source, terms)
        return cmd_eval(args.ratings, args.metric, Path(output) if output else Path("."))
    except (UsageError, ValueError, OSError) as exc:
        print(f"prokex: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
