"""Command line: REPL, script runner, service, benchmarks, reports."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .engine import Engine, EngineConfig, Session, load_config
from .errors import GenieError
from .qlang import parse
from .qlang.ast import SelectQuery


def _engine(args) -> Engine:
    config = load_config(args.config) if args.config else EngineConfig()
    return Engine(config)


def _print_rows(rows: list[dict], stream=sys.stdout) -> None:
    if not rows:
        print("(no rows)", file=stream)
        return
    cols = list(rows[0].keys())
    print("\t".join(cols), file=stream)
    for r in rows:
        print("\t".join(_fmt(r.get(c)) for c in cols), file=stream)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def cmd_run(args) -> int:
    engine = _engine(args)
    text = Path(args.script).read_text(encoding="utf-8")
    report_dir = Path(args.report_dir) if args.report_dir else None
    exit_code = 0
    try:
        for qn, stmt in enumerate(parse(text).statements, 1):
            if not isinstance(stmt, SelectQuery):
                list(engine.execute(stmt))
                print(f"-- statement {qn}: ok")
                continue
            epochs = []
            rows: list[dict] = []
            for res in engine.execute(stmt):
                print(f"-- statement {qn} epoch {res.epoch}: {len(res.rows)} rows, "
                      f"{res.invocations} invocations, {res.latency_s:.2f}s")
                rows = res.rows
                epochs.append({"epoch": res.epoch, "latency_s": res.latency_s,
                               "invocations": res.invocations,
                               "estimated_s": res.estimated_s,
                               "spatial_res": res.spatial_res,
                               "temporal_res": res.temporal_res})
            _print_rows(rows)
            if report_dir is not None:
                from .engine import reports
                paths = reports.render_query_results(rows, epochs, report_dir,
                                                     name=f"q{qn}")
                attr = next(iter(
                    (b.table, b.column)
                    for b in __import__("genie.qlang", fromlist=["bind"])
                    .bind(stmt, engine.catalog, engine.store).virtual_columns), None)
                if attr is not None:
                    field, _ = engine.store.read_window(
                        attr, engine.domain.bbox, engine.domain.interval,
                        epochs[-1]["spatial_res"], epochs[-1]["temporal_res"])
                    stations = engine.store.table("monitoring_stations")
                    pts = stations.points() if stations else None
                    reports.render_field_heatmap(field,
                                                 report_dir / f"q{qn}_heatmap.png",
                                                 stations=pts)
                print(f"-- reports in {report_dir}", file=sys.stderr)
    except GenieError as exc:
        print(f"error: {exc}", file=sys.stderr)
        exit_code = 1
    finally:
        engine.close()
    return exit_code


def cmd_repl(args) -> int:
    engine = _engine(args)
    session = Session("repl")
    print("genie repl; end statements with ';', exit with \\q")
    buffer = ""
    try:
        while True:
            try:
                line = input("genie> " if not buffer else "   ... ")
            except EOFError:
                break
            if line.strip() == "\\q":
                break
            buffer += line + "\n"
            if ";" not in buffer:
                continue
            text, buffer = buffer.rsplit(";", 1)
            try:
                for res in engine.execute(text + ";", session):
                    print(f"-- epoch {res.epoch}: {res.invocations} invocations, "
                          f"{res.latency_s:.2f}s")
                    _print_rows(res.rows)
            except GenieError as exc:
                print(f"error: {exc}", file=sys.stderr)
    finally:
        engine.close()
    return 0


def cmd_explain(args) -> int:
    from .planner import build_plan, explain, extract_requirements, schedule_epochs
    from .qlang import bind
    engine = _engine(args)
    try:
        text = Path(args.query).read_text(encoding="utf-8") \
            if Path(args.query).exists() else args.query
        for stmt in parse(text).statements:
            if not isinstance(stmt, SelectQuery):
                continue
            bound = bind(stmt, engine.catalog, engine.store)
            req = extract_requirements(bound, engine.catalog, engine.store,
                                       engine.domain, engine.config.floors)
            eplan = engine._schedule(req)
            print(f"class={req.accuracy_class} floor={req.accuracy_floor} "
                  f"extent={len(req.extent)} box(es) interval={req.interval}")
            for epoch in sorted(eplan.epochs):
                spec = eplan.epochs[epoch]
                plan = build_plan(req, spec.assignment, engine.catalog,
                                  engine.coverage, engine.domain,
                                  engine._estimator(), bound=bound,
                                  input_scope=engine._input_scope, epoch=epoch)
                rule = spec.extent_rule
                print(f"-- epoch {epoch} (extent rule: {rule})")
                print(explain(plan))
    except GenieError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        engine.close()
    return 0


def cmd_serve(args) -> int:
    from .engine.service import serve
    engine = _engine(args)
    if engine.config.warm_start_budget_s > 0:
        entries = engine.warm_start(engine.config.warm_start_budget_s)
        print(f"warm start: {len(entries)} coverage entries", file=sys.stderr)
    port = args.port or engine.config.port
    static = args.console if args.console else None
    print(f"serving on http://127.0.0.1:{port}", file=sys.stderr)
    serve(engine, port, static)
    return 0


def cmd_warmstart(args) -> int:
    engine = _engine(args)
    try:
        t0 = time.perf_counter()
        entries = engine.warm_start(args.budget)
        print(f"{len(entries)} entries in {time.perf_counter() - t0:.1f}s")
    finally:
        engine.close()
    return 0


def cmd_bench(args) -> int:
    from .engine import bench, reports
    config = load_config(args.config) if args.config else EngineConfig()
    if args.what == "reuse":
        text = Path(args.workload).read_text(encoding="utf-8") if args.workload \
            else bench.bundled_query("workload_reuse.sql")
        report = bench.bench_reuse(text, config)
        summary = report.summary()
        print(json.dumps(summary, indent=1))
        if args.out_dir:
            paths = reports.render_reuse_report(report, args.out_dir)
            print("wrote: " + ", ".join(str(p) for p in paths), file=sys.stderr)
        return 0
    if args.what == "classes":
        results = bench.bench_query_classes(config)
        for r in results:
            print(f"{r.name}: speedup {r.speedup:.1f}x "
                  f"accuracy {100 * r.accuracy:.1f}% "
                  f"(adaptive est {r.adaptive_estimated_s:.3f}s, "
                  f"static-high est {r.static_high_estimated_s:.3f}s)")
        if args.out_dir:
            paths = reports.render_class_report(results, args.out_dir)
            print("wrote: " + ", ".join(str(p) for p in paths), file=sys.stderr)
        return 0
    print(f"unknown bench {args.what!r}", file=sys.stderr)
    return 2


def cmd_tradeoff(args) -> int:
    from .engine import reports
    from .tradeoff import measure_tradeoff
    rows = measure_tradeoff(seeds=args.seeds)
    for r in rows:
        print(f"{r['axis']:9s} {r['value']:>6}: est {r['est_seconds']:8.3f}s "
              f"meas {r['meas_seconds']:8.3f}s | est A {r['est_accuracy']:.3f} "
              f"meas A {r['meas_accuracy']:.3f}")
    if args.out_dir:
        paths = reports.render_tradeoff_report(rows, args.out_dir)
        print("wrote: " + ", ".join(str(p) for p in paths), file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="genie",
                                     description="simulation-aware query engine")
    parser.add_argument("--config", help="engine config file", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("repl", help="interactive session")
    p.set_defaults(func=cmd_repl)

    p = sub.add_parser("run", help="run a SQL script")
    p.add_argument("script")
    p.add_argument("--report-dir", default=None,
                   help="write CSV results and figures here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("explain", help="show epoch plans without executing")
    p.add_argument("query", help="query text or path to a .sql file")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--console", default=None,
                   help="static directory with the built console")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("warmstart", help="proactive coarse generation")
    p.add_argument("--budget", type=float, required=True,
                   help="estimated-seconds budget")
    p.set_defaults(func=cmd_warmstart)

    p = sub.add_parser("bench", help="benchmarks")
    p.add_argument("what", choices=["reuse", "classes"])
    p.add_argument("workload", nargs="?", default=None)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("tradeoff", help="measured vs modeled trade-off curves")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--seeds", type=int, default=1)
    p.set_defaults(func=cmd_tradeoff)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
