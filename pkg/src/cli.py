# cli.py - critwalk 명령행 도구 (generate / percolate / analyze / mixing / scaling / tails / chi / bp)
import argparse
import json
import logging
import math
import sys

import numpy as np
import pandas as pd
from pydantic import ValidationError

from branching import GwSpec, gw_sample_many, gw_tail_check, gw_total_pmf_exact
from components import component_diameter, components
from config import config, setup_logging
from experiments import (
    ExperimentConfig,
    analyze_all,
    build_graph,
    chi_curve,
    critical_p,
    p_values,
    run_edge_tail,
    run_good_level_check,
    run_lane_events,
    run_markov_bounds,
    run_scaling,
    run_small_component_diam,
    run_small_diam_bounds,
    run_tail_diam,
    run_window,
    task_seed,
)
from graph_core import (
    CapExceededError,
    GraphError,
    LabError,
    RngSeed,
    graph_from_edges,
    load_edge_list,
    parse_seed,
    percolate,
    save_edge_list,
)
from mixing import LazyChain, certify, critical_lane_schedule, spectral_diagnostics
from record_store import RecordStore, write_csv, write_jsonl, write_table

logger = logging.getLogger("critwalk")

EXIT_OK, EXIT_INVALID, EXIT_CAP = 0, 1, 2


class LabArgumentParser(argparse.ArgumentParser):
    """잘못된 인자는 종료 코드 1 (GraphError 로 전달)"""

    def error(self, message):
        raise GraphError(f"{self.prog}: {message}")


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _add_family_args(parser):
    parser.add_argument("--family", choices=["complete", "regular", "hypercube", "torus"], default=None)
    parser.add_argument("--n", type=int, nargs="+", default=None, help="n grid (오름차순)")
    parser.add_argument("--d", type=int, default=None, help="regular 차수")
    parser.add_argument("--dim", type=int, default=None)
    parser.add_argument("--side", type=int, default=None)
    parser.add_argument("--lambda", dest="lam", type=float, default=None)
    parser.add_argument("--p", type=float, default=None)
    parser.add_argument("--p-grid", type=_float_list, default=None)
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--components", type=int, default=None, help="trial 당 분석할 상위 성분 수")
    parser.add_argument("--diameter-cap", type=int, default=None)
    parser.add_argument("--mixing-cap", type=int, default=None)
    parser.add_argument("--no-mixing", action="store_true")
    parser.add_argument("--no-lanes", action="store_true")
    parser.add_argument("--beta", type=float, default=None)
    parser.add_argument("--D", type=float, default=None)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=parse_seed, default=None, help="10진수 또는 0x 16진수")
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--out", default=None, help="출력 파일 (기본: 표준출력)")
    common.add_argument("--format", choices=["jsonl", "csv"], default=None)
    common.add_argument("--config", default=None, help="ExperimentConfig JSON 문서")
    common.add_argument("--log-level", default=None)
    common.add_argument("--timing", action="store_true", help="레코드에 wall_time 포함")
    common.add_argument("--store", action="store_true", help="sqlite 저장소에도 기록")

    parser = LabArgumentParser(prog="critwalk", description="임계 퍼콜레이션 지름/혼합시간 실험 도구")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=LabArgumentParser)

    p = sub.add_parser("generate", parents=[common], help="기반 그래프를 간선 목록으로 저장")
    _add_family_args(p)

    p = sub.add_parser("percolate", parents=[common], help="퍼콜레이션 후 남은 간선과 성분 크기")
    _add_family_args(p)
    p.add_argument("--graph", default=None, help="간선 목록 파일")

    p = sub.add_parser("analyze", parents=[common], help="trial 별 성분 통계 + 혼합시간 인증서")
    _add_family_args(p)

    p = sub.add_parser("mixing", parents=[common], help="성분별 혼합시간 인증서 + 스펙트럼 진단")
    _add_family_args(p)
    p.add_argument("--graph", default=None, help="간선 목록 파일")
    p.add_argument("--t-max", type=int, default=32)

    p = sub.add_parser("scaling", parents=[common], help="|C1|, diam, T_mix 지수 적합")
    _add_family_args(p)

    p = sub.add_parser("tails", parents=[common], help="꼬리/임계 구간 실험")
    _add_family_args(p)
    p.add_argument("--kind", choices=["diam", "edges", "small", "window", "good", "markov", "lanes", "smalllong"],
                   default="diam")
    p.add_argument("--A", type=_float_list, default=None)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--R", type=int, default=None)
    p.add_argument("--D2", type=_float_list, default=None)
    p.add_argument("--D1", type=float, default=1.0)
    p.add_argument("--lambdas", type=_float_list, default=None)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--r", type=int, default=None, help="markov: diam < r 기준")
    p.add_argument("--A-tilde", type=_float_list, default=None)
    p.add_argument("--h", type=int, default=None, help="lanes: 공 반지름 (없으면 임계 일정)")
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)

    p = sub.add_parser("chi", parents=[common], help="chi(p) 곡선과 chi'/chi 최대점")
    _add_family_args(p)
    p.add_argument("--p-min", type=float, default=None)
    p.add_argument("--p-max", type=float, default=None)
    p.add_argument("--points", type=int, default=41)
    p.add_argument("--chi-lambda", type=float, default=None)

    p = sub.add_parser("bp", parents=[common], help="Galton-Watson 총 자손 분포 + 꼬리 표")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--mmax", type=int, default=1000)
    p.add_argument("--samples", type=int, default=0, help="Monte Carlo 비교 샘플 수")
    return parser


def config_from_args(args, defaults=None):
    """--config JSON 위에 명령행 값을 덮어쓴다"""
    data = dict(defaults or {})
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            data.update(json.load(f))
    overrides = {
        "family": getattr(args, "family", None),
        "n_grid": getattr(args, "n", None),
        "d": getattr(args, "d", None),
        "dim": getattr(args, "dim", None),
        "side": getattr(args, "side", None),
        "lam": getattr(args, "lam", None),
        "p": getattr(args, "p", None),
        "p_grid": getattr(args, "p_grid", None),
        "trials": getattr(args, "trials", None),
        "components_per_trial": getattr(args, "components", None),
        "exact_diameter_cap": getattr(args, "diameter_cap", None),
        "exact_mixing_cap": getattr(args, "mixing_cap", None),
        "beta": getattr(args, "beta", None),
        "D": getattr(args, "D", None),
        "seed": args.seed,
        "threads": args.threads,
        "output": args.out,
        "format": args.format,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "no_mixing", False):
        data["mixing"] = False
    if getattr(args, "no_lanes", False):
        data["lane_certificate"] = False
    if args.timing:
        data["timing"] = True
    if getattr(args, "p_grid", None) is not None:
        data["p_rule"] = "grid"
    elif getattr(args, "p", None) is not None:
        data["p_rule"] = "explicit"
    elif getattr(args, "lam", None) is not None:
        data["p_rule"] = "window"
    return ExperimentConfig.model_validate(data)


def _write_records(cfg, records):
    if cfg.format == "csv":
        write_csv(records, cfg.output, timing=cfg.timing)
    else:
        write_jsonl(records, cfg.output, timing=cfg.timing)


def _store(args, command, cfg, records=(), summary=None):
    if args.store:
        run_id = RecordStore().save_run(command, cfg, list(records), summary)
        logger.info("💾 saved run %s", run_id)


def _graph_and_config(args):
    """--graph 가 있으면 파일에서, 없으면 family 와 n_grid[0] 로 기반 그래프를 만든다"""
    if getattr(args, "graph", None):
        g = load_edge_list(args.graph)
        return g, config_from_args(args, defaults={"n_grid": [g.n]})
    cfg = config_from_args(args)
    n = cfg.n_grid[0]
    return build_graph(cfg, n, task_seed(cfg, n, 0)), cfg


def _loaded_p(args, cfg, fallback=None):
    """파일 그래프는 임계 구간 공식을 쓸 수 없으므로 --p (없으면 fallback)"""
    if not getattr(args, "graph", None):
        return p_values(cfg, cfg.n_grid[0])[0]
    if cfg.p is not None:
        return cfg.p
    if fallback is None:
        raise GraphError("a loaded graph needs an explicit --p")
    return fallback


# ---------------------------------------------------------------------------
# 하위 명령
# ---------------------------------------------------------------------------

def cmd_generate(args):
    g, cfg = _graph_and_config(args)
    if g.is_implicit:
        raise CapExceededError(f"K_{g.n} exceeds the edge budget; no edge list to write")
    if cfg.output:
        save_edge_list(g, cfg.output)
    else:
        sys.stdout.write(f"{g.n} {g.m}\n")
        for u, v in g.edges.tolist():
            sys.stdout.write(f"{u} {v}\n")
    logger.info("✅ generated %r", g)
    return EXIT_OK


def cmd_percolate(args):
    g, cfg = _graph_and_config(args)
    p = _loaded_p(args, cfg)
    mask = percolate(g, p, task_seed(cfg, g.n, 0))
    kept = mask.retained_edges()
    sizes = [c.size for c in components(g, mask)[:10]]
    summary = {"n": g.n, "m": g.m, "p": p, "retained": int(kept.shape[0]), "largest_components": sizes}
    if cfg.output:
        save_edge_list(graph_from_edges(g.n, kept, name=f"{g.name}_p"), cfg.output)
    sys.stdout.write(json.dumps(summary) + "\n")
    return EXIT_OK


def cmd_analyze(args):
    cfg = config_from_args(args)
    records = analyze_all(cfg)
    _write_records(cfg, records)
    _store(args, "analyze", cfg, records)
    return EXIT_OK


def cmd_mixing(args):
    g, cfg = _graph_and_config(args)
    p = _loaded_p(args, cfg, fallback=1.0)
    mask = percolate(g, p, task_seed(cfg, g.n, 0))
    lane_params = critical_lane_schedule(g.n, cfg.beta, cfg.D) if cfg.lane_certificate else None
    rows = []
    for rank, c in enumerate(components(g, mask)[:cfg.components_per_trial]):
        _, _, upper, exact = component_diameter(c, cfg.exact_diameter_cap)
        chain = LazyChain(c)
        cert = certify(chain, diam=upper, lane_params=lane_params, mixing_cap=cfg.exact_mixing_cap)
        row = {
            "component_rank": rank, "size": c.size, "edge_count": c.edge_count,
            "diameter": upper if exact else None, "method": cert.method,
            "t_mix": cert.t_mix, "t_mix_lower": cert.t_lower, "t_mix_upper": cert.t_upper,
            "upper_diam": cert.upper_diam, "upper_hit": cert.upper_hit,
            "lower_lane": cert.lower_lane.bound if cert.lower_lane else None,
            "lane_failure": ";".join(cert.lower_lane.failed) if cert.lower_lane else "",
        }
        if c.size <= config.DENSE_SOLVER_CAP:
            report = spectral_diagnostics(chain, t_max=args.t_max)
            row.update(spectral_gap=report.spectral_gap, eigen_in_range=report.in_range,
                       return_prob_monotone=report.return_prob_monotone)
        rows.append(row)
    write_table(pd.DataFrame(rows), cfg.output, cfg.format)
    return EXIT_OK


def cmd_scaling(args):
    cfg = config_from_args(args)
    result = run_scaling(cfg)
    _write_records(cfg, result.records)
    summary = result.summary()
    sys.stderr.write(json.dumps(summary, indent=2) + "\n")
    _store(args, "scaling", cfg, result.records, summary)
    return EXIT_OK


def _lane_args(args):
    """--h --m --k --r --L 를 모두 주거나 모두 생략 (생략 시 n 별 임계 일정)"""
    given = {key: getattr(args, key) for key in ("h", "m", "k", "r", "L")}
    if all(v is None for v in given.values()):
        return None
    if any(v is None for v in given.values()):
        raise GraphError("--kind lanes needs all of --h --m --k --r --L, or none of them")
    given["alpha"] = args.alpha if args.alpha is not None else given["L"] / 20.0
    return given


def cmd_tails(args):
    cfg = config_from_args(args)
    if args.kind == "diam":
        result = run_tail_diam(cfg, args.A or [1, 2, 3, 4, 5, 6])
        table, fits = result.table, result.fits
    elif args.kind == "edges":
        result = run_edge_tail(cfg, args.A or [1, 2, 4, 8])
        table, fits = result.table, result.fits
    elif args.kind == "small":
        if args.M is None or not args.D2:
            raise GraphError("--kind small needs --M and --D2")
        table, fits = run_small_component_diam(cfg, args.M, args.D2, args.D1).table, {}
    elif args.kind == "good":
        if args.M is None or args.R is None:
            raise GraphError("--kind good needs --M and --R")
        table, fits = run_good_level_check(cfg, args.M, args.R), {}
    elif args.kind == "markov":
        if args.M is None or args.R is None or args.r is None:
            raise GraphError("--kind markov needs --M, --R and --r")
        table, fits = run_markov_bounds(cfg, args.M, args.R, args.r, args.A_tilde or [1.0, 2.0, 4.0]).table, {}
    elif args.kind == "lanes":
        table, fits = run_lane_events(cfg, _lane_args(args)).table, {}
    elif args.kind == "smalllong":
        if args.M is None or args.R is None:
            raise GraphError("--kind smalllong needs --M and --R")
        table, fits = run_small_diam_bounds(cfg, args.M, args.R).table, {}
    else:
        if cfg.family != "regular":
            raise GraphError("--kind window runs on random regular graphs (--family regular --d D)")
        n = cfg.n_grid[0]
        k_max = args.k_max or math.ceil(n ** (1.0 / 3.0))
        result = run_window(cfg.d, n, args.lambdas or [-1.0, 0.0, 1.0], cfg.trials, cfg.beta,
                            k_max, RngSeed(cfg.seed), cfg.threads)
        table, fits = result.table, {"increasing": result.increasing}
    write_table(table, cfg.output, cfg.format)
    if fits:
        sys.stderr.write(json.dumps(
            {str(k): (v.model_dump() if hasattr(v, "model_dump") else v) for k, v in fits.items()}, indent=2) + "\n")
    _store(args, f"tails-{args.kind}", cfg,
           summary={"kind": args.kind, "table": json.loads(table.to_json(orient="records"))})
    return EXIT_OK


def cmd_chi(args):
    g, cfg = _graph_and_config(args)
    if cfg.p_grid:
        grid = cfg.p_grid
    else:
        centre = 1.0 / max(g.max_degree - 1, 1)
        lo = args.p_min if args.p_min is not None else 0.5 * centre
        hi = args.p_max if args.p_max is not None else min(1.0, 2.0 * centre)
        grid = np.linspace(lo, hi, args.points).tolist()
    curve = chi_curve(g, grid, cfg.trials, RngSeed(cfg.seed))
    estimate = critical_p(curve, args.chi_lambda)
    write_table(curve.table, cfg.output, cfg.format)
    sys.stderr.write(json.dumps(estimate.__dict__) + "\n")
    return EXIT_OK


def cmd_bp(args):
    spec = GwSpec(args.d, args.p)
    pmf = gw_total_pmf_exact(spec, args.mmax)
    ms = np.arange(1, pmf.m_max + 1)
    table = pd.DataFrame({"m": ms, "pmf": pmf.masses, "tail": [pmf.tail(int(m)) for m in ms]})
    table["scaled_tail"] = np.sqrt(table["m"]) * table["tail"]
    if args.samples:
        seed = RngSeed(args.seed or 0)
        sizes = gw_sample_many(spec, seed, args.samples, cap=10 * args.mmax)
        table["mc_pmf"] = [(sizes == m).mean() for m in ms]
    write_table(table, args.out, args.format or "jsonl")
    report = {
        "overflow_mass": pmf.overflow_mass,
        "overflow_independent": pmf.overflow_independent,
        "normalization_residual": pmf.normalization_residual(),
    }
    if not spec.is_supercritical:
        M_values = [M for M in (10, 100, 1000, 10000) if M <= pmf.m_max + 1]
        report["c_hat"] = gw_tail_check(spec, M_values).c_hat if M_values else None
    sys.stderr.write(json.dumps(report) + "\n")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "percolate": cmd_percolate,
    "analyze": cmd_analyze,
    "mixing": cmd_mixing,
    "scaling": cmd_scaling,
    "tails": cmd_tails,
    "chi": cmd_chi,
    "bp": cmd_bp,
}


def cli_main(argv=None):
    """종료 코드: 0 성공, 1 입력/설정 오류, 2 상한 초과"""
    try:
        args = build_parser().parse_args(argv)
        setup_logging(args.log_level)
        return COMMANDS[args.command](args)
    except (GraphError, ValidationError, OSError, json.JSONDecodeError) as e:
        logger.error("❌ %s", e)
        return EXIT_INVALID
    except CapExceededError as e:
        logger.error("❌ %s", e)
        return EXIT_CAP
    except LabError as e:
        logger.error("❌ %s", e)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(cli_main())
