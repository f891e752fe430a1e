"""Command-line pipeline: ingest -> decompose -> panel -> estimate -> report.

Subcommands share the global flags --config, --threads, --seed and
--allow-slack.  Exit codes: 0 success, 2 data or structural error,
3 numerical error, 4 configuration error.

All stages write into the config's out_dir with fixed file names:
vax_<year>.csv and report_<year>.txt from decompose, panel.csv and
panel_ledger.csv from panel, fit_<spec>.csv, summary.csv and table_*.txt
from estimate.  Outputs are byte-deterministic for identical inputs,
independent of the thread count.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import hdfe, iotable, panel, report, synth
from .config import PipelineConfig, parse_years
from .errors import VaxhoError

logger = logging.getLogger(__name__)


def _load_config(args) -> PipelineConfig:
    if not args.config:
        raise VaxhoError("this subcommand requires --config", exit_code=4)
    cfg = PipelineConfig.from_file(args.config)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _pool_map(fn, items, threads: int):
    """Map preserving order; exceptions surface in item order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        futures = [ex.submit(fn, item) for item in items]
        return [f.result() for f in futures]


def _sanitize(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.+-]", "_", name)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    """Validate all configured inputs and print a short census of each."""
    cfg = _load_config(args)
    cfg.check_inputs()

    def census(year: int) -> str:
        table = iotable.load_wiot(cfg.wiot_path(year), year,
                                  balance_tol=cfg.tolerances["balance_tol"])
        worst = table.row_balance_residuals().max()
        return (f"wiot {year}: {len(table.countries)} countries x "
                f"{len(table.industries)} industries, worst row balance {worst:.3e}")

    for line in _pool_map(census, list(cfg.years), cfg.threads):
        print(line)
    records = panel.load_sea(cfg.sea)
    print(f"sea: {len(records)} records, years "
          f"{min(r.year for r in records)}-{max(r.year for r in records)}")
    if cfg.concordance is not None:
        mapping = panel.load_concordance(cfg.concordance)
        print(f"concordance: {len(mapping)} source industries")
    return 0


def cmd_decompose(args) -> int:
    """Per year: technical system, Leontief solve, VX file plus report."""
    cfg = _load_config(args)
    cfg.check_inputs()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    tol = cfg.tolerances

    def one_year(year: int) -> tuple[int, bool]:
        table = iotable.load_wiot(cfg.wiot_path(year), year, balance_tol=tol["balance_tol"])
        system = iotable.build_tech_system(
            table, output_floor=tol["output_floor"], coeff_tol=tol["coeff_tol"])
        vx = iotable.compute_vax(
            system, table, check=not args.allow_slack,
            identity_tol=tol["identity_tol"], solve_tol=tol["solve_tol"])
        iotable.write_vax(vx, cfg.out_dir / f"vax_{year}.csv")
        rep = iotable.accounting_report(
            table, vx, identity_tol=tol["identity_tol"], balance_tol=tol["balance_tol"],
            output_floor=tol["output_floor"], coeff_tol=tol["coeff_tol"])
        (cfg.out_dir / f"report_{year}.txt").write_text(rep.format(), encoding="utf-8")
        return year, rep.ok

    flagged = [y for y, ok in _pool_map(one_year, list(cfg.years), cfg.threads) if not ok]
    for year in flagged:
        print(f"decompose {year}: accounting flags raised, see report_{year}.txt")
    print(f"decompose: wrote {len(cfg.years)} VX files to {cfg.out_dir}")
    return 0


def cmd_panel(args) -> int:
    """Assemble the bilateral panel from decompose outputs and the SEA."""
    cfg = _load_config(args)
    records = panel.load_sea(cfg.sea)
    if cfg.concordance is not None:
        concordance = panel.load_concordance(cfg.concordance)
    else:
        concordance = panel.identity_concordance(sorted({r.industry for r in records}))

    def one_year(year: int):
        path = cfg.out_dir / f"vax_{year}.csv"
        if not path.is_file():
            raise VaxhoError(f"missing {path}; run decompose first", exit_code=4)
        vx = iotable.read_vax(path)
        return panel.join_sea(panel.long_format(vx), records, concordance, year)

    pieces = _pool_map(one_year, sorted(cfg.years), cfg.threads)
    ds = panel.assemble_panel(pieces)
    panel.write_panel(ds, cfg.out_dir / "panel.csv")
    with open(cfg.out_dir / "panel_ledger.csv", "w", encoding="utf-8") as fh:
        fh.write("rule,count\n")
        for key, count in ds.ledger.items():
            fh.write(f"{key},{count}\n")
    print(f"panel: {ds.ledger['raw']} rows ({ds.ledger['clean']} clean) "
          f"-> {cfg.out_dir / 'panel.csv'}")
    return 0


def _estimate_jobs(cfg: PipelineConfig, df):
    """Run the configured table jobs; returns (ordered fits, table texts)."""
    tol = cfg.tolerances
    quartet = [
        replace(s, vcov=cfg.vcov, demean_tol=tol["demean_tol"],
                max_iter=tol["max_iter"], min_obs=cfg.min_obs)
        for s in hdfe.spec_quartet()
    ]
    base = replace(quartet[0], name="section")
    fits: list = []
    tables: dict[str, str] = {}
    if "quartet" in cfg.tables:
        main_fits = _pool_map(lambda s: hdfe.estimate(df, s), quartet, cfg.threads)
        fits.extend(main_fits)
        if main_fits:
            tables["table_main.txt"] = report.format_table(
                main_fits, "Dependent variable: log value-added exports")
    if "sections" in cfg.tables:
        section_fits = hdfe.estimate_by_group(df, base, "broad_industry", threads=cfg.threads)
        fits.extend(section_fits)
        if section_fits:
            tables["table_sections.txt"] = report.format_table(
                section_fits, "By broad industry section")
    if "years" in cfg.tables:
        year_fits = hdfe.estimate_by_group(
            df, replace(base, name="year"), "year", threads=cfg.threads)
        fits.extend(year_fits)
        if year_fits:
            tables["table_years.txt"] = report.format_table(year_fits, "By year")
    return fits, tables


def cmd_estimate(args) -> int:
    """Run the configured fixed-effects specifications on the panel."""
    cfg = _load_config(args)
    if args.years:
        cfg = replace(cfg, years=parse_years(args.years))
    panel_path = cfg.out_dir / "panel.csv"
    if not panel_path.is_file():
        raise VaxhoError(f"missing {panel_path}; run panel first", exit_code=4)
    ds = panel.read_panel(panel_path)
    df = ds.df[ds.df["t"].isin(cfg.years)]
    fits, tables = _estimate_jobs(cfg, df)
    for fit in fits:
        report.write_fit_csv(fit, cfg.out_dir / f"fit_{_sanitize(fit.name)}.csv")
    report.write_summary_csv(fits, cfg.out_dir / "summary.csv")
    for name, text in tables.items():
        (cfg.out_dir / name).write_text(text, encoding="utf-8")
    print(f"estimate: {len(fits)} fits -> {cfg.out_dir}")
    return 0


def cmd_synth(args) -> int:
    """Emit a synthetic input bundle runnable by the other subcommands."""
    kappa: float | tuple = 0.0
    if args.kappa:
        parts = [float(p) for p in args.kappa.split(",")]
        kappa = parts[0] if len(parts) == 1 else tuple(parts)
    params = synth.WorldParams(
        n_countries=args.countries,
        n_industries=args.industries,
        years=parse_years(args.years),
        kappa=kappa,
        beta1=args.beta1,
        seed=args.seed if args.seed is not None else 12345,
    )
    paths = synth.emit_bundle(params, args.out)
    print(f"synth: wrote {len(paths)} files to {args.out}")
    return 0


def cmd_report(args) -> int:
    """Rebuild the text tables from stored fit CSVs."""
    cfg = _load_config(args)
    summary = cfg.out_dir / "summary.csv"
    if not summary.is_file():
        raise VaxhoError(f"missing {summary}; run estimate first", exit_code=4)
    stored = report.read_fits(
        summary, lambda name: cfg.out_dir / f"fit_{_sanitize(name)}.csv")
    groups = {
        "table_main.txt": ("Dependent variable: log value-added exports",
                           [f for f in stored if not f.name.startswith(("section:", "year:"))]),
        "table_sections.txt": ("By broad industry section",
                               [f for f in stored if f.name.startswith("section:")]),
        "table_years.txt": ("By year", [f for f in stored if f.name.startswith("year:")]),
    }
    written = 0
    for name, (title, fits) in groups.items():
        if fits:
            (cfg.out_dir / name).write_text(report.format_table(fits, title), encoding="utf-8")
            written += 1
    print(f"report: rebuilt {written} tables in {cfg.out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config file")
    common.add_argument("--threads", type=int, default=None, help="worker threads")
    common.add_argument("--seed", type=int, default=None, help="RNG seed override")
    common.add_argument("--allow-slack", action="store_true",
                        help="report tolerance breaches instead of failing")

    parser = argparse.ArgumentParser(
        prog="vaxho",
        description="Value-added export decomposition and factor-intensity regressions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", parents=[common],
                   help="validate configured inputs").set_defaults(func=cmd_ingest)
    sub.add_parser("decompose", parents=[common],
                   help="value-added export matrices per year").set_defaults(func=cmd_decompose)
    sub.add_parser("panel", parents=[common],
                   help="assemble the bilateral panel").set_defaults(func=cmd_panel)
    pe = sub.add_parser("estimate", parents=[common],
                        help="run the fixed-effects specifications")
    pe.add_argument("--years", default=None,
                    help="restrict the sample to these years (overrides config)")
    pe.set_defaults(func=cmd_estimate)
    sub.add_parser("report", parents=[common],
                   help="rebuild text tables from stored fits").set_defaults(func=cmd_report)

    ps = sub.add_parser("synth", parents=[common], help="emit a synthetic input bundle")
    ps.add_argument("--out", required=True, help="bundle output directory")
    ps.add_argument("--countries", type=int, default=6)
    ps.add_argument("--industries", type=int, default=8)
    ps.add_argument("--years", default="2000-2002",
                    help='"2000-2005", comma list, or single year')
    ps.add_argument("--kappa", default="",
                    help="planted interaction coefficient, scalar or per-industry comma list")
    ps.add_argument("--beta1", type=float, default=-0.3)
    ps.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VaxhoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
