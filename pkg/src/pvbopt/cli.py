"""Command-line entry point: validate inputs, run scenarios, re-aggregate, audit tariff paths.

Exit codes: 0 success, 1 finished with some failed groups, 2 fatal (bad input,
too many failures, unexpected error).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import __version__
from .domain import CANTONS, CustomerGroup, ValidationError, build_groups, read_rooftops, region_code, region_index
from .economics import CostTables, read_cost_tables
from .reference import check_table
from .reporting import (
    ResidualAccumulator,
    aggregate,
    atomic_write,
    read_solutions_csv,
    residual_report,
    row_from_result,
    write_aggregate_csv,
    write_curves_csv,
    write_pbp_curves_svg,
    write_residual_csv,
    write_residual_summary_csv,
    write_residual_week_svg,
    write_solutions_csv,
)
from .scenarios import (
    BASE_YEAR,
    DEFAULT_WHOLESALE_AVG_2020,
    TABLE_YEARS,
    ScenarioData,
    ScenarioSpec,
    default_dataset_dir,
    injection_path,
    load_dataset,
    load_scenarios,
    read_injection_table,
    run_scenario,
)
from .profiles import parse_weekday

log = logging.getLogger("pvbopt")

EXIT_OK, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2
LAST_YEAR = 2050


def _bundled(name: str) -> Path:
    return Path(str(resources.files("pvbopt") / "data" / name))


@dataclass(frozen=True)
class RunConfig:
    """Everything a run depends on. Output directory and worker count do not affect results."""

    data_dir: Path
    rooftops: Path
    retail: Path
    injection: Path
    costs: Path
    scenarios: tuple[str, ...] = ("baseline",)
    spec_file: Path | None = None
    years: tuple[int, ...] = TABLE_YEARS
    regions: tuple[str, ...] | None = None  # None selects every region present in the rooftops
    thresholds: tuple[float, ...] = (10.0, 15.0)
    jobs: int = 1
    out: Path = Path("out")
    wholesale_avg_2020: float = DEFAULT_WHOLESALE_AVG_2020
    start_weekday: int = 0
    max_fail_fraction: float = 0.5
    exhaustive: bool = False
    plots: bool = False
    dump_lp: Path | None = None
    allow_custom_tables: bool = False

    def __post_init__(self):
        if self.jobs < 1:
            raise ValidationError("jobs must be >= 1")
        if not 0 <= self.max_fail_fraction <= 1:
            raise ValidationError("max_fail_fraction must lie in [0, 1]")
        if not self.thresholds or any(not t > 0 for t in self.thresholds):
            raise ValidationError("payback thresholds must be positive")
        if not 0 <= self.start_weekday <= 6:
            raise ValidationError("start_weekday must lie in 0..6")
        if not self.wholesale_avg_2020 >= 0:
            raise ValidationError("wholesale_avg_2020 must be >= 0")

    @classmethod
    def with_defaults(cls, data_dir: str | Path | None = None, **kw) -> "RunConfig":
        root = Path(data_dir) if data_dir is not None else default_dataset_dir()
        kw.setdefault("rooftops", root / "rooftops.csv")
        kw.setdefault("retail", _bundled("retail_tariff.csv"))
        kw.setdefault("injection", _bundled("injection_tariff.csv"))
        kw.setdefault("costs", _bundled("costs.csv"))
        return cls(data_dir=root, **{k: (Path(v) if k in _PATH_FIELDS and v is not None else v) for k, v in kw.items()})

    def input_files(self) -> list[Path]:
        files = [self.rooftops, self.retail, self.injection, self.costs]
        if self.spec_file is not None:
            files.append(self.spec_file)
        files += sorted(p for p in self.data_dir.rglob("*.csv") if p.resolve() != self.rooftops.resolve())
        return files

    def result_relevant(self) -> dict:
        d = asdict(self)
        for k in ("jobs", "out", "dump_lp", "plots", "data_dir", "rooftops", "retail", "injection", "costs", "spec_file"):
            d.pop(k)
        return d


_PATH_FIELDS = {"data_dir", "rooftops", "retail", "injection", "costs", "spec_file", "out", "dump_lp"}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config: RunConfig) -> str:
    """Digest of every result-relevant setting and the content (not location) of every input file."""
    h = hashlib.sha256(json.dumps(config.result_relevant(), sort_keys=True, default=str).encode())
    for p in config.input_files():
        rel = p.relative_to(config.data_dir).as_posix() if p.is_relative_to(config.data_dir) else p.name
        h.update(f"\n{rel}:{_sha256(p)}".encode())
    return h.hexdigest()


def git_revision() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


# --- validation -------------------------------------------------------------------


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    groups: list[CustomerGroup] = field(default_factory=list)
    specs: list[ScenarioSpec] = field(default_factory=list)
    data: ScenarioData | None = None
    tables: CostTables | None = None
    records: int = 0
    rejected: int = 0

    @property
    def ok(self) -> bool:
        return not self.errors

    def render(self) -> str:
        lines = [f"error: {e}" for e in self.errors] + [f"warning: {w}" for w in self.warnings]
        lines.append(
            f"{'OK' if self.ok else 'INVALID'}: {self.records} rooftops accepted, {self.rejected} rejected, "
            f"{len(self.groups)} groups selected, {len(self.specs)} scenario(s)"
        )
        return "\n".join(lines)


def _attempt(report: ValidationReport, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (ValidationError, ValueError, KeyError, OSError) as exc:
        report.errors.append(str(exc))
        return None


def validate_inputs(config: RunConfig) -> ValidationReport:
    """Check every input before anything is solved; all problems are collected, not just the first."""
    rep = ValidationReport()
    required = [config.rooftops, config.retail, config.injection, config.costs, config.data_dir / "wholesale.csv"]
    if config.spec_file is not None:
        required.append(config.spec_file)
    missing = [str(p) for p in required if not p.is_file()]
    if missing:
        rep.errors += [f"{p}: file not found" for p in missing]
        return rep

    for table, path in (("injection_tariff", config.injection), ("retail_tariff", config.retail), ("costs", config.costs)):
        for issue in check_table(table, path):
            (rep.warnings if config.allow_custom_tables else rep.errors).append(issue)

    for y in config.years:
        if not BASE_YEAR <= y <= LAST_YEAR:
            rep.errors.append(f"year {y} outside {BASE_YEAR}..{LAST_YEAR}")
        elif (y - BASE_YEAR) % 5:
            rep.warnings.append(f"year {y} is between table years; costs are interpolated")
    if config.regions is not None:
        for r in config.regions:
            _attempt(rep, region_index, r)

    specs = _attempt(rep, load_scenarios, config.spec_file)
    if specs is not None:
        lookup = {k.lower(): v for k, v in specs.items()}
        for sid in config.scenarios:
            if sid.lower() in lookup:
                rep.specs.append(lookup[sid.lower()])
            else:
                rep.errors.append(f"unknown scenario {sid!r}; known: {', '.join(specs)}")
    rep.tables = _attempt(rep, read_cost_tables, config.costs)
    if rep.tables is not None:
        for spec in rep.specs:
            _attempt(rep, spec.costs, rep.tables)
    rep.data = _attempt(
        rep, load_dataset, config.data_dir, config.retail, config.injection, config.start_weekday, config.wholesale_avg_2020
    )
    ingest = _attempt(rep, read_rooftops, config.rooftops)
    if ingest is None or rep.data is None:
        return rep
    rep.records, rep.rejected = len(ingest.accepted), len(ingest.rejected)
    if ingest.rejected:
        rep.warnings.append(f"{config.rooftops}: {len(ingest.rejected)} out-of-domain records skipped "
                            f"(first at line {ingest.rejected[0][0]}: {ingest.rejected[0][1]})")
    groups = build_groups(ingest.accepted)
    if config.regions is not None:
        wanted = {region_index(r) for r in config.regions if _quiet_index(r)}
        groups = [g for g in groups if g.region_id in wanted]
    rep.groups = groups

    data = rep.data
    if data.national_load is None:
        rep.warnings.append(f"{config.data_dir}: no national_load.csv; residual load is skipped")
    needs_aggregate = any(s.load_source == "aggregate" for s in rep.specs)
    needs_individual = any(s.load_source == "individual" for s in rep.specs)
    for code in sorted({region_code(g.region_id) for g in groups}):
        if code not in data.irradiance:
            rep.errors.append(f"{config.data_dir / 'irradiance' / (code + '.csv')}: missing irradiance profile")
        if needs_aggregate and code not in data.aggregate_load:
            rep.errors.append(f"{config.data_dir / 'aggregate_load' / (code + '.csv')}: missing aggregate load profile")
        if code not in data.injection.values:
            rep.errors.append(f"{config.injection}: no row for {code}")
        if code not in data.retail.table:
            rep.errors.append(f"{config.retail}: no row for {code}")
    if needs_individual:
        for b in sorted({g.load_bin for g in groups}):
            if b not in data.load_profiles:
                rep.errors.append(f"{config.data_dir / 'load_profiles' / f'L{b}.csv'}: missing load profile")
    return rep


def _quiet_index(r) -> bool:
    try:
        region_index(r)
        return True
    except ValidationError:
        return False


# --- run --------------------------------------------------------------------------


def _manifest(config: RunConfig, rep: ValidationReport, status: str, items: int, failed: list[dict],
              outputs: dict[str, str]) -> dict:
    return {
        "version": __version__,
        "git_revision": git_revision(),
        "config_hash": config_hash(config),
        "status": status,
        "scenarios": [s.id for s in rep.specs],
        "years": sorted(set(config.years)),
        "regions": sorted({region_code(g.region_id) for g in rep.groups}),
        "groups": len(rep.groups),
        "items": items,
        "failed": failed,
        "outputs": outputs,
    }


def _write_json(path: Path, obj: dict) -> None:
    with atomic_write(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def run(config: RunConfig) -> int:
    t0 = time.perf_counter()
    rep = validate_inputs(config)
    for w in rep.warnings:
        log.warning(w)
    if not rep.ok:
        for e in rep.errors:
            log.error(e)
        return EXIT_FATAL
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    if config.dump_lp is not None:
        config.dump_lp.mkdir(parents=True, exist_ok=True)
    years = sorted(set(config.years))
    total = len(rep.groups) * len(years) * len(rep.specs)
    if total == 0:
        _write_json(out / "manifest.json", _manifest(config, rep, "empty", 0, [], {}))
        log.info("nothing selected; wrote empty manifest")
        return EXIT_OK

    rows, failed = [], []
    accs: dict[str, ResidualAccumulator] = {}
    budget = config.max_fail_fraction * total
    done = 0
    for spec in rep.specs:
        for res in run_scenario(spec, rep.groups, years, rep.data, rep.tables, jobs=config.jobs,
                                exhaustive=config.exhaustive, dump_dir=config.dump_lp):
            done += 1
            rows.append(row_from_result(res))
            if res.ok:
                accs.setdefault(f"{spec.id}_{res.year}", ResidualAccumulator()).add_result(res)
            else:
                failed.append({"scenario": spec.id, "group": res.group.label, "year": res.year, "error": res.error})
                if len(failed) > budget:
                    log.error("%d of %d solves failed, above the allowed fraction %.2f; aborting",
                              len(failed), total, config.max_fail_fraction)
                    _write_json(out / "manifest.json", _manifest(config, rep, "aborted", total, failed, {}))
                    return EXIT_FATAL
            if done % 50 == 0 or done == total:
                log.info("%d/%d solves done (%.0f s)", done, total, time.perf_counter() - t0)

    report = aggregate(rows, rep.groups, config.thresholds)
    files = {"solutions": "solutions.csv", "aggregate": "aggregate.csv", "pbp_curves": "pbp_curves.csv"}
    write_solutions_csv(out / files["solutions"], rows)
    write_aggregate_csv(out / files["aggregate"], report)
    write_curves_csv(out / files["pbp_curves"], report)
    national = rep.data.national_load
    if national is not None and accs:
        residuals = {k: residual_report(national, a) for k, a in accs.items()}
        files["residual_load"] = "residual_load.csv"
        files["residual_summary"] = "residual_summary.csv"
        write_residual_csv(out / files["residual_load"], residuals, national)
        write_residual_summary_csv(out / files["residual_summary"], residuals)
        if config.plots:
            files["residual_week_svg"] = "residual_week.svg"
            write_residual_week_svg(out / files["residual_week_svg"], national, residuals)
    if config.plots:
        for spec in rep.specs:
            for code in sorted({s.region for s in report.summaries if s.scenario == spec.id}):
                name = f"pbp_curves_{spec.id}_{code}.svg"
                files[f"pbp_svg_{spec.id}_{code}"] = name
                write_pbp_curves_svg(out / name, report, spec.id, code)
    outputs = {name: _sha256(out / name) for name in sorted(files.values())}
    status = "partial" if failed else "ok"
    _write_json(out / "manifest.json", _manifest(config, rep, status, total, failed, outputs))
    # wall time lives apart from the manifest so identical runs give identical manifests
    _write_json(out / "run_info.json", {"wall_time_s": round(time.perf_counter() - t0, 3), "jobs": config.jobs,
                                        "started": time.strftime("%Y-%m-%dT%H:%M:%S")})
    log.info("wrote %s (%d rows, %d failed) in %.1f s", out, len(rows), len(failed), time.perf_counter() - t0)
    return EXIT_PARTIAL if failed else EXIT_OK


def reaggregate(solutions: Sequence[Path], out: Path, thresholds: Sequence[float]) -> int:
    rows = []
    for p in solutions:
        rows += read_solutions_csv(p)
    report = aggregate(rows, thresholds=thresholds)
    write_aggregate_csv(out / "aggregate.csv", report)
    write_curves_csv(out / "pbp_curves.csv", report)
    return EXIT_PARTIAL if any(not r.ok for r in rows) else EXIT_OK


def write_paths(out, specs: Sequence[ScenarioSpec], regions: Sequence[str], years: Sequence[int],
                wholesale_avg_2020: float, injection_file: Path) -> None:
    table = read_injection_table(injection_file)
    w = csv.writer(out)
    w.writerow(["scenario", "region", "base"] + [str(y) for y in years])
    for spec in specs:
        for code in regions:
            p = injection_path(code, spec, years, wholesale_avg_2020, table)
            w.writerow([spec.id, p.region, f"{p.base:g}"]
                       + ["hourly" if p.tariffs[y] is None else f"{p.tariffs[y]:.4f}" for y in years])


# --- argument parsing --------------------------------------------------------------


def _split(values: Sequence[str] | None) -> tuple[str, ...] | None:
    if values is None:
        return None
    return tuple(v.strip() for item in values for v in item.split(",") if v.strip())


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data-dir", type=Path, help="profile directory (default: $PVBOPT_DATA or the bundled synthetic set)")
    p.add_argument("--rooftops", type=Path, help="rooftop CSV (default: <data-dir>/rooftops.csv)")
    p.add_argument("--retail", type=Path, help="retail tariff table")
    p.add_argument("--injection", type=Path, help="injection tariff table")
    p.add_argument("--costs", type=Path, help="cost table")
    p.add_argument("--scenario", action="append", help="scenario id; repeatable or comma separated (default baseline)")
    p.add_argument("--spec-file", type=Path, help="custom scenario file instead of the canonical set")
    p.add_argument("--year", action="append", type=int, help="investment year; repeatable (default 2020..2050 step 5)")
    p.add_argument("--region", action="append",
                   help="region code; repeatable or comma separated (default: all regions in the rooftops)")
    p.add_argument("--wholesale-avg-2020", type=float, default=DEFAULT_WHOLESALE_AVG_2020,
                   help="average 2020 wholesale price behind the injection floor, cent/kWh")
    p.add_argument("--start-weekday", default="mon", help="weekday of 1 January (name or 0=Mon..6=Sun)")
    p.add_argument("--allow-custom-tables", action="store_true",
                   help="downgrade published-table checksum mismatches to warnings")


def _config_from_args(args) -> RunConfig:
    kw = dict(
        scenarios=_split(args.scenario) or ("baseline",),
        spec_file=args.spec_file,
        years=tuple(args.year) if args.year else TABLE_YEARS,
        regions=_split(args.region),
        wholesale_avg_2020=args.wholesale_avg_2020,
        start_weekday=parse_weekday(args.start_weekday),
        allow_custom_tables=args.allow_custom_tables,
    )
    for name in ("rooftops", "retail", "injection", "costs"):
        if getattr(args, name) is not None:
            kw[name] = getattr(args, name)
    for name in ("thresholds", "jobs", "out", "max_fail_fraction", "exhaustive", "plots", "dump_lp"):
        if hasattr(args, name):
            kw[name] = getattr(args, name)
    return RunConfig.with_defaults(args.data_dir, **kw)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pvb-opt", description="Rooftop PV and battery investment optimisation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check all inputs without solving")
    _add_common(p)

    p = sub.add_parser("run", help="solve every selected (scenario, group, year) and write reports")
    _add_common(p)
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--pbp-thresholds", dest="thresholds", type=float, nargs="+", default=[10.0, 15.0])
    p.add_argument("--max-fail-fraction", type=float, default=0.5,
                   help="abort when more than this fraction of solves fail")
    p.add_argument("--exhaustive", action="store_true", help="solve every band subset, no pruning")
    p.add_argument("--plots", action="store_true", help="also write SVG plots")
    p.add_argument("--dump-lp", type=Path, help="write every LP to this directory for offline inspection")

    p = sub.add_parser("aggregate", help="re-aggregate stored solutions.csv files")
    p.add_argument("solutions", type=Path, nargs="+")
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--pbp-thresholds", dest="thresholds", type=float, nargs="+", default=[10.0, 15.0])

    p = sub.add_parser("paths", help="print injection tariff paths for audit")
    p.add_argument("--scenario", action="append")
    p.add_argument("--spec-file", type=Path)
    p.add_argument("--region", action="append", help="default: all 26 regions")
    p.add_argument("--year", action="append", type=int)
    p.add_argument("--wholesale-avg-2020", type=float, default=DEFAULT_WHOLESALE_AVG_2020)
    p.add_argument("--injection", type=Path, default=None)
    p.add_argument("--out", type=Path, help="CSV file (default stdout)")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "validate":
            rep = validate_inputs(_config_from_args(args))
            print(rep.render())
            return EXIT_OK if rep.ok else EXIT_FATAL
        if args.command == "run":
            return run(_config_from_args(args))
        if args.command == "aggregate":
            args.out.mkdir(parents=True, exist_ok=True)
            return reaggregate(args.solutions, args.out, args.thresholds)
        if args.command == "paths":
            specs = load_scenarios(args.spec_file)
            lookup = {k.lower(): v for k, v in specs.items()}
            ids = _split(args.scenario) or ("baseline",)
            unknown = [s for s in ids if s.lower() not in lookup]
            if unknown:
                raise ValidationError(f"unknown scenario(s) {unknown}")
            regions = [CANTONS[region_index(r) - 1] for r in (_split(args.region) or CANTONS)]
            years = args.year or list(TABLE_YEARS)
            injection = args.injection or _bundled("injection_tariff.csv")
            if args.out is None:
                write_paths(sys.stdout, [lookup[s.lower()] for s in ids], regions, years, args.wholesale_avg_2020, injection)
            else:
                with atomic_write(args.out) as fh:
                    write_paths(fh, [lookup[s.lower()] for s in ids], regions, years, args.wholesale_avg_2020, injection)
            return EXIT_OK
    except (ValidationError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_FATAL
    except Exception:  # noqa: BLE001 - last-resort guard so scripts see the fatal code
        log.exception("unexpected failure")
        return EXIT_FATAL
    return EXIT_FATAL


if __name__ == "__main__":
    raise SystemExit(main())
