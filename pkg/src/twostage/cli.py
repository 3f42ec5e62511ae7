"""Command-line front end.

Four subcommands: ``analyze`` runs one testing procedure on a delimited
data file, ``simulate`` runs a Monte Carlo power/error study, and
``independence`` runs the between-stage diagnostic; ``adjust`` applies a
standalone multiple-testing correction to a column of p-values.

Outputs are tidy delimited tables plus a ``summary.json`` per run. Files
are written deterministically: stable row order, floats at 6 significant
digits, no timestamps, so identical configurations produce identical
bytes. Exit codes: 0 success, 2 configuration error, 3 data error,
4 runtime failure.

Values given in a ``--config`` JSON document override the corresponding
command-line flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import TrialDataset
from .diagnostics import (
    independence_across_biomarkers,
    independence_across_replicates,
)
from .errors import DataError, TwoStageError, UsageError
from .ingest import PreprocessLog, ingest, read_table
from .procedures import (
    ADJUST_METHODS,
    METHOD_LABELS,
    StageTwoReport,
    WeightScheme,
    adjust,
    ridge_rank_procedure,
    ridge_rank_screen,
    single_step,
    stage2_bonferroni,
    univariate_rank_procedure,
    univariate_rank_screen,
    univariate_threshold_screen,
)
from .ridge import RidgeConfig
from .simulate import PowerTable, ScenarioConfig, preset, run_study

METHOD_ALIASES = {
    "single_step": "single_step",
    "uni_threshold": "univariate_threshold",
    "uni_rank": "univariate_rank",
    "ridge_rank": "ridge_rank",
}

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _fmt(value) -> str:
    """Fixed 6-significant-digit float formatting; NaN prints as NA."""
    if isinstance(value, float):
        if not np.isfinite(value):
            return "NA"
        return f"{value:.6g}"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_report_csv(path: Path, report: StageTwoReport) -> None:
    header = ["index", "name", "estimate", "std_error", "statistic",
              "p_value", "threshold", "tested", "rejected", "note"]
    rows = [[r.index, r.name, r.estimate, r.std_error, r.statistic,
             r.p_value, r.threshold, r.tested, r.rejected, r.note]
            for r in report.rows]
    _write_rows(path, header, rows)


def write_power_csv(path: Path, table: PowerTable) -> None:
    header = ["scenario", "method", "power", "power_se", "fwer", "fwer_se",
              "replicates", "failures"]
    rows = [[r.scenario, r.method, r.power, r.power_se, r.fwer, r.fwer_se,
             r.replicates, r.failures] for r in table.rows]
    _write_rows(path, header, rows)


def _write_summary(out_dir: Path, payload: dict) -> None:
    def default(obj):
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        raise TypeError(f"not serializable: {type(obj)}")

    text = json.dumps(payload, sort_keys=True, indent=2, default=default,
                      allow_nan=True)
    (out_dir / "summary.json").write_text(text + "\n", encoding="utf-8")


@dataclass
class RunConfig:
    """Resolved parameters for one CLI invocation."""

    command: str
    input: str | None = None
    outcome: str | None = None
    treatment: str | None = None
    family: str = "linear"
    method: str = "single_step"
    alpha: float = 0.05
    alpha1: float = 0.05
    bucket_size: int = 5
    preset: str | None = None
    scale: str = "desk"
    methods: list[str] = field(default_factory=lambda: list(METHOD_ALIASES))
    replicates: int = 200
    seed: int = 0
    out_dir: str = "out"
    top_k: int = 10
    delimiter: str = ","
    id_column: bool = False
    mode: str = "across_biomarkers"
    biomarker_index: int = 0
    ridge: dict = field(default_factory=dict)
    scenario: dict | None = None
    grid: list[dict] | None = None

    def validate(self) -> None:
        if not 0 < self.alpha < 1:
            raise UsageError(f"alpha: must lie in (0, 1), got {self.alpha}")
        if not 0 < self.alpha1 < 1:
            raise UsageError(f"alpha1: must lie in (0, 1), got {self.alpha1}")
        if self.bucket_size < 1:
            raise UsageError("bucket_size: must be at least 1")
        if self.replicates < 1:
            raise UsageError("replicates: must be positive")
        if self.top_k < 1:
            raise UsageError("top_k: must be positive")
        if self.method not in METHOD_LABELS:
            raise UsageError(
                f"method: expected one of {sorted(METHOD_ALIASES)}, got {self.method!r}"
            )
        for m in self.methods:
            if m not in METHOD_LABELS:
                raise UsageError(f"methods: unknown procedure {m!r}")
        if self.family not in ("linear", "logistic"):
            raise UsageError(f"family: expected linear or logistic, got {self.family!r}")

    def ridge_config(self) -> RidgeConfig:
        try:
            return RidgeConfig(family=self.family, cv_seed=self.seed, **self.ridge)
        except TypeError as exc:
            raise UsageError(f"ridge: {exc}") from None

    def scheme(self) -> WeightScheme:
        return WeightScheme(bucket_size=self.bucket_size, overall_alpha=self.alpha)


def _load_config_file(path: str) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"config: cannot read {path}: {exc}") from None
    if not isinstance(payload, dict):
        raise UsageError("config: top level must be a JSON object")
    return payload


def _resolve(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=args.command)
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        setattr(cfg, key, value)
    if getattr(args, "config", None):
        overrides = _load_config_file(args.config)
        for key, value in overrides.items():
            if not hasattr(cfg, key):
                raise UsageError(f"config: unknown field {key!r}")
            setattr(cfg, key, value)
    if cfg.method in METHOD_ALIASES:
        cfg.method = METHOD_ALIASES[cfg.method]
    cfg.methods = [METHOD_ALIASES.get(m, m) for m in cfg.methods]
    cfg.validate()
    return cfg


def _load_dataset(cfg: RunConfig) -> tuple[TrialDataset, PreprocessLog]:
    if not cfg.input or not cfg.outcome or not cfg.treatment:
        raise UsageError("input, outcome, and treatment are required")
    table = read_table(cfg.input, delimiter=cfg.delimiter, id_column=cfg.id_column)
    return ingest(table, cfg.outcome, cfg.treatment, family=cfg.family)


def _scenario_from(payload: dict, label: str = "") -> ScenarioConfig:
    try:
        payload = dict(payload)
        payload["effects"] = tuple(tuple(e) for e in payload.get("effects", ()))
        if label and "label" not in payload:
            payload["label"] = label
        return ScenarioConfig(**payload)
    except TypeError as exc:
        raise UsageError(f"scenario: {exc}") from None


def run_analysis(cfg: RunConfig) -> int:
    data, log = _load_dataset(cfg)
    ridge_config = cfg.ridge_config()
    scheme = cfg.scheme()

    if cfg.method == "single_step":
        report = single_step(data, cfg.alpha)
    elif cfg.method == "univariate_threshold":
        screening = univariate_threshold_screen(data, cfg.alpha1)
        report = stage2_bonferroni(data, screening, cfg.alpha)
    elif cfg.method == "univariate_rank":
        report = univariate_rank_procedure(data, scheme)
    else:
        report = ridge_rank_procedure(data, ridge_config, scheme)

    # Stage-1 listings for both screening flavors, like a screening report
    # page: top-k by marginal p-value next to top-k by penalized coefficient.
    uni = univariate_rank_screen(data)
    ridge = ridge_rank_screen(data, ridge_config)
    k = min(cfg.top_k, data.m)
    topk_rows = []
    for rank in range(k):
        ju = int(uni.ranking[rank])
        jr = int(ridge.ranking[rank])
        topk_rows.append([
            rank + 1,
            data.names[ju], float(uni.stage1_stats[ju]),
            data.names[jr], float(ridge.stage1_stats[jr]),
        ])

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report_csv(out_dir / "report.csv", report)
    _write_rows(
        out_dir / "screening_topk.csv",
        ["rank", "univariate_name", "univariate_p", "ridge_name", "ridge_score"],
        topk_rows,
    )
    _write_summary(out_dir, {
        "command": "analyze",
        "config": asdict(cfg),
        "n": data.n,
        "m": data.m,
        "n_rejected": report.n_rejected,
        "rejected": [r.name for r in report.rows if r.rejected],
        "caveat": report.caveat,
        "preprocessing": log.lines(),
        "column_counts": log.counts(),
    })
    return EXIT_OK


def run_simulation(cfg: RunConfig) -> int:
    if cfg.grid:
        grid = [_scenario_from(s, label=f"point{i}") for i, s in enumerate(cfg.grid)]
    elif cfg.scenario:
        grid = [_scenario_from(cfg.scenario, label="scenario")]
    elif cfg.preset:
        grid = list(preset(cfg.preset, cfg.scale))
    else:
        raise UsageError("simulate needs a preset, a scenario, or a grid")

    table = run_study(
        grid,
        cfg.methods,
        replicates=cfg.replicates,
        base_seed=cfg.seed,
        overall_alpha=cfg.alpha,
        alpha1=cfg.alpha1,
        scheme=cfg.scheme(),
        ridge_config=cfg.ridge_config(),
    )
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_power_csv(out_dir / "power_table.csv", table)
    _write_summary(out_dir, {
        "command": "simulate",
        "config": asdict(cfg),
        "scenarios": [c.label for c in grid],
        "methods": cfg.methods,
    })
    return EXIT_OK


def run_independence(cfg: RunConfig) -> int:
    if cfg.mode == "across_biomarkers":
        data, _ = _load_dataset(cfg)
        report = independence_across_biomarkers(data, cfg.ridge_config())
    elif cfg.mode == "across_replicates":
        if not cfg.scenario:
            raise UsageError("across_replicates needs a scenario in --config")
        payload = dict(cfg.scenario)
        payload.setdefault("seed", cfg.seed)
        scenario = _scenario_from(payload)
        report = independence_across_replicates(
            scenario, cfg.biomarker_index, cfg.replicates, cfg.ridge_config()
        )
    else:
        raise UsageError(
            f"mode: expected across_biomarkers or across_replicates, got {cfg.mode!r}"
        )

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_rows(
        out_dir / "independence.csv",
        ["mode", "estimate", "p_value", "ci_low", "ci_high", "n_pairs"],
        [[report.mode, report.estimate, report.p_value,
          report.ci_low, report.ci_high, report.n_pairs]],
    )
    _write_summary(out_dir, {
        "command": "independence",
        "config": asdict(cfg),
        "estimate": report.estimate,
        "ci": [report.ci_low, report.ci_high],
        "covers_zero": bool(report.ci_low <= 0.0 <= report.ci_high),
    })
    return EXIT_OK


def run_adjust(cfg: RunConfig, method: str) -> int:
    if not cfg.input:
        raise UsageError("adjust needs an input file with one p-value column")
    lines = Path(cfg.input).read_text(encoding="utf-8").split()
    if not lines:
        raise DataError(f"{cfg.input}: empty file")
    try:
        float(lines[0])
        values = lines
    except ValueError:
        values = lines[1:]  # first token is a header label
    try:
        pvalues = np.array([float(v) for v in values])
    except ValueError as exc:
        raise DataError(f"{cfg.input}: {exc}") from None

    result = adjust(pvalues, method, cfg.alpha)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_rows(
        out_dir / "adjusted.csv",
        ["index", "p_value", "threshold", "rejected"],
        [[i, float(p), float(t), bool(r)]
         for i, (p, t, r) in enumerate(zip(pvalues, result.thresholds, result.reject))],
    )
    _write_summary(out_dir, {
        "command": "adjust",
        "config": asdict(cfg),
        "method": method,
        "n_rejected": int(result.reject.sum()),
    })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twostage",
        description="Two-stage biomarker-treatment interaction testing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--alpha", type=float, help="overall family-wise level")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--out-dir", dest="out_dir", help="output directory")
        p.add_argument("--config", help="JSON config file; overrides flags")

    def data_flags(p):
        p.add_argument("--input", help="delimited input file")
        p.add_argument("--outcome", help="outcome column name")
        p.add_argument("--treatment", help="treatment column name")
        p.add_argument("--family", choices=("linear", "logistic"))
        p.add_argument("--delimiter", help="cell delimiter, default comma")
        p.add_argument("--id-column", dest="id_column", action="store_const",
                       const=True, help="ignore the first column (row ids)")

    p = sub.add_parser("analyze", help="run one procedure on a data file")
    data_flags(p)
    p.add_argument("--method", choices=sorted(METHOD_ALIASES))
    p.add_argument("--alpha1", type=float, help="stage-1 screening level")
    p.add_argument("--bucket-size", dest="bucket_size", type=int)
    p.add_argument("--top-k", dest="top_k", type=int)
    common(p)

    p = sub.add_parser("simulate", help="Monte Carlo power and error study")
    p.add_argument("--preset", help="named scenario grid, e.g. fig1b")
    p.add_argument("--scale", choices=("desk", "full"))
    p.add_argument("--methods", type=lambda s: s.split(","),
                   help="comma-separated procedures, default all four")
    p.add_argument("--replicates", type=int)
    p.add_argument("--alpha1", type=float)
    p.add_argument("--bucket-size", dest="bucket_size", type=int)
    common(p)

    p = sub.add_parser("independence", help="between-stage independence check")
    data_flags(p)
    p.add_argument("--mode", choices=("across_biomarkers", "across_replicates"))
    p.add_argument("--biomarker-index", dest="biomarker_index", type=int)
    p.add_argument("--replicates", type=int)
    common(p)

    p = sub.add_parser("adjust", help="adjust a column of p-values")
    p.add_argument("--input", help="file with one p-value column")
    p.add_argument("--method", choices=ADJUST_METHODS, required=True)
    common(p)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "adjust":
            method = args.method
            args.method = None  # correction name, not a procedure name
            cfg = _resolve(args)
            return run_adjust(cfg, method)
        cfg = _resolve(args)
        if args.command == "analyze":
            return run_analysis(cfg)
        if args.command == "simulate":
            return run_simulation(cfg)
        return run_independence(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TwoStageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
