"""Command-line surface: simulate, fit and plot.

simulate  runs the replication harness on one of the built-in examples
          and writes simreport.csv.
fit       runs the posterior dose-response analysis on a panel CSV,
          driven by a versioned JSON config, writing apo_samples.csv
          and apo_summary.csv.
plot      renders apo_samples.csv as a static SVG curve with a 95%
          credible band.

Every command writes resolved-config.json next to its outputs with all
effective settings made explicit. Exit codes: 0 success, 1 runtime
failure, 2 usage or config error. Numbers are printed with 17
significant digits so files round-trip exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .doseresponse import EstimatorConfig, posterior_apo, summarize
from .gee import WorkingCorrelation
from .panel import (
    PanelDataset,
    Transform,
    apply_transform,
    parse_panel_csv,
    write_panel_csv,  # noqa: F401  (round-trip partner of parse_panel_csv)
)
from .simlab import DgpSpec, run_replications, write_simreport_csv
from .svg import dose_response_svg

__all__ = ["RunConfig", "ConfigError", "main", "cmd_simulate", "cmd_fit", "cmd_plot"]

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Bad config file: wrong version, unknown or missing keys."""


_ESTIMATOR_KEYS = {
    "method", "resampler", "alpha", "j_target", "epsilon", "n_draws", "seed",
    "spline_interior_knots", "family", "working_correlation", "rho", "dose_grid",
    "gps_kind", "stabilize", "synthetic_outcomes",
}
_SCHEMA_KEYS = {"unit_id", "time", "outcome", "dose", "covariates"}
_TOP_KEYS = {"version", "estimator", "schema", "transforms", "threads", "out_dir"}


@dataclass(frozen=True)
class RunConfig:
    """Everything one `fit` run needs: estimator, data schema, transforms."""

    estimator: EstimatorConfig
    schema: dict
    transforms: tuple = ()
    threads: int | None = None
    out_dir: str = "."
    version: int = CONFIG_VERSION

    def resolved_dict(self) -> dict:
        est = self.estimator
        return {
            "version": self.version,
            "estimator": {
                "method": est.method,
                "resampler": est.resampler,
                "alpha": est.alpha,
                "j_target": est.j_target,
                "epsilon": est.epsilon,
                "n_draws": est.n_draws,
                "seed": est.seed,
                "spline_interior_knots": est.spline_interior_knots,
                "family": est.family,
                "working_correlation": est.corr.tag,
                "rho": est.corr.rho,
                "dose_grid": list(est.dose_grid),
                "gps_kind": est.resolved_gps_kind,
                "stabilize": est.stabilize,
                "synthetic_outcomes": est.synthetic_outcomes,
            },
            "schema": {
                "unit_id": self.schema["unit_id"],
                "time": self.schema["time"],
                "outcome": self.schema["outcome"],
                "dose": self.schema["dose"],
                "covariates": list(self.schema.get("covariates", [])),
            },
            "transforms": [dict(t) for t in self.transforms],
            "threads": self.threads,
            "out_dir": self.out_dir,
        }


def _reject_unknown(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def run_config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "config")
    if doc.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}, got {doc.get('version')!r}")
    if "estimator" not in doc or "schema" not in doc:
        raise ConfigError("config requires 'estimator' and 'schema' sections")

    est_doc = doc["estimator"]
    _reject_unknown(est_doc, _ESTIMATOR_KEYS, "estimator")
    if "dose_grid" not in est_doc:
        raise ConfigError("estimator.dose_grid is required")
    corr = WorkingCorrelation(est_doc.get("working_correlation", "independent"),
                              est_doc.get("rho"))
    try:
        est = EstimatorConfig(
            method=est_doc.get("method", "cov"),
            resampler=est_doc.get("resampler", "dp"),
            alpha=float(est_doc.get("alpha", 5.0)),
            j_target=int(est_doc.get("j_target", 500)),
            epsilon=float(est_doc.get("epsilon", 1e-8)),
            n_draws=int(est_doc.get("n_draws", 500)),
            seed=int(est_doc.get("seed", 0)),
            spline_interior_knots=int(est_doc.get("spline_interior_knots", 2)),
            family=est_doc.get("family", "gaussian_identity"),
            corr=corr,
            dose_grid=tuple(est_doc["dose_grid"]),
            gps_kind=est_doc.get("gps_kind"),
            stabilize=bool(est_doc.get("stabilize", True)),
            synthetic_outcomes=est_doc.get("synthetic_outcomes", "mixture"),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad estimator settings: {exc}") from exc

    schema = doc["schema"]
    _reject_unknown(schema, _SCHEMA_KEYS, "schema")
    for k in ("unit_id", "time", "outcome", "dose"):
        if k not in schema:
            raise ConfigError(f"schema.{k} is required")

    transforms = []
    for i, t in enumerate(doc.get("transforms", [])):
        _reject_unknown(t, {"column", "kind"}, f"transforms[{i}]")
        if "column" not in t or "kind" not in t:
            raise ConfigError(f"transforms[{i}] needs 'column' and 'kind'")
        Transform(t["kind"])  # validate the kind early
        transforms.append({"column": t["column"], "kind": t["kind"]})

    threads = doc.get("threads")
    if threads is not None:
        threads = int(threads)
        if threads < 1:
            raise ConfigError("threads must be >= 1")
    return RunConfig(estimator=est, schema=schema, transforms=tuple(transforms),
                     threads=threads, out_dir=str(doc.get("out_dir", ".")))


def load_run_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    return run_config_from_dict(doc)


def _threads_or_default(value) -> int:
    return value if value else (os.cpu_count() or 1)


def _write_json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _g17(x) -> str:
    return format(float(x), ".17g")


def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = DgpSpec(example="one" if args.example == 1 else "two", seed=args.seed)
    family = "gaussian_identity" if args.example == 1 else "poisson_log"
    cfg = EstimatorConfig(
        method=args.method,
        resampler=args.resampler,
        alpha=args.alpha,
        n_draws=args.draws,
        seed=args.seed,
        family=family,
        dose_grid=(3.0, 4.0, 5.0),
    )
    threads = _threads_or_default(args.threads)
    report = run_replications(spec, cfg, args.replicates, n_jobs=threads)
    write_simreport_csv(report, out / "simreport.csv")
    resolved = {
        "command": "simulate",
        "example": args.example,
        "replicates": args.replicates,
        "threads": threads,
        "dgp": {"n": spec.n, "K": spec.K, "seed": spec.seed,
                "second_param": spec.second_param},
        "estimator": RunConfig(cfg, {"unit_id": "unit", "time": "time",
                                     "outcome": "y", "dose": "d",
                                     "covariates": ["x1", "x2"]}).resolved_dict()["estimator"],
    }
    _write_json(out / "resolved-config.json", resolved)
    print(f"wrote {out / 'simreport.csv'}")
    return 0


def _prepared_dataset(cfg: RunConfig, data_path) -> PanelDataset:
    data = parse_panel_csv(data_path, cfg.schema, "gaussian_identity")
    for t in cfg.transforms:
        data = apply_transform(data, t["column"], Transform(t["kind"]))
    if cfg.estimator.family != data.family:
        # revalidate under the analysis family (e.g. integer counts for Poisson)
        data = PanelDataset(trajectories=data.trajectories, family=cfg.estimator.family,
                            covariate_names=data.covariate_names)
    return data


def cmd_fit(args) -> int:
    cfg = load_run_config(args.config)
    out = Path(args.out) if args.out else Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = _prepared_dataset(cfg, args.data)
    threads = _threads_or_default(args.threads if args.threads else cfg.threads)
    apo = posterior_apo(data, cfg.estimator, n_jobs=threads)

    failed = {s for s, _ in apo.failures}
    kept = [s for s in range(1, cfg.estimator.n_draws + 1) if s not in failed]
    with open(out / "apo_samples.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["draw", "dose", "apo"])
        for i, s in enumerate(kept):
            for g, dose in enumerate(apo.dose_grid):
                writer.writerow([s, _g17(dose), _g17(apo.samples[i, g])])

    summ = summarize(apo)
    with open(out / "apo_summary.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dose", "mean", "var", "median", "q025", "q975"])
        for g in range(len(apo.dose_grid)):
            writer.writerow([_g17(summ["dose"][g]), _g17(summ["mean"][g]),
                             _g17(summ["var"][g]), _g17(summ["median"][g]),
                             _g17(summ["q025"][g]), _g17(summ["q975"][g])])

    resolved = cfg.resolved_dict()
    resolved["threads"] = threads
    resolved["out_dir"] = str(out)
    _write_json(out / "resolved-config.json", resolved)
    if apo.failures:
        print(f"note: {len(apo.failures)} draw(s) failed and were skipped", file=sys.stderr)
    print(f"wrote {out / 'apo_samples.csv'} and {out / 'apo_summary.csv'}")
    return 0


def _read_samples(path):
    doses, by_dose = [], {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["draw", "dose", "apo"]:
            raise ValueError(f"{path}: expected header draw,dose,apo")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                dose, apo = float(row[1]), float(row[2])
            except (IndexError, ValueError):
                raise ValueError(f"{path}: malformed row at line {line_no}") from None
            if dose not in by_dose:
                doses.append(dose)
                by_dose[dose] = []
            by_dose[dose].append(apo)
    if not doses:
        raise ValueError(f"{path}: no sample rows")
    doses.sort()
    return doses, by_dose


def cmd_plot(args) -> int:
    doses, by_dose = _read_samples(args.samples)
    median = [float(np.median(by_dose[d])) for d in doses]
    q025 = [float(np.quantile(by_dose[d], 0.025)) for d in doses]
    q975 = [float(np.quantile(by_dose[d], 0.975)) for d in doses]
    svg = dose_response_svg(doses, median, q025, q975)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg, encoding="utf-8")
    _write_json(out.parent / "resolved-config.json",
                {"command": "plot", "samples": str(args.samples), "out": str(out)})
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bayesdr",
        description="Bayesian bootstrap / Dirichlet-process dose-response analysis "
                    "for longitudinal panels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the built-in simulation harness")
    sim.add_argument("--example", type=int, choices=(1, 2), required=True)
    sim.add_argument("--method", choices=("cov", "wor"), default="cov")
    sim.add_argument("--resampler", choices=("bb", "dp"), default="dp")
    sim.add_argument("--replicates", type=int, default=200)
    sim.add_argument("--draws", type=int, default=500)
    sim.add_argument("--alpha", type=float, default=5.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", default=".")
    sim.add_argument("--threads", type=int, default=None)
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="posterior dose-response analysis of a panel CSV")
    fit.add_argument("--data", required=True)
    fit.add_argument("--config", required=True)
    fit.add_argument("--out", default=None)
    fit.add_argument("--threads", type=int, default=None)
    fit.set_defaults(func=cmd_fit)

    plot = sub.add_parser("plot", help="render apo_samples.csv as an SVG curve")
    plot.add_argument("--samples", required=True)
    plot.add_argument("--out", required=True)
    plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures: data, fitting, I/O
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
