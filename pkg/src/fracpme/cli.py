"""Command line entry point: ``fracpme <stage> --config cfg.yaml --out DIR``.

Exit status is 0 when every check of the stage passes, 1 on a numerical
failure (or on any warning under ``--strict``) and 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, plotting
from .config import ConfigError, ExperimentConfig, default_config, load_config
from .elliptic import SolverError
from .pipeline import (
    Workbench,
    amplitude_run,
    forward_stage,
    recovery_stage,
    ucp_stage,
    uniqueness_stage,
    verify_stage,
    witness_stage,
)
from .asymptotics import rate_fit
from .elliptic import linear_dn_map
from .recovery import RecoveryError, reduce_to_linear_dn

logger = logging.getLogger("fracpme")

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2
STAGES = ("verify-operator", "forward", "asymptotics", "recover")


class _WarningCounter(logging.Handler):
    def __init__(self):
        super().__init__(level=logging.WARNING)
        self.messages: list[str] = []

    def emit(self, record):
        self.messages.append(record.getMessage())


def _png(cfg: ExperimentConfig) -> bool:
    return "png" in cfg.section("outputs")["formats"]


def _tolerances(cfg: ExperimentConfig) -> dict:
    return {
        "step_residual": cfg.tol,
        "exterior_residual": 1e-10,
        "rate_slope": 0.15,
        "reduction_relative": 0.05,
        "lambda_relative": 0.05,
        "witness_T_spread": 0.20,
        "fft_oracle": 0.02,
        "kernel_band": 3.0,
    }


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def cmd_verify_operator(wb: Workbench, out: Path, jobs: int = 1) -> int:
    checks, witnesses = verify_stage(wb)
    io.write_csv(out / "checks.csv", "operator-checks", ["name", "value", "limit", "passed"],
                 [(c.name, c.value, c.limit, c.passed) for c in checks])
    io.write_json(out / "checks.json", [c.__dict__ for c in checks])
    io.write_json(out / "witnesses.json", [w.as_dict() for w in witnesses])
    failed = [c.name for c in checks if not c.passed]
    io.write_manifest(out, "verify-operator", wb.config.hash, _tolerances(wb.config),
                      {"failed": failed, "n_checks": len(checks)})
    for name in failed:
        logger.error("operator check failed: %s", name)
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_forward(wb: Workbench, out: Path, jobs: int = 1) -> int:
    cfg, lay = wb.config, wb.layout
    try:
        res = forward_stage(wb)
    except SolverError as exc:
        io.write_manifest(out, "forward", cfg.hash, _tolerances(cfg), {"error": str(exc)})
        logger.error("forward solve failed: %s", exc)
        return EXIT_NUMERICAL
    io.write_csv(out / "solution.csv", "u-series", ["t", "index", *_coords(lay), "u"],
                 io.series_rows(res.series.times, lay.points, res.series.slices))
    w2 = res.record.mask
    io.write_csv(out / "record.csv", "dn-record", ["t", "index", *_coords(lay), "Ls_v"],
                 io.series_rows(res.record.times, lay.points[w2], res.record.values, w2))
    io.write_manifest(out, "forward", cfg.hash, _tolerances(cfg), {
        "solver_meta": res.series.meta,
        "richardson_order": res.richardson_order,
        "self_differences": res.self_differences,
        "datum_amplitude": wb.datum().h,
    })
    if _png(cfg) and lay.dimension == 1:
        plotting.plot_snapshots(lay.points[:, 0], res.series.times, res.series.slices, out / "solution.png")
    return EXIT_OK


def _coords(layout) -> list[str]:
    return ["x", "y"][: layout.dimension]


def cmd_asymptotics(wb: Workbench, out: Path, jobs: int = 1) -> int:
    cfg, params, lay = wb.config, wb.params, wb.layout
    pack = wb.pack(0)
    runs, failure = [], None
    for h in cfg.h_list:
        try:
            runs.append(amplitude_run(pack, params, wb.datum(h), cfg.n_steps, cfg.tol)[0])
        except SolverError as exc:
            failure = f"h={h:g}: {exc}"
            break
    hs = np.array([r.h for r in runs])
    err = np.array([r.error_homogeneous for r in runs])
    pair = np.concatenate([[np.nan], np.diff(np.log(err)) / np.diff(np.log(hs))]) if len(runs) > 1 else np.full(len(runs), np.nan)
    io.write_csv(out / "rate_table.csv", "rate-table",
                 ["h", "error_homogeneous", "error_shifted", "pair_slope"],
                 [(r.h, r.error_homogeneous, r.error_shifted, p) for r, p in zip(runs, pair)])
    io.write_csv(out / "decomposition.csv", "decomposition",
                 ["h", "exterior_mismatch", "residual_minus", "residual_plus"],
                 [(r.h, r.exterior_mismatch, r.residual_minus, r.residual_plus) for r in runs])
    if failure is not None:
        io.write_manifest(out, "asymptotics", cfg.hash, _tolerances(cfg), {"error": failure, "completed": hs})
        logger.error("asymptotic run aborted at %s", failure)
        return EXIT_NUMERICAL

    expected = 1.0 / params.m - 1.0
    fit = rate_fit(hs, err, expected)
    fit_s = rate_fit(hs, [r.error_shifted for r in runs], expected)
    direct = linear_dn_map(pack, wb.datum())
    red_errs = []
    for k in range(2, len(runs) + 1):
        red = reduce_to_linear_dn([r.record for r in runs[:k]], params)
        red_errs.append(float(np.linalg.norm(red.estimate - direct) / np.linalg.norm(direct)))
    w2 = lay.mask_w2
    io.write_csv(out / "reduction.csv", "reduction", ["index", *_coords(lay), "reduced", "direct"],
                 [(i, *lay.points[i], a, b) for i, a, b in zip(w2, red.estimate, direct)])

    study = witness_stage(wb, jobs=jobs)
    rows = [(name, T, c) for name, vals in study.witnesses.items() for T, c in zip(study.T_list, vals)]
    io.write_csv(out / "witnesses.csv", "witnesses", ["name", "T", "constant"], rows)

    slope_ok = abs(fit.slope - expected) <= 0.15
    red_ok = red_errs[-1] <= 0.05 and bool(np.all(np.diff(red_errs) < 0))
    ext_ok = max(r.exterior_mismatch for r in runs) <= 1e-6
    summary = {
        "slope": fit.slope,
        "ci95": [fit.ci_low, fit.ci_high],
        "expected": expected,
        "pair_slopes": fit.pair_slopes,
        "slope_shifted": fit_s.slope,
        "pass": slope_ok,
        "monotone": fit.monotone,
        "reduction_relative_errors": red_errs,
        "reduction_pass": red_ok,
        "exterior_mismatch_max": max(r.exterior_mismatch for r in runs),
        "exterior_pass": ext_ok,
        "remainder_sign": "minus" if runs[-1].residual_minus <= runs[-1].residual_plus else "plus",
        "witness_spreads": study.spreads,
        "witness_pass": study.passed,
        "witness_majorized": study.majorized,
        "n_exponent_fit": study.n_exponent_fit,
        "n_exponent_derived": study.n_exponent_derived,
        "n_exponent_printed": study.n_exponent_printed,
        "smallness": study.smallness,
    }
    io.write_json(out / "summary.json", summary)
    io.write_manifest(out, "asymptotics", cfg.hash, _tolerances(cfg), {"h_list": cfg.h_list, "n_steps": cfg.n_steps})
    if _png(cfg):
        plotting.plot_rate(hs, err, fit.slope, fit.intercept, expected, out / "rate.png")
        if lay.dimension == 1:
            plotting.plot_reduction(lay.points[w2, 0], red.estimate, direct, out / "reduction.png")
    if abs(study.n_exponent_fit - study.n_exponent_printed) > 0.15:
        logger.info("N-witness scales like T^%.3f; printed exponent %.3f, derived %.3f",
                    study.n_exponent_fit, study.n_exponent_printed, study.n_exponent_derived)
    ok = slope_ok and red_ok and ext_ok and study.passed
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_recover(wb: Workbench, out: Path, jobs: int = 1) -> int:
    cfg, lay = wb.config, wb.layout
    try:
        res = recovery_stage(wb)
    except RecoveryError as exc:
        io.write_manifest(out, "recover", cfg.hash, _tolerances(cfg),
                          {"error": str(exc), "advice": "raise datum.amplitude"})
        logger.error("%s", exc)
        return EXIT_NUMERICAL
    cols = [*_coords(lay), "lambda_hat", "truth", "rel_error", "valid"]
    io.write_csv(out / "lambda.csv", "lambda-recovery", cols, res.report.rows())
    if res.refined is not None:
        io.write_csv(out / "lambda_refined.csv", "lambda-recovery", cols, res.refined.rows())

    uq = uniqueness_stage(wb)
    rows = []
    for i in range(uq.distances.shape[0]):
        rows.append((i, f"{uq.names[0]}(reassembled)", uq.identical[i], uq.floors[i], uq.identical[i] / uq.floors[i]))
        for j in range(1, len(uq.names)):
            rows.append((i, uq.names[j], uq.distances[i, j], uq.floors[i], uq.distances[i, j] / uq.floors[i]))
    io.write_csv(out / "dn_distance.csv", "dn-distance", ["probe", "pair", "distance", "floor", "ratio"], rows)
    ucp = ucp_stage(wb)
    io.write_csv(out / "ucp.csv", "ucp-diagnostic", list(ucp[0].keys()), [tuple(r.values()) for r in ucp])

    base = res.report.max_relative_error
    fine = res.refined.max_relative_error if res.refined is not None else float("nan")
    lam_ok = base <= 0.05 and (res.refined is None or fine < base)
    sep = {n: uq.separated(j) for j, n in enumerate(uq.names) if j > 0}
    summary = {
        "lambda_max_relative_error": base,
        "lambda_max_relative_error_refined": fine,
        "lambda_valid_points": int(res.report.valid_mask.sum()),
        "lambda_pass": lam_ok,
        "identical_pairs_at_floor": uq.identical_ok,
        "pairs_separated": sep,
        "ucp_label": "diagnostic",
    }
    io.write_json(out / "summary.json", summary)
    io.write_manifest(out, "recover", cfg.hash, _tolerances(cfg), {"threshold_relative": res.threshold})
    if _png(cfg) and lay.dimension == 1:
        r = res.report
        plotting.plot_lambda(r.points[:, 0], r.lambda_hat, r.truth, r.valid_mask, out / "lambda.png")
    ok = lam_ok and uq.identical_ok and all(sep.values())
    return EXIT_OK if ok else EXIT_NUMERICAL


COMMANDS = {
    "verify-operator": cmd_verify_operator,
    "forward": cmd_forward,
    "asymptotics": cmd_asymptotics,
    "recover": cmd_recover,
}


def cmd_all(wb: Workbench, out: Path, jobs: int = 1) -> int:
    codes = {}
    for name in STAGES:
        codes[name] = COMMANDS[name](wb, out / name.replace("-", "_"), jobs)
    io.write_manifest(out, "all", wb.config.hash, _tolerances(wb.config), {"exit_codes": codes})
    return max(codes.values())


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment file (default: packaged default)")
    common.add_argument("--out", type=Path, help="output directory (default: outputs.directory)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for independent runs")
    common.add_argument("--strict", action="store_true", help="treat logged warnings as failures")
    common.add_argument("-v", "--verbose", action="count", default=0)
    parser = argparse.ArgumentParser(prog="fracpme", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "all"):
        sub.add_parser(name, parents=[common])
    sub.add_parser("show-config", help="print the packaged default config")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "show-config":
        from .config import default_config_text

        sys.stdout.write(default_config_text())
        return EXIT_OK
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config) if args.config else default_config()
        if args.seed is not None:
            cfg = cfg.with_overrides(seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("config error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out if args.out is not None else Path(cfg.section("outputs")["directory"])
    counter = _WarningCounter()
    logging.getLogger("fracpme").addHandler(counter)
    try:
        wb = Workbench(cfg)
        command = cmd_all if args.command == "all" else COMMANDS[args.command]
        code = command(wb, out, args.jobs)
    except SolverError as exc:
        logger.error("numerical failure: %s", exc)
        code = EXIT_NUMERICAL
    finally:
        logging.getLogger("fracpme").removeHandler(counter)
    if args.strict and counter.messages and code == EXIT_OK:
        print(f"strict mode: {len(counter.messages)} warning(s) raised", file=sys.stderr)
        code = EXIT_NUMERICAL
    return code


if __name__ == "__main__":
    sys.exit(main())
