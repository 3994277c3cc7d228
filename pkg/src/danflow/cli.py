"""Command-line entry point: simulate / fit / crossval / parity.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Progress and diagnostics go to stderr; machine-readable results go to the
output files and stdout.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import calibration, pfr, validation
from .dataio import (
    ATMOSPHERIC_PRESSURE,
    BAR,
    KELVIN_OFFSET,
    ParseError,
    Setup,
    bundled_path,
    load_experiments,
    load_reactor_config,
)
from .kinetics import SPECIES, load_parameters, save_parameters

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parse_weights(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("weights must be 3 comma-separated numbers")
    try:
        values = tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric weight in {text!r}") from None
    if any(v < 0 for v in values):
        raise argparse.ArgumentTypeError("weights must be non-negative")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="danflow",
        description="Grey-box plug-flow reactor simulation and kinetic identification "
        "for continuous diazo acetonitrile synthesis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_dataset_flags(p):
        p.add_argument("--mixer", help="mixer dataset CSV (default: bundled)")
        p.add_argument("--calorimeter", help="calorimeter dataset CSV (default: bundled)")
        p.add_argument("--mixer-reactor", help="mixer reactor YAML (default: bundled)")
        p.add_argument("--calorimeter-reactor", help="calorimeter reactor YAML (default: bundled)")

    def add_fit_flags(p):
        p.add_argument("--decomposition", choices=["nn", "arrhenius"], default="nn")
        p.add_argument("--weights", type=_parse_weights, default=(1.0, 1.0, 1.0),
                       help="cost weights lambda1,lambda2,lambda3 (default 1,1,1)")
        p.add_argument("--multistart", type=int, default=10, metavar="N")
        p.add_argument("--maxiter", type=int, default=120)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="parallel workers (default: available parallelism)")

    p_sim = sub.add_parser("simulate", help="solve one operating point and export the profile")
    p_sim.add_argument("--reactor", required=True, help="reactor YAML file")
    p_sim.add_argument("--params", required=True, help="kinetic parameter YAML file")
    p_sim.add_argument("--tau", type=float, required=True, help="residence time [s]")
    p_sim.add_argument("--temperature-c", type=float, required=True, help="bath temperature [degC]")
    p_sim.add_argument("--gauge-bar", type=float, default=0.0, help="gauge pressure [bar]")
    p_sim.add_argument("--out", required=True, help="profile CSV output path")

    p_fit = sub.add_parser("fit", help="identify parameters from the datasets")
    add_dataset_flags(p_fit)
    add_fit_flags(p_fit)
    p_fit.add_argument("--out", default="fit_report.json", help="fit report JSON path")
    p_fit.add_argument("--params-out", default="params_fitted.yaml",
                       help="fitted parameter YAML path")

    p_cv = sub.add_parser("crossval", help="cross-validate the identification")
    add_dataset_flags(p_cv)
    add_fit_flags(p_cv)
    p_cv.add_argument("--folds", type=int, default=None,
                      help="grouped folds (default: leave-one-out)")
    p_cv.add_argument("--warm-start", help="parameter YAML used as first start of each fold")
    p_cv.add_argument("--out", default="crossval.csv", help="cross-validation CSV path")

    p_par = sub.add_parser("parity", help="export measured vs simulated values")
    add_dataset_flags(p_par)
    p_par.add_argument("--params", required=True, help="fitted parameter YAML file")
    p_par.add_argument("--out", default="parity.csv", help="parity CSV path")

    return parser


def _load_datasets(args):
    mixer_csv = args.mixer or bundled_path("mixer.csv")
    calo_csv = args.calorimeter or bundled_path("calorimeter.csv")
    mixer = load_experiments(mixer_csv, Setup.MIXER)
    calorimeter = load_experiments(calo_csv, Setup.CALORIMETER)
    reactors = {
        Setup.MIXER: load_reactor_config(args.mixer_reactor or bundled_path("mixer_reactor.yaml")),
        Setup.CALORIMETER: load_reactor_config(
            args.calorimeter_reactor or bundled_path("calorimeter_reactor.yaml")
        ),
    }
    return mixer, calorimeter, reactors


def _cmd_simulate(args) -> int:
    from .dataio import N_SPECIES, SimulationInputs

    reactor = load_reactor_config(args.reactor)
    params = load_parameters(args.params)
    if args.tau <= 0:
        print("danflow simulate: --tau must be positive", file=sys.stderr)
        return EXIT_USAGE
    r = reactor.feed_flow_ratio
    conc = [0.0] * N_SPECIES
    conc[0] = reactor.feed_concentration_educt_a / (1.0 + r)
    conc[1] = reactor.feed_concentration_educt_b * r / (1.0 + r)
    inputs = SimulationInputs(
        inlet_velocity=reactor.length / args.tau,
        inlet_concentrations=tuple(conc),
        absolute_pressure=args.gauge_bar * BAR + ATMOSPHERIC_PRESSURE,
        temperature=args.temperature_c + KELVIN_OFFSET,
        reactor=reactor,
    )
    profile = pfr.solve(inputs, params)
    obs = pfr.observables(profile)
    heats = ",".join(f"q{i + 1}_W={q!r}" for i, q in enumerate(obs.zone_heats_sim))
    summary = (
        f"band_area_au={obs.band_area_sim!r},{heats},gas_flow_ml_min={obs.gas_flow_sim!r}"
    )
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {summary}\n")
        writer = csv.writer(fh)
        writer.writerow(["z_m", *SPECIES, "alpha_gas", "u_m_s"])
        for i in range(len(profile.z)):
            writer.writerow(
                [repr(float(profile.z[i]))]
                + [repr(float(c)) for c in profile.concentrations[i]]
                + [repr(float(profile.alpha_gas[i])), repr(float(profile.u[i]))]
            )
    print(summary)
    print(f"wrote {args.out} ({len(profile.z)} samples)", file=sys.stderr)
    return EXIT_OK


def _settings_from_args(args) -> "calibration.OptimizerSettings":
    return calibration.OptimizerSettings(
        n_starts=args.multistart,
        seed=args.seed,
        max_iter=args.maxiter,
        n_jobs=args.jobs,
    )


def _cmd_fit(args) -> int:
    mixer, calorimeter, reactors = _load_datasets(args)
    records = mixer + calorimeter
    if not records:
        print("danflow fit: no experiments loaded", file=sys.stderr)
        return EXIT_DATA
    settings = _settings_from_args(args)
    print(
        f"fitting {len(records)} records, mode={args.decomposition}, "
        f"starts={settings.n_starts}, jobs={settings.n_jobs}",
        file=sys.stderr,
    )
    report = calibration.fit(records, reactors, settings, args.decomposition, args.weights)
    calibration.write_report(report, args.out)
    save_parameters(report.params, args.params_out)
    b = report.breakdown
    print(
        f"J={b.J!r} J1={b.J1!r} J2={b.J2!r} J3={b.J3!r} "
        f"J1/J1_0={b.J1 / b.J1_0!r} J2/J2_0={b.J2 / b.J2_0!r} J3/J3_0={b.J3 / b.J3_0!r}"
    )
    for key, m in report.metrics.items():
        if m["n"]:
            print(f"{key}: r2={m['r2']!r} mae={m['mae']!r} n={m['n']}")
    print(f"wrote {args.out} and {args.params_out}", file=sys.stderr)
    return EXIT_OK


def _cmd_crossval(args) -> int:
    mixer, calorimeter, reactors = _load_datasets(args)
    records = mixer + calorimeter
    if not records:
        print("danflow crossval: no experiments loaded", file=sys.stderr)
        return EXIT_DATA
    settings = _settings_from_args(args)
    warm = None
    if args.warm_start:
        warm = calibration.pack(load_parameters(args.warm_start))
    print(
        f"cross-validating {len(records)} records "
        f"({args.folds if args.folds else 'leave-one-out'} folds), "
        f"starts={settings.n_starts}",
        file=sys.stderr,
    )
    report = validation.cross_validate(
        records,
        reactors,
        settings,
        args.decomposition,
        args.weights,
        n_folds=args.folds,
        warm_start=warm,
    )
    validation.write_crossval_csv(report, args.out)
    for key in validation.OBSERVABLES:
        tr, te = report.train_mae.get(key), report.test_mae.get(key)
        if tr is not None or te is not None:
            print(f"{key}: train_mae={tr!r} test_mae={te!r}")
    if report.n_failed:
        print(f"{report.n_failed} fold(s) failed (flagged in {args.out})", file=sys.stderr)
    print(f"wrote {args.out}", file=sys.stderr)
    if report.n_failed == len(report.folds):
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_parity(args) -> int:
    params = load_parameters(args.params)
    mixer, calorimeter, reactors = _load_datasets(args)
    records = mixer + calorimeter
    n = validation.parity_export(params, records, reactors, args.out)
    print(f"wrote {args.out} ({n} rows)", file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "crossval":
            return _cmd_crossval(args)
        if args.command == "parity":
            return _cmd_parity(args)
        parser.error(f"unknown command {args.command!r}")
    except (ParseError, FileNotFoundError) as exc:
        print(f"danflow: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError) as exc:
        print(f"danflow: invalid input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (pfr.SolverError, calibration.FitError, calibration.CostEvaluationError) as exc:
        print(f"danflow: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
