"""Command-line entry point.

Verbs: ``simulate`` (run + write outputs), ``compare`` (recovery gap),
``sweep`` (one axis, several values), ``tune`` (constant estimation and the
design bounds), ``validate`` (fast self-checks). Exit codes: 0 success,
1 numerical failure during a run, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from ._core import backend_name
from .contraction import fast_bound
from .errors import ConfigError, NumericalError

# Reference value of the case-study filter-parameter cap, printed next to
# the estimate for orientation when tuning the stock DC motor.
DC_MOTOR_REFERENCE_MU_STAR = 1.0 / 83.0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsc-lab",
        description="Simulation and tuning toolkit for dynamic surface control.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_common(p: argparse.ArgumentParser, needs_spec: bool = True):
        if needs_spec:
            p.add_argument("spec", nargs="?", help="experiment spec file")
            p.add_argument(
                "--preset",
                choices=harness.PRESET_NAMES,
                help="built-in scenario instead of a spec file",
            )
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a spec key (repeatable)",
        )
        p.add_argument("--out", help="output directory (overrides out.dir)")
        p.add_argument("--quiet", action="store_true", help="suppress summaries")

    add_common(sub.add_parser("simulate", help="run controllers and write outputs"))
    add_common(sub.add_parser("compare", help="recovery gap of the filtered loop"))
    add_common(sub.add_parser("sweep", help="run a parameter sweep"))
    add_common(sub.add_parser("tune", help="estimate constants and bounds"))
    v = sub.add_parser("validate", help="run the fast invariant checks")
    v.add_argument("--quiet", action="store_true", help="suppress summaries")
    return parser


def _load_spec(args) -> harness.ExperimentSpec:
    if args.preset and args.spec:
        raise ConfigError("give either a spec file or --preset, not both")
    if args.preset:
        pairs = harness.preset_pairs(args.preset)
    elif args.spec:
        pairs = harness.parse_spec_file(args.spec)
    else:
        raise ConfigError("a spec file or --preset is required")
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value.strip()
    if args.out:
        pairs["out.dir"] = args.out
    return harness.ExperimentSpec(pairs)


def _print_metrics(metrics: harness.Metrics, quiet: bool) -> None:
    if quiet:
        return
    for name, cm in sorted(metrics.controllers.items()):
        rms = ", ".join(f"{v:.6g}" for v in cm.tail_rms_z)
        print(f"{name}: tail rms z = [{rms}], sup|u| = {cm.sup_u:.6g}")
    if metrics.recovery is not None:
        sup = ", ".join(f"{v:.6g}" for v in metrics.recovery.tail_sup)
        print(f"recovery gap (tail sup per channel): [{sup}]")


def _cmd_simulate(args) -> int:
    spec = _load_spec(args)
    result = harness.run_experiment(spec)
    paths = harness.write_outputs(result)
    _print_metrics(result.metrics, args.quiet)
    if not args.quiet:
        for p in paths:
            print(f"wrote {p}")
    return 0


def _cmd_compare(args) -> int:
    spec = _load_spec(args)
    metrics = harness.compare_controllers(spec)
    _print_metrics(metrics, args.quiet)
    return 0


def _cmd_sweep(args) -> int:
    spec = _load_spec(args)
    sweep = harness.gain_sweep(spec)
    path = harness.write_sweep_outputs(sweep, spec)
    if not args.quiet:
        print(f"sweep over {sweep.axis}:")
        for cell in sweep.cells:
            parts = []
            for name, cm in sorted(cell.metrics.controllers.items()):
                parts.append(f"{name} tail rms z1 = {cm.tail_rms_z[0]:.6g}")
            print(f"  {sweep.axis} = {cell.value:g}: " + "; ".join(parts))
        for key, value in sorted(sweep.monotonicity.items()):
            print(f"  {key}: {value}")
        print(f"wrote {path}")
    return 0


def _cmd_tune(args) -> int:
    spec = _load_spec(args)
    if spec.boxes is None:
        raise ConfigError(
            "tune needs estimation boxes; set boxes.z_lower/z_upper and "
            "boxes.alpha_lower/alpha_upper (see the presets for defaults)"
        )
    report = harness._bound_report(spec)
    d = report.to_dict()
    if not args.quiet:
        for key in (
            "c1", "c2", "c3", "L_v", "L_1", "lambda_z", "C_z", "kappa",
        ):
            print(f"{key} = {d[key]:.6g}")
        print(f"mu_star = {report.mu_star:.6g} (1/c2)")
        if spec.plant_name == "dc_motor":
            print(
                f"reference mu_star for the stock dc_motor case study: "
                f"{DC_MOTOR_REFERENCE_MU_STAR:.6g} (= 1/83)"
            )
        print(f"observer_bound = {report.observer_bound:.6g} (c1/k)")
        fb = fast_bound(1.0, spec.mu, report.c1, report.c3, 0.0)
        print(
            "fast offset variants: unscaled = "
            f"{report.fast_bound_terms['offset_unscaled']:.6g}, "
            "mu-scaled = "
            f"{report.fast_bound_terms['offset_mu_scaled']:.6g} "
            f"(decay rate {report.fast_bound_terms['decay_rate']:.6g}; "
            f"unit-error bound at t=0: {fb.offset_unscaled:.6g})"
        )
        print(f"ss_bound = {report.ss_bound:.6g}")
        if report.signum_magnitude:
            print(
                f"signum magnitude (excluded from c1) = "
                f"{report.signum_magnitude:.6g}"
            )
    else:
        print(f"{report.mu_star:.9g}")
    return 0


def _cmd_validate(args) -> int:
    checks = harness.run_validation_checks()
    width = max(len(name) for name, _, _ in checks)
    failed = False
    for name, ok, detail in checks:
        status = "PASS" if ok else "FAIL"
        print(f"{name.ljust(width)}  {status}  {detail}")
        failed = failed or not ok
    if not args.quiet:
        print(f"kernel backend: {backend_name()}")
    return 1 if failed else 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "sweep": _cmd_sweep,
    "tune": _cmd_tune,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
