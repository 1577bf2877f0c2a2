"""Command-line entry point: ``dcem <group> <verb> [options]``.

Exit status is 0 on success, 1 on a validation or runtime error (one JSON
line on stderr) and 2 on a usage error. Input paths left out fall back to
the bundled reference fixtures where one exists.
"""

import argparse
import json
import os
import sys

from . import reference
from .bottomup import (PueBySpaceType, Scenario, aggregate_eq1, eq1_sensitivity_model,
                       project_scenario, pue_sensitivity_model, sensitivity_oat)
from .calibration import (SIMULATORS, CalibrationProblem, CalibrationRun, chain_diagnostics,
                          load_observations, metropolis_calibrate)
from .errors import DcemError, MissingFile, ValidationError
from .ida import IdaDataset, decompose_by, lmdi_additive
from .itpower import InstalledBase, fleet_annual_energy, load_class_registry
from .ledger import EnergyLedger
from .optimize import Frontier, achievable_pue
from .psychro import load_weather_series
from .pue import annual_pue, load_config
from .report import FORMATS, atomic_write, render
from .uncertainty import Distribution, run_monte_carlo

U64 = 2**64


def _seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < U64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _count(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a count, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("count must be >= 0")
    return value


def _common(p):
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--format", choices=FORMATS, default="json")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--mc-n", type=_count, default=0, dest="mc_n")
    p.add_argument("--workers", type=_count, default=1)


def build_parser():
    parser = argparse.ArgumentParser(prog="dcem", description="Bottom-up data center energy model")
    groups = parser.add_subparsers(dest="group", required=True, metavar="COMMAND")

    pue = groups.add_parser("pue", help="hourly PUE simulation").add_subparsers(
        dest="verb", required=True)
    for verb in ("simulate", "mc", "optimal"):
        p = pue.add_parser(verb)
        _common(p)
        p.add_argument("--config")
        p.add_argument("--weather")
        if verb == "mc":
            p.add_argument("--params", required=True,
                           help="JSON map of config parameter -> distribution")
        if verb == "optimal":
            p.add_argument("--frontier", help="frontier JSON (default: bundled 3x5x4 grid)")

    bu = groups.add_parser("bottomup", help="bottom-up aggregation and projections").add_subparsers(
        dest="verb", required=True)
    run = bu.add_parser("run")
    _common(run)
    run.add_argument("--ledger")
    run.add_argument("--installed-base", dest="installed_base")
    run.add_argument("--classes", help="directory with server/storage/network class CSVs")
    run.add_argument("--pue")
    run.add_argument("--year", type=int, required=True)
    proj = bu.add_parser("project")
    _common(proj)
    proj.add_argument("--ledger")
    proj.add_argument("--pue")
    proj.add_argument("--scenario")

    ida = groups.add_parser("ida", help="LMDI decomposition").add_subparsers(
        dest="verb", required=True)
    dec = ida.add_parser("decompose")
    _common(dec)
    dec.add_argument("--data")
    dec.add_argument("--factors", help="comma-separated factor order")
    dec.add_argument("--level", choices=("region", "region_space_type"))

    cal = groups.add_parser("calibrate", help="Bayesian calibration").add_subparsers(
        dest="verb", required=True)
    crun = cal.add_parser("run")
    _common(crun)
    crun.add_argument("--observations", required=True)
    crun.add_argument("--config", required=True, help="calibration JSON")

    sens = groups.add_parser("sensitivity", help="one-at-a-time elasticities")
    _common(sens)
    sens.add_argument("--target", choices=("pue", "eq1"), default="pue")
    sens.add_argument("--config")
    sens.add_argument("--weather")
    sens.add_argument("--ledger")
    sens.add_argument("--pue")
    sens.add_argument("--year", type=int, default=reference.LATEST_YEAR)
    sens.add_argument("--perturbation", type=float, default=0.1)

    val = groups.add_parser("validate", help="synthetic 17-facility PUE harness")
    _common(val)
    val.set_defaults(mc_n=1000)
    return parser


def _path(given, key):
    path = given or reference.data_path(key)
    if not os.path.isfile(path):
        raise MissingFile(f"input file not found: {path}")
    return path


def _load_json(path):
    if not os.path.isfile(path):
        raise MissingFile(f"input file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def _mc(args):
    if args.mc_n > 0 and args.seed is None:
        raise ValidationError("--seed is required when --mc-n > 0")
    return (args.mc_n, args.seed) if args.mc_n > 0 else None


def _pue_table(args, year):
    if args.pue:
        return PueBySpaceType.from_json_file(_path(args.pue, None))
    if year not in (reference.BASE_YEAR, reference.LATEST_YEAR):
        raise ValidationError(f"no bundled PUE table for {year}; pass --pue")
    return PueBySpaceType.from_json_file(reference.data_path(f"pue_{year}"))


def cmd_pue(args):
    config = load_config(_path(args.config, "config"))
    weather = load_weather_series(_path(args.weather, "weather"))
    if args.verb == "simulate":
        return [(annual_pue(config, weather), "pue")]
    if args.verb == "mc":
        mc = _mc(args)
        if mc is None:
            raise ValidationError("pue mc needs --mc-n > 0")
        params = {k: Distribution.from_json(v) for k, v in _load_json(args.params).items()}
        model = reference.pue_mc_model(config, weather)
        return [(run_monte_carlo(model, params, *mc, workers=max(args.workers, 1)), "pue_mc")]
    frontier = Frontier.from_dict(_load_json(_path(args.frontier, "frontier")), base=config)
    best, result, evals = achievable_pue(weather, frontier, return_evaluations=True)
    if args.format == "json":
        return [({"achievable_pue": result.annual_pue, "config": best.to_dict(),
                  "n_evaluations": len(evals), "summary": result.summary()}, "pue_optimal")]
    return [(result, "pue_optimal")]


def _ledger(args):
    if getattr(args, "installed_base", None):
        if not args.classes:
            raise ValidationError("--installed-base needs --classes")
        classes = load_class_registry(*(os.path.join(args.classes, reference.FILES[k])
                                        for k in ("servers", "storage", "network")))
        base = InstalledBase.from_csv(args.installed_base)
        return fleet_annual_energy(base, classes, args.year)
    return EnergyLedger.from_csv(_path(args.ledger, "ledger"))


def cmd_bottomup(args):
    ledger = _ledger(args)
    if args.verb == "run":
        return [(aggregate_eq1(ledger, _pue_table(args, args.year), args.year), "bottomup")]
    if args.scenario:
        scenario = Scenario.from_json_file(_path(args.scenario, None))
    else:
        scenario = Scenario.from_dict(_load_json(reference.data_path("historical")))
    pue = _pue_table(args, scenario.base_year)
    return [(project_scenario(ledger, pue, scenario, mc=_mc(args),
                              workers=max(args.workers, 1)), "projection")]


def cmd_ida(args):
    data = IdaDataset.from_csv(_path(args.data, "ida"))
    if args.factors:
        data = data.reordered([f.strip() for f in args.factors.split(",")])
    result = lmdi_additive(data)
    out = [(result, "ida")]
    if args.level:
        groups, gap = decompose_by(data, args.level)
        if args.format == "json":
            out.append(({"level": args.level, "max_abs_gap_kwh": gap,
                         "groups": [{"group": list(g), **r.to_dict()}
                                    for g, r in sorted(groups.items())]}, f"ida_{args.level}"))
        else:
            out.extend((r, "ida_" + "_".join(g)) for g, r in sorted(groups.items()))
    return out


def cmd_calibrate(args):
    if args.seed is None:
        raise ValidationError("calibrate run needs --seed")
    cfg = _load_json(args.config)
    sim = cfg.get("simulator", "linear")
    if sim not in SIMULATORS:
        raise ValidationError(f"unknown simulator {sim!r}; choose from {sorted(SIMULATORS)}")
    _, x, y, sd = load_observations(args.observations)
    kwargs = {}
    if "discrepancy_prior" in cfg:
        kwargs = {"discrepancy_enabled": True,
                  "discrepancy_prior": Distribution.from_json(cfg["discrepancy_prior"])}
    problem = CalibrationProblem(SIMULATORS[sim], cfg["priors"], x, y, sd, vectorized=True,
                                 **kwargs)
    n_chains = int(cfg.get("n_chains", 4))
    length = int(cfg.get("chain_length", 20000))
    chains = [metropolis_calibrate(problem, length, cfg["proposal_sd"], (args.seed + k) % U64)
              for k in range(n_chains)]
    diagnostics = chain_diagnostics(chains) if n_chains >= 2 else None
    return [(CalibrationRun(chains, diagnostics), "calibration")]


def cmd_sensitivity(args):
    if args.target == "pue":
        model, base = pue_sensitivity_model(load_config(_path(args.config, "config")),
                                            load_weather_series(_path(args.weather, "weather")))
    else:
        ledger = EnergyLedger.from_csv(_path(args.ledger, "ledger"))
        model, base = eq1_sensitivity_model(ledger, _pue_table(args, args.year), args.year)
    return [(sensitivity_oat(model, base, args.perturbation), f"sensitivity_{args.target}")]


def cmd_validate(args):
    seed = 0 if args.seed is None else args.seed
    return [(reference.run_validation_harness(args.mc_n or 1000, seed,
                                              workers=max(args.workers, 1)), "validation")]


COMMANDS = {"pue": cmd_pue, "bottomup": cmd_bottomup, "ida": cmd_ida,
            "calibrate": cmd_calibrate, "sensitivity": cmd_sensitivity,
            "validate": cmd_validate}


def _error(exc):
    kind = exc.kind if isinstance(exc, DcemError) else type(exc).__name__
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc)}, sort_keys=True) + "\n")
    return 1


def run(argv=None):
    """Parse ``argv``, run the command and write its outputs. Returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        results = COMMANDS[args.group](args)
        files = []
        for result, name in results:
            files.extend(render(result, args.format, name))
        for fname, text in files:
            atomic_write(os.path.join(args.out, fname), text)
    except (DcemError, ValueError, OSError, KeyError) as exc:
        return _error(exc)
    if args.group == "validate" and not results[0][0]["passed"]:
        return _error(ValidationError("synthetic validation harness exceeded its tolerance"))
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
