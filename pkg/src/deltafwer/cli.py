"""Command-line entry point: ``deltafwer {central,sweep,single,gen-data}``.

Exit codes: 0 on success, 2 on a configuration error, 1 on a runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import tomli

from .datagen import ConfigurationError, ScenarioConfig, export_dataset, load_dataset, make_scenario
from .dlasso import InferenceBackendConfig
from .experiment import ExperimentSpec, run_central_scenario, run_single, run_sweep

log = logging.getLogger("deltafwer")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 itself; raise instead so main() owns the exit code
    def error(self, message):
        raise _ArgumentError(message)


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _num_list(text: str) -> tuple[float, ...]:
    out = []
    for t in text.split(","):
        t = t.strip()
        if not t:
            continue
        try:
            out.append(int(t))
        except ValueError:
            try:
                out.append(float(t))
            except ValueError:
                raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    return tuple(out)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="deltafwer", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML file whose keys mirror ExperimentSpec fields")
    common.add_argument("--seed", type=int, help="master seed (first Monte-Carlo seed)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--alpha", type=float)
    common.add_argument("--gamma", type=float)
    common.add_argument("--clusters", type=_int_list, help="cluster counts, e.g. 100,200")
    common.add_argument("--bootstraps", type=int)
    common.add_argument("--kappa-main", type=float, help="main-fit penalty multiplier")
    common.add_argument("-v", "--verbose", action="store_true")

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--workers", type=int, help="seed-parallel worker processes (default: all cores)")
    mc.add_argument("--seeds", type=int, dest="n_seeds", help="number of Monte-Carlo repetitions")
    mc.add_argument("--methods", type=lambda s: tuple(t for t in s.split(",") if t),
                    help="subset of cludl,dlasso-full,encludl")
    mc.add_argument("--keep-pvalues", action="store_true", help="write per-seed p-value CSVs")
    mc.add_argument("--timing", action="store_true",
                    help="fill wall_time_s (summary CSVs are then no longer reproducible byte for byte)")
    for name in ("n", "h"):
        mc.add_argument(f"--{name}", type=int)
    for name in ("rho", "sigma-eps"):
        mc.add_argument(f"--{name}", type=float)

    sub.add_parser("central", parents=[common, mc], help="Monte-Carlo run of the central scenario")
    sw = sub.add_parser("sweep", parents=[common, mc], help="vary one scenario parameter")
    sw.add_argument("--param", choices=("sigma_eps", "n", "rho", "h"))
    sw.add_argument("--values", type=_num_list)

    si = sub.add_parser("single", parents=[common], help="one method on one dataset")
    si.add_argument("--method", required=True)
    si.add_argument("--data", type=Path, help="dataset directory (from gen-data); generated if omitted")
    si.add_argument("--scenario-seed", type=int, default=0)

    gd = sub.add_parser("gen-data", parents=[common], help="export one simulated dataset")
    for name in ("n", "h"):
        gd.add_argument(f"--{name}", type=int)
    for name in ("rho", "sigma-eps"):
        gd.add_argument(f"--{name}", type=float)
    return p


def _read_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid TOML in {path}: {exc}") from exc


def _check_keys(table: dict, allowed, where: str):
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown key(s) {unknown} in {where}")


def build_spec(args, cfg: dict) -> ExperimentSpec:
    """Merge defaults < config file < command-line flags into an ExperimentSpec."""
    cfg = dict(cfg)
    spec_keys = {f.name for f in fields(ExperimentSpec)}
    _check_keys(cfg, spec_keys, "config")
    scen = dict(cfg.pop("scenario", {}))
    _check_keys(scen, {f.name for f in fields(ScenarioConfig)}, "[scenario]")
    backend = dict(cfg.pop("backend", {}))
    _check_keys(backend, {f.name for f in fields(InferenceBackendConfig)}, "[backend]")
    sweep = cfg.pop("sweep", None)

    for key in ("n", "h", "rho"):
        if getattr(args, key, None) is not None:
            scen[key] = getattr(args, key)
    if getattr(args, "sigma_eps", None) is not None:
        scen["sigma_eps"] = args.sigma_eps
    if getattr(args, "kappa_main", None) is not None:
        backend["kappa_main"] = args.kappa_main

    flag_map = {"seed": "seed", "alpha": "alpha", "gamma": "gamma", "clusters": "C_grid",
                "bootstraps": "B", "n_seeds": "n_seeds", "methods": "methods"}
    for flag, key in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            cfg[key] = v
    if getattr(args, "out", None) is not None:
        cfg["output_dir"] = str(args.out)

    if getattr(args, "param", None) or getattr(args, "values", None):
        sweep = {"param": args.param or (sweep or {}).get("param"),
                 "values": args.values or (sweep or {}).get("values")}
    if sweep is not None:
        if not isinstance(sweep, dict) or not sweep.get("param") or not sweep.get("values"):
            raise ConfigurationError("sweep needs both a parameter and a list of values")
        cfg["sweep"] = (sweep["param"], tuple(sweep["values"]))

    for key in ("methods", "C_grid"):
        if key in cfg:
            cfg[key] = tuple(cfg[key])
    try:
        return ExperimentSpec(scenario=ScenarioConfig(**scen),
                              backend=InferenceBackendConfig(**backend), **cfg)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def _cmd_gen_data(args, spec: ExperimentSpec) -> dict:
    ds = make_scenario(replace(spec.scenario, seed=spec.seed))
    out = Path(spec.output_dir)
    export_dataset(ds, out)
    return {"dir": str(out), "snr": ds.snr, "achieved_rho": ds.achieved_rho}


def _cmd_single(args, spec: ExperimentSpec) -> dict:
    if args.data is not None:
        ds = load_dataset(args.data)
    else:
        ds = make_scenario(replace(spec.scenario, seed=args.scenario_seed))
    C = spec.C_grid[0] if spec.C_grid else 200
    return run_single(ds, args.method, spec.output_dir, C=C, B=spec.B, gamma=spec.gamma,
                      alpha=spec.alpha, seed=spec.seed,
                      subsample_fraction=spec.subsample_fraction, backend=spec.backend)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as exc:
        parser.print_usage(sys.stderr)
        print(f"deltafwer: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        spec = build_spec(args, _read_config(args.config))
        if args.command == "sweep" and spec.sweep is None:
            raise ConfigurationError("sweep needs --param and --values (or a [sweep] table)")
        if args.command == "single":
            from .experiment import METHODS
            if args.method not in METHODS:
                raise ConfigurationError(f"unknown method {args.method!r}; choose from {list(METHODS)}")
        if getattr(args, "workers", None) is not None and args.workers < 1:
            raise ConfigurationError("--workers must be at least 1")
    except (ConfigurationError, ValueError) as exc:
        print(f"deltafwer: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "central":
            result = run_central_scenario(spec, args.workers, args.keep_pvalues, args.timing)
            print(f"wrote {len(result)} rows to {Path(spec.output_dir) / 'summary.csv'}")
        elif args.command == "sweep":
            result = run_sweep(spec, args.workers, args.keep_pvalues, args.timing)
            print(f"wrote {len(result)} rows to {Path(spec.output_dir) / 'summary.csv'}")
        elif args.command == "single":
            m = _cmd_single(args, spec)
            brief = {k: m[k] for k in ("method", "C", "delta", "n_selected") if k in m}
            print(json.dumps(brief, default=str))
        else:
            print(json.dumps(_cmd_gen_data(args, spec), indent=2, default=str))
    except ConfigurationError as exc:
        print(f"deltafwer: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"deltafwer: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
