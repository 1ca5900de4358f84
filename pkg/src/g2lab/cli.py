"""Batch entry point: ``g2lab simulate|symbol-check|validate [config] [--key=value ...]``.

The configuration is a flat ``key = value`` text file ('#' starts a
comment); command-line ``--key=value`` overrides win over the file.
Every malformed input is reported as a config error naming the offending
key, with exit status 2.  Exit statuses: 0 success, 1 failed validation
checks, 2 config error, 3 positivity loss, 4 numerical divergence,
5 failed symbol verdict.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import flows as fl
from . import symbol as sy
from . import validate as val
from .errors import (
    ConfigError,
    DivergenceError,
    GridError,
    NotPositiveError,
    PositivityLossError,
)
from .forms import KForm
from .g2 import standard_phi
from .grid import TorusGrid, make_initial_data, save_snapshot

EXIT_OK = 0
EXIT_VALIDATE_FAIL = 1
EXIT_CONFIG = 2
EXIT_POSITIVITY = 3
EXIT_DIVERGENCE = 4
EXIT_SYMBOL_FAIL = 5

# every recognized key with its default, as written in a config file
_DEFAULTS = {
    "flow": "deturck",
    "a_const": "0.0",
    "n": "4",
    "lengths": "1,1,1,1,1,1,1",
    "fd_order": "2",
    "init_kind": "standard",
    "init_eps": "0.01",
    "init_seed": "0",
    "init_band": "1",
    "init_path": "",
    "dt": "",
    "cfl": "0.1",
    "steps": "10",
    "csv_path": "diagnostics.csv",
    "snapshot_prefix": "",
    "snapshot_every": "0",
    "xi": "1,0,0,0,0,0,0",
    "sweep_count": "0",
    "sweep_radius": "0.1",
    "seed": "0",
    "negate_operator": "false",
    "spectra_csv": "",
}


@dataclass(frozen=True)
class RunConfig:
    """Validated run parameters; construction never allocates field data."""

    command: str
    flow: str
    a_const: float
    n: int
    lengths: tuple
    fd_order: int
    init_kind: str
    init_eps: float
    init_seed: int
    init_band: int
    init_path: str
    dt: float | None
    cfl: float
    steps: int
    csv_path: str
    snapshot_prefix: str
    snapshot_every: int
    xi: tuple
    sweep_count: int
    sweep_radius: float
    seed: int
    negate_operator: bool
    spectra_csv: str


def parse_config_text(text: str, source: str = "config") -> dict:
    """Flat ``key = value`` lines into a raw string mapping; total."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            word = line.split()[0]
            raise ConfigError(
                f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}",
                key=word,
            )
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}", key=key)
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate config key {key!r}", key=key)
        out[key] = value
    return out


def _parse_overrides(tokens) -> dict:
    out = {}
    for tok in tokens:
        if not tok.startswith("--") or "=" not in tok:
            raise ConfigError(
                f"override must look like --key=value, got {tok!r}", key=tok
            )
        key, value = tok[2:].split("=", 1)
        if key not in _DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}", key=key)
        out[key] = value
    return out


def build_config(command: str, raw: dict) -> RunConfig:
    """Type and range checks for every key; errors name the key."""
    vals = dict(_DEFAULTS)
    vals.update(raw)

    def fail(key, msg):
        raise ConfigError(f"config key {key!r}: {msg} (got {vals[key]!r})", key=key)

    def as_int(key, lo=None):
        try:
            v = int(vals[key])
        except ValueError:
            fail(key, "expected an integer")
        if lo is not None and v < lo:
            fail(key, f"must be >= {lo}")
        return v

    def as_float(key, positive=False):
        try:
            v = float(vals[key])
        except ValueError:
            fail(key, "expected a number")
        if not math.isfinite(v):
            fail(key, "must be finite")
        if positive and v <= 0:
            fail(key, "must be positive")
        return v

    def as_bool(key):
        s = vals[key].strip().lower()
        if s in ("true", "1", "yes", "on"):
            return True
        if s in ("false", "0", "no", "off"):
            return False
        fail(key, "expected true or false")

    flow = vals["flow"]
    if command == "symbol-check":
        if flow not in sy.SYMBOL_KINDS:
            fail("flow", f"symbol checks support {sy.SYMBOL_KINDS}")
    elif flow not in fl.FLOW_KINDS:
        fail("flow", f"expected one of {fl.FLOW_KINDS}")

    n = as_int("n", lo=4)
    fd_order = as_int("fd_order")
    if fd_order not in (2, 4):
        fail("fd_order", "must be 2 or 4")
    if fd_order == 4 and n < 6:
        fail("fd_order", "order-4 stencil needs n >= 6")

    parts = vals["lengths"].split(",")
    if len(parts) != 7:
        fail("lengths", "expected 7 comma-separated values")
    try:
        lengths = tuple(float(p) for p in parts)
    except ValueError:
        fail("lengths", "expected 7 comma-separated numbers")
    if any(not math.isfinite(x) or x <= 0 for x in lengths):
        fail("lengths", "axis lengths must be positive")

    init_kind = vals["init_kind"]
    if init_kind not in ("standard", "closed_perturbation", "file"):
        fail("init_kind", "expected standard, closed_perturbation or file")
    init_path = vals["init_path"]
    if init_kind == "file" and not init_path:
        fail("init_path", "required when init_kind = file")

    dt = None if vals["dt"] == "" else as_float("dt", positive=True)
    steps = as_int("steps", lo=0)
    snapshot_every = as_int("snapshot_every", lo=0)
    if snapshot_every > 0 and not vals["snapshot_prefix"]:
        fail("snapshot_prefix", "required when snapshot_every > 0")
    if command == "simulate" and not vals["csv_path"]:
        fail("csv_path", "required for simulate")

    parts = vals["xi"].split(",")
    if len(parts) != 7:
        fail("xi", "expected 7 comma-separated components")
    try:
        xi = tuple(float(p) for p in parts)
    except ValueError:
        fail("xi", "expected 7 comma-separated numbers")
    if command == "symbol-check" and int(vals["sweep_count"] or 0) == 0 and not any(xi):
        fail("xi", "covector must be nonzero")

    return RunConfig(
        command=command,
        flow=flow,
        a_const=as_float("a_const"),
        n=n,
        lengths=lengths,
        fd_order=fd_order,
        init_kind=init_kind,
        init_eps=as_float("init_eps"),
        init_seed=as_int("init_seed"),
        init_band=as_int("init_band", lo=1),
        init_path=init_path,
        dt=dt,
        cfl=as_float("cfl", positive=True),
        steps=steps,
        csv_path=vals["csv_path"],
        snapshot_prefix=vals["snapshot_prefix"],
        snapshot_every=snapshot_every,
        xi=xi,
        sweep_count=as_int("sweep_count", lo=0),
        sweep_radius=as_float("sweep_radius", positive=True),
        seed=as_int("seed"),
        negate_operator=as_bool("negate_operator"),
        spectra_csv=vals["spectra_csv"],
    )


def simulate(config: RunConfig) -> int:
    """Integrate the configured flow, streaming diagnostics rows to CSV."""
    grid = TorusGrid(config.n, lengths=config.lengths, fd_order=config.fd_order)
    phi = make_initial_data(
        grid,
        kind=config.init_kind,
        eps=config.init_eps,
        seed=config.init_seed,
        band=config.init_band,
        path=config.init_path or None,
    )
    state = fl.FlowState.from_phi(phi)
    kind = fl.FlowKind(config.flow, a_const=config.a_const)
    dt = config.dt if config.dt is not None else fl.default_dt(state, config.cfl)
    status = EXIT_OK
    done = 0
    with open(config.csv_path, "w") as fh:
        fh.write(fl.diagnostics_header() + "\n")
        fh.write(fl.monitors(state, kind).csv_row() + "\n")
        try:
            for i in range(1, config.steps + 1):
                state = fl.step(state, kind, dt)
                done = i
                fh.write(fl.monitors(state, kind).csv_row() + "\n")
                if config.snapshot_every and i % config.snapshot_every == 0:
                    save_snapshot(
                        state.phi, f"{config.snapshot_prefix}_step{i:06d}.g2field"
                    )
        except PositivityLossError as exc:
            print(f"positivity loss: {exc}", file=sys.stderr)
            status = EXIT_POSITIVITY
        except DivergenceError as exc:
            print(f"divergence: {exc}", file=sys.stderr)
            status = EXIT_DIVERGENCE
    if config.snapshot_prefix:
        # on failure this still holds the last accepted state
        save_snapshot(state.phi, f"{config.snapshot_prefix}_final.g2field")
    print(
        f"simulate {kind.name}: {done}/{config.steps} steps, "
        f"t = {state.t!r}, diagnostics in {config.csv_path}"
    )
    return status


def symbol_check(config: RunConfig) -> int:
    """Run the positivity checker on one problem or a random sweep."""
    if config.sweep_count > 0:
        rng = np.random.default_rng(config.seed)
        problems = [
            sy.random_problem(
                config.flow, rng, radius=config.sweep_radius, a_const=config.a_const
            )
            for _ in range(config.sweep_count)
        ]
    else:
        problems = [
            sy.SymbolProblem(
                config.flow,
                standard_phi(),
                KForm(1, np.asarray(config.xi)),
                a_const=config.a_const,
            )
        ]
    reports = []
    for p in problems:
        S = sy.assemble_symbol_exact(p)
        if config.negate_operator:
            S = -S  # test hook: flips every eigenvalue, so verdicts must fail
        reports.append(sy._report_for_matrix(S, p))
    if len(reports) == 1:
        print(reports[0].to_text())
    else:
        for i, r in enumerate(reports):
            print(
                f"problem {i}: {'pass' if r.verdict else 'fail'} "
                f"min_real={r.min_real!r}"
            )
        print(f"{sum(r.verdict for r in reports)}/{len(reports)} verdicts positive")
    if config.spectra_csv:
        with open(config.spectra_csv, "w") as fh:
            fh.write(sy.spectra_csv(reports) + "\n")
    return EXIT_OK if all(r.verdict for r in reports) else EXIT_SYMBOL_FAIL


def run_validate(config: RunConfig) -> int:
    results = val.run_checks(n=config.n, fd_order=config.fd_order)
    print(val.format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATE_FAIL


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="g2lab",
        description="Laplacian-type flows of 3-form geometries on the 7-torus",
    )
    parser.add_argument("command", choices=("simulate", "symbol-check", "validate"))
    parser.add_argument(
        "config", nargs="?", default=None, help="flat 'key = value' config file"
    )
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        raw = {}
        if args.config is not None:
            try:
                with open(args.config) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(
                    f"cannot read config file {args.config!r}: {exc}", key="config"
                )
            raw.update(parse_config_text(text, source=args.config))
        raw.update(_parse_overrides(extra))
        config = build_config(args.command, raw)
        if args.command == "simulate":
            return simulate(config)
        if args.command == "symbol-check":
            return symbol_check(config)
        return run_validate(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GridError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotPositiveError as exc:
        print(f"positivity failure: {exc}", file=sys.stderr)
        return EXIT_POSITIVITY
    except PositivityLossError as exc:
        print(f"positivity loss: {exc}", file=sys.stderr)
        return EXIT_POSITIVITY
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
