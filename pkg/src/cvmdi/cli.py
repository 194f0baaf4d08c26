"""Command-line interface: ``cvmdi {run, sweep, calibrate, keyrate}``.

Exit codes: 0 when the complete output was written, 2 for invalid
arguments or configuration, 3 when a pipeline stage failed (the stage is
named on stderr).
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import io, security
from .core import (PROFILES, ConfigError, SystemConfig, db_to_transmittance, load_config,
                   validate_config)
from .pipeline import StageError, run_simulation
from .relay import acquire_calibration

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3

SWEEPABLE = tuple(f.name for f in dataclasses.fields(SystemConfig)
                  if f.type in ("float", float) and f.name != "delays")


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` inclusive of ``stop`` (within rounding), or a single value."""
    parts = text.split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise ValueError(f"bad grid {text!r}; expected start:stop:step") from None
    if len(nums) == 1:
        return nums
    if len(nums) != 3 or nums[2] <= 0 or nums[1] < nums[0]:
        raise ValueError(f"bad grid {text!r}; expected start:stop:step with step > 0")
    a, b, step = nums
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [round(a + i * step, 12) for i in range(count)]


def _config(args) -> SystemConfig:
    profile = args.profile
    if args.config is None and profile is None:
        profile = "desk"
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = args.seed
    if getattr(args, "frames", None) is not None:
        overrides["frames"] = args.frames
    if getattr(args, "symbols", None) is not None:
        overrides["symbols_per_frame"] = args.symbols
    return load_config(args.config, profile, **overrides)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def fit_to_dict(fit: security.RelayFit) -> dict:
    return dict(tau_a=fit.tau_a, tau_b=fit.tau_b, xi_x=fit.xi_x, xi_p=fit.xi_p, xi=fit.xi,
                xi_mean=fit.xi_mean, xi_stderr=fit.xi_stderr, t_a=list(fit.t_a),
                t_b=list(fit.t_b), n_symbols=fit.n_symbols,
                xi_negative=fit.xi_negative)


def build_run_report(result) -> dict:
    cfg = result.config
    return dict(
        seed=cfg.master_seed,
        config=cfg.to_dict(),
        calibration=result.calibration.to_dict(),
        frames=[dict(frame=r.index, xi_x=r.fit.xi_x, xi_p=r.fit.xi_p, tau_a=r.fit.tau_a,
                     tau_b=r.fit.tau_b, delay_alice=r.sync.delay_alice,
                     delay_bob=r.sync.delay_bob, theta_alice=r.theta["alice"],
                     theta_bob=r.theta["bob"]) for r in result.frames],
        fit=fit_to_dict(result.fit),
        key_rate=result.summary,
    )


def cmd_run(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    result = run_simulation(cfg, workers=args.workers)
    io.write_csv(out / "frames.csv", io.FRAMES_CSV_HEADER,
                 [(r.index, r.fit.xi_x, r.fit.xi_p, r.fit.tau_a, r.fit.tau_b) for r in result.frames])
    if args.export_symbols:
        io.write_symbols_csv(out / "symbols.csv", [(r.index, r.gamma.gamma) for r in result.frames])
    io.write_json(out / "timing.json", result.timing)
    io.write_json(out / "report.json", build_run_report(result))
    rep = _protocol_report(result.summary)
    print(f"xi = {result.fit.xi:.4f} SNU (mean of {len(result.frames)} frames {result.fit.xi_mean:.4f}); "
          f"R = {rep['rate_per_use']:.4f} bit/use [{rep['direction']}, {rep['backend']}]")
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK


def _protocol_report(summary: dict) -> dict:
    return next(r for r in summary["reports"]
                if r["backend"] == "conditional-cm" and r["direction"] == summary["protocol_direction"])


def _sweep_point(job):
    cfg, simulate, backend, direction, workers = job
    if simulate:
        fit = run_simulation(cfg, workers=workers).fit
    else:
        fit = security.analytic_fit(cfg)
    return security.key_rate(fit, cfg, direction, backend)


def cmd_sweep(args) -> int:
    if args.param not in SWEEPABLE:
        raise ConfigError([f"{args.param}: not a sweepable parameter (choose from {', '.join(SWEEPABLE)})"])
    cfg = _config(args)
    grid = parse_grid(args.grid)
    points = [cfg.replace(**{args.param: v}) for v in grid]
    for p in points:
        validate_config(p)
    jobs = [(p, args.simulate, args.backend, args.direction, 1) for p in points]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            reports = list(pool.map(_sweep_point, jobs))
    else:
        reports = [_sweep_point(j) for j in jobs]
    out = _out_dir(args)
    first = "loss_db" if args.param.startswith("loss_") else args.param
    header = (first,) + io.SWEEP_CSV_HEADER[1:]
    io.write_csv(out / "sweep.csv", header,
                 [(v, r.rate_per_use, r.rate_per_second, r.i_ab, r.chi) for v, r in zip(grid, reports)])
    print(f"wrote {out / 'sweep.csv'} ({len(grid)} points)")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    try:
        cal = acquire_calibration(cfg)
    except Exception as exc:  # noqa: BLE001
        raise StageError("calibrate", exc) from exc
    sx, sp = cal.scales
    io.write_json(out / "calibration.json",
                  dict(seed=cfg.master_seed, config=cfg.to_dict(), calibration=cal.to_dict(),
                       snu_unit_x=sx.unit, snu_unit_p=sp.unit))
    print(f"vacuum variance x={cal.vacuum_x_var:.5f} p={cal.vacuum_p_var:.5f}; "
          f"electronic x={cal.elec_x_var:.5f} p={cal.elec_p_var:.5f}")
    return EXIT_OK


def cmd_keyrate(args) -> int:
    """Pure calculator from explicit physical parameters."""
    if args.profile:
        base = load_config(None, args.profile)
    else:
        base = load_config(None, "paper")
    v_bob = args.v if args.v_bob is None else args.v_bob
    cfg = base.replace(v_alice=args.v, v_bob=v_bob, loss_alice_db=args.loss_alice_db,
                       loss_bob_db=args.loss_bob_db, eta=args.eta, beta_rec=args.beta,
                       symbol_rate=args.symbol_rate, noise_split=args.split,
                       direction=args.direction or base.direction)
    tau_a = args.eta * db_to_transmittance(args.loss_alice_db)
    tau_b = args.eta * db_to_transmittance(args.loss_bob_db)
    fit = security.RelayFit(tau_a=tau_a, tau_b=tau_b, xi_x=args.xi, xi_p=args.xi,
                            t_a=(math.sqrt(tau_a / 2),) * 2, t_b=(math.sqrt(tau_b / 2),) * 2)
    backends = security.BACKENDS if args.backend == "all" else (args.backend,)
    directions = security.DIRECTIONS if args.direction is None else (args.direction,)
    reports = [security.key_rate(fit, cfg, d, b).to_dict() for b in backends for d in directions]
    doc = dict(inputs=dict(v_alice=args.v, v_bob=v_bob, loss_alice_db=args.loss_alice_db,
                           loss_bob_db=args.loss_bob_db, eta=args.eta, xi=args.xi,
                           beta_rec=args.beta, symbol_rate=args.symbol_rate, noise_split=args.split),
               protocol_direction=cfg.direction, reports=reports)
    text = io.dumps_json(doc)
    if args.out:
        io.write_json(_out_dir(args) / "keyrate.json", doc)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cvmdi", description="CV-MDI-QKD link simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="out"):
        sp.add_argument("config", nargs="?", help="key = value config file (layered over --profile)")
        sp.add_argument("--profile", choices=sorted(PROFILES))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default=out_default)

    r = sub.add_parser("run", help="simulate, recover and report one run")
    common(r)
    r.add_argument("--frames", type=int)
    r.add_argument("--symbols", type=int, help="symbols per frame")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--export-symbols", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="key rate over a parameter grid")
    common(s)
    s.add_argument("--param", default="loss_bob_db")
    s.add_argument("--grid", default="0:6:0.5")
    s.add_argument("--simulate", action="store_true", help="full simulation per point")
    s.add_argument("--frames", type=int)
    s.add_argument("--symbols", type=int)
    s.add_argument("--backend", choices=security.BACKENDS, default="conditional-cm")
    s.add_argument("--direction", choices=security.DIRECTIONS)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("calibrate", help="shot-noise and electronic-noise calibration")
    common(c)
    c.set_defaults(func=cmd_calibrate)

    k = sub.add_parser("keyrate", help="asymptotic key rate from explicit parameters")
    k.add_argument("--profile", choices=sorted(PROFILES))
    k.add_argument("--v", type=float, default=36.0, help="modulation variance (SNU)")
    k.add_argument("--v-bob", type=float)
    k.add_argument("--loss-alice-db", type=float, default=0.0)
    k.add_argument("--loss-bob-db", type=float, default=2.0)
    k.add_argument("--eta", type=float, default=0.94)
    k.add_argument("--xi", type=float, default=0.11, help="excess noise at the relay (SNU)")
    k.add_argument("--beta", type=float, default=0.97)
    k.add_argument("--symbol-rate", type=float, default=5e6)
    k.add_argument("--split", type=float, default=0.5)
    k.add_argument("--backend", choices=security.BACKENDS + ("all",), default="all")
    k.add_argument("--direction", choices=security.DIRECTIONS)
    k.add_argument("--out")
    k.set_defaults(func=cmd_keyrate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"cvmdi: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"cvmdi: stage '{exc.stage}' failed: {exc.cause}", file=sys.stderr)
        return EXIT_STAGE
    except (ValueError, OSError) as exc:
        print(f"cvmdi: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
