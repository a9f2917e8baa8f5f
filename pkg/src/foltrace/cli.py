"""Command-line surface.

Subcommands: periods, scan, probe, maslov, compare, oracle.  Exit code 0
means every pass flag in the requested run was true.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import harness, oracle
from .geometric import find_relative_periods
from .spectral import amplitude_probe, enumerate_spectrum, singularity_scan


def _add_common(parser):
    parser.add_argument("--config", required=True, help="YAML experiment config")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--cutoff", type=float, default=None, help="override cutoff")
    parser.add_argument("--tmax", type=float, default=None, help="override scan t_max")
    parser.add_argument("--seed", type=int, default=None, help="override sample seed")
    parser.add_argument(
        "--overwrite", action="store_true", help="allow clobbering outputs"
    )


def _load(args):
    config = harness.load_config(args.config)
    updates = {}
    if args.cutoff is not None:
        spectral = dict(config.spectral)
        spectral["cutoff"] = args.cutoff
        updates["spectral"] = spectral
    if args.tmax is not None:
        scan = dict(config.scan)
        scan["t_max"] = args.tmax
        updates["scan"] = scan
    if updates or args.seed is not None:
        config = harness.make_config(
            model=config.model,
            kernel=config.kernel,
            spectral=updates.get("spectral", config.spectral),
            scan=updates.get("scan", config.scan),
            decay=config.decay,
            tolerances=config.tolerances,
            output=config.output,
            seed=config.seed if args.seed is None else args.seed,
        )
    return config


def _cmd_periods(args):
    config = _load(args)
    model, kernel = harness.build_objects(config)
    comps = find_relative_periods(model, kernel, float(config.scan["t_max"]))
    print("t,v,w_norm,d_j,sigma_j,re_alpha0,im_alpha0,density_mass")
    for c in comps:
        print(
            f"{c.t!r},{' '.join(str(k) for k in c.v)},{c.shift_norm!r},{c.d},"
            f"{c.maslov},{c.alpha0.real!r},{c.alpha0.imag!r},{c.density_mass!r}"
        )
    return 0


def _cmd_scan(args):
    config = _load(args)
    model, kernel = harness.build_objects(config)
    sp = config.spectral
    table = enumerate_spectrum(model, float(sp["cutoff"]), kernel=kernel)
    eps = float(sp["eps"])
    result = singularity_scan(
        model,
        kernel,
        (float(config.scan.get("t_min", 5 * eps)), float(config.scan["t_max"])),
        eps,
        float(sp.get("scan_s", np.mean(sp["s_ladder"]))),
        table=table,
        floor_factor=float(config.scan.get("floor_factor", 10.0)),
        floor_abs=float(config.scan.get("floor_abs", 0.0)),
    )
    print("t,abs_amp")
    for t, a in zip(result.times, result.amps):
        print(f"{float(t)!r},{float(a)!r}")
    print(f"# peaks: {[(p.t, p.amp) for p in result.peaks]}", file=sys.stderr)
    return 0


def _cmd_probe(args):
    config = _load(args)
    model, kernel = harness.build_objects(config)
    sp = config.spectral
    table = enumerate_spectrum(model, float(sp["cutoff"]), kernel=kernel)
    probe = amplitude_probe(
        model,
        kernel,
        args.t0,
        np.asarray(sp["s_ladder"], dtype=float),
        float(sp["eps"]),
        table=table,
    )
    print("t0,s,re_amp,im_amp,tail_bound")
    for i, s in enumerate(probe.s_ladder):
        print(
            f"{probe.t0!r},{float(s)!r},{probe.amplitudes[i].real!r},"
            f"{probe.amplitudes[i].imag!r},{float(probe.tail_bounds[i])!r}"
        )
    print(
        f"# exponent={probe.fitted_exponent:.4f} phase_deg="
        f"{math.degrees(probe.fitted_phase):.3f} alpha0={probe.fitted_alpha0:.6g} "
        f"residual={probe.fit_residual:.2e} flags={probe.flags}",
        file=sys.stderr,
    )
    return 0


def _cmd_maslov(args):
    config = _load(args)
    model, kernel = harness.build_objects(config)
    comps = find_relative_periods(model, kernel, float(config.scan["t_max"]))
    print("t,v,sigma,exponent")
    for c in comps:
        print(f"{c.t!r},{' '.join(str(k) for k in c.v)},{c.maslov},{c.exponent!r}")
    return 0


def _cmd_compare(args):
    config = _load(args)
    report = harness.run_experiment(config)
    print(report.to_text())
    out_dir = args.out or config.output.get("dir")
    if out_dir:
        paths = harness.emit_outputs(
            report, out_dir, overwrite=args.overwrite or config.output.get("overwrite", False)
        )
        print(f"# outputs written to {out_dir}", file=sys.stderr)
    return 0 if report.all_passed else 1


def _cmd_oracle(args):
    config = _load(args)
    model, kernel = harness.build_objects(config)
    failures = 0

    comps = find_relative_periods(model, kernel, float(config.scan["t_max"]))
    if model.q == 1:
        brute = oracle.brute_force_periods(
            model, kernel.support, float(config.scan["t_max"])
        )
        by_v = {r.v: r for r in brute}
        worst = 0.0
        for c in comps:
            ref = by_v.get(c.v)
            if ref is None:
                failures += 1
                print(f"period {c.t:.6f} v={c.v}: MISSING from grid oracle")
                continue
            worst = max(worst, abs(ref.t - c.t))
        extra = set(by_v) - {c.v for c in comps}
        if extra:
            failures += 1
            print(f"grid oracle found extra components: {sorted(extra)}")
        ok = worst < 1e-6 and not extra and len(brute) == len(comps)
        failures += 0 if ok else 1
        print(f"periods vs grid oracle: max |dt| = {worst:.2e} "
              f"({len(comps)} components) {'PASS' if ok else 'FAIL'}")
    else:
        print("periods grid oracle: skipped (codimension > 1)")

    sp = config.spectral
    table = enumerate_spectrum(
        model, min(float(sp["cutoff"]), 800.0), kernel=kernel
    )
    rng = np.random.default_rng(config.seed)
    periods = [c.t for c in comps] or [1.0]
    worst_rel = 0.0
    from .spectral import GaussianProbe, smoothed_trace

    for _ in range(10):
        t0 = float(rng.choice(periods) + rng.uniform(-0.2, 0.2) * float(sp["eps"]))
        s = float(rng.uniform(40.0, 0.5 * table.cutoff))
        eps = float(sp["eps"])
        fast = smoothed_trace(model, kernel, GaussianProbe(t0, eps, s), table=table)
        slow = oracle.brute_force_trace(model, kernel, t0, eps, s, table)
        rel = abs(fast.value - slow) / max(abs(slow), 1e-300)
        worst_rel = max(worst_rel, rel)
    ok = worst_rel < 1e-10
    failures += 0 if ok else 1
    print(f"trace vs brute-force loop: max rel diff = {worst_rel:.2e} "
          f"{'PASS' if ok else 'FAIL'}")

    if model.q == 1 and comps:
        worst_rel = 0.0
        for t_val in sorted({c.t for c in comps}):
            closed = oracle.poisson_amplitude(model, kernel, t_val)
            group = [c for c in comps if abs(c.t - t_val) < 1e-9]
            pred = sum(c.alpha0 for c in group)
            rel = abs(pred - closed) / max(abs(closed), 1e-300)
            worst_rel = max(worst_rel, rel)
        ok = worst_rel < 1e-6
        failures += 0 if ok else 1
        print(f"leading coefficients vs closed summation: max rel diff = "
              f"{worst_rel:.2e} {'PASS' if ok else 'FAIL'}")

    return 0 if failures == 0 else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="foltrace",
        description="wave-trace laboratory for flat foliated torus models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func in (
        ("periods", _cmd_periods),
        ("scan", _cmd_scan),
        ("maslov", _cmd_maslov),
        ("compare", _cmd_compare),
        ("oracle", _cmd_oracle),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("probe")
    _add_common(p)
    p.add_argument("--t0", type=float, required=True, help="probe center time")
    p.set_defaults(func=_cmd_probe)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
