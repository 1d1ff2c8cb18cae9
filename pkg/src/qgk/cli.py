"""Command-line entry point.

Subcommands: run, linear, decay, compare, stability, invariants,
convergence, lp-spectrum.  Exit codes: 0 success, 1 validation failure,
2 numerical abort.  All randomness flows through seeds recorded in the
manifest, and identical manifests produce byte-identical CSV output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from . import bilinear, diagnostics as diag, decay_lab, littlewood_paley as lp
from .config import (
    ConfigError,
    ExperimentManifest,
    manifest_from_values,
    parse_config,
    resolve_run_config,
    write_csv,
    write_manifest_sidecar,
)
from .evolution import (
    RunConfig,
    SimulationAbort,
    TimeSeriesRecord,
    compare_runs,
    linear_evolve,
    simulate,
)
from .grid import SpectralField
from .quadrature import QuadratureError
from .snapshots import SnapshotError, read_snapshot, write_snapshot
from .spectral import (
    apply_multiplier,
    dealiased_product,
    forward_transform,
    inverse_transform,
    l2_norm,
    project_jn,
    random_band_field,
)
from .grid import multiplier_table, hermitian_defect


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qgk", description=__doc__)
    p.add_argument("--version", action="version", version=f"qgk {__version__}")
    sub = p.add_subparsers(dest="command")

    run = sub.add_parser("run", help="integrate the nonlinear equation")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True, help="output directory")

    lin = sub.add_parser("linear", help="exact linear flow with the config's datum and forcing")
    lin.add_argument("--config", required=True)
    lin.add_argument("--out", required=True)
    lin.add_argument("--times", default="", help="comma list; default: diagnostics cadence")

    dec = sub.add_parser("decay", help="radial-quadrature decay moments")
    dec.add_argument("--profile", default="gaussian:1.0")
    dec.add_argument("--mu", type=float, default=1.0)
    dec.add_argument("--moments", default="0,1,3")
    dec.add_argument("--window", default="1e2,1e6")
    dec.add_argument("--samples", type=int, default=32)
    dec.add_argument("--duhamel-eta", type=float, default=None)
    dec.add_argument("--duhamel-k", type=float, default=1.0)
    dec.add_argument("--out", required=True)

    cmp_ = sub.add_parser("compare", help="H^3 distance between two run directories")
    cmp_.add_argument("--run-a", required=True, help="nonlinear run directory")
    cmp_.add_argument("--run-b", required=True, help="linear run directory")
    cmp_.add_argument("--eta", type=float, required=True)
    cmp_.add_argument("--out", required=True)

    stab = sub.add_parser("stability", help="twin runs from a perturbed datum")
    stab.add_argument("--config", required=True)
    stab.add_argument("--perturb", required=True, help="perturbation snapshot")
    stab.add_argument("--out", required=True)

    inv = sub.add_parser("invariants", help="full property battery, pass/fail table")
    inv.add_argument("--config", required=True)
    inv.add_argument("--out", default="")

    conv = sub.add_parser("convergence", help="dt-refinement study of the balance residuals")
    conv.add_argument("--config", required=True)
    conv.add_argument("--dts", required=True, help="comma list of time steps")
    conv.add_argument("--out", required=True)

    lps = sub.add_parser("lp-spectrum", help="per-dyadic-block energy CSV")
    lps.add_argument("--snapshot", default="")
    lps.add_argument("--config", default="")
    lps.add_argument("--weight", type=float, default=0.0, help="2^(js) weight exponent")
    lps.add_argument("--out", required=True)
    return p


def dispatch(argv) -> int:
    parser = _build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    handler = {
        "run": _cmd_run,
        "linear": _cmd_linear,
        "decay": _cmd_decay,
        "compare": _cmd_compare,
        "stability": _cmd_stability,
        "invariants": _cmd_invariants,
        "convergence": _cmd_convergence,
        "lp-spectrum": _cmd_lp_spectrum,
    }[args.command]
    try:
        return handler(args)
    except (ConfigError, SnapshotError, FileNotFoundError, ValueError) as exc:
        print(f"qgk: error: {exc}", file=sys.stderr)
        return 1
    except (SimulationAbort, QuadratureError, FloatingPointError) as exc:
        print(f"qgk: numerical abort: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


# ---------------------------------------------------------------------------
# subcommand bodies


def _load(args, command: str):
    values = parse_config(args.config)
    cfg, warnings = resolve_run_config(values)
    manifest = manifest_from_values(command, values, warnings)
    return values, cfg, manifest


def _write_series(out_dir: str, cfg: RunConfig, records, manifest) -> None:
    cols = TimeSeriesRecord.columns(cfg.sigma_list)
    write_csv(os.path.join(out_dir, "series.csv"), cols,
              [rec.row() for rec in records], manifest)


def _write_snaps(out_dir: str, snaps, manifest) -> None:
    for idx, (t, field) in enumerate(snaps):
        path = os.path.join(out_dir, f"snap_{idx:06d}.qgk")
        write_snapshot(path, field, t)
        write_manifest_sidecar(path, manifest)


def _cmd_run(args) -> int:
    _, cfg, manifest = _load(args, "run")
    os.makedirs(args.out, exist_ok=True)
    result = simulate(cfg)
    manifest.warnings = tuple(manifest.warnings) + tuple(result.warnings)
    _write_series(args.out, cfg, result.records, manifest)
    final_path = os.path.join(args.out, "final.qgk")
    write_snapshot(final_path, result.final, cfg.t_end)
    write_manifest_sidecar(final_path, manifest)
    _write_snaps(args.out, result.snapshots, manifest)
    for w in manifest.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"run complete: t_end={cfg.t_end:g}, {len(result.records)} records -> {args.out}")
    return 0


def _cmd_linear(args) -> int:
    from .evolution import _attach_residuals, _record, prepare_state

    _, cfg, manifest = _load(args, "linear")
    os.makedirs(args.out, exist_ok=True)
    if args.times:
        times = [float(s) for s in args.times.split(",") if s.strip()]
    else:
        stride = cfg.diagnostics_every * cfg.dt
        times = [i * stride for i in range(cfg.n_steps // cfg.diagnostics_every + 1)]
    w0 = prepare_state(cfg)
    states = linear_evolve(w0, cfg.forcing, cfg.mu, times)
    lin_cfg = RunConfig(grid=cfg.grid, mu=cfg.mu, t_end=cfg.t_end, dt=cfg.dt,
                        initial_condition=w0, forcing=cfg.forcing,
                        sigma_list=cfg.sigma_list, disable_transport=True,
                        diagnostics_every=cfg.diagnostics_every)
    records = [_record(f, t, lin_cfg) for t, f in states]
    _attach_residuals(records, cfg.mu)
    _write_series(args.out, cfg, records, manifest)
    _write_snaps(args.out, states, manifest)
    print(f"linear flow evaluated at {len(times)} times -> {args.out}")
    return 0


def _cmd_decay(args) -> int:
    profile = decay_lab.parse_profile(args.profile)
    moments = tuple(int(s) for s in args.moments.split(",") if s.strip())
    lo, hi = (float(s) for s in args.window.split(","))
    series = decay_lab.decay_series(
        profile, moments=moments, mu=args.mu, window=(lo, hi), num=args.samples,
        duhamel_eta=args.duhamel_eta, duhamel_amplitude=args.duhamel_k)
    cols = ["t"]
    for k in moments:
        cols.append(f"M{k}")
    for k in moments:
        cols.append(f"env{k}")
    for k in (moments if args.duhamel_eta is not None else ()):
        cols.append(f"D{k}")
    rows = []
    for i, t in enumerate(series.times):
        row = [t]
        row += [series.moments[k][i] for k in moments]
        row += [series.envelopes[k][i] for k in moments]
        if args.duhamel_eta is not None:
            row += [series.duhamel[k][i] for k in moments]
        rows.append(row)
    values = {"profile": profile.kind, "mu": args.mu, "moments": args.moments,
              "window": args.window, "samples": args.samples,
              "duhamel_eta": args.duhamel_eta, "duhamel_k": args.duhamel_k}
    manifest = ExperimentManifest(command="decay",
                                  config_items=tuple(sorted((k, repr(v)) for k, v in values.items())),
                                  seed=0)
    write_csv(args.out, cols, rows, manifest)
    summary = {
        f"M{k}": {"slope": series.fitted[k][0], "stderr": series.fitted[k][1],
                  "envelope_rate": series.envelope_rates[k]}
        for k in moments
    }
    text = json.dumps(summary, indent=2, sort_keys=True)
    with open(args.out + ".summary.json", "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    print(text)
    return 0


def _load_run_dir(path: str):
    snaps = []
    for name in sorted(os.listdir(path)):
        if name.startswith("snap_") and name.endswith(".qgk"):
            field, t = read_snapshot(os.path.join(path, name))
            snaps.append((t, field))
    if not snaps:
        raise ConfigError(f"no snap_*.qgk snapshots in {path}")
    return snaps


def _cmd_compare(args) -> int:
    snaps_a = _load_run_dir(args.run_a)
    snaps_b = _load_run_dir(args.run_b)
    series = diag.compare_h3(snaps_a, snaps_b, args.eta)
    values = {"run_a": args.run_a, "run_b": args.run_b, "eta": args.eta}
    manifest = ExperimentManifest(command="compare",
                                  config_items=tuple(sorted((k, repr(v)) for k, v in values.items())),
                                  seed=0)
    rows = list(zip(series.times, series.z_h3, series.envelope_ratio))
    write_csv(args.out, ["t", "z_h3", "envelope_ratio"], rows, manifest)
    print(f"sup envelope ratio (t >= 1): {series.sup_ratio(1.0):.6e}")
    return 0


def _cmd_stability(args) -> int:
    _, cfg, manifest = _load(args, "stability")
    pert, _ = read_snapshot(args.perturb)
    if pert.grid.n != cfg.grid.n or pert.grid.box_length != cfg.grid.box_length:
        raise ConfigError("perturbation snapshot grid does not match the config grid")
    pert = SpectralField(cfg.grid, pert.coeffs)
    report = compare_runs(cfg, pert)
    rows = list(zip(report.times, report.e_delta, report.delta_h3,
                    report.growth_integral, report.envelope))
    manifest.warnings = tuple(manifest.warnings) + (
        f"fitted_C={report.fitted_c!r}", f"fitted_K={report.fitted_k!r}",
        f"envelope_margin={report.envelope_margin!r}")
    write_csv(args.out, ["t", "E_delta", "delta_H3", "growth_integral", "envelope"],
              rows, manifest)
    print(f"fitted C={report.fitted_c:.4g} K={report.fitted_k:.4g} "
          f"margin={report.envelope_margin:.4g}")
    return 0


def _cmd_convergence(args) -> int:
    values = parse_config(args.config)
    dts = [float(s) for s in args.dts.split(",") if s.strip()]
    if len(dts) < 2:
        raise ConfigError("convergence needs at least two dt values")
    rows = []
    for dt in dts:
        trial = dict(values)
        trial["dt"] = dt
        steps = round(trial["t_end"] / dt)
        trial["t_end"] = steps * dt
        cfg, _ = resolve_run_config(trial)
        result = simulate(cfg)
        rows.append([dt, result.records[-1].res_first, result.records[-1].res_second])
    res = np.array([r[1] for r in rows])
    dts_arr = np.array(dts)
    order = np.polyfit(np.log(dts_arr), np.log(np.maximum(res, 1e-300)), 1)[0]
    manifest = manifest_from_values("convergence", values, (f"dts={args.dts}",))
    write_csv(args.out, ["dt", "residual_first", "residual_second"], rows, manifest)
    print(f"fitted order: {order:.3f}")
    return 0


def _cmd_lp_spectrum(args) -> int:
    if bool(args.snapshot) == bool(args.config):
        raise ConfigError("lp-spectrum needs exactly one of --snapshot or --config")
    if args.snapshot:
        field, _ = read_snapshot(args.snapshot)
        manifest = ExperimentManifest(command="lp-spectrum",
                                      config_items=(("snapshot", repr(args.snapshot)),
                                                    ("weight", repr(args.weight))),
                                      seed=0)
    else:
        from .evolution import prepare_state

        values = parse_config(args.config)
        cfg, warnings = resolve_run_config(values)
        field = prepare_state(cfg)
        manifest = manifest_from_values("lp-spectrum", values, warnings)
    partition = lp.dyadic_partition(field.grid)
    rows = lp.block_spectrum(partition, field, args.weight)
    write_csv(args.out, ["j", "l2_of_block", "weighted"], rows, manifest)
    print(f"{len(rows)} dyadic blocks -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# invariants battery


def _invariant_checks(cfg: RunConfig, seed: int):
    """Fast property battery; yields (name, value, tolerance, passed)."""
    from . import evolution

    grid = cfg.grid
    mt = multiplier_table(grid)
    u = random_band_field(grid, seed + 1, 1.0, 3.0, 1, grid.n // 4)
    v = random_band_field(grid, seed + 2, 1.0, 3.0, 1, grid.n // 4)

    def rel(a, b):
        return abs(a - b) / max(abs(a), abs(b), 1e-300)

    # Parseval and round trip
    phys = inverse_transform(u)
    cell = grid.dx ** 2
    physical_sq = cell * float(np.sum(phys.samples ** 2))
    yield ("parseval", rel(physical_sq, l2_norm(u) ** 2), 1e-12)
    back = forward_transform(phys)
    yield ("round_trip", l2_norm(SpectralField(grid, back.coeffs - u.coeffs)) / l2_norm(u), 1e-13)
    # multiplier algebra
    ad = apply_multiplier(apply_multiplier(u, mt.a), mt.d)
    yield ("a_then_d_identity", l2_norm(SpectralField(grid, ad.coeffs - u.coeffs)) / l2_norm(u), 1e-14)
    p1 = project_jn(apply_multiplier(u, mt.h), 9.0)
    p2 = apply_multiplier(project_jn(u, 9.0), mt.h)
    yield ("multiplier_projection_commute",
           float(np.max(np.abs(p1.coeffs - p2.coeffs))), 1e-14)
    # divergence-free velocity and transport cancellations
    u1, u2 = bilinear.velocity(u)
    from .spectral import divergence

    div = divergence(u1, u2)
    yield ("velocity_divergence_free", l2_norm(div) / max(l2_norm(u1), 1e-300), 1e-13)
    scale = bilinear.pairing_scale(u, v)
    yield ("pairing_first", abs(bilinear.pairing_first(u, v)) / scale, 1e-12)
    yield ("pairing_second", abs(bilinear.pairing_second(u, v)) / scale, 1e-12)
    yield ("antisymmetry_residual", bilinear.antisymmetry_residual(u, v), 1e-12)
    # dealiased product versus the constant function
    one = SpectralField(grid, np.zeros(grid.shape, complex))
    one.coeffs[0, 0] = 1.0
    prod = dealiased_product(u, one)
    yield ("product_with_one", l2_norm(SpectralField(grid, prod.coeffs - u.coeffs)) / l2_norm(u), 1e-13)
    # Littlewood-Paley
    partition = lp.dyadic_partition(grid)
    total = np.zeros(grid.shape)
    for j in partition.block_range():
        total += partition.weights[j + 1]
    from .grid import band_keep

    keep = band_keep(grid).astype(bool)
    yield ("lp_partition_of_unity", float(np.max(np.abs(total[keep] - 1.0))), 1e-12)
    recon = np.zeros(grid.shape, complex)
    for j in partition.block_range():
        recon += lp.dyadic_block(partition, u, j).coeffs
    yield ("lp_reconstruction", l2_norm(SpectralField(grid, recon - u.coeffs)) / l2_norm(u), 1e-12)
    bony = lp.paraproduct(partition, u, v).coeffs + lp.paraproduct(partition, v, u).coeffs \
        + lp.remainder(partition, u, v).coeffs
    ref = dealiased_product(u, v)
    yield ("bony_reconstruction",
           l2_norm(SpectralField(grid, bony - ref.coeffs)) / max(l2_norm(ref), 1e-300), 1e-12)
    # single-mode exactness of the stepper
    from .spectral import cosine_field

    single = cosine_field(grid, 1, 0, 1.0)
    cfg1 = RunConfig(grid=grid, mu=1.0, t_end=10 * 0.05, dt=0.05,
                     initial_condition=single, diagnostics_every=10)
    result = evolution.simulate(cfg1)
    q = (grid.frequency_unit) ** 2
    h = (1.0 + q) * q * q / (1.0 + q + q * q)
    exact = np.exp(-h * cfg1.t_end)
    err = l2_norm(SpectralField(grid, result.final.coeffs - exact * single.coeffs)) / l2_norm(single)
    yield ("single_mode_exactness", err, 1e-12)
    yield ("hermitian_after_run", hermitian_defect(result.final), 1e-13)


def _cmd_invariants(args) -> int:
    _, cfg, manifest = _load(args, "invariants")
    rows = []
    all_pass = True
    print(f"{'check':36s} {'value':>12s} {'tolerance':>12s}  status")
    for name, value, tol in _invariant_checks(cfg, cfg.seed):
        ok = value <= tol
        all_pass &= ok
        rows.append([name, value, tol, int(ok)])
        print(f"{name:36s} {value:12.3e} {tol:12.1e}  {'PASS' if ok else 'FAIL'}")
    if args.out:
        write_csv(args.out, ["check", "value", "tolerance", "passed"],
                  rows, manifest)
    return 0 if all_pass else 1


if __name__ == "__main__":
    raise SystemExit(main())
