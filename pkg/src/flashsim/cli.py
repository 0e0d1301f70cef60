"""``flashsim`` command line.

Exit codes: 0 success (all checks pass), 1 an invariance check failed,
2 invalid configuration, 3 infeasible request.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, parse_labels, parse_phases, read_config_file
from .nosignal import (
    InvarianceReport,
    distribution_sum_invariance,
    mi_bin_sensitivity,
    mutual_information,
    rho_bob,
    trace_distance,
)
from .opa import NUMERIC_G_MAX, BackendLimitError, TruncationError, amplify_numeric, default_cutoff, fock_rotate
from .photostats import ImperfectionModel, InfeasibleConditioningError, delta_distribution
from .protocol import DetectorModel, run_conditional, run_nonconditional
from .qstate import PM, basis_from_label, equatorial, equatorial_basis

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3
DIST_TOL = 1e-12
RHO_PROBE_GAINS = (0.2, 0.5, 1.0)
RHO_BASES = ("pm", "rl", "hv", "theta:0.392699082", "phi:1")


class InfeasibleRequest(Exception):
    pass


def _fmt(x) -> str:
    return format(float(x), ".9g")


def _emit_text(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _series(columns: list[str], rows: list[list], fmt: str) -> str:
    if fmt == "json":
        data = [dict(zip(columns, row)) for row in rows]
        return json.dumps(data, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _models(cfg: RunConfig):
    imp = ImperfectionModel(v_in=cfg.vin, p_inject=cfg.p_inject)
    det = DetectorModel(eta=cfg.eta, bs_transmission=cfg.bs_transmission, gain_noise_sigma=cfg.gain_noise_sigma)
    return imp, det


def cmd_fringe(cfg: RunConfig) -> int:
    phases = parse_phases(cfg.phases)
    if len(phases) < 2:
        raise ConfigError("fringe needs at least two phases")
    imp, det = _models(cfg)
    alice = [equatorial_basis(phi, f"phi:{phi:.9g}") for phi in phases]
    ds = run_conditional(cfg.gain, imp, det, alice, PM, cfg.trials, cfg.seed, trigger_outcome=1)
    rows = []
    for phi, basis in zip(phases, alice):
        s = ds.select(alice_basis=basis.label).summary()[0]
        rows.append([phi, s["mean_I_a"], s["mean_I_b"], s["mean_N"] if s["mean_N"] is not None else float("nan")])
    _emit_text(_series(["phase", "I_plus", "I_minus", "N_mean"], rows, cfg.format), cfg.out)
    return EXIT_OK


def _numeric_delta(delta_phi: float, cfg: RunConfig, condition_total: int | None):
    if condition_total is not None and condition_total % 2 == 0:
        raise InfeasibleRequest("an injected amplifier emits an odd total photon number")
    try:
        if condition_total is None:
            state = amplify_numeric(equatorial(delta_phi), cfg.gain, n_max=cfg.truncation, tol=DIST_TOL)
        else:
            # the conditioned shell is exact once it lies inside the cutoff
            n_max = max(cfg.truncation or default_cutoff(cfg.gain), condition_total)
            state = amplify_numeric(equatorial(delta_phi), cfg.gain, n_max=n_max, tol=1.0)
    except TruncationError as exc:
        raise InfeasibleRequest(str(exc)) from exc
    p = fock_rotate(state, PM).probabilities
    a, b = np.indices(p.shape)
    mask = (a + b) <= state.n_max
    if condition_total is not None:
        mask &= (a + b) == condition_total
    x = (a - b)[mask]
    w = p[mask]
    values = np.arange(x.min(), x.max() + 1)
    probs = np.bincount(x - x.min(), weights=w, minlength=values.size)
    if condition_total is not None:
        mass = probs.sum()
        if mass < 1e-12:
            raise InfeasibleRequest(f"total photon number {condition_total} has probability {mass:.3e}")
        values, probs = values[::2], probs[::2] / mass
    return values, probs


def cmd_dist(cfg: RunConfig) -> int:
    total = cfg.condition_total
    if cfg.resolved_backend == "numeric":
        values, probs = _numeric_delta(cfg.delta_phi, cfg, total)
    else:
        try:
            d = delta_distribution(cfg.delta_phi, cfg.gain, cfg.truncation, condition_total=total, tol=DIST_TOL)
        except InfeasibleConditioningError as exc:
            raise InfeasibleRequest(str(exc)) from exc
        values, probs = d.support, d.probs
    rows = [[int(x), float(p)] for x, p in zip(values, probs)]
    _emit_text(_series(["x", "probability"], rows, cfg.format), cfg.out)
    return EXIT_OK


def _bases(text: str | None, default: str) -> list:
    labels = parse_labels(text if text is not None else default)
    try:
        return [basis_from_label(lab) for lab in labels]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_protocol(cfg: RunConfig) -> int:
    imp, det = _models(cfg)
    bob = _bases(cfg.bob_bases, "pm,rl")
    try:
        if cfg.mode == "conditional":
            alice = _bases(cfg.alice_bases, "pm")
            ds = run_conditional(cfg.gain, imp, det, alice, bob, cfg.trials, cfg.seed, trigger_outcome=1)
        else:
            alice = _bases(cfg.alice_bases, "pm,rl")
            background = cfg.background if cfg.mode == "severed" else 0.0
            ds = run_nonconditional(
                cfg.gain, imp, det, alice, bob, cfg.trials, cfg.seed,
                trigger_mode=cfg.mode, background_fraction=background,
            )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    summary = {"config": ds.config, "groups": ds.summary()}
    text = json.dumps(summary, indent=2) + "\n"
    if cfg.out:
        ds.write_csv(cfg.out)
        Path(cfg.out).with_suffix(".summary.json").write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _rho_report(cfg: RunConfig, threshold: float) -> InvarianceReport:
    backend = cfg.resolved_backend
    gains = [cfg.gain] if cfg.gain <= NUMERIC_G_MAX else list(RHO_PROBE_GAINS)
    labels = [lab for lab in RHO_BASES if backend == "numeric" or basis_from_label(lab).phase is not None]
    worst = 0.0
    for g in gains:
        mats = [rho_bob(basis_from_label(lab), g, n_max=cfg.truncation, backend=backend) for lab in labels]
        for other in mats[1:]:
            worst = max(worst, trace_distance(mats[0], other))
    return InvarianceReport(
        "rho_bob_trace_distance",
        worst,
        threshold,
        {"gains": gains, "bases": labels, "backend": backend},
    )


def _sum_report(cfg: RunConfig, threshold: float) -> InvarianceReport:
    rng = np.random.default_rng([cfg.seed, 7])
    phases = [float(p) for p in rng.uniform(0.0, 2.0 * math.pi, 16)]
    reports = [distribution_sum_invariance(p, cfg.gain, cfg.truncation, threshold) for p in phases]
    worst = max(r.value for r in reports)
    return InvarianceReport(
        "distribution_sum_invariance",
        worst,
        threshold,
        {"gain": cfg.gain, "phases": phases, "n_max": reports[0].config["n_max"]},
    )


def _mi_report(cfg: RunConfig, threshold: float) -> InvarianceReport:
    imp, det = _models(cfg)
    ds = run_nonconditional(cfg.gain, imp, det, ["pm", "rl"], ["pm"], cfg.trials, cfg.seed, trigger_mode="xor")
    sens = mi_bin_sensitivity(ds, bins=(16, 32, 64), statistic="abs_N", seed=cfg.seed)
    main = sens[32]
    return InvarianceReport(
        "mutual_information_bits",
        main.bits,
        threshold,
        {
            "statistic": "abs_N",
            "bins": 32,
            "bootstrap_se": main.se,
            "shots": main.shots,
            "excluded": main.excluded,
            "bin_sensitivity": {str(b): sens[b].bits for b in sorted(sens)},
            "alice_bases": ["pm", "rl"],
            "trials_per_basis": cfg.trials,
            "seed": cfg.seed,
        },
    )


def cmd_nosignal(cfg: RunConfig) -> int:
    t = cfg.threshold
    reports = [
        _rho_report(cfg, 1e-10 if t is None else t),
        _sum_report(cfg, 1e-12 if t is None else t),
        _mi_report(cfg, 0.01 if t is None else t),
    ]
    text = json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
    _emit_text(text, cfg.out)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


COMMANDS = {"fringe": cmd_fringe, "dist": cmd_dist, "protocol": cmd_protocol, "nosignal": cmd_nosignal}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file (flags override it)")
    common.add_argument("--gain", help="amplifier gain g (default 4.45)")
    common.add_argument("--vin", help="input visibility (default 0.85)")
    common.add_argument("--p-inject", dest="p_inject", help="injection probability (default 0.4)")
    common.add_argument("--eta", help="detector quantum efficiency (default 0.13)")
    common.add_argument("--trials", help="shots per basis setting (default 2500)")
    common.add_argument("--seed", help="RNG seed (default 0)")
    common.add_argument("--truncation", help="Fock cutoff n_max (default: automatic)")
    common.add_argument("--backend", help="analytic, numeric or auto (default auto)")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", help="csv or json (default csv)")

    parser = argparse.ArgumentParser(prog="flashsim", description="FLASH amplifier and no-signaling simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fringe", parents=[common], help="mean signals versus injected phase")
    p.add_argument("--phases", help="count over [0, 2pi] or comma list of radians (default 13)")

    p = sub.add_parser("dist", parents=[common], help="exact distribution of n_plus - n_minus")
    p.add_argument("--delta-phi", dest="delta_phi", help="injected phase relative to the analysis basis")
    p.add_argument("--condition-total", dest="condition_total", help="condition on n_plus + n_minus (odd)")

    p = sub.add_parser("protocol", parents=[common], help="simulate conditional or non-conditional runs")
    p.add_argument("--mode", help="conditional, xor or severed")
    p.add_argument("--alice-bases", dest="alice_bases", help="comma list: pm, rl, hv, phi:<rad>, theta:<rad>")
    p.add_argument("--bob-bases", dest="bob_bases", help="comma list of equatorial bases (default pm,rl)")
    p.add_argument("--background", help="untriggered background fraction in severed mode")

    p = sub.add_parser("nosignal", parents=[common], help="invariance report bundle")
    p.add_argument("--threshold", help="override every report threshold")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}
    try:
        file_layer = read_config_file(args.config) if args.config else {}
        cfg = RunConfig.from_layers(file_layer, flags)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"flashsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"flashsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleRequest, TruncationError, BackendLimitError) as exc:
        print(f"flashsim: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
