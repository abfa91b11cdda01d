"""Scenario runner: plot data, sweeps and Monte Carlo experiments.

Usage::

    cvqkd-lab fig3 --v 40 --loss 0:20:0.5 --out fig3.csv
    cvqkd-lab mc-attack --gain 2 --n 1000000 --seed 7 --format json
    cvqkd-lab fig4 --config run.cfg --eps 0.3

Exit codes: 0 ok, 2 configuration error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import montecarlo as mc
from .attack import constant_total_noise_scenario, rate_gap
from .config import SCENARIOS, ConfigError, RunConfig, build_config, parse_loss_range, read_config_file
from .keyrate import key_rate
from .model import ChannelModel, DetectorModel, Heterodyne, NoisyHomodyne, PerfectHomodyne, ProtocolParams
from .montecarlo import EstimationError, default_workers
from .optimizer import BracketError, gain_for_target_noise, optimal_added_noise, tolerable_excess_noise

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


class SolverFailure(RuntimeError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.12g}"


def _num(x):
    if isinstance(x, (bool, np.bool_, int, np.integer, str)) or x is None:
        return x if not isinstance(x, np.generic) else x.item()
    x = float(x)
    return float(f"{x:.12g}") if math.isfinite(x) else None


class Table:
    def __init__(self, columns, rows, clamp=()):
        self.columns = list(columns)
        self.rows = [list(r) for r in rows]
        # Negative key rates stay raw; clamped copies are appended as extra columns.
        for name in clamp:
            i = self.columns.index(name)
            self.columns.append(f"{name}_clamped")
            for r in self.rows:
                r.append(max(r[i], 0.0))

    def render(self, fmt: str, scenario: str) -> str:
        if fmt == "json":
            doc = {"scenario": scenario, "columns": self.columns, "rows": [[_num(v) for v in r] for r in self.rows]}
            return json.dumps(doc, indent=1) + "\n"
        lines = [",".join(self.columns)]
        lines += [",".join(_fmt(v) for v in r) for r in self.rows]
        return "\n".join(lines) + "\n"


class Report:
    def __init__(self, fields: dict):
        self.fields = fields

    def render(self, fmt: str, scenario: str) -> str:
        if fmt == "json":
            doc = {"scenario": scenario, **{k: _num(v) for k, v in self.fields.items()}}
            return json.dumps(doc, indent=1) + "\n"
        lines = ["field,value"] + [f"{k},{_fmt(v)}" for k, v in self.fields.items()]
        return "\n".join(lines) + "\n"


def _params(cfg: RunConfig) -> ProtocolParams:
    return ProtocolParams(V=cfg["v"], beta=cfg["beta"])


def _map(fn, items):
    workers = default_workers()
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ------------------------------------------------------------------ scenarios


def run_fig1a(cfg: RunConfig) -> Table:
    params, eta, n_el, eps = _params(cfg), cfg["eta"], cfg["n_el"], cfg["eps"]
    levels = (n_el, n_el * 7.0 / 8.0, n_el / 2.0)
    rows = []
    for loss in cfg.loss_grid():
        ch = ChannelModel.from_loss(loss, eps)
        rows.append([loss] + [key_rate(NoisyHomodyne(DetectorModel(eta, lv)), params, ch).k_raw for lv in levels])
    cols = ["loss_db", "k_nel_0041", "k_nel_0359", "k_nel_0205"]
    return Table(cols, rows, clamp=cols[1:])


def run_fig1b(cfg: RunConfig) -> Table:
    params, eta, n_el, eps = _params(cfg), cfg["eta"], cfg["n_el"], cfg["eps"]
    rows = []
    for loss in cfg.loss_grid():
        ch = ChannelModel.from_loss(loss, eps)
        gaps = [rate_gap(constant_total_noise_scenario(eps, n_el, eta, ch, g), params) for g in (1.0, 8.0 / 7.0, 2.0)]
        rows.append([loss] + [g.k_true for g in gaps] + [gaps[0].k_believed])
    cols = ["loss_db", "k_true_g1", "k_true_g87", "k_true_g2", "k_believed"]
    return Table(cols, rows, clamp=cols[1:])


def run_fig3(cfg: RunConfig) -> Table:
    params, chi_max = _params(cfg), cfg["chi_d_max"]

    def point(loss):
        pts = (
            tolerable_excess_noise(PerfectHomodyne(), params, loss),
            tolerable_excess_noise(Heterodyne(), params, loss),
            tolerable_excess_noise(NoisyHomodyne(), params, loss, optimize_chi_d=True, chi_d_max=chi_max),
        )
        for p in pts:
            if not p.converged:
                raise SolverFailure(f"frontier did not converge at {loss} dB: {p}")
        return [loss] + [p.eps_max for p in pts]

    rows = _map(point, list(cfg.loss_grid()))
    return Table(["loss_db", "eps_perfect_hom", "eps_heterodyne", "eps_noisy_hom"], rows)


def run_fig4(cfg: RunConfig) -> Table:
    params, eps = _params(cfg), cfg["eps"]
    detector = DetectorModel(cfg["eta"], cfg["n_el"])

    def point(loss):
        ch = ChannelModel.from_loss(loss, eps)
        opt = optimal_added_noise(params, ch, cfg["chi_d_max"])
        plan = gain_for_target_noise(detector, opt.chi_d_star)
        return [
            loss,
            opt.k_star,
            key_rate(PerfectHomodyne(), params, ch).k_raw,
            key_rate(Heterodyne(), params, ch).k_raw,
            opt.chi_d_star,
            plan.n_el_target,
            plan.gain,
        ]

    rows = _map(point, list(cfg.loss_grid()))
    cols = ["loss_db", "k_opt", "k_perfect", "k_het", "chi_d_star", "n_el_star", "gain_star"]
    return Table(cols, rows, clamp=["k_opt", "k_perfect", "k_het"])


def run_sweep(cfg: RunConfig) -> Table:
    params, eps = _params(cfg), cfg["eps"]
    noisy = NoisyHomodyne(DetectorModel(cfg["eta"], cfg["n_el"], cfg["gain"]))
    rows = []
    for loss in cfg.loss_grid():
        ch = ChannelModel.from_loss(loss, eps)
        rows.append(
            [loss, ch.T]
            + [key_rate(p, params, ch).k_raw for p in (PerfectHomodyne(), Heterodyne(), noisy)]
        )
    cols = ["loss_db", "transmission", "k_perfect", "k_het", "k_noisy"]
    return Table(cols, rows, clamp=cols[2:])


def _lo_profile(cfg: RunConfig, gain: float) -> mc.LoProfile:
    text = cfg["mc.lo_profile"]
    kind, _, rest = text.partition(":")
    if kind == "constant" and not rest:
        return mc.ConstantLo(gain)
    if kind == "stochastic":
        parts = rest.split(":")
        try:
            rel = float(parts[0])
            seed = int(parts[1]) if len(parts) > 1 else cfg["mc.seed"] + 1
        except (ValueError, IndexError):
            raise ConfigError(f"'mc.lo_profile' bad stochastic profile {text!r}") from None
        return mc.StochasticLo(rel, seed, mean_gain=gain)
    raise ConfigError(f"'mc.lo_profile' must be 'constant' or 'stochastic:REL[:SEED]', got {text!r}")


def _run_mc(cfg: RunConfig, attack_gain: float, scheme: str) -> Report:
    params = _params(cfg)
    loss = cfg["loss_db_range.start"]
    ch = ChannelModel.from_loss(loss, cfg["eps"])
    detector = DetectorModel(cfg["eta"], cfg["n_el"])
    n, seed = cfg["mc.n"], cfg["mc.seed"]
    profile = _lo_profile(cfg, attack_gain)

    fields = {"n": n, "seed": seed, "loss_db": loss, "transmission": ch.T, "eps_true": ch.epsilon, "lo_gain": attack_gain}
    if cfg["mc.stabilizer"]:
        cfg_stab = mc.StabilizerConfig(
            target_intensity=detector.lo_photons_cal, monitor_noise_rel=cfg["mc.monitor_noise"]
        )
        arriving = detector.lo_photons_cal * mc.lo_gains(profile, n)
        stab = mc.stabilize_lo(arriving, cfg_stab, seed=seed + 2)
        profile = mc.SequenceLo(stab.stabilized / detector.lo_photons_cal)
        fields.update(
            stabilizer_clipped=stab.clipped,
            stabilizer_max_residual=float(stab.residuals.max()),
        )
    batch = mc.simulate_batch(params, ch, detector, profile, n, seed)
    if cfg["mc.export"]:
        mc.write_batch(batch, cfg["mc.export"])
    y = mc.normalize_batch(batch, detector, scheme)
    report = mc.estimate_parameters(batch.matched_alice(), y, params, detector)
    eta_t = detector.eta * ch.T
    constant = isinstance(_lo_profile(cfg, attack_gain), mc.ConstantLo)
    # LO gain seen by the detector once the stabilizer (if any) has acted.
    g = 1.0 if cfg["mc.stabilizer"] else attack_gain
    fields.update(normalization=scheme, saturated=int(batch.saturated.sum()))
    fields.update(report.as_dict())
    if constant:
        # Instantaneous scaling divides the fixed electronic variance by the LO gain;
        # calibrated scaling instead inflates every optical term by it.
        optical = mc.analytic_bob_variance(params.V, ch.T, ch.epsilon, detector.eta, 0.0)
        if scheme == "instantaneous":
            var_y, cov_scale = optical + detector.n_el / g, 1.0
        else:
            var_y, cov_scale = g * optical + detector.n_el, g
        fields.update(
            var_y_analytic=var_y,
            cov_ay_analytic=math.sqrt(cov_scale * eta_t) * (params.V - 1.0),
        )
    fields["eps_bias"] = report.eps_hat - ch.epsilon
    if constant and scheme == "instantaneous":
        fields["eps_bias_predicted"] = detector.n_el * (1.0 / g - 1.0) / eta_t
    return Report(fields)


def run_mc_validate(cfg: RunConfig) -> Report:
    return _run_mc(cfg, 1.0, "calibrated")


def run_mc_attack(cfg: RunConfig) -> Report:
    return _run_mc(cfg, cfg["gain"], "instantaneous")


def run_mc_stabilize(cfg: RunConfig) -> Report:
    return _run_mc(cfg, cfg["gain"], "instantaneous")


RUNNERS = {
    "fig1a": run_fig1a,
    "fig1b": run_fig1b,
    "fig3": run_fig3,
    "fig4": run_fig4,
    "sweep": run_sweep,
    "mc-validate": run_mc_validate,
    "mc-attack": run_mc_attack,
    "mc-stabilize": run_mc_stabilize,
}


def run_scenario(cfg: RunConfig) -> str:
    """Run a scenario and return its serialized output."""
    return RUNNERS[cfg.scenario](cfg).render(cfg.format, cfg.scenario)


# ------------------------------------------------------------------ argv


FLAG_KEYS = {
    "v": "v",
    "beta": "beta",
    "eta": "eta",
    "n_el": "n_el",
    "eps": "eps",
    "gain": "gain",
    "chi_d_max": "chi_d_max",
    "n": "mc.n",
    "seed": "mc.seed",
    "out": "out",
    "format": "format",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cvqkd-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="key = value config file; flags override it")
        s.add_argument("--v", type=float)
        s.add_argument("--beta", type=float)
        s.add_argument("--eta", type=float)
        s.add_argument("--n-el", dest="n_el", type=float)
        s.add_argument("--eps", type=float)
        s.add_argument("--loss", help="start:stop:step in dB, or a single value")
        s.add_argument("--gain", type=float)
        s.add_argument("--chi-d-max", dest="chi_d_max", type=float)
        s.add_argument("--n", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--out")
        s.add_argument("--format", choices=("csv", "json"))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        entries = read_config_file(args.config) if args.config else {}
        overrides = {key: getattr(args, flag) for flag, key in FLAG_KEYS.items()}
        if args.loss is not None:
            try:
                start, stop, step = parse_loss_range(args.loss)
            except ValueError as exc:
                raise ConfigError(f"--loss: {exc}") from None
            overrides.update({"loss_db_range.start": start, "loss_db_range.stop": stop, "loss_db_range.step": step})
        cfg = build_config(args.scenario, entries, overrides)
        text = run_scenario(cfg)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, BracketError, EstimationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
