"""Command-line experiment runner writing CSV datasets and timescale reports.

    tunneldecay eigen | decay | detector | closing-scan | figure <name>
        [--config file.json] [--out dir] [--threads n]

Exit codes: 0 success, 2 invalid configuration, 3 accuracy failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__, analysis
from .eigensolve import (ContinuumBasis, barrier_edge_for_opacity, make_barrier,
                         make_step_well, solve_bound_states)
from .errors import AccuracyError, InvalidParameterError, TunnelingError
from .evolve import closing_evolution, open_evolution, set_threads
from .observables import probe_traces, well_probability
from .spectral import INITIAL_KINDS, GridConfig, make_initial_state, project_open

EXIT_OK, EXIT_INVALID, EXIT_ACCURACY = 0, 2, 3
PEAK_SOURCES = ("flux", "density")


@dataclass
class SimConfig:
    """One experiment. Defaults reproduce the U0 = 16, a2 = 1.4 ground-state case."""

    name: str = "flagship"
    U0: float = 16.0
    a1: float = 1.0
    a2: float = 1.4
    initial: str = "bound_ground"
    t0: float | None = None
    k_max: float | None = None
    phase_budget: float = math.pi / 8.0
    convergence_tol: float = 1e-6
    edge_traces: bool = True
    detectors: tuple = (120.0,)
    detector_dt: float = 0.05
    detector_dx: float = 2.0
    peak_source: str = "flux"
    horizon: float = 60.0
    trace_dt: float = 0.05
    output: str = "tunneldecay_out"

    # nested JSON layout: section -> {json key: attribute}
    _SCHEMA = {
        "potential": {"U0": "U0", "a1": "a1", "a2": "a2"},
        "grid": {"k_max": "k_max", "phase_budget": "phase_budget",
                 "convergence_tol": "convergence_tol"},
        "probes": {"edge_traces": "edge_traces", "detectors": "detectors",
                   "detector_dt": "detector_dt", "detector_dx": "detector_dx",
                   "peak_source": "peak_source", "horizon": "horizon",
                   "trace_dt": "trace_dt"},
    }
    _TOP = {"name": "name", "initial_state": "initial", "closing_time": "t0",
            "output": "output"}

    def __post_init__(self):
        self.detectors = tuple(float(x) for x in self.detectors)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise InvalidParameterError("configuration must be a JSON object")
        kw = {}
        for key, val in data.items():
            if key in cls._TOP:
                kw[cls._TOP[key]] = val
            elif key in cls._SCHEMA:
                if not isinstance(val, dict):
                    raise InvalidParameterError("section %r must be an object" % key)
                for sub, v in val.items():
                    if sub not in cls._SCHEMA[key]:
                        raise InvalidParameterError("unknown key %s.%s" % (key, sub))
                    kw[cls._SCHEMA[key][sub]] = v
            else:
                raise InvalidParameterError("unknown configuration key %r" % key)
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidParameterError("bad JSON in %s: %s" % (path, exc)) from exc
        return cls.from_dict(data)

    def to_dict(self):
        out = {k: getattr(self, a) for k, a in self._TOP.items()}
        for sec, keys in self._SCHEMA.items():
            out[sec] = {k: getattr(self, a) for k, a in keys.items()}
        out["probes"]["detectors"] = list(self.detectors)
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def validate(self):
        def num(name, lo=None, strict=True, allow_none=False):
            v = getattr(self, name)
            if v is None and allow_none:
                return
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise InvalidParameterError("%s must be a finite number" % name)
            if lo is not None and (v <= lo if strict else v < lo):
                raise InvalidParameterError("%s must be %s %g" % (name, ">" if strict else ">=", lo))

        for name in ("U0", "a1", "horizon", "detector_dt", "trace_dt", "detector_dx",
                     "phase_budget", "convergence_tol"):
            num(name, 0.0)
        num("a2", self.a1)
        num("t0", 0.0, allow_none=True)
        num("k_max", 0.0, allow_none=True)
        if self.k_max is not None and self.k_max <= math.sqrt(2.0 * self.U0):
            raise InvalidParameterError("k_max must exceed the barrier threshold sqrt(2 U0)")
        if self.phase_budget > math.pi:
            raise InvalidParameterError("phase_budget must be <= pi")
        if self.convergence_tol >= 1.0:
            raise InvalidParameterError("convergence_tol must be < 1")
        if self.initial not in INITIAL_KINDS:
            raise InvalidParameterError("initial_state must be one of %s" % (INITIAL_KINDS,))
        if self.peak_source not in PEAK_SOURCES:
            raise InvalidParameterError("peak_source must be flux or density")
        if not isinstance(self.edge_traces, bool):
            raise InvalidParameterError("edge_traces must be true or false")
        if not isinstance(self.name, str) or not self.name:
            raise InvalidParameterError("name must be a non-empty string")
        if any(not math.isfinite(x) or x <= self.a2 for x in self.detectors):
            raise InvalidParameterError("detectors must lie beyond a2")
        needed = {"bound_ground": 1, "bound_excited": 2}.get(self.initial, 0)
        if needed and len(solve_bound_states(make_step_well(self.U0, self.a1))) < needed:
            raise InvalidParameterError("well has too few bound states for %s" % self.initial)
        return self

    def potentials(self):
        return make_step_well(self.U0, self.a1), make_barrier(self.U0, self.a1, self.a2)

    def grid_config(self):
        return GridConfig(k_max=self.k_max, phase_budget=self.phase_budget,
                          convergence_tol=self.convergence_tol)


@dataclass
class ArtifactSet:
    directory: str
    files: list = field(default_factory=list)
    report: analysis.TimescaleReport | None = None
    failure: str | None = None
    achieved: float | None = None

    @property
    def complete(self):
        return self.failure is None


# -------------------------------------------------------------------- output


def _header(config, extra=None):
    lines = ["# tunneldecay %s" % __version__, "# config %s" % config.to_json()]
    if extra:
        lines += ["# %s" % e for e in extra]
    return "\n".join(lines) + "\n"


def write_csv(path, config, columns, names, extra=None):
    cols = [np.asarray(c, dtype=float) for c in columns]
    with open(path, "w") as fh:
        fh.write(_header(config, extra))
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join("%.17g" % v for v in row) + "\n")
    return path


def _write_report(art, config):
    rep = art.report
    status = ["status partial: %s" % art.failure] if art.failure else None
    txt = os.path.join(art.directory, "report.txt")
    with open(txt, "w") as fh:
        fh.write(_header(config, status))
        fh.write(rep.to_text())
    csv = os.path.join(art.directory, "report.csv")
    with open(csv, "w") as fh:
        fh.write(_header(config, status))
        fh.write(rep.csv_header() + "\n" + rep.csv_row() + "\n")
    art.files += [txt, csv]


# --------------------------------------------------------------- experiments


def _times(horizon, dt):
    n = int(round(horizon / dt))
    return dt * np.arange(n + 1)


def _evolution(config, decomp, x_max, t_max):
    pot1, _ = config.potentials()
    cfg = config.grid_config()
    if config.t0 is None:
        return open_evolution(decomp, x_max, t_max, cfg)
    return closing_evolution(decomp, pot1, config.t0, x_max, t_max, cfg)


def run_experiment(config: SimConfig, out_dir=None) -> ArtifactSet:
    """Traces at the barrier edges and detectors plus the timescale report."""
    config.validate()
    out_dir = out_dir or config.output
    os.makedirs(out_dir, exist_ok=True)
    art = ArtifactSet(out_dir)
    rep = art.report = analysis.TimescaleReport()
    pot1, pot2 = config.potentials()
    psi0 = make_initial_state(config.initial, pot1)
    e0 = psi0.energy
    d = config.a2 - config.a1
    rep.T_k0 = 2.0 / math.sqrt(2.0 * e0)
    if e0 < config.U0:
        rep.t_BL = analysis.bl_time(config.U0, e0, d)
    if psi0.bound_state is not None:
        rep.E_tilde_0, rep.v_tilde_p = analysis.effective_exit_energy(
            psi0.bound_state, config.U0, config.a2)
    try:
        decomp = project_open(psi0, pot2, config.grid_config())
        if config.edge_traces or config.detectors:
            x_max = max([config.a2] + [x + config.detector_dx for x in config.detectors])
            evo = _evolution(config, decomp, x_max, config.horizon)
        if config.edge_traces:
            _edge_stage(config, evo, e0, art)
        if config.detectors:
            _detector_stage(config, evo, art)
    except AccuracyError as exc:
        art.failure, art.achieved = str(exc), exc.achieved
    _write_report(art, config)
    return art


def _edge_stage(config, evo, e0, art):
    rep = art.report
    t = _times(config.horizon, config.trace_dt)
    w1 = well_probability(evo, t)
    rho1, j1 = probe_traces(evo, config.a1, t)
    rho2, j2 = probe_traces(evo, config.a2, t)
    g = w1 / w1[0]
    art.files.append(write_csv(
        os.path.join(art.directory, "edges.csv"), config,
        [t, w1, np.log(g), rho1.values, j1.values, rho2.values, j2.values],
        ["t", "w1", "ln_g", "rho_a1", "J_a1", "rho_a2", "J_a2"]))
    trace = analysis.TraceSeries("w1", "well", t, w1)
    try:
        rep.t_l, rep.t_l_method = analysis.lifetime(trace)
        if e0 < config.U0:
            rep.A_fit = analysis.fitted_prefactor(rep.t_l, config.U0, e0,
                                                  config.a2 - config.a1)
    except TunnelingError:
        rep.t_l_method = "none"
    j2.meta["E0"] = e0
    try:
        rep.t_pl = analysis.plateau_onset(j2)
    except TunnelingError:
        pass


def _detector_stage(config, evo, art):
    rep = art.report
    t = _times(config.horizon, config.detector_dt)
    readings = []
    for X in config.detectors:
        rho_a, j_a = probe_traces(evo, X, t)
        rho_b, j_b = probe_traces(evo, X + config.detector_dx, t)
        art.files.append(write_csv(
            os.path.join(art.directory, "detector_X%g.csv" % X), config,
            [t, rho_a.values, j_a.values, rho_b.values, j_b.values],
            ["t", "rho_X", "J_X", "rho_X_dx", "J_X_dx"]))
        a, b = (j_a, j_b) if config.peak_source == "flux" else (rho_a, rho_b)
        try:
            t_x, peak = analysis.first_peak(a)
            v_x, t2 = analysis.tunneling_time_peak(a, b, config.a2)
        except TunnelingError:
            t_x = peak = v_x = t2 = math.nan
        readings.append((X, t_x, peak, v_x, t2))
    X, t_x, peak, v_x, t2 = readings[0]
    rep.detector = analysis.DetectorReading(X, t_x, peak, v_x)
    rep.t_tun2 = t2
    if math.isfinite(rep.v_tilde_p) and math.isfinite(t_x):
        rep.t_tun1 = analysis.tunneling_time_extrapolated(t_x, X, config.a2, rep.v_tilde_p)


def run_eigen(config: SimConfig, out_dir=None, k_points=None):
    """Bound states of U1 and continuum state data of U2 on a k grid."""
    config.validate()
    out_dir = out_dir or config.output
    os.makedirs(out_dir, exist_ok=True)
    art = ArtifactSet(out_dir)
    pot1, pot2 = config.potentials()
    states = solve_bound_states(pot1)
    art.files.append(write_csv(
        os.path.join(out_dir, "bound_states.csv"), config,
        [[s.index for s in states], [s.energy for s in states], [s.k for s in states],
         [s.kappa for s in states], [s.amplitude for s in states]],
        ["j", "E", "k", "kappa", "amplitude"]))
    k = np.linspace(0.01, 15.0, 1500) if k_points is None else np.asarray(k_points)
    k = k[np.abs(k - math.sqrt(2.0 * config.U0)) > 1e-6]
    basis = ContinuumBasis(pot2, k)
    d, f = basis.segment_coefficients(1)
    art.files.append(write_csv(
        os.path.join(out_dir, "continuum.csv"), config,
        [k, basis.energy, basis.well_amplitude, d, f, basis.theta],
        ["k", "E", "C", "D", "F", "theta"]))
    return art


def run_spectrum(config: SimConfig, out_dir=None, k_hi=15.0, dk=0.002):
    """G(k) on a uniform grid plus the resonance list."""
    config.validate()
    out_dir = out_dir or config.output
    os.makedirs(out_dir, exist_ok=True)
    art = ArtifactSet(out_dir)
    pot1, pot2 = config.potentials()
    decomp = project_open(make_initial_state(config.initial, pot1), pot2,
                          config.grid_config())
    k = np.arange(dk, k_hi, dk)
    k = k[np.abs(k - math.sqrt(2.0 * config.U0)) > 1e-6]
    extra = ["resonance k=%.17g fwhm=%.17g" % (r["k"], r["fwhm"]) for r in decomp.resonances]
    art.files.append(write_csv(os.path.join(out_dir, "G_%s.csv" % config.name), config,
                               [k, decomp(k)], ["k", "G"], extra))
    return art


def run_closing_scan(config: SimConfig, t0_list, out_dir=None, with_detector=True):
    config.validate()
    out_dir = out_dir or config.output
    os.makedirs(out_dir, exist_ok=True)
    art = ArtifactSet(out_dir)
    X = config.detectors[0] if (with_detector and config.detectors) else None
    rows = analysis.closing_time_scan(config, t0_list, detector=X,
                                      t_window=(0.0, config.horizon),
                                      dt=config.detector_dt)
    art.files.append(write_csv(
        os.path.join(out_dir, "closing_scan.csv"), config,
        [[r.t0 for r in rows], [r.escaped_fraction for r in rows], [r.t_X for r in rows]],
        ["t0", "escaped_fraction", "t_X"]))
    return art


def run_mesh(config: SimConfig, x_range, t_range, nx, nt, tag, out_dir=None):
    """Flux on an (x, t) mesh, long format."""
    config.validate()
    out_dir = out_dir or config.output
    os.makedirs(out_dir, exist_ok=True)
    art = ArtifactSet(out_dir)
    _, pot2 = config.potentials()
    decomp = project_open(make_initial_state(config.initial, config.potentials()[0]),
                          pot2, config.grid_config())
    x = np.linspace(*x_range, nx)
    t = np.linspace(*t_range, nt)
    evo = _evolution(config, decomp, x_range[1], t_range[1])
    psi, dpsi = evo.fields(x, t)
    j = np.imag(np.conj(psi) * dpsi)
    xx, tt = np.meshgrid(x, t, indexing="ij")
    art.files.append(write_csv(os.path.join(out_dir, "flux_mesh_%s.csv" % tag), config,
                               [xx.ravel(), tt.ravel(), j.ravel()], ["x", "t", "J"]))
    return art


# ------------------------------------------------------------------- figures


def _opaque(U0, kind, kappa_d=2.0, a1=1.0):
    e = make_initial_state(kind, make_step_well(U0, a1)).energy
    return barrier_edge_for_opacity(U0, a1, kappa_d, e)


def figure_configs(name):
    """Bundled configurations mirroring each figure's parameter set."""
    base = SimConfig(detectors=(), edge_traces=True)
    sin = "infinite_well"
    if name == "fig2":
        return [replace(base, name="fig2_phi0"),
                replace(base, name="fig2_sin", initial=sin, a2=1.42)]
    if name == "fig3":
        return [replace(base, name="fig3a_U16", horizon=60.0),
                replace(base, name="fig3a_U10", U0=10.0, a2=_opaque(10.0, "bound_ground"),
                        horizon=60.0),
                replace(base, name="fig3b_U16", initial=sin, a2=1.42, horizon=60.0),
                replace(base, name="fig3b_U10", initial=sin, a2=1.63, horizon=60.0, U0=10.0)]
    if name == "fig4":
        return [replace(base, name="fig4_U%g" % u, U0=u, a2=_opaque(u, "bound_ground"),
                        horizon=10.0, trace_dt=0.01) for u in (10.0, 16.0, 24.0)]
    if name == "fig5":
        width = [replace(base, name="fig5a_kd%g" % kd, a2=_opaque(16.0, "bound_ground", kd),
                         horizon=10.0, trace_dt=0.01) for kd in (1.5, 2.0, 2.5)]
        height = []
        for kd in (1.5, 2.0, 2.5):
            u = _height_for_opacity(kd, 0.4)
            height.append(replace(base, name="fig5b_kd%g" % kd, U0=u, horizon=10.0,
                                  trace_dt=0.01))
        return width + height
    if name == "fig6":
        return [replace(base, name="fig6_U16", a2=1.05, horizon=3.0, trace_dt=0.005),
                replace(base, name="fig6_U10", U0=10.0, a2=1.06, horizon=3.0,
                        trace_dt=0.005)]
    if name == "fig7":
        return [replace(base, name="fig7", U0=10.0, a2=1.63, initial=sin, horizon=3.0,
                        trace_dt=0.002)]
    if name == "fig8":
        return [replace(base, name="fig8", edge_traces=False, detectors=(60.0, 90.0, 120.0),
                        horizon=100.0)]
    if name == "fig9":
        return [replace(base, name="fig9", edge_traces=False)]
    if name == "fig10":
        return [replace(base, name="fig10", edge_traces=False, detectors=(120.0,),
                        horizon=100.0)]
    raise InvalidParameterError("unknown figure %r" % name)


def _height_for_opacity(kappa_d, d, a1=1.0):
    """U0 with kappa d = kappa_d at fixed width d (ground-state energy)."""
    from scipy.optimize import brentq

    def gap(u):
        e = solve_bound_states(make_step_well(u, a1))[0].energy
        return math.sqrt(2.0 * (u - e)) * d - kappa_d
    return brentq(gap, 3.0, 500.0, xtol=1e-12)


FIGURES = tuple("fig%d" % i for i in range(2, 11))
FIG9_MESHES = {"short": ((0.0, 6.0), (0.0, 3.0), 121, 151),
               "long": ((80.0, 130.0), (30.0, 60.0), 251, 151)}
FIG10_FRACTIONS = (math.inf, 1.0 / 3.0, 1.0 / 6.0, 1.0 / 9.0)


def reproduce_figure(name, out_dir):
    if name not in FIGURES:
        raise InvalidParameterError("unknown figure %r (choose from %s)" % (name, FIGURES))
    out = os.path.join(out_dir, name)
    arts = []
    if name == "fig2":
        return [run_spectrum(c, out) for c in figure_configs(name)]
    if name == "fig9":
        cfg = figure_configs(name)[0]
        return [run_mesh(cfg, xr, tr, nx, nt, tag, out)
                for tag, (xr, tr, nx, nt) in FIG9_MESHES.items()]
    if name == "fig10":
        cfg = figure_configs(name)[0]
        t_l = _flagship_lifetime(cfg)
        arts = []
        for frac in FIG10_FRACTIONS:
            c = replace(cfg, name="fig10_t0_%s" % ("inf" if math.isinf(frac) else
                                                    "tl_over_%d" % round(1 / frac)),
                        t0=None if math.isinf(frac) else frac * t_l)
            arts.append(run_experiment(c, os.path.join(out, c.name)))
        return arts
    for c in figure_configs(name):
        arts.append(run_experiment(c, os.path.join(out, c.name)))
    return arts


def _flagship_lifetime(cfg):
    c = replace(cfg, detectors=(), edge_traces=True, horizon=40.0, t0=None)
    pot1, pot2 = c.potentials()
    decomp = project_open(make_initial_state(c.initial, pot1), pot2, c.grid_config())
    evo = open_evolution(decomp, c.a2, c.horizon, c.grid_config())
    t = _times(c.horizon, c.trace_dt)
    return analysis.lifetime(analysis.TraceSeries("w1", "well", t, well_probability(evo, t)))[0]


# ----------------------------------------------------------------------- main


def build_parser():
    p = argparse.ArgumentParser(prog="tunneldecay", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads (affects speed only)")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("eigen", parents=[common], help="bound and continuum state data")
    sub.add_parser("decay", parents=[common], help="edge traces and timescale report")
    sub.add_parser("detector", parents=[common], help="detector traces and peak timing")
    scan = sub.add_parser("closing-scan", parents=[common],
                          help="escaped fraction and peak time versus closing time")
    scan.add_argument("--t0", type=float, nargs="+",
                      default=[0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 4.0, 6.0])
    scan.add_argument("--no-detector", action="store_true")
    fig = sub.add_parser("figure", parents=[common], help="bundled figure dataset")
    fig.add_argument("name", choices=FIGURES)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise InvalidParameterError("--threads must be >= 1")
        set_threads(args.threads)
        config = SimConfig.load(args.config) if args.config else SimConfig().validate()
        out = args.out or config.output
        if args.command == "eigen":
            arts = [run_eigen(config, out)]
        elif args.command == "decay":
            arts = [run_experiment(replace(config, detectors=()), out)]
        elif args.command == "detector":
            arts = [run_experiment(replace(config, edge_traces=False), out)]
        elif args.command == "closing-scan":
            arts = [run_closing_scan(config, sorted(args.t0), out,
                                     with_detector=not args.no_detector)]
        else:
            arts = reproduce_figure(args.name, out)
    except InvalidParameterError as exc:
        print("invalid configuration: %s" % exc, file=sys.stderr)
        return EXIT_INVALID
    except AccuracyError as exc:
        print("accuracy failure: %s (achieved %s)" % (exc, exc.achieved), file=sys.stderr)
        return EXIT_ACCURACY
    failed = [a for a in arts if not a.complete]
    for a in arts:
        for f in a.files:
            print(f)
    if failed:
        for a in failed:
            print("accuracy failure in %s: %s (achieved %s)" % (a.directory, a.failure,
                                                                a.achieved), file=sys.stderr)
        return EXIT_ACCURACY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
