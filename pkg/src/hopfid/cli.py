"""Command-line front end: ``hopfid <command> [options]``.

Commands read an INI configuration (``-c FILE``); every key has a default,
so a missing file or section means defaults.  Run ``hopfid config`` to print
the full default configuration.

Exit codes: 0 success or convergence, 1 usage or input error,
2 non-convergence, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .csvio import read_columns, write_columns
from .gridfn import BoundaryTag, GridFunction
from .model import (
    Contamination,
    DescriptorModel,
    Measurements,
    landau_ground_truth,
    simulate,
    synthesize_measurements,
)
from .ode import IntegrationError
from .optimize import IdentificationConfig, cg_identify, evaluate_j3
from .pod import (
    SnapshotEnsemble,
    correlation_matrix,
    pod_modes_and_amplitudes,
    symmetric_eigendecomposition,
)
from .sobolev import bin_a3_measurements, smooth_g3
from .validate import kappa_sweep

log = logging.getLogger("hopfid")

EXIT_OK, EXIT_INPUT, EXIT_NOCONV, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "paths": {
        "output_dir": ".",
        "measurements": "measurements.csv",
    },
    "model": {
        "sigma1": "0.151",
        "r_circle": "2.3",
        "omega1": "0.886",
        "gamma_rel": "0.15",
        "alpha_delta": "1.0",
        "n_nodes": "75",
    },
    "run": {
        "T": "70",
        "n_t": "500",
        "xi0": "",
        "rel_tol": "1e-8",
        "abs_tol": "1e-8",
    },
    "synth": {
        "second_harmonic": "0.0",
        "noise_std": "0.0",
        "seed": "0",
        "rel_tol": "1e-10",
        "abs_tol": "1e-10",
    },
    "identify": {
        "r_circle": "",
        "init_sigma1": "0.151",
        "init_omega1": "0.886",
        "init_gamma_rel": "0.15",
        "ell_grad": "1.0",
        "ell_g3": "0.1",
        "G": "0.224",
        "cg_restart": "20",
        "conv_tol": "1e-7",
        "max_iters": "200",
    },
    "validate": {
        "problem": "P1",
        "eps_min": "1e-9",
        "eps_max": "1e-1",
        "eps_count": "17",
        "n_t_list": "50,500,5000",
        "g1_scale": "0.8",
        "rel_tol": "1e-12",
        "abs_tol": "1e-12",
    },
}


class InputError(Exception):
    pass


def load_config(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_dict(DEFAULTS)
    if path is not None:
        if not Path(path).is_file():
            raise InputError(f"config file not found: {path}")
        cp.read(path)
    return cp


def _out(cp, name: str) -> Path:
    d = Path(cp["paths"]["output_dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def _xi0(cp, r_circle: float) -> np.ndarray:
    raw = cp["run"]["xi0"].strip()
    if not raw:
        return np.array([0.01 * r_circle, 0.0])
    parts = [float(x) for x in raw.split(",")]
    if len(parts) != 2:
        raise InputError("run.xi0 must be two comma-separated numbers")
    return np.array(parts)


def truth_model(cp) -> DescriptorModel:
    s = cp["model"]
    sigma1 = s.getfloat("sigma1")
    rc = s.getfloat("r_circle")
    return landau_ground_truth(sigma1, sigma1 / rc**2, s.getfloat("omega1"),
                               s.getfloat("gamma_rel") / rc**2, s.getint("n_nodes"),
                               s.getfloat("alpha_delta"))


def identification_config(cp, r_circle: float, n_t: int | None = None) -> IdentificationConfig:
    run, ident = cp["run"], cp["identify"]
    return IdentificationConfig(
        T=run.getfloat("T"), n_t=n_t or run.getint("n_t"),
        n_nodes=cp["model"].getint("n_nodes"),
        ell_grad=ident.getfloat("ell_grad"), ell_g3=ident.getfloat("ell_g3"),
        G=ident.getfloat("G"), cg_restart=ident.getint("cg_restart"),
        conv_tol=ident.getfloat("conv_tol"), max_iters=ident.getint("max_iters"),
        rel_tol=run.getfloat("rel_tol"), abs_tol=run.getfloat("abs_tol"),
        xi0=tuple(_xi0(cp, r_circle)))


def _load_measurements(cp) -> Measurements:
    path = _out(cp, cp["paths"]["measurements"])
    if not path.is_file():
        raise InputError(f"measurements file not found: {path} (run 'hopfid synth' first)")
    return Measurements.from_csv(path)


# commands --------------------------------------------------------------------

def cmd_synth(cp, args) -> int:
    m = truth_model(cp)
    syn = cp["synth"]
    cont = Contamination(syn.getfloat("second_harmonic"), syn.getfloat("noise_std"),
                         syn.getint("seed"))
    meas = synthesize_measurements(m, _xi0(cp, m.r_circle), cp["run"].getfloat("T"),
                                   cp["run"].getint("n_t"), cont,
                                   syn.getfloat("rel_tol"), syn.getfloat("abs_tol"))
    meas.to_csv(_out(cp, cp["paths"]["measurements"]))
    for name, g in (("g1", m.g1), ("g2", m.g2), ("g3", m.g3)):
        g.to_csv(_out(cp, f"{name}_true.csv"), f"ground-truth {name}", name)
    print(f"wrote {meas.n_t} samples over T = {meas.T:g} to {_out(cp, cp['paths']['measurements'])}")
    return EXIT_OK


def _r_circle(cp, meas: Measurements) -> float:
    raw = cp["identify"]["r_circle"].strip()
    if raw:
        return float(raw)
    # late-time average of the measured amplitude
    tail = meas.r_tilde[int(0.9 * meas.n_t):]
    return float(np.mean(tail))


_STATUS_EXIT = {"converged": EXIT_OK, "max_iters": EXIT_NOCONV, "stalled": EXIT_NOCONV,
                "failed": EXIT_NUMERIC}


def _write_history(cp, res, problem: str):
    write_columns(_out(cp, f"history_{problem}.csv"), res.history_columns(),
                  f"{problem.upper()} iteration history (status {res.status})")


def cmd_identify(cp, args) -> int:
    problem = args.problem.lower()
    meas = _load_measurements(cp)
    rc = _r_circle(cp, meas)
    cfg = identification_config(cp, rc, meas.n_t)
    ident = cp["identify"]
    n = cfg.n_nodes

    if problem == "p3":
        target = bin_a3_measurements(meas.r_tilde, meas, GridFunction.constant(0.0, rc, n))
        g3 = smooth_g3(target, cfg.ell_g3)
        g3.to_csv(_out(cp, "g3_hat.csv"), f"smoothed g3, ell = {cfg.ell_g3:g}", "g3")
        print(f"g3(0) = {g3(0.0):.6g}  g3(r°) = {g3(rc):.6g}  "
              f"J3 = {evaluate_j3(g3, meas.r_tilde, meas):.6g}")
        return EXIT_OK

    if problem == "p1":
        s1 = ident.getfloat("init_sigma1")
        g = GridFunction.from_function(lambda r: s1 * (1 - (r / rc) ** 2), rc, n)
        v = g.values.copy()
        v[-1] = 0.0
        g_init = GridFunction(rc, v, BoundaryTag(left_slope=0.0, right_value=0.0))
        partner = None
    else:
        g1_path = _out(cp, "g1_hat.csv")
        if not g1_path.is_file():
            raise InputError(f"{g1_path} not found; run 'hopfid identify p1' first")
        partner = GridFunction.from_csv(g1_path)
        if not math.isclose(partner.r_max, rc, rel_tol=1e-9):
            rc = partner.r_max
        w1, gr = ident.getfloat("init_omega1"), ident.getfloat("init_gamma_rel")
        g_init = GridFunction.from_function(lambda r: w1 + gr * (r / rc) ** 2, rc,
                                            partner.n_nodes,
                                            BoundaryTag(left_slope=0.0, right_slope=cfg.G))

    res = cg_identify(problem.upper(), g_init, partner, meas, cfg)
    _write_history(cp, res, problem)
    name = "g1" if problem == "p1" else "g2"
    res.g.to_csv(_out(cp, f"{name}_hat.csv"), f"identified {name} ({res.status})", name)
    last = res.history[-1] if res.history else None
    print(f"status = {res.status}  iterations = {len(res.history)}"
          + (f"  J = {last.cost:.6g}" if last else ""))
    if problem == "p1":
        print(f"g1(0) = {res.g(0.0):.6g}")
    else:
        print(f"g2(r°) = {res.g(rc):.6g}")
    return _STATUS_EXIT[res.status]


def cmd_validate_grad(cp, args) -> int:
    meas = _load_measurements(cp)
    v = cp["validate"]
    problem = v["problem"].upper()
    truth = truth_model(cp)
    rc = truth.r_circle
    zero = GridFunction.constant(0.0, rc, truth.g1.n_nodes)
    scale = v.getfloat("g1_scale")
    if problem == "P1":
        m = truth.replace(g1=truth.g1.axpy(scale - 1.0, truth.g1), g2=zero)
    elif problem == "P2":
        m = truth.replace(g2=truth.g2.axpy(scale - 1.0, truth.g2))
    else:
        raise InputError("validate.problem must be P1 or P2")
    gp = GridFunction.from_function(lambda r: -r**3, rc, truth.g1.n_nodes)
    eps = np.logspace(math.log10(v.getfloat("eps_min")), math.log10(v.getfloat("eps_max")),
                      v.getint("eps_count"))
    n_t_list = [int(x) for x in v["n_t_list"].split(",")]
    syn = cp["synth"]
    cont = Contamination(syn.getfloat("second_harmonic"), syn.getfloat("noise_std"),
                         syn.getint("seed"))
    xi0 = _xi0(cp, rc)
    tol = (v.getfloat("rel_tol"), v.getfloat("abs_tol"))

    def source(n_t):
        if n_t == meas.n_t:
            return meas
        return synthesize_measurements(truth, xi0, meas.T, n_t, cont, *tol)

    cfg = IdentificationConfig(T=meas.T, rel_tol=tol[0], abs_tol=tol[1], xi0=tuple(xi0))
    rows = kappa_sweep(problem, m, gp, eps, n_t_list, source, cfg)
    path = _out(cp, "kappa_sweep.csv")
    write_columns(path, {
        "epsilon": [r.epsilon for r in rows],
        "n_t": [r.n_t for r in rows],
        "kappa": [r.kappa for r in rows],
        "log10_abs_kappa_minus_1": [r.log10_abs_kappa_minus_1 for r in rows],
    }, f"kappa test, {problem}, g' = -r^3")
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def _read_snapshots(args):
    if args.matrix:
        p = Path(args.matrix)
        if not p.is_file():
            raise InputError(f"matrix file not found: {p}")
        X = np.load(p) if p.suffix == ".npy" else np.loadtxt(p, delimiter=",", comments="#")
        X = np.atleast_2d(X)
        w = np.ones(X.shape[1])
        if args.weights:
            w = np.loadtxt(args.weights, delimiter=",", comments="#").ravel()
        return SnapshotEnsemble(X, w), None
    d = Path(args.snapshot_dir)
    files = sorted(d.glob("*.csv"))
    files = [f for f in files if f.name != "weights.csv"]
    if len(files) < 2:
        raise InputError(f"need at least two snapshot CSV files in {d}")
    fields, xy = [], None
    for f in files:
        c = read_columns(f)
        missing = {"x", "y", "u", "v"} - set(c)
        if missing:
            raise InputError(f"{f}: missing columns {sorted(missing)}")
        pts = np.column_stack([c["x"], c["y"]])
        if xy is None:
            xy = pts
        elif pts.shape != xy.shape or not np.allclose(pts, xy):
            raise InputError(f"{f}: grid differs from the first snapshot")
        fields.append(np.column_stack([c["u"], c["v"]]))
    wpath = Path(args.weights) if args.weights else d / "weights.csv"
    if wpath.is_file():
        w = read_columns(wpath)
        w = w["weight"] if "weight" in w else next(iter(w.values()))
    else:
        w = np.ones(len(xy))
    return SnapshotEnsemble(np.array(fields), np.asarray(w, dtype=float)), xy


def cmd_pod(cp, args) -> int:
    if not (args.matrix or args.snapshot_dir):
        raise InputError("give a snapshot directory or --matrix FILE")
    ens, xy = _read_snapshots(args)
    lam, E = symmetric_eigendecomposition(correlation_matrix(ens))
    res = pod_modes_and_amplitudes(ens, (lam, E))
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_columns(out / "eigenvalues.csv",
                  {"index": np.arange(1, len(lam) + 1), "eigenvalue": res.eigenvalues},
                  "POD eigenvalues, descending")
    amp_cols = {"snapshot": np.arange(1, ens.m_snapshots + 1)}
    for i in range(res.n_modes):
        amp_cols[f"a{i + 1}"] = res.amplitudes[i]
    write_columns(out / "amplitudes.csv", amp_cols, "POD amplitudes per snapshot")
    for i in range(res.n_modes):
        mode = res.modes[i]
        if xy is not None:
            cols = {"x": xy[:, 0], "y": xy[:, 1], "u": mode[:, 0], "v": mode[:, 1]}
        else:
            cols = {"component": np.arange(mode.shape[0]), "value": mode[:, 0]}
        write_columns(out / f"mode_{i + 1}.csv", cols, f"POD mode {i + 1}")
    gram = np.array([[ens.inner(a, b) for b in res.modes] for a in res.modes])
    dev = float(np.abs(gram - np.eye(res.n_modes)).max())
    print(f"eigenvalues: {' '.join(f'{x:.6g}' for x in res.eigenvalues)}")
    print(f"max |<u_i,u_j> - delta_ij| = {dev:.3e}")
    return EXIT_OK


def cmd_simulate(cp, args) -> int:
    truth = truth_model(cp)
    parts = {}
    for name in ("g1", "g2", "g3"):
        path = getattr(args, name)
        if path:
            if not Path(path).is_file():
                raise InputError(f"{name} file not found: {path}")
            parts[name] = GridFunction.from_csv(path)
    m = truth.replace(**parts) if parts else truth
    run = cp["run"]
    sim = simulate(m, _xi0(cp, m.r_circle), run.getfloat("T"), run.getint("n_t"),
                   run.getfloat("rel_tol"), run.getfloat("abs_tol"))
    path = Path(args.output) if args.output else _out(cp, "trajectory.csv")
    write_columns(path, {"t": sim.times, "xi1": sim.states[:, 0], "xi2": sim.states[:, 1],
                         "r": sim.r, "theta": sim.theta, "a3": sim.a3},
                  "simulated trajectory")
    print(f"wrote {len(sim.times)} samples to {path}")
    return EXIT_OK


def cmd_config(cp, args) -> int:
    cp.write(sys.stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    keys = "\n".join(f"  [{s}] " + ", ".join(f"{k}={v or '(auto)'}" for k, v in d.items())
                     for s, d in DEFAULTS.items())
    p = argparse.ArgumentParser(
        prog="hopfid", formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Identify amplitude/phase propagators of an oscillator from time series.",
        epilog="configuration keys and defaults:\n" + keys
               + "\n\nexit codes: 0 ok, 1 input error, 2 not converged, 3 numerical failure")
    p.add_argument("-c", "--config", help="INI configuration file")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", help="write synthetic measurements and ground-truth g files")
    ip = sub.add_parser("identify", help="reconstruct g1 (p1), g2 (p2) or g3 (p3)")
    ip.add_argument("problem", choices=["p1", "p2", "p3"])
    sub.add_parser("validate-grad", help="kappa sweep of the adjoint gradient")
    pp = sub.add_parser("pod", help="snapshot POD")
    pp.add_argument("snapshot_dir", nargs="?",
                    help="directory of snapshot CSVs with columns x,y,u,v")
    pp.add_argument("--matrix", help="matrix file (.npy or CSV), one snapshot per row")
    pp.add_argument("--weights", help="cell weights (CSV); defaults to ones")
    pp.add_argument("-o", "--output-dir", default="pod_out")
    sp = sub.add_parser("simulate", help="integrate a model and dump the trajectory")
    for name in ("g1", "g2", "g3"):
        sp.add_argument(f"--{name}", help=f"{name} grid-function CSV (default: ground truth)")
    sp.add_argument("-o", "--output", help="trajectory CSV path")
    sub.add_parser("config", help="print the default configuration")
    return p


COMMANDS = {
    "synth": cmd_synth,
    "identify": cmd_identify,
    "validate-grad": cmd_validate_grad,
    "pod": cmd_pod,
    "simulate": cmd_simulate,
    "config": cmd_config,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cp = load_config(args.config)
        return COMMANDS[args.command](cp, args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, KeyError, configparser.Error, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (IntegrationError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
