"""Command-line entry point.

One JSON config describes one experiment; flags can stand in for the
config in the common cases.  Artifacts are written atomically (temp file
+ rename) and are byte-identical under replay with the same seed.

Exit codes: 0 success, 2 collision abort, 3 validation error,
4 non-convergence, 5 certification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys as _sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

import numpy as np

from . import equilibria
from .conserved import detect_period
from .dynamics import FlowSpec, Trajectory, integrate, phi_identity_i1, phi_identity_i2
from .errors import (
    CertificationFailure,
    ChargeflowError,
    Collision,
    NoReturnFound,
    NonConvergence,
    ValidationError,
)
from .operators import ChargeConfiguration, Species, SystemCoefficients

__all__ = ["main", "run", "plot_svg", "validate_config"]

EXIT_OK = 0
EXIT_COLLISION = 2
EXIT_VALIDATION = 3
EXIT_NONCONVERGENCE = 4
EXIT_CERTIFICATION = 5


# -- config schema ------------------------------------------------------------

_TOP_KEYS = {
    "mode",
    "system",
    "initial",
    "integration",
    "equilibrium",
    "identities",
    "period",
    "output",
    "seed",
}
_MODES = {"simulate", "equilibrium", "conserved", "period", "verify-identities"}
_SYSTEM_KEYS = {"kind", "P", "U", "Lambda", "charges", "omega", "lambda", "n", "m", "sizes"}
_INITIAL_KEYS = {"species", "random", "certificate"}
_INTEGRATION_KEYS = {"t_end", "periods", "rtol", "atol", "samples_per_period", "samples"}
_EQ_KEYS = {"recipe", "indices", "b", "ts", "k"}
_ID_KEYS = {"phi", "trials", "n", "m", "scale"}
_PERIOD_KEYS = {"base_period", "tol", "max_multiple"}
_OUTPUT_KEYS = {"dir", "formats", "svg", "prefix"}

_DEFAULTS = {
    "rtol": 1e-10,
    "atol": 1e-12,
    "samples_per_period": 128,
    "period_tol": 1e-5,
}


def _reject_unknown(doc, allowed, where):
    unknown = set(doc) - allowed
    if unknown:
        raise ValidationError(f"unknown keys in {where}: {sorted(unknown)}")


def validate_config(doc: dict) -> dict:
    """Schema-check a run config; returns it with defaults filled in."""
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "config")
    mode = doc.get("mode")
    if mode not in _MODES:
        raise ValidationError(f"mode must be one of {sorted(_MODES)}")
    for key, allowed in (
        ("system", _SYSTEM_KEYS),
        ("initial", _INITIAL_KEYS),
        ("integration", _INTEGRATION_KEYS),
        ("equilibrium", _EQ_KEYS),
        ("identities", _ID_KEYS),
        ("period", _PERIOD_KEYS),
        ("output", _OUTPUT_KEYS),
    ):
        if key in doc:
            if not isinstance(doc[key], dict):
                raise ValidationError(f"{key} block must be an object")
            _reject_unknown(doc[key], allowed, key)
    if mode in ("simulate", "conserved", "period"):
        if "system" not in doc:
            raise ValidationError(f"{mode} needs a system block")
        if "initial" not in doc:
            raise ValidationError(f"{mode} needs initial conditions")
    if mode == "equilibrium" and "equilibrium" not in doc:
        raise ValidationError("equilibrium mode needs an equilibrium block")
    return doc


def _build_flow(system: dict) -> FlowSpec:
    kind = system.get("kind", "rational_omega")
    if kind == "rational_omega":
        omega = float(system.get("omega", 1.0))
        Lambda = float(system.get("Lambda", 1.0))
        n = int(system["n"])
        m = int(system["m"])
        return FlowSpec.rational_omega(omega, Lambda, n, m)
    if kind == "angular":
        return FlowSpec.angular(int(system["n"]), int(system["m"]))
    P = [complex(c[0], c[1]) if isinstance(c, list) else complex(c) for c in system["P"]]
    U = [complex(c[0], c[1]) if isinstance(c, list) else complex(c) for c in system["U"]]
    lam = system.get("lambda")
    if lam is not None:
        lam = complex(lam[0], lam[1]) if isinstance(lam, list) else complex(lam)
    if kind == "linear":
        sys_c = SystemCoefficients.linear(P, U, exact=False)
        return FlowSpec.linear(sys_c, int(system["n"]))
    if kind == "bilinear":
        sys_c = SystemCoefficients.bilinear(
            P, U, Lambda=float(system.get("Lambda", 1.0)), lam=lam, exact=False
        )
        return FlowSpec.bilinear(sys_c, int(system["n"]), int(system["m"]))
    if kind == "polylinear":
        charges = [float(q) for q in system["charges"]]
        sizes = [int(s) for s in system["sizes"]]
        sys_c = SystemCoefficients.polylinear(P, U, charges, lam=lam, exact=False)
        return FlowSpec.polylinear(sys_c, sizes)
    raise ValidationError(f"unknown system kind {kind!r}")


def system_to_config(flow: FlowSpec) -> dict:
    """Serialize a flow back into the config schema's system block."""
    kind = flow.kind.value
    doc = {"kind": kind}
    if kind == "angular":
        doc["n"], doc["m"] = flow.sizes
        return doc
    sys = flow.sys
    if kind == "rational_omega":
        doc["omega"] = sys.omega
        doc["Lambda"] = float(-complex(sys.charges[1]).real)
        doc["n"], doc["m"] = flow.sizes
        return doc
    P = sys.P.to_float() if sys.P.exact else sys.P
    U = sys.U.to_float() if sys.U.exact else sys.U
    doc["P"] = [[c.real, c.imag] for c in P.coeffs]
    doc["U"] = [[c.real, c.imag] for c in U.coeffs]
    if kind == "linear":
        doc["n"] = flow.sizes[0]
    elif kind == "bilinear":
        doc["Lambda"] = float(-complex(sys.charges[1]).real)
        doc["n"], doc["m"] = flow.sizes
    else:
        doc["charges"] = [float(complex(q).real) for q in sys.charges]
        doc["sizes"] = list(flow.sizes)
    return doc


def _random_initial(flow: FlowSpec, options: dict) -> ChargeConfiguration:
    seed = int(options.get("seed", 0))
    scale = float(options.get("scale", 1.0))
    min_sep = float(options.get("min_separation", 0.25)) * scale
    rng = np.random.default_rng(seed)
    total = sum(flow.sizes)
    for _ in range(1000):
        pts = rng.normal(size=total) * scale + 1j * rng.normal(size=total) * scale
        ok = all(
            abs(pts[i] - pts[j]) > min_sep
            for i in range(total)
            for j in range(i + 1, total)
        )
        if ok:
            break
    else:
        raise ValidationError("could not draw separated initial conditions")
    species = []
    at = 0
    for q, size in zip(flow.charges, flow.sizes):
        species.append(Species(q, tuple(pts[at : at + size])))
        at += size
    return ChargeConfiguration(tuple(species))


def _build_initial(flow: FlowSpec, initial: dict) -> ChargeConfiguration:
    if "random" in initial:
        return _random_initial(flow, initial["random"])
    species_doc = initial["species"]
    if len(species_doc) != len(flow.sizes):
        raise ValidationError(
            f"initial conditions have {len(species_doc)} species, "
            f"flow expects {len(flow.sizes)}"
        )
    species = []
    for sp_doc, q, size in zip(species_doc, flow.charges, flow.sizes):
        pts = [complex(p[0], p[1]) for p in sp_doc["positions"]]
        if len(pts) != size:
            raise ValidationError(
                f"species size {len(pts)} does not match flow size {size}"
            )
        charge = float(sp_doc.get("charge", q))
        species.append(Species(charge, tuple(pts)))
    return ChargeConfiguration(tuple(species))


# -- artifact writers ---------------------------------------------------------


def _atomic_write(path: str, text: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectory_csv(traj: Trajectory) -> str:
    header = ["t"]
    for s_idx, sp in enumerate(traj.states[0].species):
        for p_idx in range(len(sp.positions)):
            header.append(f"s{s_idx}_p{p_idx}_re")
            header.append(f"s{s_idx}_p{p_idx}_im")
    monitor_keys = []
    if traj.monitors:
        first = traj.monitors[0]
        if "bilinear_residual" in first:
            monitor_keys.append("residual")
        monitor_keys.append("min_sep")
        if "conserved" in first:
            monitor_keys.extend(
                f"I{k+1}" for k in range(len(first["conserved"]))
            )
    lines = [",".join(header + monitor_keys)]
    for idx, (t, state) in enumerate(zip(traj.times, traj.states)):
        row = [f"{t:.17g}"]
        for sp in state.species:
            for z in sp.positions:
                row.append(f"{z.real:.17g}")
                row.append(f"{z.imag:.17g}")
        if traj.monitors:
            mon = traj.monitors[idx]
            if "bilinear_residual" in mon:
                row.append(f"{mon['bilinear_residual']:.17g}")
            row.append(f"{mon['min_separation']:.17g}")
            if "conserved" in mon:
                row.extend(f"{v:.17g}" for v in mon["conserved"])
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def conserved_report(traj: Trajectory, flow: FlowSpec, period_info=None) -> dict:
    rows = []
    drift = []
    if traj.monitors and "conserved" in traj.monitors[0]:
        vals = np.array([m["conserved"] for m in traj.monitors])
        for t, v in zip(traj.times, vals):
            rows.append([float(t)] + [float(x) for x in v])
        base = np.maximum(np.abs(vals[0]), 1e-300)
        drift = [float(d) for d in np.max(np.abs(vals - vals[0]), axis=0) / base]
    doc = {"integrals": rows, "drift": drift}
    if period_info is not None:
        doc["period"] = {"k": period_info[0], "mismatch": period_info[1]}
    return doc


def plot_svg(traj: Trajectory, width: int = 640, height: int = 640) -> str:
    """One polyline per particle in its own (Re, Im) plane; the second
    species is drawn as a gray solid curve, further species dashed."""
    Z = traj.positions_array()
    all_re = Z.real.ravel()
    all_im = Z.imag.ravel()
    lo_x, hi_x = float(all_re.min()), float(all_re.max())
    lo_y, hi_y = float(all_im.min()), float(all_im.max())
    span = max(hi_x - lo_x, hi_y - lo_y, 1e-9)
    pad = 0.08 * span
    lo_x, lo_y = lo_x - pad, lo_y - pad
    span += 2 * pad

    def sx(v):
        return (v - lo_x) / span * (width - 20) + 10

    def sy(v):
        return height - ((v - lo_y) / span * (height - 20) + 10)

    styles = [
        'stroke="black" fill="none" stroke-width="1.2"',
        'stroke="gray" fill="none" stroke-width="2.0"',
        'stroke="black" fill="none" stroke-width="1.0" stroke-dasharray="4 3"',
    ]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">'
    ]
    col = 0
    for s_idx, sp in enumerate(traj.states[0].species):
        style = styles[min(s_idx, len(styles) - 1)]
        for p_idx in range(len(sp.positions)):
            zs = Z[:, col]
            col += 1
            if len(zs) == 1 or np.max(np.abs(zs - zs[0])) < 1e-12:
                dot_style = style.replace('fill="none"', 'fill="black"')
                parts.append(
                    f'<circle cx="{sx(zs[0].real):.3f}" cy="{sy(zs[0].imag):.3f}" '
                    f'r="3" {dot_style}/>'
                )
                continue
            pts = " ".join(
                f"{sx(z.real):.3f},{sy(z.imag):.3f}" for z in zs
            )
            parts.append(f'<polyline points="{pts}" {style}/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -- mode runners -------------------------------------------------------------


def _integration_params(doc: dict, flow: FlowSpec):
    block = doc.get("integration", {})
    rtol = float(block.get("rtol", _DEFAULTS["rtol"]))
    atol = float(block.get("atol", _DEFAULTS["atol"]))
    spp = int(block.get("samples_per_period", _DEFAULTS["samples_per_period"]))
    if "t_end" in block:
        t_end = float(block["t_end"])
    elif "periods" in block and flow.sys is not None and flow.sys.omega:
        t_end = float(block["periods"]) * 2 * math.pi / flow.sys.omega
    else:
        raise ValidationError("integration block needs t_end or periods")
    if flow.sys is not None and flow.sys.omega:
        base = 2 * math.pi / flow.sys.omega
        n_samples = max(2, int(round(t_end / base * spp)) + 1)
    else:
        n_samples = int(block.get("samples", 257))
    return t_end, rtol, atol, n_samples


def _out_path(doc, name):
    out = doc.get("output", {})
    prefix = out.get("prefix", "")
    return os.path.join(out.get("dir", "."), prefix + name)


def _run_simulate(doc: dict) -> int:
    flow = _build_flow(doc["system"])
    init = _build_initial(flow, doc["initial"])
    t_end, rtol, atol, n_samples = _integration_params(doc, flow)
    traj = integrate(flow, init, t_end, rtol=rtol, atol=atol, n_samples=n_samples)
    formats = doc.get("output", {}).get("formats", ["csv", "json"])
    if "csv" in formats:
        path = _out_path(doc, "trajectory.csv")
        _atomic_write(path, trajectory_csv(traj))
        print(f"wrote {path}")
    if "json" in formats and traj.monitors and "conserved" in traj.monitors[0]:
        path = _out_path(doc, "conserved.json")
        _atomic_write(path, json.dumps(conserved_report(traj, flow), indent=1))
        print(f"wrote {path}")
    if doc.get("output", {}).get("svg"):
        path = _out_path(doc, "trajectory.svg")
        _atomic_write(path, plot_svg(traj))
        print(f"wrote {path}")
    if traj.monitors:
        res = [m.get("bilinear_residual") for m in traj.monitors]
        res = [r for r in res if r is not None]
        if res:
            print(f"monitor residual: max {max(res):.3e}")
        seps = [m["min_separation"] for m in traj.monitors]
        print(f"monitor min_separation: {min(seps):.6g}")
    return EXIT_OK


def _run_conserved(doc: dict) -> int:
    flow = _build_flow(doc["system"])
    init = _build_initial(flow, doc["initial"])
    t_end, rtol, atol, n_samples = _integration_params(doc, flow)
    traj = integrate(flow, init, t_end, rtol=rtol, atol=atol, n_samples=n_samples)
    period_info = None
    if flow.sys is not None and flow.sys.omega:
        base = 2 * math.pi / flow.sys.omega
        tol = float(doc.get("period", {}).get("tol", _DEFAULTS["period_tol"]))
        try:
            period_info = detect_period(traj, base, tol)
        except NoReturnFound:
            period_info = None
    report = conserved_report(traj, flow, period_info)
    path = _out_path(doc, "conserved.json")
    _atomic_write(path, json.dumps(report, indent=1))
    print(f"wrote {path}")
    if report["drift"]:
        print(f"monitor trace drift: max {max(report['drift']):.3e}")
    if period_info:
        print(f"monitor period: k={period_info[0]} mismatch={period_info[1]:.3e}")
    return EXIT_OK


def _run_period(doc: dict) -> int:
    flow = _build_flow(doc["system"])
    init = _build_initial(flow, doc["initial"])
    t_end, rtol, atol, n_samples = _integration_params(doc, flow)
    traj = integrate(flow, init, t_end, rtol=rtol, atol=atol, n_samples=n_samples)
    base = doc.get("period", {}).get("base_period")
    if base is None:
        if flow.sys is None or not flow.sys.omega:
            raise ValidationError("period mode needs omega or base_period")
        base = 2 * math.pi / flow.sys.omega
    tol = float(doc.get("period", {}).get("tol", _DEFAULTS["period_tol"]))
    k, mismatch = detect_period(traj, float(base), tol)
    path = _out_path(doc, "period.json")
    _atomic_write(path, json.dumps({"k": k, "mismatch": mismatch}, indent=1))
    print(f"wrote {path}")
    print(f"monitor period: k={k} mismatch={mismatch:.3e}")
    return EXIT_OK


_RECIPES = {
    "hermite": lambda blk: equilibria.hermite_pair(
        blk["indices"], Fraction(str(blk.get("b", -2)))
    ),
    "laguerre": lambda blk: equilibria.laguerre_pair(
        blk["indices"], Fraction(str(blk.get("b", 1)))
    ),
    "monomial": lambda blk: equilibria.monomial_pair(
        blk["indices"], Fraction(str(blk.get("b", 1)))
    ),
    "adler_moser": lambda blk: equilibria.adler_moser(
        int(blk["k"]), [Fraction(str(t)) for t in blk.get("ts", [])]
    ),
    "cylinder": lambda blk: equilibria.cylinder_pair(
        blk["indices"], [float(t) for t in blk.get("ts", [])]
    ),
}


def _run_equilibrium(doc: dict) -> int:
    blk = doc["equilibrium"]
    recipe = blk.get("recipe")
    if recipe not in _RECIPES:
        raise ValidationError(f"recipe must be one of {sorted(_RECIPES)}")
    cert = _RECIPES[recipe](blk)
    cert = equilibria.certify(cert)
    path = _out_path(doc, "certificate.json")
    _atomic_write(path, json.dumps(cert.to_json(), indent=1))
    print(f"wrote {path}")
    print(
        f"certificate: recipe={cert.recipe} degrees={cert.degrees} "
        f"exact_zero={cert.residual_exact_zero} charges={len(cert.inventory)}"
    )
    return EXIT_OK


def _run_identities(doc: dict) -> int:
    blk = doc.get("identities", {})
    phi_name = blk.get("phi", "inverse")
    trials = int(blk.get("trials", 100))
    nmax = int(blk.get("n", 6))
    mmax = int(blk.get("m", 6))
    seed = int(doc.get("seed", 0))
    rng = np.random.default_rng(seed)
    if phi_name == "inverse":
        phi = lambda x: 1.0 / x
        i1_offset = lambda n: 0.0
        i2_offset = lambda n, m: 0.0
    elif phi_name == "coth":
        phi = lambda x: 1.0 / math.tanh(x)
        # the pair product identity holds with constant -1, which shifts
        # the sums by per-triple counts
        i1_offset = lambda n: 2.0 * (n * (n - 1) * (n - 2) // 6)
        i2_offset = lambda n, m: float(n * m * (m - n))
    else:
        raise ValidationError("phi must be 'inverse' or 'coth'")
    worst_i1 = worst_i2 = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, nmax + 1))
        m = int(rng.integers(1, mmax + 1))
        xs = list(rng.normal(size=n) * 1.5)
        ys = list(rng.normal(size=m) * 1.5 + 4.0)
        i1, pair = phi_identity_i1(xs, phi)
        i2 = phi_identity_i2(xs, ys, phi)
        worst_i1 = max(worst_i1, abs(i1 - pair - i1_offset(n)))
        worst_i2 = max(worst_i2, abs(i2 - i2_offset(n, m)))
    doc_out = {
        "phi": phi_name,
        "trials": trials,
        "max_I1_deviation": worst_i1,
        "max_I2_deviation": worst_i2,
    }
    path = _out_path(doc, "identities.json")
    _atomic_write(path, json.dumps(doc_out, indent=1))
    print(f"wrote {path}")
    print(f"monitor identities: |I1 dev| {worst_i1:.3e}  |I2 dev| {worst_i2:.3e}")
    return EXIT_OK


_RUNNERS = {
    "simulate": _run_simulate,
    "conserved": _run_conserved,
    "period": _run_period,
    "equilibrium": _run_equilibrium,
    "verify-identities": _run_identities,
}


def run(doc: dict) -> int:
    """Validate and execute one experiment config; returns the exit code."""
    try:
        doc = validate_config(doc)
        return _RUNNERS[doc["mode"]](doc)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=_sys.stderr)
        return EXIT_VALIDATION
    except Collision as exc:
        print(f"collision abort: {exc}", file=_sys.stderr)
        return EXIT_COLLISION
    except NonConvergence as exc:
        print(f"non-convergence: {exc}", file=_sys.stderr)
        return EXIT_NONCONVERGENCE
    except (CertificationFailure, ChargeflowError) as exc:
        if isinstance(exc, CertificationFailure):
            print(f"certification failure: {exc}", file=_sys.stderr)
            return EXIT_CERTIFICATION
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_VALIDATION


def _run_worker(args):
    doc, seed = args
    doc = json.loads(json.dumps(doc))
    doc["seed"] = seed
    init = doc.setdefault("initial", {})
    if "random" in init:
        init["random"]["seed"] = seed
    out = doc.setdefault("output", {})
    out["prefix"] = f"{out.get('prefix', '')}seed{seed}_"
    return seed, run(doc)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="chargeflow",
        description="Root-dynamics experiments: simulate flows, certify "
        "Wronskian equilibria, verify conserved quantities.",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in _MODES:
        sp = sub.add_parser(mode)
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--out", help="output directory override")
        sp.add_argument("--format", choices=["csv", "json"], action="append")
        sp.add_argument("--svg", action="store_true")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--jobs", type=int, default=1)
        if mode == "equilibrium":
            sp.add_argument("--recipe", choices=sorted(_RECIPES))
            sp.add_argument("--indices", help="comma-separated index set")
            sp.add_argument("--b", help="field slope (rational)")
            sp.add_argument("--ts", help="comma-separated chain parameters")
            sp.add_argument("--k", type=int)
        if mode == "verify-identities":
            sp.add_argument("--phi", choices=["inverse", "coth"])
            sp.add_argument("--trials", type=int)
        if mode == "period":
            sp.add_argument("--seeds", help="comma-separated seed sweep")
    args = parser.parse_args(argv)

    doc = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"validation error: cannot read config: {exc}", file=_sys.stderr)
            return EXIT_VALIDATION
    doc["mode"] = args.mode
    if args.out:
        doc.setdefault("output", {})["dir"] = args.out
    if args.format:
        doc.setdefault("output", {})["formats"] = args.format
    if args.svg:
        doc.setdefault("output", {})["svg"] = True
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.mode == "equilibrium":
        blk = doc.setdefault("equilibrium", {})
        if args.recipe:
            blk["recipe"] = args.recipe
        if args.indices:
            blk["indices"] = [int(v) for v in args.indices.split(",")]
        if args.b is not None:
            blk["b"] = args.b
        if args.ts:
            blk["ts"] = [float(v) for v in args.ts.split(",")]
        if args.k is not None:
            blk["k"] = args.k
    if args.mode == "verify-identities":
        blk = doc.setdefault("identities", {})
        if args.phi:
            blk["phi"] = args.phi
        if args.trials:
            blk["trials"] = args.trials

    if args.mode == "period" and getattr(args, "seeds", None):
        seeds = [int(v) for v in args.seeds.split(",")]
        jobs = max(1, args.jobs)
        results = []
        if jobs == 1:
            results = [_run_worker((doc, s)) for s in seeds]
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_worker, [(doc, s) for s in seeds]))
        worst = max(code for _, code in results)
        for seed, code in results:
            print(f"seed {seed}: exit {code}")
        return worst

    return run(doc)


if __name__ == "__main__":
    raise SystemExit(main())
