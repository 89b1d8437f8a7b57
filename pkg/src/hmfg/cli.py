"""Batch front end.

Subcommands ocp / hjb / mfg / validate read a JSON config, write columnar
CSV plus a key=value summary into --out, and echo the fully resolved config
beside the outputs (the echo is itself a valid config, so a run can be
reproduced from it).  Exit codes: 0 success, 1 config error, 2 solver
non-convergence or failed checks.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import couplings, geometry, hjb_grid, ocp, transport
from . import mfg as mfg_mod
from . import validate as validate_mod
from .hamiltonian import HamiltonianSpec

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOCONV = 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # bad usage is a config error, not a solver failure
    def error(self, message):
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# deterministic output helpers

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_summary(path: Path, pairs) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for k, v in pairs:
            fh.write(f"{k}={_fmt(v)}\n")


# ---------------------------------------------------------------------------
# config loading and resolution

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "gamma": 2.0,
    "structure": {"preset": "heisenberg", "d": 1, "n": 4, "m": 2,
                  "epsilon": 0.0, "trunc": None},
    "ocp": {"x0": [0.0, 0.0, 0.0], "t0": 0.0, "T": 1.0, "steps": 200,
            "f": {"kind": "zero"}, "g": {"kind": "zero"}, "solver": "pmp",
            "restarts": 20, "iters": 150, "control_bound": 3.0},
    "hjb": {"f": {"kind": "zero"}, "g": {"kind": "zero"}, "T": 1.0,
            "box": 3.0, "resolution": 61, "steps": 20, "control_bound": 2.5,
            "control_points": 11, "slice_t": 0.0, "slice_x3": 0.0},
    "mfg": {"F": {"kind": "conv", "radius": 1.0, "strength": 0.2, "monotone": True},
            "G": {"kind": "zero"},
            "m0": {"kind": "uniform", "radius": 1.0, "dim": 3},
            "T": 1.0, "particles": 500, "time_steps": 50,
            "eps_schedule": [0.5, 0.25, 0.1], "tol": 1e-3, "max_iter": 50,
            "m0_seed": 1234, "certificate": False, "certificate_probes": 50,
            "density_resolution": 61},
    "validate": {},
}


def _merge(base, user):
    if isinstance(base, dict) and isinstance(user, dict):
        out = dict(base)
        for k, v in user.items():
            out[k] = _merge(base.get(k), v)
        return out
    return user


def load_schema() -> dict:
    text = resources.files("hmfg").joinpath("config_schema.json").read_text("utf-8")
    return json.loads(text)


def check_config(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            where = "/".join(str(p) for p in e.absolute_path) or "(top level)"
            lines.append(f"  {where}: {e.message}")
        raise ConfigError("invalid config:\n" + "\n".join(lines))


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def resolve_config(cfg: dict, seed: int | None, threads: int | None) -> dict:
    rc = _merge(DEFAULTS, cfg)
    if seed is not None:
        rc["seed"] = seed
    if threads is not None:
        rc["threads"] = threads
    check_config(rc)
    return rc


# ---------------------------------------------------------------------------
# builders

def build_structure(sc: dict) -> geometry.HTypeStructure:
    preset = sc["preset"]
    if preset == "heisenberg":
        return geometry.heisenberg(sc["d"], epsilon=sc["epsilon"], trunc=sc["trunc"])
    if preset == "grushin":
        return geometry.grushin(epsilon=sc["epsilon"])
    return geometry.degenerate(sc["n"], sc["m"], epsilon=sc["epsilon"])


def build_cost(desc: dict, n: int) -> couplings.FrozenCost:
    kind = desc["kind"]
    if kind == "zero":
        return couplings.ZERO_COST
    if kind == "constant":
        return couplings.ConstantCost(desc.get("value", 0.0))
    if kind == "affine":
        c = np.asarray(desc.get("c", [0.0] * n), dtype=float)
        if len(c) != n:
            raise ConfigError(f"affine cost needs {n} coefficients, got {len(c)}")
        return couplings.AffineCost(c, desc.get("b", 0.0))
    return couplings.SatQuadCost(desc.get("kappa", 0.0))


def build_coupling(desc: dict) -> couplings.CouplingSpec:
    kind = desc["kind"]
    if kind == "zero":
        return couplings.CouplingSpec("zero")
    if kind == "conv":
        return couplings.CouplingSpec("conv", radius=desc.get("radius", 1.0),
                                      strength=desc.get("strength", 0.0),
                                      monotone=desc.get("monotone", False))
    return couplings.CouplingSpec("explicit", strength=desc.get("strength", 0.0),
                                  name=desc.get("name", "satquad"))


def build_spec(rc: dict) -> HamiltonianSpec:
    try:
        st = build_structure(rc["structure"])
    except (ValueError, geometry.StructureError) as exc:
        raise ConfigError(str(exc)) from exc
    return HamiltonianSpec(st, rc["gamma"])


# ---------------------------------------------------------------------------
# subcommand runners

def run_ocp(rc: dict, out: Path) -> int:
    oc = rc["ocp"]
    spec = build_spec(rc)
    n = spec.structure.n
    x0 = np.asarray(oc["x0"], dtype=float)
    if x0.shape != (n,):
        raise ConfigError(f"ocp.x0 must have length {n} for this structure, got {len(x0)}")
    f = build_cost(oc["f"], n)
    g = build_cost(oc["g"], n)
    summary = [("solver", oc["solver"])]
    code = EXIT_OK

    if oc["solver"] in ("pmp", "both"):
        sols = ocp.pmp_multistart(x0, oc["t0"], f, g, spec, T=oc["T"], steps=oc["steps"])
        best = sols[0]
        times = best.path.times
        header = (["t"] + [f"x{i+1}" for i in range(n)]
                  + [f"p{i+1}" for i in range(n)]
                  + [f"a{i+1}" for i in range(best.path.controls.shape[1])])
        rows = [np.concatenate([[times[k]], best.path.states[k], best.costates[k],
                                best.path.controls[k]]) for k in range(len(times))]
        write_csv(out / "pmp_path.csv", header, rows)
        summary += [("pmp_converged", best.converged), ("pmp_value", best.cost),
                    ("pmp_residual", best.shooting_residual),
                    ("pmp_iterations", best.iterations),
                    ("pmp_candidates", len(sols))]
        if not best.converged:
            code = EXIT_NOCONV

    if oc["solver"] in ("direct", "both"):
        if spec.gamma <= 1.0:
            raise ConfigError("direct solver needs gamma > 1")
        path = ocp.solve_direct(x0, oc["t0"], f, g, spec, T=oc["T"],
                                control_bound=oc["control_bound"],
                                restarts=oc["restarts"], iters=oc["iters"],
                                seed=rc["seed"])
        header = (["t"] + [f"x{i+1}" for i in range(n)]
                  + [f"a{i+1}" for i in range(path.controls.shape[1])])
        rows = [np.concatenate([[path.times[k]], path.states[k], path.controls[k]])
                for k in range(len(path.times))]
        write_csv(out / "direct_path.csv", header, rows)
        summary.append(("direct_value", ocp.cost(path, f, g, spec.gamma)))

    write_summary(out / "summary.txt", summary)
    return code


def run_hjb(rc: dict, out: Path) -> int:
    hc = rc["hjb"]
    spec = build_spec(rc)
    n = spec.structure.n
    if n != 3:
        raise ConfigError("hjb grid solver needs a 3-state structure")
    f = build_cost(hc["f"], n)
    g = build_cost(hc["g"], n)
    gv = hjb_grid.solve_hjb(f, g, spec, box=hc["box"], resolution=hc["resolution"],
                            steps=hc["steps"], T=hc["T"],
                            control_bound=hc["control_bound"],
                            control_points=hc["control_points"])
    ax = np.linspace(-hc["box"], hc["box"], hc["resolution"])
    tq, x3 = hc["slice_t"], hc["slice_x3"]
    rows = []
    for i, a in enumerate(ax):
        pts = np.stack([np.full_like(ax, a), ax, np.full_like(ax, x3)], axis=-1)
        vals = gv.evaluate(pts, tq)
        cont = gv.contaminated(pts, tq)
        for j in range(len(ax)):
            rows.append((a, ax[j], vals[j], int(cont[j])))
    write_csv(out / "slice.csv", ["x1", "x2", "value", "contaminated"], rows)
    origin = np.zeros(3)
    write_summary(out / "summary.txt", [
        ("resolution", hc["resolution"]),
        ("levels", len(gv.times)),
        ("slice_t", tq),
        ("slice_x3", x3),
        ("value_origin", gv.evaluate(origin, tq)),
        ("contaminated_origin", bool(gv.contaminated(origin, tq))),
        ("min_value", float(gv.values.min())),
        ("max_value", float(gv.values.max())),
    ])
    return EXIT_OK


def run_mfg(rc: dict, out: Path) -> int:
    mc = rc["mfg"]
    spec = build_spec(rc)
    if spec.structure.n != 3:
        raise ConfigError("mfg solver needs a 3-state structure")
    m0 = transport.M0Spec(mc["m0"]["kind"], mc["m0"]["radius"], mc["m0"]["dim"])
    problem = mfg_mod.MfgProblem(
        spec, build_coupling(mc["F"]), build_coupling(mc["G"]), m0,
        T=mc["T"], particles=mc["particles"], time_steps=mc["time_steps"],
        eps_schedule=tuple(mc["eps_schedule"]), tol=mc["tol"],
        max_iter=mc["max_iter"], seed=rc["seed"], m0_seed=mc["m0_seed"])
    sol = mfg_mod.solve_equilibrium(problem)
    mp = sol.measure_path

    write_csv(out / "residuals.csv", ["epsilon", "iteration", "residual"],
              [(h["epsilon"], h["iteration"], h["residual"]) for h in sol.residual_history])

    pos = mp.positions()
    rows = []
    for k, t in enumerate(mp.times):
        for p in range(mp.particle_count):
            rows.append((t, p, pos[k, p, 0], pos[k, p, 1], pos[k, p, 2]))
    write_csv(out / "particles.csv", ["t", "particle", "x1", "x2", "x3"], rows)

    audit = mp.d1_audit()
    write_csv(out / "audit.csv", ["t", "d1_prev", "exact"],
              [(t, d, int(e)) for t, d, e in audit])

    final = mp.measures[-1]
    res = mc["density_resolution"]
    span = float(np.abs(final.particles[:, :2]).max()) + 3.0 * final.kde_bandwidth
    gax = np.linspace(-span, span, res)
    rows = []
    for a in gax:
        pts = np.stack([np.full_like(gax, a), gax, np.zeros_like(gax)], axis=-1)
        dens = transport.kde_density(final, pts)
        rows.extend((a, gax[j], dens[j]) for j in range(res))
    write_csv(out / "density.csv", ["x1", "x2", "density"], rows)

    summary = [
        ("status", sol.status),
        ("epsilon", sol.epsilon),
        ("iterations", len(sol.residual_history)),
        ("final_residual", sol.residual_history[-1]["residual"]),
        ("particles", mp.particle_count),
        ("mass_error", max(abs(m.weights.sum() - 1.0) for m in mp.measures)),
        ("second_moment_max", max(transport.moments(m)[1] for m in mp.measures)),
        ("holder_constant", transport.holder_fit(mp)["constant"]),
    ]
    if mc["certificate"]:
        rep = mfg_mod.mild_certificate(sol, count=mc["certificate_probes"])
        starts = pos[0]
        write_csv(out / "certificate.csv",
                  ["particle", "x1", "x2", "x3", "arc_cost", "value", "gap"],
                  [(r["particle"], *starts[r["particle"]], r["arc_cost"], r["value"], r["gap"])
                   for r in rep["rows"]])
        summary += [("certificate_max_gap", rep["max_gap"]),
                    ("certificate_min_gap", rep["min_gap"]),
                    ("certificate_passed", rep["passed"])]
    write_summary(out / "summary.txt", summary)
    return EXIT_OK if sol.status == "converged" else EXIT_NOCONV


def run_validate(rc: dict, out: Path) -> int:
    results = validate_mod.run_all(seed=rc["seed"])
    write_csv(out / "checks.csv", ["name", "passed", "measure", "detail"],
              [(r.name, int(r.passed), r.measure, r.detail) for r in results])
    failed = sum(1 for r in results if not r.passed)
    write_summary(out / "summary.txt", [
        ("total", len(results)),
        ("passed", len(results) - failed),
        ("failed", failed),
    ])
    for r in results:
        print(f"{r.name}: {'pass' if r.passed else 'FAIL'}")
    return EXIT_OK if failed == 0 else EXIT_NOCONV


RUNNERS = {"ocp": run_ocp, "hjb": run_hjb, "mfg": run_mfg, "validate": run_validate}


def main(argv=None) -> int:
    parser = _Parser(prog="hmfg", description=__doc__)
    parser.add_argument("task", choices=sorted(RUNNERS))
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--out", default=None, help="output directory (default ./hmfg-<task>)")
    parser.add_argument("--seed", type=int, default=None, help="overrides config seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="recorded in the resolved config; solvers are single-threaded")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        rc = resolve_config(cfg, args.seed, args.threads)
        out = Path(args.out if args.out is not None else f"hmfg-{args.task}")
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "config.json", "w", encoding="utf-8", newline="") as fh:
            json.dump(rc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return RUNNERS[args.task](rc, out)
    except ConfigError as exc:
        print(f"hmfg: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
