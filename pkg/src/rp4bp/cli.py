"""Command-line front end: configuration, stage orchestration and artifact storage.

Configuration is an INI file with one level of sections. Every artifact
carries a ``# fingerprint = <sha256>`` header computed from the parameters
that produced it; loading an artifact whose fingerprint does not match the
current parameters raises :class:`FingerprintMismatch`. Floats are written
with ``repr`` (shortest round-trip form).
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from . import fourbody as fb
from . import lyapunov as ly
from . import manifolds as mf
from . import planet as pl
from .equilibria import find_collinear_points, linearize
from .errors import DomainError, FingerprintMismatch, RP4BPError

log = logging.getLogger("rp4bp")

SUBCOMMANDS = ("lagrange", "lyapunov-family", "manifold", "heteroclinic", "hill-check",
               "planet-orbit", "nondegeneracy", "gtl-ode", "diffuse", "pipeline")

# section -> key -> (type, default); None defaults are filled from the model
SCHEMA: dict[str, dict[str, tuple]] = {
    "global": {"mu": (float, 0.0009537), "rel_tol": (float, 1e-12), "abs_tol": (float, 1e-12)},
    "family": {"h_min": (float, None), "h_max": (float, None), "max_dh": (float, 2e-4)},
    "manifold": {"jacobi": (float, 3.03), "point": (str, "L1"), "kind": (str, "unstable"),
                 "n_phase": (int, 128), "d0": (float, None), "t_max": (float, 20.0)},
    "heteroclinic": {"jacobi": (float, 3.03), "n_phase": (int, 128), "t_max": (float, 20.0),
                     "tol": (float, 1e-10)},
    "hill": {"jacobi": (float, 3.03)},
    "planet": {"m": (int, 63), "k": (int, 1), "e_target": (float, 0.3)},
    "fourbody": {"delta": (float, None), "c": (float, 0.0), "c_delta": (float, 1.0),
                 "planet_mass_power": (int, 1), "h": (float, None), "n_nodes": (int, 128)},
    "gtl": {"h0": (float, None), "gain_fraction": (float, 0.2), "sigma": (float, 0.0),
            "beta0": (float, 1.0), "nu_budget": (float, 200.0)},
    "diffuse": {"h0": (float, None), "t_budget": (float, 200.0), "hysteresis": (float, 0.1),
                "dwell": (float, None), "steer_fraction": (float, 0.25),
                "tube_radius": (float, 1e-3)},
}

STORE_DIRS = ("families", "manifolds", "planet", "traces", "reports")


# --- configuration ----------------------------------------------------------

@dataclass
class RunConfig:
    values: dict
    out: Path
    threads: int = 1
    force: bool = False

    def __getitem__(self, key: str):
        section, _, name = key.partition(".")
        return self.values[section][name]

    @property
    def mu(self) -> float:
        return self["global.mu"]

    @property
    def integrator(self) -> dyn.IntegratorConfig:
        return dyn.IntegratorConfig(self["global.rel_tol"], self["global.abs_tol"])

    def fingerprint(self, *sections: str, extra: dict | None = None) -> str:
        payload = {"global": self.values["global"]}
        for s in sections:
            payload[s] = self.values[s]
        payload.update(extra or {})
        blob = json.dumps(payload, sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()


def _convert(section: str, key: str, raw):
    typ = SCHEMA[section][key][0]
    if raw is None or raw == "" or (isinstance(raw, str) and raw.lower() == "none"):
        return None
    try:
        return typ(raw)
    except ValueError as exc:
        raise DomainError(f"[{section}] {key}: cannot parse {raw!r} as {typ.__name__}") from exc


def load_config(path: str | None = None, overrides: list[str] | tuple = (), **flags) -> dict:
    """Defaults, then the INI file, then ``section.key=value`` overrides, then flags.

    Unknown sections or keys raise :class:`DomainError`.
    """
    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    if path:
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise DomainError(f"cannot read config file {path}")
        for section in cp.sections():
            if section not in SCHEMA:
                raise DomainError(f"unknown config section [{section}]")
            for key, raw in cp.items(section):
                if key not in SCHEMA[section]:
                    raise DomainError(f"unknown config key [{section}] {key}")
                values[section][key] = _convert(section, key, raw)
    for item in overrides:
        lhs, sep, raw = item.partition("=")
        section, dot, key = lhs.strip().partition(".")
        if not sep or not dot:
            raise DomainError(f"override must look like section.key=value, got {item!r}")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise DomainError(f"unknown config key {lhs.strip()!r}")
        values[section][key] = _convert(section, key, raw.strip())
    for key, val in flags.items():
        if val is not None:
            values["global"][key] = float(val)
    validate(values)
    return values


def validate(values: dict) -> None:
    mu = values["global"]["mu"]
    if not (0.0 < mu <= 0.5):
        raise DomainError(f"mu must lie in (0, 1/2], got {mu}")
    for k in ("rel_tol", "abs_tol"):
        if not values["global"][k] > 0:
            raise DomainError(f"{k} must be positive")
    if values["manifold"]["point"] not in ("L1", "L2"):
        raise DomainError("manifold.point must be L1 or L2")
    if values["manifold"]["kind"] not in ("stable", "unstable"):
        raise DomainError("manifold.kind must be stable or unstable")
    if values["planet"]["m"] <= 0 or values["planet"]["k"] <= 0:
        raise DomainError("planet.m and planet.k must be positive")
    if not (0 < values["gtl"]["gain_fraction"] <= 1):
        raise DomainError("gtl.gain_fraction must lie in (0, 1]")


# --- artifact store ---------------------------------------------------------

def fmt(v) -> str:
    """Shortest round-trip text for floats, plain str otherwise."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class ArtifactStore:
    """Fingerprinted files under families/, manifolds/, planet/, traces/, reports/."""

    def __init__(self, root: Path):
        self.root = Path(root)
        for d in STORE_DIRS:
            (self.root / d).mkdir(parents=True, exist_ok=True)

    def path(self, kind: str, name: str) -> Path:
        if kind not in STORE_DIRS:
            raise DomainError(f"unknown artifact kind {kind!r}")
        return self.root / kind / name

    def write(self, kind: str, name: str, writer, fingerprint: str) -> Path:
        """Run ``writer(path)`` on a ``.partial`` file, then stamp and publish it.

        If the writer raises, the partial file stays on disk.
        """
        final = self.path(kind, name)
        partial = final.with_name(final.name + ".partial")
        writer(partial)
        body = partial.read_text()
        final.write_text(f"# fingerprint = {fingerprint}\n" + body)
        partial.unlink()
        return final

    @staticmethod
    def read_fingerprint(path: Path) -> str | None:
        with open(path) as fh:
            first = fh.readline()
        if first.startswith("# fingerprint ="):
            return first.partition("=")[2].strip()
        return None

    def lookup(self, kind: str, name: str, fingerprint: str) -> Path | None:
        """Existing artifact path, None if absent; raises on fingerprint mismatch."""
        p = self.path(kind, name)
        if not p.exists():
            return None
        found = self.read_fingerprint(p)
        if found != fingerprint:
            raise FingerprintMismatch(
                f"{p} was produced with different parameters (fingerprint {found}, "
                f"expected {fingerprint}); remove it or rerun with --force")
        return p


def emit_plotdata(obj, directory, name: str) -> Path:
    """Plot-ready text for an EnergyTrace, SectionCurve or Cylinder; updates index.txt."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if isinstance(obj, fb.EnergyTrace):
        cols, rows, head = ("t", "h"), zip(obj.t, obj.h), []
    elif isinstance(obj, mf.SectionCurve):
        J = float(np.mean(obj.jacobi)) if obj.jacobi is not None and len(obj.jacobi) else math.nan
        cols, rows, head = ("y", "vy"), obj.xy, [f"J = {J!r}"]
    elif isinstance(obj, ly.Cylinder):
        cols = ("h", "T", "Lambda")
        rows = [(o.energy, o.period, o.floquet_lambda) for o in obj.orbits]
        head = [f"point = {obj.point}"]
    else:
        raise DomainError(f"no plot data for {type(obj).__name__}")
    path = directory / f"{name}.dat"
    with open(path, "w") as fh:
        for line in head:
            fh.write(f"# {line}\n")
        fh.write("# " + " ".join(cols) + "\n")
        for r in rows:
            fh.write(" ".join(fmt(float(v)) for v in r) + "\n")
    index = directory / "index.txt"
    entries = index.read_text().splitlines() if index.exists() else []
    line = f"{path.name} {type(obj).__name__} {','.join(cols)}"
    entries = [e for e in entries if not e.startswith(path.name + " ")] + [line]
    index.write_text("\n".join(sorted(entries)) + "\n")
    return path


# --- stages -----------------------------------------------------------------

@dataclass
class Context:
    cfg: RunConfig
    store: ArtifactStore
    summary: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict)


def stage_lagrange(ctx: Context) -> dict:
    mu = ctx.cfg.mu
    l1, l2 = find_collinear_points(mu)
    rows = []
    for lp in (l1, l2):
        lin = linearize(lp)
        rows.append({"point": lp.which, "x": lp.x, "jacobi": lp.critical_jacobi,
                     "lambda": lin.lam, "kappa": lin.kappa})

    def write(path):
        with open(path, "w") as fh:
            fh.write(f"# mu = {mu!r}\n")
            fh.write("mu,x_L1,x_L2,lambda_L1,kappa_L1,lambda_L2,kappa_L2\n")
            vals = (mu, l1.x, l2.x, rows[0]["lambda"], rows[0]["kappa"], rows[1]["lambda"],
                    rows[1]["kappa"])
            fh.write(",".join(fmt(float(v)) for v in vals) + "\n")

    ctx.store.write("reports", "lagrange.csv", write, ctx.cfg.fingerprint())
    return {"points": rows}


def _energy_window(ctx: Context) -> tuple[float, float]:
    lo, hi = ly.default_energy_range(ctx.cfg.mu)
    h_min, h_max = ctx.cfg["family.h_min"], ctx.cfg["family.h_max"]
    return (lo if h_min is None else h_min), (hi if h_max is None else h_max)


def families(ctx: Context) -> tuple[ly.Cylinder, ly.Cylinder]:
    if "families" in ctx.cache:
        return ctx.cache["families"]
    cfg = ctx.cfg
    lo, hi = _energy_window(ctx)
    fp = cfg.fingerprint("family", extra={"h_window": [lo, hi]})
    out = {}
    todo = []
    for which in ("L1", "L2"):
        p = None if cfg.force else ctx.store.lookup("families", f"{which}.csv", fp)
        if p is not None:
            out[which] = ly.read_family(p)
        else:
            todo.append(which)

    def build(which):
        return which, ly.build_family(cfg.mu, which, hi, cfg["family.max_dh"])

    if cfg.threads > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            built = list(ex.map(build, todo))
    else:
        built = [build(w) for w in todo]
    for which, cyl in built:
        if cyl.diagnostic:
            log.warning("%s family: %s", which, cyl.diagnostic)
        ctx.store.write("families", f"{which}.csv",
                        lambda path, c=cyl: ly.write_family(path, c), fp)
        out[which] = cyl
    ctx.cache["families"] = (out["L1"], out["L2"])
    return ctx.cache["families"]


def stage_families(ctx: Context) -> dict:
    c1, c2 = families(ctx)
    for cyl in (c1, c2):
        emit_plotdata(cyl, ctx.store.root / "reports" / "plots", f"family_{cyl.point}")
    return {c.point: {"orbits": len(c), "h_range": list(c.h_range),
                      "max_return_error": max(o.return_error for o in c.orbits),
                      "Lambda_range": [min(o.floquet_lambda for o in c.orbits),
                                       max(o.floquet_lambda for o in c.orbits)],
                      "diagnostic": c.diagnostic} for c in (c1, c2)}


def _orbits_at(ctx: Context, jacobi: float):
    c1, c2 = families(ctx)
    h = -0.5 * jacobi
    return c1.orbit_at(h), c2.orbit_at(h)


def stage_manifold(ctx: Context) -> dict:
    cfg = ctx.cfg
    o1, o2 = _orbits_at(ctx, cfg["manifold.jacobi"])
    orb = o1 if cfg["manifold.point"] == "L1" else o2
    kind = cfg["manifold.kind"]
    # x-velocity sign toward Jupiter for the branch that heads there
    heading = 1 if (orb.point == "L1") == (kind == "unstable") else -1
    sec = mf.Section.through_jupiter(cfg.mu, heading)
    br = mf.globalize(orb, kind, mf.interior_side(orb, kind), cfg["manifold.d0"], sec,
                      cfg["manifold.t_max"], cfg["manifold.n_phase"], cfg=cfg.integrator)
    cut = mf.section_cut(br)
    name = f"{orb.point}_{kind}"
    ctx.store.write("manifolds", f"{name}.csv", cut.to_csv, cfg.fingerprint("family", "manifold"))
    emit_plotdata(cut, ctx.store.root / "reports" / "plots", f"cut_{name}")
    return {"point": orb.point, "kind": kind, "fibers": len(br.fibers), "cut_points": len(cut),
            "max_jacobi_error": br.max_jacobi_error}


def connections(ctx: Context) -> mf.ConnectionSearch:
    if "connections" in ctx.cache:
        return ctx.cache["connections"]
    cfg = ctx.cfg
    o1, o2 = _orbits_at(ctx, cfg["heteroclinic.jacobi"])
    search = mf.search_connections(o1, o2, cfg["heteroclinic.n_phase"],
                                   t_max=cfg["heteroclinic.t_max"], tol=cfg["heteroclinic.tol"],
                                   cfg=cfg.integrator)
    fp = cfg.fingerprint("family", "heteroclinic")
    for key, conns in search.connections.items():
        tag = key.replace("->", "_to_")
        ctx.store.write("manifolds", f"connections_{tag}.csv",
                        lambda path, c=conns: mf.write_connections(path, c, cfg.mu), fp)
        cu, cs = search.cuts[key]
        emit_plotdata(cu, ctx.store.root / "reports" / "plots", f"cut_{tag}_unstable")
        emit_plotdata(cs, ctx.store.root / "reports" / "plots", f"cut_{tag}_stable")
    ctx.cache["connections"] = search
    return search


def stage_heteroclinic(ctx: Context) -> dict:
    s = connections(ctx)
    return {key: [{"angle": c.angle, "residual": c.residual, "converged": c.converged,
                   "transversal": c.transversal} for c in conns]
            for key, conns in s.connections.items()}


def stage_hill(ctx: Context) -> dict:
    J = ctx.cfg["hill.jacobi"]
    JH = mf.hill_jacobi_level(ctx.cfg.mu, J)
    flag, margin = mf.hill_criterion(JH)
    return {"jacobi": J, "J_H": JH, "criterion": flag, "margin": margin}


def planet(ctx: Context) -> pl.PlanetOrbit:
    if "planet" in ctx.cache:
        return ctx.cache["planet"]
    cfg = ctx.cfg
    spec = pl.ResonanceSpec(cfg["planet.m"], cfg["planet.k"], cfg["planet.e_target"])
    fp = cfg.fingerprint("planet")
    p = None if cfg.force else ctx.store.lookup("planet", "planet.csv", fp)
    orb = pl.read_planet(p) if p is not None else pl.planet_orbit(cfg.mu, spec)
    if p is None:
        ctx.store.write("planet", "planet.csv", lambda path: pl.write_planet(path, orb), fp)
    ctx.cache["planet"] = orb
    return orb


def stage_planet(ctx: Context) -> dict:
    orb = planet(ctx)
    dL, dG = orb.delaunay_drift()
    return {"L0": orb.elements.L, "G0": orb.elements.G, "e": orb.e_used, "T_mu": orb.period,
            "period_gap": orb.period_gap, "half_residual": orb.half_residual,
            "periodicity_error": orb.periodicity_error, "drift_L": dL, "drift_G": dG}


def params(ctx: Context) -> fb.FourBodyParams:
    cfg = ctx.cfg
    orb = planet(ctx)
    delta = cfg["fourbody.delta"]
    if delta is None:
        delta = cfg["fourbody.c_delta"] * orb.epsilon**3
    return fb.FourBodyParams(cfg.mu, delta, orb, cfg["fourbody.c"], cfg["fourbody.c_delta"],
                             cfg["fourbody.planet_mass_power"])


def _h_start(ctx: Context, key: str) -> float:
    h0 = ctx.cfg[key]
    if h0 is not None:
        return h0
    c1, c2 = families(ctx)
    lo = max(c1.h_range[0], c2.h_range[0])
    hi = min(c1.h_range[1], c2.h_range[1])
    return lo + 0.025 * (hi - lo)


def stage_nondegeneracy(ctx: Context) -> dict:
    cfg = ctx.cfg
    c1, c2 = families(ctx)
    h = cfg["fourbody.h"]
    if h is None:
        h = -0.5 * cfg["heteroclinic.jacobi"]
    rep = fb.nondegeneracy_diagnostic(c1, c2, h, params(ctx), n_nodes=cfg["fourbody.n_nodes"])
    ctx.store.write("reports", "nondegeneracy.csv", rep.to_csv,
                    cfg.fingerprint("family", "planet", "fourbody"))
    return {"h": h, "variation": rep.variation, "floor": rep.floor, "degenerate": rep.degenerate,
            "u": rep.u.tolist(), "omega1": rep.omega1, "omega2": rep.omega2,
            "leading_residual": rep.leading_residual, "explained": rep.explained}


def stage_gtl(ctx: Context) -> dict:
    cfg = ctx.cfg
    c1, c2 = families(ctx)
    p = params(ctx)
    h0 = _h_start(ctx, "gtl.h0")
    hi = min(c1.h_range[1], c2.h_range[1])
    h_max = h0 + cfg["gtl.gain_fraction"] * (hi - h0)
    if p.delta == 0:
        return {"h0": h0, "slope": 0.0, "diagnostic": "delta = 0: f vanishes, no growth"}
    sol = fb.gtl_energy_ode(c1, c2, p, h0, cfg["gtl.sigma"], cfg["gtl.beta0"], h_max,
                            cfg["gtl.nu_budget"])
    ctx.store.write("traces", "gtl.csv", sol.to_csv, cfg.fingerprint("family", "planet",
                                                                     "fourbody", "gtl"))
    t_end = float(sol.t[-1])
    # diffusion constant in t = C / (delta eps^(1/3)) for the achieved gain
    C = t_end * p.delta * p.epsilon ** (1 / 3) if p.delta > 0 else math.nan
    return {"h0": h0, "h_end": float(sol.h[-1]), "t_end": t_end, "switches": len(sol.switches),
            "slope": sol.slope(), "fitted_constant": C, "diagnostic": sol.diagnostic}


def stage_diffuse(ctx: Context) -> dict:
    cfg = ctx.cfg
    c1, c2 = families(ctx)
    p = params(ctx)
    h0 = _h_start(ctx, "diffuse.h0")
    if p.delta == 0:
        return {"h0": h0, "slope": 0.0, "diagnostic": "delta = 0: autonomous, no growth"}
    policy = fb.JumpPolicy(cfg["diffuse.hysteresis"], cfg["diffuse.dwell"],
                           cfg["diffuse.steer_fraction"], cfg["diffuse.tube_radius"])
    conns = fb.connection_table([ctx.cache["connections"]]) if "connections" in ctx.cache else None
    tr = fb.simulate_diffusion(p, c1, c2, h0, cfg["diffuse.t_budget"], policy, conns,
                               cfg=cfg.integrator)
    ctx.store.write("traces", "diffusion.csv", tr.to_csv,
                    cfg.fingerprint("family", "planet", "fourbody", "diffuse"))
    emit_plotdata(tr, ctx.store.root / "reports" / "plots", "diffusion")
    return {"h0": h0, "slope": tr.slope(), "gain": tr.gain, "t_end": float(tr.t[-1]),
            "jumps": sum(1 for e in tr.events if e[0] == "jump"),
            "max_tube_distance": tr.max_tube_distance, "diagnostic": tr.diagnostic}


STAGES = {
    "lagrange": stage_lagrange,
    "lyapunov-family": stage_families,
    "manifold": stage_manifold,
    "heteroclinic": stage_heteroclinic,
    "hill-check": stage_hill,
    "planet-orbit": stage_planet,
    "nondegeneracy": stage_nondegeneracy,
    "gtl-ode": stage_gtl,
    "diffuse": stage_diffuse,
}
PIPELINE = ("lagrange", "lyapunov-family", "heteroclinic", "planet-orbit", "nondegeneracy",
            "gtl-ode", "diffuse")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run(subcommand: str, cfg: RunConfig) -> dict:
    """Run one stage (or the pipeline) and write reports/summary.json."""
    if subcommand not in SUBCOMMANDS:
        raise DomainError(f"unknown subcommand {subcommand!r}")
    ctx = Context(cfg, ArtifactStore(cfg.out))
    names = PIPELINE if subcommand == "pipeline" else (subcommand,)
    reports = ctx.store.root / "reports"
    for name in names:
        log.info("stage %s", name)
        try:
            ctx.summary[name] = STAGES[name](ctx)
        except Exception as exc:
            ctx.summary[name] = {"error": f"{type(exc).__name__}: {exc}"}
            partial = _jsonable({"subcommand": subcommand, "mu": cfg.mu, "stages": ctx.summary})
            (reports / "summary.json.partial").write_text(
                json.dumps(partial, indent=2, sort_keys=True) + "\n")
            raise
    summary = _jsonable({"subcommand": subcommand, "mu": cfg.mu, "stages": ctx.summary})
    (reports / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (reports / "summary.json.partial").unlink(missing_ok=True)
    return summary


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rp4bp", description=(
        "Lyapunov families, heteroclinic connections and planet-driven energy growth "
        "near Jupiter's L1/L2 points."))
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="INI configuration file")
    ap.add_argument("--out", default="rp4bp-out", help="artifact directory")
    ap.add_argument("--threads", type=int, default=1,
                    help="worker threads for independent stages (L1/L2 families)")
    ap.add_argument("--tol-rel", type=float, help="integrator relative tolerance")
    ap.add_argument("--tol-abs", type=float, help="integrator absolute tolerance")
    ap.add_argument("--mu", type=float, help="mass ratio (overrides [global] mu)")
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                    help="override one configuration value (repeatable)")
    ap.add_argument("--force", action="store_true",
                    help="recompute instead of loading stored artifacts")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        values = load_config(args.config, args.set, mu=args.mu, rel_tol=args.tol_rel,
                             abs_tol=args.tol_abs)
        if args.threads < 1:
            raise DomainError("--threads must be >= 1")
        cfg = RunConfig(values, Path(args.out), args.threads, args.force)
        summary = run(args.subcommand, cfg)
    except (RP4BPError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"rp4bp: error: {exc}", file=sys.stderr)
        return 1
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
