"""Experiment orchestration: runs, functional traces, and verifications.

A run advances one density (or a pair) under the selected dynamics and
records a row of monitored functionals at each output time: conservation
diagnostics in the solver's uniform inner product, the relative L2
distance to the Maxwellian, relative L^p values, entropy, Fisher
information, and the diagonal second moments.  Pair runs additionally
sample the exact transport cost T and its entropic variants T_eps on a
coarser cadence (optimal transport is the expensive observable).

Verification reports check, at stated slacks,

  * exponential decay and eventual monotonicity of the relative L2 norm,
  * monotonicity in time of T and T_eps along Maxwell-molecules pairs,
  * the soft-potential Gronwall envelope driven by the
    C_{gamma,p}, beta_{gamma,p}, K constants, and the Coulomb
    double-exponential envelope under its small-distance hypothesis,
  * a heat-flow warm-up where the transport distance between two spreading
    Gaussians must not increase and is exactly |shift|^2 for translates.

Every report records the discretization slack it used, so tolerances are
auditable from the emitted JSON alone.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib as _toml
except ModuleNotFoundError:           # Python 3.10
    import tomli as _toml

from . import transport as tp
from .functionals import COULOMB_PREFACTOR, contraction_constants, coulomb_beta, entropy
from .grid import (Density, GaussianSpec, MaxwellianSpec, MixtureSpec, VelocityGrid,
                   discretize, load_snapshot, lp_norm, make_grid, maxwellian_values)
from .landau3d import LandauSolver, fisher_information
from .maxwell import MaxwellSolver, fit_decay, monotonicity_threshold, relative_l2, relative_lp

__all__ = [
    "ExperimentConfig", "ConfigError", "FunctionalTrace", "RunResult", "run",
    "Report", "verify_l2_decay", "verify_transport_monotone",
    "verify_soft_potential_bound", "verify_coulomb_bound", "heat_sanity",
    "emit_report", "load_report",
]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in [{where}]")


@dataclass
class InitialConfig:
    kind: str = "maxwellian"             # maxwellian | gaussian | mixture | snapshot
    cov: list = field(default_factory=list)
    mean: list = field(default_factory=list)
    components: list = field(default_factory=list)
    path: str = ""
    standardize: bool = True

    @classmethod
    def from_dict(cls, d: dict, where: str) -> "InitialConfig":
        _check_keys(d, {"kind", "cov", "mean", "components", "path", "standardize"}, where)
        return cls(**d)

    def build(self, grid: VelocityGrid) -> Density:
        if self.kind == "maxwellian":
            spec = MaxwellianSpec()
        elif self.kind == "gaussian":
            if not self.cov:
                raise ConfigError("gaussian initial data needs a covariance")
            spec = GaussianSpec(cov=tuple(self.cov),
                                mean=tuple(self.mean) if self.mean else None)
        elif self.kind == "mixture":
            comps = []
            for c in self.components:
                comps.append(GaussianSpec(cov=tuple(c["cov"]),
                                          mean=tuple(c.get("mean", [])) or None,
                                          weight=float(c.get("weight", 1.0))))
            spec = MixtureSpec(tuple(comps))
        elif self.kind == "snapshot":
            f, _ = load_snapshot(self.path)
            return f
        else:
            raise ConfigError(f"unknown initial data kind {self.kind!r}")
        return discretize(spec, grid, standardize=self.standardize)


@dataclass
class ExperimentConfig:
    dim: int = 3
    extent: float = 6.0
    npts: int = 32
    gamma: object = "maxwell"            # "maxwell" or float in [-3, 0)
    r_floor: float = 0.0                 # 0 -> h/2
    moment_source: str = "closed_form"
    initial_f: InitialConfig = field(default_factory=InitialConfig)
    initial_g: InitialConfig | None = None
    t_end: float = 1.0
    cfl: float = 0.2
    dt: float = 0.0                      # 0 -> stability bound
    n_outputs: int = 20
    lp_exponents: list = field(default_factory=lambda: [2.0])
    ot_cadence: int = 10
    ot_epsilon_h2: list = field(default_factory=lambda: [0.5, 0.1, 0.02])
    ot_epsilons: list = field(default_factory=list)
    ot_support_cap: int = 4000
    ot_mass_bound: float = 1e-6
    ot_threshold: float = 0.0
    ot_lp_budget: int = 4000
    sinkhorn_tol: float = 1e-6
    sinkhorn_max_iter: int = 20000
    sinkhorn_over_relax: float = 1.6
    verify_l2_decay: bool = False
    verify_transport_monotone: bool = False
    verify_soft_bound: bool = False
    soft_p: float = 2.0
    verify_coulomb: bool = False
    coulomb_tau0: float = 0.1
    coulomb_prefactor: float = 0.0       # 0 -> 24 (2 pi + 1) K
    slack_value_factor: float = 1e-4
    slack_resolution_factor: float = 1.0
    seed: int = 0
    threads: int = 1
    output_dir: str = "out"

    # -- construction --------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        cfg = cls()
        grid_sec = raw.pop("grid", {})
        _check_keys(grid_sec, {"dim", "extent", "npts"}, "grid")
        cfg.dim = int(grid_sec.get("dim", cfg.dim))
        cfg.extent = float(grid_sec.get("extent", cfg.extent))
        cfg.npts = int(grid_sec.get("npts", cfg.npts))

        pot = raw.pop("potential", {})
        _check_keys(pot, {"gamma", "r_floor", "moment_source"}, "potential")
        cfg.gamma = pot.get("gamma", cfg.gamma)
        cfg.r_floor = float(pot.get("r_floor", cfg.r_floor))
        cfg.moment_source = pot.get("moment_source", cfg.moment_source)

        init = raw.pop("initial", {})
        _check_keys(init, {"f", "g"}, "initial")
        if "f" in init:
            cfg.initial_f = InitialConfig.from_dict(init["f"], "initial.f")
        if "g" in init:
            cfg.initial_g = InitialConfig.from_dict(init["g"], "initial.g")

        tsec = raw.pop("time", {})
        _check_keys(tsec, {"t_end", "cfl", "dt", "n_outputs"}, "time")
        cfg.t_end = float(tsec.get("t_end", cfg.t_end))
        cfg.cfl = float(tsec.get("cfl", cfg.cfl))
        cfg.dt = float(tsec.get("dt", cfg.dt))
        cfg.n_outputs = int(tsec.get("n_outputs", cfg.n_outputs))

        obs = raw.pop("observables", {})
        _check_keys(obs, {"lp_exponents"}, "observables")
        cfg.lp_exponents = [float(p) for p in obs.get("lp_exponents", cfg.lp_exponents)]

        ot = raw.pop("ot", {})
        _check_keys(ot, {"cadence", "epsilon_h2", "epsilons", "support_cap", "mass_bound",
                         "threshold", "lp_budget", "sinkhorn_tol", "sinkhorn_max_iter",
                         "sinkhorn_over_relax"}, "ot")
        cfg.ot_cadence = int(ot.get("cadence", cfg.ot_cadence))
        cfg.ot_epsilon_h2 = [float(x) for x in ot.get("epsilon_h2", cfg.ot_epsilon_h2)]
        cfg.ot_epsilons = [float(x) for x in ot.get("epsilons", cfg.ot_epsilons)]
        cfg.ot_support_cap = int(ot.get("support_cap", cfg.ot_support_cap))
        cfg.ot_mass_bound = float(ot.get("mass_bound", cfg.ot_mass_bound))
        cfg.ot_threshold = float(ot.get("threshold", cfg.ot_threshold))
        cfg.ot_lp_budget = int(ot.get("lp_budget", cfg.ot_lp_budget))
        cfg.sinkhorn_tol = float(ot.get("sinkhorn_tol", cfg.sinkhorn_tol))
        cfg.sinkhorn_max_iter = int(ot.get("sinkhorn_max_iter", cfg.sinkhorn_max_iter))
        cfg.sinkhorn_over_relax = float(ot.get("sinkhorn_over_relax", cfg.sinkhorn_over_relax))

        ver = raw.pop("verify", {})
        _check_keys(ver, {"l2_decay", "transport_monotone", "soft_bound", "soft_p",
                          "coulomb", "coulomb_tau0", "coulomb_prefactor",
                          "slack_value_factor", "slack_resolution_factor"}, "verify")
        cfg.verify_l2_decay = bool(ver.get("l2_decay", cfg.verify_l2_decay))
        cfg.verify_transport_monotone = bool(ver.get("transport_monotone",
                                                     cfg.verify_transport_monotone))
        cfg.verify_soft_bound = bool(ver.get("soft_bound", cfg.verify_soft_bound))
        cfg.soft_p = float(ver.get("soft_p", cfg.soft_p))
        cfg.verify_coulomb = bool(ver.get("coulomb", cfg.verify_coulomb))
        cfg.coulomb_tau0 = float(ver.get("coulomb_tau0", cfg.coulomb_tau0))
        cfg.coulomb_prefactor = float(ver.get("coulomb_prefactor", cfg.coulomb_prefactor))
        cfg.slack_value_factor = float(ver.get("slack_value_factor", cfg.slack_value_factor))
        cfg.slack_resolution_factor = float(ver.get("slack_resolution_factor",
                                                    cfg.slack_resolution_factor))

        _check_keys(raw, {"seed", "threads", "output_dir"}, "<top level>")
        cfg.seed = int(raw.get("seed", cfg.seed))
        cfg.threads = int(raw.get("threads", cfg.threads))
        cfg.output_dir = str(raw.get("output_dir", cfg.output_dir))
        cfg.validate()
        return cfg

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            try:
                raw = _toml.load(fh)
            except _toml.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(raw)

    def validate(self) -> None:
        if self.gamma != "maxwell":
            g = float(self.gamma)
            if not -3.0 <= g <= 0.0:
                raise ConfigError(f"gamma must be 'maxwell' or in [-3, 0], got {g}")
            if g < 0.0 and self.dim != 3:
                raise ConfigError("soft-potential runs require dim = 3")
        if self.t_end <= 0 or self.n_outputs < 1:
            raise ConfigError("time section must have t_end > 0 and n_outputs >= 1")
        if self.ot_cadence < 1:
            raise ConfigError("ot.cadence must be >= 1")

    # -- overrides and round-trips -------------------------------------------

    def apply_override(self, dotted: str, text: str) -> None:
        """Apply ``--set key.path=value`` with TOML-typed parsing."""
        try:
            parsed = _toml.loads(f"v = {text}")["v"]
        except _toml.TOMLDecodeError:
            parsed = text
        d = self.to_dict()
        node = d
        parts = dotted.split(".")
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                raise ConfigError(f"unknown config table {dotted!r}")
            node = node[p]
        leaf = parts[-1]
        if leaf not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        old = node[leaf]
        if old is not None and not isinstance(parsed, type(old)):
            # ints may stand in for floats, nothing else converts silently
            if isinstance(old, float) and isinstance(parsed, int):
                parsed = float(parsed)
            elif isinstance(old, (int, float)) and isinstance(parsed, str) and leaf == "gamma":
                pass
            elif isinstance(old, str) and leaf == "gamma" and isinstance(parsed, (int, float)):
                pass
            else:
                raise ConfigError(
                    f"override {dotted}={text!r} has type {type(parsed).__name__}, "
                    f"expected {type(old).__name__}")
        node[leaf] = parsed
        new = ExperimentConfig.from_dict(d)
        self.__dict__.update(new.__dict__)

    def to_dict(self) -> dict:
        d = {
            "grid": {"dim": self.dim, "extent": self.extent, "npts": self.npts},
            "potential": {"gamma": self.gamma, "r_floor": self.r_floor,
                          "moment_source": self.moment_source},
            "initial": {"f": dataclasses.asdict(self.initial_f)},
            "time": {"t_end": self.t_end, "cfl": self.cfl, "dt": self.dt,
                     "n_outputs": self.n_outputs},
            "observables": {"lp_exponents": list(self.lp_exponents)},
            "ot": {"cadence": self.ot_cadence, "epsilon_h2": list(self.ot_epsilon_h2),
                   "epsilons": list(self.ot_epsilons), "support_cap": self.ot_support_cap,
                   "mass_bound": self.ot_mass_bound, "threshold": self.ot_threshold,
                   "lp_budget": self.ot_lp_budget, "sinkhorn_tol": self.sinkhorn_tol,
                   "sinkhorn_max_iter": self.sinkhorn_max_iter,
                   "sinkhorn_over_relax": self.sinkhorn_over_relax},
            "verify": {"l2_decay": self.verify_l2_decay,
                       "transport_monotone": self.verify_transport_monotone,
                       "soft_bound": self.verify_soft_bound, "soft_p": self.soft_p,
                       "coulomb": self.verify_coulomb, "coulomb_tau0": self.coulomb_tau0,
                       "coulomb_prefactor": self.coulomb_prefactor,
                       "slack_value_factor": self.slack_value_factor,
                       "slack_resolution_factor": self.slack_resolution_factor},
            "seed": self.seed, "threads": self.threads, "output_dir": self.output_dir,
        }
        if self.initial_g is not None:
            d["initial"]["g"] = dataclasses.asdict(self.initial_g)
        return d

    def to_toml(self) -> str:
        return _dict_to_toml(self.to_dict())


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g") if v != int(v) or abs(v) > 1e15 else f"{v:.1f}"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v)} to TOML")


def _dict_to_toml(d: dict, prefix: str = "") -> str:
    lines = []
    tables = []
    for k, v in d.items():
        if isinstance(v, dict):
            tables.append((k, v))
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            for item in v:
                tables.append((None, (k, item)))
        else:
            lines.append(f"{k} = {_toml_value(v)}")
    out = "\n".join(lines)
    for k, v in tables:
        if k is None:
            arr_name, item = v
            name = f"{prefix}{arr_name}"
            out += f"\n\n[[{name}]]\n" + _dict_to_toml(item, prefix=name + ".")
        else:
            name = f"{prefix}{k}"
            out += f"\n\n[{name}]\n" + _dict_to_toml(v, prefix=name + ".")
    return out


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

class FunctionalTrace:
    """Column-oriented time series of monitored functionals."""

    def __init__(self, columns: list[str], meta: dict | None = None):
        self.columns = list(columns)
        self.rows: list[list[float]] = []
        self.meta = dict(meta or {})

    def add_row(self, row: dict) -> None:
        missing = set(self.columns) - set(row)
        if missing:
            raise ValueError(f"trace row is missing columns {sorted(missing)}")
        vals = [float(row[c]) for c in self.columns]
        if any(not np.isfinite(v) for v in vals):
            raise ValueError("non-finite trace row")
        if self.rows and vals[0] <= self.rows[-1][0]:
            raise ValueError("trace times must be strictly increasing")
        self.rows.append(vals)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            if self.meta:
                fh.write("# " + json.dumps(self.meta, sort_keys=True) + "\n")
            fh.write(",".join(self.columns) + "\n")
            for r in self.rows:
                fh.write(",".join(format(v, ".17g") for v in r) + "\n")

    @classmethod
    def from_csv(cls, path) -> "FunctionalTrace":
        with open(path) as fh:
            first = fh.readline()
            meta = {}
            if first.startswith("#"):
                meta = json.loads(first[1:].strip())
                first = fh.readline()
            cols = first.strip().split(",")
            tr = cls(cols, meta)
            for line in fh:
                if line.strip():
                    tr.rows.append([float(x) for x in line.strip().split(",")])
        return tr


@dataclass
class RunResult:
    config: ExperimentConfig
    traces: dict
    aborted: bool = False
    abort_reason: str = ""

    @property
    def pair(self) -> bool:
        return "g" in self.traces


# ---------------------------------------------------------------------------
# running experiments
# ---------------------------------------------------------------------------

def _make_solver(cfg: ExperimentConfig, f0: Density):
    if cfg.gamma == "maxwell" or cfg.gamma == 0.0:
        return MaxwellSolver(f0, moment_source=cfg.moment_source, cfl=cfg.cfl)
    floor = cfg.r_floor if cfg.r_floor > 0 else f0.grid.h / 2.0
    return LandauSolver(f0.grid, gamma=float(cfg.gamma), r_floor=floor, cfl=cfg.cfl,
                        budget_pairs=max(LandauSolver.DEFAULT_BUDGET, f0.grid.size ** 2))


def _solver_dt(solver, values, cfg: ExperimentConfig) -> float:
    if cfg.dt > 0:
        return cfg.dt
    if isinstance(solver, MaxwellSolver):
        return solver.stable_dt(0.0)
    return min(solver.stable_dt(values), cfg.t_end / 20.0)


def _observe(cfg: ExperimentConfig, grid: VelocityGrid, values: np.ndarray,
             t: float, solver) -> dict:
    cell = grid.cell_volume
    f = Density(grid=grid, values=values)
    row = {"t": t, "mass": float(np.sum(values)) * cell}
    for a in range(grid.dim):
        row[f"momentum_{'xyz'[a]}"] = float(np.sum(grid.coords[a] * values)) * cell
    row["energy"] = float(np.sum(grid.squared_radius * values)) * cell
    for a in range(grid.dim):
        row[f"lambda_{'xyz'[a]}"] = float(np.sum(grid.coords[a] ** 2 * values)) * cell
    row["rel_l2"] = relative_l2(f)
    for p in cfg.lp_exponents:
        row[f"rel_lp_{p:g}"] = relative_lp(f, p)
        row[f"lp_{p:g}"] = lp_norm(f, p)
    row["lp_inf"] = lp_norm(f, np.inf)
    row["entropy"] = entropy(f)
    row["fisher"] = fisher_information(f)
    row["clamped_mass"] = getattr(solver, "clamped_mass", 0.0)
    return row


def run(cfg: ExperimentConfig, outdir: str | None = None) -> RunResult:
    """Execute a single or pair experiment and collect functional traces.

    Deterministic: no randomness enters the solvers, reductions have fixed
    order, and the thread count only annotates the trace metadata.  Solver
    failures flush the partial traces with an abort flag.
    """
    grid = make_grid(cfg.dim, cfg.extent, cfg.npts)
    f0 = cfg.initial_f.build(grid)
    solver_f = _make_solver(cfg, f0)

    def initial_state(solver, density):
        # the reduced solver evolves the Maxwellian ratio, the pairwise one f
        if isinstance(solver, MaxwellSolver):
            return density.values / maxwellian_values(grid)
        return density.values.copy()

    def to_values(solver, state):
        if isinstance(solver, MaxwellSolver):
            return maxwellian_values(grid) * state
        return state

    pair = cfg.initial_g is not None
    legs = [("f", solver_f, initial_state(solver_f, f0))]
    if pair:
        g0 = cfg.initial_g.build(grid)
        solver_g = _make_solver(cfg, g0)
        legs.append(("g", solver_g, initial_state(solver_g, g0)))

    dt = min(_solver_dt(s, v, cfg) for _, s, v in legs)
    out_times = np.linspace(0.0, cfg.t_end, cfg.n_outputs + 1)
    meta = {
        "dim": cfg.dim, "extent": cfg.extent, "npts": cfg.npts, "h": grid.h,
        "gamma": cfg.gamma if isinstance(cfg.gamma, str) else float(cfg.gamma),
        "dt": dt, "t_end": cfg.t_end, "seed": cfg.seed, "threads": cfg.threads,
        "schema": "trace-v1",
    }

    traces = {name: None for name, _, _ in legs}
    eps_list = [fac * grid.h ** 2 for fac in cfg.ot_epsilon_h2] + list(cfg.ot_epsilons)
    ot_cols = (["t", "T"] + [f"T_eps_{k}" for k in range(len(eps_list))]
               + [f"sinkhorn_iters_{k}" for k in range(len(eps_list))]
               + ["support_f", "support_g", "dropped_f", "dropped_g"])
    ot_trace = FunctionalTrace(ot_cols, dict(meta, epsilons=eps_list)) if pair else None
    warm: dict = {}

    aborted = False
    reason = ""
    t = 0.0
    states = {name: vals for name, _, vals in legs}
    rows: dict = {name: [] for name, _, _ in legs}

    solver_of = {name: solver for name, solver, _ in legs}

    def observe_all(tcur: float, index: int):
        for name, solver, _ in legs:
            rows[name].append(_observe(cfg, grid, to_values(solver, states[name]),
                                       tcur, solver))
        if pair and (index % cfg.ot_cadence == 0 or index == cfg.n_outputs):
            values = {name: to_values(solver_of[name], states[name])
                      for name in states}
            _ot_sample(cfg, grid, values, tcur, eps_list, ot_trace, warm)

    try:
        observe_all(0.0, 0)
        for index, t_target in enumerate(out_times[1:], start=1):
            while t < t_target - 1e-13:
                step = min(dt, t_target - t)
                for name, solver, _ in legs:
                    if isinstance(solver, MaxwellSolver):
                        states[name] = solver.step(states[name], t, step)
                    else:
                        states[name] = solver.step(states[name], step)
                t += step
            t = t_target
            observe_all(t, index)
    except (FloatingPointError, RuntimeError) as exc:
        aborted = True
        reason = f"{type(exc).__name__}: {exc}"

    for name, _, _ in legs:
        tr = FunctionalTrace(list(rows[name][0].keys()), dict(meta, solution=name,
                                                              aborted=aborted))
        for r in rows[name]:
            tr.add_row(r)
        traces[name] = tr
    if pair:
        traces["ot"] = ot_trace

    result = RunResult(config=cfg, traces=traces, aborted=aborted, abort_reason=reason)
    if outdir is not None:
        os.makedirs(outdir, exist_ok=True)
        for name, tr in traces.items():
            tr.to_csv(os.path.join(outdir, f"trace_{name}.csv"))
        with open(os.path.join(outdir, "config.effective.toml"), "w") as fh:
            fh.write(cfg.to_toml() + "\n")
    return result


def _ot_sample(cfg, grid, states, t, eps_list, ot_trace, warm) -> None:
    mu, nu = tp.common_support_measures(
        Density(grid=grid, values=states["f"]), Density(grid=grid, values=states["g"]),
        threshold=cfg.ot_threshold, max_support=cfg.ot_support_cap,
        mass_bound=cfg.ot_mass_bound)
    cost, _ = tp.exact_w2(mu, nu, budget=cfg.ot_lp_budget)
    row = {"t": t, "T": cost, "support_f": mu.support_size, "support_g": nu.support_size,
           "dropped_f": mu.dropped_mass, "dropped_g": nu.dropped_mass}
    # solve the epsilon ladder largest-first: each solve warm-starts from the
    # same epsilon at the previous sample, or failing that from the next
    # larger epsilon just solved (potentials approach the exact duals)
    order = sorted(range(len(eps_list)), key=lambda k: -eps_list[k])
    prev = None
    for k in order:
        eps = eps_list[k]
        init = None
        if k in warm:
            phi_g, psi_g = warm[k]
            init = (phi_g[mu.flat_index], psi_g[nu.flat_index])
        elif prev is not None:
            init = prev
        res = tp.sinkhorn(mu, nu, eps, tol=cfg.sinkhorn_tol,
                          max_iter=cfg.sinkhorn_max_iter, init=init,
                          over_relax=cfg.sinkhorn_over_relax,
                          materialize_plan=False)
        row[f"T_eps_{k}"] = res.value
        row[f"sinkhorn_iters_{k}"] = res.iterations
        prev = (res.potential_source, res.potential_target)
        phi_g = np.zeros(grid.size)
        phi_g[mu.flat_index] = res.potential_source
        psi_g = np.zeros(grid.size)
        psi_g[nu.flat_index] = res.potential_target
        warm[k] = (phi_g, psi_g)
    ot_trace.add_row(row)


# ---------------------------------------------------------------------------
# verification reports
# ---------------------------------------------------------------------------

@dataclass
class Report:
    name: str
    passed: bool
    not_applicable: bool = False
    slack: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "not_applicable": self.not_applicable,
                "slack": self.slack, "details": self.details}


def _resolution_slack(meta: dict, cfg_a: float = 1e-4, cfg_b: float = 1.0):
    h = float(meta.get("h", 0.0))
    dt = float(meta.get("dt", 0.0))
    base = cfg_b * (h * h + dt)
    return lambda value: cfg_a * abs(value) + base, {"value_factor": cfg_a,
                                                     "resolution_term": base}


def verify_l2_decay(trace: FunctionalTrace, dim: int, lam_in,
                    window: tuple[float, float] | None = None,
                    rate_tol: float = 0.1, envelope_tol: float = 0.05,
                    slack_value_factor: float = 1e-4,
                    slack_resolution_factor: float = 1.0) -> Report:
    """Exponential decay of the relative L2 distance, with threshold time."""
    t = trace.times
    E = trace.column("rel_l2")
    lam_in = np.asarray(lam_in, dtype=float)
    lam_in = lam_in * (dim / lam_in.sum())     # measured moments: pin the trace
    t0 = monotonicity_threshold(lam_in, dim)
    if window is None:
        window = (max(t0, 0.1), min(1.5, float(t[-1])))
    slack, slack_info = _resolution_slack(trace.meta, slack_value_factor,
                                          slack_resolution_factor)
    rep = fit_decay(t, E, window, dim, lam_in=lam_in, rate_tol=rate_tol,
                    envelope_tol=envelope_tol, slack=slack)
    return Report(
        name="relative_l2_decay", passed=rep.passed, slack=slack_info,
        details={
            "rate": rep.rate, "rate_target": rep.details["rate_target"],
            "t_threshold": rep.t_threshold,
            "envelope_constant": rep.envelope_constant,
            "envelope_constant_maximized": rep.details["envelope_constant_maximized"],
            "rate_pass": rep.rate_pass, "monotone_pass": rep.monotone_pass,
            "envelope_pass": rep.envelope_pass,
            "envelope_margin": rep.details["envelope_margin"],
            "n_points": rep.n_points,
            "curve": {"t": t.tolist(), "E": E.tolist()},
        })


def verify_transport_monotone(ot_trace: FunctionalTrace,
                              slack_value_factor: float = 1e-4,
                              slack_resolution_factor: float = 1.0) -> Report:
    """T and every T_eps must be nonincreasing along the pair run."""
    slack, slack_info = _resolution_slack(ot_trace.meta, slack_value_factor,
                                          slack_resolution_factor)
    cols = ["T"] + [c for c in ot_trace.columns if c.startswith("T_eps_")]
    worst = {}
    ok = True
    for c in cols:
        v = ot_trace.column(c)
        diffs = np.diff(v)
        allowed = np.array([slack(x) for x in v[:-1]])
        margin = float(np.max(diffs - allowed)) if diffs.size else -np.inf
        worst[c] = margin
        if margin > 0:
            ok = False
    return Report(name="transport_monotonicity", passed=ok, slack=slack_info,
                  details={"worst_increase_minus_slack": worst,
                           "t": ot_trace.times.tolist(),
                           "curves": {c: ot_trace.column(c).tolist() for c in cols}})


def verify_soft_potential_bound(result: RunResult, gamma: float, p: float,
                                envelope_tol: float = 0.05) -> Report:
    """Gronwall envelope for T along a soft-potential pair run."""
    try:
        consts = contraction_constants(gamma, p)
    except ValueError as exc:
        return Report(name="soft_potential_bound", passed=False, not_applicable=True,
                      details={"reason": str(exc)})
    ftr, gtr, ot = result.traces["f"], result.traces["g"], result.traces["ot"]
    t = ftr.times
    col = f"lp_{p:g}"
    normf = ftr.column(col) ** consts.exponent
    normg = gtr.column(col) ** consts.exponent
    integrand = normf + normg
    cum = np.zeros_like(t)
    cum[1:] = np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(t))
    tot = ot.times
    T = ot.column("T")
    cum_at = np.interp(tot, t, cum)
    bound = T[0] * np.exp(consts.prefactor * consts.interaction * cum_at) * (1.0 + envelope_tol)
    margin = float(np.max(T - bound))
    return Report(
        name="soft_potential_bound", passed=bool(margin <= 0.0),
        slack={"envelope_tol": envelope_tol},
        details={"gamma": gamma, "p": p, "prefactor": consts.prefactor,
                 "exponent": consts.exponent, "interaction": consts.interaction,
                 "margin": margin,
                 "t": tot.tolist(), "T": T.tolist(), "bound": bound.tolist()})


def verify_coulomb_bound(result: RunResult, tau0: float = 0.1,
                         prefactor: float | None = None,
                         envelope_tol: float = 0.05,
                         threshold: float = float(np.exp(-4.0))) -> Report:
    """Double-exponential Coulomb envelope under the small-distance hypothesis."""
    ftr, gtr, ot = result.traces["f"], result.traces["g"], result.traces["ot"]
    T = ot.column("T")
    tot = ot.times
    if T[0] >= threshold:
        return Report(name="coulomb_bound", passed=False, not_applicable=True,
                      details={"reason": f"initial distance {T[0]:.4g} is not below "
                                         f"exp(-4) = {threshold:.4g}"})
    t = ftr.times
    beta_full = coulomb_beta(t, ftr.column("lp_inf"), gtr.column("lp_inf"),
                             prefactor=prefactor)
    beta_at = np.interp(tot, t, beta_full)
    bound = T[0] ** np.exp(-beta_at) * (1.0 + envelope_tol)
    sel = tot <= tau0 + 1e-12
    margin = float(np.max(T[sel] - bound[sel]))
    first_cross = None
    above = np.nonzero(T >= threshold)[0]
    if above.size:
        first_cross = float(tot[above[0]])
    return Report(
        name="coulomb_bound", passed=bool(margin <= 0.0),
        slack={"envelope_tol": envelope_tol},
        details={"tau0": tau0, "margin": margin,
                 "prefactor": prefactor if prefactor is not None
                 else COULOMB_PREFACTOR * 9.0,
                 "first_time_above_threshold": first_cross,
                 "t": tot.tolist(), "T": T.tolist(), "bound": bound.tolist()})


def heat_sanity(dim: int = 2, extent: float = 7.0, npts: int = 41,
                times=(0.0, 0.15, 0.3, 0.45), shift_cells: int = 3,
                var1: float = 1.0, var2: float = 1.35) -> Report:
    """Transport distance along two analytically spreading Gaussians.

    Under pure diffusion each axis variance grows by 2t.  For translated
    copies of one Gaussian the distance is exactly |shift|^2 at every time
    (the translate lives on a shifted lattice, so the discrete optimum is
    the translation itself); for different variances the closed form
    |shift|^2 + d (sqrt(v1+2t) - sqrt(v2+2t))^2 decreases, and the measured
    lattice values must decrease as well.
    """
    grid = make_grid(dim, extent, npts)
    shift = np.zeros(dim)
    shift[0] = shift_cells * grid.h
    shift_sq = float(np.sum(shift ** 2))

    equal_errs = []
    measured = []
    closed = []
    for t in times:
        v1 = var1 + 2.0 * t
        v2 = var2 + 2.0 * t
        fa = discretize(GaussianSpec(cov=(v1,) * dim), grid, standardize=False)
        mu = tp.from_density(fa, mass_bound=1.0)
        # translated copy on the shifted lattice: same weights, moved points
        nu_shift = tp.DiscreteMeasure(points=mu.points + shift, weights=mu.weights)
        cost, _ = tp.exact_w2(mu, nu_shift, budget=npts ** dim + 1)
        equal_errs.append(abs(cost - shift_sq))

        fb = discretize(GaussianSpec(cov=(v2,) * dim, mean=tuple(shift)), grid,
                        standardize=False)
        nb = tp.from_density(fb, mass_bound=1.0)
        cost2, _ = tp.exact_w2(mu, nb, budget=npts ** dim + 1)
        measured.append(cost2)
        closed.append(shift_sq + dim * (np.sqrt(v1) - np.sqrt(v2)) ** 2)

    measured = np.array(measured)
    closed = np.array(closed)
    slack = 1e-4 * measured[:-1] + grid.h ** 2
    monotone = bool(np.all(np.diff(measured) <= slack))
    translate_ok = max(equal_errs) < 1e-6
    tracks = bool(np.max(np.abs(measured - closed)) < 0.05 * closed[0] + grid.h ** 2)
    return Report(
        name="heat_flow_sanity", passed=bool(translate_ok and monotone and tracks),
        slack={"translate_tol": 1e-6, "resolution_term": grid.h ** 2},
        details={"translate_errors": equal_errs,
                 "measured": measured.tolist(), "closed_form": closed.tolist(),
                 "times": list(times), "monotone": monotone,
                 "closed_form_monotone": bool(np.all(np.diff(closed) <= 1e-12))})


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

def emit_report(reports: list[Report], outdir, traces: dict | None = None) -> list[str]:
    """Write the machine-readable report set plus plot-ready data files.

    Produces ``report.json`` (versioned schema), one CSV per trace, and a
    two-or-three-column ``.dat`` file for every curve found in the report
    details (gnuplot-ready).  Returns the list of written paths.
    """
    os.makedirs(outdir, exist_ok=True)
    written = []
    doc = {"schema": "landau-lab-report-v1",
           "reports": [r.to_dict() for r in reports]}
    path = os.path.join(outdir, "report.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)

    for r in reports:
        det = r.details
        if "t" in det and "T" in det:
            cols = ["t", "T"] + (["bound"] if "bound" in det else [])
            path = os.path.join(outdir, f"{r.name}.dat")
            with open(path, "w") as fh:
                fh.write("# " + " ".join(cols) + "\n")
                for i in range(len(det["t"])):
                    fh.write(" ".join(format(float(det[c][i]), ".17g") for c in cols) + "\n")
            written.append(path)
        elif "curve" in det:
            path = os.path.join(outdir, f"{r.name}.dat")
            keys = list(det["curve"].keys())
            with open(path, "w") as fh:
                fh.write("# " + " ".join(keys) + "\n")
                for i in range(len(det["curve"][keys[0]])):
                    fh.write(" ".join(format(float(det["curve"][k][i]), ".17g")
                                      for k in keys) + "\n")
            written.append(path)

    if traces:
        for name, tr in traces.items():
            path = os.path.join(outdir, f"trace_{name}.csv")
            tr.to_csv(path)
            written.append(path)
    return written


def load_report(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != "landau-lab-report-v1":
        raise ValueError(f"unknown report schema {doc.get('schema')!r}")
    return doc
