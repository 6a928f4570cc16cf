"""Experiment drivers with config files, CSV emission, and run metadata.

Four experiments are exposed through the ``iga-explicit`` entry point:

``spectrum``   discrete frequency spectra of the fixed-fixed string for the
               consistent, customized, and rowsum-lumped mass matrices;
``project``    quasi-projection exactness and convergence tables;
``stability``  maximum frequencies and critical timesteps per mass kind,
               with and without outlier removal;
``annulus``    explicit dynamics of the vibrating annular membrane over one
               period with mesh refinement and L2 errors.

Configs are flat ``key = value`` text files; every key can be overridden by a
command-line flag of the identical name. CSV outputs carry ``# key=value``
metadata lines before the header row.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .assembly import (
    DiscreteSystem,
    assembled_stiffness_1d,
    mass_operator,
    parametric_moments,
    physical_moments,
    project_initial,
    stiffness_apply,
)
from .benchmarks import annulus_solution, l2_error, string_frequencies
from .dualbasis import constrain_dual, grammian, quasi_project
from .dynamics import (
    PAPER_CMAX,
    TABLEAUS,
    DynamicState,
    OutlierConstraint,
    critical_dt,
    eigensolve,
    max_frequency,
    rk_step,
    stability_limit,
)
from .errors import ConfigError, NumericalError
from .splinecore import PERIODIC, uniform_space
from .geometry import annulus_map

EXPERIMENTS = ("spectrum", "annulus", "project", "stability")
RUN_MASS_KINDS = ("galerkin_consistent", "customized", "rowsum_lumped")


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters of one experiment invocation."""

    experiment: str
    degree: int = 3
    n: int = 250  # spectrum / stability space dimension
    n_elems: tuple = (8, 16, 32)  # annulus radial element counts
    angular_factor: int = 2
    n_values: tuple = (10, 20, 40)  # project space dimensions
    mass_kind: str = "all"
    outlier_removed: bool = False
    rk_scheme: str = "auto"
    dt_fraction: float = 0.5
    beta: int | None = None
    output_dir: str = "results"

    def validate(self):
        problems = []
        if self.experiment not in EXPERIMENTS:
            problems.append(f"unknown experiment {self.experiment!r}")
        if self.degree not in (2, 3, 4, 5):
            problems.append(f"degree must be one of 2, 3, 4, 5 (got {self.degree})")
        if not 0.0 < self.dt_fraction <= 1.0:
            problems.append(f"dt_fraction must be in (0, 1] (got {self.dt_fraction})")
        if self.n <= self.degree + 2:
            problems.append(f"space dimension n={self.n} too small for degree {self.degree}")
        if any(m <= 0 for m in self.n_elems):
            problems.append("mesh counts must be positive")
        if any(m <= 0 for m in self.n_values):
            problems.append("project dimensions must be positive")
        if self.mass_kind not in RUN_MASS_KINDS + ("all", "petrov_consistent"):
            problems.append(f"unknown mass kind {self.mass_kind!r}")
        if self.rk_scheme not in ("auto", "rk2", "rk4", "rk6"):
            problems.append(f"unknown rk scheme {self.rk_scheme!r}")
        if self.angular_factor <= 0:
            problems.append("angular_factor must be positive")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def kinds(self):
        return RUN_MASS_KINDS if self.mass_kind == "all" else (self.mass_kind,)


_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False,
                "yes": True, "no": False}

_INT_KEYS = {"degree", "n", "angular_factor", "beta"}
_FLOAT_KEYS = {"dt_fraction"}
_LIST_KEYS = {"n_elems", "n_values"}
_BOOL_KEYS = {"outlier_removed"}


def parse_config_file(path):
    """Flat key=value file with # comments; errors carry line numbers."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if not key or not val:
                raise ConfigError(f"{path}:{lineno}: empty key or value")
            try:
                values[key] = _convert(key, val)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return values


def _convert(key, val):
    if key in _INT_KEYS:
        return int(val)
    if key in _FLOAT_KEYS:
        return float(val)
    if key in _BOOL_KEYS:
        low = val.lower()
        if low not in _BOOL_VALUES:
            raise ValueError(f"expected a boolean for {key}, got {val!r}")
        return _BOOL_VALUES[low]
    if key in _LIST_KEYS:
        return tuple(int(v) for v in val.split(","))
    return val


def build_config(experiment, file_values=None, overrides=None):
    values = dict(file_values or {})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values.pop("experiment", None)
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = RunConfig(experiment=experiment, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


# ---------------------------------------------------------------------------
# CSV helpers


def _fmt(v):
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def write_csv(path, metadata, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        for key in sorted(metadata):
            fh.write(f"# {key}={metadata[key]}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _base_metadata(config, system=None, extra=None):
    md = {
        "experiment": config.experiment,
        "degree": config.degree,
        "mass_kind": config.mass_kind,
        "outlier_removed": config.outlier_removed,
        "rk_scheme": config.rk_scheme,
        "dt_fraction": config.dt_fraction,
        "tableau_rk2": "3-stage order-2 (iterated midpoint)",
        "tableau_rk4": "classical 4-stage",
        "tableau_rk6": "Verner 8-stage",
        "cmax_paper": PAPER_CMAX,
        "cmax_computed": {k: round(stability_limit(t), 6) for k, t in TABLEAUS.items()},
    }
    if system is not None:
        md["dual_halfwidth"] = [d.halfwidth for d in system.duals]
        md["quad_points_mass"] = system.mass_points
        md["quad_points_stiffness"] = system.stiffness_points
        md["dirichlet_sides"] = system.dirichlet
        md["kappa"] = system.kappa
    if extra:
        md.update(extra)
    return md


# ---------------------------------------------------------------------------
# spectrum


def string_spectra(p, n_dim, beta=None, outlier_removed=False):
    """Dense string frequencies for the three mass kinds.

    Returns (system, {kind: frequencies}) with Dirichlet ends imposed and an
    optional outlier-removal basis transformation applied to all kinds.
    """
    space = uniform_space(n_dim - p, p)
    system = DiscreteSystem(
        [space], mass_kind="customized", dirichlet=[(True, True)], dual_halfwidth=beta
    )
    lo, hi = system.free_range(0)
    G = grammian(space)
    K = assembled_stiffness_1d(system, test_mode="standard").to_dense()[lo:hi, lo:hi]
    masses = {
        "galerkin_consistent": G.to_dense()[lo:hi, lo:hi],
        "rowsum_lumped": np.diag(G.rowsums()[lo:hi]),
        "customized": np.linalg.inv(system.constrained_duals[0].dense_free()),
    }
    T = None
    if outlier_removed:
        T = OutlierConstraint(system).T
    freqs = {}
    for kind, M in masses.items():
        if T is not None:
            res = eigensolve(T.T @ K @ T, T.T @ M @ T, kind, True)
        else:
            res = eigensolve(K, M, kind, False)
        freqs[kind] = res.frequencies
    return system, freqs


def run_spectrum(config):
    p = config.degree
    system, freqs = string_spectra(p, config.n, config.beta, config.outlier_removed)
    n_modes = len(freqs["galerkin_consistent"])
    k = np.arange(1, n_modes + 1)
    exact = string_frequencies(k)
    rows = []
    for i in range(n_modes):
        row = [int(k[i]), k[i] / n_modes, exact[i]]
        for kind in ("galerkin_consistent", "customized", "rowsum_lumped"):
            row.append(freqs[kind][i])
        for kind in ("galerkin_consistent", "customized", "rowsum_lumped"):
            row.append(abs(freqs[kind][i] / exact[i] - 1.0))
        rows.append(row)
    header = [
        "mode_index",
        "mode_fraction",
        "omega_exact",
        "omega_consistent",
        "omega_customized",
        "omega_lumped",
        "err_consistent",
        "err_customized",
        "err_lumped",
    ]
    md = _base_metadata(config, system, {"n_dimension": config.n, "n_modes": n_modes})
    path = os.path.join(config.output_dir, f"spectrum_p{p}.csv")
    return write_csv(path, md, header, rows)


# ---------------------------------------------------------------------------
# project


def run_project(config):
    p = config.degree
    rows = []
    system = None
    for n_dim in config.n_values:
        space = uniform_space(n_dim - p, p)
        targets = []
        for q in range(p + 1):
            targets.append((f"x^{q}", lambda x, q=q: x**q, (False, False)))
        targets.append((f"x^{p}", lambda x: x**p, (True, False)))
        targets.append((f"(1-x)^{p}", lambda x: (1.0 - x) ** p, (False, True)))
        targets.append(
            (
                f"x^{p - 1}(1-x)",
                lambda x: x ** (p - 1) * (1.0 - x),
                (True, True),
            )
        )
        targets.append(("sin(pi x)", lambda x: np.sin(np.pi * x), (False, False)))
        targets.append(("sin(pi x)", lambda x: np.sin(np.pi * x), (True, True)))
        for name, f, (dl, dr) in targets:
            system = DiscreteSystem(
                [space],
                mass_kind="customized",
                dirichlet=[(dl, dr)],
                dual_halfwidth=config.beta,
            )
            dual = system.duals[0]
            op = constrain_dual(dual, left=dl, right=dr) if (dl or dr) else dual
            coeffs_full = quasi_project(op, f)
            err = l2_error(system, system.extract(coeffs_full), f)
            constrained = {
                (False, False): "none",
                (True, False): "left",
                (False, True): "right",
                (True, True): "both",
            }[(dl, dr)]
            rows.append([name, p, n_dim, constrained, err])
    header = ["function", "p", "N", "constrained", "l2_error"]
    md = _base_metadata(config, system, {"n_values": list(config.n_values)})
    path = os.path.join(config.output_dir, f"project_p{p}.csv")
    return write_csv(path, md, header, rows)


# ---------------------------------------------------------------------------
# stability


def run_stability(config):
    p = config.degree
    scheme = config.rk_scheme if config.rk_scheme != "auto" else "rk4"
    c_paper = PAPER_CMAX[scheme]
    c_computed = stability_limit(TABLEAUS[scheme])
    rows = []
    system = None
    spectra = {}
    for outlier in (False, True):
        system, spectra[outlier] = string_spectra(p, config.n, config.beta, outlier)
    base_dt = critical_dt(c_paper, float(spectra[False]["galerkin_consistent"][-1]))
    for outlier in (False, True):
        for kind in config.kinds():
            omega = float(spectra[outlier][kind][-1])
            dt = critical_dt(c_paper, omega)
            rows.append([p, kind, outlier, omega, c_paper, c_computed, dt, dt / base_dt])
    header = [
        "p",
        "mass_kind",
        "outlier_removed",
        "omega_max",
        "C_max_paper",
        "C_max_computed",
        "dt_crit",
        "ratio_vs_consistent",
    ]
    md = _base_metadata(config, system, {"n_dimension": config.n, "scheme": scheme})
    path = os.path.join(config.output_dir, f"stability_p{p}.csv")
    return write_csv(path, md, header, rows)


# ---------------------------------------------------------------------------
# annulus


def _annulus_system(sol, p, n_r, n_theta, kind, beta=None):
    s1 = uniform_space(n_r, p)
    s2 = uniform_space(n_theta, p, boundary_kind=PERIODIC)
    geo = annulus_map(sol.inner_radius, sol.outer_radius)
    return DiscreteSystem(
        [s1, s2],
        geometry=geo,
        mass_kind=kind,
        kappa=sol.kappa,
        dirichlet=[(True, True), (False, False)],
        dual_halfwidth=beta,
    )


def _scheme_for(kind, p, requested):
    if requested != "auto":
        return requested
    if kind == "rowsum_lumped":
        return "rk2"
    return "rk4" if p in (2, 3, 4) else "rk6"


def _reduced_initial(system, outlier, u0_param):
    """Consistent projection of the initial field onto the reduced space."""
    from .assembly import galerkin_gram_operator, parametric_gram_operator

    if system.mass_kind in ("customized", "petrov_consistent"):
        m_free = system.extract(parametric_moments(system, u0_param))
        op = parametric_gram_operator(system)
    else:
        m_free = system.extract(physical_moments(system, u0_param))
        op = galerkin_gram_operator(system)
    G0 = op.factors[0].todense()
    red = outlier.T.T @ G0 @ outlier.T
    y = np.linalg.solve(red, outlier.restrict(m_free))
    if system.ndim == 2:
        y = op.factors[1].solve(y.T).T
    return y


def annulus_run_single(sol, p, n_r, n_theta, kind, scheme, dt_fraction,
                       outlier_removed=False, beta=None):
    """One explicit run over a full period; returns a result dict.

    The angular dual halfwidth defaults to degree+1: the coarse meshes of the
    membrane study put the initial field at the angular resolution limit,
    where one extra band keeps the customized-mass evolution within a factor
    two of the consistent mass (the asymptotic behavior is identical). The
    radial direction keeps the default halfwidth, which is where the
    construction is SPD on all mesh sizes.
    """
    if beta is None:
        beta = (p, p + 1)
    system = _annulus_system(sol, p, n_r, n_theta, kind, beta)
    mass = mass_operator(system)
    dr = sol.outer_radius - sol.inner_radius

    def u0_param(x1, x2):
        r = sol.inner_radius + dr * x1
        return sol.radial(r) * np.cos(sol.angular_wavenumber * 2.0 * np.pi * x2)

    outlier = None
    if outlier_removed and p >= 3:
        outlier = OutlierConstraint(system)

    # the timestep bound tolerates a loose frequency estimate; the dense top
    # edge of the 2D spectrum makes the operator-level default impractical
    omega_tol = 1e-6
    t0 = time.perf_counter()
    if outlier is None:
        omega_max = max_frequency(system, tol=omega_tol)
        rhs = lambda d: -mass.solve(stiffness_apply(system, d))
        d0 = project_initial(system, u0_param)
    else:
        omega_max = max_frequency(system, outlier=outlier, tol=omega_tol)
        reduced_solve = outlier.reduce_mass(system)
        rhs = lambda y: -reduced_solve(
            outlier.restrict(stiffness_apply(system, outlier.prolong(y)))
        )
        d0 = _reduced_initial(system, outlier, u0_param)

    period = sol.period
    dt_crit = critical_dt(PAPER_CMAX[scheme], omega_max)
    steps = max(int(np.ceil(period / (dt_fraction * dt_crit))), 1)
    dt = period / steps
    state = DynamicState(d0, np.zeros_like(d0), 0.0)
    init_scale = float(np.max(np.abs(d0))) + 1e-30
    tableau = TABLEAUS[scheme]
    unstable = False
    try:
        for step in range(steps):
            state = rk_step(tableau, rhs, state, dt)
            if np.max(np.abs(state.d)) > 1e6 * init_scale:
                unstable = True
                break
    except NumericalError:
        unstable = True

    if unstable:
        err = float("inf")
    else:
        d_final = outlier.prolong(state.d) if outlier is not None else state.d

        def exact(X, Y):
            r = np.hypot(X, Y)
            th = np.arctan2(Y, X)
            return sol.value(r, th, period)

        err = l2_error(system, d_final, exact)
    wall = time.perf_counter() - t0
    n_free = system.n_free if outlier is None else outlier.n_reduced
    return {
        "system": system,
        "p": p,
        "n_r": n_r,
        "n_theta": n_theta,
        "kind": kind,
        "scheme": scheme,
        "outlier_removed": outlier is not None,
        "omega_max": omega_max,
        "dt": dt,
        "steps": steps,
        "sqrt_dofs": float(np.sqrt(n_free)),
        "l2_rel_error": err,
        "wall_seconds": wall,
        "unstable": unstable,
    }


def run_annulus(config):
    sol = annulus_solution()
    p = config.degree
    header = [
        "p",
        "n_elem_radial",
        "n_elem_angular",
        "sqrt_dofs",
        "mass_kind",
        "rk_scheme",
        "outlier_removed",
        "dt",
        "steps",
        "l2_rel_error",
        "wall_seconds",
    ]
    all_results = []
    paths = []
    system_for_md = None
    for n_r in config.n_elems:
        n_theta = config.angular_factor * n_r
        rows = []
        for kind in config.kinds():
            scheme = _scheme_for(kind, p, config.rk_scheme)
            res = annulus_run_single(
                sol, p, n_r, n_theta, kind, scheme, config.dt_fraction,
                config.outlier_removed, config.beta,
            )
            system_for_md = res["system"]
            all_results.append(res)
            rows.append(
                [
                    p, n_r, n_theta, res["sqrt_dofs"], kind, scheme,
                    res["outlier_removed"], res["dt"], res["steps"],
                    res["l2_rel_error"], res["wall_seconds"],
                ]
            )
        md = _base_metadata(
            config, system_for_md,
            {"inner_radius": sol.inner_radius, "outer_radius": sol.outer_radius,
             "period": sol.period, "angular_wavenumber": sol.angular_wavenumber},
        )
        path = os.path.join(config.output_dir, f"annulus_p{p}_mesh{n_r}x{n_theta}.csv")
        paths.append(write_csv(path, md, header, rows))

    # summary with pairwise convergence slopes per mass kind
    sum_header = header + ["slope_vs_previous_mesh"]
    sum_rows = []
    for kind in config.kinds():
        prev_err = None
        for res in [r for r in all_results if r["kind"] == kind]:
            slope = ""
            if prev_err is not None and np.isfinite(res["l2_rel_error"]) and prev_err > 0:
                slope = repr(float(np.log2(prev_err / res["l2_rel_error"])))
            sum_rows.append(
                [
                    res["p"], res["n_r"], res["n_theta"], res["sqrt_dofs"],
                    res["kind"], res["scheme"], res["outlier_removed"],
                    res["dt"], res["steps"], res["l2_rel_error"],
                    res["wall_seconds"], slope,
                ]
            )
            prev_err = res["l2_rel_error"]
    md = _base_metadata(
        config, system_for_md,
        {"inner_radius": sol.inner_radius, "outer_radius": sol.outer_radius,
         "period": sol.period, "meshes": list(config.n_elems)},
    )
    path = os.path.join(config.output_dir, f"annulus_p{p}_summary.csv")
    paths.append(write_csv(path, md, sum_header, sum_rows))
    return paths


# ---------------------------------------------------------------------------
# entry point


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="iga-explicit",
        description="Explicit spline dynamics experiments with dual-basis mass lumping.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="flat key=value config file")
        sp.add_argument("--degree", type=int, default=None)
        sp.add_argument("--n", type=int, default=None)
        sp.add_argument("--n_elems", type=lambda v: tuple(int(x) for x in v.split(",")),
                        default=None)
        sp.add_argument("--angular_factor", type=int, default=None)
        sp.add_argument("--n_values", type=lambda v: tuple(int(x) for x in v.split(",")),
                        default=None)
        sp.add_argument("--mass_kind", default=None)
        sp.add_argument("--outlier_removed", type=lambda v: _convert("outlier_removed", v),
                        default=None)
        sp.add_argument("--rk_scheme", default=None)
        sp.add_argument("--dt_fraction", type=float, default=None)
        sp.add_argument("--beta", type=int, default=None)
        sp.add_argument("--output_dir", default=None)
    args = parser.parse_args(argv)

    try:
        file_values = parse_config_file(args.config) if args.config else {}
        overrides = {
            k: getattr(args, k)
            for k in RunConfig.__dataclass_fields__
            if k != "experiment" and hasattr(args, k)
        }
        config = build_config(args.experiment, file_values, overrides)
        runner = {
            "spectrum": run_spectrum,
            "project": run_project,
            "stability": run_stability,
            "annulus": run_annulus,
        }[config.experiment]
        out = runner(config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    paths = out if isinstance(out, list) else [out]
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
