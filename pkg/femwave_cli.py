#!/usr/bin/env python3
"""
femwave_cli — command-line front end.

  femwave ref-report [--output PATH]
  femwave build  --levels J [--mesh M] [--export-dir DIR] [--threads N]
  femwave cond   --norm {l2,h1,h1dual} --levels J [--tol T] [--max-iter N] [--seed S]
                 [--method {auto,lanczos,dense}] [--normalization {norm,level}]
                 [--mesh M] [--output CSV] [--export-mm PATH] [--threads N]
  femwave check  --levels J [--mesh M] [--seed S]
  femwave export --matrix NAME --level j [--mesh M] [--output PATH] [--svg PATH --wavelet K]

--mesh takes a bundled mesh name (unit_square, l_shape) or a file path.
Results go to stdout (CSV for cond, JSON otherwise); logs go to stderr or $FEMWAVE_LOG.

Exit codes: 0 ok, 1 usage or validation, 2 I/O, 3 invariant failure, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

import artifacts
import assembly
import ref_element as ref
import spectral
import support_plot
import wavelets
from mesh_hierarchy import MeshError, build_hierarchy, read_mesh_file, resolve_mesh

LOG_PATH = os.environ.get("FEMWAVE_LOG")
LOG_LEVEL = os.environ.get("FEMWAVE_LOG_LEVEL", "WARNING")

DEFAULT_MESH = "unit_square"
COMMANDS = ("ref-report", "build", "cond", "check", "export")
MATRICES = ("theta_phi", "xi_phi", "n_ntilde", "n_n", "mass", "stiffness", "m0", "m1", "g_l2", "g_h1")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_INVARIANT = 3
EXIT_CONVERGENCE = 4

GRAM_BOUND_SLACK = 1e-10


class ConfigError(ValueError):
    """Invalid command line or run configuration."""


def get_logger(level=None):
    logger = logging.getLogger("femwave")
    if not logger.handlers:
        if LOG_PATH:
            Path(LOG_PATH).parent.mkdir(parents=True, exist_ok=True)
            handler = logging.FileHandler(LOG_PATH)
        else:
            handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        logger.addHandler(handler)
        logger.setLevel(LOG_LEVEL.upper())
    if level is not None:
        logger.setLevel(level)
    return logger


# --- Configuration ---

@dataclass
class RunConfig:
    command: str
    mesh: str = DEFAULT_MESH
    levels: int = 0
    norm: str = spectral.L2
    tol: float = 1e-6
    max_iter: int = spectral.LANCZOS_MAX_ITER
    seed: int = 0
    method: str = "auto"
    normalization: str = "norm"
    output: str | None = None
    export_mm: str | None = None
    export_dir: str | None = None
    matrix: str | None = None
    svg: str | None = None
    wavelet: int | None = None
    threads: int = 1

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        values = vars(args)
        return cls(**{f.name: values[f.name] for f in fields(cls) if values.get(f.name) is not None})

    @property
    def mesh_path(self) -> Path:
        return resolve_mesh(self.mesh)

    def validate(self):
        """Check arguments and paths before any work starts."""
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command: {self.command}")
        if self.levels < 0:
            raise ConfigError(f"levels must be >= 0, got {self.levels}")
        if not 0 < self.tol < 1:
            raise ConfigError(f"tolerance must be in (0, 1), got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError("max-iter must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.norm not in spectral.NORM_TAGS:
            raise ConfigError(f"unknown norm: {self.norm}")
        if self.command == "cond" and self.norm == spectral.H1_DUAL and self.levels > wavelets.DUAL_LEVEL_CAP:
            raise assembly.LevelCapError(f"dual condition numbers are capped at level {wavelets.DUAL_LEVEL_CAP}")
        if self.command == "export":
            if self.matrix is None and self.svg is None:
                raise ConfigError("export needs --matrix or --svg")
            if self.svg is not None and self.wavelet is None:
                raise ConfigError("--svg needs --wavelet")
        if self.command != "ref-report" and not self.mesh_path.is_file():
            raise FileNotFoundError(f"mesh not found: {self.mesh}")
        for name in (self.output, self.export_mm, self.svg):
            if name is not None:
                artifacts.resolve_output(name).parent.mkdir(parents=True, exist_ok=True)
        if self.export_dir is not None:
            artifacts.resolve_output(self.export_dir).mkdir(parents=True, exist_ok=True)


# --- Commands ---

def _hierarchy(config, extra):
    mesh = read_mesh_file(config.mesh_path)
    return build_hierarchy(mesh, config.levels + extra)


def _print_json(obj):
    print(json.dumps(obj, indent=2))


def cmd_ref_report(config) -> int:
    text = ref.format_report()
    text += f"\nlambda_min of the symmetric part of <N, N_tilde>: {spectral.lambda_min_check():.15g}\n"
    if config.output:
        path = artifacts.write_text(config.output, text)
        get_logger().info("wrote %s", path)
        _print_json({"path": str(path)})
    else:
        print(text, end="")
    return EXIT_OK


def cmd_build(config) -> int:
    h = _hierarchy(config, 1)
    transform = wavelets.build_transform(h, config.levels, threads=config.threads)
    result = {
        "mesh": config.mesh,
        "levels": config.levels,
        "dofs": [len(h.node_set(j + 1)) for j in range(config.levels + 1)],
        "wavelets": [{"level": wl.level, "count": len(wl), "histogram": _str_keys(wl.support_histogram())}
                     for wl in transform.levels],
    }
    if config.export_dir:
        exported = []
        for m in transform.transforms:
            for name, matrix in (("m0", m.m0), ("m1", m.m1)):
                path = Path(config.export_dir) / f"{name}_{m.level}.mtx"
                exported.append(str(artifacts.write_matrix_market(path, matrix)))
        result["exported"] = exported
    _print_json(result)
    return EXIT_OK


def _str_keys(histogram):
    return {tag: {str(k): v for k, v in sizes.items()} for tag, sizes in histogram.items()}


def cmd_cond(config) -> int:
    # the dual system is assembled one level finer
    h = _hierarchy(config, 2 if config.norm == spectral.H1_DUAL else 1)
    transform = wavelets.build_transform(h, config.levels, threads=config.threads)
    options = dict(tol=config.tol, max_iter=config.max_iter, seed=config.seed, method=config.method,
                   normalization=config.normalization, transform=transform)
    if config.norm == spectral.H1_DUAL:
        report = spectral.dual_condition(h, config.levels, **options)
    else:
        report = spectral.wavelet_condition(h, config.levels, config.norm, **options)
    print(artifacts.format_csv(report), end="")
    if config.output:
        get_logger().info("wrote %s", artifacts.write_csv(config.output, report))
    if config.export_mm:
        if config.norm == spectral.H1_DUAL:
            op = spectral.dual_operator(transform, config.normalization)
        else:
            op = spectral.wavelet_operator(transform, config.norm, config.normalization)
        path = artifacts.write_matrix_market(config.export_mm, spectral.dense_matrix(op),
                                             comment=f"G {config.norm} J={config.levels}")
        get_logger().info("wrote %s", path)
    return EXIT_OK


def _export_matrix(h, name, j):
    data = ref.reference_data()

    def gram(a, b):
        return assembly.global_gram(assembly.assemble(h, j, a), assembly.assemble(h, j, b)).to_scipy()

    if name == "theta_phi":
        return gram(data.theta, data.phi_tilde)
    if name == "xi_phi":
        return gram(data.xi, data.phi_tilde)
    if name == "n_ntilde":
        return gram(data.n, data.n_tilde)
    if name == "n_n":
        return gram(data.n, data.n)
    if name in ("mass", "stiffness"):
        return spectral.assemble_operator(h, j, name).matrix
    if name in ("m0", "m1"):
        m = wavelets.two_level(h, j)
        return m.m0 if name == "m0" else m.m1
    transform = wavelets.build_transform(h, j)
    return spectral.dense_matrix(spectral.wavelet_operator(transform, name[2:]))


def cmd_export(config) -> int:
    h = _hierarchy(config, 2)
    j = config.levels
    result = {}
    if config.matrix:
        if config.matrix not in MATRICES:
            raise ConfigError(f"unknown matrix: {config.matrix}")
        matrix = _export_matrix(h, config.matrix, j)
        path = artifacts.write_matrix_market(config.output or f"{config.matrix}_{j}.mtx", matrix,
                                             comment=f"{config.matrix} level {j}")
        result["path"] = str(path)
        result["shape"] = list(matrix.shape)
    if config.svg:
        wl = wavelets.build_wavelets(h, j)
        result["svg"] = str(support_plot.write_support_svg(config.svg, wl, config.wavelet))
    _print_json(result)
    return EXIT_OK


# --- Invariant suite ---

def _gram_bounds(h, j, local):
    """Global Gram extremes lie within the reference ones."""
    coll = assembly.assemble(h, j, local)
    if not len(coll):
        return True, "no functions"
    if len(coll) > assembly.DENSE_LIMIT:
        return True, f"skipped: {len(coll)} functions"
    lo, hi = assembly.global_gram(coll, coll).extreme_eigenvalues()
    ref_lo, ref_hi = assembly.reference_extremes(local)
    ok = ref_lo - GRAM_BOUND_SLACK <= lo and hi <= ref_hi + GRAM_BOUND_SLACK
    return ok, f"[{lo:.6g}, {hi:.6g}] within [{ref_lo:.6g}, {ref_hi:.6g}]"


def run_checks(h, J, seed=0) -> list:
    """Run the invariant suite on levels up to J. Returns [{name, passed, detail}]."""
    data = ref.reference_data()
    results = []

    def check(name, fn):
        try:
            passed, detail = fn()
        except assembly.LevelCapError as e:
            passed, detail = True, f"skipped: {e}"
        except (ref.ConstructionError, ValueError) as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        results.append({"name": name, "passed": bool(passed), "detail": detail})
        get_logger().info("check %s: %s (%s)", name, "ok" if passed else "FAILED", detail)

    check("reference_biorthogonality",
          lambda: (ref.reference_gram("Theta", "Phi_tilde").is_identity(), "<Theta, Phi_tilde> = vol(T) Id"))

    def xi_phi():
        ref.check_xi_phi_values(data.xi, data.phi_tilde)
        return True, "3/100, -1/48, 27/240"
    check("reference_xi_phi_values", xi_phi)

    def lambda_min():
        lam, exact = spectral.lambda_min_check(), spectral.lambda_min_exact()
        return lam > 0 and abs(lam - exact) <= 1e-12, f"{lam:.15g} (characteristic polynomial {exact:.15g})"
    check("lambda_min", lambda_min)

    union = ref.union(data.theta, data.xi, "Theta+Xi")
    for j in range(J):
        def theta_phi(j=j):
            g = assembly.global_gram(assembly.assemble(h, j, data.theta), assembly.assemble(h, j, data.phi_tilde))
            return g.is_identity(), f"level {j}"
        check(f"global_biorthogonality_{j}", theta_phi)
        for local in (data.n, data.n_tilde, union):
            check(f"gram_bounds_{local.name}_{j}", lambda j=j, local=local: _gram_bounds(h, j, local))

        def infsup(j=j):
            bound = assembly.infsup_bound(h, j)
            return bound > 0, f"{bound:.6g}"
        check(f"infsup_{j}", infsup)

    for level in range(1, J + 1):
        wl = wavelets.build_wavelets(h, level)

        def orthogonal(wl=wl):
            defect = wavelets.orthogonality_defect(wl)
            return defect.nnz == 0, f"{defect.nnz} nonzero <psi, phi_tilde>"
        check(f"wavelet_orthogonality_{level}", orthogonal)

        def moments(wl=wl, level=level):
            found = wavelets.vanishing_moments(h, level, wl)
            bad = [k for k, _, m in found if any(m)]
            return not bad, f"{len(found)} wavelets away from Gamma, {len(bad)} with nonzero moments"
        check(f"vanishing_moments_{level}", moments)

        def correction(wl=wl):
            rows = wl.correction.rows()
            worst = {wavelets.EDGE: 0, wavelets.INTERIOR: 0}
            for k, tag in enumerate(wl.type_tags):
                if wl.avoids_gamma(k):
                    worst[tag] = max(worst[tag], len(rows.get(k, ())))
            irregular = wl.irregular_supports()
            ok = worst[wavelets.EDGE] <= 1 and worst[wavelets.INTERIOR] <= 2 and not irregular
            return ok, (f"max correction terms {worst}; supports {wl.support_histogram()}; "
                        f"{len(irregular)} off the valence-6 sizes {wavelets.SUPPORT_SIZES}")
        check(f"correction_pattern_{level}", correction)

    transform = wavelets.build_transform(h, J)
    rng = np.random.default_rng(seed)

    def round_trip():
        c = rng.standard_normal(transform.size)
        err = np.linalg.norm(transform.analyze(transform.synthesize(c)) - c) / np.linalg.norm(c)
        return err <= 1e-10, f"relative residual {err:.3e}"
    check("analysis_synthesis", round_trip)

    def symmetric():
        defect = spectral.symmetry_defect(spectral.wavelet_operator(transform, spectral.L2), seed=seed)
        return defect <= 1e-10, f"{defect:.3e}"
    check("operator_symmetry", symmetric)

    if h.levels[0].gamma_edges and J <= wavelets.DUAL_LEVEL_CAP:
        def pairing():
            if h.depth < J + 3:
                return True, f"skipped: the dual system needs {J + 3} levels, hierarchy has {h.depth}"
            residual = spectral.dual_pairing_residual(transform, seed=seed)
            return residual <= 1e-8, f"relative residual {residual:.3e}"
        check("dual_pairing", pairing)
    return results


def cmd_check(config) -> int:
    h = _hierarchy(config, 2 if config.levels <= wavelets.DUAL_LEVEL_CAP else 1)
    results = run_checks(h, config.levels, seed=config.seed)
    passed = all(r["passed"] for r in results)
    _print_json({"mesh": config.mesh, "levels": config.levels, "passed": passed, "checks": results})
    return EXIT_OK if passed else EXIT_INVARIANT


HANDLERS = {
    "ref-report": cmd_ref_report,
    "build": cmd_build,
    "cond": cmd_cond,
    "check": cmd_check,
    "export": cmd_export,
}


def run(config: RunConfig) -> int:
    config.validate()
    return HANDLERS[config.command](config)


# --- Argument parsing ---

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="log at INFO")
    common.add_argument("--debug", action="store_true", help="log at DEBUG")

    mesh = argparse.ArgumentParser(add_help=False)
    mesh.add_argument("--mesh", default=DEFAULT_MESH, help="bundled mesh name or mesh file (default: unit_square)")

    parser = _Parser(prog="femwave", description="Quadratic finite element wavelets on triangulations.",
                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ref-report", parents=[common], help="exact reference-element data")
    p.add_argument("--output", help="write the report here instead of stdout")

    p = sub.add_parser("build", parents=[common, mesh], help="build wavelet levels 0..J")
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--export-dir", help="write M0/M1 of every two-level transform here")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("cond", parents=[common, mesh], help="condition numbers for J' = 0..J")
    p.add_argument("--norm", choices=spectral.NORM_TAGS, required=True)
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=spectral.LANCZOS_MAX_ITER)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=spectral.METHODS, default="auto")
    p.add_argument("--normalization", choices=spectral.NORMALIZATIONS, default="norm")
    p.add_argument("--output", help="CSV file")
    p.add_argument("--export-mm", help="Matrix Market file for G at level J")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("check", parents=[common, mesh], help="run the invariant suite")
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("export", parents=[common, mesh], help="Matrix Market or SVG export")
    p.add_argument("--matrix", choices=MATRICES)
    p.add_argument("--level", dest="levels", type=int, required=True)
    p.add_argument("--output", help="Matrix Market file (default: <matrix>_<level>.mtx)")
    p.add_argument("--svg", help="SVG file for one wavelet's support")
    p.add_argument("--wavelet", type=int, help="wavelet index on the given level")
    return parser


def _exit_code(e) -> int:
    if isinstance(e, spectral.ConvergenceError):
        return EXIT_CONVERGENCE
    if isinstance(e, ref.ConstructionError):
        return EXIT_INVARIANT
    if isinstance(e, (MeshError, OSError)):
        return EXIT_IO
    return EXIT_USAGE


def main(argv=None):
    logger = get_logger()
    try:
        args = build_parser().parse_args(argv)
        if args.debug:
            logger.setLevel(logging.DEBUG)
        elif args.verbose:
            logger.setLevel(logging.INFO)
        code = run(RunConfig.from_args(args))
    except (ValueError, LookupError, OSError, RuntimeError) as e:
        code = _exit_code(e)
        logger.debug("%s failed", " ".join(argv or sys.argv[1:]), exc_info=True)
        print(json.dumps({"error": str(e), "exit_code": code}))
        sys.exit(code)
    if code:
        sys.exit(code)


if __name__ == "__main__":
    main()
