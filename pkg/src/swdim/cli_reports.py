"""Command-line batteries and machine-readable verification records.

Every battery returns a list of :class:`VerificationRecord`.  Reports are JSON
arrays written with sorted keys, so identical inputs and seeds give identical
bytes; timings are only recorded with ``--timing`` because wall-clock time is
the one input that is never identical.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from math import comb
from pathlib import Path

import numpy as np
import sympy as sp

from .clifford_core import (FormValue, act, act_exact, build_rep, clifford_hodge_factor, hodge, random_form,
                            sk, subsets)
from .spinor_maps import e_phi, hs_constants, iso_rank_check, iso_spec, q_of_phi
from .sw_system import build_case, random_state

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3

# Anchor tags: each record names the identity it certifies with one of these.
ANCHORS = {
    "clifford.relations": "anticommutation relations of the generators",
    "clifford.skew": "generators act skew-Hermitian",
    "clifford.volume": "normalisation of the volume element on S or on S+/S-",
    "clifford.sk_hermitian": "c(s_k gamma) is Hermitian for real k-forms",
    "clifford.hodge": "c(*gamma) is a fixed power of i times c(gamma)",
    "clifford.square": "c(e_I)^2 = (-1)^(k(k+1)/2)",
    "clifford.self_dual": "c(*gamma) = +-c(gamma) on S+- in middle degree",
    "spinor.iso_rank": "Clifford multiplication onto i su of the spinor space",
    "spinor.q_inverse": "c(q(phi)) = E_phi",
    "spinor.hs_constants": "trace constants 8 and 16 on S+ in dimension 8",
    "weitz.q_closed": "closed forms of the zeroth-order term Q(beta)",
    "weitz.conj_sum": "sum_j c(e_j) c(beta_3) c(e_j) = (n - 6) c(beta_3)",
    "weitz.conj_sum_squared": "sum_j c(e_j) c(beta_3)^2 c(e_j) = 3 c(beta_3)^2 - 8 |beta_3|^2 in dimension 5",
    "weitz.b_skew": "the connection perturbation B_j is skew-Hermitian",
    "weitz.exterior_derivative": "c(d gamma) and c(d* gamma) as symmetrised Clifford sums",
    "weitz.principal_part": "principal part of the remainder matches the curvature table",
    "weitz.change_laplacian": "rough Laplacian of a perturbed connection",
    "weitz.formula": "Weitzenboeck formula with the family curvature table",
    "weitz.formula_engine": "Weitzenboeck formula in the dimension-independent form",
    "symbol.elliptic": "smallest singular value of the principal symbol",
    "symbol.form_block": "form block of the symbol squares to 4|xi|^2",
    "index.value": "index formula arithmetic",
    "example5d.model": "frame model of the circle-bundle example",
    "example5d.q_tau": "q of the tautological spinor",
    "example5d.dirac": "Dirac equation of the circle-bundle example",
    "example5d.curvature": "curvature equation of the circle-bundle example",
    "energy.identity": "energy equals the sum of the residual norms",
    "energy.gradient": "analytic gradient against central differences",
    "solver.energy": "solver reaches the energy tolerance",
    "solver.residual": "residual norms of the solver output",
    "solver.beta_reconstruction": "beta recovered from phi by the Green operator",
}


@dataclass
class VerificationRecord:
    check_id: str
    paper_anchor: str
    n: int
    defect: float
    tolerance: float
    pass_: bool = field(default=False)
    runtime_ms: int = 0
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.paper_anchor not in ANCHORS:
            raise ValueError(f"unknown anchor {self.paper_anchor!r}")
        self.defect = float(self.defect)
        self.tolerance = float(self.tolerance)
        self.pass_ = bool(np.isfinite(self.defect) and self.defect <= self.tolerance)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("pass_")
        return d


class _Recorder:
    """Collects records; wall-clock time per record only when ``timing`` is set."""

    def __init__(self, timing: bool = False):
        self.timing = timing
        self.records: list = []
        self._t = time.perf_counter()

    def add(self, check_id, anchor, n, defect, tol, **detail):
        now = time.perf_counter()
        ms = int(round((now - self._t) * 1000)) if self.timing else 0
        self._t = now
        rec = VerificationRecord(check_id, anchor, int(n), defect, tol, runtime_ms=ms,
                                 detail={k: _plain(v) for k, v in detail.items()})
        self.records.append(rec)
        return rec


def _plain(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return v


# batteries ------------------------------------------------------------------------------

def verify_algebra(n: int, seed: int = 0, samples: int = 3, timing: bool = False) -> list:
    """Clifford conventions, the q-map and the zeroth-order algebra in dimension n."""
    rec = _Recorder(timing)
    rng = np.random.default_rng(seed)
    rep = build_rep(n)
    g = rep.generators
    I = np.eye(rep.rank)
    rec.add("anticommutators", "clifford.relations", n,
            max(np.abs(g[i] @ g[j] + g[j] @ g[i] + 2 * (i == j) * I).max()
                for i in range(n) for j in range(n)), 0.0)
    rec.add("generators_skew", "clifford.skew", n, max(np.abs(x + x.conj().T).max() for x in g), 0.0)
    m = n // 2
    if n % 2:
        vol = np.abs((1j ** ((n + 1) // 2)) * rep.volume - I).max()
    else:
        chir = np.zeros(rep.rank)
        chir[list(rep.plus)] = 1
        chir[list(rep.minus)] = -1
        vol = np.abs((1j ** m) * rep.volume - np.diag(chir)).max()
    rec.add("volume_convention", "clifford.volume", n, vol, 1e-12)
    herm = hod = 0.0
    sides = ("plus", "minus") if n % 2 == 0 else ("full",)
    for _ in range(samples):
        for k in range(n + 1):
            f = random_form(n, k, rng)
            H = act(rep, f * sk(k))
            herm = max(herm, float(np.abs(H - H.conj().T).max()))
            A, B = act(rep, f), act(rep, hodge(f))
            for ch in sides:
                P = rep.projector(ch)
                hod = max(hod, float(np.abs(B @ P - clifford_hodge_factor(n, k, ch) * A @ P).max()))
    rec.add("sk_hermitian", "clifford.sk_hermitian", n, herm, 1e-12)
    rec.add("clifford_hodge", "clifford.hodge", n, hod, 1e-12)
    sq = max(np.abs(rep.basis_matrix(J) @ rep.basis_matrix(J) - (-1) ** (k * (k + 1) // 2) * I).max()
             for k in range(n + 1) for J in subsets(n, k))
    rec.add("basis_squares", "clifford.square", n, sq, 0.0)
    if n % 4 == 0:
        sd = 0.0
        for _ in range(samples):
            f = random_form(n, n // 2, rng)
            A, B = act(rep, f), act(rep, hodge(f))
            for ch, s in (("plus", 1), ("minus", -1)):
                P = rep.projector(ch)
                sd = max(sd, float(np.abs(B @ P - s * A @ P).max()))
        rec.add("self_dual_action", "clifford.self_dual", n, sd, 1e-12)
    if n < 3:
        return rec.records
    case = build_case(n)
    for side in case.sides:
        r = iso_rank_check(rep, case, side)
        rec.add(f"iso_rank_{side}", "spinor.iso_rank", n, abs(r["rank"] - r["expected"])
                + abs(r["basis_size"] - r["expected"]) + r["hermitian_defect"] + r["trace_defect"], 0.0,
                rank=r["rank"], expected=r["expected"])
        ch = case.chirality[side]
        idx = list(rep.chiral_indices(ch))
        worst = 0.0
        for _ in range(samples):
            phi = np.zeros(rep.rank, complex)
            phi[idx] = rng.standard_normal(len(idx)) + 1j * rng.standard_normal(len(idx))
            M = act(rep, q_of_phi(rep, case, phi, side))[np.ix_(idx, idx)]
            E = e_phi(phi[idx], len(idx))
            worst = max(worst, float(np.abs(M - E).max()))
        rec.add(f"q_inverse_{side}", "spinor.q_inverse", n, worst, 1e-10, degrees=list(iso_spec(n, side)[0]))
    if n == 8:
        a1, a2, spread = hs_constants(rep, rng)
        rec.add("trace_constant_a1", "spinor.hs_constants", n, abs(a1 - 8), 1e-10, value=a1, spread=spread)
        rec.add("trace_constant_a2", "spinor.hs_constants", n, abs(a2 - 16), 1e-10, value=a2, spread=spread)
    rec.records += _zeroth_order(n, rng, samples, timing)
    return rec.records


def _zeroth_order(n: int, rng, samples: int, timing: bool) -> list:
    from .weitzenboeck_lab import b_term, conj_sum, q_beta, q_beta_closed, total_beta

    rec = _Recorder(timing)
    rep = build_rep(n)
    case = build_case(n)
    skew = closed = 0.0
    for _ in range(samples):
        beta = {k: random_form(n, k, rng) for k in case.beta_degrees}
        tb = total_beta(n, beta)
        skew = max(skew, b_term(rep, tb).skew_defect())
        if n in (3, 5, 6, 8):
            Q = q_beta(rep, tb)
            C = q_beta_closed(n, beta)
            closed = max(closed, float(np.abs(Q - C).max() / max(1.0, np.abs(C).max())))
    rec.add("b_term_skew", "weitz.b_skew", n, skew, 1e-12)
    if n in (3, 5, 6, 8):
        rec.add("q_closed_form", "weitz.q_closed", n, closed, 1e-11)
    if n >= 3:
        # exact check on an integer 3-form
        coeffs = {J: int(c) for J, c in zip(subsets(n, 3), rng.integers(-3, 4, comb(n, 3)))}
        f = FormValue(n, {J: c for J, c in coeffs.items() if c})
        S = conj_sum(rep, f, 1, exact=True)
        C = act_exact(rep, f.coeffs)
        rec.add("conj_sum_exact", "weitz.conj_sum", n, 0.0 if (S - (n - 6) * C).expand().is_zero_matrix else 1.0,
                0.0)
        if n == 5:
            S2 = conj_sum(rep, f, 2, exact=True)
            norm2 = sum(c * c for c in coeffs.values())
            target = 3 * C * C - 8 * norm2 * sp.eye(rep.rank)
            rec.add("conj_sum_squared_exact", "weitz.conj_sum_squared", n,
                    0.0 if (S2 - target).expand().is_zero_matrix else 1.0, 0.0)
    return rec.records


def verify_weitzenboeck(n: int, seed: int = 0, samples: int = 1, modes: int = 1, timing: bool = False) -> list:
    """Both sides of the Weitzenboeck formula on random torus fields."""
    from .torus_calculus import Torus
    from .weitzenboeck_lab import (change_laplacian_defect, exterior_derivative_identity,
                                   principal_part_defect, weitz_defect)

    rec = _Recorder(timing)
    case = build_case(n)
    rng = np.random.default_rng(seed)
    rep = build_rep(n)
    for k in range(n + 1):
        grads = [random_form(n, k, rng) for _ in range(n)]
        dd, ds = exterior_derivative_identity(rep, grads, k)
        rec.add(f"exterior_derivative_k{k}", "weitz.exterior_derivative", n, max(dd, ds), 1e-12)
    pp = principal_part_defect(case, rng)
    for side, v in pp.items():
        rec.add(f"principal_part_{side}", "weitz.principal_part", n, v, 1e-12)
    torus = Torus(n, modes)
    amp = 1 / np.sqrt((2 * modes + 1) ** n)
    worst = {}
    for _ in range(samples):
        st = random_state(case, torus, rng, amplitude=amp)
        for side in case.sides:
            for key, fn in (("weitzenboeck", lambda: weitz_defect(case, st, side)),
                            ("weitzenboeck_engine", lambda: weitz_defect(case, st, side, engine=True)),
                            ("change_laplacian", lambda: change_laplacian_defect(case, st, side))):
                worst[(key, side)] = max(worst.get((key, side), 0.0), fn())
    anchors = {"weitzenboeck": "weitz.formula", "weitzenboeck_engine": "weitz.formula_engine",
               "change_laplacian": "weitz.change_laplacian"}
    for (key, side), v in worst.items():
        rec.add(f"{key}_{side}", anchors[key], n, v, 1e-8, samples=samples)
    return rec.records


def symbol_battery(n: int, samples: int = 1000, seed: int = 0, timing: bool = False) -> list:
    from .symbol_index import elliptic_check

    rec = _Recorder(timing)
    case = build_case(n)
    r = elliptic_check(case, samples=samples, seed=seed)
    smin = r["min_singular_value"]
    # defect 1/sigma_min against 1e6, i.e. sigma_min >= 1e-6
    rec.add("min_singular_value", "symbol.elliptic", n, 1 / smin if smin > 0 else np.inf, 1e6,
            min_singular_value=smin, samples=samples, square=r["square"])
    if case.family in ("odd", "four_m_minus_2"):
        rec.add("form_block_identity", "symbol.form_block", n, r["form_block_identity_defect"], 1e-9)
    return rec.records


def example5d_battery(timing: bool = False) -> list:
    from .example5d import run_all

    rec = _Recorder(timing)
    for r in run_all():
        extra = {k: v for k, v in r.items() if k not in ("check", "defect", "tolerance", "pass", "group")}
        rec.add(r["check"], f"example5d.{r['group']}", 5, r["defect"], r["tolerance"], **extra)
    return rec.records


def index_value(family: str, betti=None, bplus=None, twist="0", chi=None) -> int:
    from fractions import Fraction

    from .symbol_index import index_4m, index_4m2, index_odd

    if family == "odd":
        return index_odd()
    if family == "4m":
        if betti is None or bplus is None:
            raise ValueError("--betti and --bplus are required for the 4m family")
        return index_4m(betti, bplus, Fraction(twist))
    if family == "4m-2":
        if chi is None:
            raise ValueError("--chi is required for the 4m-2 family")
        return index_4m2(chi)
    raise ValueError(f"unknown family {family!r}")


# solver -------------------------------------------------------------------------------

def solve(config, out_dir: Path | None = None, timing: bool = False, progress=None) -> tuple:
    """Run the solver; returns ``(records, result)``.  Writes trace, snapshot and report to ``out_dir``."""
    from .energy_opt import final_report, gradient_check, minimize, perturbed_zero
    from .sw_system import save_snapshot

    rec = _Recorder(timing)
    result = minimize(config, callback=progress)
    fin = final_report(result)
    rec.add("final_energy", "solver.energy", 8, fin["energy"], config.tol,
            iterations=result.iterations, reason=result.reason, converged=result.converged)
    for k, v in sorted(fin["residual_norms"].items()):
        rec.add(f"residual_{k}", "solver.residual", 8, v, 1e-3)
    rec.add("beta_reconstruction", "solver.beta_reconstruction", 8, fin["beta_reconstruction_defect"], 1e-3)
    # at the converged state the gradient is O(|x|) while the third derivative is O(1), so
    # central differences are checked at the starting point instead
    gc = gradient_check(perturbed_zero(config), np.random.default_rng(config.seed), directions=10)
    rec.add("gradient_vs_fd", "energy.gradient", 8, gc["max_relative_error"], 1e-5, step=gc["step"],
            at="initial_state")
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_trace(result.trace, out_dir / "trace.csv")
        save_snapshot(result.state, out_dir / "state")
    return rec.records, result


def write_trace(trace: list, path: Path) -> None:
    cols = ["iteration", "energy", "dirac", "curvature_2", "curvature_4", "step"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in trace:
            w.writerow({k: repr(float(row[k])) if k != "iteration" else int(row[k]) for k in cols})


# reporting ------------------------------------------------------------------------------

def report_json(records: list, command: str, args: dict) -> str:
    doc = {"command": command, "arguments": args, "records": [r.to_dict() for r in records],
           "pass": all(r.pass_ for r in records)}
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _emit(records, command, args, out: Path | None, stream=None):
    stream = stream or sys.stdout
    text = report_json(records, command, args)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{command}.json").write_text(text)
    for r in records:
        stream.write(f"{'PASS' if r.pass_ else 'FAIL'}  n={r.n:<2d} {r.check_id:<28s} "
                     f"defect={r.defect:.3e} tol={r.tolerance:.1e}\n")
    return EXIT_OK if all(r.pass_ for r in records) else EXIT_FAIL


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="swdim", description="Verification batteries and the 8D energy solver.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, dim=True):
        if dim:
            sp.add_argument("--dim", type=int, default=8)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", type=Path, default=None)
        sp.add_argument("--timing", action="store_true", help="record wall-clock time per check")

    sp = sub.add_parser("verify-algebra", help="Clifford, q-map and zeroth-order identities")
    common(sp)
    sp.add_argument("--samples", type=int, default=3)
    sp = sub.add_parser("verify-weitzenboeck", help="Weitzenboeck identities on random torus fields")
    common(sp)
    sp.add_argument("--samples", type=int, default=1)
    sp.add_argument("--modes", type=int, default=1)
    sp = sub.add_parser("symbol", help="ellipticity by sampling the principal symbol")
    common(sp)
    sp.add_argument("--samples", type=int, default=1000)
    sp = sub.add_parser("index", help="index formula arithmetic")
    sp.add_argument("--family", choices=["odd", "4m", "4m-2"], required=True)
    sp.add_argument("--betti", type=int, nargs="+", default=None, help="b_1 .. b_{2m-1}")
    sp.add_argument("--bplus", type=int, default=None)
    sp.add_argument("--twist", type=str, default="0", help="rational twist term, e.g. 1/2")
    sp.add_argument("--chi", type=int, default=None)
    sp = sub.add_parser("example5d", help="pointwise checks of the 5D circle-bundle example")
    common(sp, dim=False)
    sp = sub.add_parser("solve", help="minimise the 8D energy from a perturbed zero state")
    common(sp)
    sp.add_argument("--config", type=Path, default=None, help="JSON solver settings")
    sp.add_argument("--modes", type=int, default=None)
    sp.add_argument("--quiet", action="store_true")
    return p


def _check_positive(parser, **vals):
    for k, v in vals.items():
        if v is not None and v < 1:
            parser.error(f"--{k} must be positive")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cmd = args.command
    try:
        if cmd == "index":
            val = index_value(args.family, args.betti, args.bplus, args.twist, args.chi)
            print(val)
            return EXIT_OK
        if cmd in ("verify-algebra", "verify-weitzenboeck", "symbol"):
            _check_positive(parser, samples=args.samples, dim=args.dim)
        if cmd == "verify-algebra":
            recs = verify_algebra(args.dim, args.seed, args.samples, args.timing)
            opts = {"dim": args.dim, "seed": args.seed, "samples": args.samples}
        elif cmd == "verify-weitzenboeck":
            _check_positive(parser, modes=args.modes)
            if args.dim < 3:
                parser.error("--dim must be at least 3")
            recs = verify_weitzenboeck(args.dim, args.seed, args.samples, args.modes, args.timing)
            opts = {"dim": args.dim, "seed": args.seed, "samples": args.samples, "modes": args.modes}
        elif cmd == "symbol":
            if args.dim < 3:
                parser.error("--dim must be at least 3")
            recs = symbol_battery(args.dim, args.samples, args.seed, args.timing)
            opts = {"dim": args.dim, "seed": args.seed, "samples": args.samples}
        elif cmd == "example5d":
            recs = example5d_battery(args.timing)
            opts = {}
        else:
            return _run_solve(parser, args)
    except ValueError as exc:
        parser.error(str(exc))
    return _emit(recs, cmd, opts, args.out)


def _run_solve(parser, args) -> int:
    from .energy_opt import SolveConfig, SolverDivergence

    try:
        settings = json.loads(args.config.read_text()) if args.config else {}
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config: {exc}")
    if not isinstance(settings, dict):
        parser.error("config must be a JSON object")
    settings.setdefault("seed", args.seed)
    settings.setdefault("n", args.dim)
    if args.modes is not None:
        settings["modes"] = args.modes
    try:
        config = SolveConfig.from_dict(settings)
    except (TypeError, ValueError) as exc:
        parser.error(str(exc))

    def progress(it, E):
        if not args.quiet and it % 25 == 0:
            sys.stderr.write(f"iteration {it:5d}  energy {E:.6e}\n")

    try:
        recs, result = solve(config, args.out, args.timing, progress)
    except SolverDivergence as exc:
        sys.stderr.write(f"solver diverged: {exc}\n")
        return EXIT_DIVERGED
    opts = {k: getattr(config, k) for k in config.__dataclass_fields__}
    return _emit(recs, "solve", opts, args.out)


if __name__ == "__main__":
    sys.exit(main())
