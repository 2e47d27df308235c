"""Batch driver: exact identity suites, quantization dumps, rate verification, reports.

Subcommands
-----------
identities   exact operator-identity checks on seeded random matrices
brackets     classical bracket identity checks on seeded random symbols
quantize     dump one Berezin-Toeplitz matrix (binary and/or CSV)
verify       residual k-sweeps with CSV + SVG reports and slope gating
report       regenerate plots and a summary table from an existing CSV
all          identities + brackets + verify on both geometries

Exit codes: 0 all thresholds met, 1 threshold violation, 2 usage or config
error, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import operators as ops
from . import reporting
from .experiments import THEOREMS, default_ks_for, run_sweep
from .hilbert import build_theta_basis, get_geometry, toeplitz_matrix
from .symbols import (
    FourierSymbol,
    bracket4_r,
    hyperkahler_forms,
    hyperkahler_volume_density,
    nambu_bracket_det,
    nambu_bracket_pairwise,
    poisson_bracket,
    random_symbol,
    standard_t2_form,
    sym_mul,
    symbol_preset,
)

log = logging.getLogger("nambulab")

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_USAGE = 2
EXIT_NOCONV = 3

IDENTITY_TOL = 1e-10
BRACKET_TOL = 1e-9


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Single structured config for verify runs; CLI flags override fields."""

    geometry: str = "t2"
    theorems: list = field(default_factory=list)  # empty = all applicable
    ks: list = field(default_factory=list)  # empty = per-theorem defaults
    seeds: list = field(default_factory=lambda: [1, 2, 3])
    symbols: dict | None = None  # None = built-in experiment tuples
    grid_n: int | None = None
    norm_tol: float = 1e-6
    outdir: str = "out"
    workers: int = 1

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.from_json(fh.read())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc

    def validate(self):
        get_geometry(self.geometry)
        for tid in self.theorems:
            if tid not in THEOREMS:
                raise UsageError(f"unknown theorem id {tid!r}")
        if self.ks and any(k < 1 for k in self.ks):
            raise UsageError("levels must be positive")
        if not self.seeds:
            raise UsageError("need at least one seed")
        if self.norm_tol <= 0:
            raise UsageError("norm tolerance must be positive")
        if self.workers < 1:
            raise UsageError("workers must be >= 1")
        return self


def parse_k_range(text):
    """'8:32:4' (inclusive stop) or comma list '8,12,16'."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise UsageError(f"bad k range {text!r}; use start:stop[:step]")
        try:
            start, stop = int(parts[0]), int(parts[1])
            step = int(parts[2]) if len(parts) == 3 else 1
        except ValueError as exc:
            raise UsageError(f"bad k range {text!r}") from exc
        if step < 1 or stop < start:
            raise UsageError(f"bad k range {text!r}")
        return list(range(start, stop + 1, step))
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad k list {text!r}") from exc


def parse_symbol_spec(spec, dim):
    """Named preset, 'random:SEED[:MAXFREQ]', inline JSON records, or @file.json."""
    s = spec.strip()
    if s.startswith("@"):
        try:
            with open(s[1:]) as fh:
                records = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read symbol file {s[1:]}: {exc}") from exc
        return FourierSymbol.from_records(dim, records)
    if s.startswith("["):
        try:
            records = json.loads(s)
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad symbol JSON: {exc}") from exc
        return FourierSymbol.from_records(dim, records)
    if s.startswith("random:"):
        parts = s.split(":")[1:]
        try:
            seed = int(parts[0])
            mf = int(parts[1]) if len(parts) > 1 else 2
        except (IndexError, ValueError) as exc:
            raise UsageError(f"bad random symbol spec {spec!r}") from exc
        return random_symbol(seed, dim, mf)
    try:
        return symbol_preset(s, dim)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# identity suite (exact operator identities on random matrices)
# ---------------------------------------------------------------------------


def identity_checks(seed, trials):
    """Relative errors of the exact operator identities on seeded random tuples.

    Yields (name, relative_error); everything should sit at round-off.
    """
    rng = np.random.default_rng(seed)
    out = []

    def rmat(n):
        return rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))

    def rel(delta, scale):
        return float(delta / max(scale, 1e-300))

    for trial in range(trials):
        n = 2 + (trial % 5)
        arity = (2, 4, 6)[trial % 3]
        mats = [rmat(n) for _ in range(arity)]
        scale = float(np.prod([np.linalg.norm(m, 2) for m in mats]))
        direct = ops.gen_commutator(mats, "direct")
        restricted = ops.gen_commutator(mats, "restricted")
        halved = ops.gen_commutator(mats, "halved")
        out.append((f"gen_comm_restricted[{trial}]",
                    rel(np.linalg.norm(direct - restricted, 2), scale)))
        out.append((f"gen_comm_halved[{trial}]",
                    rel(np.linalg.norm(direct - halved, 2), scale)))
        if arity == 4:
            expand = ops.comm4_expand(*mats)
            out.append((f"comm4_expand[{trial}]",
                        rel(np.linalg.norm(direct - expand, 2), scale)))

        m = 2 + (trial % 2)
        x = ops.kron3(rmat(m), rmat(m), rmat(m))
        y = ops.kron3(rmat(m), rmat(m), rmat(m))
        xd, yd = x.to_dense(), y.to_dense()
        kscale = float(np.linalg.norm(xd, 2) * np.linalg.norm(yd, 2))
        kc = ops.kron_commutator(x, y)
        out.append((f"kron_commutator[{trial}]",
                    rel(np.linalg.norm(kc.to_dense() - (xd @ yd - yd @ xd), 2), kscale)))
        kp = ops.kron_product(kc, kc)
        pscale = float(np.linalg.norm(kc.to_dense(), 2) ** 2)
        out.append((f"kron_product[{trial}]",
                    rel(np.linalg.norm(kp.to_dense() - kc.to_dense() @ kc.to_dense(), 2),
                        pscale)))

        blocks = [rmat(2 + j) for j in range(3)]
        ds = ops.DirectSum(blocks)
        out.append((f"directsum_norm[{trial}]",
                    rel(abs(ops.op_norm(ds).value
                            - max(np.linalg.norm(b, 2) for b in blocks)), 1.0)))
        out.append((f"kron_norm[{trial}]",
                    rel(abs(ops.op_norm(x).value - np.linalg.norm(xd, 2)),
                        max(np.linalg.norm(xd, 2), 1.0))))
    return out


# ---------------------------------------------------------------------------
# bracket suite (classical identities on random symbols)
# ---------------------------------------------------------------------------


def bracket_checks(seed, trials):
    """Scale-relative errors of the classical bracket identities."""
    out = []
    t2form = standard_t2_form()
    dens = hyperkahler_volume_density()
    form1 = hyperkahler_forms()[0]

    def rel(diff_sym_scale):
        diff, scale = diff_sym_scale
        return float(diff / max(scale, 1.0))

    for trial in range(trials):
        base = seed + 1009 * trial
        fs = [random_symbol(base + j, 4, 2) for j in range(4)]
        det = nambu_bracket_det(fs, dens)
        brs = [bracket4_r(*fs, r) for r in (1, 2, 3)]
        hyp = brs[0] + brs[1] + brs[2]
        scale = max(b.coeff_scale() for b in brs)

        i, j = (trial % 3, 3) if trial % 2 else (0, 1 + trial % 3)
        swapped = list(fs)
        swapped[i], swapped[j] = swapped[j], swapped[i]
        if trial % 2 == 0:
            anti = bracket4_r(*swapped, 1) + brs[0]
            anti_scale = scale
        else:
            anti = nambu_bracket_det(swapped, dens) + det
            anti_scale = max(det.coeff_scale(), 1.0)
        out.append((f"antisymmetry[{trial}]", rel((anti.coeff_scale(), anti_scale))))

        pw = nambu_bracket_pairwise(fs, form1)
        det1 = nambu_bracket_det(fs, form1.pfaffian_top())
        out.append((f"det_vs_pairwise[{trial}]", rel((pw.max_coeff_diff(det1), scale))))
        for r in (1, 2, 3):
            out.append((f"scaling_r{r}[{trial}]",
                        rel((brs[r - 1].max_coeff_diff(6.0 * det), scale))))
        out.append((f"scaling_hyp[{trial}]",
                    rel((hyp.max_coeff_diff(18.0 * det), scale))))

        if trial % 4 == 0:
            s = random_symbol(base + 11, 4, 1)
            lhs = bracket4_r(fs[0], fs[1], fs[2], sym_mul(fs[3], s), 1)
            rhs = sym_mul(fs[3], bracket4_r(fs[0], fs[1], fs[2], s, 1)) + sym_mul(
                brs[0], s)
            out.append((f"leibniz[{trial}]",
                        rel((lhs.max_coeff_diff(rhs), max(lhs.coeff_scale(), scale)))))

        a, b, c = (random_symbol(base + 21 + j, 2, 2) for j in range(3))
        jac = (
            poisson_bracket(a, poisson_bracket(b, c, t2form), t2form)
            + poisson_bracket(b, poisson_bracket(c, a, t2form), t2form)
            + poisson_bracket(c, poisson_bracket(a, b, t2form), t2form)
        )
        jscale = poisson_bracket(a, poisson_bracket(b, c, t2form), t2form).coeff_scale()
        out.append((f"jacobi[{trial}]", rel((jac.coeff_scale(), jscale))))

        if trial % 5 == 0:
            gs = [random_symbol(base + 31 + j, 4, 1) for j in range(3)]
            hs = [random_symbol(base + 41 + j, 4, 1) for j in range(4)]
            inner = nambu_bracket_det(hs, dens)
            lhs = nambu_bracket_det(gs + [inner], dens)
            rhs = FourierSymbol.zero(4)
            for slot in range(4):
                args = list(hs)
                args[slot] = nambu_bracket_det(gs + [hs[slot]], dens)
                rhs = rhs + nambu_bracket_det(args, dens)
            fscale = max(lhs.coeff_scale(), rhs.coeff_scale(), 1.0)
            out.append((f"fundamental_identity[{trial}]",
                        rel((lhs.max_coeff_diff(rhs), fscale))))
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_identities(args):
    if args.trials < 1:
        raise UsageError("trials must be >= 1")
    checks = identity_checks(args.seed, args.trials)
    worst = max(checks, key=lambda kv: kv[1])
    violations = [(name, err) for name, err in checks if err > IDENTITY_TOL]
    print(f"identities: {len(checks)} checks, worst {worst[0]} = {worst[1]:.3e} "
          f"(tolerance {IDENTITY_TOL:g})")
    for name, err in violations:
        print(f"  VIOLATION {name}: {err:.3e}")
    return EXIT_THRESHOLD if violations else EXIT_OK


def cmd_brackets(args):
    if args.trials < 1:
        raise UsageError("trials must be >= 1")
    checks = bracket_checks(args.seed, args.trials)
    worst = max(checks, key=lambda kv: kv[1])
    violations = [(name, err) for name, err in checks if err > BRACKET_TOL]
    print(f"brackets: {len(checks)} checks, worst {worst[0]} = {worst[1]:.3e} "
          f"(tolerance {BRACKET_TOL:g})")
    for name, err in violations:
        print(f"  VIOLATION {name}: {err:.3e}")
    return EXIT_THRESHOLD if violations else EXIT_OK


def cmd_quantize(args):
    geometry, r = get_geometry(args.geometry)
    if args.r is not None:
        r = args.r
    if args.k < 1:
        raise UsageError("level k must be >= 1")
    f = parse_symbol_spec(args.symbol, geometry.dim)
    basis = build_theta_basis(geometry, r, args.k)
    matrix = toeplitz_matrix(f, basis, grid=args.grid)
    base = args.out or f"toeplitz_{geometry.name}_r{r}_k{args.k}"
    written = []
    if args.format in ("bin", "both"):
        path = base + ".bin"
        ops.save_matrix_bin(path, matrix)
        written.append(path)
    if args.format in ("csv", "both"):
        path = base + ".csv"
        ops.save_matrix_csv(path, matrix)
        written.append(path)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _resolve_theorems(config):
    geometry, _ = get_geometry(config.geometry)
    if config.theorems:
        chosen = list(config.theorems)
        for tid in chosen:
            if geometry.name not in THEOREMS[tid].geometries:
                raise UsageError(
                    f"theorem {tid!r} does not apply to geometry {config.geometry!r}"
                )
        return chosen
    return [tid for tid, spec in THEOREMS.items() if geometry.name in spec.geometries]


def _symbols_factory(config):
    spec = config.symbols
    if not spec:
        return None
    mode = spec.get("mode")
    if mode == "random":
        mf = int(spec.get("max_freq", 2))

        def factory(seed, dim, arity):
            return [random_symbol(seed * 11 + j, dim, mf) for j in range(arity)]

        return factory
    if mode == "preset":
        names = spec.get("names", [])

        def factory(seed, dim, arity):
            if len(names) != arity:
                raise UsageError(
                    f"symbol preset list has {len(names)} entries, need {arity}")
            return [symbol_preset(n, dim) for n in names]

        return factory
    if mode == "explicit":
        records = spec.get("records", [])

        def factory(seed, dim, arity):
            if len(records) != arity:
                raise UsageError(
                    f"explicit symbol list has {len(records)} entries, need {arity}")
            return [FourierSymbol.from_records(dim, rec) for rec in records]

        return factory
    raise UsageError(f"unknown symbols mode {mode!r}")


def cmd_verify(args):
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if args.geometry:
        config.geometry = args.geometry
    if args.theorem:
        config.theorems = [t.strip() for t in args.theorem.split(",") if t.strip()]
    if args.k:
        config.ks = parse_k_range(args.k)
    if args.seeds:
        config.seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if args.outdir:
        config.outdir = args.outdir
    if args.norm_tol is not None:
        config.norm_tol = args.norm_tol
    if args.workers is not None:
        config.workers = args.workers
    config.validate()

    theorems = _resolve_theorems(config)
    plan = []
    for tid in theorems:
        ks = config.ks or list(default_ks_for(tid, get_geometry(config.geometry)[0].name))
        plan.append((tid, ks, list(config.seeds)))

    if args.dry_run:
        print(f"geometry: {config.geometry}")
        for tid, ks, seeds in plan:
            print(f"  {tid}: k = {ks}, seeds = {seeds}")
        return EXIT_OK

    factory = _symbols_factory(config)
    jobs = [(tid, ks, seed) for tid, ks, seeds in plan for seed in seeds]

    def run_job(job):
        tid, ks, seed = job
        return run_sweep(tid, config.geometry, seeds=(seed,), ks=ks,
                         norm_tol=config.norm_tol, symbols_factory=factory)

    series = []
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            for chunk in pool.map(run_job, jobs):
                series.extend(chunk)
    else:
        for job in jobs:
            series.extend(run_job(job))
    series.sort(key=lambda s: (s.theorem_id, s.geometry, s.r, s.seed))

    os.makedirs(config.outdir, exist_ok=True)
    csv_path = os.path.join(config.outdir, f"residuals_{config.geometry}.csv")
    reporting.write_csv(csv_path, series)
    svg_paths = reporting.plot_series(series, config.outdir)
    signs = sorted({s.extra.get("sign", 1) for s in series})
    print(f"ik sign convention (auto-detected at the smallest level): "
          f"{', '.join(f'{v:+d}' for v in signs)}")
    for line in reporting.summary_lines(series):
        print(line)
    print(f"wrote {csv_path}")
    for path in svg_paths:
        print(f"wrote {path}")

    if any(not s.converged for s in series):
        return EXIT_NOCONV
    if any(not s.passed for s in series):
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_report(args):
    if not os.path.exists(args.csv):
        raise UsageError(f"no such CSV: {args.csv}")
    rows = reporting.read_csv(args.csv)
    if not rows:
        raise UsageError(f"empty CSV: {args.csv}")
    paths = reporting.plot_rows(rows, args.outdir)
    seen = {}
    for row in rows:
        key = (row["theorem_id"], row["geometry"], row["r"], row["seed"])
        seen[key] = (float(row["slope"]), float(row["r2"]), row["converged"])
    for (tid, geo, r, seed), (slope, r2, conv) in sorted(seen.items()):
        print(f"{tid:20s} {geo:5s} r={r} seed={seed}: slope={slope:+.3f} "
              f"R2={r2:.3f} converged={conv}")
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_all(args):
    ns = argparse.Namespace(seed=args.seed, trials=args.trials)
    code = cmd_identities(ns)
    code = max(code, cmd_brackets(argparse.Namespace(seed=args.seed, trials=max(args.trials // 5, 4))))
    seeds = "1" if args.quick else "1,2,3"
    for geometry in ("t2", "t4"):
        vns = argparse.Namespace(
            config=None, geometry=geometry, theorem=None, k=None, seeds=seeds,
            outdir=args.outdir, norm_tol=None, workers=args.workers, dry_run=False,
        )
        code = max(code, cmd_verify(vns))
    return code


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nambulab",
        description="Berezin-Toeplitz quantization lab on flat tori: bracket-commutator "
                    "correspondences, structured operators, semiclassical rate checks.",
    )
    parser.add_argument("--verbose", action="store_true", help="enable info logging")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("identities", help="exact operator identity suite")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--trials", type=int, default=100)

    p = sub.add_parser("brackets", help="classical bracket identity suite")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--trials", type=int, default=20)

    p = sub.add_parser("quantize", help="dump one Toeplitz matrix")
    p.add_argument("--symbol", required=True,
                   help="preset name, random:SEED[:MAXFREQ], JSON records, or @file.json")
    p.add_argument("--geometry", default="t2")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("bin", "csv", "both"), default="both")

    p = sub.add_parser("verify", help="residual k-sweeps with CSV and SVG reports")
    p.add_argument("--config", default=None)
    p.add_argument("--geometry", default=None)
    p.add_argument("--theorem", default=None, help="comma-separated theorem ids")
    p.add_argument("--k", default=None, help="start:stop[:step] (inclusive) or comma list")
    p.add_argument("--seeds", default=None, help="comma-separated tuple seeds")
    p.add_argument("--outdir", default=None)
    p.add_argument("--norm-tol", type=float, default=None, dest="norm_tol")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("report", help="regenerate plots/summary from a residual CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--outdir", default="out")

    p = sub.add_parser("all", help="identities + brackets + verify on both geometries")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--outdir", default="out")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--quick", action="store_true")

    return parser


_COMMANDS = {
    "identities": cmd_identities,
    "brackets": cmd_brackets,
    "quantize": cmd_quantize,
    "verify": cmd_verify,
    "report": cmd_report,
    "all": cmd_all,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if not args.command:
        parser.print_help()
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
