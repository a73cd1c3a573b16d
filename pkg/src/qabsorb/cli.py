"""Command-line front end: file parsing, dispatch and JSON/CSV reports.

Exit codes: 0 on success, 1 when an input violates a precondition (not a
channel, not an enclosure, not closed, ...), 2 when an input cannot be
parsed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from qabsorb import absorption as ab
from qabsorb import dihedral as dh
from qabsorb import structure as st
from qabsorb.channel import QuantumChannel, validate_channel
from qabsorb.errors import ChannelError, PreconditionError
from qabsorb.numerics import DEFAULT_TOL, Subspace, ToleranceContext

EXIT_OK, EXIT_PRECONDITION, EXIT_PARSE = 0, 1, 2

EPILOG = """\
CSV output (dihedral):
  --series       columns n,S_n,leak: partial sums of the potential of the
                 projection onto the identity element started at the
                 identity, and the cumulative trace lost at the boundary.
                 A final comment line gives S_{4m}/S_{2m} and the fitted c
                 in S_n ~ c sqrt(n).
  --partition L  columns copy,level,j,rank: rank of the dyadic spectral
                 projection j at each level 0..L for each orbit copy.
"""


class SpecParseError(ValueError):
    """Input file is malformed."""


# --------------------------------------------------------------------------
# parsing

def _complex_entry(entry, where: str) -> complex:
    if isinstance(entry, (int, float)):
        return complex(entry)
    if not (isinstance(entry, list) and len(entry) == 2
            and all(isinstance(t, (int, float)) for t in entry)):
        raise SpecParseError(f"{where}: expected a [re, im] pair, found {entry!r}")
    return complex(entry[0], entry[1])


def _complex_matrix(rows, n_rows: int, n_cols: int, where: str) -> np.ndarray:
    if not isinstance(rows, list):
        raise SpecParseError(f"{where}: expected a list of rows")
    if len(rows) != n_rows:
        raise SpecParseError(f"{where}: expected {n_rows} rows, found {len(rows)}")
    out = np.zeros((n_rows, n_cols), dtype=complex)
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n_cols:
            found = len(row) if isinstance(row, list) else type(row).__name__
            raise SpecParseError(f"{where}[{i}]: expected {n_cols} entries, found {found}")
        for j, e in enumerate(row):
            out[i, j] = _complex_entry(e, f"{where}[{i}][{j}]")
    return out


def _load_json(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecParseError(f"{source}: line {exc.lineno}: {exc.msg}") from None


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise SpecParseError(f"{path}: {exc.strerror}") from None


def parse_tolerances(doc: dict) -> ToleranceContext:
    tol = doc.get("tolerances", {})
    if not isinstance(tol, dict):
        raise SpecParseError("tolerances: expected an object")
    unknown = set(tol) - {"rank_cut", "eq_tol"}
    if unknown:
        raise SpecParseError(f"tolerances: unknown field {sorted(unknown)[0]!r}")
    try:
        return ToleranceContext(rank_cut=float(tol.get("rank_cut", DEFAULT_TOL.rank_cut)),
                                eq_tol=float(tol.get("eq_tol", DEFAULT_TOL.eq_tol)))
    except (TypeError, ValueError) as exc:
        raise SpecParseError(f"tolerances: {exc}") from None


def parse_channel_spec(source: str, is_text: bool = False) -> QuantumChannel:
    """Parse a JSON channel spec (``dim``, ``kraus``, optional ``tolerances``, ``label``).

    Raises
    ------
    SpecParseError
        Malformed document or a Kraus matrix of the wrong shape.
    ChannelError
        The Kraus family is not trace preserving.
    """
    text = source if is_text else _read(source)
    doc = _load_json(text, "<text>" if is_text else str(source))
    if not isinstance(doc, dict):
        raise SpecParseError("document: expected an object")
    dim = doc.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise SpecParseError(f"dim: expected a positive integer, found {dim!r}")
    kraus = doc.get("kraus")
    if not isinstance(kraus, list) or not kraus:
        raise SpecParseError("kraus: expected a non-empty list of matrices")
    mats = [_complex_matrix(k, dim, dim, f"kraus[{i}]") for i, k in enumerate(kraus)]
    label = doc.get("label", "")
    if not isinstance(label, str):
        raise SpecParseError("label: expected a string")
    return validate_channel(mats, dim, parse_tolerances(doc), label=label)


def channel_spec_document(kraus, label: str = "", tol: ToleranceContext | None = None) -> dict:
    kraus = [np.asarray(b, dtype=complex) for b in kraus]
    doc = {
        "dim": int(kraus[0].shape[0]),
        "label": label,
        "kraus": [[[[_num(z.real), _num(z.imag)] for z in row] for row in b] for b in kraus],
    }
    if tol is not None:
        doc["tolerances"] = {"rank_cut": tol.rank_cut, "eq_tol": tol.eq_tol}
    return doc


def parse_chain(source: str, is_text: bool = False) -> ab.ClassicalChain:
    """First line ``n``, then ``n`` rows of ``n`` whitespace-separated probabilities."""
    text = source if is_text else _read(source)
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise SpecParseError("chain: empty file")
    try:
        n = int(lines[0])
    except ValueError:
        raise SpecParseError(f"line 1: expected the number of states, found {lines[0]!r}") from None
    if len(lines) - 1 != n:
        raise SpecParseError(f"chain: expected {n} rows, found {len(lines) - 1}")
    rows = []
    for i, ln in enumerate(lines[1:]):
        parts = ln.split()
        if len(parts) != n:
            raise SpecParseError(f"row {i}: expected {n} entries, found {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise SpecParseError(f"row {i}: {exc}") from None
    return ab.ClassicalChain(np.array(rows))


def parse_frame(source: str, dim: int, is_text: bool = False) -> Subspace:
    """JSON ``{"vectors": [[[re, im], ...], ...]}``; the span is orthonormalized."""
    text = source if is_text else _read(source)
    doc = _load_json(text, "<text>" if is_text else str(source))
    vecs = doc.get("vectors") if isinstance(doc, dict) else None
    if not isinstance(vecs, list):
        raise SpecParseError("vectors: expected a list of vectors")
    cols = []
    for i, v in enumerate(vecs):
        if not isinstance(v, list) or len(v) != dim:
            found = len(v) if isinstance(v, list) else type(v).__name__
            raise SpecParseError(f"vectors[{i}]: expected {dim} entries, found {found}")
        cols.append([_complex_entry(e, f"vectors[{i}][{j}]") for j, e in enumerate(v)])
    if not cols:
        return Subspace.zero(dim)
    return Subspace.span(np.array(cols).T)


def parse_states(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise SpecParseError(f"--closed: expected state indices, found {text!r}") from None


# --------------------------------------------------------------------------
# serialization

def _num(x: float) -> float:
    # 17 significant digits round-trip any double
    return float(f"{x:.17g}")


def _matrix(a) -> list:
    a = np.asarray(a)
    if np.iscomplexobj(a) and np.abs(a.imag).max(initial=0.0) > 0.0:
        return [[[_num(z.real), _num(z.imag)] for z in row] for row in a]
    return [[_num(z) for z in row] for row in np.real(a)]


def _frame(s: Subspace) -> dict:
    # fix the phase of each column so frames are reproducible
    f = np.array(s.frame, dtype=complex)
    for k in range(f.shape[1]):
        i = int(np.argmax(np.abs(f[:, k]) > 1e-12 * np.abs(f[:, k]).max()))
        f[:, k] *= np.abs(f[i, k]) / f[i, k]
    return {"dim": s.dim, "frame": [[[_num(z.real), _num(z.imag)] for z in col] for col in f.T]}


def _absorption_dict(a: ab.AbsorptionOperator) -> dict:
    return {
        "method": a.method,
        "matrix": _matrix(a.matrix),
        "residuals": {k: _num(v) for k, v in sorted(a.residuals.items())},
        "converged": a.converged,
        "steps": a.steps,
    }


def _tol_dict(tol: ToleranceContext) -> dict:
    return {"rank_cut": tol.rank_cut, "eq_tol": tol.eq_tol}


# --------------------------------------------------------------------------
# commands

def cmd_analyze(ch: QuantumChannel, seed: int) -> dict:
    dec = st.recurrence_decomposition(ch)
    fps = st.fixed_point_space(ch)
    dome = st.minimal_enclosures(ch, seed, decomposition=dec)
    report = {
        "channel": {"label": ch.label, "dim": ch.dim, "fingerprint": ch.fingerprint()},
        "seed": seed,
        "tolerances": _tol_dict(ch.tol),
        "decomposition": {"R_plus": _frame(dec.R_plus), "R_zero": _frame(dec.R_zero),
                          "T": _frame(dec.T)},
        "fixed_points": {"dim": fps.dim, "basis": [_matrix(b) for b in fps.basis]},
        "dome": [{"part": _frame(p), "slack": _num(s)} for p, s in zip(dome.parts, dome.slacks)],
    }
    absorbing, dev = ab.is_absorbing_recurrent(ch, dec)
    report["recurrent_absorbing"] = {"value": absorbing, "deviation": _num(dev)}
    ops = []
    for p in dome.parts:
        it = ab.absorption_iterative(ch, p, decomposition=dec)
        entry = {"enclosure": _frame(p), "iterative": _absorption_dict(it)}
        if dec.T.dim and absorbing:
            lin = ab.absorption_linear(ch, p, decomposition=dec)
            entry["linear_system"] = _absorption_dict(lin)
            entry["agreement"] = _num(float(np.abs(lin.matrix - it.matrix).max()))
        ops.append(entry)
    report["absorption"] = ops
    if absorbing:
        crit = ab.algebra_criterion(ch, seed, decomposition=dec)
        span = ab.fixed_points_via_absorption(ch, seed, decomposition=dec)
        report["algebra"] = {
            "is_algebra": crit.is_algebra,
            "worst_norm": _num(crit.worst_norm),
            "worst_pair": [_frame(s) for s in crit.worst_pair] if crit.worst_pair else None,
            "pairs_checked": crit.pairs_checked,
        }
        report["absorption_span"] = {"dim": span.space.dim, "matches_fixed_points": span.matches}
    else:
        report["algebra"] = None
    report["algebra_closure"] = st.algebra_closure_check(fps, ch.tol).is_algebra
    return report


def cmd_absorption(ch: QuantumChannel, v: Subspace, method: str) -> dict:
    dec = st.recurrence_decomposition(ch)
    report = {"channel": {"label": ch.label, "dim": ch.dim, "fingerprint": ch.fingerprint()},
              "tolerances": _tol_dict(ch.tol), "enclosure": _frame(v)}
    mats = {}
    if method in ("iter", "both"):
        it = ab.absorption_iterative(ch, v, decomposition=dec)
        report["iterative"] = _absorption_dict(it)
        mats["iter"] = it.matrix
    if method in ("linear", "both"):
        lin = ab.absorption_linear(ch, v, decomposition=dec)
        report["linear_system"] = _absorption_dict(lin)
        mats["linear"] = lin.matrix
    if len(mats) == 2:
        report["agreement"] = _num(float(np.abs(mats["iter"] - mats["linear"]).max()))
    return report


def cmd_fixed_points(ch: QuantumChannel) -> dict:
    fps = st.fixed_point_space(ch)
    return {"channel": {"label": ch.label, "dim": ch.dim, "fingerprint": ch.fingerprint()},
            "tolerances": _tol_dict(ch.tol), "dim": fps.dim,
            "basis": [_matrix(b) for b in fps.basis],
            "is_algebra": st.algebra_closure_check(fps, ch.tol).is_algebra}


def cmd_dihedral(args) -> str:
    n = args.N
    if args.shift_check:
        chk = dh.shift_equivalence_check(n)
        return json.dumps({"N": n, "copy_sizes": list(chk.copy_sizes),
                           "residual": chk.residual,
                           "interior_residual": chk.interior_residual}, indent=2) + "\n"
    if args.partition is not None:
        pp = dh.partition_projections(n, args.partition)
        out = dh.partition_csv(pp)
        ratios = pp.rank_ratios()
        checks = pp.verify()
        out += "# " + " ".join(f"ratio_{k}={v:.6f}" for k, v in ratios.items())
        out += " " + " ".join(f"{k}={v}" for k, v in checks.items()) + "\n"
        return out
    n_max = args.n_max if args.n_max is not None else n - 1
    m = dh.walk_operators(n)
    x = np.zeros(m.basis.size)
    x[m.basis.index(0)] = 1.0
    series = dh.potential_series(n, x, x, n_max, m)
    out = dh.series_csv(series)
    mm = n_max // 4
    extra = f"ratio_4m_2m={series.growth_ratio(mm):.6f} m={mm} " if mm >= 1 else ""
    out += f"# {extra}sqrt_fit_c={series.sqrt_fit():.6f}\n"
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qabsorb",
        description="Recurrence, enclosures, fixed points and absorption operators "
                    "of finite-dimensional quantum channels.",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-o", "--output", help="write the report here instead of stdout")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="full pipeline on a channel spec")
    a.add_argument("spec")
    a.add_argument("--seed", type=int, default=0)

    a = sub.add_parser("absorption", help="absorption operator of one enclosure")
    a.add_argument("spec")
    a.add_argument("--enclosure", required=True, help="JSON frame file")
    a.add_argument("--method", choices=("iter", "linear", "both"), default="both")

    a = sub.add_parser("classical", help="absorption probabilities of a Markov chain")
    a.add_argument("chain")
    a.add_argument("--closed", required=True, help="closed set, e.g. '4' or '0,4'")

    a = sub.add_parser("embed", help="write the diagonal quantum embedding of a chain")
    a.add_argument("chain")

    a = sub.add_parser("fixed-points", help="fixed-point space of a channel")
    a.add_argument("spec")

    a = sub.add_parser("dihedral", help="truncated walk on the infinite dihedral group",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    a.add_argument("--N", type=int, required=True, help="truncation radius")
    g = a.add_mutually_exclusive_group()
    g.add_argument("--series", action="store_true", help="potential partial sums (default)")
    g.add_argument("--partition", type=int, metavar="LEVEL", help="dyadic spectral ranks")
    g.add_argument("--shift-check", action="store_true", help="orbit/shift equivalence")
    a.add_argument("--n-max", type=int, help="number of partial sums (default N - 1)")
    return p


def run_command(args) -> str:
    """Execute a parsed command and return the report text."""
    if args.command == "analyze":
        return _dump(cmd_analyze(parse_channel_spec(args.spec), args.seed))
    if args.command == "absorption":
        ch = parse_channel_spec(args.spec)
        return _dump(cmd_absorption(ch, parse_frame(args.enclosure, ch.dim), args.method))
    if args.command == "fixed-points":
        return _dump(cmd_fixed_points(parse_channel_spec(args.spec)))
    if args.command == "classical":
        chain = parse_chain(args.chain)
        h = ab.classical_absorption(chain, parse_states(args.closed))
        return _dump({"closed": parse_states(args.closed), "absorption": [_num(x) for x in h]})
    if args.command == "embed":
        chain = parse_chain(args.chain)
        ch = ab.embed_classical_chain(chain)
        return _dump(channel_spec_document(ch.kraus, label=ch.label))
    if args.command == "dihedral":
        return cmd_dihedral(args)
    raise SpecParseError(f"unknown command {args.command!r}")


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=True) + "\n"


_MODULE_OF = {"analyze": "structure", "absorption": "absorption", "classical": "absorption",
              "embed": "absorption", "fixed-points": "structure", "dihedral": "dihedral"}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_PARSE
    try:
        text = run_command(args)
    except SpecParseError as exc:
        print(f"cli: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ChannelError as exc:
        print(f"channel: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (PreconditionError, ValueError) as exc:
        print(f"{_MODULE_OF.get(args.command, 'cli')}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
