"""Command-line front end.

Every command writes its artifacts (JSON results, CSV traces) into an output
directory chosen by ``--out`` or the ``ECHELON_OUT`` environment variable.
File names carry a hash of the run configuration, so parallel sweeps never
collide and identical configurations overwrite identical bytes.  A one-line
JSON summary goes to stdout.  Failures print an error object and exit with

    0 ok, 2 parse, 3 precondition, 4 resonance, 5 convergence abort.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import sys
from pathlib import Path

import click

from .divisors import measure_fractions, min_small_divisor, siegel_divisors
from .errors import ConvergenceError, EchelonError, ParseError, PreconditionError, ResonanceError
from .kam import frequency_of, isochronic_check, kam_transversal_step, singular_in_F, singular_kam_step, torus_layout
from .normal_form import Schedule, conjugacy_defect, morse_reduce, siegel_linearize
from .numbers import parse_number
from .operators import derivation_sequence, infinite_product, telescoping_report
from .series import TruncatedSeries, from_literal, to_literal

OUT_ENV = "ECHELON_OUT"
DEFAULT_OUT = "echelon-out"
EXIT_OK, EXIT_PARSE, EXIT_PRECONDITION, EXIT_RESONANCE, EXIT_CONVERGENCE = 0, 2, 3, 4, 5


# ----------------------------------------------------------------------------------
# plumbing
# ----------------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, TruncatedSeries):
        return to_literal(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and (math.isinf(obj) or math.isnan(obj)):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return str(obj)


def dumps(obj) -> str:
    """Deterministic JSON text."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def config_hash(command: str, config: dict) -> str:
    text = json.dumps({"command": command, "config": _jsonable(config)}, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


class Run:
    """Artifact writer for one command invocation."""

    def __init__(self, command: str, config: dict, out: str | None):
        self.command = command
        self.config = config
        self.dir = Path(out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
        self.stem = f"{command}-{config_hash(command, config)}"
        self.files: list = []

    def write(self, suffix: str, text: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / f"{self.stem}{suffix}"
        path.write_text(text)
        self.files.append(str(path))
        return path

    def finish(self, summary: dict, code: int = EXIT_OK):
        summary = {"command": self.command, "config": self.config, **summary}
        self.write(".json", dumps(summary))
        click.echo(json.dumps(_jsonable({"command": self.command, "files": self.files, **_brief(summary)}),
                              sort_keys=True))
        sys.exit(code)


def _brief(summary: dict) -> dict:
    keep = ("verdict", "orders", "grades", "witness", "C", "fractions", "lemma_violations", "status")
    return {k: summary[k] for k in keep if k in summary}


def _exit_code(exc: EchelonError) -> int:
    if isinstance(exc, ParseError):
        return EXIT_PARSE
    if isinstance(exc, ResonanceError):
        return EXIT_RESONANCE
    if isinstance(exc, ConvergenceError):
        return EXIT_CONVERGENCE
    if isinstance(exc, PreconditionError):
        return EXIT_PRECONDITION
    return exc.exit_code


def _guard(fn):
    """Map library errors to exit codes with a JSON error object on stdout."""
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except EchelonError as exc:
            click.echo(json.dumps(_jsonable(exc.to_json()), sort_keys=True))
            sys.exit(_exit_code(exc))
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc}") from exc


def _parse_lambda(text: str, exact: bool | None):
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise ParseError("empty frequency")
    if exact is None:
        try:
            return tuple(parse_number(p, exact=True) for p in parts)
        except ParseError:
            exact = False
    return tuple(parse_number(p, exact=exact) for p in parts)


def _exact_flag(exact: bool | None, float_: bool) -> bool | None:
    if exact and float_:
        raise PreconditionError("--exact and --float are mutually exclusive")
    if exact:
        return True
    if float_:
        return False
    return None


def _mode(f: TruncatedSeries, exact: bool | None) -> TruncatedSeries:
    if exact is True and not f.exact:
        return f.to_exact()
    if exact is False and f.exact:
        return f.to_float()
    return f


def _schedule(s: float | None, rule: str | None) -> Schedule | None:
    if s is None and rule is None:
        return None
    return Schedule(s if s is not None else 0.1, rule or "halving")


def _trace_artifacts(run: Run, trace):
    run.write(".trace.csv", trace.to_csv())
    run.write(".trace.json", trace.dumps() + "\n")


def _field_components(obj) -> list:
    if isinstance(obj, dict) and "field" in obj:
        obj = obj["field"]
    if isinstance(obj, dict):
        obj = [obj]
    if not isinstance(obj, list) or not obj:
        raise ParseError("vector field file must hold a list of series literals or {'field': [...]}")
    return obj


def _torus_hamiltonian(obj, fourier_cap: int, t_cap: int, xi_cap: int, exact: bool | None) -> TruncatedSeries:
    if not isinstance(obj, dict):
        raise ParseError("Hamiltonian file must be a JSON object")
    slots = obj.get("slots")
    if slots is not None:
        if not isinstance(slots, dict) or set(slots) != {"angles", "actions", "t"}:
            raise ParseError("slots must be {'angles': n, 'actions': n, 't': 1}")
        n = slots["angles"]
        if slots["actions"] != n or slots["t"] != 1:
            raise ParseError("slots must have as many actions as angles and one t slot")
        obj = {"signature": [n, n + 1], "cap": 0, **{k: v for k, v in obj.items() if k != "slots"}}
    literal = dict(obj)
    literal["cap"] = literal.get("cap", 0)
    literal.pop("slot_caps", None)
    raw = from_literal(literal, exact)
    n = raw.signature.fourier
    if raw.signature.taylor != n + 1:
        raise ParseError(f"torus Hamiltonian needs signature [n, n+1], got {list(raw.signature)}")
    lay = torus_layout(n, fourier_cap, xi_cap, t_cap)
    # re-read with the requested caps; the literal's own cap only bounds parsing
    literal["cap"] = lay["cap"]
    full = from_literal(literal, raw.exact)
    return TruncatedSeries(lay["signature"], lay["cap"], dict(full.items()), exact=full.exact,
                           slot_caps=lay["slot_caps"])


# ----------------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------------

OUT_OPTION = click.option("--out", "out", default=None, help=f"Output directory (default ${OUT_ENV} or ./{DEFAULT_OUT}).")


@click.group()
def main():
    """Scaled-series normal forms: linearization, Morse reduction, KAM steps, small divisors."""


@main.command()
@click.option("--lambda", "lam", required=True, help="Comma-separated frequency, e.g. 1,sqrt(2).")
@click.option("--tau", type=float, required=True)
@click.option("--cutoff", type=int, required=True)
@click.option("--C", "C", type=str, default=None, help="Required constant; the verdict compares against it.")
@click.option("--exact", is_flag=True)
@click.option("--float", "float_", is_flag=True)
@OUT_OPTION
@_guard
def diophantine(lam, tau, cutoff, C, exact, float_, out):
    """Certify |(lambda, i)| |i|^tau >= C for 0 < |i| <= cutoff."""
    mode = _exact_flag(exact, float_)
    freq = _parse_lambda(lam, mode)
    required = None if C is None else parse_number(C, exact=mode is not False)
    cert = min_small_divisor(freq, tau, cutoff, exact=mode, C=required)
    run = Run("diophantine", {"lambda": lam, "tau": tau, "cutoff": cutoff, "C": C, "exact": mode}, out)
    payload = cert.to_json()
    run.finish({**payload, "status": "resonant" if cert.resonant else "ok"},
               EXIT_RESONANCE if cert.resonant else EXIT_OK)


@main.command()
@click.option("--siegel", is_flag=True, required=True, help="Table (j, lambda) - lambda_i.")
@click.option("--lambda", "lam", required=True)
@click.option("--cutoff", type=int, required=True)
@click.option("--exact", is_flag=True)
@click.option("--float", "float_", is_flag=True)
@OUT_OPTION
@_guard
def divisors(siegel, lam, cutoff, exact, float_, out):
    """Siegel divisor table as CSV (component i is 1-based)."""
    mode = _exact_flag(exact, float_)
    freq = _parse_lambda(lam, mode)
    rows = siegel_divisors(freq, cutoff, exact=mode)
    lines = ["j,i,value,resonant"]
    for r in rows:
        j = " ".join(str(x) for x in r.j)
        lines.append(f"{j},{r.i + 1},{r.value},{str(bool(r.resonant)).lower()}")
    run = Run("divisors", {"lambda": lam, "cutoff": cutoff, "exact": mode}, out)
    run.write(".csv", "\n".join(lines) + "\n")
    run.finish({"rows": len(rows), "resonant": sum(1 for r in rows if r.resonant)})


@main.command()
@click.option("--field", "field_path", required=True, type=click.Path(), help="List of series literals.")
@click.option("--cutoff", type=int, default=None, help="Jet cap (default: the literal's cap).")
@click.option("--steps", type=int, default=6)
@click.option("--strategy", type=click.Choice(["kolmogorov", "newton", "picard"]), default="kolmogorov")
@click.option("--exact", is_flag=True)
@click.option("--float", "float_", is_flag=True)
@click.option("--s", "s", type=float, default=None, help="Schedule base scale.")
@OUT_OPTION
@_guard
def linearize(field_path, cutoff, steps, strategy, exact, float_, s, out):
    """Siegel linearization of a vector field with diagonal linear part."""
    mode = _exact_flag(exact, float_)
    comps = [from_literal(c, mode) for c in _field_components(_read_json(field_path))]
    if cutoff is not None:
        comps = [TruncatedSeries(c.signature, cutoff, dict(c.items()), exact=c.exact) for c in comps]
    comps = [_mode(c, mode) for c in comps]
    res = siegel_linearize(comps, steps, strategy=strategy, sched=_schedule(s, None))
    h = res.coordinates["h"]
    lam = [c[tuple(int(k == i) for k in range(len(comps)))] for i, c in enumerate(comps)]
    defect = conjugacy_defect(comps, h, lam)
    config = {"field": Path(field_path).name, "cutoff": cutoff, "steps": steps, "strategy": strategy, "exact": mode, "s": s}
    run = Run("linearize", config, out)
    _trace_artifacts(run, res.trace)
    run.write(".h.json", dumps({"h": list(h)}))
    run.finish({
        "h": list(h),
        "orders": res.trace.orders(),
        "conjugacy_defect_order": min(d.filtration_order() for d in defect),
        "lemma_violations": res.trace.lemma_violations(),
    })


@main.command()
@click.option("--fn", "fn_path", required=True, type=click.Path(), help="Series literal of f.")
@click.option("--cap", type=int, default=None, help="Jet cap (default: the literal's cap).")
@click.option("--steps", type=int, default=3)
@click.option("--strategy", type=click.Choice(["kolmogorov", "newton", "picard"]), default="kolmogorov")
@click.option("--single-sequence", is_flag=True, help="Recompute each residual from the original f.")
@click.option("--exact", is_flag=True)
@click.option("--float", "float_", is_flag=True)
@click.option("--s", "s", type=float, default=None)
@OUT_OPTION
@_guard
def morse(fn_path, cap, steps, strategy, single_sequence, exact, float_, s, out):
    """Reduce a function germ to its quadratic part."""
    mode = _exact_flag(exact, float_)
    f = from_literal(_read_json(fn_path), mode)
    if cap is not None:
        f = TruncatedSeries(f.signature, cap, dict(f.items()), exact=f.exact)
    f = _mode(f, mode)
    res = morse_reduce(f, steps, strategy=strategy, sched=_schedule(s, None), single_sequence=single_sequence)
    config = {"fn": Path(fn_path).name, "cap": cap, "steps": steps, "strategy": strategy,
              "single_sequence": single_sequence, "exact": mode, "s": s}
    run = Run("morse", config, out)
    _trace_artifacts(run, res.trace)
    run.finish({
        "orders": res.trace.orders(),
        "residual": res.residual,
        "coordinates": res.coordinates,
        "lemma_violations": res.trace.lemma_violations(),
    })


@main.command("kam-step")
@click.option("--ham", "ham_path", required=True, type=click.Path())
@click.option("--cutoff", type=int, required=True, help="Fourier cap and Diophantine cutoff.")
@click.option("--t-order", "t_order", type=int, required=True)
@click.option("--action-order", "action_order", type=int, default=1, help="Cap on the action degree.")
@click.option("--steps", type=int, default=3)
@click.option("--real", is_flag=True)
@click.option("--exact", is_flag=True)
@click.option("--float", "float_", is_flag=True)
@OUT_OPTION
@_guard
def kam_step(ham_path, cutoff, t_order, action_order, steps, real, exact, float_, out):
    """Transversal normal form of H = lambda.xi + t R modulo I^2."""
    mode = _exact_flag(exact, float_)
    H = _torus_hamiltonian(_read_json(ham_path), cutoff, t_order, action_order, mode)
    res = kam_transversal_step(H, steps, cutoff=cutoff, real=real)
    n = H.signature.fourier
    R = H.select(lambda k: k[2 * n] > 0)
    k_R = max((sum(abs(e) for e in k[:n]) for k in R.coeffs), default=0)
    config = {"ham": Path(ham_path).name, "cutoff": cutoff, "t_order": t_order, "action_order": action_order,
              "steps": steps, "real": real, "exact": mode}
    run = Run("kam-step", config, out)
    _trace_artifacts(run, res.trace)
    run.write(".transform.json", dumps(res.coordinates))
    run.finish({
        "grades": res.trace.grades(),
        "alpha_total": res.alpha_total,
        "frequency": [str(x) for x in frequency_of(H)],
        "grading_exact": cutoff >= t_order * k_R,
        "lemma_violations": res.trace.lemma_violations(),
        "annotations": res.trace.annotations,
    })


@main.command("singular-kam")
@click.option("--ham", "ham_path", required=True, type=click.Path(), help="Series literal in (q_1..q_n, p_1..p_n).")
@click.option("--cap", type=int, default=None)
@click.option("--steps", type=int, default=4)
@click.option("--exact", is_flag=True)
@click.option("--float", "float_", is_flag=True)
@OUT_OPTION
@_guard
def singular_kam(ham_path, cap, steps, exact, float_, out):
    """Bring sum lambda_i q_i p_i + R to its quadratic part modulo I^2."""
    mode = _exact_flag(exact, float_)
    H = from_literal(_read_json(ham_path), mode)
    if cap is not None:
        H = TruncatedSeries(H.signature, cap, dict(H.items()), exact=H.exact)
    H = _mode(H, mode)
    res = singular_kam_step(H, steps)
    n = H.signature.taylor // 2
    config = {"ham": Path(ham_path).name, "cap": cap, "steps": steps, "exact": mode}
    run = Run("singular-kam", config, out)
    _trace_artifacts(run, res.trace)
    run.finish({
        "grades": res.trace.grades(),
        "residual_in_I2": all(singular_in_F(k, n) for k in res.residual.coeffs),
        "alpha_total": res.alpha_total,
        "coordinates": res.coordinates,
        "lemma_violations": res.trace.lemma_violations(),
    })


@main.command("product-demo")
@click.option("--kind", type=click.Choice(["geometric", "harmonic"]), default="geometric")
@click.option("--terms", type=int, default=8)
@click.option("--s", "s", type=float, default=0.5)
@click.option("--cap", type=int, default=12)
@OUT_OPTION
@_guard
def product_demo(kind, terms, s, cap, out):
    """Infinite product of z^2 d/dz exponentials with prescribed 1-bounds."""
    summary = product_run(kind, terms, s, cap)
    run = Run("product-demo", {"kind": kind, "terms": terms, "s": s, "cap": cap}, out)
    run.write(".cert.json", dumps(summary["certificate"]))
    run.finish(summary)


def product_run(kind: str, terms: int, s: float, cap: int) -> dict:
    """Geometric ``N/s = 4^{-(n+2)}`` or harmonic ``N/s = 1/(4(n+1))`` sequence."""
    if kind == "geometric":
        ratios = [4.0 ** -(n + 2) for n in range(terms)]
    else:
        ratios = [0.25 / (n + 1) for n in range(terms)]
    seq = derivation_sequence(ratios, s, cap)
    res = infinite_product([u for u, _ in seq], s, [p for _, p in seq])
    x = TruncatedSeries((0, 1), cap, {(k,): 1.0 / (k + 1) for k in range(cap + 1)})
    identity_error = max((res.g(res.h(x)) - x).max_abs(), (res.h(res.g(x)) - x).max_abs())
    tele = telescoping_report(res, s, cap)
    return {
        "verdict": res.cert.verdict,
        "certificate": {"rows": res.cert.rows(), "tail_bound": res.cert.tail_bound,
                        "precondition_failed_at": res.cert.precondition_failed_at},
        "identity_error": identity_error,
        "telescoping": tele,
        "telescoping_ok": all(r["ok"] for r in tele),
    }


@main.command("measure-demo")
@click.option("--tau", type=float, default=2.0)
@click.option("--C", "C_grid", multiple=True, type=float, default=(10.0, 0.1, 0.01, 0.001))
@click.option("--samples", type=int, default=10000)
@click.option("--seed", type=int, default=0)
@click.option("--cutoff", type=int, default=30)
@OUT_OPTION
@_guard
def measure_demo(tau, C_grid, samples, seed, cutoff, out):
    """Fraction of random lambda in [0,1]^2 passing the (C, tau, cutoff) check."""
    rows = measure_fractions(tau, list(C_grid), samples, seed, cutoff)
    run = Run("measure-demo", {"tau": tau, "C": list(C_grid), "samples": samples, "seed": seed, "cutoff": cutoff}, out)
    lines = ["C,fraction"] + [f"{c!r},{frac!r}" for c, frac in rows]
    run.write(".csv", "\n".join(lines) + "\n")
    run.finish({"fractions": [[c, frac] for c, frac in rows]})


@main.command()
@OUT_OPTION
@_guard
def demo(out):
    """Run the worked examples and write every artifact."""
    results = demo_suite()
    run = Run("demo", {}, out)
    for name, res in results.items():
        if hasattr(res, "trace"):
            run.write(f".{name}.trace.csv", res.trace.to_csv())
    summary = {name: _demo_summary(res) for name, res in results.items()}
    violations = sum(len(v.get("lemma_violations", [])) for v in summary.values())
    run.finish({"examples": summary, "lemma_violations": violations})


def _demo_summary(res) -> dict:
    if isinstance(res, dict):
        return res
    return {
        "orders": res.trace.orders(),
        "grades": res.trace.grades(),
        "lemma_violations": res.trace.lemma_violations(),
    }


def demo_suite() -> dict:
    """The worked examples, keyed by name (iteration results or plain dicts)."""
    out = {}
    x = TruncatedSeries.variable((0, 1), 32, 0, exact=True)
    out["morse_x2_x3"] = morse_reduce(x * x + x ** 3, 4)
    out["morse_x2_x3_picard"] = morse_reduce(x * x + x ** 3, 4, strategy="picard")
    X = TruncatedSeries.variable((0, 2), 32, 0, exact=True)
    Y = TruncatedSeries.variable((0, 2), 32, 1, exact=True)
    out["morse_x2_y2_x3"] = morse_reduce(X * X + Y * Y + X ** 3, 3)
    z = TruncatedSeries.variable((0, 1), 16, 0, exact=True)
    out["siegel_1d"] = siegel_linearize([z + z * z], 4)
    out["siegel_1d_cubic"] = siegel_linearize([z + z * z + 2 * z ** 3], 4)
    out["siegel_1d_newton"] = siegel_linearize([z + z * z + 2 * z ** 3], 4, strategy="newton")
    phi = parse_number("(1+sqrt(5))/2", exact=True)
    z1 = TruncatedSeries.variable((0, 2), 10, 0, exact=True)
    z2 = TruncatedSeries.variable((0, 2), 10, 1, exact=True)
    out["siegel_2d"] = siegel_linearize([z1 + z1 * z2, z2.scale(phi)], 4)
    out["kam_torus"] = kam_transversal_step(demo_torus(8, exact=True), 3, real=True)
    out["kam_torus_float"] = kam_transversal_step(demo_torus(16, exact=False), 4, real=True)
    q = TruncatedSeries.variable((0, 2), 12, 0, exact=True)
    p = TruncatedSeries.variable((0, 2), 12, 1, exact=True)
    out["singular_kam"] = singular_kam_step(q * p + q ** 3 + q * q * p + p ** 3, 4)
    out["product_geometric"] = product_run("geometric", 8, 0.5, 12)
    out["product_harmonic"] = product_run("harmonic", 16, 0.5, 12)
    H0 = demo_torus(4, exact=True).select(lambda k: k[4] == 0)
    out["isochronic"] = {k: v for k, v in isochronic_check(H0).items() if k in ("degenerate", "fiber_dim")}
    return out


def demo_torus(t_cap: int, exact: bool = True) -> TruncatedSeries:
    """``H = xi_1 + phi xi_2 + t sum_{|i|=1} e_i (1 + xi_1 + xi_2)`` with Fourier cap ``t_cap``."""
    from .kam import make_hamiltonian

    phi = parse_number("(1+sqrt(5))/2", exact=True)
    terms = {((0, 0), (1, 0), 0): 1, ((0, 0), (0, 1), 0): phi}
    for i in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        for beta in ((0, 0), (1, 0), (0, 1)):
            terms[(i, beta, 1)] = 1
    H = make_hamiltonian(2, terms, fourier_cap=t_cap, xi_cap=1, t_cap=t_cap, exact=True)
    return H if exact else H.to_float()


if __name__ == "__main__":
    main()
