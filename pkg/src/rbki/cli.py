"""``rbki`` command line: approx, lab, bench, verify.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical or
criterion failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import acceptance, lab
from .dense import SvdConvergenceError, svd
from .gaps import GapStats, recommend_q, smoothed_gap_stats
from .krylov import (
    KrylovConfig,
    error_metrics,
    estimate_singular_values,
    target_satisfied,
    rbki,
    rbki_trace,
)
from .matgen import parse_spectrum, synth_matrix
from .matrix_io import MatrixFormatError, read_matrix, write_matrix
from .operators import DenseOperator, PerturbationConfig, operator_norm, smooth_perturb
from .records import TrialRecord, emit_records, emit_timings, strip_timings, write_table
from .report import SUMMARY_COLUMNS, render_bench, render_lab

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class CriterionFailure(RuntimeError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in str(text).replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _q_arg(text: str):
    if str(text) == "auto":
        return "auto"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"q must be an integer or 'auto', got {text!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or YAML file of option defaults (unknown keys are rejected)")
    p.add_argument("--seed", type=int, default=None, help="master seed (env RBKI_SEED overrides the config file)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--strict", action="store_true", default=None, help="strict-deterministic mode (one BLAS thread, timings in a sidecar)")
    p.add_argument("--threads", type=int, default=None, help="BLAS threads (default: all cores; 1 implies --strict)")


def _add_matrix_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="matrix file (.mtx Matrix Market, otherwise raw binary)")
    p.add_argument("--spec", help="synthetic spectrum, e.g. geometric:0.9, polynomial:1, clustered:40:0.5, list:3,2,1")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--matrix-seed", type=int, default=None, help="seed for the synthetic singular vectors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbki", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("approx", help="rank-k approximation of one matrix")
    _add_matrix_source(p)
    _add_common(p)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--b", type=int, default=None)
    p.add_argument("--q", type=_q_arg, default=None, help="iteration count or 'auto'")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None, help="smooth with a diagonal perturbation of this size")
    p.add_argument("--c1", type=float, default=None, help="calibration constant for --q auto")

    p = sub.add_parser("lab", help="conditioning experiments on random block Krylov matrices")
    _add_common(p)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--b", type=_int_list, default=None, help="comma-separated block sizes dividing k")
    p.add_argument("--spectrum", default=None, help="geometric:0.9, polynomial:1, clustered:..., list:..., file:x.json")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--calibration-C", dest="calibration_C", type=float, default=None)
    p.add_argument("--no-plot", dest="no_plot", action="store_true", default=None)

    p = sub.add_parser("bench", help="matvecs and time to a target accuracy across block sizes")
    _add_matrix_source(p)
    _add_common(p)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--b", type=_int_list, default=None)
    p.add_argument("--eps", type=float, default=None, help="target accuracy for both error conditions")
    p.add_argument("--trials", type=int, default=None, help="seeds per block size")
    p.add_argument("--q-max", dest="q_max", type=int, default=None)
    p.add_argument("--no-plot", dest="no_plot", action="store_true", default=None)

    p = sub.add_parser("verify", help="run the acceptance criteria")
    _add_common(p)
    p.add_argument("--list", action="store_true", default=None, help="list criteria without running them")
    p.add_argument("--only", type=_int_list, default=None, help="comma-separated criterion numbers")
    p.add_argument("--calibration-C", dest="calibration_C", type=float, default=None)
    p.add_argument("--c1", type=float, default=None)
    return parser


DEFAULTS = {
    "approx": dict(k=None, b=None, q="auto", eps=0.25, delta=0.05, gamma=None, c1=1.0, n=None, d=None, matrix_seed=0),
    "lab": dict(k=24, b=None, spectrum="geometric:0.9", trials=200, delta=0.1, calibration_C=1.0, no_plot=False),
    "bench": dict(k=None, b=None, eps=0.01, trials=10, q_max=None, no_plot=False, n=None, d=None, matrix_seed=0),
    "verify": dict(list=False, only=None, calibration_C=1.0, c1=1.0),
}
COMMON = dict(seed=0, out=None, strict=False, threads=None, input=None, spec=None, config=None)


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.endswith((".yaml", ".yml")):
            import yaml

            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except Exception as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a mapping")
    return data


def resolve_options(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    """Merge CLI flags over config-file values over defaults; RBKI_SEED beats the config seed."""
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    actions = {a.dest: a for a in sub._actions if a.dest != "help"}  # noqa: SLF001
    config = _load_config(args.config) if args.config else {}
    merged = dict(COMMON)
    merged.update(DEFAULTS[args.command])
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest not in actions or dest == "config":
            raise ConfigError(f"unknown config key {key!r} for '{args.command}'")
        act = actions[dest]
        if value is not None and act.type is not None:
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            try:
                value = act.type(str(value))
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise ConfigError(f"bad value for config key {key!r}: {exc}") from None
        merged[dest] = value
    env_seed = os.environ.get("RBKI_SEED")
    if env_seed is not None:
        try:
            merged["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"RBKI_SEED must be an integer, got {env_seed!r}") from None
    for dest, value in vars(args).items():
        if value is not None:
            merged[dest] = value
    merged["command"] = args.command
    if merged.get("threads") is not None and merged["threads"] < 1:
        raise ConfigError("--threads must be >= 1")
    if merged.get("threads") == 1:
        merged["strict"] = True
    return argparse.Namespace(**merged)


@contextlib.contextmanager
def _thread_limit(opts):
    from threadpoolctl import threadpool_limits

    limit = 1 if opts.strict else opts.threads
    if limit is None:
        yield
    else:
        with threadpool_limits(limits=limit):
            yield


def _out_dir(opts, default: str) -> Path:
    out = Path(opts.out or default)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _write_records(opts, records, path: Path) -> None:
    """Main CSV (timings blanked in strict mode) plus the timing sidecar."""
    emit_records(strip_timings(records) if opts.strict else records, path)
    emit_timings(records, path.with_name(path.stem + "_timings.csv"))


def _load_matrix(opts):
    """``(A, reference SVD or None, source label)``."""
    if bool(opts.input) == bool(opts.spec):
        raise ConfigError("give exactly one of --input or --spec")
    if opts.input:
        A = read_matrix(opts.input)
        return A, None, str(opts.input)
    if opts.n is None:
        raise ConfigError("--spec needs --n (and optionally --d)")
    d = opts.d if opts.d is not None else opts.n
    spec = parse_spectrum(opts.spec, opts.n, d, seed=opts.matrix_seed)
    A, ref = synth_matrix(spec)
    return A, ref, opts.spec


# --------------------------------------------------------------------------
# approx
# --------------------------------------------------------------------------


def cmd_approx(opts) -> int:
    if opts.k is None or opts.b is None:
        raise ConfigError("approx needs --k and --b")
    A, ref, source = _load_matrix(opts)
    n, d = A.shape
    if not 1 <= opts.k <= min(n, d):
        raise ConfigError(f"k={opts.k} must be in [1, min(n, d)={min(n, d)}]")
    if not 1 <= opts.b <= opts.k:
        raise ConfigError(f"b={opts.b} must be in [1, k={opts.k}]")
    op = DenseOperator(A)
    run_op = op
    if opts.gamma is not None:
        run_op = smooth_perturb(op, PerturbationConfig(opts.gamma, seed=opts.seed))
    notes = []
    q = opts.q
    if q == "auto":
        padded = opts.b * -(-opts.k // opts.b)
        if ref is not None and opts.gamma is None:
            spectrum = ref.s
        elif ref is not None:
            spectrum = smoothed_gap_stats(run_op, min(padded + 1, d))
        else:
            est_op = DenseOperator(A)
            spectrum = estimate_singular_values(est_op, min(padded + 1, n, d), opts.b, opts.seed)
            notes.append(f"two-phase q: {est_op.matvec_count} matvecs spent estimating the spectrum")
        q = recommend_q(spectrum, opts.k, opts.b, opts.eps, opts.delta, n, c1=opts.c1)
        notes.append(f"q=auto -> {q}")
    cfg = KrylovConfig(opts.k, opts.b, q, opts.eps, opts.delta, seed=opts.seed)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        approx = rbki(run_op, cfg)
    wall = time.perf_counter() - t0
    notes += [str(w.message) for w in caught]
    notes += approx.basis.notes
    rec = TrialRecord(
        experiment="approx",
        seed=opts.seed,
        k=cfg.k,
        b=cfg.b,
        q=cfg.q,
        t=cfg.depth,
        eps=cfg.epsilon,
        delta=cfg.delta,
        gamma=math.nan if opts.gamma is None else opts.gamma,
        matvec_count=approx.matvec_cost,
        bq_proxy=cfg.b * cfg.q,
        wall_time=wall,
        note="; ".join(dict.fromkeys(notes)),
    )
    if ref is not None:
        m = error_metrics(op, approx, ref)
        rec.frobenius_ratio = m.frobenius_ratio
        rec.spectral_ratio = m.spectral_ratio
        rec.max_index_residual = m.max_index_residual
        rec.passed = m.solves(cfg.epsilon)
    out = _out_dir(opts, "rbki-approx")
    write_matrix(out / "left.bin", approx.core_left if approx.rank else np.zeros((n, 1)))
    write_matrix(out / "singular_values.bin", approx.core_singulars.reshape(-1, 1) if approx.rank else np.zeros((1, 1)))
    write_matrix(out / "right.bin", approx.right_vectors if approx.rank else np.zeros((d, 1)))
    _write_records(opts, [rec], out / "approx.csv")
    print(f"source {source}: n={n} d={d} k={cfg.k} b={cfg.b} q={cfg.q} matvecs={approx.matvec_cost} (bq={cfg.b * cfg.q})")
    if ref is not None:
        verdict = "solves" if rec.passed else "does NOT solve"
        print(
            f"frobenius_ratio={rec.frobenius_ratio:.6g} spectral_ratio={rec.spectral_ratio:.6g} "
            f"max_index_residual={rec.max_index_residual:.3g} -> {verdict} the problem at eps={cfg.epsilon}"
        )
    for note in rec.note.split("; ") if rec.note else []:
        print("note:", note)
    print(f"wrote {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# lab
# --------------------------------------------------------------------------


def cmd_lab(opts) -> int:
    k = opts.k
    if k is None or not 1 <= k <= 200:
        raise ConfigError("lab needs 1 <= k <= 200")
    blocks = opts.b or [b for b in range(1, k + 1) if k % b == 0]
    bad = [b for b in blocks if b < 1 or k % b]
    if bad:
        raise ConfigError(f"block sizes {bad} do not divide k={k}")
    if opts.trials < 1:
        raise ConfigError("--trials must be >= 1")
    if not 0 < opts.delta < 1:
        raise ConfigError("--delta must be in (0, 1)")
    spectrum = lab.SpectrumModel.parse(opts.spectrum, k)
    out = _out_dir(opts, "rbki-lab")
    records, summary, problems = [], [], []
    for b in blocks:
        recs = lab.sigma_min_experiment(spectrum, b, opts.trials, opts.seed, opts.delta, opts.calibration_C)
        s = lab.summarize_sigma_min(recs)
        records += recs
        summary.append(
            dict(
                b=b,
                t=s.t,
                trials=s.trials,
                failures=s.failures,
                failure_fraction=s.failure_fraction if s.trials else math.nan,
                degenerate=s.degenerate,
                pv_violations=s.pv_violations,
                log_bound=s.log_bound,
                q05=s.log_sigma_min_quantiles[0],
                q50=s.log_sigma_min_quantiles[1],
                q95=s.log_sigma_min_quantiles[2],
                median_slack=s.median_slack,
            )
        )
        if s.pv_violations:
            problems.append(f"Peng-Vempala inequality violated in {s.pv_violations} trials at b={b}")
        records += _lab_side_checks(spectrum, b, opts, problems)
    _write_records(opts, records, out / "lab.csv")
    write_table(out / "lab_summary.csv", SUMMARY_COLUMNS, ([row[c] for c in SUMMARY_COLUMNS] for row in summary))
    if not opts.no_plot:
        render_lab(summary, out, "lab")
    for row in summary:
        print(
            f"b={row['b']:3d} t={row['t']:3d} fail={row['failures']}/{row['trials']} "
            f"median log sigma_min={row['q50']:.2f} log bound={row['log_bound']:.2f} slack={row['median_slack']:.1f}"
        )
    if len(summary) >= 2:
        sums = [lab.summarize_sigma_min([r for r in records if r.experiment == f"sigma_min/b={b:03d}"]) for b in blocks]
        print(f"slope of median log(1/sigma_min) in t: {lab.fit_log_slope(sums):.3f} (limit {lab.slope_limit(spectrum):.3f})")
    print(f"wrote {out}")
    if problems:
        for p in problems:
            print("FAILURE:", p, file=sys.stderr)
        raise CriterionFailure("; ".join(problems))
    return EXIT_OK


def _lab_side_checks(spectrum, b: int, opts, problems: list) -> list[TrialRecord]:
    """Non-sparsification counts, a certificate and the rank check for one block size."""
    k, t = spectrum.k, spectrum.k // b
    recs = []
    V = lab.vandermonde(spectrum.nodes, t)
    rng = np.random.default_rng(np.random.SeedSequence([opts.seed, b, 44]))
    viol = 0
    for trial in range(opts.trials):
        y = rng.standard_normal(t)
        y /= np.linalg.norm(y)
        count, thr = lab.vandermonde_nonsparse_count(V, y, spectrum)
        viol += count < k - (t - 1)
        recs.append(TrialRecord(f"vandermonde_nonsparse/b={b:03d}", opts.seed, trial, k=k, b=b, t=t, count=count, threshold=thr, passed=count >= k - (t - 1)))
    if viol:
        problems.append(f"Vandermonde non-sparsification violated {viol} times at t={t}")
    if b >= 2:
        for trial in range(min(opts.trials, 100)):
            kry = lab.sample_krylov(spectrum, b, lab.trial_seed(opts.seed, trial))
            pv = lab.pv_decompose(kry)
            x = np.random.default_rng(np.random.SeedSequence([opts.seed, trial, 45])).standard_normal(t)
            x /= np.linalg.norm(x)
            if pv.degenerate:
                continue
            count, thr = lab.subspace_nonsparse_check(pv.Q[0], x, spectrum, opts.delta)
            recs.append(TrialRecord(f"subspace_nonsparse/b={b:03d}", opts.seed, trial, k=k, b=b, t=t, delta=opts.delta, count=count, threshold=thr, degenerate=pv.degenerate, passed=count >= t + 1))
            if k <= 2 * lab.EXHAUSTIVE_K:
                cert = lab.certify(kry, 0, 1, opts.delta, pv=pv)
                recs.append(TrialRecord(f"certificate/b={b:03d}", opts.seed, trial, k=k, b=b, t=t, delta=opts.delta, value=cert.rip_min, threshold=cert.eta, sigma_min=cert.norm, passed=cert.valid, note="exhaustive" if cert.rip_exhaustive else "sampled"))
    if t <= 4:
        rep = lab.nonsingularity_check(spectrum, b, opts.trials, opts.seed)
        recs.append(TrialRecord(f"nonsingular/b={b:03d}", opts.seed, 0, k=k, b=b, t=t, count=rep.rank_failures, value=rep.min_ratio, passed=rep.rank_failures == 0, note=f"witness rank {rep.witness_rank}"))
    return recs


# --------------------------------------------------------------------------
# bench
# --------------------------------------------------------------------------


def bench_trace(A, sigma, k: int, b: int, seed: int, eps: float, q_max: int | None) -> tuple[list[TrialRecord], TrialRecord]:
    """Trace records for one run and its matvecs-to-target summary record."""
    op = DenseOperator(A)
    d = A.shape[1]
    q_max = q_max or -(-d // b)
    opt = float(np.sqrt(np.sum(sigma[k:] ** 2)))
    fro2 = float(np.sum(sigma**2))
    trace, hit = [], None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for p in rbki_trace(op, k, b, q_max, seed, fro2):
            ratio = p.frobenius_error / opt if opt > 0 else (1.0 if p.frobenius_error <= 1e-8 * math.sqrt(fro2) else math.inf)
            solved = target_satisfied(p, sigma, k, eps)
            trace.append(
                TrialRecord(f"trace/b={b:03d}", seed, p.q, k=k, b=b, q=p.q, eps=eps, matvec_count=p.matvecs, bq_proxy=b * p.q, wall_time=p.seconds, frobenius_ratio=ratio, passed=solved)
            )
            if solved:
                hit = trace[-1]
                break
    summary = TrialRecord(
        f"bench/b={b:03d}",
        seed,
        0,
        k=k,
        b=b,
        q=hit.q if hit else None,
        eps=eps,
        matvec_count=hit.matvec_count if hit else None,
        bq_proxy=hit.bq_proxy if hit else None,
        wall_time=hit.wall_time if hit else math.nan,
        frobenius_ratio=hit.frobenius_ratio if hit else math.nan,
        passed=hit is not None,
    )
    return trace, summary


def cmd_bench(opts) -> int:
    if opts.k is None or not opts.b:
        raise ConfigError("bench needs --k and --b")
    A, ref, source = _load_matrix(opts)
    n, d = A.shape
    if not 1 <= opts.k < min(n, d):
        raise ConfigError(f"k={opts.k} must be in [1, min(n, d)) = [1, {min(n, d)})")
    bad = [b for b in opts.b if not 1 <= b <= opts.k]
    if bad:
        raise ConfigError(f"block sizes {bad} must lie in [1, k]")
    if opts.trials < 1:
        raise ConfigError("--trials must be >= 1")
    sigma = ref.s if ref is not None else svd(A).s
    out = _out_dir(opts, "rbki-bench")
    traces, summaries = [], []
    for b in opts.b:
        for s in range(opts.seed, opts.seed + opts.trials):
            tr, sm = bench_trace(A, sigma, opts.k, b, s, opts.eps, opts.q_max)
            traces += tr
            summaries.append(sm)
    _write_records(opts, summaries, out / "bench.csv")
    emit_records(strip_timings(traces) if opts.strict else traces, out / "bench_trace.csv")
    emit_timings(traces, out / "bench_timings.csv")
    if not opts.no_plot:
        render_bench(traces, out, "bench")
    print(f"source {source}: n={n} d={d} k={opts.k} target eps={opts.eps}")
    for b in opts.b:
        mv = [r.matvec_count for r in summaries if r.b == b and r.matvec_count is not None]
        secs = [r.wall_time for r in summaries if r.b == b and r.passed]
        reached = sum(1 for r in summaries if r.b == b and r.passed)
        med = f"{np.median(mv):.0f}" if mv else "n/a"
        tmed = f"{np.median(secs):.4f}s" if secs else "n/a"
        print(f"b={b:4d}: reached target in {reached}/{opts.trials} runs; median matvecs {med}; median time {tmed}")
    print(f"wrote {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------


def cmd_verify(opts) -> int:
    if opts.list:
        for number, (desc, _) in sorted(acceptance.CRITERIA.items()):
            print(f"{number:2d}. {desc}")
        return EXIT_OK
    selected = opts.only or sorted(acceptance.CRITERIA)
    unknown = [c for c in selected if c not in acceptance.CRITERIA]
    if unknown:
        raise ConfigError(f"unknown criteria {unknown}")
    st = acceptance.Settings(seed=opts.seed, calibration_C=opts.calibration_C, c1=opts.c1)
    results = acceptance.run_all(selected, st, echo=lambda line: print(line, flush=True))
    if opts.out:
        out = _out_dir(opts, "rbki-verify")
        recs = [r for res in results for r in res.records]
        _write_records(opts, recs, out / "verify.csv")
        write_table(out / "verify_summary.csv", ["criterion", "name", "passed", "detail"], ([r.number, r.name, r.passed, r.detail] for r in results))
    failed = [r.number for r in results if not r.passed]
    if failed:
        print(f"FAILED criteria: {', '.join(str(n) for n in failed)}")
        return EXIT_NUMERIC
    print(f"all {len(results)} criteria passed")
    return EXIT_OK


COMMANDS = {"approx": cmd_approx, "lab": cmd_lab, "bench": cmd_bench, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        opts = resolve_options(parser, argv)
        with _thread_limit(opts):
            return COMMANDS[opts.command](opts)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    except MatrixFormatError as exc:
        print(f"rbki: input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"rbki: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"rbki: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CriterionFailure as exc:
        print(f"rbki: check failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (np.linalg.LinAlgError, SvdConvergenceError, FloatingPointError, ArithmeticError) as exc:
        print(f"rbki: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
