"""Command-line surface: ``synth``, ``unmix``, ``eval`` and ``diag``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
All messages go to stderr; numeric artifacts are matrix files (binary or
CSV, see matrixio) and key=value text reports.  Every subcommand echoes
its config file verbatim into the output directory for provenance.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import gibbs, metrics
from .errors import DataError, NumericalError
from .initialization import init_endmember_prior
from .matrixio import read_matrix, write_matrix
from .model import SpectralImage, stick_breaking_forward
from .runconfig import RunConfig, load_config
from .synth import SynthSpec, generate

__all__ = ["main", "entry"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _set_threads(n):
    """Pin the compiled-kernel worker count; 0 keeps the automatic choice."""
    if n and n > 0:
        import numba

        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))


def _write_keyvalues(path, mapping):
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in mapping.items():
            fh.write(f"{key}={value}\n")


def _read_keyvalues(path):
    out = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _load_run_config(args):
    if args.config is not None:
        cfg, text = load_config(args.config)
    else:
        cfg, text = RunConfig(sampler=gibbs.SamplerConfig(), synth=SynthSpec()), ""
    return cfg, text


def _echo_config(out_dir, text):
    (out_dir / "config.txt").write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _cmd_synth(args):
    cfg, text = _load_run_config(args)
    spec = cfg.synth
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if cfg.endmember_file is not None:
        spec = replace(spec, endmember_source=read_matrix(cfg.endmember_file))
    _set_threads(args.threads)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    image, truth = generate(spec)
    write_matrix(image.data, out_dir / "image.pmat")
    write_matrix(truth.m_true, out_dir / "truth_endmembers.pmat")
    write_matrix(truth.a_true, out_dir / "truth_abundances.pmat")
    write_matrix(np.array([[truth.sigma2_true]]), out_dir / "truth_sigma2.pmat")
    if truth.b_true is not None:
        write_matrix(truth.b_true[None, :], out_dir / "truth_b.pmat")
    if truth.gamma_true is not None:
        write_matrix(truth.gamma_true, out_dir / "truth_gamma.pmat")
    _write_keyvalues(
        out_dir / "scene.txt",
        {
            "rows": spec.n_rows,
            "cols": spec.n_cols,
            "model": spec.mixing_model,
            "r": spec.r,
            "l": spec.l,
            "seed": spec.seed,
            "noise_sigma2": spec.noise_sigma2,
            "a_max": spec.a_max,
        },
    )
    _echo_config(out_dir, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# unmix
# ---------------------------------------------------------------------------

def _trace_matrix(chain):
    """Per-kept-sample scalar traces for the diag subcommand."""
    r = chain.z.shape[1] + 1
    columns = ["w", "sigma_b2", "sigma2_mean", "b_mean", "b_nonzero_frac"]
    columns += [f"a_mean_{j + 1}" for j in range(r)]
    k = chain.n_kept
    out = np.empty((k, len(columns)))
    for i in range(k):
        a = stick_breaking_forward(chain.z[i])
        out[i, 0] = chain.w[i]
        out[i, 1] = chain.sigma_b2[i]
        out[i, 2] = chain.sigma2[i].mean()
        out[i, 3] = chain.b[i].mean()
        out[i, 4] = np.count_nonzero(chain.b[i]) / chain.b.shape[1]
        out[i, 5:] = a.mean(axis=1)
    return out, columns


def _write_maps(out_dir, rows, cols, a_hat, b_hat):
    n = b_hat.size
    if rows * cols != n:
        raise DataError(f"grid {rows}x{cols} does not match {n} pixels")
    write_matrix(b_hat.reshape(rows, cols), out_dir / "b_map.pmat")
    for j in range(a_hat.shape[0]):
        write_matrix(a_hat[j].reshape(rows, cols), out_dir / f"a_map_{j + 1}.pmat")


def _cmd_unmix(args):
    cfg, text = _load_run_config(args)
    sampler_cfg = cfg.sampler
    if args.seed is not None:
        sampler_cfg = replace(sampler_cfg, seed=args.seed)
    _set_threads(args.threads)
    image = SpectralImage(read_matrix(args.image))
    r = args.endmembers
    if args.prior_means is not None:
        mbar = read_matrix(args.prior_means)
    else:
        mbar = init_endmember_prior(image.data, r)
    sampler_cfg = replace(
        sampler_cfg, priors=replace(sampler_cfg.priors, mbar=mbar)
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    started = time.perf_counter()
    chain = gibbs.run(image, r, sampler_cfg)
    elapsed = time.perf_counter() - started
    result = gibbs.mmse_estimate(chain)

    write_matrix(result.m_hat.data, out_dir / "endmembers.pmat")
    write_matrix(result.a_hat.data, out_dir / "abundances.pmat")
    write_matrix(result.b_hat[None, :], out_dir / "b.pmat")
    write_matrix(result.b_nonzero_prob[None, :], out_dir / "b_nonzero_prob.pmat")
    write_matrix(result.sigma2_hat.data[None, :], out_dir / "sigma2.pmat")
    write_matrix(
        np.array([[result.sigma_b2_hat, result.w_hat]]), out_dir / "hyper.pmat"
    )
    write_matrix(mbar, out_dir / "prior_means.pmat")
    trace, columns = _trace_matrix(chain)
    write_matrix(trace, out_dir / "trace.pmat")
    (out_dir / "trace_columns.txt").write_text("\n".join(columns) + "\n")
    write_matrix(np.column_stack([chain.accept_z, chain.accept_m]), out_dir / "accept.pmat")
    write_matrix(np.column_stack([chain.eps_z, chain.eps_m]), out_dir / "eps.pmat")
    write_matrix(
        np.column_stack([chain.diverged_z, chain.diverged_m]).astype(float),
        out_dir / "diverged.pmat",
    )
    if args.grid is not None:
        _write_maps(out_dir, args.grid[0], args.grid[1], result.a_hat.data, result.b_hat)
    _write_keyvalues(
        out_dir / "summary.txt",
        {
            "n_mc": sampler_cfg.n_mc,
            "n_burn": sampler_cfg.n_burn,
            "thin": sampler_cfg.thin,
            "seed": sampler_cfg.seed,
            "n_kept": chain.n_kept,
            "accept_z_mean": float(np.mean(chain.accept_z)),
            "accept_m_mean": float(np.mean(chain.accept_m)),
            "diverged_z_total": int(np.sum(chain.diverged_z)),
            "diverged_m_total": int(np.sum(chain.diverged_m)),
            "adapt_events": len(chain.adapt_events),
            "runtime_seconds": f"{elapsed:.3f}",
        },
    )
    _echo_config(out_dir, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _cmd_eval(args):
    truth_dir = Path(args.truth_dir)
    result_dir = Path(args.result_dir)
    out_dir = Path(args.out_dir) if args.out_dir else result_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    y = read_matrix(truth_dir / "image.pmat")
    m_true = read_matrix(truth_dir / "truth_endmembers.pmat")
    a_true = read_matrix(truth_dir / "truth_abundances.pmat")
    m_hat = read_matrix(result_dir / "endmembers.pmat")
    a_hat = read_matrix(result_dir / "abundances.pmat")
    b_hat = read_matrix(result_dir / "b.pmat")[0]
    prob_path = result_dir / "b_nonzero_prob.pmat"
    prob = read_matrix(prob_path)[0] if prob_path.exists() else None

    report = metrics.evaluate_unmixing(y, m_true, a_true, m_hat, a_hat, b_hat, prob)
    out = {
        "rnmse": report.rnmse,
        "sam_average": report.sam_average,
        "re": report.re,
        "permutation": ",".join(str(int(p)) for p in report.permutation),
    }
    unit = 180.0 / np.pi if args.degrees else 1.0
    if args.degrees:
        out["sam_average"] = report.sam_average * unit
        out["sam_unit"] = "degrees"
    else:
        out["sam_unit"] = "radians"
    for i, value in enumerate(report.sam_per_endmember):
        out[f"sam_{i + 1}"] = value * unit
    if report.linear_fraction is not None:
        out["linear_fraction"] = report.linear_fraction
    _write_keyvalues(out_dir / "eval_report.txt", out)

    counts, edges = report.b_histogram
    centers = 0.5 * (edges[:-1] + edges[1:])
    write_matrix(np.vstack([centers, counts.astype(float)]), out_dir / "b_hist.csv")

    k = min(3, min(y.shape) - 1) if min(y.shape) > 1 else 1
    scores, basis = metrics.pca_project(y, k)
    mean = y.mean(axis=1, keepdims=True)
    write_matrix(scores, out_dir / "pca_pixels.csv")
    write_matrix(basis.T @ (m_true - mean), out_dir / "pca_true_endmembers.csv")
    perm = report.permutation
    write_matrix(basis.T @ (m_hat[:, perm] - mean), out_dir / "pca_est_endmembers.csv")

    scene_path = truth_dir / "scene.txt"
    if scene_path.exists():
        scene = _read_keyvalues(scene_path)
        rows, cols = int(scene["rows"]), int(scene["cols"])
        if rows * cols == b_hat.size:
            aligned = a_hat[perm, :]
            write_matrix(b_hat.reshape(rows, cols), out_dir / "b_map.pmat")
            for j in range(aligned.shape[0]):
                write_matrix(
                    aligned[j].reshape(rows, cols), out_dir / f"a_map_{j + 1}.pmat"
                )
    return EXIT_OK


# ---------------------------------------------------------------------------
# diag
# ---------------------------------------------------------------------------

def _cmd_diag(args):
    traces = []
    names = None
    for path in args.chains:
        path = Path(path)
        traces.append(read_matrix(path))
        cols_path = path.parent / "trace_columns.txt"
        if names is None and cols_path.exists():
            names = cols_path.read_text().split()
    if not traces:
        raise DataError("no chain files given")
    n_cols = traces[0].shape[1]
    if any(t.shape[1] != n_cols for t in traces):
        raise DataError("chain trace files disagree on column count")
    if names is None or len(names) != n_cols:
        names = [f"col{j}" for j in range(n_cols)]
    report = {"n_chains": len(traces)}
    for j, name in enumerate(names):
        stacked = np.concatenate([t[:, j] for t in traces])
        report[f"{name}.mean"] = float(stacked.mean())
        report[f"{name}.std"] = float(stacked.std(ddof=1)) if stacked.size > 1 else 0.0
        if len(traces) > 1:
            n_min = min(t.shape[0] for t in traces)
            report[f"{name}.psrf"] = metrics.psrf([t[:n_min, j] for t in traces])
    for i, path in enumerate([Path(p) for p in args.chains]):
        accept_path = path.parent / "accept.pmat"
        diverged_path = path.parent / "diverged.pmat"
        if accept_path.exists():
            acc = read_matrix(accept_path)
            report[f"chain{i}.accept_z.mean"] = float(acc[:, 0].mean())
            report[f"chain{i}.accept_m.mean"] = float(acc[:, 1].mean())
        if diverged_path.exists():
            div = read_matrix(diverged_path)
            report[f"chain{i}.diverged_total"] = int(div.sum())
    lines = [f"{key}={value}" for key, value in report.items()]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="ppnmm", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p_synth = sub.add_parser("synth", help="generate a synthetic scene")
    p_synth.add_argument("--config", required=True)
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--threads", type=int, default=0)
    p_synth.set_defaults(func=_cmd_synth)

    p_unmix = sub.add_parser("unmix", help="run the sampler on an image")
    p_unmix.add_argument("--image", required=True)
    p_unmix.add_argument("--endmembers", type=int, required=True)
    p_unmix.add_argument("--prior-means", default=None)
    p_unmix.add_argument("--config", required=True)
    p_unmix.add_argument("--out-dir", required=True)
    p_unmix.add_argument("--seed", type=int, default=None)
    p_unmix.add_argument("--threads", type=int, default=0)
    p_unmix.add_argument("--grid", type=int, nargs=2, default=None,
                         metavar=("ROWS", "COLS"))
    p_unmix.set_defaults(func=_cmd_unmix)

    p_eval = sub.add_parser("eval", help="score results against ground truth")
    p_eval.add_argument("--truth-dir", required=True)
    p_eval.add_argument("--result-dir", required=True)
    p_eval.add_argument("--out-dir", default=None)
    p_eval.add_argument("--degrees", action="store_true")
    p_eval.set_defaults(func=_cmd_eval)

    p_diag = sub.add_parser("diag", help="convergence diagnostics from traces")
    p_diag.add_argument("--chains", nargs="+", required=True)
    p_diag.add_argument("--out", default=None)
    p_diag.set_defaults(func=_cmd_diag)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entry():
    sys.exit(main())
