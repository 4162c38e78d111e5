"""Command-line entry point.

Every experiment reads a JSON config (versioned schema, unknown keys
rejected), takes an explicit seed, and writes CSV/JSON artifacts plus a
RunRecord into its output directory only.  The output root defaults to the
PSPINLAB_OUT environment variable, then ./runs.
"""

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__, cascades, cavity, exact, orderparam, verify
from .params import ModelParams, PerturbationConfig
from .streams import RandomStreams

CONFIG_SCHEMA_VERSION = 1

ENV_OUT = "PSPINLAB_OUT"


def _atomic_write(path, data):
    """Write bytes (or text) via a temp file and rename, so readers never see
    a partial artifact."""
    mode = "wb" if isinstance(data, bytes) else "w"
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, doc):
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def load_config(path, allowed, required=()):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != CONFIG_SCHEMA_VERSION:
        raise SystemExit(
            f"config schema_version must be {CONFIG_SCHEMA_VERSION}"
        )
    unknown = set(doc) - set(allowed) - {"schema_version"}
    if unknown:
        raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    missing = set(required) - set(doc)
    if missing:
        raise SystemExit(f"missing config keys: {sorted(missing)}")
    return doc


class Run:
    """Output directory plus RunRecord bookkeeping for one experiment."""

    def __init__(self, args, command, config):
        root = args.out or os.environ.get(ENV_OUT) or "runs"
        self.dir = os.path.join(root, command)
        os.makedirs(self.dir, exist_ok=True)
        self.command = command
        self.config = config
        self.seed = args.seed
        self.workers = args.workers
        self.t0 = time.time()
        self.outputs = []

    def path(self, name):
        self.outputs.append(name)
        return os.path.join(self.dir, name)

    def finish(self, summary=None):
        record = {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "command": self.command,
            "package_version": __version__,
            "config": self.config,
            "seed": self.seed,
            "workers": self.workers,
            "wall_time_s": round(time.time() - self.t0, 3),
            "outputs": {
                name: _sha256(os.path.join(self.dir, name)) for name in self.outputs
            },
        }
        if summary is not None:
            record["summary"] = summary
        write_json(os.path.join(self.dir, "run_record.json"), record)
        print(f"wrote {len(self.outputs) + 1} files to {self.dir}")


def _model_params(cfg):
    return ModelParams(
        p=cfg.get("p", 2), lam=cfg.get("lam", 1.0),
        beta=cfg.get("beta", 1.0), h=cfg.get("h", 0.0),
    )


def cmd_exact(args):
    cfg = load_config(args.config, allowed={
        "task", "p", "lam", "beta", "h", "N", "reps", "k_max", "bin_width",
        "n_replicas", "test_power", "gamma", "x_weights",
    }, required=("task", "N"))
    run = Run(args, "exact", cfg)
    streams = RandomStreams(args.seed)
    params = _model_params(cfg)
    task = cfg["task"]
    N = cfg["N"]
    reps = cfg.get("reps", 50)
    if task == "free_energy":
        per_rep = [
            exact.log_partition(
                exact.sample_instance(params, N, streams=streams, index=r)) / N
            for r in range(reps)
        ]
        arr = np.asarray(per_rep)
        write_csv(run.path("free_energy.csv"), ["rep", "free_energy_density"],
                  list(enumerate(per_rep)))
        summary = {
            "free_energy_density": float(arr.mean()),
            "stderr": float(arr.std(ddof=1) / np.sqrt(reps)),
            "N": N, "reps": reps,
        }
    elif task == "overlaps":
        stats = exact.overlap_statistics(
            params, N, reps, streams,
            k_max=cfg.get("k_max", 4), bin_width=cfg.get("bin_width", 0.05),
        )
        write_csv(run.path("overlap_histogram.csv"), ["bin_left", "bin_right", "mass"],
                  zip(stats["bin_edges"][:-1], stats["bin_edges"][1:], stats["histogram"]))
        summary = {"moments": {str(k): v for k, v in stats["moments"].items()}}
    elif task == "gg":
        pert = PerturbationConfig(
            enabled1=True, gamma=cfg.get("gamma", 1.0 / 3.0),
            x_weights=tuple(cfg.get("x_weights", (1.0, 1.0, 1.0))),
        )
        res, se = exact.gg_residual(
            params, N, cfg.get("n_replicas", 2), cfg.get("test_power", 2),
            streams, reps, pert=pert,
        )
        summary = {"gg_residual": res, "stderr": se}
    else:
        raise SystemExit(f"unknown exact task {task!r}")
    write_json(run.path("summary.json"), summary)
    run.finish(summary)


def cmd_pd(args):
    cfg = load_config(args.config, allowed={
        "zeta", "K", "n_draws", "construction", "powers",
    }, required=("zeta",))
    run = Run(args, "pd", cfg)
    streams = RandomStreams(args.seed)
    powers = tuple(cfg.get("powers", (2, 3)))
    sums = cascades.pd_power_sums(
        cfg["zeta"], cfg.get("K", 10_000), cfg.get("n_draws", 1000), streams,
        construction=cfg.get("construction", "points"), powers=powers,
    )
    write_csv(run.path("power_sums.csv"),
              [f"sum_V^{r}" for r in powers], sums.tolist())
    M = len(sums)
    summary = {
        "zeta": cfg["zeta"],
        "reference_1_minus_zeta": 1.0 - cfg["zeta"],
        "estimates": {
            f"E_sum_V^{r}": [float(sums[:, j].mean()),
                             float(sums[:, j].std(ddof=1) / np.sqrt(M))]
            for j, r in enumerate(powers)
        },
    }
    write_json(run.path("summary.json"), summary)
    run.finish(summary)


def _load_order_parameter(cfg):
    if "population_csv" in cfg:
        return orderparam.load_population(cfg["population_csv"], cfg["sidecar_json"])
    return orderparam.ClosedFormOrderParameter(
        zeta=cfg.get("zeta", 0.5), kernel=cfg["kernel"],
        kernel_params=cfg.get("kernel_params", {}),
    )


_OP_KEYS = {"kernel", "kernel_params", "zeta", "population_csv", "sidecar_json"}


def cmd_orderparam(args):
    cfg = load_config(args.config, allowed=_OP_KEYS | {
        "n_states", "n_sites", "n_reps", "u_moment",
    })
    run = Run(args, "orderparam", cfg)
    op = _load_order_parameter(cfg)
    rng = RandomStreams(args.seed).stream("cli.orderparam")
    rep = orderparam.overlap_pair(
        op, cfg.get("n_states", 8), cfg.get("n_sites", 500), rng,
        n_reps=cfg.get("n_reps", 64),
    )
    summary = {
        "q_low": rep.q_low, "q_high": rep.q_high,
        "se_low": rep.se_low, "se_high": rep.se_high,
        "two_value_violation": rep.two_value_violation,
        "two_value_flagged": rep.flagged,
        "u_dependence_residual": orderparam.u_dependence_residual(
            op, cfg.get("u_moment", 1), rng),
    }
    if not op.sample_based:
        ql, qh = orderparam.overlap_quadrature(op)
        summary["q_low_quadrature"] = ql
        summary["q_high_quadrature"] = qh
        _atomic_write(run.path("order_parameter.json"), op.to_json())
    write_json(run.path("summary.json"), summary)
    run.finish(summary)


def cmd_popdyn(args):
    cfg = load_config(args.config, allowed={
        "p", "lam", "beta", "h", "zeta", "s_out", "s_in", "max_sweeps",
        "min_sweeps", "damping", "tol", "window", "resampling",
    }, required=("zeta",))
    run = Run(args, "popdyn", cfg)
    params = _model_params(cfg)
    config = cavity.PopDynConfig(
        s_out=cfg.get("s_out", 1000), s_in=cfg.get("s_in", 1000),
        max_sweeps=cfg.get("max_sweeps", 200), min_sweeps=cfg.get("min_sweeps", 20),
        damping=cfg.get("damping", 0.0), tol=cfg.get("tol", 5e-3),
        window=cfg.get("window", 5), resampling=cfg.get("resampling", "multinomial"),
    )
    result = cavity.popdyn_solve(
        params, cfg["zeta"], config, RandomStreams(args.seed), workers=args.workers,
    )
    orderparam.save_population(
        result.op, run.path("population.csv"), run.path("population.json"),
        extra={"seed": args.seed},
    )
    keys = list(result.trajectory[0])
    write_csv(run.path("trajectory.csv"), ["sweep"] + keys,
              [[i] + [t[k] for k in keys] for i, t in enumerate(result.trajectory)])
    q_low, q_high, se_low, se_high = result.op.q_values()
    summary = {
        "converged": result.converged, "n_sweeps": result.n_sweeps,
        "q_low": q_low, "q_high": q_high, "se_low": se_low, "se_high": se_high,
    }
    write_json(run.path("summary.json"), summary)
    run.finish(summary)
    if not result.converged:
        sys.exit(1)


def cmd_cavity_check(args):
    cfg = load_config(args.config, allowed=_OP_KEYS | {
        "task", "p", "lam", "beta", "h", "N", "reps", "n", "sets", "n_reps",
    }, required=("task",))
    run = Run(args, "cavity-check", cfg)
    params = _model_params(cfg)
    streams = RandomStreams(args.seed)
    task = cfg["task"]
    if task == "finite_n":
        query = exact.MomentQuery(
            n=cfg.get("n", 1),
            sets=tuple(tuple(s) for s in cfg.get("sets", [[1, 2]])),
        )
        summary = exact.cavity_residual_finite_N(
            params, cfg["N"], query, streams, cfg.get("reps", 200))
    elif task == "fixed_point":
        op = _load_order_parameter(cfg)
        zeta = op.zeta
        umr = cavity.update_moment_residual(op, params, zeta, streams,
                                      n_reps=cfg.get("n_reps", 400))
        ev = cavity.eta_variance_residual(op, params, zeta, streams)
        mean, se, ratio = cavity.decorrelation_residual(op, params, zeta, streams)
        summary = {
            "update_moment_max_ratio": umr.max_ratio,
            "update_moment_per_statistic": {k: list(v) for k, v in umr.per_statistic.items()},
            "eta_variance_residual": ev,
            "decorrelation": {"mean": mean, "stderr": se, "ratio": ratio},
        }
    else:
        raise SystemExit(f"unknown cavity-check task {task!r}")
    write_json(run.path("summary.json"), summary)
    run.finish(summary)


def cmd_symmetry_test(args):
    cfg = load_config(args.config, allowed=_OP_KEYS | {"m_max", "n_samples"})
    run = Run(args, "symmetry-test", cfg)
    op = _load_order_parameter(cfg)
    rng = RandomStreams(args.seed).stream("cli.symmetry")
    rep = orderparam.symmetry_statistic(
        op, cfg.get("m_max", 5), rng, n_samples=cfg.get("n_samples", 4000))
    summary = {
        "statistic": rep.statistic,
        "stderr": rep.stderr,
        "per_moment": {str(m): list(v) for m, v in rep.per_m.items()},
        "symmetric": rep.statistic <= 3 * rep.stderr + 1e-9,
    }
    write_json(run.path("summary.json"), summary)
    run.finish(summary)


def cmd_verify(args):
    run = Run(args, "verify", {"level": args.level})
    results = verify.verify_suite(level=args.level, seed=args.seed,
                                  workers=args.workers)
    for r in results:
        print(r.line())
    summary = {r.name: {"passed": r.passed, "detail": r.detail} for r in results}
    write_json(run.path("report.json"), summary)
    run.finish({"passed": all(r.passed for r in results)})
    if not all(r.passed for r in results):
        sys.exit(1)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pspinlab",
        description="numerical laboratory for the diluted p-spin model",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("exact", cmd_exact, "exact small-N enumeration experiments"),
        ("pd", cmd_pd, "Poisson-Dirichlet weight statistics"),
        ("orderparam", cmd_orderparam, "order-parameter overlap estimates"),
        ("popdyn", cmd_popdyn, "population dynamics solver"),
        ("cavity-check", cmd_cavity_check, "cavity-equation residuals"),
        ("symmetry-test", cmd_symmetry_test, "symmetry statistic of an order parameter"),
        ("verify", cmd_verify, "acceptance battery"),
    ]
    for name, fn, help_text in specs:
        sp = sub.add_parser(name, help=help_text)
        if name == "verify":
            sp.add_argument("--level", choices=("quick", "full"), default="quick")
        else:
            sp.add_argument("--config", required=True, help="JSON config path")
        sp.add_argument("--seed", type=int, default=0, help="base RNG seed (u64)")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", default=None,
                        help=f"output root (default ${ENV_OUT} or ./runs)")
        sp.set_defaults(fn=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.fn(args)


if __name__ == "__main__":
    main()
