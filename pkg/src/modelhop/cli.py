"""Command-line entry point: ``modelhop generate | sample | summarize | oracle | benchmark``.

Exit codes: 0 ok, 2 usage, 3 I/O or bad input data, 4 numerical failure,
5 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import benchgen, oracle
from .adaptation import write_scores_csv
from .chainio import ChainWriter, read_chain
from .errors import DataError, NumericalError
from .modelspace import InclusionVector
from .samplers import KINDS, PmtmConfig, run_chain
from .scorer import Hyperparams, standardize
from .summaries import summarize, table_rows, write_metrics_csv, write_summary_json

EXIT_USAGE, EXIT_IO, EXIT_NUMERIC, EXIT_VERIFY = 2, 3, 4, 5


@dataclass
class RunConfig:
    """Everything that determines a chain, serializable as one JSON document."""

    sampler: str = "ada-pmtm"
    iters: int = 1000
    seed: int = 0
    workers: int = 1
    g: float | str = "n"
    u: float | None = None
    v: float | None = None
    pmtm: PmtmConfig = field(default_factory=PmtmConfig)
    data_dir: str | None = None
    x_path: str | None = None
    y_path: str | None = None
    out: str = "chain.jsonl"
    stop_at_truth: str | None = None
    benchmark: bool = False
    time_budget_secs: float | None = None

    # fields that affect how a run executes but never what it produces
    EXECUTION_ONLY = ("workers", "out")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if "pmtm" in d and isinstance(d["pmtm"], dict):
            d["pmtm"] = PmtmConfig.from_dict(d["pmtm"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def echo(self) -> dict:
        d = self.to_dict()
        for k in self.EXECUTION_ONLY:
            d.pop(k)
        return d

    def hyperparams(self, n: int, p: int) -> Hyperparams:
        return resolve_hyperparams(self.g, self.u, self.v, n, p)


def resolve_hyperparams(g, u, v, n: int, p: int) -> Hyperparams:
    """``g="n"`` means the sample count; ``u``/``v`` default to ``d* = min(10, p/2)``."""
    g_val = float(n) if g in (None, "n") else float(g)
    d_star = min(10.0, p / 2)
    u_val = d_star if u is None else float(u)
    v_val = p - u_val if v is None else float(v)
    return Hyperparams(g_val, u_val, v_val)


def default_workers() -> int:
    return int(os.environ.get("MODELHOP_WORKERS", "1"))


def _load_data(data_dir=None, x_path=None, y_path=None):
    if data_dir:
        return benchgen.read_instance(data_dir)
    if not (x_path and y_path):
        raise ValueError("give --data-dir or both --x and --y")
    X = benchgen.read_matrix(x_path)
    y = np.loadtxt(y_path, delimiter=",", ndmin=1)
    return benchgen.Dataset(X, y), None


# -------------------------------------------------------------------------
# generate

def cmd_generate(args) -> int:
    rho = args.rho
    if args.design == "group":
        rho = args.rho_level
    n = args.n if args.n is not None else (49 if args.design == "eval" else 100)
    spec = benchgen.DesignSpec(args.design, n, args.p, rho, args.noise_sd, args.seed)
    inst = benchgen.generate(spec)
    digest = benchgen.write_instance(args.out_dir, inst)
    print(f"wrote {args.out_dir}: n={inst.data.n} p={inst.data.p} support={list(inst.true_gamma.active)}")
    print(f"sha256 {digest}")
    return 0


# -------------------------------------------------------------------------
# sample

_SAMPLE_FLAGS = {"sampler": "sampler", "iters": "iters", "seed": "seed", "workers": "workers",
                 "g": "g", "u": "u", "v": "v", "data_dir": "data_dir", "x": "x_path",
                 "y": "y_path", "out": "out", "stop_at_truth": "stop_at_truth",
                 "time_budget_secs": "time_budget_secs"}
_PMTM_FLAGS = {"M": "M", "burnin_frac": "burnin_frac", "zeta": "zeta",
               "remove_weight": "remove_weight", "light_tail_dstar": "light_tail_dstar"}


def build_run_config(args) -> RunConfig:
    """Config file (if any) overridden by every flag given on the command line."""
    if args.config:
        with open(args.config) as fh:
            cfg = RunConfig.from_json(fh.read())
    else:
        cfg = RunConfig(workers=default_workers())
    for flag, attr in _SAMPLE_FLAGS.items():
        val = getattr(args, flag)
        if val is not None:
            setattr(cfg, attr, val)
    if args.benchmark:
        cfg.benchmark = True
    pm = cfg.pmtm.to_dict()
    for flag, key in _PMTM_FLAGS.items():
        val = getattr(args, flag)
        if val is not None:
            pm[key] = val
    if args.freeze:
        pm["freeze"] = True
    rule = dict(pm["corr_rule"])
    if args.quantile is not None:
        rule.update(kind="quantile", q=args.quantile)
    if args.epsilon is not None:
        rule.update(kind="fixed", epsilon=args.epsilon)
    pm["corr_rule"] = rule
    pm["adaptive"] = cfg.sampler == "ada-pmtm"
    cfg.pmtm = PmtmConfig.from_dict(pm)
    if cfg.g != "n":
        cfg.g = float(cfg.g)
    return cfg


def cmd_sample(args) -> int:
    cfg = build_run_config(args)
    if args.save_config:
        with open(args.save_config, "w") as fh:
            fh.write(cfg.to_json())
    raw, _ = _load_data(cfg.data_dir, cfg.x_path, cfg.y_path)
    data = standardize(raw)
    hp = cfg.hyperparams(data.n, data.p)
    target = None
    if cfg.stop_at_truth:
        beta = benchgen.read_truth(cfg.stop_at_truth, data.p)
        target = InclusionVector.from_indices(data.p, np.flatnonzero(beta))
    writer = ChainWriter(cfg.out)
    t0 = time.perf_counter()
    try:
        summary = run_chain(cfg.sampler, data, hp, cfg.pmtm, cfg.iters, cfg.seed, writer,
                            workers=cfg.workers, benchmark=cfg.benchmark, target=target,
                            time_budget=cfg.time_budget_secs)
        writer.finish({"seed": cfg.seed, "config": cfg.echo(),
                       "hyperparams": dataclasses.asdict(hp), **summary.manifest()})
    finally:
        writer.close()
    wall = time.perf_counter() - t0
    with open(cfg.out + ".timing.json", "w") as fh:
        json.dump({"wallSeconds": wall, "workers": cfg.workers}, fh)
    if args.scores_csv:
        write_scores_csv(args.scores_csv, summary.v)
    msg = (f"{cfg.sampler}: {summary.iters_run} iterations, {summary.total_evals} evaluations, "
           f"accept rate {summary.accept_rate:.3f}, {wall:.2f}s")
    if target is not None:
        msg += f", first hit at evaluation {summary.hit_evals}" if summary.hit_evals is not None else ", target not reached"
    print(msg, file=sys.stderr)
    return 0


# -------------------------------------------------------------------------
# summarize

def cmd_summarize(args) -> int:
    records, manifest = read_chain(args.chain)
    conf = manifest.get("config", {})
    raw, truth = _load_data(args.data_dir or conf.get("data_dir"), args.x or conf.get("x_path"),
                            args.y or conf.get("y_path"))
    if args.truth:
        truth = benchgen.read_truth(args.truth, raw.p)
    data = standardize(raw)
    hpd = manifest.get("hyperparams")
    if args.g is not None or args.u is not None or args.v is not None or hpd is None:
        hp = resolve_hyperparams(args.g if args.g is not None else conf.get("g", "n"),
                                 args.u, args.v, data.n, data.p)
    else:
        hp = Hyperparams(**hpd)
    burnin = args.burnin_frac
    if burnin is None:
        burnin = conf.get("pmtm", {}).get("burnin_frac", 0.2)
    summary = summarize(records, burnin, data, hp)
    os.makedirs(args.out_dir, exist_ok=True)
    metrics = table_rows(summary, data, hp, truth) if truth is not None else None
    write_summary_json(os.path.join(args.out_dir, "summary.json"), summary, data, metrics)
    print(f"post-burnin records: {summary.n_post_burnin}; visited models: {len(summary.visited)}")
    print(f"HPM: {list(summary.hpm.active)}  MPM: {list(summary.mpm.active)}")
    if metrics is not None:
        write_metrics_csv(os.path.join(args.out_dir, "metrics.csv"), metrics)
        print(f"{'':5s}{'size':>6s}{'FN':>5s}{'FP':>5s}{'FDR':>8s}{'L2':>10s}")
        for name, m in metrics.items():
            print(f"{name:5s}{m.model_size:6d}{m.fn:5d}{m.fp:5d}{m.fdr:8.4f}{m.l2:10.5f}")
    return 0


# -------------------------------------------------------------------------
# oracle

def cmd_oracle(args) -> int:
    accept = oracle.corrupted_log_accept if args.corrupt_acceptance else oracle.log_accept
    kinds = args.samplers or ["prns", "dmtm", "pmtm", "gibbs-rs", "gibbs-ss"]
    results = []

    def instance(p):
        inst = benchgen.gen_compound_symmetry(args.n, p, 0.3, args.seed) if p >= 5 else None
        if inst is None:
            rng = np.random.default_rng(args.seed)
            X = rng.standard_normal((args.n, p))
            y = X[:, 0] + rng.standard_normal(args.n)
            raw = benchgen.Dataset(X, y)
        else:
            raw = inst.data
        data = standardize(raw)
        return data, resolve_hyperparams("n", None, None, data.n, data.p)

    data, hp = instance(args.p)
    post = oracle.enumerate_posterior(data, hp)
    results.append(oracle.PropertyResult(
        "incremental vs fresh scoring", oracle.incremental_scoring_violation(data, hp, seed=args.seed), 1e-8))
    v_rand = np.random.default_rng(args.seed + 1).uniform(1.0, 4.0, data.p)
    for kind in kinds:
        if kind.startswith("gibbs"):
            gdata, ghp = instance(args.gibbs_p)
            gpost = oracle.enumerate_posterior(gdata, ghp)
            results += oracle.check_kernel(kind, gpost, accept=accept)
            continue
        results += oracle.check_kernel(kind, post, accept=accept)
        if kind in ("dmtm", "pmtm"):
            cfg = PmtmConfig(remove_weight="inverse", M=max(1.0, data.p / 2))
            for r in oracle.check_kernel(kind, post, cfg, v_rand, accept=accept):
                r.name += " [random v, remove 1/v]"
                results.append(r)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} propert{'y' if len(failed) == 1 else 'ies'} failed", file=sys.stderr)
        return EXIT_VERIFY
    return 0


# -------------------------------------------------------------------------
# benchmark

def first_hit_evals(kind: str, p: int, seed: int, iters: int, max_evals: int, workers: int = 1):
    """Evaluations spent before sampler ``kind`` first visits the true model of
    the benchmark instance, or ``None`` if it does not within the budget."""
    inst = benchgen.gen_eval_benchmark(p, seed)
    data = standardize(inst.data)
    hp = Hyperparams(float(data.n), 4.0, p - 4.0)
    cfg = PmtmConfig(M=max(1.0, p / 10), adaptive=kind == "ada-pmtm")
    res = run_chain(kind, data, hp, cfg, iters, seed, workers=workers, benchmark=True,
                    target=inst.true_gamma, max_evals=max_evals)
    return res.hit_evals


def cmd_benchmark(args) -> int:
    kinds = args.samplers or list(KINDS)
    rows = []
    for p in args.p:
        for kind in kinds:
            hits = []
            for s in range(args.seeds):
                h = first_hit_evals(kind, p, args.seed + s, args.iters, args.max_evals, args.workers)
                hits.append(math.inf if h is None else h)
                rows.append((p, kind, args.seed + s, h))
            med = float(np.median(hits))
            shown = f">{args.max_evals}" if math.isinf(med) else f"{med:.0f}"
            print(f"p={p:4d} {kind:9s} median first-hit evaluations {shown} "
                  f"({sum(math.isinf(h) for h in hits)}/{len(hits)} censored)")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("p,sampler,seed,first_hit_evals\n")
            for p, kind, s, h in rows:
                fh.write(f"{p},{kind},{s},{'' if h is None else h}\n")
    return 0


# -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="modelhop", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic instance as CSV")
    g.add_argument("--design", choices=benchgen.DESIGNS, required=True)
    g.add_argument("--n", type=int)
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--rho", type=float)
    g.add_argument("--rho-level", choices=sorted(benchgen.GROUP_PRESETS), default="moderate")
    g.add_argument("--noise-sd", type=float)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("sample", help="run one chain and write JSON-lines records")
    s.add_argument("--config", help="RunConfig JSON; flags override its values")
    s.add_argument("--save-config", help="write the resolved RunConfig here")
    s.add_argument("--sampler", choices=KINDS)
    s.add_argument("--iters", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--data-dir")
    s.add_argument("--x")
    s.add_argument("--y")
    s.add_argument("--out")
    s.add_argument("--g", type=_g_value)
    s.add_argument("--u", type=float)
    s.add_argument("--v", type=float)
    s.add_argument("--M", type=float)
    s.add_argument("--burnin-frac", type=float)
    s.add_argument("--zeta", type=float)
    s.add_argument("--remove-weight", choices=("unit", "inverse"))
    s.add_argument("--light-tail-dstar", type=int)
    s.add_argument("--quantile", type=float, help="threshold |corr| at this quantile")
    s.add_argument("--epsilon", type=float, help="fixed |corr| threshold instead of a quantile")
    s.add_argument("--freeze", action="store_true", help="keep importance scores fixed")
    s.add_argument("--stop-at-truth", help="truth.csv; stop at the first visit of its support")
    s.add_argument("--benchmark", action="store_true", help="disable the score cache")
    s.add_argument("--time-budget-secs", type=float)
    s.add_argument("--scores-csv", help="write final importance scores here")
    s.set_defaults(func=cmd_sample)

    m = sub.add_parser("summarize", help="posterior summary and metrics of a chain")
    m.add_argument("--chain", required=True)
    m.add_argument("--data-dir")
    m.add_argument("--x")
    m.add_argument("--y")
    m.add_argument("--truth")
    m.add_argument("--burnin-frac", type=float)
    m.add_argument("--g", type=_g_value)
    m.add_argument("--u", type=float)
    m.add_argument("--v", type=float)
    m.add_argument("--out-dir", default=".")
    m.set_defaults(func=cmd_summarize)

    o = sub.add_parser("oracle", help="exact reversibility/stationarity checks on a small instance")
    o.add_argument("--p", type=int, default=5)
    o.add_argument("--gibbs-p", type=int, default=10)
    o.add_argument("--n", type=int, default=30)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--samplers", nargs="+", choices=KINDS)
    o.add_argument("--corrupt-acceptance", action="store_true",
                   help="negative control: drop the proposal correction from the acceptance ratio")
    o.set_defaults(func=cmd_oracle)

    b = sub.add_parser("benchmark", help="evaluations needed to first reach the true model")
    b.add_argument("--p", type=int, nargs="+", default=[50, 100, 200])
    b.add_argument("--seeds", type=int, default=20)
    b.add_argument("--seed", type=int, default=0, help="first seed")
    b.add_argument("--samplers", nargs="+", choices=KINDS)
    b.add_argument("--iters", type=int, default=5000)
    b.add_argument("--max-evals", type=int, default=300_000)
    b.add_argument("--workers", type=int, default=None)
    b.add_argument("--out")
    b.set_defaults(func=cmd_benchmark)
    return ap


def _g_value(text: str):
    if text == "n":
        return "n"
    val = float(text)
    if not val > 0:
        raise argparse.ArgumentTypeError("g must be positive or 'n'")
    return val


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "workers", 0) is None and args.command == "benchmark":
        args.workers = default_workers()
    try:
        return args.func(args)
    except (DataError, UnicodeDecodeError) as exc:
        print(f"error: bad input data: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
