"""``lmnscatter`` command line: data generation, training, inference and sweeps.

Every option can also come from a JSON file given with ``--config``; explicit
flags win over the file, which wins over built-in defaults.  Exit codes are
0 on success, 1 for usage errors, 2 for invalid input and 3 for numerical
failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import cli_io
from .baselines import ba_tikhonov, tune_tikhonov
from .datasets import Dataset, synthesize
from .evaluation import noise_seed, noise_sweep, render_map
from .forward import ScatteredData, SolverError, add_noise
from .linop import BornOperator
from .lmn import ConvergenceError, LmnModel, lmn_infer
from .scene import CHI_MAX, Scenario
from .train import TrainConfig, train

log = logging.getLogger("lmnscatter")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# defaults per subcommand; argparse itself defaults everything to None so the
# three configuration layers can be merged afterwards
SCENARIO_DEFAULTS = {"frequency": 400e6, "extent": 2.0, "forward_n": 64, "inversion_n": 30,
                     "tx_count": 16, "tx_diameter": 12.0, "rx_count": 32, "rx_diameter": 6.0,
                     "noise_level": 0.0}
TRAIN_DEFAULTS = {"epochs": 100, "batch_size": 8, "lr": 1e-3, "unroll": 5, "depth": 5, "channels": 64,
                  "use_bn": True, "lam_init": 0.05, "checkpoint_every": 10}
DEFAULTS = {
    "gen-data": {**SCENARIO_DEFAULTS, "seed": 0, "count": 240, "kind": "glyph", "idx_images": None,
                 "workers": 1, "out": None},
    "train": {**TRAIN_DEFAULTS, "seed": 0, "data": None, "out": None, "train_range": None, "resume": None},
    "infer": {"seed": 0, "model": None, "data": None, "index": 0, "noise_level": 0.0, "out": None},
    "sweep": {"seed": 0, "model": None, "data": None, "test_range": None, "validation_range": None,
              "levels": "0,0.1,0.15,0.2", "baseline_lambda": 1e-2, "timing": "on", "out": None},
    "selftest": {"seed": 0},
    "austria": {**SCENARIO_DEFAULTS, **TRAIN_DEFAULTS, "seed": 0, "train_count": 200,
                "validation_count": 20, "realizations": 20, "levels": "0,0.1,0.2,0.3", "model": None,
                "workers": 1, "timing": "on", "out": None},
}


def _scenario_args(p):
    g = p.add_argument_group("scenario")
    g.add_argument("--frequency", type=float)
    g.add_argument("--extent", type=float, help="side of the square domain in meters")
    g.add_argument("--forward-n", type=int)
    g.add_argument("--inversion-n", type=int)
    g.add_argument("--tx-count", type=int)
    g.add_argument("--tx-diameter", type=float)
    g.add_argument("--rx-count", type=int)
    g.add_argument("--rx-diameter", type=float)
    g.add_argument("--noise-level", type=float)


def _train_args(p):
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--unroll", type=int, help="number of unrolled iterations K")
    g.add_argument("--depth", type=int, help="denoiser depth D")
    g.add_argument("--channels", type=int)
    g.add_argument("--bn", dest="use_bn", action="store_true", default=None)
    g.add_argument("--no-bn", dest="use_bn", action="store_false")
    g.add_argument("--lam-init", type=float)
    g.add_argument("--checkpoint-every", type=int)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with option values")
    common.add_argument("--seed", type=int)
    common.add_argument("--log-level", default="WARNING")

    parser = _Parser(prog="lmnscatter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-data", parents=[common], help="synthesize a dataset")
    _scenario_args(p)
    p.add_argument("--count", type=int)
    p.add_argument("--kind", choices=["glyph", "shapes", "austria"])
    p.add_argument("--idx-images", help="IDX image file used instead of procedural glyphs")
    p.add_argument("--workers", type=int)
    p.add_argument("--out")

    p = sub.add_parser("train", parents=[common], help="train the unrolled network")
    _train_args(p)
    p.add_argument("--data")
    p.add_argument("--train-range", help="sample slice START:STOP (default: all)")
    p.add_argument("--resume", help="checkpoint directory to continue from")
    p.add_argument("--out")

    p = sub.add_parser("infer", parents=[common], help="reconstruct one sample")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--index", type=int)
    p.add_argument("--noise-level", type=float)
    p.add_argument("--out")

    p = sub.add_parser("sweep", parents=[common], help="noise sweep against the Born baseline")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--test-range")
    p.add_argument("--validation-range", help="slice used to tune the baseline weight")
    p.add_argument("--levels", help="comma-separated noise levels")
    p.add_argument("--baseline-lambda", type=float, help="Tikhonov weight relative to ||Re(A^H A)||")
    p.add_argument("--timing", choices=["on", "off"])
    p.add_argument("--out")

    sub.add_parser("selftest", parents=[common], help="run built-in numerical checks")

    p = sub.add_parser("austria", parents=[common], help="end-to-end two-disk-and-ring scenario")
    _scenario_args(p)
    _train_args(p)
    p.add_argument("--train-count", type=int)
    p.add_argument("--validation-count", type=int)
    p.add_argument("--realizations", type=int, help="noise draws per level")
    p.add_argument("--levels")
    p.add_argument("--model", help="reuse a trained checkpoint instead of training")
    p.add_argument("--workers", type=int)
    p.add_argument("--timing", choices=["on", "off"])
    p.add_argument("--out")
    return parser


def resolve_options(ns: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS[ns.command])
    if ns.config:
        try:
            cfg = json.loads(Path(ns.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config {ns.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = set(cfg) - set(opts)
        if unknown:
            raise ValueError(f"unknown config keys for {ns.command}: {sorted(unknown)}")
        opts.update(cfg)
    for key, val in vars(ns).items():
        if key in opts and val is not None:
            opts[key] = val
    return opts


def _require(opts, *keys):
    for key in keys:
        if opts.get(key) is None:
            raise ValueError(f"missing required option --{key.replace('_', '-')}")


def _scenario(opts) -> Scenario:
    return Scenario.from_dict({k: opts[k] for k in SCENARIO_DEFAULTS} | {"seed": opts["seed"]})


def _slice(spec, n):
    if spec is None:
        return np.arange(n)
    try:
        lo, hi = (int(v) if v else None for v in str(spec).split(":"))
    except ValueError as exc:
        raise ValueError(f"bad range {spec!r}, expected START:STOP") from exc
    idx = np.arange(n)[slice(lo, hi)]
    if idx.size == 0:
        raise ValueError(f"range {spec!r} selects no samples")
    return idx


def _levels(spec):
    try:
        vals = [float(v) for v in str(spec).split(",") if v.strip()]
    except ValueError as exc:
        raise ValueError(f"bad noise levels {spec!r}") from exc
    if not vals or any(v < 0 for v in vals):
        raise ValueError("noise levels must be a non-empty list of nonnegative numbers")
    return vals


def _write(path: Path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        path.write_text(data, encoding="utf-8")
    else:
        path.write_bytes(data)


def _png(chi):
    return render_map(np.asarray(chi) + 1.0, 1.0, 1.0 + CHI_MAX)


# ------------------------------------------------------------------ commands

def _synth_chunk(args):
    scenario, count, seed, kind, idx_images, start = args
    return synthesize(scenario, count, seed, kind, idx_images, start=start)


def generate(scenario, count, seed, kind, idx_images=None, workers=1) -> Dataset:
    """Synthesize ``count`` samples; chunks across workers concatenate to the serial result."""
    if count < 0:
        raise ValueError("sample count must be nonnegative")
    if workers <= 1 or count < 2:
        return synthesize(scenario, count, seed, kind, idx_images)
    bounds = np.linspace(0, count, min(workers, count) + 1).astype(int)
    jobs = [(scenario, int(b - a), seed, kind, idx_images, int(a)) for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(len(jobs)) as pool:
        parts = list(pool.map(_synth_chunk, jobs))
    return Dataset(scenario, np.concatenate([p.labels for p in parts]), np.concatenate([p.data for p in parts]),
                   np.concatenate([p.eps_r for p in parts]), seed, kind)


def cmd_gen_data(opts):
    _require(opts, "out")
    if opts["noise_level"] < 0:
        raise ValueError(f"noise level must be nonnegative, got {opts['noise_level']}")
    sc = _scenario(opts)
    ds = generate(sc, int(opts["count"]), opts["seed"], opts["kind"], opts["idx_images"], int(opts["workers"]))
    cli_io.save_dataset(opts["out"], ds)
    print(f"wrote {len(ds)} samples to {opts['out']}")


def _train_config(opts) -> TrainConfig:
    return TrainConfig(epochs=opts["epochs"], batch_size=opts["batch_size"], lr=opts["lr"], seed=opts["seed"],
                       unroll=opts["unroll"], depth=opts["depth"], channels=opts["channels"],
                       use_bn=bool(opts["use_bn"]), lam_init=opts["lam_init"],
                       checkpoint_every=opts["checkpoint_every"])


def run_training(ds: Dataset, idx, cfg: TrainConfig, out: Path, resume=None):
    """Train on ``ds[idx]`` writing ``out/checkpoints/epoch_XXXX``, ``out/model`` and ``out/loss.csv``."""
    A = BornOperator.for_scenario(ds.scenario)
    if resume is not None:
        model, state, meta, _ = cli_io.load_model(resume)
        start, history = meta["epoch"], meta["loss_history"]
    else:
        model = LmnModel.create(cfg.depth, cfg.channels, cfg.unroll, cfg.use_bn, cfg.seed, cfg.lam_init)
        state, start, history = None, 0, []

    def checkpoint(epoch, m, st, hist):
        cli_io.save_model(out / "checkpoints" / f"epoch_{epoch:04d}", m, st, cfg, epoch, hist, ds.scenario)

    model, history, state = train(model, A, ds.data_matrix(idx), ds.label_matrix(idx), cfg, state,
                                  checkpoint, start, history)
    cli_io.save_model(out / "model", model, state, cfg, cfg.epochs, history, ds.scenario)
    rows = "epoch,loss\n" + "".join(f"{e + 1},{v:.10g}\n" for e, v in enumerate(history))
    _write(out / "loss.csv", rows)
    return model


def cmd_train(opts):
    _require(opts, "data", "out")
    ds = cli_io.load_dataset(opts["data"])
    idx = _slice(opts["train_range"], len(ds))
    run_training(ds, idx, _train_config(opts), Path(opts["out"]), opts["resume"])
    print(f"model written to {Path(opts['out']) / 'model'}")


def _load_model_for(opts, ds):
    model, _, _, scen = cli_io.load_model(opts["model"])
    if scen and Scenario.from_dict(scen).inversion_grid != ds.scenario.inversion_grid:
        raise ValueError("model was trained on a different inversion grid")
    return model


def cmd_infer(opts):
    _require(opts, "model", "data", "out")
    ds = cli_io.load_dataset(opts["data"])
    if not 0 <= opts["index"] < len(ds):
        raise ValueError(f"index {opts['index']} outside dataset of {len(ds)} samples")
    model = _load_model_for(opts, ds)
    A = BornOperator.for_scenario(ds.scenario)
    noisy = add_noise(ScatteredData(ds.data[opts["index"]]), opts["noise_level"],
                      [opts["seed"], opts["index"]])
    rec, _ = lmn_infer(model, A, noisy.vector)
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "reconstruction.npy", rec.values)
    _write(out / "reconstruction.png", _png(rec.values))
    _write(out / "truth.png", _png(ds.labels[opts["index"]]))
    print(f"reconstruction written to {out}")


def _methods(model, A, lam):
    return {"LMN": lambda y: lmn_infer(model, A, y)[0].values,
            "BA": lambda y: ba_tikhonov(A, y, lam).values}


def _baseline_lambda(A, ds, opts):
    if opts.get("validation_range") is None:
        return float(opts["baseline_lambda"]) * A.normal_norm
    vidx = _slice(opts["validation_range"], len(ds))
    lam, _ = tune_tikhonov(A, [ds.data[i].T.ravel() for i in vidx], [ds.labels[i] for i in vidx])
    return lam


def _write_sweep(out: Path, report, truths, clean, methods, levels, seed, timing):
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "sweep.csv", report.to_csv(timing=timing))
    if timing and report.setup_time_s:
        _write(out / "setup_time.json", json.dumps(report.setup_time_s, indent=1, sort_keys=True) + "\n")
    _write(out / "truth.png", _png(truths[0]))
    for j, level in enumerate(levels):
        noisy = add_noise(clean[0], level, noise_seed(seed, 0, j))
        for name, fn in methods.items():
            _write(out / f"{name}_{level:g}.png", _png(fn(noisy.vector)))


def cmd_sweep(opts):
    _require(opts, "model", "data", "out")
    ds = cli_io.load_dataset(opts["data"])
    model = _load_model_for(opts, ds)
    levels = _levels(opts["levels"])
    t0 = time.perf_counter()
    A = BornOperator.for_scenario(ds.scenario)
    _ = A.normal_matrix
    setup = {"operator_s": time.perf_counter() - t0}
    t0 = time.perf_counter()
    lam = _baseline_lambda(A, ds, opts)
    setup["baseline_tuning_s"] = time.perf_counter() - t0
    idx = _slice(opts["test_range"], len(ds))
    clean = [ScatteredData(ds.data[i]) for i in idx]
    truths = [ds.labels[i] for i in idx]
    methods = _methods(model, A, lam)
    report = noise_sweep(methods, clean, truths, levels, opts["seed"], ds.scenario.to_dict())
    report.setup_time_s = setup
    _write_sweep(Path(opts["out"]), report, truths, clean, methods, levels, opts["seed"], opts["timing"] == "on")
    print(report.to_csv(timing=opts["timing"] == "on"), end="")


def cmd_austria(opts):
    """Train on disks and rings (or reuse ``--model``), then test on the Austria profile."""
    _require(opts, "out")
    out = Path(opts["out"])
    sc = _scenario(opts)
    seed = opts["seed"]
    levels = _levels(opts["levels"])
    n_val = int(opts["validation_count"])
    shapes = generate(sc, int(opts["train_count"]) + n_val, seed, "shapes", workers=int(opts["workers"]))
    cli_io.save_dataset(out / "train_data", shapes)
    n_train = len(shapes) - n_val
    if opts["model"] is not None:
        model = _load_model_for(opts, shapes)
    else:
        model = run_training(shapes, np.arange(n_train), _train_config(opts), out / "training")
    A = BornOperator.for_scenario(sc)
    if n_val:
        vidx = range(n_train, len(shapes))
        lam, _ = tune_tikhonov(A, [shapes.data[i].T.ravel() for i in vidx], [shapes.labels[i] for i in vidx])
    else:
        lam = 1e-2 * A.normal_norm
    target = synthesize(sc, 1, seed, "austria")
    cli_io.save_dataset(out / "austria_data", target)
    reps = int(opts["realizations"])
    if reps < 1:
        raise ValueError("need at least one noise realization")
    clean = [ScatteredData(target.data[0])] * reps
    truths = [target.labels[0]] * reps
    methods = _methods(model, A, lam)
    report = noise_sweep(methods, clean, truths, levels, seed, sc.to_dict())
    _write_sweep(out, report, truths, clean, methods, levels, seed, opts["timing"] == "on")
    print(report.to_csv(timing=opts["timing"] == "on"), end="")
    return report


# ------------------------------------------------------------------ selftest

def selftest_checks(seed: int = 0):
    """Yield ``(name, value, limit)`` for each built-in numerical check."""
    import scipy.special as sp

    from .forward import green_domain, toeplitz_matvec
    from .linop import born_adjoint, born_apply, cg_solve_normal
    from .scene import make_grid, make_ring
    from .specfun import bessel_all
    from .train import grad_check

    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(1e-3, 100.0, 400))
    j0, j1, y0, y1 = bessel_all(x)
    ref = [sp.j0(x), sp.j1(x), sp.y0(x), sp.y1(x)]
    # zeros of the functions make pointwise relative error meaningless there
    err = max(float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-3))) for a, b in zip((j0, j1, y0, y1), ref))
    yield "bessel vs scipy", err, 1e-10
    wr = np.abs(j1 * y0 - j0 * y1 - 2 / (np.pi * x)) * (np.pi * x / 2)
    yield "wronskian", float(np.max(wr)), 1e-9

    sc = Scenario(forward_grid=make_grid(2.0, 16), inversion_grid=make_grid(2.0, 10),
                  tx_ring=make_ring(4, 12.0), rx_ring=make_ring(8, 6.0))
    gd = green_domain(sc.inversion_grid, sc.wavenumber)
    v = rng.normal(size=100) + 1j * rng.normal(size=100)
    yield "toeplitz vs dense", float(np.linalg.norm(toeplitz_matvec(gd, v) - gd.dense() @ v)
                                     / np.linalg.norm(gd.dense() @ v)), 1e-10

    A = BornOperator.for_scenario(sc)
    chi = rng.normal(size=100)
    y = rng.normal(size=A.shape[0]) + 1j * rng.normal(size=A.shape[0])
    lhs = np.vdot(y, born_apply(A, chi)).real
    rhs = float(chi @ born_adjoint(A, y))
    yield "adjoint identity", abs(lhs - rhs) / max(abs(lhs), 1e-300), 1e-12

    lam = 1e-2 * A.normal_norm
    z = rng.normal(size=100)
    sol, _ = cg_solve_normal(A, lam, y, z, tol=1e-13, max_iter=1000)
    M = A.normal_matrix
    direct = np.linalg.solve(M + lam * np.eye(100), born_adjoint(A, y) + lam * z)
    yield "cg vs dense solve", float(np.linalg.norm(sol - direct) / np.linalg.norm(direct)), 1e-8

    toy = Scenario(forward_grid=make_grid(2.0, 16), inversion_grid=make_grid(2.0, 8),
                   tx_ring=make_ring(2, 12.0), rx_ring=make_ring(4, 6.0))
    At = BornOperator.for_scenario(toy)
    labels = np.abs(rng.normal(size=(64, 2))) * 0.5
    data = born_apply(At, labels) * (1 + 0.05 * rng.normal(size=(At.shape[0], 2)))
    for bn, limit in ((False, 1e-5), (True, 1e-4)):
        model = LmnModel.create(depth=3, channels=4, unroll=2, use_bn=bn, seed=seed)
        model.calibrate(At, data)
        yield f"grad check (bn={'on' if bn else 'off'})", grad_check(model, At, data, labels), limit


def cmd_selftest(opts):
    ok = True
    for name, value, limit in selftest_checks(opts["seed"]):
        passed = bool(np.isfinite(value) and value < limit)
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:24s} {value:.3e} (limit {limit:.0e})")
    if not ok:
        raise FloatingPointError("self test failed")


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "infer": cmd_infer, "sweep": cmd_sweep,
            "selftest": cmd_selftest, "austria": cmd_austria}


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        if ns.command is None:
            raise UsageError("lmnscatter: a subcommand is required")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=getattr(logging, str(ns.log_level).upper(), logging.WARNING),
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(ns)
        COMMANDS[ns.command](opts)
    except (SolverError, ConvergenceError, FloatingPointError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
