"""Command-line pipelines over the library, with reproducible run manifests.

Commands compose through files only: models and networks travel as JSON,
coefficients, datasets, states and profiles as CSV.  Every command that
writes an output also writes `<out>.manifest.json` capturing the resolved
configuration, seeds, input hashes and produced files, so a run can be
reproduced bit-for-bit from its manifest.  Outputs are written atomically
(temp file + rename).

Exit codes: 0 success, 1 runtime or solver failure, 2 usage or parse error.
The SDEMBED_SEED environment variable overrides the default seed of all
commands; explicit --seed flags win over it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import TrainConfig, dataset_csv_text, generate_dataset, train_backprop
from .dual import (
    DualCoefficients,
    IntegratorConfig,
    SolverError,
    coefficients_csv_text,
    eval_moment,
    read_coefficients_csv,
    solve_moment,
)
from .evaluate import (
    analytic_ou_moment,
    grid_csv_text,
    grid_eval,
    line_csv_text,
    line_eval,
    profile_csv_text,
    radial_error_profile,
)
from .fit import FitConfig, FitError, fit_network, fit_result_to_dict
from .mc import EstimationError, SimConfig, final_states_csv_text, mc_moment, simulate
from .network import forward, read_network
from .sde import ModelParseError, SdeModel, builtin_model, read_model, shift_model_origin

__all__ = ["main", "RunManifest"]

_BUILTIN_PARAMS = {
    "ornstein-uhlenbeck": ("gamma", "sigma"),
    "van-der-pol": ("epsilon", "nu11", "nu22"),
}
_ALIASES = {"ou": "ornstein-uhlenbeck", "vdp": "van-der-pol"}


def _default_seed() -> int:
    try:
        return int(os.environ.get("SDEMBED_SEED", "0"))
    except ValueError:
        return 0


@dataclass
class RunManifest:
    """Everything needed to reproduce a command's outputs bit-for-bit."""

    command: str
    config: dict
    seeds: dict
    version: str = __version__
    input_hashes: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    duration_seconds: float = 0.0

    def to_json(self) -> str:
        doc = {
            "command": self.command,
            "version": self.version,
            "config": self.config,
            "seeds": self.seeds,
            "input_hashes": self.input_hashes,
            "outputs": self.outputs,
            "duration_seconds": self.duration_seconds,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class _Run:
    """Collects inputs/outputs during a command and writes the manifest."""

    def __init__(self, command: str, args: argparse.Namespace, seed_keys: tuple[str, ...]):
        self.started = time.perf_counter()
        skip = {"func"}
        config = {k: v for k, v in vars(args).items() if k not in skip}
        self.manifest = RunManifest(
            command=command,
            config=config,
            seeds={k: getattr(args, k) for k in seed_keys if hasattr(args, k)},
        )

    def track_input(self, path) -> None:
        self.manifest.input_hashes[str(path)] = _sha256(path)

    def write_output(self, path, text: str) -> None:
        _atomic_write_text(Path(path), text)
        self.manifest.outputs.append(str(path))

    def finish(self, anchor) -> None:
        if anchor is None:
            return
        self.manifest.duration_seconds = round(time.perf_counter() - self.started, 6)
        _atomic_write_text(Path(str(anchor) + ".manifest.json"), self.manifest.to_json())


def _resolve_model(args, run: _Run) -> SdeModel:
    ref = args.model
    key = _ALIASES.get(ref.lower(), ref.lower())
    param_flags = {
        name: getattr(args, name)
        for name in ("gamma", "sigma", "epsilon", "nu11", "nu22")
        if getattr(args, name, None) is not None
    }
    if key in _BUILTIN_PARAMS:
        wanted = _BUILTIN_PARAMS[key]
        unknown = [k for k in param_flags if k not in wanted]
        if unknown:
            raise ValueError(f"parameters {unknown} do not apply to model {key!r}")
        params = {name: param_flags.get(name, 1.0) for name in wanted}
        model = builtin_model(key, params)
    else:
        if param_flags:
            raise ValueError("builtin parameter flags do not apply to model files")
        path = Path(ref)
        if not path.exists():
            raise ModelParseError(f"model file not found: {path}")
        model = read_model(path)
        run.track_input(path)
    origin = getattr(args, "origin", None)
    if origin:
        if len(origin) != model.dim:
            raise ValueError(f"--origin needs {model.dim} components for this model")
        model = shift_model_origin(model, origin)
    return model


def _add_model_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("model", help="builtin model name (ou, vdp) or model JSON path")
    group = parser.add_argument_group("builtin model parameters (default 1.0)")
    for name in ("gamma", "sigma", "epsilon", "nu11", "nu22"):
        group.add_argument(f"--{name}", type=float, default=None)


def _solve_target(args, run: _Run) -> DualCoefficients:
    model = _resolve_model(args, run)
    config = IntegratorConfig(rtol=args.rtol, atol=args.atol)
    return solve_moment(
        model,
        axis=args.axis,
        power=args.order,
        t=args.t,
        max_degree=args.N,
        config=config,
    )


# -- commands ----------------------------------------------------------------


def _cmd_dual(args) -> int:
    run = _Run("dual", args, ())
    coeffs = _solve_target(args, run)
    run.write_output(args.out, coefficients_csv_text(coeffs))
    run.finish(args.out)
    print(
        f"wrote {args.out}: {len(coeffs.index_set)} coefficients at t={coeffs.t}, "
        f"boundary spill mass {coeffs.spill_mass():.3e}"
    )
    return 0


def _target_from_args(args, run: _Run) -> tuple[DualCoefficients, int]:
    """Coefficient target plus the Taylor order to use."""
    if args.dual is not None:
        path = Path(args.dual)
        if not path.exists():
            raise ValueError(f"coefficient file not found: {path}")
        coeffs = read_coefficients_csv(path)
        run.track_input(path)
    else:
        if args.model is None:
            raise ValueError("either --dual or a model reference is required")
        missing = [flag for flag in ("order", "t", "N") if getattr(args, flag) is None]
        if missing:
            raise ValueError(f"a model reference also needs --{', --'.join(missing)}")
        coeffs = _solve_target(args, run)
    order = args.N if args.N is not None else coeffs.max_degree
    return coeffs, order


def _cmd_fit(args) -> int:
    run = _Run("fit", args, ("seed",))
    coeffs, order = _target_from_args(args, run)
    config = FitConfig(
        hidden=args.hidden,
        order=order,
        restarts=args.restarts,
        init_range=(args.init_low, args.init_high),
        max_iterations=args.max_iterations,
        gradient_tol=args.gtol,
        cost_tol=args.ctol,
        seed=args.seed,
    )
    result = fit_network(coeffs, config)
    run.write_output(args.out, json.dumps(fit_result_to_dict(result), indent=2) + "\n")
    run.finish(args.out)
    print(f"final cost: {result.cost:.6e} (best of {config.restarts} restarts, converged={result.converged})")
    return 0


def _cmd_mc(args) -> int:
    run = _Run("mc", args, ("seed",))
    model = _resolve_model(args, run)
    config = SimConfig(dt=args.dt, horizon=args.t, paths=args.paths, seed=args.seed)
    ensemble = simulate(model, args.x0, config)
    estimate, std_error = mc_moment(ensemble, args.axis, args.m)
    if args.out:
        run.write_output(args.out, final_states_csv_text(ensemble))
        run.finish(args.out)
    print(f"estimate: {estimate!r}  std_error: {std_error!r}  excluded_paths: {ensemble.n_excluded}")
    return 0


def _cmd_train_baseline(args) -> int:
    run = _Run("train-baseline", args, ("seed", "data_seed"))
    coeffs, _ = _target_from_args(args, run)
    lo, hi = args.box
    region = tuple((lo, hi) for _ in range(coeffs.dim))
    data_seed = args.data_seed if args.data_seed is not None else args.seed
    dataset = generate_dataset(coeffs, region, args.size, data_seed)
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=args.seed,
    )
    result = train_backprop(dataset, (args.hidden, coeffs.dim), config)
    doc = {
        "network": {
            "hidden": args.hidden,
            "dim": coeffs.dim,
            "q": result.net.out_weights.tolist(),
            "R": result.net.in_weights.tolist(),
            "s": result.net.biases.tolist(),
        },
        "final_mse": float(result.loss_trace[-1]),
        "loss_trace": result.loss_trace.tolist(),
        "dataset_fingerprint": dataset.generator_fingerprint,
    }
    run.write_output(args.out, json.dumps(doc, indent=2) + "\n")
    if args.dataset_out:
        run.write_output(args.dataset_out, dataset_csv_text(dataset))
    run.finish(args.out)
    print(f"final training MSE: {result.loss_trace[-1]:.6e} over {dataset.size} examples")
    return 0


# -- eval predictors ---------------------------------------------------------


def _parse_kv(body: str, where: str) -> dict[str, str]:
    out = {}
    if not body:
        return out
    for chunk in body.split(","):
        if "=" not in chunk:
            raise ValueError(f"{where}: expected key=value, got {chunk!r}")
        key, value = chunk.split("=", 1)
        out[key.strip()] = value.strip()
    return out


@dataclass
class _Predictor:
    fn: object
    dim: int
    label: str
    input_path: Path | None = None


def _build_predictor(spec: str, run: _Run) -> _Predictor:
    if ":" in spec and spec.split(":", 1)[0] in ("net", "dual", "ou", "mc"):
        kind, body = spec.split(":", 1)
    elif spec.endswith(".json"):
        kind, body = "net", spec
    elif spec.endswith(".csv"):
        kind, body = "dual", spec
    else:
        raise ValueError(f"cannot interpret predictor spec {spec!r}")

    if kind == "net":
        path = Path(body)
        if not path.exists():
            raise ValueError(f"network file not found: {path}")
        net = read_network(path)
        run.track_input(path)
        return _Predictor(lambda pts: forward(net, pts), net.dim, f"net:{path.name}", path)
    if kind == "dual":
        path = Path(body)
        if not path.exists():
            raise ValueError(f"coefficient file not found: {path}")
        coeffs = read_coefficients_csv(path)
        run.track_input(path)
        return _Predictor(lambda pts: eval_moment(coeffs, pts), coeffs.dim, f"dual:{path.name}", path)
    if kind == "ou":
        kv = _parse_kv(body, "ou predictor")
        gamma = float(kv.pop("gamma", 1.0))
        sigma = float(kv.pop("sigma", 1.0))
        t = float(kv.pop("t"))
        power = int(kv.pop("m"))
        if kv:
            raise ValueError(f"ou predictor: unknown keys {sorted(kv)}")
        fn = lambda pts: analytic_ou_moment(gamma, sigma, np.asarray(pts)[:, 0], t, power)
        return _Predictor(fn, 1, f"ou-analytic:m={power}")
    # kind == "mc": Monte Carlo estimate at every requested point (slow)
    kv = _parse_kv(body, "mc predictor")
    model_name = kv.pop("model")
    params = {
        k: float(kv.pop(k))
        for k in ("gamma", "sigma", "epsilon", "nu11", "nu22")
        if k in kv
    }
    key = _ALIASES.get(model_name.lower(), model_name.lower())
    wanted = _BUILTIN_PARAMS.get(key)
    if wanted is None:
        raise ValueError(f"mc predictor: unknown builtin model {model_name!r}")
    model = builtin_model(key, {name: params.get(name, 1.0) for name in wanted})
    axis = int(kv.pop("axis", 1))
    power = int(kv.pop("m"))
    t = float(kv.pop("t"))
    dt = float(kv.pop("dt", 1e-3))
    paths = int(kv.pop("paths", 10000))
    seed = int(kv.pop("seed", _default_seed()))
    if kv:
        raise ValueError(f"mc predictor: unknown keys {sorted(kv)}")
    config = SimConfig(dt=dt, horizon=t, paths=paths, seed=seed)

    def fn(pts):
        pts = np.asarray(pts, dtype=float)
        out = np.empty(pts.shape[0])
        for i, point in enumerate(pts):
            out[i] = mc_moment(simulate(model, point, config), axis, power)[0]
        return out

    return _Predictor(fn, model.dim, f"mc:{key}:m={power}")


_GNUPLOT = {
    "polar": (
        "set datafile separator ','\nset key off\nset xlabel 'distance from origin'\n"
        "set ylabel 'mean squared error'\nset logscale y\n"
        "plot '{csv}' every ::1 using (($1+$2)/2):3 with lines\n"
    ),
    "grid": (
        "set datafile separator ','\nset key off\nset view map\n"
        "splot '{csv}' every ::1 using 1:2:3 with image\n"
    ),
    "line": (
        "set datafile separator ','\nset key off\n"
        "plot '{csv}' every ::1 using 1:2 with lines\n"
    ),
}


def _cmd_eval(args) -> int:
    run = _Run("eval", args, ())
    predictor = _build_predictor(args.pred, run)
    modes = [name for name in ("polar", "grid", "line") if getattr(args, name) is not None]
    if len(modes) != 1:
        raise ValueError("exactly one of --polar, --grid, --line is required")
    mode = modes[0]
    if mode == "polar":
        if args.ref is None:
            raise ValueError("--polar requires --ref")
        reference = _build_predictor(args.ref, run)
        if predictor.dim != reference.dim:
            raise ValueError(
                f"predictor dimension {predictor.dim} != reference dimension {reference.dim}"
            )
        if predictor.dim != 2:
            raise ValueError("--polar requires 2-D predictors")
        r_max, n_r, n_theta = args.polar
        profile = radial_error_profile(
            predictor.fn,
            reference.fn,
            r_max,
            (int(n_r), int(n_theta)),
            bands=args.bands,
            labels=(predictor.label, reference.label),
        )
        text = profile_csv_text(profile)
    else:
        if args.ref is not None:
            raise ValueError("--ref only applies to --polar profiles")
        if mode == "grid":
            if predictor.dim != 2:
                raise ValueError("--grid requires a 2-D predictor")
            x1_lo, x1_hi, x2_lo, x2_hi, n1, n2 = args.grid
            table = grid_eval(
                predictor.fn, ((x1_lo, x1_hi), (x2_lo, x2_hi)), (int(n1), int(n2))
            )
            text = grid_csv_text(table)
        else:
            if predictor.dim != 1:
                raise ValueError("--line requires a 1-D predictor")
            lo, hi, count = args.line
            table = line_eval(predictor.fn, lo, hi, int(count))
            text = line_csv_text(table)
    run.write_output(args.out, text)
    if args.gnuplot:
        script = _GNUPLOT[mode].format(csv=Path(args.out).name)
        run.write_output(str(args.out) + ".gp", script)
    run.finish(args.out)
    print(f"wrote {args.out}")
    return 0


# -- parser ------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdembed",
        description="Moment pipelines for polynomial SDEs: dual-coefficient solves, "
        "coefficient-matched network fits, Monte Carlo checks, backprop baselines.",
    )
    parser.add_argument("--version", action="version", version=f"sdembed {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    dual = sub.add_parser("dual", help="solve the truncated coefficient ODEs, write CSV")
    _add_model_arguments(dual)
    dual.add_argument("--axis", type=int, default=1, help="coordinate of the moment (1-based)")
    dual.add_argument("--order", type=int, required=True, help="moment power m")
    dual.add_argument("--N", type=int, required=True, help="truncation: max exponent per axis")
    dual.add_argument("--t", type=float, required=True, help="time horizon")
    dual.add_argument("--rtol", type=float, default=1e-10)
    dual.add_argument("--atol", type=float, default=1e-12)
    dual.add_argument("--origin", type=float, nargs="+", help="shift the expansion origin")
    dual.add_argument("--out", required=True)
    dual.set_defaults(func=_cmd_dual)

    fit = sub.add_parser("fit", help="fit a network to coefficients by Taylor matching")
    fit.add_argument("model", nargs="?", help="model reference (alternative to --dual)")
    group = fit.add_argument_group("builtin model parameters (default 1.0)")
    for name in ("gamma", "sigma", "epsilon", "nu11", "nu22"):
        group.add_argument(f"--{name}", type=float, default=None)
    fit.add_argument("--dual", help="solved coefficient CSV to match against")
    fit.add_argument("--axis", type=int, default=1)
    fit.add_argument("--order", type=int, help="moment power m (with a model reference)")
    fit.add_argument("--t", type=float, help="time horizon (with a model reference)")
    fit.add_argument("--N", type=int, help="Taylor order (default: truncation of the target)")
    fit.add_argument("--hidden", type=int, required=True)
    fit.add_argument("--restarts", type=int, default=10)
    fit.add_argument("--seed", type=int, default=_default_seed())
    fit.add_argument("--init-low", type=float, default=-1.0)
    fit.add_argument("--init-high", type=float, default=1.0)
    fit.add_argument("--max-iterations", type=int, default=200)
    fit.add_argument("--gtol", type=float, default=1e-10)
    fit.add_argument("--ctol", type=float, default=1e-15)
    fit.add_argument("--rtol", type=float, default=1e-10)
    fit.add_argument("--atol", type=float, default=1e-12)
    fit.add_argument("--out", required=True)
    fit.set_defaults(func=_cmd_fit)

    mc = sub.add_parser("mc", help="Euler-Maruyama moment estimate with standard error")
    _add_model_arguments(mc)
    mc.add_argument("--x0", type=float, nargs="+", required=True)
    mc.add_argument("--t", type=float, required=True)
    mc.add_argument("--dt", type=float, required=True)
    mc.add_argument("--paths", type=int, required=True)
    mc.add_argument("--axis", type=int, default=1)
    mc.add_argument("--m", type=int, required=True, help="moment power")
    mc.add_argument("--seed", type=int, default=_default_seed())
    mc.add_argument("--out", help="optional CSV of final states")
    mc.set_defaults(func=_cmd_mc)

    train = sub.add_parser("train-baseline", help="label a dataset from coefficients, train by backprop")
    train.add_argument("model", nargs="?", help="model reference (alternative to --dual)")
    group = train.add_argument_group("builtin model parameters (default 1.0)")
    for name in ("gamma", "sigma", "epsilon", "nu11", "nu22"):
        group.add_argument(f"--{name}", type=float, default=None)
    train.add_argument("--dual", help="solved coefficient CSV supplying the targets")
    train.add_argument("--axis", type=int, default=1)
    train.add_argument("--order", type=int)
    train.add_argument("--t", type=float)
    train.add_argument("--N", type=int)
    train.add_argument("--rtol", type=float, default=1e-10)
    train.add_argument("--atol", type=float, default=1e-12)
    train.add_argument("--size", type=int, required=True)
    train.add_argument("--box", type=float, nargs=2, required=True, metavar=("LO", "HI"))
    train.add_argument("--hidden", type=int, required=True)
    train.add_argument("--epochs", type=int, default=50)
    train.add_argument("--batch", type=int, default=256)
    train.add_argument("--lr", type=float, default=0.01)
    train.add_argument("--seed", type=int, default=_default_seed())
    train.add_argument("--data-seed", type=int, default=None)
    train.add_argument("--dataset-out")
    train.add_argument("--out", required=True)
    train.set_defaults(func=_cmd_train_baseline)

    ev = sub.add_parser("eval", help="tabulate predictors or compare two on a polar mesh")
    ev.add_argument("--pred", required=True, help="net:PATH | dual:PATH | ou:KV | mc:KV")
    ev.add_argument("--ref", help="reference predictor (for --polar)")
    ev.add_argument("--polar", type=float, nargs=3, metavar=("RMAX", "NR", "NTHETA"))
    ev.add_argument("--bands", type=int, default=None)
    ev.add_argument(
        "--grid", type=float, nargs=6, metavar=("X1LO", "X1HI", "X2LO", "X2HI", "N1", "N2")
    )
    ev.add_argument("--line", type=float, nargs=3, metavar=("LO", "HI", "COUNT"))
    ev.add_argument("--gnuplot", action="store_true", help="also write a plot script")
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=_cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, ModelParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, FitError, EstimationError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
