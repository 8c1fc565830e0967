"""Autocovariances, canonical correlations, bounds, simulation and subsampling
inference for long-memory series.

Every command takes an optional JSON config (``--config``); command-line
flags override config keys. Tables go to ``--out`` (CSV, or JSON when the
name ends in ``.json``), else to ``$LMSUB_OUT/<command>.csv`` when that
variable is set, else to stdout. Existing files are only replaced with
``--force``.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import bounds, models, simulate, subsample
from .cancorr import block_sum_corr, rho_curve
from .toeplitz import NotPositiveDefiniteError

EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 2, 3, 4
OUT_ENV = "LMSUB_OUT"


class ConfigError(ValueError):
    pass


class NumericalFailure(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    command: str
    model: dict = field(default_factory=dict)
    maxlag: int = 10
    k: Optional[list] = None
    k_mult: Optional[list] = None
    b: Optional[list] = None
    n: Optional[list] = None
    block_rule: object = "sqrt"
    calib_b_max: Optional[int] = None
    margin: float = 1.1
    kprime_m: int = 4
    eps: float = 0.1
    alpha: float = 2.0
    C2: float = 1.0
    seed: int = 0
    reps: int = 300
    level: float = 0.9
    stat: str = "sn_mean"
    m: int = 1
    psi: str = "huber"
    G: str = "identity"
    method: str = "auto"
    rate_exponent: float = 0.5
    series: Optional[str] = None
    band: bool = False
    exact: bool = False
    out: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        if "command" not in d:
            raise ConfigError("config key 'command' is required")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"config key 'command': unknown command {self.command!r}")
        for key in ("k", "k_mult", "b", "n"):
            v = getattr(self, key)
            if v is not None and (not isinstance(v, list)
                                  or not all(isinstance(i, int) and i >= 1 for i in v)):
                raise ConfigError(f"config key {key!r} must be a list of positive integers")
        try:
            bounds.block_rule(self.block_rule)
        except ValueError as exc:
            raise ConfigError(f"config key 'block_rule': {exc}") from None
        if self.method not in simulate.METHODS:
            raise ConfigError(f"config key 'method': expected one of {simulate.METHODS}")
        if not 0 <= self.level < 1:
            raise ConfigError("config key 'level' must lie in [0, 1)")
        if not 0 < self.eps < 1:
            raise ConfigError("config key 'eps' must lie in (0, 1)")
        if self.stat not in subsample.BlockStatistic.KINDS:
            raise ConfigError(f"config key 'stat': expected one of {subsample.BlockStatistic.KINDS}")
        try:
            subsample.parse_psi(self.psi)
            models.named_map(self.G)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def build_model(self) -> models.CovarianceModel:
        if not self.model:
            raise ConfigError("config key 'model' is required for this command")
        try:
            return models.model_from_dict(self.model)
        except models.ModelError as exc:
            raise ConfigError(f"config key 'model': {exc}") from None


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):#.17g}"
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def table_text(columns: list, rows: list, as_json: bool) -> str:
    if as_json:
        obj = {c: [_jsonable(r[i]) for r in rows] for i, c in enumerate(columns)}
        return json.dumps(obj, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(v) for v in r) + "\n")
    return buf.getvalue()


def resolve_out(cfg: ExperimentConfig, suffix: str = ".csv") -> Optional[str]:
    if cfg.out:
        return cfg.out
    base = os.environ.get(OUT_ENV)
    if base:
        return os.path.join(base, cfg.command + suffix)
    return None


def emit(text: str, out: Optional[str], force: bool) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    with open(out, "w" if force else "x", newline="") as fh:
        fh.write(text)


def emit_table(cfg, columns, rows, force):
    out = resolve_out(cfg)
    emit(table_text(columns, rows, bool(out and out.endswith(".json"))), out, force)


def emit_json(cfg, obj, force):
    out = resolve_out(cfg, ".json")
    emit(json.dumps(obj, indent=1, default=_jsonable, sort_keys=True) + "\n", out, force)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gamma(cfg: ExperimentConfig, force: bool = False) -> None:
    model = cfg.build_model()
    if cfg.maxlag < 0:
        raise ConfigError("config key 'maxlag' must be >= 0")
    g = model.autocov(cfg.maxlag)
    emit_table(cfg, ["lag", "gamma"], [(i, v) for i, v in enumerate(g)], force)


def _need(cfg, key):
    v = getattr(cfg, key)
    if not v:
        raise ConfigError(f"config key {key!r} is required for command {cfg.command!r}")
    return v


def cmd_rho(cfg: ExperimentConfig, force: bool = False) -> None:
    model = cfg.build_model()
    ks, bs = sorted(_need(cfg, "k")), sorted(_need(cfg, "b"))
    rows = []
    for b in bs:
        rhos = rho_curve(model, ks, b)
        for k, r in zip(ks, rhos):
            rows.append((k, b, float(r), block_sum_corr(model, k, b)))
    emit_table(cfg, ["k", "b", "rho", "lower"], rows, force)


def _bound_grid(cfg) -> list:
    bs = _need(cfg, "b")
    if cfg.k_mult:
        return [(mult * b, b) for b in sorted(bs) for mult in sorted(cfg.k_mult)]
    ks = _need(cfg, "k")
    return [(k, b) for b in sorted(bs) for k in sorted(ks)]


def cmd_bounds(cfg: ExperimentConfig, force: bool = False) -> None:
    model = cfg.build_model()
    grid = _bound_grid(cfg)
    kept = [(k, b) for k, b in grid if k > b]
    excluded = len(grid) - len(kept)
    if not kept:
        raise ConfigError("bound grid has no row with k > b")
    calib = kept if cfg.calib_b_max is None else [(k, b) for k, b in kept if b <= cfg.calib_b_max]
    cal = bounds.calibrate_all(model, calib, m=cfg.kprime_m, eps=cfg.eps, C2=cfg.C2,
                               alpha=cfg.alpha, margin=cfg.margin)
    rows = bounds.bound_table(model, kept, cal, m=cfg.kprime_m, eps=cfg.eps)
    bad = [r for r in rows if not r.sandwich_ok()]
    if bad:
        raise NumericalFailure(f"sandwich violated on {len(bad)} row(s), first (k={bad[0].k}, "
                               f"b={bad[0].b})")
    emit_table(cfg, list(bounds.COLUMNS), [[getattr(r, c) for c in bounds.COLUMNS] for r in rows],
               force)
    sys.stderr.write(f"excluded {excluded} row(s) with k <= b; calibration on "
                     f"{len(cal.grid)} row(s), margin {cal.margin}: C_farima={cal.C_farima:.6g} "
                     f"C1_bw={cal.C1_bw:.6g} C1_main={cal.C1_main:.6g}\n")


def cmd_diag(cfg: ExperimentConfig, force: bool = False) -> None:
    model = cfg.build_model()
    rows = bounds.subsampling_condition_diag(model, sorted(_need(cfg, "n")), cfg.block_rule,
                                             epsilon=cfg.eps, exact=cfg.exact,
                                             workers=cfg_threads(cfg))
    mean_dec = bounds.strictly_decreasing([r.mean_rho for r in rows])
    max_dec = bounds.strictly_decreasing([r.max_window_rho for r in rows])
    out = [(r.n, r.b_n, r.mean_rho, r.max_window_rho, mean_dec, max_dec) for r in rows]
    emit_table(cfg, ["n", "b_n", "mean_rho", "max_window_rho", "mean_decreasing",
                     "max_decreasing"], out, force)


def cmd_simulate(cfg: ExperimentConfig, force: bool = False) -> None:
    model = cfg.build_model()
    n = _need(cfg, "n")
    if len(n) != 1:
        raise ConfigError("config key 'n' must hold exactly one length for 'simulate'")
    req = simulate.PathRequest(model, n[0], cfg.seed, cfg.method)
    path = simulate.gen_subordinated(req, models.named_map(cfg.G))
    header = {"model": model.to_dict(), "n": n[0], "seed": cfg.seed, "method": cfg.method,
              "G": cfg.G}
    out = resolve_out(cfg)
    if out is None:
        sys.stdout.write("# " + json.dumps(header, sort_keys=True) + "\nx\n")
        sys.stdout.write("".join(f"{v:#.17g}\n" for v in path))
    else:
        simulate.write_path_csv(path, out, header, overwrite=force)


def _series(cfg) -> np.ndarray:
    if cfg.series:
        return simulate.read_series_csv(cfg.series)
    model = cfg.build_model()
    n = _need(cfg, "n")
    return simulate.gen_subordinated(simulate.PathRequest(model, n[0], cfg.seed, cfg.method),
                                     models.named_map(cfg.G))


def cmd_subsample(cfg: ExperimentConfig, force: bool = False) -> None:
    x = _series(cfg)
    b = (cfg.b or [bounds.block_rule(cfg.block_rule)(x.size)])[0]
    result = {"n": int(x.size), "b": int(b), "level": cfg.level}
    if cfg.series:
        result["series"] = str(cfg.series)
    else:
        result.update(seed=cfg.seed, model=cfg.build_model().to_dict())
    if cfg.band or cfg.stat == "ecdf_sup":
        band = subsample.ecdf_band(x, b, cfg.level, cfg.rate_exponent)
        result.update(kind="band", rate_exponent=cfg.rate_exponent, **band.as_dict())
    else:
        stat = subsample.BlockStatistic(cfg.stat, m=cfg.m, psi=subsample.parse_psi(cfg.psi))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", subsample.DegenerateWarning)
            ci = subsample.subsample_ci(x, b, stat, cfg.level)
        result.update(kind="ci", stat=cfg.stat, **ci.as_dict())
    emit_json(cfg, result, force)


def cmd_coverage(cfg: ExperimentConfig, force: bool = False) -> None:
    model = cfg.build_model()
    n = _need(cfg, "n")[0]
    b = (cfg.b or [bounds.block_rule(cfg.block_rule)(n)])[0]
    rep = subsample.mc_coverage(subsample.CoverageConfig(
        model, n, b, reps=cfg.reps, level=cfg.level, seed=cfg.seed, stat=cfg.stat, m=cfg.m,
        G=cfg.G, method=cfg.method))
    obj = rep.as_dict()
    obj.update(stat=cfg.stat, model=model.to_dict())
    emit_json(cfg, obj, force)


COMMANDS = {
    "gamma": cmd_gamma, "rho": cmd_rho, "bounds": cmd_bounds, "diag": cmd_diag,
    "simulate": cmd_simulate, "subsample": cmd_subsample, "coverage": cmd_coverage,
}

_THREADS = {"value": os.cpu_count() or 1}


def cfg_threads(cfg) -> int:
    return _THREADS["value"]


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _int_list(s: str) -> list:
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _float_list(s: str) -> list:
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


MODEL_FLAGS = ("family", "d", "H", "sigma2", "ar", "ma", "gamma0")


COMMAND_HELP = {
    "gamma": "autocovariance table gamma(0..maxlag)",
    "rho": "canonical correlations rho_{k,b}",
    "bounds": "rho against its lower bound and calibrated upper bounds",
    "diag": "subsampling-condition diagnostic over n",
    "simulate": "exact Gaussian (or subordinated) sample path to CSV",
    "subsample": "subsampling confidence interval or ECDF band for a series",
    "coverage": "Monte Carlo coverage of the subsampling interval",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lmsub", description=__doc__.split("\n\n")[0].replace("\n", " "))
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, help=COMMAND_HELP[name], description=COMMAND_HELP[name])
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--out", help="output file (.csv or .json)")
        s.add_argument("--force", action="store_true", help="overwrite an existing output")
        s.add_argument("--threads", type=int, help="worker threads")
        g = s.add_argument_group("model")
        g.add_argument("--family", choices=sorted(models._FAMILY_KEYS), help="model family")
        g.add_argument("--d", type=float, help="memory parameter in (0, 1/2)")
        g.add_argument("--H", type=float, help="Hurst index of fGn in (1/2, 1)")
        g.add_argument("--sigma2", type=float, help="innovation variance")
        g.add_argument("--ar", type=_float_list, help="AR coefficients, comma separated")
        g.add_argument("--ma", type=_float_list, help="MA coefficients, comma separated")
        g.add_argument("--gamma0", type=_float_list,
                       help="short-memory autocovariances of the product family")
        s.add_argument("--maxlag", type=int, help="largest lag (gamma)")
        s.add_argument("--k", type=_int_list, help="lags, comma separated")
        s.add_argument("--k-mult", dest="k_mult", type=_int_list, help="lags as multiples of b")
        s.add_argument("--b", type=_int_list, help="block sizes, comma separated")
        s.add_argument("--n", type=_int_list, help="sample sizes, comma separated")
        s.add_argument("--block-rule", dest="block_rule", help="'sqrt', 'pow:a' or an integer")
        s.add_argument("--calib-b-max", dest="calib_b_max", type=int,
                       help="largest b used to calibrate bound constants")
        s.add_argument("--kprime-m", dest="kprime_m", type=int, help="k' = b(m+1) multiplier")
        s.add_argument("--eps", type=float, help="window fraction epsilon")
        s.add_argument("--seed", type=int, help="random seed")
        s.add_argument("--reps", type=int, help="Monte Carlo replications")
        s.add_argument("--level", type=float, help="confidence level")
        s.add_argument("--stat", help="sn_mean, sn_autocov, m_estimator or ecdf_sup")
        s.add_argument("--m", type=int, help="autocovariance lag")
        s.add_argument("--psi", help="'sign', 'huber' or 'huber:c'")
        s.add_argument("--G", help="subordination map (identity, square, sign, exp, ...)")
        s.add_argument("--method", help="cholesky, circulant or auto")
        s.add_argument("--rate-exponent", dest="rate_exponent", type=float,
                       help="ECDF band rate exponent r")
        s.add_argument("--series", help="input series CSV")
        s.add_argument("--band", action="store_true", default=None, help="ECDF band instead of CI")
        s.add_argument("--exact", action="store_true", default=None,
                       help="evaluate rho at every lag in diag")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config}: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
        if base.get("command", args.command) != args.command:
            raise ConfigError(f"config key 'command' is {base['command']!r}, "
                              f"but {args.command!r} was requested")
    base["command"] = args.command
    model = dict(base.get("model", {}))
    for key in MODEL_FLAGS:
        v = getattr(args, key)
        if v is not None:
            model[key] = v
    if model:
        base["model"] = model
    skip = set(MODEL_FLAGS) | {"config", "force", "threads", "command"}
    for key, v in vars(args).items():
        if key not in skip and v is not None:
            base[key] = v
    return ExperimentConfig.from_dict(base)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            _THREADS["value"] = args.threads
        COMMANDS[cfg.command](cfg, force=args.force)
    except (ConfigError, models.ModelError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except (NumericalFailure, NotPositiveDefiniteError, simulate.EmbeddingError,
            models.NonIntegrableError, FloatingPointError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except FileExistsError as exc:
        sys.stderr.write(f"I/O error: {exc.filename} exists (use --force to overwrite)\n")
        return EXIT_IO
    except BrokenPipeError:
        # reader closed stdout early (e.g. ``| head``); not an error
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO
    except ValueError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
