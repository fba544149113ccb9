"""Command-line entry points, config parsing, and CSV output.

Commands: synth, solve, phase, noise, oversample, ripcheck, deblur,
selftest. Options may come from flags or from a line-based config file
(`key = value`, `#` comments); flags override file values and unknown keys
are rejected. Exit codes: 0 success, 1 solver non-convergence, 2 config
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from .experiments import (
    PhaseGrid,
    RipReport,
    SweepTable,
    empirical_rip_check,
    run_noise_sweep,
    run_oversampling_sweep,
    run_phase_transition,
)
from .imaging import (
    GrayImage,
    PgmFormatError,
    deblur_demo,
    read_pgm,
    synthetic_cell_images,
    write_pgm,
)
from .signal_model import (
    DimensionError,
    DomainError,
    coherence_profile,
    make_instance_1d,
    sample_ground_truth,
    synthesize_measurements,
)
from .solver import SolveOptions, initialize, relative_error, run_gradient_descent

__all__ = ["ConfigError", "RunConfig", "parse_run_config", "write_csv", "main"]

_FMT = "%.9g"


class ConfigError(ValueError):
    """Invalid command-line or config-file input."""


@dataclass
class RunConfig:
    """A fully resolved command with validated parameters."""

    command: str
    params: dict


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_list(cast):
    def parse(text: str):
        items = [p for p in text.replace(",", " ").split() if p]
        if not items:
            raise ConfigError("empty list value")
        return [cast(p) for p in items]

    return parse


def _float_or_auto(text: str):
    if text.strip() == "auto":
        return "auto"
    return float(text)


_SOLVER_KEYS = {
    "eta": (_float_or_auto, "auto"),
    "eta_scale": (float, 1.0),
    "rho": (_float_or_auto, "auto"),
    "max_iters": (int, 5000),
    "grad_tol": (float, 1e-7),
    "use_regularizer": (_parse_bool, True),
}

_DIM_KEYS = {
    "L": (int, None),
    "Q": (int, None),
    "M": (int, None),
    "K": (int, None),
    "N": (int, 1),
}

# per-command schema: key -> (parser, default); None default means optional
_SCHEMAS = {
    "synth": {**_DIM_KEYS, "d0": (float, 1.0), "sigma": (float, 0.0),
              "seed": (int, 0), "out": (str, None)},
    "solve": {**_DIM_KEYS, **_SOLVER_KEYS, "d0": (float, 1.0), "sigma": (float, 0.0),
              "seed": (int, 0), "out": (str, None)},
    "phase": {**_DIM_KEYS, **_SOLVER_KEYS,
              "x_axis": (str, "K"), "x_values": (_parse_list(int), None),
              "y_axis": (str, "M"), "y_values": (_parse_list(int), None),
              "trials": (int, 50), "threshold": (float, 1e-2),
              "workers": (int, None), "seed": (int, 0), "out": (str, None)},
    "noise": {**_DIM_KEYS, **_SOLVER_KEYS, "snr_db": (_parse_list(float), None),
              "trials": (int, 20), "seed": (int, 0), "out": (str, None)},
    "oversample": {"K": (int, None), "M": (int, None), "N": (int, 1),
                   **_SOLVER_KEYS, "ratios": (_parse_list(float), None),
                   "trials": (int, 20), "seed": (int, 0), "out": (str, None)},
    "ripcheck": {**_DIM_KEYS, "samples": (int, 1000), "seed": (int, 0),
                 "out": (str, None)},
    "deblur": {"images": (_parse_list(str), None), "height": (int, 64),
               "width": (int, 64), "n": (int, 3), "blur_size": (int, 5),
               "blur_sigma": (float, 1.5), "K": (int, None),
               "k_frac": (float, 0.15), **_SOLVER_KEYS,
               "eta_scale": (float, 0.3), "grad_tol": (float, 1e-9),
               "seed": (int, 0), "out_prefix": (str, None)},
    "selftest": {"seed": (int, 0)},
}

_REQUIRED = {
    "synth": ("L", "Q", "M", "K"),
    "solve": ("L", "Q", "M", "K"),
    "phase": ("L", "x_values", "y_values", "out"),
    "noise": ("L", "Q", "M", "K", "snr_db", "out"),
    "oversample": ("K", "M", "ratios", "out"),
    "ripcheck": ("L", "Q", "M", "K", "out"),
    "deblur": (),
    "selftest": (),
}

_DEFAULT_ITERS = {"phase": 3000, "noise": 2000, "oversample": 3000}


def _read_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip().replace("-", "_")
        val = val.strip()
        if not key or not val:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        values[key] = val
    return values


def _validate_dims(params: dict) -> None:
    dims = {k: params.get(k) for k in ("L", "Q", "M", "K", "N")}
    present = {k: v for k, v in dims.items() if v is not None}
    if any(v < 1 for v in present.values()):
        raise ConfigError("dimensions must be >= 1")
    if dims["Q"] is not None and dims["K"] is not None and dims["K"] > dims["Q"]:
        raise ConfigError(f"K ({dims['K']}) must not exceed Q ({dims['Q']})")
    if dims["L"] is not None:
        for other in ("Q", "M"):
            if dims[other] is not None and dims[other] > dims["L"]:
                raise ConfigError(f"{other} ({dims[other]}) must not exceed L ({dims['L']})")


def parse_run_config(argv, config_file: str | None = None) -> RunConfig:
    """Resolve a command line (plus optional config file) into a RunConfig.

    Flags override file values; unknown keys in either source are errors.
    """
    if not argv:
        raise ConfigError("missing command")
    command = argv[0]
    if command in ("-h", "--help"):
        _build_parser().parse_args(["--help"])
    if command not in _SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    schema = _SCHEMAS[command]

    flag_values = {}
    rest = list(argv[1:])
    i = 0
    while i < len(rest):
        tok = rest[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:].replace("-", "_")
        if key == "config":
            if i + 1 >= len(rest):
                raise ConfigError("--config needs a path")
            config_file = rest[i + 1]
            i += 2
            continue
        if key not in schema:
            raise ConfigError(f"unknown option --{tok[2:]} for command {command}")
        if i + 1 >= len(rest):
            raise ConfigError(f"option {tok} needs a value")
        flag_values[key] = rest[i + 1]
        i += 2

    file_values = _read_config_file(config_file) if config_file else {}
    for key in file_values:
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r} for command {command}")

    params = {}
    for key, (cast, default) in schema.items():
        if key in flag_values:
            raw = flag_values[key]
        elif key in file_values:
            raw = file_values[key]
        else:
            params[key] = default
            continue
        try:
            params[key] = cast(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc

    if command in _DEFAULT_ITERS and "max_iters" not in flag_values \
            and "max_iters" not in file_values:
        params["max_iters"] = _DEFAULT_ITERS[command]

    for key in _REQUIRED[command]:
        if params.get(key) is None:
            raise ConfigError(f"command {command} requires --{key.replace('_', '-')}")
    if command in ("synth", "solve", "noise", "ripcheck", "phase"):
        _validate_dims(params)
    return RunConfig(command=command, params=params)


def _build_parser():
    p = argparse.ArgumentParser(
        prog="moddeconv",
        description="Blind deconvolution of randomly modulated inputs")
    p.add_argument("command", choices=sorted(_SCHEMAS),
                   help="subcommand; each accepts --config FILE plus --key value "
                        "options named after the config keys")
    return p


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _FMT % float(v)
    return str(v)


def write_csv(table, path) -> None:
    """Write a PhaseGrid, SweepTable, or RipReport as UTF-8 CSV."""
    rows = []
    if isinstance(table, PhaseGrid):
        header = ["x", "y", "trials", "successes", "success_rate", "valid"]
        for yi, yv in enumerate(table.y_values):
            for xi, xv in enumerate(table.x_values):
                ok = bool(table.valid[yi, xi])
                succ = int(table.success_counts[yi, xi]) if ok else 0
                rate = succ / table.trials if ok else 0.0
                rows.append([xv, yv, table.trials, succ, rate, ok])
    elif isinstance(table, SweepTable):
        header = [table.abscissa_name, "mean_log10_error", "trials"]
        for a, m in zip(table.abscissa, table.mean_log_error):
            rows.append([a, m, table.trials])
    elif isinstance(table, RipReport):
        header = ["metric", "value"]
        rows.append(["samples", table.samples])
        rows.append(["mean_ratio", table.mean_ratio])
        rows.append(["max_deviation", table.max_deviation])
        rows.append(["fraction_within_half", table.fraction_within_half])
        for name in sorted(table.quantiles):
            rows.append([name, table.quantiles[name]])
        rows.append(["rejection_exhausted", table.rejection_exhausted])
    else:
        raise TypeError(f"cannot serialize {type(table).__name__}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _solver_options(p: dict, **overrides) -> SolveOptions:
    kw = dict(eta=p["eta"], eta_scale=p["eta_scale"], rho=p["rho"],
              max_iters=p["max_iters"], grad_tol=p["grad_tol"],
              use_regularizer=p["use_regularizer"])
    kw.update(overrides)
    return SolveOptions(**kw)


def _make_problem(p: dict):
    inst = make_instance_1d(p["L"], p["Q"], p["M"], p["K"], p["N"], seed=p["seed"])
    truth = sample_ground_truth(p["M"], p["K"], p["N"], d0=p.get("d0", 1.0),
                                seed=p["seed"])
    meas = synthesize_measurements(inst, truth, sigma=p.get("sigma", 0.0),
                                   seed=p["seed"])
    return inst, truth, meas


def _cmd_synth(p: dict) -> int:
    _, _, meas = _make_problem(p)
    out = p["out"]
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("index,re,im\n")
            for i, z in enumerate(meas.yhat):
                fh.write(f"{i},{_FMT % z.real},{_FMT % z.imag}\n")
    print(f"synthesized {meas.yhat.size} measurements "
          f"(sigma={p['sigma']}, noise energy {np.linalg.norm(meas.noise)**2:.3e})")
    return 0


def _cmd_solve(p: dict) -> int:
    inst, truth, meas = _make_problem(p)
    prof = coherence_profile(inst, truth.h0, truth.x0)
    opts = _solver_options(p, mu2=prof.mu2, nu2=prof.nu2)
    init = initialize(inst, meas, mu2=prof.mu2, nu2=prof.nu2)
    res = run_gradient_descent(inst, meas, init, opts, truth=truth)
    err = relative_error(res.u, res.v, truth.h0, truth.x0)
    if p["out"]:
        with open(p["out"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write("iteration,loss,relative_error\n")
            for i, (f, e) in enumerate(zip(res.loss_trace, res.error_trace)):
                fh.write(f"{i},{_FMT % f},{_FMT % e}\n")
    print(f"status={res.status} iterations={res.iterations} "
          f"relative_error={err:.3e} d={res.d:.4f}")
    return 0 if res.status == "converged" else 1


def _cmd_phase(p: dict) -> int:
    fixed = {k: p[k] for k in ("L", "Q", "M", "K", "N") if p.get(k) is not None
             and k not in (p["x_axis"], p["y_axis"])}
    opts = _solver_options(p, error_stop=p["threshold"] / 10.0)
    grid = run_phase_transition((p["x_axis"], p["x_values"]),
                                (p["y_axis"], p["y_values"]), fixed,
                                trials=p["trials"], base_seed=p["seed"],
                                threshold=p["threshold"], options=opts,
                                workers=p["workers"])
    write_csv(grid, p["out"])
    print(f"phase grid written to {p['out']} "
          f"({grid.region_size():d} cells at >=95% success)")
    return 0


def _cmd_noise(p: dict) -> int:
    dims = {k: p[k] for k in ("L", "Q", "M", "K", "N")}
    opts = _solver_options(p)
    table = run_noise_sweep(dims, p["snr_db"], trials=p["trials"],
                            base_seed=p["seed"], options=opts)
    write_csv(table, p["out"])
    print(f"noise sweep written to {p['out']}")
    return 0


def _cmd_oversample(p: dict) -> int:
    opts = _solver_options(p, error_stop=1e-6)
    table = run_oversampling_sweep({"K": p["K"], "M": p["M"], "N": p["N"]},
                                   p["ratios"], trials=p["trials"],
                                   base_seed=p["seed"], options=opts)
    write_csv(table, p["out"])
    print(f"oversampling sweep written to {p['out']}")
    return 0


def _cmd_ripcheck(p: dict) -> int:
    inst, truth, _ = _make_problem({**p, "sigma": 0.0, "d0": 1.0})
    report = empirical_rip_check(inst, truth, samples=p["samples"],
                                 base_seed=p["seed"])
    write_csv(report, p["out"])
    print(f"rip report written to {p['out']} (mean ratio {report.mean_ratio:.4f})")
    return 0


def _cmd_deblur(p: dict) -> int:
    if p["images"]:
        images = [read_pgm(path) for path in p["images"]]
    else:
        images = synthetic_cell_images(p["height"], p["width"], p["n"], p["seed"])
    npix = (images[0].height * images[0].width if isinstance(images[0], GrayImage)
            else images[0].size)
    K = p["K"] if p["K"] is not None else max(1, int(round(p["k_frac"] * npix)))
    opts = _solver_options(p)
    result = deblur_demo(images, p["blur_size"], p["blur_sigma"], K,
                         options=opts, seed=p["seed"])
    prefix = p["out_prefix"]
    if prefix:
        for n, img in enumerate(result.images):
            arr = np.clip(img, 0.0, 1.0)
            write_pgm(GrayImage(arr.shape[0], arr.shape[1], arr.ravel()),
                      f"{prefix}_deblurred_{n}.pgm")
        kern = result.kernel / max(result.kernel.max(), 1e-12)
        write_pgm(GrayImage(kern.shape[0], kern.shape[1],
                            np.clip(kern, 0.0, 1.0).ravel()),
                  f"{prefix}_kernel.pgm")
        with open(f"{prefix}_metrics.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("metric,value\n")
            fh.write(f"image_relative_mse,{_FMT % result.image_mse}\n")
            fh.write(f"kernel_relative_mse,{_FMT % result.kernel_mse}\n")
            fh.write(f"subspace_truncation,{_FMT % result.subspace_truncation}\n")
            fh.write(f"iterations,{result.solve.iterations}\n")
    print(f"deblur: image mse {result.image_mse:.4f}, "
          f"kernel mse {result.kernel_mse:.3e}, "
          f"iterations {result.solve.iterations}")
    return 0


def _cmd_selftest(p: dict) -> int:
    from .selftest import run_selftest

    ok = run_selftest(seed=p["seed"], verbose=True)
    return 0 if ok else 1


_COMMANDS = {
    "synth": _cmd_synth,
    "solve": _cmd_solve,
    "phase": _cmd_phase,
    "noise": _cmd_noise,
    "oversample": _cmd_oversample,
    "ripcheck": _cmd_ripcheck,
    "deblur": _cmd_deblur,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        config = parse_run_config(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DimensionError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[config.command](config.params)
    except (ConfigError, DimensionError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, PgmFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
