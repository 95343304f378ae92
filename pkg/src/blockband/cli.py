"""Command-line experiment runner.

Every subcommand writes its artifacts to ``--out-dir`` and prints a one-line
summary.  Each artifact embeds the effective run configuration (JSON files as
a ``config`` key, text files as a leading ``# config:`` comment) and contains
no timestamps, so repeating a run reproduces the files byte for byte.

Exit status: 0 on success, 1 on invalid input, 2 when a built-in check fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .atoms import KINDS
from .bandmat import DenseGuardError, check_shape
from .girko import DEFAULT_Z_GRID, circular_law_experiment, eigenvalues_csv, plotdata
from .lsv import LsvExperimentConfig, lsv_tail_experiment
from .oracles import verify_all
from .report import _jsonable, config_header, default_jobs, fmt_float
from .stieltjes import BranchError, limit_cdf, limit_density, rate_experiment

log = logging.getLogger(__name__)

SUBCOMMANDS = ("esd", "lsv", "stieltjes-rate", "girko-compare", "verify-lemmas", "density")
FORMATS = ("csv", "json", "plotdata")

# defaults that do not depend on the subcommand
BASE_DEFAULTS = {
    "atom": "gaussian-complex",
    "z_re": 1.0,
    "z_im": 0.0,
    "zeta_re": 1.0,
    "zeta_im": 0.5,
    "seed": 0,
    "p": 1,
    "out_dir": ".",
    "format": "csv",
}
TRIAL_DEFAULTS = {"esd": 1, "girko-compare": 1, "lsv": 100, "stieltjes-rate": 50, "verify-lemmas": 1000,
                  "density": 0}
# how a value read from a config file is converted
CONVERTERS = {"n": int, "bandwidth": int, "trials": int, "seed": int, "p": int, "jobs": int, "points": int,
              "z_re": float, "z_im": float, "zeta_re": float, "zeta_im": float,
              "atom": str, "out_dir": str, "format": str}
# settings that change how a run executes but not what it computes
EXECUTION_ONLY = ("out_dir", "jobs", "config")


class ValidationError(ValueError):
    """Bad user input; reported with exit status 1."""


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # default=None everywhere so that "not given" can be told apart from a value
    common.add_argument("--n", type=int, help="matrix dimension")
    common.add_argument("--bandwidth", type=int, help="block size b (must divide n, n/b >= 3)")
    common.add_argument("--atom", choices=KINDS, help="entry distribution")
    common.add_argument("--z-re", type=float, dest="z_re")
    common.add_argument("--z-im", type=float, dest="z_im")
    common.add_argument("--zeta-re", type=float, dest="zeta_re")
    common.add_argument("--zeta-im", type=float, dest="zeta_im")
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int, help="master seed; trial t uses SeedSequence(seed, spawn_key=(t,))")
    common.add_argument("--p", type=int, help="moment order for stieltjes-rate")
    common.add_argument("--points", type=int, help="grid size for density")
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--format", choices=FORMATS)
    common.add_argument("--config", help="key=value file; command-line flags take precedence")
    common.add_argument("--jobs", type=int, help="worker processes (default: all cores)")

    parser = argparse.ArgumentParser(prog="blockband",
                                     description="Experiments on periodic block-band random matrices.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "esd": "eigenvalues and disk discrepancy",
        "lsv": "tail of the least singular value of X - z",
        "stieltjes-rate": "Monte-Carlo E|m_n - m|^(2p) at one (z, zeta)",
        "girko-compare": "disk discrepancy and log-determinant gap against Ginibre",
        "verify-lemmas": "run the resolvent/moment identity suite",
        "density": "limiting singular-value density and CDF of X - z",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def read_config_file(path: str) -> dict:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped.

    Keys may use dashes or underscores (``z-re`` and ``z_re`` are the same).
    """
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONVERTERS:
            raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = CONVERTERS[key](value)
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return out


def effective_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(BASE_DEFAULTS)
    cfg["trials"] = TRIAL_DEFAULTS[args.subcommand]
    cfg["points"] = 400
    cfg["jobs"] = default_jobs()
    if args.config:
        cfg.update(read_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("subcommand", "config") or value is None:
            continue
        cfg[key] = value
    cfg["subcommand"] = args.subcommand
    return cfg


def _validate(cfg: dict) -> None:
    sc = cfg["subcommand"]
    if cfg.get("atom") not in KINDS:
        raise ValidationError(f"unknown atom kind {cfg.get('atom')!r}; expected one of {', '.join(KINDS)}")
    if cfg.get("format") not in FORMATS:
        raise ValidationError(f"unknown format {cfg.get('format')!r}")
    if sc in ("esd", "lsv", "stieltjes-rate", "girko-compare"):
        if cfg.get("n") is None or cfg.get("bandwidth") is None:
            raise ValidationError(f"{sc} needs --n and --bandwidth")
        try:
            check_shape(cfg["n"], cfg["bandwidth"])
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
        if cfg["trials"] < 1:
            raise ValidationError("--trials must be at least 1")
    if sc == "stieltjes-rate" and cfg["p"] < 1:
        raise ValidationError("--p must be a positive integer")
    if sc == "density" and cfg["points"] < 2:
        raise ValidationError("--points must be at least 2")
    if cfg["jobs"] < 1:
        raise ValidationError("--jobs must be at least 1")


def recorded_config(cfg: dict) -> dict:
    """The part of the configuration that determines the results."""
    return {k: v for k, v in sorted(cfg.items()) if k not in EXECUTION_ONLY}


class Writer:
    """Writes artifacts into one directory, each stamped with the run configuration."""

    def __init__(self, out_dir: str, config: dict):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.written: list[Path] = []

    def text(self, name: str, body: str) -> None:
        path = self.dir / name
        path.write_text(config_header(self.config) + body)
        self.written.append(path)

    def json(self, name: str, payload: dict) -> None:
        path = self.dir / name
        doc = {"config": self.config, **payload}
        path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
        self.written.append(path)


def _z(cfg: dict) -> complex:
    return complex(cfg["z_re"], cfg["z_im"])


def _zeta(cfg: dict) -> complex:
    return complex(cfg["zeta_re"], cfg["zeta_im"])


def _csv(header: list[str], rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(fmt_float(v) if not isinstance(v, str) else v for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _write_eigs(w: Writer, fmt: str, eigs) -> None:
    if fmt == "csv":
        w.text("eigenvalues.csv", eigenvalues_csv(eigs))
    elif fmt == "plotdata":
        w.text("eigenvalues.dat", plotdata(eigs))
    else:
        w.json("eigenvalues.json", {"eigenvalues": [np.asarray(lam, dtype=complex).tolist() for lam in eigs]})


def run_esd(cfg: dict, w: Writer, compare: bool = False) -> tuple[str, bool]:
    z_grid = tuple(DEFAULT_Z_GRID) + ((_z(cfg),) if _z(cfg) not in DEFAULT_Z_GRID else ())
    rep = circular_law_experiment(cfg["n"], cfg["bandwidth"], cfg["atom"], z_grid=z_grid, trials=cfg["trials"],
                                  seed=cfg["seed"], with_log_det=compare, with_ginibre=compare)
    _write_eigs(w, cfg["format"], rep.arrays["eigenvalues"])
    cols = ["radial_sup", "angular_sup"]
    if compare:
        cols += ["ginibre_radial_sup", "ginibre_angular_sup"]
        cols += [k for k in rep.trials[0] if k.startswith("log_det_gap")]
        s = rep.summary
        for stat in ("radial_sup", "angular_sup"):
            ratio = s[f"{stat}_mean"] / s[f"ginibre_{stat}_mean"]
            rep.add_check(f"{stat} within 2x of Ginibre", ratio, 2.0, ratio <= 2.0)
    if cfg["format"] == "json":
        w.json("discrepancy.json", {"trials": rep.to_dict()["trials"]})
    else:
        w.text("discrepancy.csv", rep.trials_csv(cols))
    w.json("summary.json", {k: v for k, v in rep.to_dict().items() if k not in ("trials", "config")})
    s = rep.summary
    line = f"{cfg['subcommand']}: n={cfg['n']} b={cfg['bandwidth']} radial_sup={s['radial_sup_mean']:.4g} " \
           f"angular_sup={s['angular_sup_mean']:.4g}"
    if compare:
        line += f" (ginibre {s['ginibre_radial_sup_mean']:.4g}/{s['ginibre_angular_sup_mean']:.4g})"
    return line, rep.passed


def run_lsv(cfg: dict, w: Writer) -> tuple[str, bool]:
    lcfg = LsvExperimentConfig(n=cfg["n"], b=cfg["bandwidth"], z=_z(cfg), trials=cfg["trials"], seed=cfg["seed"],
                               atom=cfg["atom"])
    rep = lsv_tail_experiment(lcfg, jobs=cfg["jobs"])
    below = rep.summary["count_below_threshold"]
    rep.add_check("no s_n below exp(log threshold)", below, 0, below == 0)
    if cfg["format"] == "json":
        w.json("lsv.json", {"trials": rep.to_dict()["trials"]})
    else:
        w.text("lsv.csv", rep.trials_csv(["s_n"]))
    w.json("summary.json", {k: v for k, v in rep.to_dict().items() if k not in ("trials", "config")})
    s = rep.summary
    return (f"lsv: n={cfg['n']} b={cfg['bandwidth']} trials={cfg['trials']} median s_n={s['median_s_n']:.4g} "
            f"min s_n={s['min_s_n']:.4g} below threshold={below}"), rep.passed


def run_rate(cfg: dict, w: Writer) -> tuple[str, bool]:
    try:
        rep = rate_experiment(cfg["n"], cfg["bandwidth"], _z(cfg), _zeta(cfg), cfg["p"], cfg["trials"],
                              cfg["seed"], dist=cfg["atom"], jobs=cfg["jobs"])
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    zeta = _zeta(cfg)
    m_lim = rep.summary["m_lim"]
    rows = []
    for r in rep.trials:
        m = complex(r["m_emp_re"], r["m_emp_im"])
        rows.append([zeta.real, zeta.imag, m.real, m.imag, m_lim.real, m_lim.imag, abs(m - m_lim)])
    header = ["zeta_re", "zeta_im", "m_emp_re", "m_emp_im", "m_lim_re", "m_lim_im", "abs_diff"]
    if cfg["format"] == "json":
        w.json("stieltjes.json", {"columns": header, "rows": rows})
    else:
        w.text("stieltjes.csv", _csv(header, rows))
    w.json("summary.json", {k: v for k, v in rep.to_dict().items() if k not in ("trials", "config")})
    s = rep.summary
    return (f"stieltjes-rate: n={cfg['n']} b={cfg['bandwidth']} p={cfg['p']} "
            f"E|m_n-m|^{2 * cfg['p']}={s['moment_estimate']:.4g} +- {s['standard_error']:.2g}"), True


def run_density(cfg: dict, w: Writer) -> tuple[str, bool]:
    z = _z(cfg)
    cdf = limit_cdf(z)
    x = np.linspace(0.0, cdf.support[1] * 1.05, cfg["points"])
    with np.errstate(all="ignore"):
        dens = limit_density(z, np.maximum(x, 1e-12))
    F = cdf(x)
    if cfg["format"] == "json":
        w.json("density.json", {"x": x, "density": dens, "cdf": F, "support": cdf.support, "mass": cdf.mass})
    elif cfg["format"] == "plotdata":
        w.text("density.dat", "# x density cdf\n"
               + "".join(f"{fmt_float(a)} {fmt_float(d)} {fmt_float(f)}\n" for a, d, f in zip(x, dens, F)))
    else:
        w.text("density.csv", _csv(["x", "density", "cdf"], zip(x, dens, F)))
    return (f"density: z={z} support=[{cdf.support[0]:.4g}, {cdf.support[1]:.4g}] "
            f"mass={cdf.mass:.6f}"), True


def run_verify(cfg: dict, w: Writer) -> tuple[str, bool]:
    results = verify_all(trials=cfg["trials"], seed=cfg["seed"])
    w.json("lemmas.json", {"results": [r.to_dict() for r in results]})
    failed = [r.lemma_id for r in results if not r.passed]
    line = f"verify-lemmas: {len(results) - len(failed)}/{len(results)} checks passed"
    if failed:
        line += " (failed: " + ", ".join(failed) + ")"
    return line, not failed


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = effective_config(args)
        _validate(cfg)
        w = Writer(cfg["out_dir"], recorded_config(cfg))
        sc = cfg["subcommand"]
        if sc == "esd":
            line, ok = run_esd(cfg, w)
        elif sc == "girko-compare":
            line, ok = run_esd(cfg, w, compare=True)
        elif sc == "lsv":
            line, ok = run_lsv(cfg, w)
        elif sc == "stieltjes-rate":
            line, ok = run_rate(cfg, w)
        elif sc == "density":
            line, ok = run_density(cfg, w)
        else:
            line, ok = run_verify(cfg, w)
    except (ValidationError, DenseGuardError, BranchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(line)
    return 0 if ok else 2


def main(argv=None) -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run(argv))


if __name__ == "__main__":  # pragma: no cover
    main()
