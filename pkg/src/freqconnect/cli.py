"""Command-line entry point.

Three modes share one flag set:

``estimate``
    fit a panel and write connectedness, test and probability CSVs;
``test``
    fit a panel and write only the band tests and probabilities;
``mc-study``
    simulate one of the designs in :mod:`freqconnect.dgp` and write a study report.

Settings come from an optional JSON ``--config`` file, then flags (flags win).
Every output file names the hash of the run manifest, which is itself
written as ``manifest.json``. Outputs are staged in a temporary directory
and moved into place only after every computation succeeded.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .connectedness import long_rows, write_long_csv
from .dgp import DGP_IDS, DgpConfig, run_mc_study
from .errors import ConfigError, DomainError, FreqConnectError
from .inference import NSE_METHOD
from .pipeline import ALL_BAND, estimate_panel
from .spectral import BandPartition, low_high_bands
from .timeseries_io import RunConfig, load_panel

log = logging.getLogger("freqconnect")

MANIFEST_SCHEMA = "freqconnect.manifest/1"
MODES = ("estimate", "mc-study", "test")
H_CHOICES = (50, 100, 200)

# implementation choices recorded with every run
ESTIMATOR_NOTES = (
    "kernel weights rescaled to sum to the effective sample size (sum w)^2 / sum w^2",
    "innovation precision drawn from Wishart(alpha, Gamma^-1) and inverted",
    "posterior scale uses the posterior mean and precision in the quadratic correction",
    "Wishart prior: alpha0 = N + 2, Gamma0 = diag of univariate AR(p) residual variances",
    "Minnesota coefficient prior variance shrinkage * s_i^2 / (l^2 s_j^2); intercept variance shrinkage * 100^2",
    "random substream per focal time derived from (seed, focal time)",
    "unstable posterior draws redrawn up to 50 rounds, remaining ones excluded",
    f"numerical standard error: {NSE_METHOD}",
)

# flag name -> RunConfig field
_RUN_FLAGS = {
    "lags": "lags",
    "H": "horizon",
    "W": "bandwidth",
    "draws": "n_draws",
    "shrinkage": "shrinkage",
    "seed": "seed",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="freqconnect", description=__doc__.split("\n\n")[0])
    ap.add_argument("--mode", choices=MODES, help="what to run (required here or in --config)")
    ap.add_argument("--config", type=Path, help="JSON file with settings; flags override it")
    ap.add_argument("--input", type=Path, help="panel CSV for estimate/test modes")
    ap.add_argument("--out", type=Path, help="output directory")
    ap.add_argument("--lags", type=int)
    ap.add_argument("--H", type=int, choices=H_CHOICES, help="truncation horizon")
    ap.add_argument("--W", type=float, help="kernel bandwidth (default 8)")
    ap.add_argument("--draws", type=int, help="posterior draws per focal time")
    ap.add_argument("--shrinkage", type=float)
    ap.add_argument("--bands", help='period ranges, e.g. "1:5,5:inf"')
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int, help="worker processes (default: number of CPUs)")
    ap.add_argument("--dgp", help=f"design for mc-study: {', '.join(DGP_IDS)}")
    ap.add_argument("--sims", type=int, help="number of simulations for mc-study")
    ap.add_argument("--times", help='focal times, e.g. "400,650,1000" or "3-500"')
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def parse_times(text) -> tuple[int, ...] | None:
    """``"400,650,1000"`` or ranges ``"3-10"`` (inclusive); lists pass through."""
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return tuple(int(t) for t in text)
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                a, b = part.split("-", 1)
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise ConfigError(f"cannot parse focal times {text!r}") from None
    if not out:
        raise ConfigError("focal time list is empty")
    return tuple(out)


def _load_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def resolve_job(args: argparse.Namespace) -> dict:
    """Merge config file and flags into a validated job description."""
    cfg = _load_config_file(args.config)
    run_cfg = dict(cfg.pop("run", {}))
    job = {
        "mode": cfg.pop("mode", None),
        "input": cfg.pop("input", None),
        "out": cfg.pop("out", None),
        "workers": cfg.pop("workers", None),
        "dgp": cfg.pop("dgp", None),
        "sims": cfg.pop("sims", None),
        "times": cfg.pop("times", None),
    }
    # run settings may also sit at the top level of the file
    run_cfg.update(cfg)

    for flag in ("mode", "input", "out", "workers", "dgp", "sims", "times"):
        val = getattr(args, flag)
        if val is not None:
            job[flag] = val
    for flag, fieldname in _RUN_FLAGS.items():
        val = getattr(args, flag)
        if val is not None:
            run_cfg[fieldname] = val
    if args.bands is not None:
        run_cfg["bands"] = args.bands

    mode = job["mode"]
    if mode not in MODES:
        raise ConfigError(f"--mode must be one of {', '.join(MODES)}")
    if job["out"] is None:
        raise ConfigError("--out is required")
    if mode == "mc-study":
        if job["dgp"] is None:
            raise ConfigError("mc-study needs --dgp")
        job["dgp_config"] = DgpConfig(str(job["dgp"]), seed=int(run_cfg.get("seed", 0)))
        job["sims"] = int(job["sims"]) if job["sims"] is not None else 20
        if job["sims"] < 1:
            raise ConfigError("--sims must be at least 1")
        run_cfg.setdefault("bands", low_high_bands())
    elif job["input"] is None:
        raise ConfigError(f"{mode} mode needs --input")

    if "horizon" in run_cfg and run_cfg["horizon"] not in H_CHOICES:
        raise ConfigError(f"H must be one of {H_CHOICES}")
    if isinstance(run_cfg.get("bands"), str):
        run_cfg["bands"] = BandPartition.from_periods(run_cfg["bands"])
    times = parse_times(job["times"])
    if times is not None:
        run_cfg["time_grid"] = times
    job["run"] = RunConfig.from_dict(run_cfg)

    workers = job["workers"]
    job["workers"] = int(workers) if workers is not None else (os.cpu_count() or 1)
    if job["workers"] < 1:
        raise ConfigError("--workers must be at least 1")
    return job


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    except FileNotFoundError:
        raise DomainError(f"input file not found: {path}") from None
    return h.hexdigest()


def build_manifest(job: dict) -> dict:
    """Deterministic part of the manifest; its hash tags every output."""
    m = {
        "schema": MANIFEST_SCHEMA,
        "package_version": __version__,
        "mode": job["mode"],
        "run": job["run"].to_dict(),
        "estimator_notes": list(ESTIMATOR_NOTES),
    }
    if job["mode"] == "mc-study":
        from dataclasses import asdict

        m["dgp"] = asdict(job["dgp_config"])
        m["n_sims"] = job["sims"]
    else:
        m["input"] = {"name": Path(job["input"]).name, "sha256": _sha256_file(Path(job["input"]))}
    return m


def manifest_hash(manifest: dict) -> str:
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, tag: str, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# manifest: {tag}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _write_estimation(stage: Path, tag: str, result, with_connectedness: bool) -> list[str]:
    names = result.band_names + [ALL_BAND]
    files = []
    if with_connectedness:
        rows = (
            row
            for r in result.results
            for row in long_rows(result.label(r.focal_time), names, result.series_names, r.summaries)
        )
        write_long_csv(stage / "connectedness.csv", rows, header_comment=f"manifest: {tag}")
        files.append("connectedness.csv")

    tests = result.tests()
    probs = result.probabilities()
    test_rows = []
    prob_rows = []
    for t, p in zip(tests, probs):
        label = result.label(p.focal_time)
        a, b = p.band_pair
        if t is None:
            test_rows.append((label, a, b, "degenerate", "", "degenerate", p.prob))
        else:
            test_rows.append((label, a, b, t.statistic, t.nse, t.reject, p.prob))
        prob_rows.append((label, a, b, p.prob, p.prob_reverse, p.tie_fraction))
    _write_csv(
        stage / "tests.csv",
        tag,
        ("time_label", "band_a", "band_b", "statistic", "nse", "reject_5pct", "prob_a_gt_b"),
        test_rows,
    )
    _write_csv(
        stage / "probabilities.csv",
        tag,
        ("time_label", "band_a", "band_b", "prob_a_gt_b", "prob_b_gt_a", "tie_fraction"),
        prob_rows,
    )
    return files + ["tests.csv", "probabilities.csv"]


def _write_study(stage: Path, tag: str, report: dict) -> list[str]:
    report = dict(report, manifest=tag)
    with open(stage / "study_report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_csv(
        stage / "probabilities.csv",
        tag,
        ("u", "true_probability", "fitted_probability"),
        [(r["u"], "" if r["true_probability"] is None else r["true_probability"], r["fitted_probability"])
         for r in report["probability_table"]],
    )
    series_rows = []
    for band, s in report["series"].items():
        for i, t in enumerate(report["times"]):
            series_rows.append(
                (t, band, *("" if s[k][i] is None else s[k][i] for k in ("true", "fitted_median", "fitted_q025", "fitted_q975")))
            )
    _write_csv(
        stage / "study_series.csv",
        tag,
        ("time_label", "band", "true", "fitted_median", "fitted_q025", "fitted_q975"),
        series_rows,
    )
    return ["study_report.json", "probabilities.csv", "study_series.csv"]


def run_job(job: dict) -> dict:
    """Compute, stage and publish every output of ``job``; returns a summary."""
    out = Path(job["out"])
    manifest = build_manifest(job)
    tag = manifest_hash(manifest)
    started = time.time()

    if job["mode"] == "mc-study":
        log.info("running %d simulation(s) of design %s", job["sims"], job["dgp_config"].dgp_id)
        payload = run_mc_study(job["sims"], job["dgp_config"], job["run"], workers=job["workers"])
    else:
        panel = load_panel(job["input"])
        log.info("estimating %d series x %d observations", panel.N, panel.T)
        payload = estimate_panel(panel, job["run"], workers=job["workers"])

    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".freqconnect-", dir=out.parent))
    try:
        if job["mode"] == "mc-study":
            files = _write_study(stage, tag, payload)
        else:
            files = _write_estimation(stage, tag, payload, with_connectedness=job["mode"] == "estimate")
        full_manifest = dict(manifest, manifest_hash=tag, outputs=sorted(files), elapsed_seconds=round(time.time() - started, 3))
        with open(stage / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(full_manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        files.append("manifest.json")
        out.mkdir(parents=True, exist_ok=True)
        for name in files:
            os.replace(stage / name, out / name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return {"status": "ok", "mode": job["mode"], "manifest_hash": tag, "outputs": sorted(str(out / f) for f in files)}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        job = resolve_job(args)
        summary = run_job(job)
    except FreqConnectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
