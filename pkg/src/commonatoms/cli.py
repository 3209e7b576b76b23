"""Command-line front end.

Exit codes: 0 success, 1 analysis failure, 2 input/config problem. On
failure a JSON object ``{"error", "message", "stage"}`` is printed to
stderr.

All randomness derives from the study seed: command ``c`` draws from
``SeedSequence(seed, spawn_key=(c,))`` with the ids in ``STREAMS``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cam_gibbs import ChainConfig, InvariantViolation, PosteriorChain, run_chain
from .classical_baselines import km_estimate, logrank_test, ols_effect, write_km_csv
from .config import ConfigError, StudyConfig, load_config
from .data_model import RWD, DataError, StudyData, load_csv, write_csv
from .equivalence_check import compare_arms, write_scores_csv
from .gof import gof_sample, qq_export
from .importance_resampling import (compute_weights, diagnostics, read_weights_csv, resample,
                                    write_weights_csv)
from .pipeline import AnalysisSettings, PowerCell, run_cell
from .simgen import ScenarioSpec, gbm_survival_study, gen_gbm_like, generate
from .treatment_effect import posterior_effect, write_hr_csv

log = logging.getLogger("commonatoms")

STREAMS = {"fit": 1, "fit_cov": 2, "resample": 3, "validate": 4, "gof": 5, "simulate": 6,
           "power": 7}


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(str(exc))
        self.stage = stage
        self.exc = exc


def _rng(seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS[stream],)))


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _write_json(path: Path, obj: dict, cfg: StudyConfig | None = None) -> None:
    if cfg is not None:
        obj = dict(obj, config_hash=cfg.hash, seed=cfg.seed)
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _out(cfg: StudyConfig) -> Path:
    cfg.output.mkdir(parents=True, exist_ok=True)
    return cfg.output


def _outcome_pair(cfg: StudyConfig) -> tuple:
    oc = tuple(cfg.outcome_columns)
    return oc if len(oc) >= 2 else (oc[0], "status")


# -- pipeline stages -----------------------------------------------------------------

def cmd_fit(cfg: StudyConfig, covariates_only: bool = False) -> Path:
    """Run one chain; writes chain[_cov].jsonl and the diagnostics JSON."""
    study = cfg.load_study()
    use_y = study.has_outcome and not covariates_only
    stream = "fit" if use_y else "fit_cov"
    chain_cfg = dataclasses.replace(cfg.chain, use_response=use_y)
    chain = run_chain(study, chain_cfg, _rng(cfg.seed, stream), keep_latent=False)
    chain.config["study_config_hash"] = cfg.hash
    name = "chain" if use_y else "chain_cov"
    out = _out(cfg)
    chain.to_jsonl(out / f"{name}.jsonl")
    diag = dict(chain.diagnostics)
    diag.pop("occupied_trace", None)
    _write_json(out / f"{name}_diagnostics.json", diag, cfg)
    return out / f"{name}.jsonl"


def _chain_for_weights(cfg: StudyConfig) -> PosteriorChain:
    out = cfg.output
    p = out / "chain_cov.jsonl"
    if not p.exists():
        p = out / "chain.jsonl"
    if not p.exists():
        raise FileNotFoundError(str(out / "chain_cov.jsonl"))
    return PosteriorChain.from_jsonl(p)


def cmd_weights(cfg: StudyConfig) -> Path:
    study = cfg.load_study()
    chain = _chain_for_weights(cfg)
    if chain.c2.shape[1] != study.n2:
        raise DataError("chain and RWD disagree on the number of RWD rows")
    w = compute_weights(chain, study.rwd, cfg.rao_blackwell)
    out = _out(cfg)
    write_weights_csv(w, out / "weights.csv")
    size = max(1, round(cfg.resample_ratio * study.n1))
    _write_json(out / "weights_diagnostics.json", diagnostics(w, size), cfg)
    return out / "weights.csv"


def cmd_resample(cfg: StudyConfig) -> Path:
    study = cfg.load_study()
    out = _out(cfg)
    wp = out / "weights.csv"
    if not wp.exists():
        raise FileNotFoundError(str(wp))
    w = read_weights_csv(wp)
    if w.n != study.n2:
        raise DataError(f"{wp}: {w.n} weights for {study.n2} RWD rows")
    w.source, w.row_index = study.rwd.source, study.rwd.row_index
    size = max(1, round(cfg.resample_ratio * study.n1))
    idx, synth = resample(w, size, _rng(cfg.seed, "resample"), study.rwd)
    write_csv(synth, out / "synthetic_control.csv", outcome_columns=_outcome_pair(cfg))
    _write_json(out / "resample.json", {"size": size, "indices": idx.tolist(),
                                        "distinct_rows": int(np.unique(idx).size)}, cfg)
    return out / "synthetic_control.csv"


def _load_synthetic(cfg: StudyConfig, study: StudyData):
    p = cfg.output / "synthetic_control.csv"
    oc = _outcome_pair(cfg) if study.has_outcome else None
    return load_csv(p, study.schema, RWD, oc, cfg.outcome == "survival", source="synthetic")


def cmd_validate(cfg: StudyConfig) -> dict:
    study = cfg.load_study()
    synth = _load_synthetic(cfg, study)
    rep = compare_arms(study.treatment, synth, cfg.classifier, _rng(cfg.seed, "validate"))
    out = _out(cfg)
    _write_json(out / "equivalence.json", rep.to_dict(), cfg)
    write_scores_csv(rep, out / "oof_scores.csv")
    return rep.to_dict()


def cmd_effect(cfg: StudyConfig) -> dict:
    """Model-based (CA-PPMx) and two-step (IS-LM / IS-KM) effect analyses."""
    study = cfg.load_study()
    if not study.has_outcome:
        raise ConfigError("effect needs outcomes (set outcome = continuous or survival)")
    out = _out(cfg)
    res = {}
    cp = out / "chain.jsonl"
    if cp.exists():
        chain = PosteriorChain.from_jsonl(cp)
        if study.survival:
            tmax = float(np.exp(np.r_[study.treatment.outcome.y, study.rwd.outcome.y]).max())
            eff = posterior_effect(chain, "survival", cfg.t_star, cfg.hr_target, max_time=tmax)
            write_hr_csv(eff, out / "hr_curve.csv")
        else:
            eff = posterior_effect(chain, "continuous")
        res["CA-PPMx"] = eff.to_dict()
    synth_path = out / "synthetic_control.csv"
    if synth_path.exists():
        synth = _load_synthetic(cfg, study)
        o1, o2 = study.treatment.outcome, synth.outcome
        if study.survival:
            t1, t2 = np.exp(o1.y), np.exp(o2.y)
            times = np.r_[t1, t2]
            status = np.r_[o1.observed, o2.observed].astype(int)
            grp = np.r_[np.ones(t1.size, int), np.zeros(t2.size, int)]
            lr = logrank_test(grp, times, status)
            write_km_csv(km_estimate(t1, o1.observed), out / "km_treatment.csv")
            write_km_csv(km_estimate(t2, o2.observed), out / "km_control.csv")
            res["IS-KM"] = {k: v for k, v in lr.items()}
        else:
            z = np.r_[np.ones(o1.y.size), np.zeros(o2.y.size)]
            lm = ols_effect(np.r_[o1.y, o2.y], z)
            lm.pop("residuals")
            res["IS-LM"] = lm
    if not res:
        raise FileNotFoundError(str(cp))
    _write_json(out / "effect.json", res, cfg)
    return res


def cmd_gof(cfg: StudyConfig, n_draws: int = 20) -> dict:
    study = cfg.load_study()
    if not study.has_outcome:
        raise ConfigError("gof needs outcomes")
    out = _out(cfg)
    p = out / "chain.jsonl"
    if not p.exists():
        raise FileNotFoundError(str(p))
    chain = PosteriorChain.from_jsonl(p)
    idx = np.unique(np.linspace(0, len(chain) - 1, min(n_draws, len(chain))).astype(int))
    g = gof_sample(chain, study, _rng(cfg.seed, "gof"), idx)
    qq_export(g, out / "gof_qq.csv")
    pvals = np.array([k["p_value"] for k in g.ks])
    summary = {"draws": idx.tolist(), "ks": g.ks, "median_ks_p": float(np.median(pvals)),
               "fraction_p_below_0.01": float(np.mean(pvals < 0.01))}
    _write_json(out / "gof.json", summary, cfg)
    return summary


def cmd_pipeline(cfg: StudyConfig) -> dict:
    stages = [("fit_covariates", lambda: cmd_fit(cfg, covariates_only=True)),
              ("weights", lambda: cmd_weights(cfg)),
              ("resample", lambda: cmd_resample(cfg)),
              ("validate", lambda: cmd_validate(cfg))]
    if cfg.outcome != "none":
        stages += [("fit", lambda: cmd_fit(cfg)), ("effect", lambda: cmd_effect(cfg))]
    done = {}
    for name, fn in stages:
        try:
            r = fn()
        except Exception as e:
            raise StageError(name, e) from e
        done[name] = r if isinstance(r, dict) else str(r)
        log.info("stage %s done", name)
    return cmd_report(cfg.output)


def cmd_report(out: Path) -> dict:
    """Collect every JSON artifact in ``out`` into report.json."""
    out = Path(out)
    if not out.is_dir():
        raise FileNotFoundError(str(out))
    rep = {}
    hashes = set()
    for p in sorted(out.glob("*.json")):
        if p.name == "report.json":
            continue
        d = json.loads(p.read_text(encoding="utf-8"))
        rep[p.stem] = d
        if isinstance(d, dict) and "config_hash" in d:
            hashes.add(d["config_hash"])
    rep["provenance"] = {"config_hashes": sorted(hashes), "consistent": len(hashes) <= 1,
                         "version": __version__}
    _atomic_write(out / "report.json", json.dumps(rep, indent=2, sort_keys=True) + "\n")
    return rep


# -- simulation commands -----------------------------------------------------------

def cmd_simulate(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(STREAMS["simulate"],)))
    kind = args.scenario.upper()
    if kind == "GBM":
        db = gen_gbm_like(rng)
        study = gbm_survival_study(db, rng, n1=args.n1, hypothesis=args.hypothesis)
        outcome, oc = "survival", ("time", "status")
    else:
        spec = ScenarioSpec(kind, n1=args.n1, p=args.p, delta=args.delta)
        study = generate(spec, rng)
        outcome, oc = "continuous", ("y", "status")
    write_csv(study.treatment, out / "trial.csv", outcome_columns=oc)
    write_csv(study.rwd, out / "rwd.csv", outcome_columns=oc)
    schema = ", ".join(f"{n}:{l}" for n, l in study.schema.to_spec())
    ini = (f"[study]\ntreatment = trial.csv\nrwd = rwd.csv\nschema = {schema}\n"
           f"outcome = {outcome}\noutcome_columns = {', '.join(oc)}\nseed = {args.seed}\n"
           f"output = results\n\n[chain]\niters = {args.iters}\nburn_in = {args.burn_in}\n"
           f"thin = {args.thin}\n")
    _atomic_write(out / "study.ini", ini)
    meta = {k: v for k, v in study.meta.items() if k != "propensity"}
    _atomic_write(out / "truth.json", json.dumps(meta, default=_jsonable, sort_keys=True) + "\n")
    return out / "study.ini"


def cmd_power(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    chain = ChainConfig(iters=args.iters, burn_in=args.burn_in, thin=args.thin)
    st = AnalysisSettings(chain=chain, methods=tuple(args.methods))
    rows = []
    cid = 0
    for n1 in args.n1:
        for p in args.p:
            for delta in args.delta:
                cid += 1
                cell = PowerCell(ScenarioSpec(args.scenario, n1=n1, p=p, delta=delta),
                                 args.replicates, cid)
                try:
                    r = run_cell(cell, st, args.seed, args.workers)
                except ValueError as e:
                    log.warning("cell n1=%s p=%s delta=%s skipped: %s", n1, p, delta, e)
                    rows.append(dict(cell.label(), skipped=str(e)))
                    continue
                rows.append(r)
    with (out / "power.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "n1", "p", "delta", "method", "replicates", "power",
                    "null_rejection"])
        for r in rows:
            if "skipped" in r:
                continue
            for m in st.methods:
                w.writerow([r["scenario"], r["n1"], r["p"], r["delta"], m, r["replicates"],
                            r[f"{m}_power"], r[f"{m}_null_rejection"]])
    meta = {"seed": args.seed, "settings": st.to_dict(), "cells": rows}
    _atomic_write(out / "power.json", json.dumps(meta, indent=2, default=_jsonable) + "\n")
    return out / "power.csv"


# -- argument parsing ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="commonatoms",
                                 description="Synthetic control arms from real-world data "
                                             "with common-atoms mixtures.")
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    def study_cmd(name, help_):
        p = add(name, help_)
        p.add_argument("config", help="study INI file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="override the output directory")
        return p

    p = study_cmd("fit", "run the sampler and store the draws")
    p.add_argument("--covariates-only", action="store_true",
                   help="ignore outcomes (the fit used for importance weights)")
    study_cmd("weights", "importance weights of the RWD rows")
    study_cmd("resample", "draw the synthetic control arm")
    study_cmd("validate", "classifier AUC of trial vs synthetic control")
    study_cmd("effect", "model-based and two-step treatment effects")
    p = study_cmd("gof", "probability-integral-transform goodness of fit")
    p.add_argument("--draws", type=int, default=20)
    study_cmd("pipeline", "fit, weights, resample, validate and effect in one go")

    p = add("report", "collect the JSON artifacts of an output directory")
    p.add_argument("out")

    p = add("simulate", "write a simulated study (CSV + INI)")
    p.add_argument("--scenario", default="CAM",
                   choices=["CAM", "MIX", "INTERACTION", "ORACLE", "MULTIHISTORICAL", "GBM"],
                   type=str.upper)
    p.add_argument("--n1", type=int, default=50)
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--hypothesis", default="H0", choices=["H0", "H1"])
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--iters", type=int, default=6000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--thin", type=int, default=5)
    p.add_argument("--out", required=True)

    p = add("power", "calibrated power study over a grid of cells")
    p.add_argument("--scenario", default="CAM", type=str.upper,
                   choices=["CAM", "MIX", "INTERACTION", "ORACLE", "MULTIHISTORICAL"])
    p.add_argument("--n1", type=int, nargs="+", default=[50])
    p.add_argument("--p", type=int, nargs="+", default=[10])
    p.add_argument("--delta", type=float, nargs="+", default=[3.0])
    p.add_argument("--replicates", type=int, default=50)
    p.add_argument("--methods", nargs="+", default=["CA-PPMx", "IS-LM"],
                   choices=["CA-PPMx", "IS-LM"])
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--thin", type=int, default=2)
    p.add_argument("--out", required=True)
    return ap


_IO_ERRORS = (FileNotFoundError, ConfigError, DataError, PermissionError, IsADirectoryError)


def _fail(code: int, exc: BaseException, stage: str) -> int:
    msg = {"error": type(exc).__name__, "message": str(exc), "stage": stage}
    if isinstance(exc, FileNotFoundError):
        msg["path"] = exc.filename or str(exc)
    print(json.dumps(msg), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = args.command
    try:
        if args.command == "report":
            rep = cmd_report(Path(args.out))
            print(json.dumps(rep.get("provenance", {})))
            return 0
        if args.command == "simulate":
            print(cmd_simulate(args))
            return 0
        if args.command == "power":
            print(cmd_power(args))
            return 0
        cfg = load_config(args.config, seed=args.seed, output=args.out)
        if args.command == "fit":
            print(cmd_fit(cfg, args.covariates_only))
        elif args.command == "weights":
            print(cmd_weights(cfg))
        elif args.command == "resample":
            print(cmd_resample(cfg))
        elif args.command == "validate":
            print(json.dumps(cmd_validate(cfg), default=_jsonable))
        elif args.command == "effect":
            print(json.dumps(cmd_effect(cfg), default=_jsonable))
        elif args.command == "gof":
            print(json.dumps({k: v for k, v in cmd_gof(cfg, args.draws).items() if k != "ks"}))
        elif args.command == "pipeline":
            rep = cmd_pipeline(cfg)
            print(json.dumps(rep["provenance"]))
        return 0
    except StageError as e:
        code = 2 if isinstance(e.exc, _IO_ERRORS) else 1
        return _fail(code, e.exc, e.stage)
    except _IO_ERRORS as e:
        return _fail(2, e, stage)
    except (ValueError, InvariantViolation, ArithmeticError, np.linalg.LinAlgError) as e:
        return _fail(1, e, stage)


if __name__ == "__main__":
    sys.exit(main())
