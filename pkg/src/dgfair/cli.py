"""Command-line entry point: generate, match, train, evaluate, sweep, verify.

Exit codes: 0 success, 1 a bound check failed its tolerance, 2 usage,
configuration or input error.  Every output file carries the hash of the
effective configuration (CSV files as a leading ``# config_hash=...`` line).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig
from .density_match import DensityMatcher, fit_analytic_matcher
from .domains import Dataset, spec_to_json
from .fatdm import METRIC_FIELDS, evaluate, pool_sources, sweep, train
from .models import load_checkpoint, model_to_dict
from .rng import child_seed
from .suite import run_verification

EXIT_OK, EXIT_BOUND, EXIT_USAGE = 0, 1, 2


class CliError(Exception):
    """Reported to stderr with exit code 2."""


# ---------------------------------------------------------------- helpers


def _load_config(path: str | None, seed: int | None, data_dir: str | None = None) -> ExperimentConfig:
    if path is None and data_dir is not None and (Path(data_dir) / "config.json").exists():
        path = str(Path(data_dir) / "config.json")
    if path is None:
        cfg = ExperimentConfig()
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot read config {path}: {exc.strerror}") from None
        cfg = ExperimentConfig.from_json(text)
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise CliError("--seed must be an unsigned 64-bit integer")
        cfg = replace(cfg, seed=seed, train=cfg.train.replace(seed=seed))
    return cfg


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _write(path: Path, text: str) -> str:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}") from None
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None


def _csv_with_hash(body: str, config_hash: str) -> str:
    return f"# config_hash={config_hash}\n{body}"


def _json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _load_manifest(data_dir: str) -> dict:
    return json.loads(_read(Path(data_dir) / "manifest.json"))


def _load_sources(data_dir: str, manifest: dict, split: str) -> list[Dataset]:
    base = Path(data_dir)
    return [Dataset.from_csv(_read(base / e[split])) for e in manifest["datasets"] if e["role"] == "source"]


def _load_target(data_dir: str, manifest: dict) -> Dataset:
    entry = next(e for e in manifest["datasets"] if e["role"] == "target")
    return Dataset.from_csv(_read(Path(data_dir) / entry["train"]))


def _matcher(cfg: ExperimentConfig, data_dir: str | None) -> DensityMatcher:
    if data_dir is not None and (Path(data_dir) / "matcher.json").exists():
        return DensityMatcher.from_json(_read(Path(data_dir) / "matcher.json"))
    doms = cfg.domains()
    return fit_analytic_matcher([doms[k] for k in cfg.source_indices()], seed=cfg.seed)


# ---------------------------------------------------------------- subcommands


def cmd_generate(args) -> int:
    cfg = _load_config(args.config, args.seed)
    out = _out_dir(args.out)
    h = cfg.config_hash()
    doms = cfg.domains()
    train_sets, held_sets, target = cfg.datasets()
    files, datasets = {}, []
    files["config.json"] = _write(out / "config.json", cfg.to_json() + "\n")
    for k, spec in enumerate(doms):
        name = f"domain_{k}.spec.json"
        files[name] = _write(out / name, _json({"config_hash": h, "spec": json.loads(spec_to_json(spec))}))
    name = "target.spec.json"
    files[name] = _write(out / name, _json({"config_hash": h, "spec": json.loads(spec_to_json(cfg.target_spec(doms)))}))
    for k, tr, he in zip(cfg.source_indices(), train_sets, held_sets):
        tr_name, he_name = f"source_{k}_train.csv", f"source_{k}_heldout.csv"
        files[tr_name] = _write(out / tr_name, _csv_with_hash(tr.to_csv(), h))
        files[he_name] = _write(out / he_name, _csv_with_hash(he.to_csv(), h))
        datasets.append({
            "domain": k, "role": "source", "train": tr_name, "heldout": he_name,
            "n_train": len(tr), "n_heldout": len(he),
            "seeds": {"train": child_seed(cfg.seed, "data", str(k), "train"), "heldout": child_seed(cfg.seed, "data", str(k), "heldout")},
        })
    files["target.csv"] = _write(out / "target.csv", _csv_with_hash(target.to_csv(), h))
    datasets.append({
        "domain": cfg.target_index if cfg.target_index is not None else -1, "role": "target", "train": "target.csv",
        "n_train": len(target), "seeds": {"train": child_seed(cfg.seed, "data", "target")},
    })
    manifest = {"config_hash": h, "seed": cfg.seed, "num_domains": cfg.num_domains, "datasets": datasets, "sha256": files, "version": __version__}
    _write(out / "manifest.json", _json(manifest))
    print(f"wrote {len(datasets)} datasets to {out}")
    return EXIT_OK


def cmd_match(args) -> int:
    cfg = _load_config(args.config, args.seed)
    out = _out_dir(args.out)
    doms = cfg.domains()
    m = fit_analytic_matcher([doms[k] for k in cfg.source_indices()], seed=cfg.seed)
    obj = json.loads(m.to_json())
    obj["config_hash"] = cfg.config_hash()
    obj["source_domains"] = cfg.source_indices()
    _write(out / "matcher.json", _json(obj))
    n_approx = sum(m.approximate.values())
    print(f"fitted {len(m.maps_y)} y-maps ({n_approx} approximate) and {len(m.maps_ya)} (y,a)-maps")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args.config, args.seed, getattr(args, "data", None))
    out = _out_dir(args.out)
    manifest = _load_manifest(args.data)
    sources = _load_sources(args.data, manifest, "train")
    matcher = _matcher(cfg, args.data)
    enc, clf, hist = train(cfg.train, sources, matcher)
    h = cfg.config_hash()
    ck = model_to_dict(enc, clf, h)
    ck["train_config"] = cfg.train.to_dict()
    _write(out / "checkpoint.json", _json(ck))
    _write(out / "history.csv", _csv_with_hash(hist.to_csv(), h))
    print(f"trained {len(hist)} epochs; final total loss {hist.total[-1]:.6f}" if len(hist) else "trained 0 epochs")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        enc, clf, ck = load_checkpoint(args.checkpoint)
    except OSError as exc:
        raise CliError(f"cannot read checkpoint {args.checkpoint}: {exc.strerror}") from None
    except (KeyError, ValueError) as exc:
        raise CliError(f"invalid checkpoint {args.checkpoint}: {exc}") from None
    ds = Dataset.from_csv(_read(Path(args.dataset)))
    if ds.feature_dim != enc.input_dim:
        raise CliError(f"checkpoint expects {enc.input_dim} features but {args.dataset} has {ds.feature_dim}")
    tc = ck.get("train_config", {})
    seed = args.seed if args.seed is not None else int(tc.get("seed", 0))
    row = evaluate(enc, clf, ds, int(tc.get("z_draws", 16)), seed)
    h = ck.get("config_hash", "")
    doc = {"config_hash": h, "checkpoint": Path(args.checkpoint).name, "dataset": Path(args.dataset).name, "seed": seed, "metrics": row.to_dict()}
    if args.out is None:
        sys.stdout.write(_json(doc))
        return EXIT_OK
    out = _out_dir(args.out)
    _write(out / "metrics.json", _json(doc))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["domain"] + METRIC_FIELDS)
    w.writerow([row.domain] + [repr(float(getattr(row, f))) for f in METRIC_FIELDS])
    _write(out / "metrics.csv", _csv_with_hash(buf.getvalue(), h))
    print(f"wrote metrics to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config, args.seed, getattr(args, "data", None))
    out = _out_dir(args.out)
    manifest = _load_manifest(args.data)
    sources = _load_sources(args.data, manifest, "train")
    heldout = pool_sources(_load_sources(args.data, manifest, "heldout"))
    target = _load_target(args.data, manifest)
    matcher = _matcher(cfg, args.data)
    sc = cfg.sweep
    res = sweep(cfg.train, sc.omega_grid, sc.gamma_grid, sc.seeds, sources, heldout, target, matcher, jobs=args.jobs)
    h = cfg.config_hash()
    _write(out / "sweep.csv", _csv_with_hash(res.to_csv(), h))
    if res.errors:
        errs = [{"omega": o, "gamma": g, "seed": s, "error": e} for o, g, s, e in res.errors]
        _write(out / "sweep_errors.json", _json({"config_hash": h, "errors": errs}))
    print(f"{len(res.rows) // 2} cells evaluated, {len(res.errors)} failed")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load_config(args.config, args.seed, getattr(args, "data", None))
    out = _out_dir(args.out)
    v = cfg.verify
    doms = cfg.domains()
    reports = run_verification(doms, cfg.source_indices(), cfg.target_spec(doms), v.n, child_seed(cfg.seed, "verify", str(v.seed)), v.instances, v.k, v.n_means)
    h = cfg.config_hash()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theorem", "instances", "passed", "holds"])
    all_ok = True
    for name, reps in reports.items():
        docs = [r.to_dict() for r in reps]
        _write(out / f"verify_{name}.json", json.dumps({"config_hash": h, "theorem": name, "reports": docs}, indent=1, default=_default) + "\n")
        passed = sum(bool(r.holds) for r in reps)
        ok = passed == len(reps)
        all_ok &= ok
        w.writerow([name, len(reps), passed, "yes" if ok else "no"])
    _write(out / "summary.csv", _csv_with_hash(buf.getvalue(), h))
    sys.stdout.write(buf.getvalue())
    return EXIT_OK if all_ok else EXIT_BOUND


def _default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dgfair", description="Fair domain generalization laboratory on synthetic Gaussian domains.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data: bool = False, jobs: bool = False):
        sp.add_argument("--config", help="experiment config (JSON); defaults to config.json under --data, else the shipped config")
        sp.add_argument("--seed", type=int, help="root seed (unsigned 64-bit); overrides the config")
        sp.add_argument("--out", required=True, help="output directory")
        if data:
            sp.add_argument("--data", required=True, help="directory written by 'generate'")
        if jobs:
            sp.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")

    common(sub.add_parser("generate", help="sample the domain family and write datasets and specs"))
    common(sub.add_parser("match", help="fit the analytic density matcher"))
    common(sub.add_parser("train", help="train encoder and classifier on the source datasets"), data=True)
    ev = sub.add_parser("evaluate", help="metrics of a checkpoint on one dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--seed", type=int)
    ev.add_argument("--out", help="output directory (default: JSON on stdout)")
    common(sub.add_parser("sweep", help="train and evaluate over the omega x gamma x seed grid"), data=True, jobs=True)
    vp = sub.add_parser("verify", help="run the bound checks; exit 1 if any fails")
    common(vp)
    vp.add_argument("--data", help="directory written by 'generate' (its config.json is used)")
    return p


COMMANDS = {
    "generate": cmd_generate,
    "match": cmd_match,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (CliError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
