"""Command line interface.

Every command accepts ``--config FILE`` (YAML or JSON) whose keys use the
option names with underscores; options given on the command line win.
"""

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import baselines as bl
from .benchmark import (
    ALPHA_COLUMNS, METHODS, PSD_COLUMNS, BenchmarkConfig, emit_tables, inspect_sites,
    run_benchmark,
)
from .dataio import load_dataset, load_tensors, save_dataset, write_csv
from .dataset import RecordingSet
from .estimator import OptimizerConfig, adapt_and_predict, train
from .exceptions import ConfigError, GopsaError
from .preprocess import RHO, CrossSpectralTensor, preprocess_recording
from .serialization import save_model
from .synthetic import SynthConfig, generate_synthetic

SYNTH_KEYS = ("d", "F", "K", "n_per_domain", "seed", "age_ranges", "intercept_strength",
              "signal_strength", "noise_sigma", "alpha_range", "reference_age",
              "shift_angle", "domain_ids")


def read_config(path):
    """Load a YAML or JSON mapping."""
    text = Path(path).read_text()
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _merge(ctx, config_path):
    """Command-line values override config-file values override defaults."""
    params = dict(ctx.params)
    if config_path:
        cfg = read_config(config_path)
        unknown = set(cfg) - set(params) - {"synth"}
        if unknown:
            raise click.BadParameter(f"unknown config keys {sorted(unknown)}",
                                     param_hint="--config")
        for key, value in cfg.items():
            source = ctx.get_parameter_source(key) if key in params else None
            if source is None or source.name in ("DEFAULT", "DEFAULT_MAP"):
                params[key] = value
    return params


def _csv_list(value):
    if value is None or isinstance(value, (list, tuple)):
        return value
    return [v.strip() for v in str(value).split(",") if v.strip()]


def _floats(value):
    items = _csv_list(value)
    return None if items is None else [float(v) for v in items]


def _combinations(value):
    """``"a,b;c,d"`` or a list of lists -> tuple of tuples."""
    if value is None:
        return ()
    if isinstance(value, str):
        value = [value]
    out = []
    for item in value:
        if isinstance(item, str):
            out += [tuple(_csv_list(part)) for part in item.split(";") if part.strip()]
        else:
            out.append(tuple(str(s) for s in item))
    return tuple(out)


def _synth_config(params):
    kwargs = {k: params[k] for k in SYNTH_KEYS if params.get(k) is not None}
    for key in ("age_ranges", "alpha_range"):
        if key in kwargs:
            kwargs[key] = _pairs(kwargs[key]) if key == "age_ranges" else tuple(kwargs[key])
    if "domain_ids" in kwargs:
        kwargs["domain_ids"] = tuple(_csv_list(kwargs["domain_ids"]))
    return SynthConfig(**kwargs)


def _pairs(value):
    if isinstance(value, str):
        value = [value]
    out = []
    for item in value:
        if isinstance(item, str):
            lo, hi = (float(v) for v in item.split(","))
        else:
            lo, hi = (float(v) for v in item)
        out.append((lo, hi))
    return tuple(out)


def _load_domains(params):
    if params.get("dataset"):
        return load_dataset(params["dataset"], shrinkage=params.get("shrinkage"))
    if params.get("synth"):
        return generate_synthetic(_synth_config(params["synth"]))
    raise click.UsageError("give --dataset or a 'synth' section in --config")


def _fail(exc):
    click.echo(f"error: {exc}", err=True)
    sys.exit(2)


@click.group()
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def main(verbose):
    """Geodesic optimization for predictive shift adaptation on SPD data."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@click.option("--d", "d", type=int, default=5, show_default=True)
@click.option("--F", "F", type=int, default=3, show_default=True)
@click.option("--K", "K", type=int, default=4, show_default=True)
@click.option("--n-per-domain", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--age-range", "age_ranges", multiple=True, help="'min,max'; repeat once per domain.")
@click.option("--intercept-strength", type=float, default=1.0, show_default=True)
@click.option("--signal-strength", type=float, default=40.0, show_default=True)
@click.option("--noise-sigma", type=float, default=0.02, show_default=True)
@click.option("--shift-angle", type=float, default=45.0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def synth(ctx, config_path, **_):
    """Write a synthetic multi-site dataset."""
    params = _merge(ctx, config_path)
    if not params.get("age_ranges"):
        params["age_ranges"] = None
    try:
        domains = generate_synthetic(_synth_config(params))
        manifest = save_dataset(domains, params["out"])
    except GopsaError as exc:
        _fail(exc)
    click.echo(f"wrote {len(domains)} domains to {manifest}")


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="Cross-spectra directory (tensors.json).")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--rho", type=float, default=RHO, show_default=True, help="Shrinkage.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def preprocess(ctx, config_path, **_):
    """Convert cross-spectral tensors to the co-spectrum dataset format."""
    params = _merge(ctx, config_path)
    try:
        domains = []
        freqs = None
        for dom_id, ids, ages, data, freqs in load_tensors(params["input_path"]):
            slices = [preprocess_recording(CrossSpectralTensor(x, freqs), params["rho"],
                                           recording=sid).slices
                      for sid, x in zip(ids, data)]
            domains.append(RecordingSet(dom_id, np.stack(slices), ages, ids, freqs))
        manifest = save_dataset(domains, params["out"], freqs)
    except GopsaError as exc:
        _fail(exc)
    click.echo(f"wrote {len(domains)} domains to {manifest}")


def _benchmark_config(params):
    kwargs = {
        "combinations": _combinations(params.get("sources")),
        "n_splits": params["n_splits"],
        "test_fraction": params["test_fraction"],
        "inner_cv_folds": params["folds"],
        "seed": params["seed"],
        "fit_intercept": params["fit_intercept"],
        "n_jobs": params["n_jobs"],
    }
    if params.get("targets"):
        kwargs["target_sites"] = tuple(_csv_list(params["targets"]))
    if params.get("lambda_grid"):
        kwargs["lambda_grid"] = tuple(_floats(params["lambda_grid"]))
    if params.get("methods"):
        kwargs["methods"] = tuple(_csv_list(params["methods"]))
    return BenchmarkConfig(**kwargs)


def _dataset_options(f):
    f = click.option("--dataset", type=click.Path(exists=True),
                     help="Dataset directory or manifest.")(f)
    f = click.option("--shrinkage", type=float, default=None,
                     help="Shrink matrices on load.")(f)
    return f


@main.command()
@_dataset_options
@click.option("--sources", multiple=True,
              help="Comma-separated source sites; repeat (or use ';') for several combinations.")
@click.option("--targets", default=None, help="Comma-separated target sites (default: the rest).")
@click.option("--n-splits", type=int, default=100, show_default=True)
@click.option("--test-fraction", type=float, default=0.5, show_default=True)
@click.option("--lambda-grid", default=None, help="Comma-separated penalties.")
@click.option("--folds", type=int, default=3, show_default=True, help="Inner CV folds.")
@click.option("--methods", default=",".join(METHODS), show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--fit-intercept/--no-intercept", default=True, show_default=True,
              help="GOPSA ridge intercept.")
@click.option("--n-jobs", type=int, default=1, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def benchmark(ctx, config_path, **_):
    """Run the source/target evaluation protocol and write result tables.

    Exits with status 1 when any cell failed.
    """
    params = _merge(ctx, config_path)
    try:
        cfg = _benchmark_config(params)
        if not cfg.combinations:
            raise ConfigError("no source combination given (--sources)")
        report = run_benchmark(cfg, _load_domains(params))
        out = emit_tables(report, params["out"])
    except (GopsaError, OSError) as exc:
        _fail(exc)
    click.echo(f"{len(report.records)} records, {len(report.failures)} failed cells -> {out}")
    if report.failures:
        sys.exit(1)


def _fit(method, sources, lam, fit_intercept):
    if method == "gopsa":
        return train(sources, lam, OptimizerConfig(), fit_intercept=fit_intercept)
    fits = {"noda": bl.no_da_fit, "recenter": bl.recenter_fit,
            "dointercept": bl.do_intercept_fit}
    if method == "dummy":
        return bl.do_dummy_fit()
    return fits[method](sources, lam)


def _split_sites(domains, sources, targets):
    by_id = {d.domain_id: d for d in domains}
    missing = [s for s in list(sources) + list(targets) if s not in by_id]
    if missing:
        raise ConfigError(f"unknown sites {missing}")
    return [by_id[s] for s in sources], [by_id[s] for s in targets]


@main.command()
@_dataset_options
@click.option("--sources", required=True, help="Comma-separated source sites.")
@click.option("--target", required=True, help="Target site.")
@click.option("--method", type=click.Choice(METHODS), default="gopsa", show_default=True)
@click.option("--lambda", "lam", type=float, default=1.0, show_default=True)
@click.option("--ybar", type=float, default=None,
              help="Known target mean outcome (default: mean of the target's ages).")
@click.option("--fit-intercept/--no-intercept", default=True, show_default=True)
@click.option("--save-model", type=click.Path(dir_okay=False), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def adapt(ctx, config_path, **_):
    """Fit on source sites, adapt to one target and print its predictions."""
    params = _merge(ctx, config_path)
    try:
        domains = _load_domains(params)
        sources, (target,) = _split_sites(domains, _csv_list(params["sources"]),
                                          [params["target"]])
        ybar = params["ybar"]
        if ybar is None:
            if not target.labeled:
                raise ConfigError("target has no ages; pass --ybar")
            ybar = target.mean_age
        model = _fit(params["method"], sources, params["lam"], params["fit_intercept"])
        alpha = None
        method = params["method"]
        if method == "gopsa":
            adaptation, pred = adapt_and_predict(target.unlabeled(), ybar, model)
            alpha = adaptation.alpha
        elif method == "dummy":
            pred = bl.do_dummy_predict(ybar, target.n_recordings)
        elif method == "noda":
            pred = bl.no_da_predict(model, target)
        elif method == "recenter":
            pred = bl.recenter_predict(model, target)
        else:
            pred = bl.do_intercept_predict(model, target, ybar)
        if params["save_model"] and method != "dummy":
            save_model(model, params["save_model"])
    except GopsaError as exc:
        _fail(exc)
    if alpha is not None:
        click.echo(f"# alpha={alpha!r}")
    click.echo("subject_id,prediction")
    for sid, p in zip(target.subject_ids, pred):
        click.echo(f"{sid},{float(p)!r}")


@main.command()
@_dataset_options
@click.option("--sources", required=True, help="Comma-separated source sites.")
@click.option("--targets", default=None, help="Comma-separated target sites (default: the rest).")
@click.option("--lambda", "lam", type=float, default=1.0, show_default=True)
@click.option("--fit-intercept/--no-intercept", default=True, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def inspect(ctx, config_path, **_):
    """Write fitted transports (alphas.csv) and transported mean spectra (psd.csv)."""
    params = _merge(ctx, config_path)
    try:
        domains = _load_domains(params)
        src_ids = _csv_list(params["sources"])
        tgt_ids = _csv_list(params["targets"]) or [d.domain_id for d in domains
                                                    if d.domain_id not in src_ids]
        sources, targets = _split_sites(domains, src_ids, tgt_ids)
        model = train(sources, params["lam"], OptimizerConfig(),
                      fit_intercept=params["fit_intercept"])
        alphas, psd = inspect_sites(",".join(src_ids), sources, targets, model)
    except GopsaError as exc:
        _fail(exc)
    out = Path(params["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "alphas.csv", ALPHA_COLUMNS, [[r[c] for c in ALPHA_COLUMNS] for r in alphas])
    write_csv(out / "psd.csv", PSD_COLUMNS, [[r[c] for c in PSD_COLUMNS] for r in psd])
    click.echo(f"wrote {len(alphas)} alpha rows and {len(psd)} psd rows to {out}")


if __name__ == "__main__":
    main()
