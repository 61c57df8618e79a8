"""Command-line workflow: generate -> train -> detect -> evaluate / sweep.

Every subcommand writes a ``<output>.manifest.json`` next to its primary
output recording the resolved parameters, seed, inputs, outputs, tool
version and wall time. ``etlwatch replay <manifest>`` re-runs the recorded
subcommand and reproduces the primary outputs byte-identically.

Exit codes: 0 on success, 1 on runtime failure (IO, divergence, bad data),
2 on usage or flag-validation errors.
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import click

from . import __version__
from .autoencoder import TrainConfig, load_model, save_model, train
from .detector import (
    DetectionResult,
    DetectorConfig,
    StreamError,
    batch_scores,
    calibrate_threshold,
    read_detections_jsonl,
    score_stream,
    write_detections_csv,
    write_detections_jsonl,
)
from .errors import EtlwatchError
from .evaluation import (
    MetricsReport,
    emit_report,
    make_bundle,
    metrics_at_threshold,
    metrics_to_dict,
    report_filename,
    sweep_latent_dim,
    sweep_learning_rate,
)
from .preprocess import (
    EtlEvent,
    FeatureSchema,
    fit_stats,
    parse_event,
    replace_event_id,
    standardize,
    vectorize_events,
)
from .streamgen import (
    ANOMALY_CLASSES,
    AnomalyMix,
    StreamConfig,
    generate as generate_stream,
    read_labeled_events,
    write_labeled_events,
)


def _read_records(path: str | Path) -> tuple[list[EtlEvent], list[bool | None]]:
    """Read an event file; labels come back as None when absent."""
    events: list[EtlEvent] = []
    labels: list[bool | None] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            event = parse_event(record)
            if not event.event_id:
                event = replace_event_id(event, f"line-{line_no}")
            events.append(event)
            labels.append(bool(record["label"]) if "label" in record else None)
    return events, labels


def _manifest_path(primary_output: str | Path) -> Path:
    return Path(str(primary_output) + ".manifest.json")


def _write_manifest(
    subcommand: str,
    params: dict,
    inputs: list[str],
    outputs: list[str],
    extras: dict,
    started: float,
) -> None:
    manifest = {
        "subcommand": subcommand,
        "params": params,
        "seed": params.get("seed"),
        "inputs": inputs,
        "outputs": outputs,
        "tool_version": __version__,
        "wall_time_s": time.perf_counter() - started,
    }
    manifest.update(extras)
    with open(_manifest_path(outputs[0]), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def _execute(subcommand: str, params: dict) -> None:
    started = time.perf_counter()
    runner = _RUNNERS[subcommand]
    try:
        inputs, outputs, extras = runner(params)
    except (EtlwatchError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    _write_manifest(subcommand, params, inputs, outputs, extras, started)


# --- runners (shared by the flag-parsing commands and `replay`) -------------

def _run_generate(params: dict) -> tuple[list[str], list[str], dict]:
    mix = AnomalyMix(**params["mix"])
    cfg = StreamConfig(
        n_events=params["n"],
        anomaly_rate=params["anomaly_rate"],
        mix=mix,
        seed=params["seed"],
    )
    events = generate_stream(cfg)
    write_labeled_events(events, params["out"], holdout=params["holdout"])
    n_anomalies = sum(1 for e in events if e.label)
    click.echo(f"wrote {len(events)} events ({n_anomalies} anomalous) to {params['out']}")
    return [], [params["out"]], {"n_anomalies": n_anomalies}


def _train_config(params: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=params["lr"],
        l1_penalty=params["l1_penalty"],
        epochs=params["epochs"],
        batch_size=params["batch"],
        seed=params["seed"],
        latent_dim=params["k"],
    )


def _run_train(params: dict) -> tuple[list[str], list[str], dict]:
    events, labels = _read_records(params["stream"])
    if any(label is not None for label in labels):
        events = [e for e, label in zip(events, labels) if not label]
    schema = FeatureSchema()
    x_raw = vectorize_events(events, schema)
    stats = fit_stats(x_raw)
    params_out, history = train(standardize(x_raw, stats), _train_config(params))
    save_model(params["out"], params_out, stats, schema)

    history_path = Path(params["out"]).with_suffix(".history.csv")
    with open(history_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "l_rec", "l_reg", "l_total", "seconds"])
        for epoch, (loss, seconds) in enumerate(
            zip(history.losses, history.epoch_seconds)
        ):
            writer.writerow(
                [epoch, repr(loss.l_rec), repr(loss.l_reg), repr(loss.l_total),
                 f"{seconds:.6f}"]
            )
    final = history.losses[-1]
    click.echo(
        f"trained on {x_raw.shape[0]} events for {len(history)} epochs, "
        f"final loss {final.l_total:.6f}"
    )
    return [params["stream"]], [params["out"], str(history_path)], {}


def _run_detect(params: dict) -> tuple[list[str], list[str], dict]:
    model, stats, schema = load_model(params["model"])
    events, truth = _read_records(params["stream"])

    if params["delta"] is not None:
        delta = params["delta"]
    else:
        val_events, val_labels = _read_records(params["calibrate"])
        if any(label is not None for label in val_labels):
            val_events = [e for e, label in zip(val_events, val_labels) if not label]
        x_val = standardize(vectorize_events(val_events, schema), stats)
        delta = calibrate_threshold(batch_scores(model, x_val), params["quantile"])

    results = score_stream(
        model, stats, events, schema, DetectorConfig(delta=delta), truth_labels=truth
    )
    out = params["out"]
    write_detections_jsonl(results, out)
    write_detections_csv(results, Path(out).with_suffix(".csv"))
    flagged = sum(1 for r in results if isinstance(r, DetectionResult) and r.is_anomaly)
    errors = sum(1 for r in results if not isinstance(r, DetectionResult))
    click.echo(
        f"scored {len(results)} events at delta={delta!r}: "
        f"{flagged} anomalies, {errors} error records"
    )
    inputs = [params["stream"], params["model"]]
    if params["delta"] is None:
        inputs.append(params["calibrate"])
    return inputs, [out, str(Path(out).with_suffix(".csv"))], {"delta": delta}


def _run_evaluate(params: dict) -> tuple[list[str], list[str], dict]:
    records = read_detections_jsonl(params["detections"])
    scored = [r for r in records if not isinstance(r, StreamError)]
    if not scored or any(r.truth_label is None for r in scored):
        raise EtlwatchError(
            "evaluation needs ground truth: the detection file must carry "
            "truth_label on every scored record"
        )
    delta = params.get("delta")
    if delta is None:
        manifest_path = _manifest_path(params["detections"])
        if not manifest_path.exists():
            raise EtlwatchError(
                f"no --delta given and no manifest found at {manifest_path}"
            )
        with open(manifest_path, encoding="utf-8") as fh:
            delta = json.load(fh)["delta"]
    report = metrics_at_threshold(
        [r.score for r in scored], [r.truth_label for r in scored], delta
    )
    _write_metrics_report(report, params["out"], params["format"])
    click.echo(
        f"n={report.n} auc={report.auc:.4f} acc={report.acc:.4f} "
        f"precision={_fmt(report.precision)} recall={_fmt(report.recall)}"
    )
    return [params["detections"]], [params["out"]], {"delta": delta}


def _run_sweep(params: dict) -> tuple[list[str], list[str], dict]:
    labeled = read_labeled_events(params["stream"])
    bundle = make_bundle(labeled)
    base = _train_config(params)
    seed = params["seed"]
    if params["knob"] == "lr":
        grid = [float(v) for v in params["grid"]]
        result = sweep_learning_rate(base, grid, bundle, seed)
    else:
        grid = [int(v) for v in params["grid"]]
        result = sweep_latent_dim(base, grid, bundle, seed)
    out_dir = Path(params["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for fmt in ("csv", "json"):
        out_path = out_dir / report_filename(result.knob, seed, fmt)
        emit_report(result, out_path, fmt)
        outputs.append(str(out_path))
    for entry in result.entries:
        if entry.overcomplete:
            click.echo(
                f"note: {result.knob}={entry.knob_value:g} is overcomplete "
                f"(latent dimension exceeds input dimension)"
            )
        if entry.diverged:
            click.echo(f"note: {result.knob}={entry.knob_value:g} diverged")
    click.echo(f"sweep reports written to {outputs[0]} and {outputs[1]}")
    return [params["stream"]], outputs, {}


_RUNNERS = {
    "generate": _run_generate,
    "train": _run_train,
    "detect": _run_detect,
    "evaluate": _run_evaluate,
    "sweep": _run_sweep,
}


def _fmt(value: float | None) -> str:
    return "undefined" if value is None else f"{value:.4f}"


def _write_metrics_report(report: MetricsReport, path: str, fmt: str) -> None:
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(metrics_to_dict(report), fh, indent=1)
            fh.write("\n")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["auc", "acc", "precision", "recall", "tp", "fp", "tn", "fn", "n", "delta_used"]
        )
        confusion = report.confusion
        writer.writerow(
            [
                repr(report.auc),
                repr(report.acc),
                "" if report.precision is None else repr(report.precision),
                "" if report.recall is None else repr(report.recall),
                confusion.tp, confusion.fp, confusion.tn, confusion.fn,
                report.n, repr(report.delta_used),
            ]
        )


# --- flag parsing -------------------------------------------------------------

def _parse_mix(ctx: object, param: object, value: str) -> dict:
    weights = {}
    try:
        for part in value.split(","):
            name, _, raw = part.partition("=")
            name = name.strip()
            if name not in ANOMALY_CLASSES:
                raise ValueError(f"unknown class {name!r}")
            weights[name] = float(raw)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    missing = set(ANOMALY_CLASSES) - set(weights)
    if missing:
        raise click.BadParameter(f"mix is missing classes: {sorted(missing)}")
    if any(w < 0 for w in weights.values()) or abs(sum(weights.values()) - 1.0) > 1e-9:
        raise click.BadParameter("mix weights must be non-negative and sum to 1")
    return weights


def _check_rate(ctx: object, param: object, value: float) -> float:
    if not 0.0 <= value < 1.0:
        raise click.BadParameter("must lie in [0, 1)")
    return value


def _check_positive(ctx: object, param: object, value: float) -> float:
    if value is not None and value <= 0:
        raise click.BadParameter("must be > 0")
    return value


def _check_non_negative(ctx: object, param: object, value: float) -> float:
    if value is not None and value < 0:
        raise click.BadParameter("must be >= 0")
    return value


def _check_quantile(ctx: object, param: object, value: float) -> float:
    if not 0.0 < value < 1.0:
        raise click.BadParameter("must lie strictly inside (0, 1)")
    return value


def _train_options(fn):
    for option in reversed(
        [
            click.option("--lr", type=float, default=0.001, show_default=True,
                         callback=_check_positive, help="SGD learning rate."),
            click.option("--k", type=int, default=32, show_default=True,
                         callback=_check_positive, help="Latent dimension."),
            click.option("--lambda", "l1_penalty", type=float, default=1e-4,
                         show_default=True, callback=_check_non_negative,
                         help="L1 coefficient on the latent representation."),
            click.option("--epochs", type=int, default=50, show_default=True,
                         callback=_check_positive),
            click.option("--batch", type=int, default=64, show_default=True,
                         callback=_check_positive),
        ]
    ):
        fn = option(fn)
    return fn


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Autoencoder-based anomaly detection for ETL event streams."""


@main.command("generate")
@click.option("--n", type=int, default=10_000, show_default=True,
              callback=_check_positive, help="Number of events.")
@click.option("--anomaly-rate", type=float, default=0.05, show_default=True,
              callback=_check_rate)
@click.option("--mix", default="delay=0.25,missing=0.25,duplicate=0.25,spike=0.25",
              show_default=True, callback=_parse_mix,
              help="Per-class anomaly weights.")
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--holdout", is_flag=True,
              help="Write labels to a sibling file instead of inline fields.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def cmd_generate(n, anomaly_rate, mix, seed, holdout, out):
    """Generate a labeled synthetic event stream."""
    _execute("generate", {
        "n": n, "anomaly_rate": anomaly_rate, "mix": mix, "seed": seed,
        "holdout": holdout, "out": out,
    })


@main.command("train")
@click.argument("stream", type=click.Path(exists=True, dir_okay=False))
@_train_options
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Model file; a .history.csv is written next to it.")
def cmd_train(stream, lr, k, l1_penalty, epochs, batch, seed, out):
    """Fit standardization stats and train the autoencoder.

    When the stream carries labels, only normal-labeled records are used.
    Unlabeled streams are trained on wholesale; anomaly contamination up to
    a few percent is tolerated because normal traffic dominates the fit.
    """
    _execute("train", {
        "stream": stream, "lr": lr, "k": k, "l1_penalty": l1_penalty,
        "epochs": epochs, "batch": batch, "seed": seed, "out": out,
    })


@main.command("detect")
@click.argument("stream", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--delta", type=float, default=None, callback=_check_non_negative,
              help="Explicit threshold.")
@click.option("--calibrate", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Validation stream whose normal scores calibrate the threshold.")
@click.option("--quantile", type=float, default=0.95, show_default=True,
              callback=_check_quantile)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def cmd_detect(stream, model, delta, calibrate, quantile, out):
    """Score a stream against the threshold; one output record per event."""
    if (delta is None) == (calibrate is None):
        raise click.UsageError("give exactly one of --delta or --calibrate")
    _execute("detect", {
        "stream": stream, "model": model, "delta": delta,
        "calibrate": calibrate, "quantile": quantile, "out": out,
    })


@main.command("evaluate")
@click.argument("detections", type=click.Path(exists=True, dir_okay=False))
@click.option("--delta", type=float, default=None, callback=_check_non_negative,
              help="Threshold used; defaults to the detect run's manifest value.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="json",
              show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def cmd_evaluate(detections, delta, fmt, out):
    """Compute AUC/ACC/precision/recall from a detection file with truth labels."""
    _execute("evaluate", {
        "detections": detections, "delta": delta, "format": fmt, "out": out,
    })


@main.command("sweep")
@click.argument("stream", type=click.Path(exists=True, dir_okay=False))
@click.option("--knob", type=click.Choice(["lr", "k"]), required=True)
@click.option("--grid", required=True,
              help="Comma-separated knob values, e.g. 0.0001,0.001,0.01")
@_train_options
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--out-dir", default=".", show_default=True,
              type=click.Path(file_okay=False))
def cmd_sweep(stream, knob, grid, lr, k, l1_penalty, epochs, batch, seed, out_dir):
    """Retrain across a knob grid and emit sweep_<knob>_<seed>.{csv,json}."""
    try:
        values = [float(v) for v in grid.split(",") if v.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"--grid must be comma-separated numbers: {exc}") from exc
    if not values:
        raise click.BadParameter("--grid must list at least one value")
    _execute("sweep", {
        "stream": stream, "knob": knob, "grid": values, "lr": lr, "k": k,
        "l1_penalty": l1_penalty, "epochs": epochs, "batch": batch,
        "seed": seed, "out_dir": out_dir,
    })


@main.command("replay")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
def cmd_replay(manifest):
    """Re-run the subcommand recorded in a manifest file."""
    with open(manifest, encoding="utf-8") as fh:
        payload = json.load(fh)
    subcommand = payload.get("subcommand")
    if subcommand not in _RUNNERS:
        raise click.UsageError(f"manifest names unknown subcommand {subcommand!r}")
    _execute(subcommand, payload["params"])


if __name__ == "__main__":
    main()
