"""Command-line entry point.

Every subcommand is deterministic given its inputs, flags, and --seed.
Validation failures exit 2 (usage) or 1 (runtime) with a structured message;
--json switches the summary output to machine-readable JSON.
"""
from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import wire
from .core import ConditionSpec, DatasetSchema, LayoutError, read_jsonl, write_jsonl
from .denoiser import DenoiserConfig
from .ingest import IngestError, ingest as run_ingest, split_of, stats, synth as run_synth
from .metrics import CriticBundle, CriticConfig, evaluate, train_fid_critic
from .render import save_gallery, save_layout, save_metric_bars
from .sampler import Sampler, SamplerError, draw_component_count
from .training import TrainConfig, train as run_train

ABLATION_CHOICES = ("none", "edit-only-inference", "no-cond-embed", "class-first", "boxes-first")


def _ablation_internal(name: str) -> str:
    return "edit-only" if name == "edit-only-inference" else name


def _fail(message: str, as_json: bool) -> None:
    if as_json:
        click.echo(json.dumps({"status": "error", "error": message}))
    else:
        click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _emit(payload: dict, as_json: bool) -> None:
    if as_json:
        click.echo(json.dumps(payload, indent=2))
    else:
        for key, value in payload.items():
            click.echo(f"{key}: {value}")


def _load_schema(path: str | None) -> DatasetSchema | None:
    if path is None:
        return None
    return DatasetSchema.from_dict(json.loads(Path(path).read_text()))


@click.group()
def main() -> None:
    """Layout diffusion toolkit: data, training, sampling, metrics, serving."""


@main.command("ingest")
@click.option("--source", required=True, type=click.Path(exists=True))
@click.option("--adapter", required=True,
              type=click.Choice(["rico", "publaynet", "magazine", "canonical"]))
@click.option("--out", required=True, type=click.Path())
@click.option("--schema", "schema_path", type=click.Path(exists=True),
              help="JSON schema file; defaults per adapter")
@click.option("--manifest", type=click.Path(exists=True),
              help="explicit split manifest (id -> train/val/test)")
@click.option("--json", "as_json", is_flag=True)
def ingest_cmd(source, adapter, out, schema_path, manifest, as_json):
    """Convert a dataset dump into canonical train/val/test files."""
    try:
        schema, report = run_ingest(
            source, adapter, out, schema=_load_schema(schema_path), split_manifest=manifest
        )
    except (IngestError, LayoutError, OSError) as exc:
        _fail(str(exc), as_json)
    _emit({"status": "ok", "schema": schema.name, **report.to_dict()}, as_json)


@main.command("synth")
@click.option("--profile", required=True,
              type=click.Choice(["two-column-doc", "grid", "mobile-list"]))
@click.option("--n", required=True, type=int)
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, type=int)
@click.option("--json", "as_json", is_flag=True)
def synth_cmd(profile, n, out, seed, as_json):
    """Generate a synthetic dataset with known structure, already split."""
    try:
        schema, layouts = run_synth(profile, n, seed=seed)
    except ValueError as exc:
        _fail(str(exc), as_json)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    buckets = {"train": [], "val": [], "test": []}
    for i, layout in enumerate(layouts):
        buckets[split_of(f"{profile}-{seed}-{i}")].append(layout)
    for split, items in buckets.items():
        write_jsonl(out / f"{split}.jsonl", items)
    (out / "schema.json").write_text(json.dumps(schema.to_dict(), indent=2))
    (out / "stats.json").write_text(json.dumps(stats(buckets["train"]).to_dict(), indent=2))
    _emit(
        {"status": "ok", "profile": profile,
         **{f"n_{k}": len(v) for k, v in buckets.items()}},
        as_json,
    )


@main.command("train")
@click.option("--data", required=True, type=click.Path(exists=True),
              help="dataset directory holding train.jsonl/val.jsonl/schema.json")
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="JSON config {train: {...}, model: {...}}; flags override")
@click.option("--steps", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--ablation", type=click.Choice(ABLATION_CHOICES), default=None)
@click.option("--profile", type=click.Choice(["desk", "full"]), default="desk")
@click.option("--resume", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
def train_cmd(data, out, config_path, steps, batch_size, lr, seed, ablation,
              profile, resume, as_json):
    """Train the denoiser on a canonical dataset."""
    data = Path(data)
    try:
        schema = DatasetSchema.from_dict(json.loads((data / "schema.json").read_text()))
        train_set = read_jsonl(data / "train.jsonl", schema)
        val_path = data / "val.jsonl"
        val_set = read_jsonl(val_path, schema) if val_path.exists() else None

        file_cfg = json.loads(Path(config_path).read_text()) if config_path else {}
        train_kwargs = dict(file_cfg.get("train", {}))
        for key, value in (("total_steps", steps), ("batch_size", batch_size),
                           ("lr", lr), ("seed", seed)):
            if value is not None:
                train_kwargs[key] = value
        if ablation is not None:
            train_kwargs["ablation"] = _ablation_internal(ablation)
        cfg = TrainConfig(**train_kwargs)

        model_kwargs = dict(file_cfg.get("model", {}))
        model_kwargs.setdefault("K", schema.K)
        model_kwargs.setdefault("n_max", schema.n_max)
        if profile == "desk":
            mcfg = DenoiserConfig.desk(**model_kwargs)
        else:
            mcfg = DenoiserConfig(**model_kwargs)
        path = run_train(train_set, schema, mcfg, cfg, out,
                         val_layouts=val_set, resume=resume)
    except (ValueError, OSError) as exc:
        _fail(str(exc), as_json)
    _emit({"status": "ok", "checkpoint": str(path), "steps": cfg.total_steps,
           "log": str(Path(path).with_suffix(".log.csv"))}, as_json)


@main.command("sample")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["category", "category-size", "unconditioned"]),
              help="named scenario applied against --ref")
@click.option("--ref", type=click.Path(exists=True),
              help="reference layouts for the named scenarios")
@click.option("--cond-file", type=click.Path(exists=True),
              help="JSON file with a list of {n_components, condition} requests")
@click.option("--n", "n_samples", type=int, default=None,
              help="number of layouts (defaults to the reference set size)")
@click.option("--seed", default=0, type=int)
@click.option("--edit-only", is_flag=True, help="inference-only conditioning")
@click.option("--process", type=click.Choice(["joint", "class-first", "boxes-first"]),
              default="joint")
@click.option("--render", "render_path", type=click.Path(),
              help="also save a gallery figure (suffix decides svg/png)")
@click.option("--json", "as_json", is_flag=True)
def sample_cmd(ckpt, out, mode, ref, cond_file, n_samples, seed, edit_only,
               process, render_path, as_json):
    """Generate layouts from a checkpoint under a conditioning scenario."""
    try:
        sampler = Sampler.from_path(ckpt)
        schema = sampler.schema
        pairing: list[int] | None = None
        if cond_file:
            requests = json.loads(Path(cond_file).read_text())
            if isinstance(requests, dict):
                requests = [requests]
            specs = [
                wire.condition_to_spec(r["n_components"], r.get("condition", []), schema)
                for r in requests
            ]
        elif mode in ("category", "category-size"):
            if not ref:
                raise SamplerError(f"--mode {mode} needs --ref")
            refs = read_jsonl(ref, schema)
            count = n_samples or len(refs)
            pairing = [i % len(refs) for i in range(count)]
            specs = [wire.scenario_spec(refs[j], mode) for j in pairing]
        elif mode == "unconditioned":
            count = n_samples or 16
            rng = np.random.default_rng([seed, 0xC0])
            hist = sampler.checkpoint.meta.get("count_hist", {})
            specs = [
                ConditionSpec.empty(draw_component_count(rng, hist))
                for _ in range(count)
            ]
        else:
            raise SamplerError("pass either --cond-file or --mode")

        layouts = sampler.generate_batch(specs, seed=seed, edit_only=edit_only, mode=process)
        write_jsonl(out, layouts)
        if pairing is not None:
            Path(str(out) + ".pairing.json").write_text(json.dumps(pairing))
        if render_path:
            save_gallery(layouts, schema, render_path)
    except (SamplerError, wire.WireError, LayoutError, ValueError, OSError, KeyError) as exc:
        _fail(str(exc), as_json)
    _emit({"status": "ok", "n_layouts": len(layouts), "out": str(out)}, as_json)


@main.command("evaluate")
@click.option("--gen", "gen_paths", multiple=True, required=True, type=click.Path(exists=True),
              help="generated layout file; repeat for one file per trial")
@click.option("--ref", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--critic", "critic_path", type=click.Path(exists=True))
@click.option("--trials", type=int, default=None,
              help="split a single --gen file into this many equal trials")
@click.option("--paired", is_flag=True,
              help="DocSim pairing gen[i] <-> ref[i mod len(ref)] (or .pairing.json)")
@click.option("--out", required=True, type=click.Path(), help="report directory")
@click.option("--raster", type=int, default=256)
@click.option("--json", "as_json", is_flag=True)
def evaluate_cmd(gen_paths, ref, schema_path, critic_path, trials, paired, out,
                 raster, as_json):
    """Metric report over one or more generation trials (mean and std rows)."""
    try:
        schema = _load_schema(schema_path)
        refs = read_jsonl(ref, schema)
        critic = CriticBundle.load(critic_path) if critic_path else None

        trial_sets: list[tuple[list, list[int] | None]] = []
        if len(gen_paths) == 1 and trials and trials > 1:
            layouts = read_jsonl(gen_paths[0], schema)
            pairing = _pairing_for(gen_paths[0], len(layouts), len(refs), paired)
            chunk = len(layouts) // trials
            if chunk == 0:
                raise ValueError(f"{len(layouts)} layouts cannot fill {trials} trials")
            for i in range(trials):
                sel = slice(i * chunk, (i + 1) * chunk)
                trial_sets.append(
                    (layouts[sel], pairing[sel] if pairing is not None else None)
                )
        else:
            for path in gen_paths:
                layouts = read_jsonl(path, schema)
                trial_sets.append(
                    (layouts, _pairing_for(path, len(layouts), len(refs), paired))
                )

        rows = []
        for i, (layouts, pairing) in enumerate(trial_sets):
            report = evaluate(layouts, refs, critic=critic, pairing=pairing, raster=raster)
            rows.append({"trial": i, **report.to_dict()})

        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        metric_names = ["overlap", "piou", "alignment", "docsim", "fid"]
        summary = {}
        for name in metric_names:
            values = [r[name] for r in rows if r[name] is not None]
            if values:
                summary[name] = {"mean": float(np.mean(values)), "std": float(np.std(values))}
        (out / "report.json").write_text(json.dumps({"trials": rows, "summary": summary}, indent=2))

        with open(out / "metrics.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["trial"] + metric_names + ["n_layouts"])
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
            mean_row = {"trial": "mean", **{k: summary.get(k, {}).get("mean") for k in metric_names}}
            std_row = {"trial": "std", **{k: summary.get(k, {}).get("std") for k in metric_names}}
            writer.writerow(mean_row)
            writer.writerow(std_row)

        save_metric_bars(rows, out / "metrics.png")
        save_gallery(trial_sets[0][0], schema, out / "gallery.png")
    except (ValueError, OSError) as exc:
        _fail(str(exc), as_json)
    _emit({"status": "ok", "out": str(out), **{k: v["mean"] for k, v in summary.items()}}, as_json)


def _pairing_for(gen_path, n_gen: int, n_ref: int, paired: bool) -> list[int] | None:
    sidecar = Path(str(gen_path) + ".pairing.json")
    if sidecar.exists():
        return json.loads(sidecar.read_text())
    if paired:
        return [i % n_ref for i in range(n_gen)]
    return None


@main.command("critic-train")
@click.option("--data", required=True, type=click.Path(exists=True), help="train.jsonl")
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--steps", type=int, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--json", "as_json", is_flag=True)
def critic_train_cmd(data, schema_path, out, steps, seed, as_json):
    """Train the real-vs-noised critic used by the FID metric."""
    try:
        schema = _load_schema(schema_path)
        layouts = read_jsonl(data, schema)
        kwargs = {"K": schema.K, "n_max": schema.n_max}
        if steps:
            kwargs["steps"] = steps
        bundle = train_fid_critic(layouts, schema, CriticConfig(**kwargs), seed=seed)
        bundle.save(out)
    except (ValueError, OSError) as exc:
        _fail(str(exc), as_json)
    _emit({"status": "ok", "critic": str(out), "n_layouts": len(layouts)}, as_json)


@main.command("render")
@click.option("--layouts", "layouts_path", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(),
              help="output figure; .svg or .png; with --each a directory")
@click.option("--each", is_flag=True, help="one file per layout instead of a gallery")
@click.option("--limit", type=int, default=16)
@click.option("--json", "as_json", is_flag=True)
def render_cmd(layouts_path, schema_path, out, each, limit, as_json):
    """Render layouts as class-colored rectangle figures."""
    try:
        schema = _load_schema(schema_path)
        layouts = read_jsonl(layouts_path, schema)[:limit]
        if each:
            out_dir = Path(out)
            out_dir.mkdir(parents=True, exist_ok=True)
            written = [
                str(save_layout(layout, schema, out_dir / f"layout_{i:04d}.svg"))
                for i, layout in enumerate(layouts)
            ]
            payload = {"status": "ok", "n_rendered": len(written), "out": str(out_dir)}
        else:
            save_gallery(layouts, schema, out)
            payload = {"status": "ok", "n_rendered": len(layouts), "out": str(out)}
    except (ValueError, OSError) as exc:
        _fail(str(exc), as_json)
    _emit(payload, as_json)


@main.command("serve")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8080, type=int)
@click.option("--workers", default=4, type=int, help="concurrent generation cap")
def serve_cmd(ckpt, host, port, workers):
    """Start the JSON-over-HTTP inference service."""
    import uvicorn

    from .service import build_app

    app = build_app(ckpt, max_concurrency=workers)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
