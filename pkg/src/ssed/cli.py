"""Command-line entry points: dataset synthesis, training, decomposition,
generation, mask edits, evaluation, sampler benchmarks, and the HTTP server.

Config files are plain key=value lines matching dataclass field names; all
commands are deterministic for a fixed --seed.
"""
from __future__ import annotations

import csv
import json
from dataclasses import fields as dc_fields
from pathlib import Path

import click

from .autoencoder import (AEConfig, load_autoencoder, reconstruction_miou,
                          save_autoencoder, train_autoencoder)
from .diffusion import (DenoiserConfig, DiffusionTrainConfig, SamplerConfig,
                        bench_sampling, generate_scene, load_diffusion,
                        save_diffusion, train_diffusion)
from .trimask import (AssetLibrary, decompose_scene, erase_region, make_asset,
                      mask_set_from_bytes, mask_set_to_bytes, paste_asset,
                      widen_road)
from .voxel import (ToySceneSpec, default_palette, generate_toy_scene, iou,
                    miou, read_scene, write_scene)


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = text.lower().replace("x", ",").split(",")
    if len(parts) != 3:
        raise click.BadParameter(f"expected three dims, got {text!r}")
    return tuple(int(p) for p in parts)


def _parse_triple(text: str) -> tuple[int, int, int]:
    return _parse_dims(text)


def _parse_bbox(text: str) -> tuple[int, ...]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 6:
        raise click.BadParameter(f"bbox needs 6 integers, got {text!r}")
    return tuple(parts)


def _read_config(path) -> dict[str, str]:
    out = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise click.ClickException(f"{path}:{line_no}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce(value: str, sample):
    if isinstance(sample, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(sample, int):
        return int(value)
    if isinstance(sample, float):
        return float(value)
    if isinstance(sample, tuple):
        return tuple(int(p) for p in value.replace("x", ",").split(","))
    return value


def _apply_overrides(cfg, overrides: dict[str, str], *nested):
    """Set key=value overrides on a dataclass, searching nested dataclasses
    (given as attribute names) for keys the top level lacks."""
    names = {f.name for f in dc_fields(cfg)}
    for key, raw in overrides.items():
        if key in names:
            setattr(cfg, key, _coerce(raw, getattr(cfg, key)))
            continue
        for attr in nested:
            sub = getattr(cfg, attr)
            if key in {f.name for f in dc_fields(sub)}:
                setattr(sub, key, _coerce(raw, getattr(sub, key)))
                break
        else:
            raise click.ClickException(f"unknown config key {key!r}")
    return cfg


def _load_scenes(data_dir) -> list:
    paths = sorted(Path(data_dir).glob("*.ssv1"))
    if not paths:
        raise click.ClickException(f"no .ssv1 scenes in {data_dir}")
    scenes = []
    for p in paths:
        with open(p, "rb") as f:
            grid, _ = read_scene(f)
        scenes.append(grid)
    return scenes


def _write_curve(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


@click.group()
def main():
    """Mask-conditional 3D semantic scene generation toolkit."""


@main.command("make-toyset")
@click.option("--n", default=64, show_default=True, help="Number of scenes.")
@click.option("--dims", default="32x32x8", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def make_toyset(n, dims, seed, out):
    """Write N procedurally generated labeled city scenes as SSV1 files."""
    dims = _parse_dims(dims)
    out.mkdir(parents=True, exist_ok=True)
    palette = default_palette()
    for i in range(n):
        spec = ToySceneSpec(dims=dims, seed=seed + i)
        grid = generate_toy_scene(spec)
        with open(out / f"scene_{i:04d}.ssv1", "wb") as f:
            write_scene(grid, palette, f)
    (out / "meta.json").write_text(json.dumps(
        {"n": n, "dims": list(dims), "seed": seed}, indent=2))
    click.echo(f"wrote {n} scenes to {out}")


@main.command("train-ae")
@click.option("--data", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--max-seconds", type=float, default=None, help="Wall-clock budget.")
def train_ae(data, config_path, out, max_seconds):
    """Train the triplane autoencoder on a directory of SSV1 scenes."""
    scenes = _load_scenes(data)
    cfg = AEConfig(num_classes=scenes[0].num_classes)
    if config_path:
        _apply_overrides(cfg, _read_config(config_path))
    try:
        model, curve = train_autoencoder(scenes, cfg, log=click.echo,
                                         max_seconds=max_seconds)
    except (RuntimeError, ValueError, FloatingPointError) as e:
        raise click.ClickException(str(e))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_autoencoder(model, out)
    _write_curve(out.parent / (out.stem + "_curve.csv"),
                 ("epoch", "cross_entropy", "lovasz", "total"), curve)
    click.echo(f"mIoU on training scenes: {reconstruction_miou(model, scenes):.4f}")
    click.echo(f"saved {out}")


@main.command("train-diffusion")
@click.option("--data", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--ae", "ae_path", required=True, envvar="SSED_CKPT_AE",
              type=click.Path(exists=True, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--max-seconds", type=float, default=None)
def train_diffusion_cmd(data, ae_path, config_path, out, max_seconds):
    """Train the mask-conditional diffusion model against a trained autoencoder."""
    ae = load_autoencoder(ae_path)
    scenes = _load_scenes(data)
    x, y, z = scenes[0].dims
    dcfg = DenoiserConfig(c_z=ae.cfg.c_z, num_classes=ae.cfg.num_classes,
                          mask_dims=(x // ae.cfg.d, y // ae.cfg.d, z // ae.cfg.d_z))
    cfg = DiffusionTrainConfig(denoiser=dcfg)
    if config_path:
        _apply_overrides(cfg, _read_config(config_path), "denoiser")
    pairs = [(g, decompose_scene(g, ae.cfg.d, ae.cfg.d_z)) for g in scenes]
    try:
        model, curve = train_diffusion(pairs, ae, cfg, log=click.echo,
                                       max_seconds=max_seconds)
    except (RuntimeError, ValueError, FloatingPointError) as e:
        raise click.ClickException(str(e))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_diffusion(model, cfg, out)
    _write_curve(out.parent / (out.stem + "_curve.csv"), ("epoch", "loss"), curve)
    click.echo(f"saved {out}")


@main.command("decompose")
@click.option("--scene", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out-lib", required=True, envvar="SSED_LIB",
              type=click.Path(path_type=Path))
@click.option("--d", default=2, show_default=True)
@click.option("--dz", default=1, show_default=True)
@click.option("--kind", default="scene-level", show_default=True,
              type=click.Choice(["scene-level", "basic"]))
@click.option("--id-prefix", default=None, help="Defaults to the scene file stem.")
def decompose(scene, out_lib, d, dz, kind, id_prefix):
    """Split a scene into per-class trimask assets and store them."""
    with open(scene, "rb") as f:
        grid, palette = read_scene(f)
    prefix = id_prefix or scene.stem
    lib = AssetLibrary(out_lib)
    mask_set = decompose_scene(grid, d, dz)
    stored = 0
    for tm in mask_set.masks[1:]:  # empty space is not an asset
        if tm.is_empty():
            continue
        name = palette.names[tm.class_id]
        record = make_asset(f"{prefix}-{name}", kind, tm, provenance=str(scene))
        try:
            lib.put(record)
        except KeyError as e:
            raise click.ClickException(str(e.args[0]))
        stored += 1
    click.echo(f"stored {stored} assets in {out_lib}")


def _sampler_from(config_path, seed) -> SamplerConfig:
    sampler = SamplerConfig()
    if config_path:
        _apply_overrides(sampler, _read_config(config_path))
    if seed is not None:
        sampler.seed = seed
    return sampler


def _mask_set_from_inputs(spec_path, masks_path, lib_path):
    from .service import compose_from_spec
    if (spec_path is None) == (masks_path is None):
        raise click.ClickException("provide exactly one of --spec or --masks")
    if masks_path is not None:
        return mask_set_from_bytes(Path(masks_path).read_bytes())
    spec = json.loads(Path(spec_path).read_text())
    lib = AssetLibrary(lib_path) if lib_path else None
    if spec.get("base") and lib is None:
        raise click.ClickException("--lib required when the spec references assets")
    try:
        return compose_from_spec(spec, lib)
    except ValueError as e:
        raise click.ClickException(str(e))


@main.command("generate")
@click.option("--spec", "spec_path", type=click.Path(exists=True, path_type=Path))
@click.option("--masks", "masks_path", type=click.Path(exists=True, path_type=Path),
              help="Serialized mask set as an alternative to --spec.")
@click.option("--ae", "ae_path", required=True, envvar="SSED_CKPT_AE",
              type=click.Path(exists=True, path_type=Path))
@click.option("--diff", "diff_path", required=True, envvar="SSED_CKPT_DIFF",
              type=click.Path(exists=True, path_type=Path))
@click.option("--lib", "lib_path", envvar="SSED_LIB", type=click.Path(path_type=Path))
@click.option("--sampler", "sampler_path", type=click.Path(exists=True, path_type=Path))
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def generate(spec_path, masks_path, ae_path, diff_path, lib_path, sampler_path,
             seed, out):
    """Sample a scene conditioned on a composed mask set."""
    mask_set = _mask_set_from_inputs(spec_path, masks_path, lib_path)
    ae = load_autoencoder(ae_path)
    model, _ = load_diffusion(diff_path)
    sampler = _sampler_from(sampler_path, seed)
    try:
        grid = generate_scene(mask_set, model, ae, sampler)
    except ValueError as e:
        raise click.ClickException(str(e))
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as f:
        write_scene(grid, default_palette(grid.num_classes), f)
    click.echo(f"wrote {out}")


@main.command("edit")
@click.option("--scene", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--op", required=True, type=click.Choice(["erase", "paste", "widen-road"]))
@click.option("--class-id", type=int, default=None)
@click.option("--bbox", default=None, help="x0,y0,z0,x1,y1,z1 in mask units.")
@click.option("--asset", "asset_id", default=None)
@click.option("--lib", "lib_path", envvar="SSED_LIB", type=click.Path(path_type=Path))
@click.option("--offset", default="0,0,0", show_default=True)
@click.option("--factor", type=float, default=2.0, show_default=True)
@click.option("--d", default=2, show_default=True)
@click.option("--dz", default=1, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def edit(scene, op, class_id, bbox, asset_id, lib_path, offset, factor, d, dz, out):
    """Decompose a scene, apply one mask edit, write the edited mask set."""
    with open(scene, "rb") as f:
        grid, _ = read_scene(f)
    mask_set = decompose_scene(grid, d, dz)
    try:
        if op == "erase":
            if class_id is None or bbox is None:
                raise click.ClickException("erase requires --class-id and --bbox")
            mask_set = erase_region(mask_set, class_id, _parse_bbox(bbox))
        elif op == "paste":
            if asset_id is None or lib_path is None:
                raise click.ClickException("paste requires --asset and --lib")
            record = AssetLibrary(lib_path).get(asset_id)
            mask_set = paste_asset(mask_set, record, _parse_triple(offset))
        else:
            if class_id is None:
                raise click.ClickException("widen-road requires --class-id")
            mask_set = widen_road(mask_set, class_id, factor)
    except (ValueError, KeyError) as e:
        raise click.ClickException(str(e))
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(mask_set_to_bytes(mask_set))
    click.echo(f"wrote {out}")


@main.command("eval")
@click.option("--pred", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--gt", required=True, type=click.Path(exists=True, path_type=Path))
def eval_cmd(pred, gt):
    """Occupancy IoU and class mIoU between two scenes."""
    with open(pred, "rb") as f:
        p, _ = read_scene(f)
    with open(gt, "rb") as f:
        g, _ = read_scene(f)
    if p.dims != g.dims:
        raise click.ClickException(f"dims differ: {p.dims} vs {g.dims}")
    click.echo(json.dumps({"iou": iou(p, g), "miou": miou(p, g)}))


@main.command("bench-sampling")
@click.option("--ae", "ae_path", required=True, envvar="SSED_CKPT_AE",
              type=click.Path(exists=True, path_type=Path))
@click.option("--diff", "diff_path", required=True, envvar="SSED_CKPT_DIFF",
              type=click.Path(exists=True, path_type=Path))
@click.option("--scene", type=click.Path(exists=True, path_type=Path),
              help="Condition on this scene's masks (default: a fresh toy scene).")
@click.option("--strategies", default="ddpm,repaint", show_default=True)
@click.option("--steps", default="10,100", show_default=True)
@click.option("--runs", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def bench_sampling_cmd(ae_path, diff_path, scene, strategies, steps, runs, seed, out):
    """Time the samplers and write a CSV of wall seconds per configuration."""
    ae = load_autoencoder(ae_path)
    model, _ = load_diffusion(diff_path)
    if scene:
        with open(scene, "rb") as f:
            grid, _ = read_scene(f)
    else:
        xm, ym, zm = model.cfg.mask_dims
        dims = (xm * ae.cfg.d, ym * ae.cfg.d, zm * ae.cfg.d_z)
        grid = generate_toy_scene(ToySceneSpec(dims=dims, seed=seed))
    mask_set = decompose_scene(grid, ae.cfg.d, ae.cfg.d_z)
    strat_list = [s.strip() for s in strategies.split(",") if s.strip()]
    steps_list = [int(s) for s in steps.split(",")]
    for s in strat_list:
        if s not in ("ddpm", "repaint"):
            raise click.ClickException(f"unknown strategy {s!r}")
    rows = bench_sampling(model, mask_set, strat_list, steps_list, runs,
                          SamplerConfig(seed=seed))
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=("strategy", "steps", "wall_seconds"))
        w.writeheader()
        w.writerows(rows)
    for row in rows:
        click.echo(f"{row['strategy']:8s} steps={row['steps']:<4d} "
                   f"{row['wall_seconds']:.3f}s")
    click.echo(f"wrote {out}")


@main.command("serve")
@click.option("--port", default=8000, show_default=True, envvar="SSED_PORT", type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-root", default="ssed-data", show_default=True,
              type=click.Path(path_type=Path))
@click.option("--lib", "lib_path", envvar="SSED_LIB", type=click.Path(path_type=Path))
@click.option("--ckpt-ae", envvar="SSED_CKPT_AE", type=click.Path(path_type=Path))
@click.option("--ckpt-diff", envvar="SSED_CKPT_DIFF", type=click.Path(path_type=Path))
@click.option("--queue-size", default=8, show_default=True)
def serve(port, host, data_root, lib_path, ckpt_ae, ckpt_diff, queue_size):
    """Run the HTTP service."""
    import uvicorn

    from .service import ServiceConfig, create_app
    cfg = ServiceConfig(data_root=data_root, lib_dir=lib_path,
                        ckpt_ae=ckpt_ae, ckpt_diff=ckpt_diff,
                        queue_size=queue_size)
    uvicorn.run(create_app(cfg), host=host, port=port)


if __name__ == "__main__":
    main()
