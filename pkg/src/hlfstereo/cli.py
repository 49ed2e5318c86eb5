"""Batch command line for the hyperspectral light-field stereo pipeline.

Subcommands: synth, pairwise, stereo, complete, refocus, color, eval.
Every run writes a run.json manifest (inputs, parameters, versions,
timings) next to its outputs, metrics as JSON lines, and figure previews.
Logs go to stderr as JSON lines; failures exit nonzero after printing a
machine-readable error record.
"""

import datetime
import functools
import json
import os
import sys
import time

import click
import numpy as np
import yaml

from . import __version__, bench, completion, model, pairwise, render, report, stereo
from .config import Params, load_params
from .model import DisparityMap


def _log(event, **fields):
    rec = {"ts": datetime.datetime.now().isoformat(timespec="seconds"),
           "event": event}
    rec.update(fields)
    print(json.dumps(rec), file=sys.stderr)


def _guarded(fn):
    """Turn uncaught failures into a machine-readable error record."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (click.ClickException, click.Abort, SystemExit):
            raise
        except Exception as exc:
            _log("error", command=fn.__name__, error=type(exc).__name__,
                 message=str(exc))
            sys.exit(1)
    return wrapper


def _build_params(config, sets, **flags):
    """Layer config file, env, --set pairs, then explicit flags."""
    overrides = {}
    for item in sets:
        if "=" not in item:
            raise click.BadParameter(f"--set expects key=value, got {item!r}")
        key, _, val = item.partition("=")
        overrides[key.strip()] = yaml.safe_load(val)
    for key, val in flags.items():
        if val is not None:
            overrides[key] = val
    return load_params(config_path=config, overrides=overrides)


def _apply_threads(params):
    if params.threads:
        import numba
        numba.set_num_threads(max(1, int(params.threads)))


def _ensure_out(out):
    os.makedirs(out, exist_ok=True)
    os.makedirs(os.path.join(out, "figures"), exist_ok=True)
    return out


def _write_metrics(out, records):
    path = os.path.join(out, "metrics.jsonl")
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")
    return path


def _write_manifest(out, command, inputs, params, timings, outputs):
    man = {
        "command": command,
        "inputs": inputs,
        "params": params.to_dict(),
        "versions": {
            "hlfstereo": __version__,
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
            "python": sys.version.split()[0],
        },
        "timings_s": {k: round(v, 3) for k, v in timings.items()},
        "outputs": sorted(outputs),
        "finished": datetime.datetime.now().isoformat(timespec="seconds"),
    }
    path = os.path.join(out, "run.json")
    with open(path, "w") as f:
        json.dump(man, f, indent=2)
    return path


def _load_camera(path):
    if path is None:
        return bench.reference_camera_response()
    return model.load_camera_response(path)


def _save_disparity(out, name, dm, outputs, vmin=None, vmax=None):
    pfm = os.path.join(out, name + ".pfm")
    model.write_pfm(pfm, dm)
    fig = os.path.join(out, "figures", name + ".png")
    report.disparity_figure(dm.values, fig, valid=dm.valid, title=name,
                            vmin=vmin, vmax=vmax)
    outputs += [name + ".pfm", "figures/" + name + ".png"]


def _disparity_metrics(est, gt, margin=0, thresholds=(1.0, 5.0)):
    mask = est.valid & gt.valid
    if margin:
        mask &= bench.interior_mask(mask.shape, margin)
    rec = {"rmse": bench.rmse(est, gt, mask),
           "valid_fraction": float(est.valid.mean()),
           "evaluated_pixels": int(mask.sum())}
    for th in thresholds:
        rec[f"bad{th:g}"] = bench.bad_n(est, gt, th, mask)
    return rec


def common_options(fn):
    fn = click.option("--config", type=click.Path(exists=True, dir_okay=False),
                      default=None, help="YAML or JSON parameter file.")(fn)
    fn = click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
                      help="Override one config key (repeatable).")(fn)
    fn = click.option("--threads", type=int, default=None,
                      help="Worker thread cap (default: all cores).")(fn)
    fn = click.option("--verbose", is_flag=True,
                      help="Print per-stage progress.")(fn)
    return fn


@click.group()
@click.version_option(__version__)
def main():
    """Hyperspectral light-field stereo matching and rendering."""


# ---------------------------------------------------------------------------
# synth


@main.command()
@common_options
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--height", type=int, default=256, show_default=True)
@click.option("--width", type=int, default=256, show_default=True)
@click.option("--grid", nargs=2, type=int, default=(5, 6), show_default=True)
@click.option("--d-bg", type=float, default=1.0, show_default=True)
@click.option("--d-fg", type=float, default=3.0, show_default=True)
@click.option("--range", "disparity_range", nargs=2, type=float,
              default=(0.0, 4.0), show_default=True)
@click.option("--labels", type=int, default=9, show_default=True)
@click.option("--background-only", is_flag=True,
              help="Skip the foreground plane (single fronto-parallel plane).")
@_guarded
def synth(config, sets, threads, verbose, out, seed, height, width, grid,
          d_bg, d_fg, disparity_range, labels, background_only):
    """Render a synthetic two-plane scene to a dataset directory."""
    params = _build_params(config, sets, threads=threads, seed=seed)
    _ensure_out(out)
    _log("start", command="synth", seed=seed, grid=list(grid))
    t0 = time.perf_counter()
    scene = bench.two_plane_scene(
        seed=seed, height=height, width=width, grid=tuple(grid),
        d_bg=d_bg, d_fg=d_fg, disparity_range=tuple(disparity_range),
        label_count=labels, foreground=not background_only)
    timings = {"render": time.perf_counter() - t0}
    outputs = []
    t0 = time.perf_counter()
    model.save_dataset(scene.hlf, os.path.join(out, "dataset"))
    outputs.append("dataset/manifest.json")
    model.save_camera_response(os.path.join(out, "camera.csv"), scene.camera)
    outputs.append("camera.csv")
    gt_dir = os.path.join(out, "gt")
    os.makedirs(gt_dir, exist_ok=True)
    for (s, t), dm in scene.gt.items():
        model.write_pfm(os.path.join(gt_dir, f"gt_{s}_{t}.pfm"), dm)
        outputs.append(f"gt/gt_{s}_{t}.pfm")
    s0, t0c = scene.hlf.central
    model.write_pfm(os.path.join(out, "gt.pfm"), scene.gt[(s0, t0c)])
    outputs.append("gt.pfm")
    report.image_figure(scene.rgb[(s0, t0c)],
                        os.path.join(out, "figures", "central_rgb.png"),
                        title="central view (camera RGB)")
    report.disparity_figure(scene.gt[(s0, t0c)].values,
                            os.path.join(out, "figures", "gt_central.png"),
                            title="ground truth disparity")
    outputs += ["figures/central_rgb.png", "figures/gt_central.png"]
    timings["write"] = time.perf_counter() - t0
    _write_metrics(out, [{"views": len(scene.hlf.views),
                          "bands": len(scene.hlf.bands),
                          "d_bg": d_bg,
                          "d_fg": None if background_only else d_fg}])
    outputs.append("metrics.jsonl")
    _write_manifest(out, "synth", {"seed": seed}, params, timings, outputs)
    _log("done", command="synth", out=out)


# ---------------------------------------------------------------------------
# pairwise


_CHANNELS = {"mean": None, "r": 0, "g": 1, "b": 2}


def _read_channel(path, channel):
    img = bench.read_rgb(path)
    idx = _CHANNELS[channel]
    chan = img.mean(axis=2) if idx is None else img[:, :, idx]
    return chan.astype(np.float32)


@main.command("pairwise")
@common_options
@click.option("--left", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--right", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--range", "disparity_range", nargs=2, type=float, required=True,
              help="Inclusive disparity range, e.g. --range -16 16.")
@click.option("--left-channel", type=click.Choice(list(_CHANNELS)),
              default="mean", show_default=True)
@click.option("--right-channel", type=click.Choice(list(_CHANNELS)),
              default="mean", show_default=True)
@click.option("--vertical", is_flag=True, help="Vertical baseline matching.")
@click.option("--gt", type=click.Path(exists=True, dir_okay=False),
              help="Ground-truth disparity for metrics.")
@click.option("--gt-scale", type=float, default=None,
              help="Divisor for integer ground-truth files.")
@click.option("--margin", type=int, default=0, show_default=True,
              help="Interior margin excluded from metrics.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@_guarded
def pairwise_cmd(config, sets, threads, verbose, left, right, disparity_range,
                 left_channel, right_channel, vertical, gt, gt_scale, margin,
                 out):
    """Match one cross-spectral image pair."""
    params = _build_params(config, sets, threads=threads)
    _apply_threads(params)
    _ensure_out(out)
    _log("start", command="pairwise", left=left, right=right,
         range=list(disparity_range))
    la = _read_channel(left, left_channel)
    ra = _read_channel(right, right_channel)
    matcher = pairwise.match_pair_vertical if vertical else pairwise.match_pair
    t0 = time.perf_counter()
    dm = matcher(la, ra, tuple(disparity_range), params, verbose=verbose)
    timings = {"match": time.perf_counter() - t0}
    outputs = []
    _save_disparity(out, "disparity", dm, outputs)
    metrics = [{"valid_fraction": float(dm.valid.mean())}]
    if gt:
        gt_dm = model.read_disparity(gt, scale=gt_scale)
        rec = _disparity_metrics(dm, gt_dm, margin=margin, thresholds=(1.0, 5.0))
        metrics = [rec]
        report.error_figure(dm.values, gt_dm.values,
                            os.path.join(out, "figures", "error.png"),
                            valid=dm.valid & gt_dm.valid)
        outputs.append("figures/error.png")
        report.metrics_figure({k: v for k, v in rec.items()
                               if isinstance(v, float)},
                              os.path.join(out, "figures", "metrics.png"))
        outputs.append("figures/metrics.png")
        _log("metrics", **rec)
    _write_metrics(out, metrics)
    outputs.append("metrics.jsonl")
    _write_manifest(out, "pairwise",
                    {"left": left, "right": right, "gt": gt,
                     "range": list(disparity_range), "vertical": vertical},
                    params, timings, outputs)
    _log("done", command="pairwise", out=out)


# ---------------------------------------------------------------------------
# stereo


@main.command()
@common_options
@click.option("--manifest", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Dataset manifest JSON.")
@click.option("--camera", type=click.Path(exists=True, dir_okay=False),
              help="Camera response CSV (default: built-in reference).")
@click.option("--gamma-c", type=float, default=None,
              help="Correspondence weight in the fused unary.")
@click.option("--real", is_flag=True,
              help="Use the real-scene correspondence weight.")
@click.option("--gt", type=click.Path(exists=True, dir_okay=False),
              help="Central-view ground truth for metrics.")
@click.option("--margin", type=int, default=0, show_default=True)
@click.option("--dump-volumes", is_flag=True,
              help="Also write raw cost volumes.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@_guarded
def stereo_cmd(config, sets, threads, verbose, manifest, camera, gamma_c,
               real, gt, margin, dump_volumes, out):
    """Estimate central-view disparity from a light-field dataset."""
    flags = {"threads": threads}
    if real:
        flags["real_scene"] = True
    if gamma_c is not None:
        flags["gamma_c_synthetic"] = gamma_c
        flags["gamma_c_real"] = gamma_c
    params = _build_params(config, sets, **flags)
    _apply_threads(params)
    _ensure_out(out)
    _log("start", command="stereo", manifest=manifest,
         gamma_c=params.resolve_gamma_c())
    hlf = model.load_dataset(manifest)
    cam = _load_camera(camera)
    t0 = time.perf_counter()
    result = stereo.estimate_disparity(hlf, cam, params,
                                       keep_volumes=dump_volumes,
                                       verbose=verbose)
    timings = {"estimate": time.perf_counter() - t0}
    outputs = []
    lo, hi = hlf.disparity_range
    for name, dm in (("fused", result.fused),
                     ("correspondence", result.correspondence),
                     ("defocus", result.defocus)):
        _save_disparity(out, name, dm, outputs, vmin=lo, vmax=hi)
    if dump_volumes:
        stereo.dump_cost_volume(os.path.join(out, "correspondence_volume.bin"),
                                result.c_volume)
        stereo.dump_cost_volume(os.path.join(out, "defocus_volume.bin"),
                                result.d_volume)
        with open(os.path.join(out, "volumes.json"), "w") as f:
            json.dump({"labels": [float(x) for x in result.labels],
                       "order": "row, col, label"}, f, indent=2)
        outputs += ["correspondence_volume.bin", "defocus_volume.bin",
                    "volumes.json"]
    metrics = []
    if gt:
        gt_dm = model.read_disparity(gt)
        for name, dm in (("fused", result.fused),
                         ("correspondence", result.correspondence),
                         ("defocus", result.defocus)):
            rec = {"map": name}
            rec.update(_disparity_metrics(dm, gt_dm, margin=margin))
            metrics.append(rec)
            _log("metrics", **rec)
        report.error_figure(result.fused.values, gt_dm.values,
                            os.path.join(out, "figures", "fused_error.png"),
                            valid=result.fused.valid & gt_dm.valid,
                            title="fused disparity error")
        outputs.append("figures/fused_error.png")
    else:
        metrics.append({"labels": len(result.labels),
                        "defocus_flagged_fraction":
                            float(result.flags.mean())})
    _write_metrics(out, metrics)
    outputs.append("metrics.jsonl")
    _write_manifest(out, "stereo",
                    {"manifest": manifest, "camera": camera, "gt": gt},
                    params, timings, outputs)
    _log("done", command="stereo", out=out)


# ---------------------------------------------------------------------------
# complete


@main.command("complete")
@common_options
@click.option("--manifest", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--fused", type=click.Path(exists=True, dir_okay=False),
              help="Central fused disparity PFM (default: estimate it).")
@click.option("--camera", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@_guarded
def complete_cmd(config, sets, threads, verbose, manifest, fused, camera, out):
    """Propagate disparity to all views and complete the plenoptic cube."""
    params = _build_params(config, sets, threads=threads)
    _apply_threads(params)
    _ensure_out(out)
    _log("start", command="complete", manifest=manifest, fused=fused)
    hlf = model.load_dataset(manifest)
    timings = {}
    if fused:
        fused_dm = model.read_disparity(fused)
    else:
        cam = _load_camera(camera)
        t0 = time.perf_counter()
        fused_dm = stereo.estimate_disparity(hlf, cam, params,
                                             verbose=verbose).fused
        timings["estimate"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    cube, refined = completion.run_completion(hlf, fused_dm, params,
                                              verbose=verbose)
    timings["complete"] = time.perf_counter() - t0
    outputs = []
    completion.save_cube(cube, os.path.join(out, "cube"))
    outputs.append("cube/cube.json")
    ref_dir = os.path.join(out, "refined")
    os.makedirs(ref_dir, exist_ok=True)
    for (s, t), dm in refined.items():
        model.write_pfm(os.path.join(ref_dir, f"disp_{s}_{t}.pfm"), dm)
        outputs.append(f"refined/disp_{s}_{t}.pfm")
    s0, t0c = hlf.central
    lo, hi = hlf.disparity_range
    report.disparity_figure(refined[(s0, t0c)].values,
                            os.path.join(out, "figures", "refined_central.png"),
                            title="refined central disparity",
                            vmin=lo, vmax=hi)
    outputs.append("figures/refined_central.png")
    conf = [float(np.mean([c.mean() for c in cube.confidence[v].values()]))
            for v in cube.views]
    rec = {"layers": cube.layer_count(),
           "views": len(cube.views),
           "bands_per_view": len(cube.bands),
           "mean_confidence": float(np.mean(conf)),
           "min_view_confidence": float(np.min(conf))}
    _write_metrics(out, [rec])
    outputs.append("metrics.jsonl")
    _log("metrics", **rec)
    _write_manifest(out, "complete",
                    {"manifest": manifest, "fused": fused, "camera": camera},
                    params, timings, outputs)
    _log("done", command="complete", out=out)


# ---------------------------------------------------------------------------
# refocus


@main.command("refocus")
@common_options
@click.option("--cube", "cube_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Completed cube directory.")
@click.option("--focus", required=True, type=float,
              help="Disparity of the virtual focal plane.")
@click.option("--camera", type=click.Path(exists=True, dir_okay=False))
@click.option("--save-stack", is_flag=True,
              help="Also write the per-band focal stack as NPZ.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@_guarded
def refocus_cmd(config, sets, threads, verbose, cube_dir, focus, camera,
                save_stack, out):
    """Render a refocused RGB image from a completed cube."""
    params = _build_params(config, sets, threads=threads)
    _ensure_out(out)
    _log("start", command="refocus", cube=cube_dir, focus=focus)
    cube = completion.load_cube(cube_dir)
    cam = _load_camera(camera)
    t0 = time.perf_counter()
    rgb, stack = render.refocus(cube, focus, cam, params)
    timings = {"refocus": time.perf_counter() - t0}
    outputs = []
    model.write_rgb(os.path.join(out, "refocused.png"), rgb)
    outputs.append("refocused.png")
    report.image_figure(rgb, os.path.join(out, "figures", "refocused.png"),
                        title=f"refocused at d={focus:g}")
    outputs.append("figures/refocused.png")
    if save_stack:
        np.savez_compressed(os.path.join(out, "band_stack.npz"),
                            bands=np.asarray(cube.bands), stack=stack)
        outputs.append("band_stack.npz")
    rec = {"focus": focus, "sharpness": render.sharpness(rgb.mean(axis=2))}
    _write_metrics(out, [rec])
    outputs.append("metrics.jsonl")
    _log("metrics", **rec)
    _write_manifest(out, "refocus", {"cube": cube_dir, "focus": focus},
                    params, timings, outputs)
    _log("done", command="refocus", out=out)


# ---------------------------------------------------------------------------
# color


@main.command("color")
@common_options
@click.option("--cube", "cube_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--view", nargs=2, type=int, default=None,
              help="Grid position s t (default: central view).")
@click.option("--camera", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@_guarded
def color_cmd(config, sets, threads, verbose, cube_dir, view, camera, out):
    """Emulate a color camera exposure of one completed view."""
    params = _build_params(config, sets, threads=threads)
    _ensure_out(out)
    cube = completion.load_cube(cube_dir)
    v = tuple(view) if view else cube.central
    _log("start", command="color", cube=cube_dir, view=list(v))
    cam = _load_camera(camera)
    t0 = time.perf_counter()
    rgb = render.emulate_color(cube, v, cam, params)
    timings = {"emulate": time.perf_counter() - t0}
    outputs = []
    name = f"color_{v[0]}_{v[1]}.png"
    model.write_rgb(os.path.join(out, name), rgb)
    outputs.append(name)
    report.image_figure(rgb, os.path.join(out, "figures", name),
                        title=f"emulated RGB, view {v}")
    outputs.append("figures/" + name)
    _write_metrics(out, [{"view": list(v), "mean_level": float(rgb.mean())}])
    outputs.append("metrics.jsonl")
    _write_manifest(out, "color", {"cube": cube_dir, "view": list(v)},
                    params, timings, outputs)
    _log("done", command="color", out=out)


# ---------------------------------------------------------------------------
# eval


def _metric_value(name, est, gt, mask):
    if name.startswith("bad"):
        return bench.bad_n(est, gt, float(name[3:]), mask)
    if name == "rmse":
        return bench.rmse(est, gt, mask)
    raise click.BadParameter(f"unknown metric {name!r} "
                             "(use badN, e.g. bad5.0, or rmse)")


@main.command("eval")
@click.option("--est", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--metric", "metric_names", multiple=True,
              default=("bad5.0",), show_default=True,
              help="badN or rmse (repeatable).")
@click.option("--est-scale", type=float, default=None)
@click.option("--gt-scale", type=float, default=None)
@click.option("--margin", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False),
              help="Optional directory for metrics.jsonl and figures.")
@_guarded
def eval_cmd(est, gt, metric_names, est_scale, gt_scale, margin, out):
    """Score an estimated disparity map against ground truth."""
    est_dm = model.read_disparity(est, scale=est_scale)
    gt_dm = model.read_disparity(gt, scale=gt_scale)
    if est_dm.values.shape != gt_dm.values.shape:
        raise ValueError(f"shape mismatch: est {est_dm.values.shape} "
                         f"vs gt {gt_dm.values.shape}")
    mask = est_dm.valid & gt_dm.valid
    if margin:
        mask &= bench.interior_mask(mask.shape, margin)
    rec = {name: _metric_value(name, est_dm, gt_dm, mask)
           for name in metric_names}
    rec["evaluated_pixels"] = int(mask.sum())
    print(json.dumps(rec))
    if out:
        _ensure_out(out)
        _write_metrics(out, [rec])
        report.error_figure(est_dm.values, gt_dm.values,
                            os.path.join(out, "figures", "error.png"),
                            valid=mask)
        _write_manifest(out, "eval", {"est": est, "gt": gt},
                        Params(), {}, ["metrics.jsonl", "figures/error.png"])


if __name__ == "__main__":
    main()
