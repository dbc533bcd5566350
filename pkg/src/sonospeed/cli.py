"""Command-line interface.

Subcommands: gen-phantom, simulate, process, build-dataset, estimate,
render.  Every run writes its resolved configuration next to its outputs.
Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

The default output root is the current directory, or $SONOSPEED_OUT when
set; JSON config files passed via --config supply defaults that explicit
flags override.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import __version__
from .dataset import (BuildConfig, build_dataset, build_sample, corpus_stats,
                      read_sample, sample_dir_name, write_sample)
from .estimate import SweepSpec, regional_mean_error, speckle_brightness_sweep
from .phantom import PHANTOM_CLASSES, GridSpec, Tissue, compose_phantom
from .render import DEFAULT_DYNAMIC_RANGE_DB, save_bmode, save_speed_map
from .sigproc import (BandpassSpec, TnaSpec, align_t0, analytic_signal, apply_tna,
                      bandpass, das_beamform, resample, stack_model_input)
from .ustn import read_tensor, write_tensor
from .wavesim import ChannelData, SolverConfig, TransducerSpec, make_plane_wave, simulate_planewave

ENV_OUT = "SONOSPEED_OUT"


def _out_root(path: str | None) -> str:
    return path or os.environ.get(ENV_OUT, ".")


def _parse_grid(text: str) -> GridSpec:
    try:
        nx, nz = (int(v) for v in text.lower().split("x"))
        return GridSpec(nx=nx, nz=nz)
    except Exception as exc:
        raise click.BadParameter(f"grid must look like 256x384 (nx x nz): {exc}") from exc


def _parse_angles(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(a) for a in text.split(","))
    except Exception as exc:
        raise click.BadParameter(f"angles must be comma-separated degrees: {exc}") from exc


def _write_resolved_config(out_dir: str, name: str, cfg: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "run_config.json"), "w") as f:
        json.dump({"command": name, "version": __version__, **cfg}, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_config_defaults(ctx, _param, path):
    if path:
        with open(path) as f:
            ctx.default_map = {**(ctx.default_map or {}), **json.load(f)}
    return path


_config_option = click.option(
    "--config", type=click.Path(exists=True, dir_okay=False), callback=_load_config_defaults,
    is_eager=True, expose_value=False, help="JSON file with flag defaults (flags override).")


@click.group()
@click.version_option(__version__)
def main():
    """Breast-ultrasound sound-speed dataset toolkit."""


@main.command("gen-phantom")
@_config_option
@click.option("--class", "class_kind", required=True,
              type=click.Choice(PHANTOM_CLASSES), help="Phantom tissue class.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--grid", "grid_text", default="256x384", show_default=True,
              help="nx x nz pixels; arrays are written (nz, nx).")
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
def gen_phantom(class_kind, seed, grid_text, out):
    """Generate one phantom directory (property maps + meta.json)."""
    grid = _parse_grid(grid_text)
    out_dir = os.path.join(_out_root(out), f"phantom_{class_kind}_{seed}") if out is None else out
    phantom = compose_phantom(class_kind, grid, seed)
    os.makedirs(out_dir, exist_ok=True)
    write_tensor(os.path.join(out_dir, "c.ustn"), phantom.props.c.astype(np.float32))
    write_tensor(os.path.join(out_dir, "rho.ustn"), phantom.props.rho.astype(np.float32))
    write_tensor(os.path.join(out_dir, "labels.ustn"),
                 phantom.labels.labels.astype(np.float32))
    write_tensor(os.path.join(out_dir, "scatter_amplitude.ustn"),
                 phantom.scatterers.amplitude.astype(np.float32))
    write_tensor(os.path.join(out_dir, "target.ustn"), phantom.target.astype(np.float32))
    meta = {
        **phantom.meta,
        "grid": {"nx": grid.nx, "nz": grid.nz, "dx": grid.dx, "dz": grid.dz,
                 "origin": grid.origin},
        "labels_legend": {t.name: int(t) for t in Tissue},
        "rho_s": phantom.scatterers.rho_s,
    }
    with open(os.path.join(out_dir, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_resolved_config(out_dir, "gen-phantom",
                           {"class": class_kind, "seed": seed, "grid": grid_text})
    click.echo(out_dir)


def _load_phantom_dir(path: str):
    from .phantom import Phantom, PropertyMaps, ScattererField, TissueLabelMap
    with open(os.path.join(path, "meta.json")) as f:
        meta = json.load(f)
    g = meta["grid"]
    grid = GridSpec(nx=g["nx"], nz=g["nz"], dx=g["dx"], dz=g["dz"], origin=g["origin"])
    c = read_tensor(os.path.join(path, "c.ustn")).astype(np.float64)
    rho = read_tensor(os.path.join(path, "rho.ustn")).astype(np.float64)
    labels = read_tensor(os.path.join(path, "labels.ustn")).astype(np.uint8)
    amp = read_tensor(os.path.join(path, "scatter_amplitude.ustn")).astype(np.float64)
    target = read_tensor(os.path.join(path, "target.ustn")).astype(np.float64)
    return Phantom(
        grid=grid,
        labels=TissueLabelMap(labels=labels, class_kind=meta.get("class", "unknown")),
        props=PropertyMaps(c=c, rho=rho),
        scatterers=ScattererField(occupancy=amp != 0, amplitude=amp,
                                  rho_s=meta.get("rho_s", 0.0), n_s=meta.get("n_s", 0.0)),
        target=target,
        seed=meta.get("seed", 0),
        mean_speeds=meta.get("mean_speeds", {}),
        meta=meta,
    )


@main.command()
@_config_option
@click.option("--phantom", "phantom_dir", required=True, type=click.Path(exists=True))
@click.option("--angles", default="-8,0,8", show_default=True)
@click.option("--tx-freq", type=float, default=5e6, show_default=True)
@click.option("--elements", type=int, default=128, show_default=True)
@click.option("--pml", type=int, default=16, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def simulate(phantom_dir, angles, tx_freq, elements, pml, out):
    """Simulate plane-wave transmissions through a stored phantom."""
    phantom = _load_phantom_dir(phantom_dir)
    tx = TransducerSpec(n_elements=elements)
    os.makedirs(out, exist_ok=True)
    meta = {"angles_deg": [], "fs": None, "t0": {}, "tx_freq": tx_freq,
            "elements": elements, "phantom": os.path.abspath(phantom_dir)}
    for angle in _parse_angles(angles):
        pw = make_plane_wave(tx, angle, tx_freq=tx_freq)
        ch = simulate_planewave(phantom, tx, pw, SolverConfig(pml_thickness=pml))
        tag = f"{angle:+06.2f}".replace(".", "p")
        write_tensor(os.path.join(out, f"channels_{tag}.ustn"),
                     ch.samples.astype(np.float32))
        meta["angles_deg"].append(angle)
        meta["fs"] = ch.fs
        meta["t0"][str(angle)] = ch.t0
        meta.setdefault("pulse_duration", ch.pulse_duration)
        meta.setdefault("pulse_rms", ch.pulse_rms)
        meta.setdefault("provenance", {})[str(angle)] = ch.provenance
    with open(os.path.join(out, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_resolved_config(out, "simulate", {"phantom": phantom_dir, "angles": angles,
                                             "tx_freq": tx_freq, "elements": elements,
                                             "pml": pml})
    click.echo(out)


def _load_channels(channels_dir: str):
    with open(os.path.join(channels_dir, "meta.json")) as f:
        meta = json.load(f)
    out = []
    for angle in meta["angles_deg"]:
        tag = f"{angle:+06.2f}".replace(".", "p")
        samples = read_tensor(os.path.join(channels_dir, f"channels_{tag}.ustn"))
        out.append(ChannelData(samples=samples.astype(np.float64), fs=meta["fs"],
                               t0=meta["t0"][str(angle)], angle_deg=angle,
                               pulse_duration=meta["pulse_duration"],
                               pulse_rms=meta["pulse_rms"],
                               provenance=meta.get("provenance", {}).get(str(angle), {})))
    return meta, out


@main.command()
@_config_option
@click.option("--channels", "channels_dir", required=True, type=click.Path(exists=True))
@click.option("--tna-prob", type=float, default=0.2, show_default=True)
@click.option("--bandwidth", type=float, default=None,
              help="Fractional bandwidth; default samples Uniform[0.5, 0.9].")
@click.option("--c0", type=float, default=1540.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--image", "image_text", default="256x256", show_default=True,
              help="Beamform pixels, nx x nz.")
@click.option("--depth", type=float, default=30e-3, show_default=True)
@click.option("--width", type=float, default=37.5e-3, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def process(channels_dir, tna_prob, bandwidth, c0, seed, image_text, depth, width, out):
    """Resample, filter, augment, align, beamform stored channel data."""
    from .sigproc import BeamformGrid
    meta, chans = _load_channels(channels_dir)
    rng = np.random.default_rng(seed)
    bw = bandwidth if bandwidth is not None else float(rng.uniform(0.5, 0.9))
    nx, nz = (int(v) for v in image_text.lower().split("x"))
    grid = BeamformGrid(nx=nx, nz=nz, x_min=-width / 2, x_max=width / 2,
                        z_min=0.0, z_max=depth, c0=c0)
    tx = TransducerSpec(n_elements=meta["elements"])
    images = []
    applied = []
    for ch in sorted(chans, key=lambda c: c.angle_deg):
        ch = resample(ch, 40e6)
        ch = bandpass(ch, BandpassSpec(fractional_bandwidth=bw))
        ch = apply_tna(ch, TnaSpec(probability=tna_prob), seed=rng)
        applied.append(ch.provenance.get("tna"))
        ch = align_t0(ch)
        ch = analytic_signal(ch)
        images.append(das_beamform(ch, tx, ch.angle_deg, grid))
    os.makedirs(out, exist_ok=True)
    tensor = stack_model_input(images).astype(np.float32)
    write_tensor(os.path.join(out, "input.ustn"), tensor)
    for im in images:
        tag = f"{im.angle_deg:+06.2f}".replace(".", "p")
        write_tensor(os.path.join(out, f"iq_{tag}.ustn"),
                     im.pixels.astype(np.complex64))
    info = {"bandwidth": bw, "tna_draws_db": applied, "c0": c0,
            "angles_deg": sorted(c.angle_deg for c in chans),
            "image": image_text, "depth": depth, "width": width,
            "plane_layout": "re/im pairs per angle, angles ascending",
            "processing_order": ["resample", "bandpass", "tna", "align_t0",
                                 "analytic", "beamform", "stack"]}
    with open(os.path.join(out, "meta.json"), "w") as f:
        json.dump(info, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_resolved_config(out, "process", {"channels": channels_dir, "tna_prob": tna_prob,
                                            "bandwidth": bw, "c0": c0, "seed": seed,
                                            "image": image_text})
    click.echo(out)


@main.command("build-dataset")
@_config_option
@click.option("--n", "n_samples", type=int, required=True)
@click.option("--mix", default=None,
              help="Class mix like 'gland=1,cyst=2'; default uniform over all six.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--grid", "grid_text", default="256x384", show_default=True)
@click.option("--image", "image_text", default="256x256", show_default=True)
@click.option("--elements", type=int, default=128, show_default=True)
@click.option("--tna-prob", type=float, default=0.2, show_default=True)
@click.option("--scatter-amp", type=float, default=10.0, show_default=True,
              help="Peak-to-peak sound-speed perturbation (m/s) of 0 dB scatterers.")
@click.option("--alpha-coeff", type=float, default=0.75, show_default=True,
              help="Attenuation in dB/(MHz^1.5 cm); raise it to reproduce deep-image "
                   "SNR loss on shallow desk grids.")
@click.option("--out", type=click.Path(), required=True)
def build_dataset_cmd(n_samples, mix, seed, jobs, grid_text, image_text, elements,
                      tna_prob, scatter_amp, alpha_coeff, out):
    """Build a training corpus of simulated samples."""
    grid = _parse_grid(grid_text)
    nx, nz = (int(v) for v in image_text.lower().split("x"))
    mix_dict = None
    if mix:
        mix_dict = {}
        for part in mix.split(","):
            name, _, w = part.partition("=")
            if name not in PHANTOM_CLASSES:
                raise click.BadParameter(f"unknown class {name!r} in --mix")
            mix_dict[name] = float(w or 1.0)
    cfg = BuildConfig(grid=grid, image_shape=(nz, nx), n_elements=elements,
                      tna=TnaSpec(probability=tna_prob),
                      scatter_ref_amplitude=scatter_amp, alpha_coeff=alpha_coeff)
    manifest = build_dataset(out, n_samples, seed, cfg=cfg, mix=mix_dict, parallelism=jobs)
    _write_resolved_config(out, "build-dataset",
                           {"n": n_samples, "mix": mix, "seed": seed, "jobs": jobs,
                            "grid": grid_text, "image": image_text, "elements": elements,
                            "tna_prob": tna_prob, "scatter_amp": scatter_amp,
                            "alpha_coeff": alpha_coeff})
    click.echo(json.dumps(manifest["class_counts"]))


@main.command()
@_config_option
@click.option("--channels", "channels_dir", type=click.Path(exists=True), default=None)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), default=None)
@click.option("--sweep", "sweep_text", default="1400:1700:5", show_default=True)
@click.option("--roi", default="-5,5,5,13", show_default=True,
              help="x0,x1,z0,z1 in millimeters (interpreted at 1540 m/s).")
@click.option("--angle", type=float, default=None,
              help="Restrict to one steering angle; default uses all stored angles.")
@click.option("--report", "report_path", type=click.Path(), default=None)
def estimate(channels_dir, corpus_dir, sweep_text, roi, angle, report_path):
    """Speckle-brightness sweep on channels, or regional errors on a corpus."""
    if (channels_dir is None) == (corpus_dir is None):
        raise click.UsageError("pass exactly one of --channels or --corpus")
    if channels_dir:
        c_min, c_max, c_step = (float(v) for v in sweep_text.split(":"))
        x0, x1, z0, z1 = (float(v) * 1e-3 for v in roi.split(","))
        spec = SweepSpec(c_min=c_min, c_max=c_max, c_step=c_step, roi=(x0, x1, z0, z1))
        meta, chans = _load_channels(channels_dir)
        tx = TransducerSpec(n_elements=meta["elements"])
        use = chans if angle is None else [
            c for c in chans if abs(c.angle_deg - angle) < 1e-9]
        if not use:
            raise click.UsageError(f"angle {angle} not present in {channels_dir}")
        processed = []
        for ch in use:
            ch = resample(ch, 40e6)
            ch = bandpass(ch, BandpassSpec(fractional_bandwidth=0.7))
            ch = align_t0(ch)
            processed.append(analytic_signal(ch))
        res = speckle_brightness_sweep(processed, tx, sweep=spec)
        payload = {"c_hat": res.c_hat, "indeterminate": res.indeterminate,
                   "speeds": res.speeds.tolist(), "brightness": res.brightness.tolist()}
        if res.indeterminate:
            click.echo("indeterminate")
        else:
            click.echo(f"{res.c_hat:.1f}")
    else:
        reports = {}
        with open(os.path.join(corpus_dir, "manifest.json")) as f:
            manifest = json.load(f)
        for e in manifest["samples"]:
            sdir = os.path.join(corpus_dir, e["id"])
            est_path = os.path.join(sdir, "estimate.ustn")
            if not os.path.exists(est_path):
                click.echo(f"missing estimate.ustn in {sdir}", err=True)
                sys.exit(2)
            sample = read_sample(sdir)
            est = read_tensor(est_path).astype(np.float64)
            labels = np.zeros_like(sample.target, dtype=np.uint8)
            rep = regional_mean_error(est, sample.target.astype(np.float64), labels)
            reports[e["id"]] = {"class": e["class"], **rep.to_dict()}
        maes = [r["pixel_mae"] for r in reports.values()]
        payload = {"per_sample": reports, "overall_pixel_mae": float(np.mean(maes))}
        click.echo(f"overall pixel MAE: {payload['overall_pixel_mae']:.2f} m/s")
    if report_path:
        with open(report_path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")


@main.command()
@_config_option
@click.option("--sample", "sample_dir", required=True, type=click.Path(exists=True))
@click.option("--dynamic-range-db", type=float, default=DEFAULT_DYNAMIC_RANGE_DB,
              show_default=True)
@click.option("--out", type=click.Path(), default=None)
def render(sample_dir, dynamic_range_db, out):
    """Emit B-mode and sound-speed images for a stored sample."""
    out = out or sample_dir
    os.makedirs(out, exist_ok=True)
    sample = read_sample(sample_dir)
    angles = sample.meta.get("config", {}).get("angles_deg", [-8.0, 0.0, 8.0])
    for k, angle in enumerate(sorted(angles)):
        iq = sample.inputs[2 * k].astype(np.float64) + 1j * sample.inputs[2 * k + 1]
        tag = f"{angle:+06.2f}".replace(".", "p")
        save_bmode(os.path.join(out, f"bmode_{tag}.png"), iq, dynamic_range_db)
    save_speed_map(os.path.join(out, "target_speed.png"), sample.target)
    est_path = os.path.join(sample_dir, "estimate.ustn")
    if os.path.exists(est_path):
        save_speed_map(os.path.join(out, "estimate_speed.png"), read_tensor(est_path))
    _write_resolved_config(out, "render", {"sample": sample_dir,
                                           "dynamic_range_db": dynamic_range_db})
    click.echo(out)


def run():
    """Entry point: usage errors exit 2 (click), runtime failures exit 1."""
    try:
        main()
    except SystemExit:
        raise
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    run()
