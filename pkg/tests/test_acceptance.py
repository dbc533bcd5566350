"""Acceptance criteria, one test per criterion.

Each test prints one `ACCEPTANCE <name>: PASS/FAIL` line; tolerances are
stated inline and match the contracts the package ships with.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from sonospeed.dataset import corpus_digest
from sonospeed.estimate import SweepSpec, error_vs_depth, regional_mean_error, speckle_brightness_sweep
from sonospeed.phantom import (PHANTOM_CLASSES, SPEED_RANGES, GridSpec, Tissue,
                               compose_phantom, homogeneous_phantom)
from sonospeed.sigproc import (BandpassSpec, BeamformGrid, TnaSpec, align_t0,
                               analytic_signal, apply_tna, bandpass, das_beamform,
                               resample)
from sonospeed.ustn import UstnFormatError, read_tensor, write_tensor
from sonospeed.verify import acquire_multi_angle, calibrate_sweep_bias, echo_arrival_time
from sonospeed.wavesim import (ChannelData, SolverConfig, TransducerSpec,
                               make_plane_wave, simulate_planewave)

pytestmark = pytest.mark.acceptance


def report(name: str, ok: bool, detail: str = ""):
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def point_target_run():
    """Default-geometry point target at 10 mm in homogeneous 1540 m/s."""
    grid = GridSpec(nx=256, nz=384)
    tx = TransducerSpec()
    ph = homogeneous_phantom(grid, 1540.0, speckle=False)
    row = round(0.010 / grid.dz)
    x_e = float(tx.element_x()[63])
    col = round(x_e / grid.dx + (grid.nx - 1) / 2)
    ph.props.c[row, col - 2: col + 3] = 1540.0 * 1.25
    pw = make_plane_wave(tx, 0.0)
    t_start = time.perf_counter()
    # record well past the echo so spectral edge effects stay out of the image
    ch = simulate_planewave(ph, tx, pw, SolverConfig(record_time=20e-6))
    runtime = time.perf_counter() - t_start
    return {"ch": ch, "tx": tx, "z_true": row * grid.dz, "x_true": x_e,
            "runtime": runtime, "element": 63}


def test_travel_time_physics(point_target_run):
    r = point_target_run
    ch = r["ch"]
    expected = ch.t0 + 2.0 * r["z_true"] / 1540.0
    measured = echo_arrival_time(ch, r["element"],
                                 (expected - 1.2e-6, expected + 1.2e-6))
    err_samples = (measured - expected) * ch.fs
    ok = abs(err_samples) <= 1.0 and r["runtime"] < 30.0
    report("travel-time-physics", ok,
           f"arrival error {err_samples:+.3f} samples (|.| <= 1), "
           f"runtime {r['runtime']:.1f} s (< 30 s) on a 256x384 grid")


def test_beamforming_localization(point_target_run):
    r = point_target_run
    ch = resample(r["ch"], 40e6)
    ch = bandpass(ch, BandpassSpec())
    ch = align_t0(ch)
    ch = analytic_signal(ch)
    g = BeamformGrid(nx=81, nz=161, x_min=r["x_true"] - 1e-3, x_max=r["x_true"] + 1e-3,
                     z_min=r["z_true"] - 2e-3, z_max=r["z_true"] + 2e-3, c0=1540.0)
    img = das_beamform(ch, r["tx"], 0.0, g)
    a = np.abs(img.pixels)
    k = np.unravel_index(np.argmax(a), a.shape)
    dz = abs(g.z()[k[0]] - r["z_true"])
    dx = abs(g.x()[k[1]] - r["x_true"])
    lam_half = 154e-6
    ok = dz <= lam_half and dx <= lam_half
    report("beamforming-localization", ok,
           f"peak offset dz {dz * 1e6:.0f} um, dx {dx * 1e6:.0f} um (<= 154 um)")


def test_speckle_brightness_closure():
    tx = TransducerSpec()
    grid = GridSpec(nx=256, nz=256)
    sweep = SweepSpec(c_min=1400, c_max=1700, c_step=5)
    bias = calibrate_sweep_bias(tx, grid=grid, c_ref=1515.0, seed=21, sweep=sweep)
    errors = {}
    for c_true, seed in ((1450.0, 5), (1500.0, 3), (1540.0, 7), (1600.0, 11)):
        ph = homogeneous_phantom(grid, c_true, seed=seed)
        chans = acquire_multi_angle(ph, tx, tapered_tx=True)
        res = speckle_brightness_sweep(chans, tx, sweep=sweep, bias=bias)
        errors[c_true] = res.c_hat - c_true
    ok = all(abs(e) <= 10.0 for e in errors.values())
    detail = ", ".join(f"{int(c)}: {e:+.1f}" for c, e in errors.items())
    report("speckle-brightness-closure", ok,
           f"calibration bias {bias:+.1f}; errors m/s {{{detail}}} (|.| <= 10)")


def test_tna_calibration():
    base = ChannelData(samples=np.zeros((2, 4096)), fs=40e6, t0=0.0, angle_deg=0.0,
                       pulse_duration=2e-7, pulse_rms=0.5, provenance={})
    level_errs = []
    for level in (-120.0, -100.0, -80.0):
        spec = TnaSpec(min_db=level, max_db=level, probability=1.0)
        out = apply_tna(base, spec, pulse_rms=0.5, seed=13)
        measured = np.sqrt(np.mean((out.samples - base.samples) ** 2))
        level_errs.append(20 * math.log10(measured / 0.5) - level)
    hits = 0
    n = 10_000
    tiny = ChannelData(samples=np.zeros((1, 8)), fs=40e6, t0=0.0, angle_deg=0.0,
                       pulse_duration=2e-7, pulse_rms=0.5, provenance={})
    for seed in range(n):
        out = apply_tna(tiny, TnaSpec(probability=0.2), seed=seed)
        hits += out.provenance["tna"] is not None
    rate = hits / n
    ok = all(abs(e) <= 1.0 for e in level_errs) and abs(rate - 0.2) <= 0.012
    report("tna-calibration", ok,
           f"level errors dB {[f'{e:+.2f}' for e in level_errs]} (|.| <= 1), "
           f"rate {rate:.4f} (0.2 +- 0.012)")


def test_phantom_statistics():
    grid = GridSpec(nx=288, nz=384)  # >= 1e5 pixels
    n_pixels = grid.nx * grid.nz
    occupancy_ok = True
    ranges_ok = True
    gland_two_ok = True
    for i in range(200):
        class_kind = PHANTOM_CLASSES[i % len(PHANTOM_CLASSES)]
        ph = compose_phantom(class_kind, grid, seed=1000 + i)
        rho = ph.scatterers.rho_s
        sigma = math.sqrt(rho * (1 - rho) / n_pixels)
        if abs(ph.scatterers.occupancy.mean() - rho) > 3 * sigma:
            occupancy_ok = False
        lo, hi = SPEED_RANGES[Tissue.GLAND_BG]
        for key, val in ph.mean_speeds.items():
            table = {"gland_bg": (lo, hi), "gland_fg": (lo, hi),
                     "skin": SPEED_RANGES[Tissue.SKIN],
                     "cyst": SPEED_RANGES[Tissue.CYST],
                     "lesion": SPEED_RANGES[Tissue.LESION]}[key]
            if not table[0] <= val <= table[1]:
                ranges_ok = False
        if class_kind == "gland" and len(np.unique(ph.target)) != 2:
            gland_two_ok = False
    ok = occupancy_ok and ranges_ok and gland_two_ok
    report("phantom-statistics", ok,
           f"200 phantoms: occupancy 3-sigma {occupancy_ok}, "
           f"table ranges {ranges_ok}, gland two-value targets {gland_two_ok}")


def test_build_dataset_determinism(tmp_path):
    args = ["--n", "12", "--seed", "1", "--grid", "144x192", "--image", "96x96",
            "--elements", "64"]
    t_start = time.perf_counter()
    runs = {}
    for jobs, name in (("1", "a"), ("8", "b")):
        out = tmp_path / name
        r = subprocess.run([sys.executable, "-m", "sonospeed.cli", "build-dataset",
                            *args, "--jobs", jobs, "--out", str(out)],
                           capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
        runs[name] = corpus_digest(out)
    elapsed = time.perf_counter() - t_start
    ok = runs["a"] == runs["b"] and elapsed < 15 * 60
    report("build-dataset-determinism", ok,
           f"digest equal {runs['a'] == runs['b']}, total {elapsed / 60:.1f} min (< 15)")


def test_format_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ok = True
    cases = 0
    for dtype in (np.float32, np.complex64):
        for ndim in (1, 2, 3, 4):
            shape = tuple(rng.integers(1, 6, ndim))
            if dtype is np.complex64:
                arr = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
                       ).astype(np.complex64)
            else:
                arr = rng.standard_normal(shape).astype(np.float32)
            p = tmp_path / f"t{cases}.ustn"
            write_tensor(p, arr)
            back = read_tensor(p)
            ok &= np.array_equal(back.view(np.uint8), arr.view(np.uint8))
            cases += 1
    # corruption detection
    p = tmp_path / "c.ustn"
    write_tensor(p, np.arange(64, dtype=np.float32))
    blob = bytes(p.read_bytes())
    variants = [
        b"XXXX" + blob[4:],                # bad magic
        blob[:4] + b"\x09" + blob[5:],     # bad version
        blob[:5] + b"\x4d" + blob[6:],     # bad dtype code
        blob[:-7],                          # truncated payload
    ]
    corrupted = 0
    for bb in variants:
        p.write_bytes(bb)
        try:
            read_tensor(p)
        except UstnFormatError:
            corrupted += 1
    ok = ok and corrupted == 4
    report("format-round-trip", ok,
           f"{cases} dtype/ndim round trips bit-exact, {corrupted}/4 corruptions detected")


def test_metric_oracle_equivalence():
    rng = np.random.default_rng(4)
    est = rng.uniform(1400, 1700, (48, 40))
    tgt = rng.uniform(1400, 1700, (48, 40))
    labels = rng.integers(0, 5, (48, 40)).astype(np.uint8)
    rep = regional_mean_error(est, tgt, labels)
    brute_mae = 0.0
    for i in range(48):
        for j in range(40):
            brute_mae += abs(est[i, j] - tgt[i, j])
    brute_mae /= est.size
    mae_ok = abs(rep.pixel_mae - brute_mae) <= 1e-9 * brute_mae
    region_ok = True
    for lab, st in rep.regions.items():
        se = te = 0.0
        nn = 0
        for i in range(48):
            for j in range(40):
                if labels[i, j] == lab:
                    se += est[i, j]
                    te += tgt[i, j]
                    nn += 1
        expected = se / nn - te / nn
        if abs(st.error - expected) > 1e-9 * max(1.0, abs(expected)):
            region_ok = False
    centers, prof = error_vs_depth([est], [tgt], n_bins=8)
    prof_ok = True
    edges = np.linspace(0, 48, 9).astype(int)
    for b in range(8):
        total = cnt = 0.0
        for i in range(edges[b], edges[b + 1]):
            for j in range(40):
                total += (est[i, j] - tgt[i, j]) / tgt[i, j]
                cnt += 1
        if abs(prof[b] - total / cnt) > 1e-9 * max(1e-12, abs(total / cnt)):
            prof_ok = False
    ok = mae_ok and region_ok and prof_ok
    report("metric-oracle-equivalence", ok,
           f"pixel MAE {mae_ok}, regional errors {region_ok}, depth profile {prof_ok} "
           f"(all <= 1e-9 relative)")
