import json
import subprocess
import sys

import numpy as np
import pytest

from sostrainer.ustn import write_tensor


def fabricate_corpus(root, n=8, shape=(32, 32), seed=0):
    """Synthetic corpus with the real on-disk layout but no simulations."""
    rng = np.random.default_rng(seed)
    ids = []
    for i in range(n):
        sid = f"sample_{i:06d}"
        d = root / sid
        d.mkdir(parents=True)
        planes = rng.standard_normal((6, *shape)).astype(np.float32) * 0.01
        base = rng.uniform(1480, 1620)
        target = np.full(shape, base, dtype=np.float32)
        target[shape[0] // 2:] += rng.uniform(-30, 30)
        write_tensor(d / "input.ustn", planes)
        write_tensor(d / "target.ustn", target)
        (d / "meta.json").write_text(json.dumps(
            {"class": "gland", "pulse_rms": 0.48, "n_elements": 64}))
        ids.append(sid)
    manifest = {"master_seed": seed, "samples": [{"id": s, "index": k, "class": "gland"}
                                                 for k, s in enumerate(ids)],
                "train": ids[: max(1, n - 2)], "val": ids[max(1, n - 2):]}
    (root / "manifest.json").write_text(json.dumps(manifest))
    return root


@pytest.fixture()
def fake_corpus(tmp_path):
    return fabricate_corpus(tmp_path / "corpus")


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """Ten real simulated samples built through the simulation toolkit CLI."""
    root = tmp_path_factory.mktemp("toy") / "corpus"
    r = subprocess.run([sys.executable, "-m", "sonospeed.cli", "build-dataset",
                        "--n", "10", "--seed", "5", "--grid", "128x160",
                        "--image", "64x64", "--elements", "64", "--jobs", "2",
                        "--tna-prob", "0", "--mix", "gland=1,cyst=1",
                        "--out", str(root)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    return root
