"""Regenerate the bundled 10-sample synthetic demo dataset.

Writes 16x16 single-channel gradient images as PTEN tensors plus a manifest
and a run config into src/picobench/data/demo/. The config resizes to 8x8
and feeds the 64 values to a 4-class synthetic backend.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from picobench.preprocess import write_tensor_file

DEMO_DIR = Path(__file__).resolve().parents[1] / "src" / "picobench" / "data" / "demo"

CONFIG = """\
# Bundled demo: 10 synthetic images through a 4-class synthetic model.
model_id = "demo-synthetic"
platform_label = "desktop"
manifest = "manifest.json"
iterations = 100
warmup = 5
seed = 7

[backend]
kind = "synthetic"
n_classes = 4
input_len = 64
busy_ms = 1.0

[preprocess.image]
height = 8
width = 8
mean = [0.5]
std = [0.25]
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=DEMO_DIR)
    ap.add_argument("--n", type=int, default=10)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    yy, xx = np.mgrid[0:16, 0:16] / 15.0
    samples = []
    for i in range(args.n):
        angle = np.pi * i / args.n
        img = 0.5 + 0.5 * np.cos(angle) * (xx - 0.5) + 0.5 * np.sin(angle) * (yy - 0.5)
        name = f"img_{i:02d}.pten"
        write_tensor_file(args.out / name, img[:, :, None].astype(np.float32))
        samples.append({"id": f"s{i}", "type": "image", "path": name})
    manifest = {"name": "demo", "samples": samples}
    (args.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (args.out / "demo.toml").write_text(CONFIG)
    print(f"wrote {args.n} samples to {args.out}")


if __name__ == "__main__":
    main()
