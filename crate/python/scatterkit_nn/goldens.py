"""Export forward-pass golden vectors for the Rust cross-check.

    python -m scatterkit_nn.goldens OUT_DIR [--weights FILE.unetw1] [--count 5] [--seed 0]

Without `--weights` the deterministic synthetic weights are used, and only
their sha256 is recorded (the file itself is large).
"""

import argparse
import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .formats import decode_unetw1, encode_unetw1, write_real1
from .model import UNet, load_tensors, synthetic_tensors

SIDE = 80


def export(out_dir, tensors, count, seed, side=SIDE):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = load_tensors(UNet(), tensors).eval()
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(count):
        x = rng.random((side, side)).astype(np.float32)
        with torch.no_grad():
            y = model(torch.from_numpy(x)[None, None])[0, 0].numpy()
        write_real1(out_dir / f"{i}.input.real1", x.astype(np.float64))
        write_real1(out_dir / f"{i}.output.real1", y.astype(np.float64))
        entries.append({"index": i, "input": f"{i}.input.real1", "output": f"{i}.output.real1"})
    manifest = {
        "weights_sha256": hashlib.sha256(encode_unetw1(tensors)).hexdigest(),
        "count": count,
        "seed": seed,
        "side": side,
        "torch": torch.__version__,
        "goldens": entries,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--weights")
    ap.add_argument("--count", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    torch.set_num_threads(1)
    if args.weights:
        tensors = decode_unetw1(Path(args.weights).read_bytes())
    else:
        tensors = synthetic_tensors()
    m = export(args.out_dir, tensors, args.count, args.seed)
    print(f"wrote {m['count']} goldens to {args.out_dir}")


if __name__ == "__main__":
    main()
