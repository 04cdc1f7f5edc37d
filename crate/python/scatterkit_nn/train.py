"""Train the support network on a dataset directory written by `scatterkit gen-data`.

    python -m scatterkit_nn.train DATASET OUT.unetw1 [--epochs 20] [--batch 10] [--lr 1e-3]
"""

import argparse
import json
from pathlib import Path

import numpy as np
import torch

from .formats import encode_unetw1, read_real1
from .model import UNet, to_tensors


def load_split(root, indices):
    xs = [read_real1(root / f"pairs/{i}.input.real1") for i in indices]
    ys = [read_real1(root / f"pairs/{i}.target.real1") for i in indices]
    x = torch.tensor(np.stack(xs)[:, None], dtype=torch.float32)
    y = torch.tensor(np.stack(ys)[:, None], dtype=torch.float32)
    return x, y


def iou(pred, target):
    p = pred > 0.5
    t = target > 0.5
    union = (p | t).sum().item()
    return 1.0 if union == 0 else (p & t).sum().item() / union


def train(root, out, epochs=20, batch=10, lr=1e-3, seed=0, log=print):
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    side = manifest["config"]["n_inv"]
    if side % 8:
        raise ValueError(f"dataset side {side} is not a multiple of 8")
    torch.manual_seed(seed)
    xtr, ytr = load_split(root, manifest["train"])
    xva, yva = load_split(root, manifest["validation"])
    model = UNet()
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    history = []
    for epoch in range(epochs):
        model.train()
        perm = torch.randperm(len(xtr))
        total = 0.0
        for s in range(0, len(xtr), batch):
            idx = perm[s : s + batch]
            loss = ((model(xtr[idx]) - ytr[idx]) ** 2).sum()
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item()
        model.eval()
        with torch.no_grad():
            pv = model(xva) if len(xva) else torch.zeros(0)
            val_loss = ((pv - yva) ** 2).sum().item() if len(xva) else 0.0
            val_iou = iou(pv, yva) if len(xva) else float("nan")
        row = {"epoch": epoch + 1, "train_loss": total, "val_loss": val_loss, "val_iou": val_iou}
        history.append(row)
        log(json.dumps(row))
    Path(out).write_bytes(encode_unetw1(to_tensors(model)))
    return history


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dataset")
    ap.add_argument("out")
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--batch", type=int, default=10)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    train(args.dataset, args.out, args.epochs, args.batch, args.lr, args.seed)


if __name__ == "__main__":
    main()
