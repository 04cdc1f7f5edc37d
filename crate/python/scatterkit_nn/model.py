"""The U-Net, with parameter names matching the UNETW1 layer contract."""

import math

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

WIDTHS = (32, 64, 128)
BOTTLENECK = 256


class Encoder(nn.Module):
    def __init__(self, cin, w):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, w, 3, padding=1)
        self.conv2 = nn.Conv2d(w, w, 3, padding=1)

    def forward(self, x):
        return F.relu(self.conv2(F.relu(self.conv1(x))))


class Decoder(nn.Module):
    def __init__(self, cin, w):
        super().__init__()
        self.up = nn.Conv2d(cin, w, 3, padding=1)
        self.conv1 = nn.Conv2d(2 * w, w, 3, padding=1)
        self.conv2 = nn.Conv2d(w, w, 3, padding=1)

    def forward(self, x, skip):
        x = F.relu(self.up(F.interpolate(x, scale_factor=2, mode="nearest")))
        x = torch.cat([x, skip], dim=1)
        return F.relu(self.conv2(F.relu(self.conv1(x))))


class UNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.enc1 = Encoder(1, WIDTHS[0])
        self.enc2 = Encoder(WIDTHS[0], WIDTHS[1])
        self.enc3 = Encoder(WIDTHS[1], WIDTHS[2])
        self.bottleneck = Encoder(WIDTHS[2], BOTTLENECK)
        self.dec3 = Decoder(BOTTLENECK, WIDTHS[2])
        self.dec2 = Decoder(WIDTHS[2], WIDTHS[1])
        self.dec1 = Decoder(WIDTHS[1], WIDTHS[0])
        self.head = nn.Conv2d(WIDTHS[0], 1, 1)
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.xavier_uniform_(m.weight)
                nn.init.zeros_(m.bias)

    def forward(self, x):
        e1 = self.enc1(x)
        e2 = self.enc2(F.max_pool2d(e1, 2))
        e3 = self.enc3(F.max_pool2d(e2, 2))
        b = self.bottleneck(F.max_pool2d(e3, 2))
        d = self.dec3(b, e3)
        d = self.dec2(d, e2)
        d = self.dec1(d, e1)
        return torch.sigmoid(self.head(d))


def layer_order():
    """Parameter names in file order."""
    names = []
    for block in ["enc1", "enc2", "enc3", "bottleneck"]:
        names += [f"{block}.conv1", f"{block}.conv2"]
    for block in ["dec3", "dec2", "dec1"]:
        names += [f"{block}.up", f"{block}.conv1", f"{block}.conv2"]
    names.append("head")
    return [f"{n}.{p}" for n in names for p in ("weight", "bias")]


def to_tensors(model):
    state = model.state_dict()
    return [(name, state[name].detach().cpu().numpy().astype(np.float32)) for name in layer_order()]


def load_tensors(model, tensors):
    state = {name: torch.from_numpy(np.asarray(arr)) for name, arr in tensors}
    expected = {name: tuple(t.shape) for name, t in model.state_dict().items()}
    for name, arr in tensors:
        if expected.get(name) != tuple(arr.shape):
            raise ValueError(f"layer {name}: shape {arr.shape} does not match the network")
    model.load_state_dict(state, strict=True)
    return model


def synthetic_tensors(model=None):
    """Deterministic integer-derived weights; identical to the Rust generator."""
    model = model or UNet()
    state = model.state_dict()
    out = []
    for l, name in enumerate(layer_order()):
        shape = tuple(state[name].shape)
        e = np.arange(int(np.prod(shape)), dtype=np.int64)
        if len(shape) == 1:
            vals = (((31 * e + 17 * l) % 21).astype(np.float64) - 10.0) / 100.0
        else:
            scale = math.sqrt(6.0 / (shape[1] * shape[2] * shape[3]))
            vals = (((7919 * e + 104729 * l) % 2001).astype(np.float64) - 1000.0) / 1000.0 * scale
        out.append((name, vals.astype(np.float32).reshape(shape)))
    return out
