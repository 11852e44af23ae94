#!/usr/bin/env python3
"""Train the bundled reference CNN and export it with an IDX dataset.

The dataset is scikit-learn's 8x8 handwritten digits (1797 images, bundled
with scikit-learn, no download). Images are rescaled from 0..16 to 0..255 and
written in IDX format. The split is fixed by a seeded permutation:

  * 1000 test images     -> data/digits/test-{images,labels}-idx*-ubyte
  * 200 calibration imgs -> data/digits/calib-{images,labels}-idx*-ubyte
  * the rest train the network (with +-1 pixel shift augmentation)

The network is conv3x3(1->16)+BN+ReLU, conv3x3/2(16->32)+BN+ReLU, dense(512->10).
Weights are exported unfolded (batch-norm kept separate) as raw little-endian
float32 blobs. Conv weights use [Ky, Kx, N_ic, N_oc] order, dense weights
[N_in, N_out]; activations are laid out H x W x C.
"""

import json
import os
import struct

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.datasets import load_digits

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
DATA_DIR = os.path.join(ROOT, "data", "digits")
MODEL_DIR = os.path.join(ROOT, "data", "models", "digits_cnn")
SEED = 20211015


def write_idx_images(path, images):
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, h, w))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


class Net(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 16, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(16)
        self.conv2 = nn.Conv2d(16, 32, 3, stride=2, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(32)
        self.fc = nn.Linear(4 * 4 * 32, 10)

    def forward(self, x):
        x = F.relu(self.bn1(self.conv1(x)))
        x = F.relu(self.bn2(self.conv2(x)))
        # flatten in H x W x C order to match the simulator's layout
        x = x.permute(0, 2, 3, 1).reshape(x.shape[0], -1)
        return self.fc(x)


def shift_batch(x, rng):
    out = torch.zeros_like(x)
    for i in range(x.shape[0]):
        dy, dx = rng.integers(-1, 2, size=2)
        out[i] = torch.roll(x[i], shifts=(int(dy), int(dx)), dims=(1, 2))
    return out


def main():
    torch.manual_seed(SEED)
    rng = np.random.default_rng(SEED)
    digits = load_digits()
    pixels = np.rint(digits.images * 255.0 / 16.0).astype(np.uint8)
    labels = digits.target.astype(np.uint8)
    perm = rng.permutation(len(labels))
    test_idx, rest = perm[:1000], perm[1000:]
    calib_idx = rest[:200]
    train_idx = rest

    os.makedirs(DATA_DIR, exist_ok=True)
    write_idx_images(os.path.join(DATA_DIR, "test-images-idx3-ubyte"), pixels[test_idx])
    write_idx_labels(os.path.join(DATA_DIR, "test-labels-idx1-ubyte"), labels[test_idx])
    write_idx_images(os.path.join(DATA_DIR, "calib-images-idx3-ubyte"), pixels[calib_idx])
    write_idx_labels(os.path.join(DATA_DIR, "calib-labels-idx1-ubyte"), labels[calib_idx])

    to_tensor = lambda idx: torch.tensor(pixels[idx], dtype=torch.float32).unsqueeze(1) / 255.0
    xtr, ytr = to_tensor(train_idx), torch.tensor(labels[train_idx], dtype=torch.long)
    xte, yte = to_tensor(test_idx), torch.tensor(labels[test_idx], dtype=torch.long)

    net = Net()
    opt = torch.optim.Adam(net.parameters(), lr=3e-3, weight_decay=1e-4)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=120)
    for epoch in range(120):
        net.train()
        order = torch.randperm(len(ytr))
        for start in range(0, len(order), 64):
            b = order[start:start + 64]
            loss = F.cross_entropy(net(shift_batch(xtr[b], rng)), ytr[b])
            opt.zero_grad()
            loss.backward()
            opt.step()
        sched.step()
    net.eval()
    with torch.no_grad():
        acc = (net(xte).argmax(1) == yte).float().mean().item()
    print(f"float test accuracy: {acc:.4f}")

    os.makedirs(MODEL_DIR, exist_ok=True)

    def dump(name, array):
        np.ascontiguousarray(array, dtype="<f4").tofile(os.path.join(MODEL_DIR, name))
        return name

    def conv_weight(conv):
        # torch [N_oc, N_ic, Ky, Kx] -> [Ky, Kx, N_ic, N_oc]
        return conv.weight.detach().numpy().transpose(2, 3, 1, 0)

    def bn_params(bn):
        return np.stack([bn.weight.detach().numpy(), bn.bias.detach().numpy(),
                         bn.running_mean.numpy(), bn.running_var.numpy()])

    manifest = {
        "name": "digits_cnn",
        "input_shape": [8, 8, 1],
        "layers": [
            {"kind": "conv2d", "shape": [3, 3, 1, 16], "stride": 1, "padding": 1,
             "activation": "relu", "weight_blob": dump("conv1.weight.bin", conv_weight(net.conv1)),
             "bn_blob": dump("conv1.bn.bin", bn_params(net.bn1)), "bn_eps": net.bn1.eps},
            {"kind": "conv2d", "shape": [3, 3, 16, 32], "stride": 2, "padding": 1,
             "activation": "relu", "weight_blob": dump("conv2.weight.bin", conv_weight(net.conv2)),
             "bn_blob": dump("conv2.bn.bin", bn_params(net.bn2)), "bn_eps": net.bn2.eps},
            {"kind": "dense", "shape": [512, 10], "activation": "none",
             "weight_blob": dump("fc.weight.bin", net.fc.weight.detach().numpy().T),
             "bias_blob": dump("fc.bias.bin", net.fc.bias.detach().numpy())},
        ],
    }
    with open(os.path.join(MODEL_DIR, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
