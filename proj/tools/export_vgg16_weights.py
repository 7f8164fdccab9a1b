#!/usr/bin/env python3
"""Export torchvision VGG16 `features` weights in a form the C++ loader reads.

Writes `vgg16_features.pt` (a scripted module whose attributes are named
`features_<index>_weight` / `features_<index>_bias`) and a `.sha256` sidecar.
Run once on a machine that can reach the torchvision model zoo, then copy the
directory to $MORPHAEUS_WEIGHTS_DIR (default ~/.cache/morphaeus).
"""

import argparse
import hashlib
import os
import pathlib

import torch
import torchvision


class Holder(torch.nn.Module):
    def __init__(self, tensors):
        super().__init__()
        for name, t in tensors.items():
            self.register_parameter(name, torch.nn.Parameter(t.detach().clone(), requires_grad=False))

    def forward(self, x):
        return x


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    default_dir = os.environ.get("MORPHAEUS_WEIGHTS_DIR", str(pathlib.Path.home() / ".cache" / "morphaeus"))
    parser.add_argument("--out", default=default_dir, help="output directory")
    parser.add_argument("--random", action="store_true",
                        help="export randomly initialised weights (offline smoke testing only)")
    args = parser.parse_args()

    weights = None if args.random else torchvision.models.VGG16_Weights.IMAGENET1K_V1
    features = torchvision.models.vgg16(weights=weights).features

    tensors = {}
    for index, layer in enumerate(features):
        if isinstance(layer, torch.nn.Conv2d):
            tensors[f"features_{index}_weight"] = layer.weight
            tensors[f"features_{index}_bias"] = layer.bias

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "vgg16_features.pt"
    torch.jit.script(Holder(tensors)).save(str(path))
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    (out / "vgg16_features.pt.sha256").write_text(f"{digest}  {path.name}\n")
    print(f"wrote {path} ({len(tensors) // 2} conv layers, sha256 {digest})")


if __name__ == "__main__":
    main()
