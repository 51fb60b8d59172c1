#!/usr/bin/env python3
"""Export torchvision VGG19 weights to the angio tensor container.

    python3 tools/export_vgg19.py --out $ANGIO_ASSET_DIR/vgg19.tensors

Needs torch and torchvision; the ImageNet weights are downloaded by torchvision
unless they are already in its cache. --random writes an untrained network
(same layout), which is only useful for checking the loader.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np


def write_tensor_file(path, tensors, meta):
    entries, chunks, offset = [], [], 0
    for name, arr in tensors:
        a = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "count": int(a.size)})
        chunks.append(a.tobytes())
        offset += int(a.size)
    payload = b"".join(chunks)
    header = {
        "format": "angio-tensors",
        "version": 1,
        "meta": meta,
        "tensors": entries,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".part"
    with open(tmp, "wb") as f:
        f.write(json.dumps(header, separators=(",", ":")).encode())
        f.write(b"\n")
        f.write(payload)
    os.replace(tmp, path)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--random", action="store_true", help="untrained weights, for loader checks")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--no-classifier", action="store_true")
    args = ap.parse_args()

    import torch
    import torchvision

    torch.manual_seed(args.seed)
    if args.random:
        model = torchvision.models.vgg19(weights=None)
        source = "random-init seed %d" % args.seed
    else:
        weights = torchvision.models.VGG19_Weights.IMAGENET1K_V1
        model = torchvision.models.vgg19(weights=weights)
        source = str(weights)
    model.eval()

    tensors = []
    for name, t in model.state_dict().items():
        if name.startswith("classifier.") and args.no_classifier:
            continue
        tensors.append((name, t.detach().cpu().numpy()))
    write_tensor_file(args.out, tensors, {"model": "vgg19", "source": source})
    print("wrote %s (%d tensors)" % (args.out, len(tensors)), file=sys.stderr)


if __name__ == "__main__":
    main()
