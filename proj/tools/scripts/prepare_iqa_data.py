#!/usr/bin/env python3
"""Regenerates data/iqa: grayscale test images from scikit-image's sample data
and the BRISQUE regressor converted from the `brisque` wheel (LIVE model).

usage: prepare_iqa_data.py BRISQUE_MODELS_DIR OUT_DIR
"""
import json
import os
import pickle
import sys

import numpy as np
from PIL import Image
import skimage.data

PRISTINE = ["astronaut", "brick", "camera", "chelsea", "coffee", "coins", "grass", "gravel",
            "rocket", "motorcycle_left"]
TEST = ["hubble_deep_field", "immunohistochemistry", "moon", "retina", "motorcycle_right"]
MAX_SIDE = 512


def load(name):
    if name.startswith("motorcycle"):
        left, right, _ = skimage.data.stereo_motorcycle()
        img = left if name.endswith("left") else right
    else:
        img = getattr(skimage.data, name)()
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img[..., :3] @ np.array([0.299, 0.587, 0.114])
    pil = Image.fromarray(np.clip(np.rint(img), 0, 255).astype(np.uint8))
    scale = MAX_SIDE / max(pil.size)
    if scale < 1.0:
        pil = pil.resize((round(pil.size[0] * scale), round(pil.size[1] * scale)), Image.LANCZOS)
    return pil


def convert_brisque(models_dir):
    with open(os.path.join(models_dir, "normalize.pickle"), "rb") as f:
        scale = pickle.load(f)
    header, svs, coefs = {}, [], []
    with open(os.path.join(models_dir, "svm.txt")) as f:
        lines = f.read().splitlines()
    i = 0
    while lines[i] != "SV":
        key, *vals = lines[i].split()
        header[key] = vals
        i += 1
    n = len(scale["min_"])
    for line in lines[i + 1:]:
        if not line.strip():
            continue
        coef, *pairs = line.split()
        row = [0.0] * n
        for p in pairs:
            k, v = p.split(":")
            row[int(k) - 1] = float(v)
        coefs.append(float(coef))
        svs.append(row)
    assert header["svm_type"] == ["epsilon_svr"] and header["kernel_type"] == ["rbf"]
    assert len(svs) == int(header["total_sv"][0])
    return {
        "format": "verse3d-brisque-svr-1",
        "kernel": "rbf",
        "gamma": float(header["gamma"][0]),
        "rho": float(header["rho"][0]),
        "feature_min": [float(v) for v in scale["min_"]],
        "feature_max": [float(v) for v in scale["max_"]],
        "coefficients": coefs,
        "support_vectors": svs,
    }


def main():
    models_dir, out = sys.argv[1], sys.argv[2]
    for sub, names in (("pristine", PRISTINE), ("test", TEST)):
        os.makedirs(os.path.join(out, sub), exist_ok=True)
        for name in names:
            load(name).save(os.path.join(out, sub, name + ".png"), optimize=True)
    with open(os.path.join(out, "brisque_model.json"), "w") as f:
        json.dump(convert_brisque(models_dir), f, separators=(",", ":"))


if __name__ == "__main__":
    main()
