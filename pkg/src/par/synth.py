"""Synthetic attack suite: mid-range images paired with per-image energy
oracles whose ground truth is analytic.

Each case plants `hot_regions` load-bearing regions (weight 1) among
otherwise weightless regions and sets the threshold at `theta_frac` of
the expected initial weighted energy under init_stddev Gaussian noise, so
adversarial initialization succeeds almost surely on the first query and
patch removal has a known floor.  Cases serialize to a JSON manifest the
experiment harness consumes.
"""

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .core import make_rng
from .errors import ContractViolation
from .imgio import read_parimg, read_pnm, write_parimg
from .oracle import PatchEnergyOracle
from .patchgrid import build_grid


@dataclass
class SynthCase:
    image: np.ndarray
    label: int
    oracle: PatchEnergyOracle


def make_case(rng, height=112, width=112, channels=3, region_size=28,
              hot_regions=1, theta_frac=0.8, init_stddev=16.0,
              base_low=96.0, base_high=160.0, quantize=True):
    """One synthetic case with analytic ground truth.

    The base image is integral and mid-range so init noise at 3 sigma
    never clips.  theta = theta_frac * hot * stddev * sqrt(values per
    region), i.e. theta_frac of the expected initial hot energy.
    """
    if height % region_size or width % region_size:
        raise ContractViolation("region_size must divide height and width")
    shape = (height, width, channels)
    image = np.floor(rng.uniform(base_low, base_high + 1.0, size=shape))
    grid = build_grid(shape, region_size)
    n_regions = grid.rows * grid.cols
    if not (1 <= hot_regions <= n_regions):
        raise ContractViolation("hot_regions out of range")
    weights = np.zeros((grid.rows, grid.cols))
    hot = rng.choice(n_regions, size=hot_regions, replace=False)
    weights.flat[hot] = 1.0
    region_values = region_size * region_size * channels
    theta = theta_frac * hot_regions * init_stddev * math.sqrt(region_values)
    oracle = PatchEnergyOracle(image, grid, weights, theta,
                               original_label=0, adversarial_label=1,
                               quantize=quantize)
    return SynthCase(image=image, label=0, oracle=oracle)


def make_suite(n_images=50, seed=0, **case_kwargs):
    cases = []
    for i in range(n_images):
        rng = make_rng((seed * 1000003 + i * 7919) % (2 ** 63))
        cases.append(make_case(rng, **case_kwargs))
    return cases


def write_suite(out_dir, cases):
    """Persist a suite: one image file per case plus a manifest.

    Returns the manifest path.  Manifest entries carry everything needed
    to rebuild each per-image oracle (the image itself is the reference).
    """
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i, case in enumerate(cases):
        name = "img_%03d.pimg" % i
        write_parimg(os.path.join(out_dir, name), case.image)
        o = case.oracle
        entries.append({
            "file": name,
            "label": case.label,
            "energy": {
                "region_size": o.region_grid.patch_size,
                "theta": o.threshold,
                "weights": o.weights.tolist(),
                "original_label": o.original_label,
                "adversarial_label": o.adversarial_label,
                "quantize": bool(o.quantize),
            },
        })
    manifest = os.path.join(out_dir, "suite.json")
    with open(manifest, "w") as f:
        json.dump({"images": entries}, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def load_image(path):
    ext = os.path.splitext(path)[1].lower()
    if ext in (".pimg", ".parimg"):
        return read_parimg(path)
    if ext in (".pgm", ".ppm", ".pnm"):
        return read_pnm(path)
    raise ContractViolation("unknown image extension: %r" % path)


def load_manifest(path):
    """Manifest JSON -> list of entries with images loaded.

    Each returned dict has keys: id, image, label, and optionally an
    "energy" oracle spec (with the loaded image as reference).
    """
    with open(path) as f:
        doc = json.load(f)
    if not isinstance(doc, dict) or "images" not in doc:
        raise ContractViolation("manifest %r lacks an 'images' list" % path)
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for i, entry in enumerate(doc["images"]):
        img_path = os.path.join(base, entry["file"])
        out.append({
            "id": os.path.splitext(os.path.basename(entry["file"]))[0],
            "index": i,
            "image": load_image(img_path),
            "label": int(entry["label"]),
            "energy": entry.get("energy"),
        })
    return out


def oracle_from_entry(entry):
    """Rebuild the per-image energy oracle recorded in a manifest entry."""
    spec = entry.get("energy")
    if spec is None:
        raise ContractViolation(
            "manifest entry %r has no energy oracle parameters" % entry["id"])
    image = entry["image"]
    grid = build_grid(image.shape, int(spec["region_size"]))
    return PatchEnergyOracle(
        image, grid, np.asarray(spec["weights"], dtype=np.float64),
        float(spec["theta"]),
        original_label=int(spec.get("original_label", 0)),
        adversarial_label=int(spec.get("adversarial_label", 1)),
        quantize=bool(spec.get("quantize", True)))
