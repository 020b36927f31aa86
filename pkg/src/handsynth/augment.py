"""Label-consistent image augmentation.

Each plan draws its branches independently: one geometric op (30%, four variants at 7.5%), one
colour op (30%, nine variants at 1/30), blur (50%), vertical flip (50%), horizontal flip (50%)
and erase (15%). Ops run in a fixed order: geometric, colour, blur, flips, erase.
Pixel (row i, col j) sits at x=j, y=i, so an affine map of pixel centres is also the keypoint map.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import InvalidArgument
from .render import Annotation, keypoint_bbox

GEOMETRIC_OPS = ("DownscaleUpscale", "Scale", "Stretch", "Translate")
COLOR_OPS = ("Brightness", "ColorBalance", "Contrast", "Equalize", "KernelFilter",
             "NoiseInjection", "PatchShuffle", "Solarize", "SolarizeAdd")

P_GEOMETRIC = 0.30
P_COLOR = 0.30
P_BLUR = 0.50
P_VFLIP = 0.50
P_HFLIP = 0.50
P_ERASE = 0.15

# stream tag keeping plan draws apart from the scene sampler's streams of the same seed
_PLAN_STREAM = 0xA06


@dataclass(frozen=True)
class AugmentationPlan:
    geometric: dict | None = None  # {"op": name, ...params}
    color: dict | None = None
    blur: dict | None = None  # {"sigma": px}
    vflip: bool = False
    hflip: bool = False
    erase: dict | None = None  # region as fractions of the hand bbox, plus a noise seed
    seed: int = 0

    @property
    def any_non_flip(self):
        return (self.geometric is not None or self.color is not None or self.blur is not None
                or self.erase is not None)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def geometric_only(self):
        return AugmentationPlan(geometric=self.geometric, seed=self.seed)


def sample_plan(rng_seed) -> AugmentationPlan:
    seed = int(rng_seed)
    rng = np.random.default_rng([seed, _PLAN_STREAM, 1])
    u = rng.random(6)
    geometric = color = blur = erase = None
    if u[0] < P_GEOMETRIC:
        op = GEOMETRIC_OPS[min(int(u[0] / (P_GEOMETRIC / 4)), 3)]
        geometric = {"op": op, **_geometric_params(op, rng)}
    if u[1] < P_COLOR:
        op = COLOR_OPS[min(int(u[1] / (P_COLOR / 9)), 8)]
        color = {"op": op, **_color_params(op, rng)}
    if u[2] < P_BLUR:
        blur = {"sigma": float(rng.uniform(0.5, 2.0))}
    if u[5] < P_ERASE:
        area = rng.uniform(0.05, 0.25)
        aspect = np.exp(rng.uniform(np.log(0.5), np.log(2.0)))
        erase = {"area": float(area), "aspect": float(aspect), "cx": float(rng.random()),
                 "cy": float(rng.random()), "noise_seed": int(rng.integers(2**31))}
    return AugmentationPlan(geometric, color, blur, bool(u[3] < P_VFLIP), bool(u[4] < P_HFLIP),
                            erase, seed)


def _geometric_params(op, rng):
    if op == "DownscaleUpscale":
        return {"factor": float(rng.uniform(0.25, 0.75))}
    if op == "Scale":
        return {"scale": float(rng.uniform(0.7, 1.3))}
    if op == "Stretch":
        return {"aspect": float(rng.uniform(0.75, 1.33))}
    return {"dx": float(rng.uniform(-0.15, 0.15)), "dy": float(rng.uniform(-0.15, 0.15))}


def _color_params(op, rng):
    if op in ("Brightness", "Contrast"):
        return {"factor": float(rng.uniform(0.6, 1.4))}
    if op == "ColorBalance":
        return {"gains": [float(g) for g in rng.uniform(0.8, 1.2, 3)]}
    if op == "KernelFilter":
        return {"strength": float(rng.uniform(0.2, 1.0))}
    if op == "NoiseInjection":
        return {"sigma": float(rng.uniform(4.0, 20.0)), "noise_seed": int(rng.integers(2**31))}
    if op == "PatchShuffle":
        return {"size": int(rng.integers(2, 4)), "noise_seed": int(rng.integers(2**31))}
    if op == "Solarize":
        return {"threshold": int(rng.integers(128, 225))}
    if op == "SolarizeAdd":
        return {"add": int(rng.integers(16, 97)), "threshold": 128}
    return {}


def geometric_matrix(geometric, width, height):
    """2x3 affine map of pixel coordinates for a geometric op (translate given as a width fraction)."""
    cx, cy = 0.5 * (width - 1), 0.5 * (height - 1)
    op = geometric["op"]
    if op == "DownscaleUpscale":
        sx = sy = 1.0
    elif op == "Scale":
        sx = sy = geometric["scale"]
    elif op == "Stretch":
        sx = np.sqrt(geometric["aspect"])
        sy = 1.0 / sx
    elif op == "Translate":
        return np.array([[1.0, 0.0, geometric["dx"] * width], [0.0, 1.0, geometric["dy"] * width]])
    else:
        raise InvalidArgument(f"unknown geometric op {op!r}")
    return np.array([[sx, 0.0, cx - sx * cx], [0.0, sy, cy - sy * cy]])


def warp_geometric(image, geometric):
    """Apply a geometric op to any (H, W[, C]) array; returns (image, affine)."""
    h, w = image.shape[:2]
    m = geometric_matrix(geometric, w, h)
    if geometric["op"] == "DownscaleUpscale":
        f = geometric["factor"]
        small = cv2.resize(image, (max(1, round(w * f)), max(1, round(h * f))),
                           interpolation=cv2.INTER_AREA)
        out = cv2.resize(small, (w, h), interpolation=cv2.INTER_LINEAR)
    else:
        out = cv2.warpAffine(image, m, (w, h), flags=cv2.INTER_LINEAR,
                             borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    return out.reshape(image.shape), m


def _color(image, color):
    op = color["op"]
    img = image
    if op == "Brightness":
        return np.clip(img * color["factor"] + 0.5, 0, 255).astype(np.uint8)
    if op == "ColorBalance":
        return np.clip(img * np.asarray(color["gains"]) + 0.5, 0, 255).astype(np.uint8)
    if op == "Contrast":
        mean = (img @ np.array([0.299, 0.587, 0.114])).mean()
        return np.clip(mean + (img - mean) * color["factor"] + 0.5, 0, 255).astype(np.uint8)
    if op == "Equalize":
        return np.dstack([cv2.equalizeHist(np.ascontiguousarray(img[..., c])) for c in range(3)])
    if op == "KernelFilter":
        s = color["strength"]
        k = np.array([[0, -s, 0], [-s, 1 + 4 * s, -s], [0, -s, 0]], dtype=np.float32)
        return cv2.filter2D(img, -1, k, borderType=cv2.BORDER_REFLECT)
    if op == "NoiseInjection":
        rng = np.random.default_rng(color["noise_seed"])
        noise = rng.normal(0.0, color["sigma"], img.shape)
        return np.clip(img + noise + 0.5, 0, 255).astype(np.uint8)
    if op == "PatchShuffle":
        return _patch_shuffle(img, color["size"], color["noise_seed"])
    if op == "Solarize":
        return np.where(img >= color["threshold"], 255 - img, img).astype(np.uint8)
    if op == "SolarizeAdd":
        added = np.minimum(img.astype(np.int32) + color["add"], 255).astype(np.uint8)
        return np.where(img < color["threshold"], added, img)
    raise InvalidArgument(f"unknown colour op {op!r}")


def _patch_shuffle(image, size, seed):
    """Permute pixels inside each size x size tile (local, so labels move by < size px)."""
    h, w, c = image.shape
    hh, ww = h - h % size, w - w % size
    out = image.copy()
    tiles = image[:hh, :ww].reshape(hh // size, size, ww // size, size, c).transpose(0, 2, 1, 3, 4)
    tiles = tiles.reshape(-1, size * size, c)
    rng = np.random.default_rng(seed)
    order = np.argsort(rng.random(tiles.shape[:2]), axis=1)
    shuffled = np.take_along_axis(tiles, order[..., None], axis=1)
    shuffled = shuffled.reshape(hh // size, ww // size, size, size, c).transpose(0, 2, 1, 3, 4)
    out[:hh, :ww] = shuffled.reshape(hh, ww, c)
    return out


def erase_region(bbox, erase, width, height):
    """Integer (x0, y0, x1, y1) rectangle (exclusive end) inside the hand bbox."""
    bx, by, bw, bh = bbox
    bw, bh = max(bw, 1.0), max(bh, 1.0)
    area = erase["area"] * bw * bh
    rw = min(np.sqrt(area * erase["aspect"]), bw)
    rh = min(area / rw, bh)
    x0 = bx + erase["cx"] * (bw - rw)
    y0 = by + erase["cy"] * (bh - rh)
    x0i, y0i = int(np.clip(round(x0), 0, width - 1)), int(np.clip(round(y0), 0, height - 1))
    x1i = int(np.clip(round(x0 + rw), x0i + 1, width))
    y1i = int(np.clip(round(y0 + rh), y0i + 1, height))
    return x0i, y0i, x1i, y1i


def _in_frame(k, width, height):
    return (k[:, 0] >= 0) & (k[:, 0] <= width - 1) & (k[:, 1] >= 0) & (k[:, 1] <= height - 1)


def apply(image, annotation: Annotation, plan: AugmentationPlan):
    """Apply a plan to an (H, W, 3) uint8 image and its annotation. Inputs are not modified."""
    img = np.ascontiguousarray(image)
    h, w = img.shape[:2]
    kp2 = annotation.keypoints_2d.copy()
    kp3 = annotation.keypoints_3d.copy()
    visible = annotation.visible.copy()
    meta = dict(annotation.meta)
    changed = False

    if plan.geometric is not None:
        img, m = warp_geometric(img, plan.geometric)
        kp2 = kp2 @ m[:, :2].T + m[:, 2]
        visible &= _in_frame(kp2, w, h)
        changed = True
    if plan.color is not None:
        img = _color(img, plan.color)
    if plan.blur is not None:
        img = cv2.GaussianBlur(img, (0, 0), plan.blur["sigma"], borderType=cv2.BORDER_REFLECT)
    if plan.vflip:
        img = img[::-1]
        kp2[:, 1] = (h - 1) - kp2[:, 1]
        kp3[:, 1] = -kp3[:, 1]
        changed = True
    if plan.hflip:
        img = img[:, ::-1]
        kp2[:, 0] = (w - 1) - kp2[:, 0]
        kp3[:, 0] = -kp3[:, 0]
        meta["handedness"] = "Left" if meta.get("handedness") == "Right" else "Right"
        changed = True
    img = np.ascontiguousarray(img)

    if changed:
        annotation = Annotation(kp2, visible, kp3, keypoint_bbox(kp2, (w, h)), meta)
    if plan.erase is not None:
        x0, y0, x1, y1 = erase_region(annotation.bbox, plan.erase, w, h)
        rng = np.random.default_rng(plan.erase["noise_seed"])
        noise = rng.normal(128.0, 50.0, (y1 - y0, x1 - x0, img.shape[2]))
        img = img.copy() if img is image else img
        img[y0:y1, x0:x1] = np.clip(noise + 0.5, 0, 255).astype(np.uint8)
    return img, annotation


def apply_in_place_pass(dataset_dir, rng_seed, threads=1):
    """Augment every image of a dataset in place and append one plan record per sample.

    Each image is swapped atomically; if logging its plan fails the original is restored.
    """
    from .dataset import augment_dataset_in_place
    return augment_dataset_in_place(dataset_dir, rng_seed, threads)
