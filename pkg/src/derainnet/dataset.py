"""Image I/O, rainy dataset synthesis and training patch sampling."""
from __future__ import annotations

import dataclasses
import logging
import zlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image

from . import __version__
from .filters import Decomposition, GuidedFilterConfig, decompose
from .network import PatchPair
from .pipeline import as_rgb
from .rainsynth import RainParams, composite, default_variants, derive_seed, render_rain_layer

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".ppm", ".pnm")
MANIFEST_NAME = "manifest.tsv"
MANIFEST_VERSION = 1
_COLUMNS = ("clean", "rainy", "variant", "angle_deg", "length_px", "density", "intensity",
            "seed", "status")


class ImageIOError(OSError):
    pass


def load_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit PNG/PPM as float64 in [0, 1], shaped (H, W, 1) or (H, W, 3)."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("P", "RGBA", "CMYK", "YCbCr"):
                im = im.convert("RGB")
            elif mode in ("1", "LA"):
                im = im.convert("L")
            elif mode not in ("L", "RGB"):
                raise ImageIOError(f"{path}: unsupported pixel mode {mode!r} (need 8-bit gray or RGB)")
            data = np.asarray(im, dtype=np.uint8)
    except ImageIOError:
        raise
    except (OSError, ValueError) as exc:
        raise ImageIOError(f"{path}: cannot read image ({exc})") from exc
    if data.ndim == 2:
        data = data[:, :, None]
    return data.astype(np.float64) / 255.0


def to_bytes(t: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] values to uint8 with round-half-up."""
    return np.floor(np.clip(t, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(path: str | Path, t: np.ndarray) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in IMAGE_SUFFIXES:
        raise ImageIOError(f"{path}: unsupported output format {suffix!r}")
    data = to_bytes(t)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    elif data.ndim != 2 and not (data.ndim == 3 and data.shape[2] == 3):
        raise ImageIOError(f"{path}: cannot store array of shape {t.shape} as an image")
    fmt = "PNG" if suffix == ".png" else "PPM"
    try:
        Image.fromarray(data).save(path, format=fmt)
    except OSError as exc:
        raise ImageIOError(f"{path}: cannot write image ({exc})") from exc


def list_images(directory: str | Path) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def bundled_clean_dir(split: str = "train") -> Path:
    """Directory of the small clean image set shipped with the package ("train" or "heldout")."""
    if split not in ("train", "heldout"):
        raise ValueError(f"unknown bundled split {split!r}; use 'train' or 'heldout'")
    return Path(str(resources.files("derainnet") / "data" / "clean" / split))


@dataclass
class ManifestEntry:
    clean_path: str
    rainy_path: str
    variant: int
    params: RainParams
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class DatasetManifest:
    root: Path
    seed: int
    created_with: str = f"derainnet {__version__}"
    entries: list[ManifestEntry] = field(default_factory=list)

    @property
    def failures(self) -> list[ManifestEntry]:
        return [e for e in self.entries if not e.ok]

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.root / path

    def write(self, path: str | Path | None = None) -> Path:
        path = Path(path) if path else self.root / MANIFEST_NAME
        lines = [f"# derainnet-manifest\tversion={MANIFEST_VERSION}",
                 f"# seed={self.seed}\tcreated_with={self.created_with}",
                 "\t".join(_COLUMNS)]
        for e in self.entries:
            p = e.params
            lines.append("\t".join([e.clean_path, e.rainy_path, str(e.variant), repr(p.angle_deg),
                                    str(p.length_px), repr(p.density), repr(p.intensity),
                                    str(p.seed), e.status]))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def read_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    lines = path.read_text(encoding="utf-8").splitlines()
    if len(lines) < 3 or not lines[0].startswith("# derainnet-manifest"):
        raise ValueError(f"{path}: not a derainnet manifest")
    header = dict(kv.split("=", 1) for kv in lines[0][2:].split("\t")[1:])
    if int(header.get("version", -1)) != MANIFEST_VERSION:
        raise ValueError(f"{path}: unsupported manifest version {header.get('version')}")
    meta = dict(kv.split("=", 1) for kv in lines[1][2:].split("\t"))
    if tuple(lines[2].split("\t")) != _COLUMNS:
        raise ValueError(f"{path}: unexpected manifest columns")
    manifest = DatasetManifest(root=path.parent, seed=int(meta["seed"]),
                               created_with=meta.get("created_with", ""))
    for lineno, line in enumerate(lines[3:], start=4):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != len(_COLUMNS):
            raise ValueError(f"{path}:{lineno}: expected {len(_COLUMNS)} fields, got {len(cols)}")
        params = RainParams(angle_deg=float(cols[3]), length_px=int(cols[4]),
                            density=float(cols[5]), intensity=float(cols[6]), seed=int(cols[7]))
        manifest.entries.append(ManifestEntry(cols[0], cols[1], int(cols[2]), params, cols[8]))
    return manifest


def synthesize_dataset(clean_dir: str | Path, out_dir: str | Path,
                       variants: Sequence[RainParams] | None = None, seed: int = 0,
                       one_variant_per_image: bool = False) -> DatasetManifest:
    """Render rainy versions of every clean image and write them plus a manifest.

    ``out_dir/rainy/NAME`` holds each rendering and ``out_dir/clean/NAME`` a
    copy of its ground truth under the same file name, so the two folders
    pair up by name.

    Each (image, variant) gets its own rain seed derived from ``seed``, the
    image file name and the variant index, so any single rendering can be
    regenerated in isolation. With ``one_variant_per_image`` image ``k`` only
    gets variant ``k mod len(variants)``. Failures are recorded in the
    manifest and do not stop the run.
    """
    clean_dir, out_dir = Path(clean_dir).resolve(), Path(out_dir)
    images = list_images(clean_dir)
    if not images:
        raise ValueError(f"no PNG/PPM images found in {clean_dir}")
    variants = list(variants) if variants is not None else default_variants()
    for sub in ("rainy", "clean"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest(root=out_dir, seed=seed)
    for k, clean_path in enumerate(images):
        picks = ([k % len(variants)] if one_variant_per_image else range(len(variants)))
        clean = None
        load_error = None
        try:
            clean = as_rgb(load_image(clean_path))
        except (OSError, ValueError) as exc:
            load_error = str(exc)
        name_key = zlib.crc32(clean_path.name.encode("utf-8"))
        for v in picks:
            params = dataclasses.replace(variants[v], seed=derive_seed(seed, name_key, v))
            name = f"{clean_path.stem}_v{v:02d}.png"
            rainy_rel, clean_rel = f"rainy/{name}", f"clean/{name}"
            status = "ok"
            if load_error is not None:
                status = f"error: {load_error}"
            else:
                try:
                    h, w = clean.shape[:2]
                    rain = render_rain_layer(h, w, params)
                    save_image(out_dir / rainy_rel, composite(clean, rain))
                    save_image(out_dir / clean_rel, clean)
                except (OSError, ValueError) as exc:
                    status = f"error: {exc}"
            if status != "ok":
                log.warning("%s variant %d: %s", clean_path.name, v, status)
            manifest.entries.append(
                ManifestEntry(clean_rel, rainy_rel, v, params, status.replace("\t", " ")))
    manifest.write()
    return manifest


class PatchDataset:
    """Random (image, location) draws over a manifest, materialized lazily.

    Both the rainy and clean images are decomposed once and cached; each
    draw crops the network input from the rainy layer and the center of the
    same window from the clean layer. ``domain="image"`` crops raw images
    instead of detail layers.
    """

    def __init__(self, manifest: DatasetManifest, count: int, patch_size: int, output_size: int,
                 filter_cfg: GuidedFilterConfig | None = None, seed: int = 0,
                 domain: str = "detail"):
        if domain not in ("detail", "image"):
            raise ValueError(f"domain must be 'detail' or 'image', got {domain!r}")
        if output_size < 1 or output_size > patch_size:
            raise ValueError(f"output_size {output_size} inconsistent with patch_size {patch_size}")
        self.patch_size = patch_size
        self.output_size = output_size
        self.margin = (patch_size - output_size) // 2
        self.filter_cfg = filter_cfg or GuidedFilterConfig()
        self.domain = domain
        self._cache: dict[Path, Decomposition] = {}
        self._raw: dict[Path, np.ndarray] = {}
        self.entries = [e for e in manifest.entries if e.ok]
        if not self.entries:
            raise ValueError("manifest has no usable entries")
        self._inputs: list[np.ndarray] = []
        self._targets: list[np.ndarray] = []
        for e in self.entries:
            rainy = self.layers(manifest.resolve(e.rainy_path))
            clean = self.layers(manifest.resolve(e.clean_path))
            if rainy.shape != clean.shape:
                raise ValueError(f"{e.rainy_path}: shape {rainy.shape} differs from clean {clean.shape}")
            self._inputs.append(rainy)
            self._targets.append(clean)
        smallest = min(min(a.shape[:2]) for a in self._inputs)
        if patch_size > smallest:
            raise ValueError(f"patch_size {patch_size} exceeds the smallest image side {smallest}")
        rng = np.random.default_rng(seed)
        self.image_index = rng.integers(0, len(self.entries), size=count)
        hs = np.array([a.shape[0] for a in self._inputs])[self.image_index]
        ws = np.array([a.shape[1] for a in self._inputs])[self.image_index]
        self.rows = np.floor(rng.random(count) * (hs - patch_size + 1)).astype(np.int64)
        self.cols = np.floor(rng.random(count) * (ws - patch_size + 1)).astype(np.int64)

    def decomposition(self, path: Path) -> Decomposition:
        path = Path(path)
        if path not in self._cache:
            self._cache[path] = decompose(as_rgb(load_image(path)), self.filter_cfg)
        return self._cache[path]

    def layers(self, path: Path) -> np.ndarray:
        if self.domain == "detail":
            return self.decomposition(path).detail
        path = Path(path)
        if path not in self._raw:
            self._raw[path] = as_rgb(load_image(path))
        return self._raw[path]

    def __len__(self) -> int:
        return len(self.image_index)

    def _crop(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        k, r, c = self.image_index[i], self.rows[i], self.cols[i]
        p, m, o = self.patch_size, self.margin, self.output_size
        x = self._inputs[k][r:r + p, c:c + p]
        t = self._targets[k][r + m:r + m + o, c + m:c + m + o]
        return x, t

    def __getitem__(self, i: int) -> PatchPair:
        x, t = self._crop(i)
        return PatchPair(input=x.copy(), target=t.copy())

    def batch(self, indices) -> tuple[np.ndarray, np.ndarray]:
        crops = [self._crop(i) for i in indices]
        return np.stack([c[0] for c in crops]), np.stack([c[1] for c in crops])


def sample_patches(manifest: DatasetManifest, count: int, patch_size: int, output_size: int,
                   filter_cfg: GuidedFilterConfig | None = None, seed: int = 0,
                   domain: str = "detail") -> Iterator[PatchPair]:
    """Stream ``count`` patch pairs drawn uniformly with replacement."""
    if count == 0:
        return iter(())
    ds = PatchDataset(manifest, count, patch_size, output_size, filter_cfg, seed, domain)
    return (ds[i] for i in range(len(ds)))
