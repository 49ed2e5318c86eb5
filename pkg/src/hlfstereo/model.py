"""Core data model: light-field containers, disparity maps, camera curves, file IO.

A hyperspectral light field is an M x N grid of rectified views, one narrow
spectral band per view.  Disparity is proportional to grid offset: the scene
point seen at pixel (row, col) of the central view (s0, t0) appears at

    (row + d * (s - s0), col + d * (t - t0))

in view (s, t).  Rows pair with s (vertical parallax), columns with t
(horizontal parallax).  Metric depth is out of scope; the baseline is carried
as metadata only.
"""

import json
import os
import re
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

PFM_INVALID = -1e30


@dataclass(frozen=True)
class ViewIndex:
    s: int  # grid row
    t: int  # grid column


@dataclass
class SpectralImage:
    """Single-band view: 2D float image in [0, 1] plus its band center in nm."""

    data: np.ndarray
    center_nm: float
    view: ViewIndex = None

    @property
    def shape(self):
        return self.data.shape


@dataclass
class DisparityMap:
    values: np.ndarray  # float32, disparity in pixels per unit grid offset
    valid: np.ndarray   # bool, same shape

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.valid is None:
            self.valid = np.ones(self.values.shape, dtype=bool)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.values.shape:
            raise ValueError("valid mask shape mismatch")

    def copy(self):
        return DisparityMap(self.values.copy(), self.valid.copy())


@dataclass
class CameraSpectralResponse:
    """RGB responsivity sampled on a wavelength grid, linearly interpolated."""

    wavelengths: np.ndarray  # (n,), nm, strictly increasing
    rgb: np.ndarray          # (n, 3), nonnegative

    def __post_init__(self):
        self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        if self.rgb.ndim != 2 or self.rgb.shape != (self.wavelengths.size, 3):
            raise ValueError("rgb must be (n, 3) matching wavelengths")
        if np.any(np.diff(self.wavelengths) <= 0):
            raise ValueError("wavelengths must be strictly increasing")
        if np.any(self.rgb < 0):
            raise ValueError("responsivities must be nonnegative")
        if np.any(self.rgb.sum(axis=1) <= 0):
            raise ValueError("every sample needs at least one nonzero channel")

    def sample(self, lams):
        """Linear interpolation of (r, g, b) at the given wavelengths."""
        lams = np.atleast_1d(np.asarray(lams, dtype=np.float64))
        out = np.stack(
            [np.interp(lams, self.wavelengths, self.rgb[:, c]) for c in range(3)],
            axis=-1,
        )
        return out


@dataclass
class HyperspectralLightField:
    grid_rows: int
    grid_cols: int
    views: dict = field(default_factory=dict)  # (s, t) -> SpectralImage
    baseline_mm: float = 36.0
    disparity_range: tuple = (0.0, 4.0)
    label_count: int = 64
    central: tuple = None  # (s0, t0)

    def __post_init__(self):
        if self.central is None:
            self.central = (self.grid_rows // 2, self.grid_cols // 2)

    @property
    def shape(self):
        return next(iter(self.views.values())).data.shape

    @property
    def bands(self):
        """Band centers in grid scan order (s major, t minor)."""
        return [self.views[(s, t)].center_nm
                for s in range(self.grid_rows) for t in range(self.grid_cols)]

    def view(self, s, t):
        return self.views[(s, t)]

    def central_view(self):
        return self.views[self.central]

    def labels(self):
        """Uniform disparity label grid over the declared range."""
        lo, hi = self.disparity_range
        return np.linspace(lo, hi, self.label_count)

    def offsets(self):
        """(s - s0, t - t0) per view in scan order."""
        s0, t0 = self.central
        return [(s - s0, t - t0)
                for s in range(self.grid_rows) for t in range(self.grid_cols)]


def _to_unit_float(arr):
    """Normalize an integer image array to [0, 1] by its dtype max."""
    if arr.dtype == np.uint8:
        return arr.astype(np.float32) / 255.0
    if arr.dtype == np.uint16:
        return arr.astype(np.float32) / 65535.0
    if arr.dtype in (np.int32, np.uint32):  # PIL mode "I" for 16-bit PNGs
        if arr.max() > 65535:
            raise ValueError("unsupported integer range in image")
        return arr.astype(np.float32) / 65535.0
    if np.issubdtype(arr.dtype, np.floating):
        return arr.astype(np.float32)
    raise ValueError(f"unsupported image dtype {arr.dtype}")


def read_image(path):
    """Read an 8/16-bit grayscale PNG or PGM into a float image in [0, 1]."""
    with Image.open(path) as im:
        if im.mode in ("RGB", "RGBA"):
            im = im.convert("L")
        arr = np.array(im)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected single-channel image")
    return _to_unit_float(arr)


def write_image(path, data, depth=16):
    """Write a [0, 1] float image as an 8- or 16-bit grayscale PNG/PGM."""
    data = np.clip(np.asarray(data, dtype=np.float64), 0.0, 1.0)
    if depth == 16:
        arr = np.round(data * 65535.0).astype(np.uint16)
    elif depth == 8:
        arr = np.round(data * 255.0).astype(np.uint8)
    else:
        raise ValueError("depth must be 8 or 16")
    Image.fromarray(arr).save(path)


def write_rgb(path, rgb):
    """Write a [0, 1] float (H, W, 3) image as an 8-bit PNG."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got {rgb.shape}")
    arr = np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr).save(path)


def load_dataset(manifest_path):
    """Load a light field from a JSON manifest.

    Manifest keys: grid_rows, grid_cols, baseline, disparity_range [lo, hi],
    label_count, optional central [s0, t0], and views: a list of
    {s, t, center_nm, file} with file paths relative to the manifest.
    """
    manifest_path = os.path.abspath(manifest_path)
    with open(manifest_path) as f:
        man = json.load(f)
    root = os.path.dirname(manifest_path)
    rows, cols = int(man["grid_rows"]), int(man["grid_cols"])
    entries = man["views"]
    if len(entries) != rows * cols:
        raise ValueError(f"manifest lists {len(entries)} views for a "
                         f"{rows}x{cols} grid")
    central = tuple(man["central"]) if "central" in man else None
    hlf = HyperspectralLightField(
        grid_rows=rows, grid_cols=cols,
        baseline_mm=float(man.get("baseline", 36.0)),
        disparity_range=tuple(float(x) for x in man["disparity_range"]),
        label_count=int(man.get("label_count", 64)),
        central=central,
    )
    shape = None
    for e in entries:
        s, t = int(e["s"]), int(e["t"])
        img = read_image(os.path.join(root, e["file"]))
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise ValueError(f"view ({s},{t}) shape {img.shape} != {shape}")
        hlf.views[(s, t)] = SpectralImage(img, float(e["center_nm"]),
                                          ViewIndex(s, t))
    missing = [(s, t) for s in range(rows) for t in range(cols)
               if (s, t) not in hlf.views]
    if missing:
        raise ValueError(f"manifest missing views: {missing}")
    return hlf


def save_dataset(hlf, out_dir, depth=16):
    """Write every view as PNG plus a manifest; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for s in range(hlf.grid_rows):
        for t in range(hlf.grid_cols):
            si = hlf.views[(s, t)]
            name = f"view_{s}_{t}.png"
            write_image(os.path.join(out_dir, name), si.data, depth=depth)
            entries.append({"s": s, "t": t, "center_nm": si.center_nm,
                            "file": name})
    man = {
        "grid_rows": hlf.grid_rows,
        "grid_cols": hlf.grid_cols,
        "baseline": hlf.baseline_mm,
        "disparity_range": list(hlf.disparity_range),
        "label_count": hlf.label_count,
        "central": list(hlf.central),
        "views": entries,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(man, f, indent=2)
    return path


# ---------------------------------------------------------------------------
# Disparity IO: PFM (float32, little-endian, -1e30 sentinel) and 16-bit PNG
# with a JSON scale sidecar (raw 0 reserved for invalid).


def write_pfm(path, dm):
    """Write a DisparityMap as a grayscale PFM (rows stored bottom-up)."""
    vals = dm.values.astype(np.float32).copy()
    vals[~dm.valid] = PFM_INVALID
    h, w = vals.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")  # negative scale marks little-endian
        f.write(vals[::-1].astype("<f4").tobytes())


def read_pfm(path):
    """Read a grayscale PFM into a DisparityMap (sentinel -> invalid)."""
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header not in (b"Pf", b"PF"):
            raise ValueError(f"{path}: not a PFM file")
        if header == b"PF":
            raise ValueError(f"{path}: color PFM not supported for disparity")
        dims = f.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        endian = "<" if scale < 0 else ">"
        data = np.frombuffer(f.read(w * h * 4), dtype=endian + "f4")
    vals = data.reshape(h, w)[::-1].astype(np.float32)
    if abs(scale) not in (0.0, 1.0):
        vals = vals * abs(scale)
    valid = vals > PFM_INVALID / 2
    vals = np.where(valid, vals, 0.0).astype(np.float32)
    return DisparityMap(vals, valid)


def write_disparity_png(path, dm, scale=256.0):
    """16-bit PNG disparity: raw = round(d * scale), 0 reserved for invalid.

    The scale goes to a JSON sidecar next to the image.  Values whose scaled
    magnitude cannot be represented raise rather than wrap.
    """
    raw = np.round(dm.values.astype(np.float64) * scale)
    raw[~dm.valid] = 0
    if raw.min() < 0 or raw.max() > 65535:
        raise ValueError("disparity out of range for 16-bit PNG at this scale")
    raw = raw.astype(np.uint16)
    # a valid pixel that quantizes to 0 would read back as invalid; bump it
    bump = dm.valid & (raw == 0)
    raw[bump] = 1
    Image.fromarray(raw).save(path)
    with open(path + ".json", "w") as f:
        json.dump({"scale": scale, "invalid": 0}, f)


def read_disparity_png(path, scale=None):
    """Read 16-bit PNG disparity; scale from the JSON sidecar unless given."""
    if scale is None:
        with open(path + ".json") as f:
            scale = float(json.load(f)["scale"])
    raw = np.array(Image.open(path))
    valid = raw > 0
    vals = (raw.astype(np.float64) / scale).astype(np.float32)
    vals[~valid] = 0.0
    return DisparityMap(vals, valid)


def read_disparity_pgm(path, scale=16.0):
    """Read integer PGM ground truth (raw / scale, raw 0 means unknown)."""
    raw = np.array(Image.open(path))
    if raw.ndim != 2:
        raise ValueError(f"{path}: expected grayscale PGM")
    valid = raw > 0
    vals = (raw.astype(np.float64) / scale).astype(np.float32)
    vals[~valid] = 0.0
    return DisparityMap(vals, valid)


def read_disparity(path, scale=None):
    """Dispatch on extension: .pfm, .png (+json sidecar), or .pgm."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pfm":
        return read_pfm(path)
    if ext == ".png":
        return read_disparity_png(path, scale=scale)
    if ext == ".pgm":
        return read_disparity_pgm(path, scale=scale if scale else 16.0)
    raise ValueError(f"unknown disparity format: {path}")


def write_disparity(path, dm, scale=256.0):
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pfm":
        write_pfm(path, dm)
    elif ext == ".png":
        write_disparity_png(path, dm, scale=scale)
    else:
        raise ValueError(f"unknown disparity format: {path}")


def load_camera_response(path):
    """Load a camera response CSV with columns: wavelength_nm, r, g, b."""
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if re.match(r"^[A-Za-z]", line):  # header row
                continue
            parts = re.split(r"[,;\s]+", line)
            if len(parts) < 4:
                raise ValueError(f"bad camera response row: {line!r}")
            rows.append([float(x) for x in parts[:4]])
    if len(rows) < 2:
        raise ValueError("camera response needs at least two samples")
    arr = np.asarray(rows, dtype=np.float64)
    order = np.argsort(arr[:, 0])
    arr = arr[order]
    return CameraSpectralResponse(arr[:, 0], arr[:, 1:4])


def save_camera_response(path, cam):
    lines = ["wavelength_nm,r,g,b"]
    for lam, (r, g, b) in zip(cam.wavelengths, cam.rgb):
        lines.append(f"{lam:g},{r:.8g},{g:.8g},{b:.8g}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
