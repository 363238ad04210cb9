"""File formats for the command-line harness.

Everything is language-neutral and diff-friendly:

* feature stacks and maps: comma-separated values with one leading
  comment line carrying the dimensions (``# k=<k> n=<n>`` for stacks,
  ``# k=<k> method=<tag>`` for maps, ``# k=<k> direction=<d> mode=<m>``
  for factor vectors)
* prior maps / target histograms: plain headerless CSV
* images and heatmaps: binary 8-bit portable graymap (P5)
* run configs: flat ``key=value`` text, ``#`` comments

Floats are written with 17 significant digits so every file round-trips
bit-for-bit. All writers go through a temp-file-and-rename so a failed
command never leaves a partial output behind.
"""

import os
import tempfile
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


class FileFormatError(ValueError):
    """A file does not parse as the expected format."""


def atomic_write_text(path, text: str) -> None:
    _atomic_write(path, text.encode("utf-8"))


def atomic_write_bytes(path, data: bytes) -> None:
    _atomic_write(path, data)


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _format_rows(arr: np.ndarray) -> str:
    return "\n".join(",".join(FLOAT_FMT % v for v in row) for row in arr) + "\n"


def _read_lines(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from exc
    comments, rows = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            comments.append(line)
        else:
            rows.append(line)
    return comments, rows


def _parse_header(comments, path) -> dict:
    fields = {}
    if comments:
        for token in comments[0].lstrip("#").split():
            if "=" in token:
                key, _, value = token.partition("=")
                fields[key] = value
    return fields


def _parse_matrix(rows, path) -> np.ndarray:
    try:
        data = [[float(v) for v in row.split(",")] for row in rows]
    except ValueError as exc:
        raise FileFormatError(f"{path}: non-numeric cell ({exc})") from exc
    widths = {len(r) for r in data}
    if not data or len(widths) != 1:
        raise FileFormatError(f"{path}: ragged or empty matrix")
    return np.array(data, dtype=np.float64)


# -- feature stacks ---------------------------------------------------------

def write_stack_csv(path, stack: np.ndarray) -> None:
    k, n, _ = stack.shape
    body = f"# k={k} n={n}\n" + _format_rows(stack.reshape(k * n, n))
    atomic_write_text(path, body)


def read_stack_csv(path) -> np.ndarray:
    comments, rows = _read_lines(path)
    header = _parse_header(comments, path)
    matrix = _parse_matrix(rows, path)
    try:
        k, n = int(header["k"]), int(header["n"])
    except (KeyError, ValueError) as exc:
        raise FileFormatError(f"{path}: missing '# k=<k> n=<n>' header") from exc
    if matrix.shape != (k * n, n):
        raise FileFormatError(
            f"{path}: header says k={k}, n={n} but body is {matrix.shape[0]}x{matrix.shape[1]}"
        )
    return matrix.reshape(k, n, n)


# -- square maps and factor vectors -----------------------------------------

def write_map_csv(path, entries: np.ndarray, method: str, lehmer_p=None) -> None:
    k = entries.shape[0]
    header = f"# k={k} method={method}"
    if lehmer_p is not None:
        header += f" p={FLOAT_FMT % lehmer_p}"
    atomic_write_text(path, header + "\n" + _format_rows(entries))


def read_map_csv(path) -> np.ndarray:
    _, rows = _read_lines(path)
    matrix = _parse_matrix(rows, path)
    if matrix.shape[0] != matrix.shape[1]:
        raise FileFormatError(f"{path}: map must be square, got {matrix.shape}")
    return matrix


def write_factors_csv(path, weights: np.ndarray, direction, mode) -> None:
    header = f"# k={weights.size} direction={direction or 'none'} mode={mode}"
    atomic_write_text(path, header + "\n" + _format_rows(weights[np.newaxis, :]))


def read_factors_csv(path) -> np.ndarray:
    _, rows = _read_lines(path)
    matrix = _parse_matrix(rows, path)
    return matrix.ravel()


# -- priors ------------------------------------------------------------------

def read_prior_map_csv(path) -> np.ndarray:
    """Headerless n_c x n_c CSV of reals in [0, 1]."""
    _, rows = _read_lines(path)
    matrix = _parse_matrix(rows, path)
    if matrix.shape[0] != matrix.shape[1]:
        raise FileFormatError(f"{path}: prior map must be square, got {matrix.shape}")
    if matrix.min() < 0 or matrix.max() > 1:
        raise FileFormatError(f"{path}: prior map entries must lie in [0, 1]")
    return matrix


def read_histogram_csv(path) -> np.ndarray:
    """Target histogram: any layout of comma/line separated bin masses."""
    _, rows = _read_lines(path)
    values = [float(v) for row in rows for v in row.split(",")]
    if not values:
        raise FileFormatError(f"{path}: empty histogram")
    return np.array(values, dtype=np.float64)


# -- portable graymaps --------------------------------------------------------

def write_pgm(path, gray: np.ndarray) -> None:
    """Binary 8-bit P5 graymap from a 2-D uint8 array."""
    h, w = gray.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + gray.astype(np.uint8).tobytes())


def scale_to_gray(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Affine map of [lo, hi] onto 0..255 with clipping and rounding."""
    if not hi > lo:
        raise ValueError("need hi > lo to scale intensities")
    scaled = (np.clip(values, lo, hi) - lo) / (hi - lo)
    return np.rint(scaled * 255.0).astype(np.uint8)


def write_heatmap_pgm(path, entries: np.ndarray) -> None:
    """Map heatmap scaled by the map's maximum (all-zero maps stay black)."""
    peak = float(entries.max())
    gray = scale_to_gray(entries, 0.0, peak) if peak > 0 else np.zeros_like(entries, dtype=np.uint8)
    write_pgm(path, gray)


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) graymap into floats in [0, 1]."""
    raw = Path(path).read_bytes()
    tokens = []
    i = 0
    # header: magic, width, height, maxval, with '#' comments allowed
    while len(tokens) < 4 and i < len(raw):
        if raw[i : i + 1] == b"#":
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
        elif raw[i : i + 1].isspace():
            i += 1
        else:
            j = i
            while j < len(raw) and not raw[j : j + 1].isspace():
                j += 1
            tokens.append(raw[i:j])
            i = j
    if len(tokens) < 4 or tokens[0] not in (b"P5", b"P2"):
        raise FileFormatError(f"{path}: not a P2/P5 graymap")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if tokens[0] == b"P5":
        data = np.frombuffer(raw[i + 1 :], dtype=np.uint8, count=width * height)
    else:
        data = np.array(raw[i:].split()[: width * height], dtype=np.float64)
    pixels = data.reshape(height, width).astype(np.float64) / maxval
    return pixels


def read_image(path) -> np.ndarray:
    """Load a reference image from PGM or CSV as (H, W, 1) floats."""
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".pnm"):
        return read_pgm(path)[:, :, np.newaxis]
    _, rows = _read_lines(path)
    return _parse_matrix(rows, path)[:, :, np.newaxis]


# -- desk-net parameter files ---------------------------------------------------

def write_params_txt(path, params, cfg) -> None:
    """Trained desk-net weights plus the forward settings they assume.

    One header line per group carries its shape; values are written flat
    with full precision, so loading reproduces the weights bit-for-bit.
    """
    lines = [
        "# desknet"
        f" variant={cfg.variant}"
        f" method={cfg.estimator.method}"
        f" p={FLOAT_FMT % cfg.estimator.lehmer_p}"
        f" epsilon={FLOAT_FMT % cfg.estimator.epsilon}"
        f" direction={cfg.factor_cfg.direction}"
        f" mode={cfg.factor_cfg.mode}"
        f" cmap_backprop={'on' if cfg.cmap_backprop else 'off'}"
        f" seed={cfg.seed}"
    ]
    for group in params.GROUPS:
        arr = getattr(params, group)
        shape = "x".join(str(s) for s in arr.shape)
        lines.append(f"# group {group} shape={shape}")
        lines.append(",".join(FLOAT_FMT % v for v in arr.ravel()))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_params_txt(path):
    """Load desk-net weights; returns (params, matching TrainConfig)."""
    from .cmap import EstimatorConfig
    from .desknet import DeskNetParams, TrainConfig
    from .factors import FactorConfig

    comments, rows = _read_lines(path)
    if not comments or "desknet" not in comments[0]:
        raise FileFormatError(f"{path}: not a desknet params file")
    header = _parse_header(comments, path)
    group_specs = []
    for comment in comments[1:]:
        tokens = comment.lstrip("#").split()
        if len(tokens) >= 3 and tokens[0] == "group":
            shape = tuple(int(s) for s in tokens[2].split("=")[1].split("x"))
            group_specs.append((tokens[1], shape))
    if len(group_specs) != len(rows) or [g for g, _ in group_specs] != list(DeskNetParams.GROUPS):
        raise FileFormatError(f"{path}: malformed params file")
    arrays = {}
    for (group, shape), row in zip(group_specs, rows):
        values = np.array([float(v) for v in row.split(",")], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise FileFormatError(f"{path}: group {group} has wrong element count")
        arrays[group] = values.reshape(shape)
    try:
        cfg = TrainConfig(
            variant=header["variant"],
            estimator=EstimatorConfig(
                method=header["method"],
                lehmer_p=float(header["p"]),
                epsilon=float(header["epsilon"]),
            ),
            factor_cfg=FactorConfig(direction=header["direction"], mode=header["mode"]),
            cmap_backprop=header["cmap_backprop"] == "on",
            seed=int(header["seed"]),
        )
    except (KeyError, ValueError) as exc:
        raise FileFormatError(f"{path}: bad params header ({exc})") from exc
    return DeskNetParams(**arrays), cfg


# -- run configs ---------------------------------------------------------------

def parse_config(path, allowed_keys) -> dict:
    """Flat key=value config with '#' comments; unknown keys are errors."""
    _, rows = _read_lines(path)
    out = {}
    for row in rows:
        if "=" not in row:
            raise FileFormatError(f"{path}: expected key=value, got {row!r}")
        key, _, value = row.partition("=")
        key = key.strip()
        if key not in allowed_keys:
            raise FileFormatError(f"{path}: unknown key {key!r} (allowed: {sorted(allowed_keys)})")
        if key in out:
            raise FileFormatError(f"{path}: duplicate key {key!r}")
        out[key] = value.strip()
    return out
