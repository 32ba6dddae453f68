"""Binary and text file formats. All binary numbers are little-endian."""

import csv
import struct

import numpy as np

from .simulate import MalformedFileError

STACK_MAGIC = b"PGMMSTK1"
MODEL_MAGIC = b"FBSPCA1\0"
MIXTURE_MAGIC = b"PGMMTH1\0"
LABELS_HEADER = ["index", "label"]


def _read_exact(fh, n, path, what):
    data = fh.read(n)
    if len(data) != n:
        raise MalformedFileError(f"{path}: truncated while reading {what}")
    return data


def write_stack(images, path):
    """Image stack: magic, u32 count, u32 side, then float32 pixels."""
    images = np.asarray(images)
    if images.ndim != 3 or images.shape[1] != images.shape[2]:
        raise ValueError(f"expected an (n, L, L) stack, got {images.shape}")
    n, L, _ = images.shape
    with open(path, "wb") as fh:
        fh.write(STACK_MAGIC)
        fh.write(struct.pack("<II", n, L))
        fh.write(images.astype("<f4").tobytes())


def read_stack(path):
    with open(path, "rb") as fh:
        if _read_exact(fh, 8, path, "magic") != STACK_MAGIC:
            raise MalformedFileError(f"{path}: not an image stack (bad magic)")
        n, L = struct.unpack("<II", _read_exact(fh, 8, path, "header"))
        payload = _read_exact(fh, 4 * n * L * L, path, "pixels")
        if fh.read(1):
            raise MalformedFileError(f"{path}: trailing bytes after {n} images")
    return np.frombuffer(payload, dtype="<f4").reshape(n, L, L).astype(float)


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<III", model.L, model.m, model.k_max))
        fh.write(np.asarray(model.omega, dtype="<i4").tobytes())
        for arr in (model.eigvals, model.mean_image, model.components.real,
                    model.components.imag):
            fh.write(np.asarray(arr, dtype="<f8").tobytes())


def load_model(path):
    """Read a model file; the band-limit spec is not stored, so ``spec`` is None."""
    from .fbspca import FbModel
    with open(path, "rb") as fh:
        if _read_exact(fh, 8, path, "magic") != MODEL_MAGIC:
            raise MalformedFileError(f"{path}: not a model file (bad magic)")
        L, m, k_max = struct.unpack("<III", _read_exact(fh, 12, path, "header"))

        def arr(dtype, count, shape, what):
            raw = _read_exact(fh, np.dtype(dtype).itemsize * count, path, what)
            return np.frombuffer(raw, dtype=dtype).reshape(shape).astype(
                int if dtype == "<i4" else float)

        omega = arr("<i4", m, (m,), "omega")
        eigvals = arr("<f8", m, (m,), "eigvals")
        mean = arr("<f8", L * L, (L, L), "mean image")
        re = arr("<f8", m * L * L, (m, L, L), "components")
        im = arr("<f8", m * L * L, (m, L, L), "components")
    return FbModel(components=re + 1j * im, mean_image=mean, omega=omega, eigvals=eigvals,
                   spec=None, k_max=k_max)


def save_mixture(theta, path):
    with open(path, "wb") as fh:
        fh.write(MIXTURE_MAGIC)
        fh.write(struct.pack("<II", theta.C, theta.m))
        for pi_c, cl in zip(theta.pi, theta.clusters):
            fh.write(struct.pack("<d", float(pi_c)))
            for arr in (cl.mu_r, cl.mu_phi, cl.sigma_r, cl.sigma_phi):
                fh.write(np.asarray(arr, dtype="<f8").tobytes())


def load_mixture(path):
    from .polar_gmm import ClusterParams, MixtureParams
    with open(path, "rb") as fh:
        if _read_exact(fh, 8, path, "magic") != MIXTURE_MAGIC:
            raise MalformedFileError(f"{path}: not a mixture checkpoint (bad magic)")
        C, m = struct.unpack("<II", _read_exact(fh, 8, path, "header"))
        pis, clusters = [], []
        for c in range(C):
            pis.append(struct.unpack("<d", _read_exact(fh, 8, path, f"cluster {c}"))[0])
            raw = _read_exact(fh, 32 * m, path, f"cluster {c}")
            vals = np.frombuffer(raw, dtype="<f8").reshape(4, m).astype(float)
            clusters.append(ClusterParams(*vals))
    return MixtureParams(pi=np.array(pis), clusters=tuple(clusters))


def write_labels(labels, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABELS_HEADER)
        for i, lab in enumerate(labels):
            w.writerow([i, int(lab)])


def read_labels(path):
    labels = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        if next(rows, None) != LABELS_HEADER:
            raise MalformedFileError(f"{path}: line 1: expected header index,label")
        for lineno, row in enumerate(rows, start=2):
            try:
                if len(row) != 2:
                    raise ValueError(f"expected 2 fields, got {len(row)}")
                index, label = int(row[0]), int(row[1])
            except ValueError as exc:
                raise MalformedFileError(f"{path}: line {lineno}: {exc}") from None
            if index != len(labels):
                raise MalformedFileError(f"{path}: line {lineno}: index {index} out of order")
            labels.append(label)
    return np.array(labels, dtype=int)


def write_pgm(image, path):
    """8-bit binary PGM, min-max scaled; a constant image maps to 0."""
    image = np.asarray(image, dtype=float)
    lo, hi = image.min(), image.max()
    scaled = np.zeros_like(image) if hi <= lo else (image - lo) / (hi - lo) * 255.0
    pixels = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_config(path):
    """``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise MalformedFileError(f"{path}: line {lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out
