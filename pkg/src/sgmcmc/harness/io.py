"""Dataset ingestion: IDX (MNIST) binaries, LIBSVM text, synthetic .npz files,
and Gaussian random projection."""

import os
import struct

import numpy as np

from ..exceptions import FormatError, InvalidInputError
from ..models import Dataset

IDX_LABELS_MAGIC = 0x00000801
IDX_IMAGES_MAGIC = 0x00000803
DATA_DIR_ENV = "SGMCMC_DATA_DIR"


def resolve_data_path(path, base_dir=None):
    """Absolute path for ``path``.

    Relative paths are taken against ``$SGMCMC_DATA_DIR`` when it is set,
    otherwise against ``base_dir`` (typically the config file's directory).
    """
    path = os.path.expanduser(str(path))
    if os.path.isabs(path):
        return path
    root = os.environ.get(DATA_DIR_ENV) or base_dir or os.getcwd()
    return os.path.join(root, path)


def _read_idx(path, expected_magic):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for an IDX header", offset=len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(
            f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}", offset=0
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated dimension header", offset=len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims, dtype=np.int64))
    if len(raw) - header < size:
        raise FormatError(
            f"{path}: truncated payload, {len(raw) - header} of {size} bytes present",
            offset=len(raw),
        )
    if len(raw) - header > size:
        raise FormatError(f"{path}: trailing bytes after payload", offset=header + size)
    data = np.frombuffer(raw, dtype=np.uint8, count=size, offset=header)
    return data.reshape(dims)


def load_idx(images_path, labels_path, digits=None):
    """Read an IDX image/label file pair.

    Pixels are scaled to [0, 1] and each image is flattened into one row.
    With ``digits=(a, b)`` only those two classes are kept, labelled +1 for
    ``a`` and -1 for ``b``; otherwise the raw labels are returned.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"{labels_path}: {labels.shape[0]} labels for {images.shape[0]} images", offset=4
        )
    n_pixels = int(np.prod(images.shape[1:], dtype=np.int64))
    X = images.reshape(images.shape[0], n_pixels).astype(np.float64) / 255.0
    y = labels.astype(np.float64)
    if digits is not None:
        pos, neg = digits
        keep = (labels == pos) | (labels == neg)
        X = X[keep]
        y = np.where(labels[keep] == pos, 1.0, -1.0)
    return Dataset(X, y)


def load_libsvm(path, n_features=None):
    """Read a LIBSVM/SVMlight text file into a dense Dataset.

    Lines are ``label index:value ...`` with 1-based indices. Blank lines
    and ``#`` comments are skipped. The feature count is the largest index
    seen, or ``n_features`` when given (larger indices are then an error).
    """
    labels = []
    rows = []
    max_index = 0
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                label = float(tokens[0])
            except ValueError:
                raise FormatError(f"{path}: bad label {tokens[0]!r}", line=lineno) from None
            entries = {}
            for tok in tokens[1:]:
                idx_str, sep, val_str = tok.partition(":")
                try:
                    if not sep:
                        raise ValueError
                    idx = int(idx_str)
                    val = float(val_str)
                except ValueError:
                    raise FormatError(f"{path}: malformed token {tok!r}", line=lineno) from None
                if idx < 1:
                    raise FormatError(f"{path}: index {idx} is not 1-based", line=lineno)
                if idx in entries:
                    raise FormatError(f"{path}: duplicate index {idx}", line=lineno)
                entries[idx] = val
            if entries:
                max_index = max(max_index, max(entries))
            labels.append(label)
            rows.append(entries)

    d = max_index if n_features is None else int(n_features)
    if max_index > d:
        raise FormatError(f"{path}: feature index {max_index} exceeds n_features={d}")
    X = np.zeros((len(rows), d))
    for i, entries in enumerate(rows):
        for idx, val in entries.items():
            X[i, idx - 1] = val
    return Dataset(X, np.asarray(labels, dtype=np.float64))


def random_projection(data, out_dim, seed, matrix=None):
    """Replace features by ``R x`` with ``R_ij ~ N(0, 1/out_dim)`` drawn from ``seed``.

    ``matrix`` overrides the random draw (shape (out_dim, d)).
    """
    if out_dim < 1:
        raise InvalidInputError("out_dim must be >= 1")
    d = data.n_features
    if matrix is None:
        rng = np.random.default_rng(seed)
        matrix = rng.standard_normal((out_dim, d)) / np.sqrt(out_dim)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (out_dim, d):
        raise InvalidInputError(f"projection matrix must be {out_dim}x{d}")
    return Dataset(data.X @ matrix.T, data.y)


def save_synthetic(path, data, theta_true, seed):
    with open(path, "wb") as f:
        np.savez(f, X=data.X, y=data.y, theta_true=theta_true, seed=np.uint64(seed))


def load_npz(path):
    """Load a dataset written by :func:`save_synthetic`. Returns (Dataset, metadata)."""
    try:
        with np.load(path) as z:
            data = Dataset(z["X"], z["y"])
            meta = {k: z[k] for k in z.files if k not in ("X", "y")}
    except KeyError as err:
        raise FormatError(f"{path}: missing array {err}") from None
    return data, meta
