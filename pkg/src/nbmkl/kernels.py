"""Base kernels, normalized Gram banks and kernel alignment."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

KINDS = ("linear", "polynomial", "gaussian")


@dataclass(frozen=True)
class KernelSpec:
    """One base kernel.

    ``gaussian`` uses ``exp(-|x-y|^2 / (2 spread^2))``; set
    ``width_mode="spread"`` for ``exp(-|x-y|^2 / spread)``.
    """

    kind: str
    degree: int = 2
    offset: float = 1.0
    spread: float = 1.0
    width_mode: str = "2s2"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "polynomial" and self.degree < 1:
            raise ValueError("polynomial degree must be >= 1")
        if self.kind == "gaussian":
            if not self.spread > 0:
                raise ValueError("gaussian spread must be positive")
            if self.width_mode not in ("2s2", "spread"):
                raise ValueError(f"unknown width_mode {self.width_mode!r}")

    def label(self):
        if self.kind == "linear":
            return "linear"
        if self.kind == "polynomial":
            return f"poly(d={self.degree},c={self.offset:g})"
        return f"gauss(s={self.spread:g})"


def default_specs():
    """1 linear, 1 inhomogeneous quadratic and 8 gaussians with spreads 2..256."""
    specs = [KernelSpec("linear"), KernelSpec("polynomial", degree=2, offset=1.0)]
    specs += [KernelSpec("gaussian", spread=2.0**k) for k in range(1, 9)]
    return specs


def _sqdist(X, Y):
    xx = np.einsum("ij,ij->i", X, X)
    yy = np.einsum("ij,ij->i", Y, Y)
    D = xx[:, None] + yy[None, :] - 2.0 * (X @ Y.T)
    return np.maximum(D, 0.0)


def gram(spec, X, Y=None):
    """Raw (unnormalized) kernel matrix between rows of ``X`` and ``Y``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    sym = Y is None
    Y = X if sym else np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"feature dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if spec.kind == "gaussian":
        D = _sqdist(X, Y)
        if sym:
            D = 0.5 * (D + D.T)
            np.fill_diagonal(D, 0.0)
        denom = 2.0 * spec.spread**2 if spec.width_mode == "2s2" else spec.spread
        return np.exp(-D / denom)
    G = X @ Y.T
    if sym:
        G = 0.5 * (G + G.T)
    if spec.kind == "polynomial":
        G = (spec.offset + G) ** spec.degree
    return G


def self_kernel(spec, X):
    """Diagonal ``k(x, x)`` for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if spec.kind == "gaussian":
        return np.ones(X.shape[0])
    sq = np.einsum("ij,ij->i", X, X)
    if spec.kind == "polynomial":
        return (spec.offset + sq) ** spec.degree
    return sq


def evaluate_kernel(spec, x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    if spec.kind == "linear":
        return float(x @ y)
    if spec.kind == "polynomial":
        return float((spec.offset + x @ y) ** spec.degree)
    d = float(np.sum((x - y) ** 2))
    denom = 2.0 * spec.spread**2 if spec.width_mode == "2s2" else spec.spread
    return float(np.exp(-d / denom))


def normalize_gram(K, diag_rows=None, diag_cols=None):
    """Cosine-normalize ``K``: ``K[i, j] / sqrt(k_ii k_jj)``.

    For a square symmetric ``K`` the diagonal is taken from ``K`` itself and
    set to exactly one.  Cross-kernel blocks pass the two self-kernel
    vectors explicitly.
    """
    K = np.asarray(K, dtype=float)
    square = diag_rows is None and diag_cols is None
    if square:
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError("normalize_gram needs a square matrix")
        diag_rows = diag_cols = np.diag(K)
    diag_rows = np.asarray(diag_rows, dtype=float)
    diag_cols = np.asarray(diag_cols, dtype=float)
    for d in (diag_rows, diag_cols):
        bad = np.flatnonzero(~(d > 0))
        if bad.size:
            raise ValueError(
                f"nonpositive diagonal entry {float(d[bad[0]])!r} at index {bad[0]}"
            )
    out = K / np.sqrt(np.outer(diag_rows, diag_cols))
    if square:
        out = 0.5 * (out + out.T)
        np.fill_diagonal(out, 1.0)
    return out


@dataclass
class KernelBank:
    """Normalized Gram matrices ``gram[t][m]`` for every task and base kernel.

    ``gram[t]`` is an array of shape ``(M, n_t, n_t)``.  ``center`` and
    ``scale`` hold the optional feature standardization applied before
    evaluation, so that out-of-sample rows go through the same transform.
    """

    gram: list
    specs: list
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    sizes: list = field(init=False)

    def __post_init__(self):
        self.gram = [np.asarray(G, dtype=float) for G in self.gram]
        self.sizes = [G.shape[1] for G in self.gram]
        for G in self.gram:
            if G.ndim != 3 or G.shape[0] != len(self.specs) or G.shape[1] != G.shape[2]:
                raise ValueError(f"bad Gram stack shape {G.shape}")

    @property
    def tasks(self):
        return len(self.gram)

    @property
    def bases(self):
        return len(self.specs)

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        if self.center is None:
            return X
        return (X - self.center) / self.scale

    def cross(self, task_X, X_new):
        """Normalized kernel rows ``k_m(x_new, x_train)``, shape (M, n_new, n_t)."""
        A = self.transform(X_new)
        B = self.transform(task_X)
        out = []
        for spec in self.specs:
            raw = gram(spec, A, B)
            out.append(normalize_gram(raw, self_kernel(spec, A), self_kernel(spec, B)))
        return np.stack(out)


def feature_stats(feature_blocks):
    """Pooled per-feature mean and std (std floored at 1 for constant columns)."""
    X = np.vstack([np.asarray(b, dtype=float) for b in feature_blocks])
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd


def build_bank(features, specs=None, zscore=False):
    """Build a normalized Gram bank.

    ``features`` is a sequence of per-task ``(n_t, p)`` arrays, or anything
    with a ``tasks`` attribute holding objects with a ``features`` field.
    """
    if hasattr(features, "tasks"):
        features = [task.features for task in features.tasks]
    specs = default_specs() if specs is None else list(specs)
    if not features or not specs:
        raise ValueError("need at least one task and one kernel")
    center = scale = None
    if zscore:
        center, scale = feature_stats(features)
    grams = []
    for X in features:
        X = np.asarray(X, dtype=float)
        if center is not None:
            X = (X - center) / scale
        grams.append(np.stack([normalize_gram(gram(s, X)) for s in specs]))
    return KernelBank(grams, specs, center, scale)


def alignment(K1, K2):
    """Frobenius cosine ``<K1, K2>_F / (|K1|_F |K2|_F)``."""
    K1 = np.asarray(K1, dtype=float)
    K2 = np.asarray(K2, dtype=float)
    if K1.shape != K2.shape:
        raise ValueError(f"shape mismatch {K1.shape} vs {K2.shape}")
    n1 = np.linalg.norm(K1)
    n2 = np.linalg.norm(K2)
    if n1 == 0 or n2 == 0:
        raise ValueError("alignment undefined for a zero matrix")
    return float(np.clip(np.sum(K1 * K2) / (n1 * n2), -1.0, 1.0))


# ---------------------------------------------------------------------------
# binary bank cache
#
#   magic  b"NBKB"            4 bytes
#   version                   <u4 (=1)
#   T, M                      <u4, <u4
#   n_1 .. n_T                <u4 each
#   M spec records            <B kind, <i4 degree, <d offset, <d spread, <B width_mode
#   has_stats                 <B; if 1: p <u4, then p <d centers, p <d scales
#   Gram data                 for t, for m: n_t*n_t <d, row-major
# ---------------------------------------------------------------------------

_BANK_MAGIC = b"NBKB"
_SPEC = struct.Struct("<BiddB")


def _pack_specs(specs):
    out = b""
    for s in specs:
        out += _SPEC.pack(KINDS.index(s.kind), s.degree, s.offset, s.spread,
                          0 if s.width_mode == "2s2" else 1)
    return out


def _unpack_specs(buf, pos, count):
    specs = []
    for _ in range(count):
        kind, degree, offset, spread, mode = _SPEC.unpack_from(buf, pos)
        pos += _SPEC.size
        specs.append(KernelSpec(KINDS[kind], degree, offset, spread,
                                "2s2" if mode == 0 else "spread"))
    return specs, pos


def save_bank(bank, path):
    T, M = bank.tasks, bank.bases
    parts = [_BANK_MAGIC, struct.pack("<III", 1, T, M),
             struct.pack(f"<{T}I", *bank.sizes), _pack_specs(bank.specs)]
    if bank.center is None:
        parts.append(struct.pack("<B", 0))
    else:
        p = bank.center.shape[0]
        parts += [struct.pack("<BI", 1, p), bank.center.astype("<f8").tobytes(),
                  bank.scale.astype("<f8").tobytes()]
    for G in bank.gram:
        parts.append(np.ascontiguousarray(G, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_bank(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != _BANK_MAGIC:
        raise ValueError(f"{path}: not a kernel bank file")
    version, T, M = struct.unpack_from("<III", buf, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported bank version {version}")
    pos = 16
    sizes = struct.unpack_from(f"<{T}I", buf, pos)
    pos += 4 * T
    specs, pos = _unpack_specs(buf, pos, M)
    (has_stats,) = struct.unpack_from("<B", buf, pos)
    pos += 1
    center = scale = None
    if has_stats:
        (p,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        center = np.frombuffer(buf, "<f8", p, pos).astype(float)
        pos += 8 * p
        scale = np.frombuffer(buf, "<f8", p, pos).astype(float)
        pos += 8 * p
    grams = []
    for n in sizes:
        cnt = M * n * n
        grams.append(np.frombuffer(buf, "<f8", cnt, pos).reshape(M, n, n).astype(float))
        pos += 8 * cnt
    return KernelBank(grams, specs, center, scale)
