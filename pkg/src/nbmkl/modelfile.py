"""Binary model files.

Layout (all integers and floats little-endian)::

    magic  b"NBKM"                      4 bytes
    version                             <u4 (=1)
    method                              <u2 length + utf-8 bytes
    kind                                <B  (0 classification, 1 regression)
    T, M, p                             <u4 x 3
    hyperparameters                     <d C, eta, beta, epsilon, svm_tol,
                                        theta_tol, rel_tol; <u4 max_outer
    theta                               (M + M*T) <d
    M spec records                      same record as the bank file
    has_stats                           <B; if 1: p <d centers, p <d scales
    per task t:
        n_t                             <u4
        features                        n_t*p <d, row-major
        targets                         n_t <d
        alpha length k                  <u4 (n_t or 2*n_t)
        alpha                           k <d
        coef                            n_t <d
        bias, objective, violation      <d x 3
        n_iter                          <u8
    has_neighborhood                    <B; if 1: for t: n_t*n_t <d row-major,
                                        then <B has_coef; if 1: T*M <d
    trace length L                      <u4; then L records of
                                        <u4 iteration, <u2 len + utf-8 step, <d value

The writer is deterministic: the same model always produces the same bytes.
"""
from __future__ import annotations

import struct

import numpy as np

from .kernels import _pack_specs, _unpack_specs
from .subproblems import HyperParams, NeighborhoodSet, ThetaParams
from .svm import SvmSolution
from .trainer import TraceEntry, TrainedModel

MAGIC = b"NBKM"
VERSION = 1
_KINDS = ("classification", "regression")
_HP = struct.Struct("<dddddddI")


class ModelFileError(ValueError):
    pass


def _str(s):
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _arr(a):
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def dumps(model):
    T, M = model.T, model.theta.M
    p = model.features[0].shape[1]
    hp = model.hp
    out = [MAGIC, struct.pack("<I", VERSION), _str(model.method),
           struct.pack("<BIII", _KINDS.index(model.kind), T, M, p),
           _HP.pack(hp.C, hp.eta, hp.beta, hp.epsilon, hp.svm_tol, hp.theta_tol,
                    hp.rel_tol, hp.max_outer),
           _arr(model.theta.vec), _pack_specs(model.specs)]
    if model.center is None:
        out.append(b"\x00")
    else:
        out += [b"\x01", _arr(model.center), _arr(model.scale)]
    for X, y, s in zip(model.features, model.targets, model.solutions):
        n = X.shape[0]
        out += [struct.pack("<I", n), _arr(X), _arr(y), struct.pack("<I", s.alpha.shape[0]),
                _arr(s.alpha), _arr(s.coef),
                struct.pack("<dddQ", s.bias, s.objective, s.violation, s.n_iter)]
    nb = model.neighborhood
    if nb is None:
        out.append(b"\x00")
    else:
        out.append(b"\x01")
        out += [_arr(K) for K in nb.matrices]
        if nb.coef is None:
            out.append(b"\x00")
        else:
            out += [b"\x01", _arr(nb.coef)]
    out.append(struct.pack("<I", len(model.trace)))
    for e in model.trace:
        out += [struct.pack("<I", e.iteration), _str(e.step), struct.pack("<d", e.objective)]
    return b"".join(out)


class _Reader:
    def __init__(self, buf):
        self.buf, self.pos = buf, 0

    def take(self, fmt):
        try:
            vals = struct.unpack_from(fmt, self.buf, self.pos)
        except struct.error as exc:
            raise ModelFileError("model file is truncated") from exc
        self.pos += struct.calcsize(fmt)
        return vals if len(vals) > 1 else vals[0]

    def array(self, count, shape=None):
        if self.pos + 8 * count > len(self.buf):
            raise ModelFileError("model file is truncated")
        a = np.frombuffer(self.buf, "<f8", count, self.pos).astype(float)
        self.pos += 8 * count
        return a.reshape(shape) if shape is not None else a

    def string(self):
        n = self.take("<H")
        raw = self.buf[self.pos:self.pos + n]
        self.pos += n
        return raw.decode("utf-8")


def loads(buf):
    if buf[:4] != MAGIC:
        raise ModelFileError("not a model file")
    r = _Reader(buf)
    r.pos = 4
    version = r.take("<I")
    if version != VERSION:
        raise ModelFileError(f"unsupported model version {version}")
    method = r.string()
    kind_i, T, M, p = r.take("<BIII")
    C, eta, beta, eps, svm_tol, theta_tol, rel_tol, max_outer = r.take(_HP.format)
    hp = HyperParams(C=C, eta=eta, beta=beta, epsilon=eps, svm_tol=svm_tol,
                     theta_tol=theta_tol, max_outer=max_outer, rel_tol=rel_tol)
    theta = ThetaParams(r.array(M + M * T), M, T)
    specs, r.pos = _unpack_specs(buf, r.pos, M)
    center = scale = None
    if r.take("<B"):
        center, scale = r.array(p), r.array(p)
    kind = _KINDS[kind_i]
    feats, targets, sols = [], [], []
    for _ in range(T):
        n = r.take("<I")
        feats.append(r.array(n * p, (n, p)))
        targets.append(r.array(n))
        k = r.take("<I")
        alpha = r.array(k)
        coef = r.array(n)
        bias, obj, viol, n_iter = r.take("<dddQ")
        sols.append(SvmSolution(kind, alpha, coef, bias, obj, viol, int(n_iter)))
    nbhd = None
    if r.take("<B"):
        mats = [r.array(X.shape[0] ** 2, (X.shape[0], X.shape[0])) for X in feats]
        coef = r.array(T * M, (T, M)) if r.take("<B") else None
        nbhd = NeighborhoodSet(mats, coef)
    trace = []
    for _ in range(r.take("<I")):
        it = r.take("<I")
        step = r.string()
        trace.append(TraceEntry(it, step, r.take("<d")))
    if r.pos != len(buf):
        raise ModelFileError(f"{len(buf) - r.pos} trailing bytes in model file")
    return TrainedModel(method, kind, theta, sols, nbhd, specs, feats, targets, hp, trace,
                        center, scale)


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(dumps(model))


def load_model(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
