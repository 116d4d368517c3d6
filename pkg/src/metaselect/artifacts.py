"""File formats and integrity machinery shared by the pipeline stages.

Sparse matrices travel as `user_idx item_idx` coordinate text, models in a
little-endian binary container (magic MCF2), tables as CSV. All writes are
atomic (write-temp-then-rename) and hashed into the run manifest.
"""

import hashlib
import json
import os
import struct
import tempfile

import numpy as np
import scipy.sparse as sp

from .cf import MFModel, PopularityModel
from .embeddings import EmbeddingMatrix
from .errors import ArtifactIntegrityError

MAGIC = b"MCF2"
VERSION = 1
TYPE_MF = 1
TYPE_POPULARITY = 2
TYPE_EMBEDDING = 3


def atomic_write_bytes(path, payload):
    path = str(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode())


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --- sparse matrix snapshots -------------------------------------------------

def save_matrix(path, mat, shape_note=True):
    mat = mat.tocoo()
    lines = [f"# shape {mat.shape[0]} {mat.shape[1]}"] if shape_note else []
    order = np.lexsort((mat.col, mat.row))
    lines.extend(f"{mat.row[i]} {mat.col[i]}" for i in order)
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_matrix(path):
    rows, cols = [], []
    shape = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                _, _, r, c = line.split()
                shape = (int(r), int(c))
                continue
            r, c = line.split()
            rows.append(int(r))
            cols.append(int(c))
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=shape)


def save_id_map(path, ids):
    atomic_write_text(path, "\n".join(str(i) for i in ids) + "\n")


def load_id_map(path):
    with open(path) as fh:
        return [line.rstrip("\n") for line in fh if line.rstrip("\n")]


# --- MCF2 binary container ---------------------------------------------------

def _pack_array(a):
    a = np.ascontiguousarray(a, dtype="<f8")
    return struct.pack("<II", *a.shape) + a.tobytes()


def _unpack_array(buf, offset):
    r, c = struct.unpack_from("<II", buf, offset)
    offset += 8
    n = r * c * 8
    a = np.frombuffer(buf[offset:offset + n], dtype="<f8").reshape(r, c).copy()
    return a, offset + n


def save_model(path, model, seed=0):
    if isinstance(model, MFModel):
        name = model.learner.encode()
        head = MAGIC + bytes([VERSION, TYPE_MF]) + struct.pack("<B", len(name)) + name
        head += struct.pack("<IIIq", model.user_factors.shape[0],
                            model.item_factors.shape[0], model.f, seed)
        payload = head + _pack_array(model.user_factors) + _pack_array(model.item_factors)
    elif isinstance(model, PopularityModel):
        head = MAGIC + bytes([VERSION, TYPE_POPULARITY])
        order = np.ascontiguousarray(model.item_order, dtype="<i8")
        payload = head + struct.pack("<I", len(order)) + order.tobytes()
    else:
        raise TypeError(f"cannot persist {type(model).__name__}")
    atomic_write_bytes(path, payload)


def load_model(path):
    buf = open(path, "rb").read()
    if buf[:4] != MAGIC or buf[4] != VERSION:
        raise ArtifactIntegrityError(f"{path}: bad magic/version")
    kind = buf[5]
    if kind == TYPE_MF:
        nlen = buf[6]
        learner = buf[7:7 + nlen].decode()
        off = 7 + nlen
        _, _, _, _ = struct.unpack_from("<IIIq", buf, off)
        off += 20
        uf, off = _unpack_array(buf, off)
        itf, _ = _unpack_array(buf, off)
        return MFModel(learner=learner, user_factors=uf, item_factors=itf)
    if kind == TYPE_POPULARITY:
        (n,) = struct.unpack_from("<I", buf, 6)
        order = np.frombuffer(buf[10:10 + 8 * n], dtype="<i8").copy()
        return PopularityModel(item_order=order)
    raise ArtifactIntegrityError(f"{path}: unknown record type {kind}")


# --- CSV tables --------------------------------------------------------------

def save_ndcg_table(path, table, labels, user_ids):
    lines = ["user_id,als,bpr,lmf,most_popular,label"]
    for u, uid in enumerate(user_ids):
        row = ",".join(repr(float(v)) for v in table.scores[u])
        lines.append(f"{uid},{row},{labels[u]}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_ndcg_table(path):
    from .evaluation import NdcgTable

    user_ids, labels, scores = [], [], []
    with open(path) as fh:
        next(fh)
        for line in fh:
            parts = line.rstrip("\n").split(",")
            user_ids.append(parts[0])
            scores.append([float(v) for v in parts[1:5]])
            labels.append(parts[5])
    return NdcgTable(scores=np.asarray(scores), k=0), labels, user_ids


def save_embeddings(path, emb, user_ids):
    k = emb.k
    lines = ["user_id," + ",".join(f"f{j}" for j in range(k))]
    for uid, row in zip(user_ids, emb.values):
        lines.append(uid + "," + ",".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_embeddings(path, source):
    user_ids, rows = [], []
    with open(path) as fh:
        next(fh)
        for line in fh:
            parts = line.rstrip("\n").split(",")
            user_ids.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    return EmbeddingMatrix(values=np.asarray(rows), source=source), user_ids


# --- run manifest ------------------------------------------------------------

class Manifest:
    """Stage-completion flags plus artifact hashes for staleness detection."""

    def __init__(self, path):
        self.path = str(path)
        if os.path.exists(self.path):
            self.data = json.load(open(self.path))
        else:
            self.data = {"stages": {}, "config_hash": None}

    def save(self):
        atomic_write_text(self.path, json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def record_stage(self, stage, artifact_paths, work_dir, seeds=None):
        self.data["stages"][stage] = {
            "done": True,
            "artifacts": {
                os.path.relpath(str(p), str(work_dir)): sha256_file(p) for p in artifact_paths
            },
            "seeds": seeds or {},
        }
        self.save()

    def stage_done(self, stage):
        return self.data["stages"].get(stage, {}).get("done", False)

    def verify_stage(self, stage, work_dir):
        """Hash-check every recorded artifact of a completed stage."""
        info = self.data["stages"].get(stage)
        if not info or not info.get("done"):
            return False
        for name, digest in info["artifacts"].items():
            path = os.path.join(work_dir, name)
            if not os.path.exists(path):
                raise ArtifactIntegrityError(f"{stage}: missing artifact {name}")
            if sha256_file(path) != digest:
                raise ArtifactIntegrityError(f"{stage}: artifact {name} hash mismatch")
        return True
