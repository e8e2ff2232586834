"""On-disk cache of orbit codes and pairwise mismatch matrices."""

from __future__ import annotations

import hashlib
import io
import logging
import os
import struct
import threading

import numpy as np

from .errors import CodeMismatch
from .flow import OrbitCode, decode_record, encode_record

log = logging.getLogger(__name__)


class CodeCache:
    """Content-addressed files under ``root``; a disabled cache (``root=None``) never hits."""

    def __init__(self, root: str | None):
        self.root = root
        self.hits = 0
        self.misses = 0
        self.corrupt = 0
        self._lock = threading.Lock()
        if root:
            os.makedirs(root, exist_ok=True)

    def _count(self, hit: bool):
        with self._lock:
            if hit:
                self.hits += 1
            else:
                self.misses += 1

    @staticmethod
    def code_key(alpha_digest: str, roof_digest: str, m: int, delta: float, r: float, origin) -> str:
        h = hashlib.sha256()
        h.update(alpha_digest.encode())
        h.update(roof_digest.encode())
        h.update(struct.pack("<Idd", m, delta, r))
        h.update(origin.x.to_bytes())
        h.update(struct.pack("<d", origin.s))
        return h.hexdigest()

    def _path(self, key: str, ext: str) -> str:
        return os.path.join(self.root, key[:2], key + ext)

    def _write(self, path: str, data: bytes):
        os.makedirs(os.path.dirname(path), exist_ok=True)
        tmp = f"{path}.{os.getpid()}.{threading.get_ident()}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)

    def get_code(self, alpha_digest, roof_digest, m, delta, r, origin, compute) -> OrbitCode:
        if not self.root:
            self._count(False)
            return compute()
        key = self.code_key(alpha_digest, roof_digest, m, delta, r, origin)
        path = self._path(key, ".sfc")
        if os.path.exists(path):
            try:
                with open(path, "rb") as fh:
                    code = decode_record(fh.read(), alpha_digest, roof_digest)
                if code.origin == origin and code.m == m and code.r == r and code.delta == delta:
                    self._count(True)
                    return code
                raise CodeMismatch("record header does not match its key")
            except CodeMismatch as exc:
                with self._lock:
                    self.corrupt += 1
                log.warning("cache record %s is corrupt (%s); recomputing", path, exc)
        self._count(False)
        code = compute()
        self._write(path, encode_record(code, alpha_digest, roof_digest))
        return code

    def get_matrix(self, key: str, compute) -> np.ndarray:
        if not self.root:
            self._count(False)
            return compute()
        path = self._path(key, ".npy")
        if os.path.exists(path):
            try:
                with open(path, "rb") as fh:
                    raw = fh.read()
                digest, body = raw[:32], raw[32:]
                if hashlib.sha256(body).digest() != digest:
                    raise ValueError("digest mismatch")
                arr = np.load(io.BytesIO(body), allow_pickle=False)
                self._count(True)
                return arr
            except (ValueError, OSError) as exc:
                with self._lock:
                    self.corrupt += 1
                log.warning("cache matrix %s is corrupt (%s); recomputing", path, exc)
        self._count(False)
        arr = compute()
        buf = io.BytesIO()
        np.save(buf, arr, allow_pickle=False)
        body = buf.getvalue()
        self._write(path, hashlib.sha256(body).digest() + body)
        return arr
