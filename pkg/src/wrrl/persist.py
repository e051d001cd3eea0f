"""Versioned binary files for policy checkpoints and Hessian caches.

Layout: 8-byte magic, little-endian uint32 header length, JSON header,
float64 payload, and a trailing SHA-256 digest of everything before it.
The digest turns any truncation or bit corruption into a hard error
instead of a silently wrong matrix.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .policy import CategoricalPolicy, Critic, GaussianPolicy
from .zo import HessianEstimate

POLICY_MAGIC = b"WRLPOL1\n"
HESSIAN_MAGIC = b"WRLHES1\n"
_DIGEST_LEN = 32


class ChecksumError(IOError):
    """Stored digest does not match the file contents."""


def _write_container(path, magic: bytes, header: dict, payload: np.ndarray) -> None:
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = magic + struct.pack("<I", len(header_bytes)) + header_bytes \
        + np.ascontiguousarray(payload, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(hashlib.sha256(body).digest())


def _read_container(path, magic: bytes) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(magic) + 4 + _DIGEST_LEN:
        raise ChecksumError(f"{path}: file truncated")
    if blob[:len(magic)] != magic:
        raise IOError(f"{path}: wrong magic {blob[:len(magic)]!r}, expected {magic!r}")
    body, digest = blob[:-_DIGEST_LEN], blob[-_DIGEST_LEN:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError(
            f"{path}: checksum mismatch; the file is corrupted, regenerate it")
    header_len = struct.unpack("<I", body[len(magic):len(magic) + 4])[0]
    header_end = len(magic) + 4 + header_len
    header = json.loads(body[len(magic) + 4:header_end].decode("utf-8"))
    payload = np.frombuffer(body[header_end:], dtype="<f8").copy()
    return header, payload


def save_policy(path, policy, metadata: dict | None = None) -> None:
    header = {
        "version": 1,
        "kind": policy.action_type,
        "state_dim": policy.state_dim,
        "action_dim": policy.action_dim,
        "hidden": list(policy.net.hidden),
        "n_params": policy.n_params,
        "meta": metadata or {},
    }
    _write_container(path, POLICY_MAGIC, header, policy.get_theta())


def load_policy(path):
    """Rebuild a policy from a checkpoint; returns (policy, metadata)."""
    header, theta = _read_container(path, POLICY_MAGIC)
    hidden = tuple(header["hidden"])
    if header["kind"] == "discrete":
        policy = CategoricalPolicy(header["state_dim"], header["action_dim"], hidden)
    elif header["kind"] == "box":
        policy = GaussianPolicy(header["state_dim"], header["action_dim"], hidden)
    else:
        raise IOError(f"{path}: unknown policy kind {header['kind']!r}")
    if theta.size != header["n_params"]:
        raise ChecksumError(f"{path}: payload has {theta.size} parameters, "
                            f"header says {header['n_params']}")
    policy.set_theta(theta)
    return policy, header.get("meta", {})


def save_critic(path, critic: Critic, metadata: dict | None = None) -> None:
    header = {
        "version": 1,
        "kind": "critic",
        "state_dim": critic.net.in_dim,
        "hidden": list(critic.net.hidden),
        "n_params": critic.n_params,
        "meta": metadata or {},
    }
    _write_container(path, POLICY_MAGIC, header, critic.get_theta())


def load_critic(path) -> tuple[Critic, dict]:
    header, theta = _read_container(path, POLICY_MAGIC)
    if header["kind"] != "critic":
        raise IOError(f"{path}: not a critic checkpoint")
    critic = Critic(header["state_dim"], tuple(header["hidden"]))
    critic.set_theta(theta)
    return critic, header.get("meta", {})


def save_hessian(path, estimate: HessianEstimate, sigma: float, seed: int,
                 metadata: dict | None = None) -> None:
    d2 = estimate.matrix.shape[0]
    header = {
        "version": 1,
        "d2": d2,
        "sigma": sigma,
        "n_samples": estimate.n_used,
        "seed": seed,
        "regularized": estimate.regularized,
        "min_eig_floor": estimate.min_eig_floor,
        "meta": metadata or {},
    }
    _write_container(path, HESSIAN_MAGIC, header, estimate.matrix.ravel())


def load_hessian(path) -> tuple[HessianEstimate, dict]:
    header, payload = _read_container(path, HESSIAN_MAGIC)
    d2 = int(header["d2"])
    if payload.size != d2 * d2:
        raise ChecksumError(f"{path}: payload is not a {d2}x{d2} matrix")
    est = HessianEstimate(matrix=payload.reshape(d2, d2),
                          n_used=int(header["n_samples"]),
                          regularized=bool(header["regularized"]),
                          min_eig_floor=float(header["min_eig_floor"]))
    return est, header
