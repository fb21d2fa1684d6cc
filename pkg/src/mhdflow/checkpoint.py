"""Binary flow-map checkpoints.

Layout (little-endian throughout):

    bytes 0..3    magic b"MHD2"
    u32           format version (currently 1)
    u32           grid points per axis n
    f64 x 5       box length L, time t, nu, kappa, m
    payload       4 * n * (n//2 + 1) complex128, C order,
                  in the order eta1, eta2, u1, u2

On load the conjugate-symmetry columns are re-projected so that a file
written on another platform still produces an exactly real field.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import CheckpointFormatError
from .spectral import Grid, SpectralField, _enforce_real_symmetry
from .state import FlowMapState

MAGIC = b"MHD2"
VERSION = 1
_HEADER = struct.Struct("<4sII5d")


def save_checkpoint(path: str, state: FlowMapState) -> None:
    """Write a flow-map state; overwrites an existing file.

    Coefficients go out in canonical conjugate-symmetric form (the same
    projection the loader applies), so save -> load -> save reproduces the
    file byte for byte even when the in-memory spectrum carries rounding
    asymmetry from transform round trips.
    """
    g = state.grid
    header = _HEADER.pack(MAGIC, VERSION, g.n, g.length, state.t,
                          state.nu, state.kappa, state.m)
    payload = np.concatenate([_enforce_real_symmetry(g, state.eta.coeffs),
                              _enforce_real_symmetry(g, state.u.coeffs)
                              ]).astype("<c16")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def load_checkpoint(path: str) -> FlowMapState:
    """Read a flow-map state written by save_checkpoint.

    Raises:
        CheckpointFormatError: truncated file, wrong magic or version, or a
            payload that does not match the header's grid size.
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointFormatError(f"cannot read {path}: {exc}") from None
    if len(data) < _HEADER.size:
        raise CheckpointFormatError(
            f"{path}: {len(data)} bytes is too short for the header")
    magic, version, n, length, t, nu, kappa, m = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointFormatError(
            f"{path}: version {version} not supported (expected {VERSION})")
    if n < 8 or n % 2:
        raise CheckpointFormatError(f"{path}: invalid grid size n = {n}")
    half = n // 2 + 1
    expected = _HEADER.size + 4 * n * half * 16
    if len(data) != expected:
        raise CheckpointFormatError(
            f"{path}: {len(data)} bytes, expected {expected} for n = {n}")
    arr = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
    arr = arr.reshape(4, n, half).astype(np.complex128)
    grid = Grid(n, length)
    eta = SpectralField(grid, _enforce_real_symmetry(grid, arr[:2]))
    u = SpectralField(grid, _enforce_real_symmetry(grid, arr[2:]))
    return FlowMapState(eta=eta, u=u, t=t, nu=nu, kappa=kappa, m=m)
