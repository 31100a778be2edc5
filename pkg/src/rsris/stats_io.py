"""Plain-text container for channel statistics.

The file is JSON. Every matrix is stored as
``{"rows": r, "cols": c, "data": [re00, im00, re01, im01, ...]}`` in row-major
order with real and imaginary parts interleaved::

    {
      "format": "rsris-channel-statistics",
      "schema_version": 1,
      "M": 4, "K": 3, "N": 40, "delta": 0.2,
      "C_d": [<matrix>, ...],   # K matrices, M x M
      "C_r": [<matrix>, ...],   # K matrices, N x N
      "T_bar": <matrix>,        # N x M
      "R_RIS": <matrix>,        # N x N
      "R_Tx": <matrix>          # M x M
    }

Loading checks dimensions only; call ``ChannelStatistics.validate`` for the
Hermitian/PSD checks.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .channel import ChannelStatistics

FORMAT_NAME = "rsris-channel-statistics"
FORMAT_VERSION = 1


class StatsFormatError(ValueError):
    pass


def encode_matrix(A: np.ndarray) -> dict:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2:
        raise ValueError("expected a 2-D array")
    data = np.empty(2 * A.size)
    flat = A.ravel(order="C")
    data[0::2] = flat.real
    data[1::2] = flat.imag
    return {"rows": A.shape[0], "cols": A.shape[1], "data": data.tolist()}


def decode_matrix(obj: dict, name: str = "matrix") -> np.ndarray:
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    except (KeyError, TypeError, ValueError) as exc:
        raise StatsFormatError(f"{name}: expected rows/cols/data fields") from exc
    data = np.asarray(data, dtype=float)
    if rows < 0 or cols < 0 or data.shape != (2 * rows * cols,):
        raise StatsFormatError(f"{name}: {rows}x{cols} needs {2 * rows * cols} numbers, got {data.size}")
    return (data[0::2] + 1j * data[1::2]).reshape(rows, cols)


def _expect_shape(A: np.ndarray, shape, name: str) -> np.ndarray:
    if A.shape != tuple(shape):
        raise StatsFormatError(f"{name}: expected shape {tuple(shape)}, got {A.shape}")
    return A


def stats_to_dict(stats: ChannelStatistics) -> dict:
    return {
        "format": FORMAT_NAME,
        "schema_version": FORMAT_VERSION,
        "M": stats.M,
        "K": stats.K,
        "N": stats.N,
        "delta": float(stats.delta),
        "C_d": [encode_matrix(C) for C in stats.C_d],
        "C_r": [encode_matrix(C) for C in stats.C_r],
        "T_bar": encode_matrix(stats.T_bar),
        "R_RIS": encode_matrix(stats.R_RIS),
        "R_Tx": encode_matrix(stats.R_Tx),
    }


def stats_from_dict(d: dict) -> ChannelStatistics:
    if d.get("format") != FORMAT_NAME:
        raise StatsFormatError(f"not a {FORMAT_NAME} file")
    if d.get("schema_version") != FORMAT_VERSION:
        raise StatsFormatError(f"unsupported schema_version {d.get('schema_version')}")
    try:
        M, K, N = int(d["M"]), int(d["K"]), int(d["N"])
        delta = float(d["delta"])
        if len(d["C_d"]) != K or len(d["C_r"]) != K:
            raise StatsFormatError(f"C_d and C_r must hold K={K} matrices each")
        C_d = np.stack([_expect_shape(decode_matrix(m, f"C_d[{k}]"), (M, M), f"C_d[{k}]") for k, m in enumerate(d["C_d"])])
        C_r = np.stack([_expect_shape(decode_matrix(m, f"C_r[{k}]"), (N, N), f"C_r[{k}]") for k, m in enumerate(d["C_r"])])
        T_bar = _expect_shape(decode_matrix(d["T_bar"], "T_bar"), (N, M), "T_bar")
        R_RIS = _expect_shape(decode_matrix(d["R_RIS"], "R_RIS"), (N, N), "R_RIS")
        R_Tx = _expect_shape(decode_matrix(d["R_Tx"], "R_Tx"), (M, M), "R_Tx")
    except KeyError as exc:
        raise StatsFormatError(f"missing field {exc.args[0]!r}") from exc
    return ChannelStatistics(C_d=C_d, C_r=C_r, T_bar=T_bar, R_RIS=R_RIS, R_Tx=R_Tx, delta=delta)


def save_stats(stats: ChannelStatistics, path) -> None:
    with open(Path(path), "w") as fh:
        json.dump(stats_to_dict(stats), fh)


def load_stats(path) -> ChannelStatistics:
    with open(Path(path)) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise StatsFormatError(f"invalid JSON: {exc}") from exc
    return stats_from_dict(d)
