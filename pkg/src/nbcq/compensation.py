"""Blockwise compensation of quantization error.

For a block with dequantized input x_q, full-precision output y and
quantized-path output y_q, the linear module corrects

    y_lin = y_q + W x_q + b

and the transformed module corrects

    y_nbc = y_q + f_inv(W f(x_q) + b)

with (W, b) fitted in closed form by least squares, on (x_q, y - y_q)
directly for the linear case and on (f(x_q), f(y - y_q)) for the
transformed case. x_q here is the dequantized real-valued block input, not
the integer codes, so the residual and the design live on the same scale.

Fitted parameters can be narrowed for storage: f16 rounds W and b to
binary16; i8_per_channel stores W as symmetric int8 codes with one scale
per output row (zero point 0, range +-max|row|) while the bias stays in
f16, since a d_out-sized vector is negligible storage. Narrowed modules
dequantize lazily on apply.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import FitError
from .numerics import as_tensor, encode_f16_roundtrip, solve_least_squares
from .quantizer import round_half_away
from .transform import IDENTITY, TransformKind, apply_kind_forward, apply_kind_inverse

__all__ = [
    "STORAGE_F32",
    "STORAGE_F16",
    "STORAGE_I8",
    "STORAGE_NAMES",
    "I8_SCALE_FLOOR",
    "CalibrationRecord",
    "CompensationModule",
    "fit_linear",
    "fit_nbc",
    "apply",
    "store_params",
]

STORAGE_F32 = "f32"
STORAGE_F16 = "f16"
STORAGE_I8 = "i8_per_channel"
STORAGE_NAMES = (STORAGE_F32, STORAGE_F16, STORAGE_I8)

# Keeps all-zero weight rows encodable under symmetric int8 storage. Pinned
# to an f32-exact value so stored scales survive serialization unchanged.
I8_SCALE_FLOOR = float(np.float32(1e-12))


@dataclass(frozen=True)
class CalibrationRecord:
    """Per-block calibration data: rows are samples, aligned across fields.

    ``x_q`` holds the dequantized block inputs seen by the quantized
    forward, ``y`` the full-precision block outputs and ``y_q`` the
    quantized-path block outputs, all on identical input samples.
    """

    x_q: np.ndarray  # (T, d_in)
    y: np.ndarray  # (T, d_out)
    y_q: np.ndarray  # (T, d_out)

    def __post_init__(self):
        object.__setattr__(self, "x_q", as_tensor(self.x_q, "x_q", ndim=2))
        object.__setattr__(self, "y", as_tensor(self.y, "y", ndim=2))
        object.__setattr__(self, "y_q", as_tensor(self.y_q, "y_q", ndim=2))
        if not (self.x_q.shape[0] == self.y.shape[0] == self.y_q.shape[0]):
            raise ValueError("x_q, y and y_q must have equal row counts")
        if self.y.shape != self.y_q.shape:
            raise ValueError("y and y_q must have equal shapes")

    @property
    def n_rows(self) -> int:
        return self.x_q.shape[0]

    @property
    def d_in(self) -> int:
        return self.x_q.shape[1]

    @property
    def d_out(self) -> int:
        return self.y.shape[1]

    def rows(self, indices) -> "CalibrationRecord":
        idx = np.asarray(indices, dtype=np.intp)
        return CalibrationRecord(self.x_q[idx], self.y[idx], self.y_q[idx])

    @property
    def residual(self) -> np.ndarray:
        return self.y - self.y_q


@dataclass(frozen=True)
class CompensationModule:
    """One block's fitted compensation. Immutable; apply never mutates it.

    Working-precision modules hold ``weight`` directly. Under int8 storage
    ``weight`` is None and the codes/scales pair reconstructs it on demand.
    ``ridge_used`` and ``residual_rms`` carry the fit metadata forward.
    """

    kind: TransformKind
    bias: np.ndarray
    storage: str = STORAGE_F32
    weight: np.ndarray | None = None
    weight_codes: np.ndarray | None = None
    weight_scales: np.ndarray | None = None
    ridge_used: float = 0.0
    residual_rms: float = 0.0

    def __post_init__(self):
        if self.storage not in STORAGE_NAMES:
            raise ValueError(f"unknown storage {self.storage!r}")
        object.__setattr__(self, "bias", as_tensor(self.bias, "bias", ndim=1))
        if self.storage == STORAGE_I8:
            if self.weight_codes is None or self.weight_scales is None:
                raise ValueError("i8 storage requires weight codes and scales")
            codes = np.asarray(self.weight_codes, dtype=np.int8)
            scales = as_tensor(self.weight_scales, "weight_scales", ndim=1)
            if codes.ndim != 2 or scales.shape[0] != codes.shape[0]:
                raise ValueError("per-row scales must match the weight row count")
            if codes.shape[0] != self.bias.shape[0]:
                raise ValueError("weight rows must match bias length")
            object.__setattr__(self, "weight_codes", codes)
            object.__setattr__(self, "weight_scales", scales)
        else:
            if self.weight is None:
                raise ValueError(f"{self.storage} storage requires a weight matrix")
            w = as_tensor(self.weight, "weight", ndim=2)
            if w.shape[0] != self.bias.shape[0]:
                raise ValueError("weight rows must match bias length")
            object.__setattr__(self, "weight", w)

    @property
    def d_out(self) -> int:
        return self.bias.shape[0]

    @property
    def d_in(self) -> int:
        if self.storage == STORAGE_I8:
            return self.weight_codes.shape[1]
        return self.weight.shape[1]

    def effective_weight(self) -> np.ndarray:
        """Weight matrix in working precision, dequantized if stored as i8."""
        if self.storage == STORAGE_I8:
            return self.weight_codes.astype(np.float64) * self.weight_scales[:, None]
        return self.weight


def _fit(rec: CalibrationRecord, kind: TransformKind, ridge: float) -> CompensationModule:
    if rec.n_rows < rec.d_in + 1:
        raise FitError(
            f"calibration record has {rec.n_rows} rows; need at least {rec.d_in + 1}"
        )
    design = apply_kind_forward(rec.x_q, kind)
    targets = apply_kind_forward(rec.residual, kind)
    sol = solve_least_squares(design, targets, ridge)
    return CompensationModule(
        kind=kind,
        weight=sol.weight,
        bias=sol.bias,
        storage=STORAGE_F32,
        ridge_used=sol.ridge_used,
        residual_rms=sol.residual_rms,
    )


def fit_linear(rec: CalibrationRecord, ridge: float = 0.0) -> CompensationModule:
    """Fit plain linear compensation on (x_q, y - y_q)."""
    return _fit(rec, IDENTITY, ridge)


def fit_nbc(rec: CalibrationRecord, kind: TransformKind, ridge: float = 0.0) -> CompensationModule:
    """Fit compensation in the transformed space of ``kind``."""
    return _fit(rec, kind, ridge)


def apply(mod: CompensationModule, x_q, y_q) -> np.ndarray:
    """Return ``y_q + f_inv(W f(x_q) + b)`` for the module's transform."""
    x = as_tensor(x_q, "x_q", ndim=2)
    yq = as_tensor(y_q, "y_q", ndim=2)
    if x.shape[1] != mod.d_in:
        raise ValueError(f"x_q has {x.shape[1]} columns, module expects {mod.d_in}")
    if yq.shape[1] != mod.d_out:
        raise ValueError(f"y_q has {yq.shape[1]} columns, module expects {mod.d_out}")
    if x.shape[0] != yq.shape[0]:
        raise ValueError("x_q and y_q must have equal row counts")
    w = mod.effective_weight()
    pred = apply_kind_forward(x, mod.kind) @ w.T + mod.bias
    return yq + apply_kind_inverse(pred, mod.kind)


def store_params(mod: CompensationModule, precision: str) -> CompensationModule:
    """Narrow a working-precision module's parameters for storage."""
    if mod.storage != STORAGE_F32:
        raise ValueError(f"module is already stored as {mod.storage}")
    if precision == STORAGE_F16:
        return replace(
            mod,
            weight=encode_f16_roundtrip(mod.weight),
            bias=encode_f16_roundtrip(mod.bias),
            storage=STORAGE_F16,
        )
    if precision == STORAGE_I8:
        w = mod.weight
        # Scales are narrowed to f32 first so codes quantize against the
        # exact value that storage will reproduce.
        scales = np.abs(w).max(axis=1) / 127.0
        scales = np.maximum(scales.astype(np.float32).astype(np.float64), I8_SCALE_FLOOR)
        codes = np.clip(round_half_away(w / scales[:, None]), -127, 127).astype(np.int8)
        return CompensationModule(
            kind=mod.kind,
            bias=encode_f16_roundtrip(mod.bias),
            storage=STORAGE_I8,
            weight_codes=codes,
            weight_scales=scales,
            ridge_used=mod.ridge_used,
            residual_rms=mod.residual_rms,
        )
    raise ValueError(f"unknown storage precision {precision!r}")
