"""Checkpoint management for resumable renewal scans."""

import hashlib
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"RLCK"
VERSION = 1

# magic, version, next n, window lo, window hi, grid size, delta count,
# flagged steps, first flagged step, clamp count, job digest
_HEADER = struct.Struct("<4sIqqqIIqqq32s")
# power error, U error, clamp total, clamp large count
_SCALARS = struct.Struct("<dddq")
_F64 = np.dtype("<f8")


@dataclass
class CheckpointData:
    """Running state of a renewal scan after step n - 1."""

    job_digest: bytes
    n: int
    w_lo: int
    w_hi: int
    power: np.ndarray  # F^{*n} on the window
    power_error: float
    u: np.ndarray  # U accumulated over the grid cells
    u_error: float
    g: np.ndarray  # (delta count, grid size) small-n sums
    flagged_steps: int
    first_flagged: int
    clamp_total: float
    clamp_count: int
    clamp_large: int


def job_digest(identity: str) -> bytes:
    """sha256 of a canonical job description."""
    return hashlib.sha256(identity.encode("utf-8")).digest()


class CheckpointManager:
    """Manages the binary checkpoint stored alongside an output file."""

    def __init__(self, output_path: Path):
        """
        Initialize checkpoint manager.

        Args:
            output_path: Path to the output file (checkpoint stored alongside).
        """
        self.output_path = output_path
        self.checkpoint_path = output_path.parent / f"{output_path.stem}.checkpoint.bin"

    def save(self, data: CheckpointData) -> None:
        """
        Save checkpoint data atomically.

        Uses write-to-temp-then-rename pattern to prevent corruption.
        """
        grid = data.u.size
        deltas = data.g.shape[0] if data.g.ndim == 2 else 0
        header = _HEADER.pack(
            MAGIC,
            VERSION,
            data.n,
            data.w_lo,
            data.w_hi,
            grid,
            deltas,
            data.flagged_steps,
            data.first_flagged,
            data.clamp_count,
            data.job_digest,
        )
        scalars = _SCALARS.pack(data.power_error, data.u_error, data.clamp_total, data.clamp_large)

        fd, temp_path = tempfile.mkstemp(
            suffix=".bin",
            prefix=".checkpoint_",
            dir=self.checkpoint_path.parent,
        )
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(header)
                f.write(scalars)
                for array in (data.power, data.u, data.g):
                    f.write(np.ascontiguousarray(array, dtype=_F64).tobytes())

            # Atomic rename
            os.replace(temp_path, self.checkpoint_path)
        except Exception:
            if os.path.exists(temp_path):
                os.unlink(temp_path)
            raise

    def load(self, digest: bytes | None = None) -> CheckpointData | None:
        """
        Load checkpoint if it exists.

        Returns:
            CheckpointData if the file exists, is intact and (when digest is
            given) belongs to the same job; None otherwise.
        """
        if not self.exists():
            return None

        try:
            raw = self.checkpoint_path.read_bytes()
            fields = _HEADER.unpack_from(raw, 0)
            magic, version, n, w_lo, w_hi, grid, deltas, flagged, first, clamp_count, stored = fields
            if magic != MAGIC or version != VERSION:
                return None
            if digest is not None and stored != digest:
                return None
            offset = _HEADER.size
            power_error, u_error, clamp_total, clamp_large = _SCALARS.unpack_from(raw, offset)
            offset += _SCALARS.size
            size = w_hi - w_lo + 1
            expected = offset + 8 * (size + grid + deltas * grid)
            if len(raw) != expected:
                return None
            body = np.frombuffer(raw, dtype=_F64, offset=offset).astype(float)
            power = body[:size].copy()
            u = body[size : size + grid].copy()
            g = body[size + grid :].reshape(deltas, grid).copy()
        except (OSError, struct.error, ValueError):
            # Invalid checkpoint file
            return None

        return CheckpointData(
            job_digest=stored,
            n=n,
            w_lo=w_lo,
            w_hi=w_hi,
            power=power,
            power_error=power_error,
            u=u,
            u_error=u_error,
            g=g,
            flagged_steps=flagged,
            first_flagged=first,
            clamp_total=clamp_total,
            clamp_count=clamp_count,
            clamp_large=clamp_large,
        )

    def exists(self) -> bool:
        """Check if a checkpoint file exists."""
        return self.checkpoint_path.exists()

    def clean(self) -> None:
        """Remove checkpoint file after successful completion."""
        if self.checkpoint_path.exists():
            self.checkpoint_path.unlink()
