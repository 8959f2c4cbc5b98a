"""Detection-event containers and their line-delimited text serialization.

File layout (UTF-8, ``\\n`` line endings)::

    # wgqed-events v1
    # dt=<repr of float>
    # n_steps=<int>
    # trajectories=<int>
    # columns=trajectory_id,time,channel
    <trajectory_id>,<time>,<R|L>
    ...

Records are sorted by ``(trajectory_id, time)``.  ``time`` is the end of the
step in which the jump fired, ``step * dt``, printed with ``%.10f``; readers
recover the integer step as ``round(time / dt)``.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from .errors import ConfigurationError

CHANNEL_CODES = {"R": 0, "L": 1}
CHANNEL_NAMES = ("R", "L")
HEADER = "# wgqed-events v1"
TIME_FORMAT = "%.10f"


@dataclass(frozen=True)
class DetectionEvent:
    trajectory_id: int
    time: float
    channel: str


def channel_code(channel: str) -> int:
    try:
        return CHANNEL_CODES[channel]
    except KeyError:
        raise ConfigurationError(f"unknown channel {channel!r}") from None


@dataclass(frozen=True)
class EventTable:
    """Columnar detection events of a whole ensemble.

    ``steps`` are integer step indices (event time = ``steps * dt``);
    trajectories ``0 .. n_traj-1`` each cover ``n_steps`` steps, including
    those without any event.
    """

    trajectory: np.ndarray
    steps: np.ndarray
    channel: np.ndarray
    dt: float
    n_steps: int
    n_traj: int

    def __post_init__(self):
        for name, dtype in (("trajectory", np.int64), ("steps", np.int64), ("channel", np.uint8)):
            a = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if not (self.trajectory.shape == self.steps.shape == self.channel.shape):
            raise ConfigurationError("event columns differ in length")

    def __len__(self) -> int:
        return self.steps.size

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.dt

    @property
    def t_end(self) -> float:
        return self.n_steps * self.dt

    def select(self, channel: str | None) -> EventTable:
        if channel is None or channel == "both":
            return self
        mask = self.channel == channel_code(channel)
        return EventTable(self.trajectory[mask], self.steps[mask], self.channel[mask],
                          self.dt, self.n_steps, self.n_traj)

    def count(self, channel: str, burn_in: float = 0.0) -> int:
        sel = self.select(channel)
        return int(np.sum(sel.steps * self.dt >= burn_in - 1e-12))

    def events(self) -> Iterator[DetectionEvent]:
        for tid, s, c in zip(self.trajectory, self.steps, self.channel):
            yield DetectionEvent(int(tid), float(s * self.dt), CHANNEL_NAMES[c])

    @classmethod
    def concatenate(cls, parts: Iterable[EventTable]) -> EventTable:
        parts = list(parts)
        if not parts:
            raise ConfigurationError("nothing to concatenate")
        dt, n_steps = parts[0].dt, parts[0].n_steps
        if any(p.dt != dt or p.n_steps != n_steps for p in parts):
            raise ConfigurationError("event tables differ in dt or length")
        return cls(
            np.concatenate([p.trajectory for p in parts]),
            np.concatenate([p.steps for p in parts]),
            np.concatenate([p.channel for p in parts]),
            dt, n_steps, sum(p.n_traj for p in parts),
        )


def format_header(dt: float, n_steps: int, n_traj: int) -> str:
    return (f"{HEADER}\n# dt={dt!r}\n# n_steps={n_steps}\n# trajectories={n_traj}\n"
            "# columns=trajectory_id,time,channel\n")


def format_lines(trajectory: np.ndarray, steps: np.ndarray, channel: np.ndarray, dt: float) -> str:
    buf = io.StringIO()
    for tid, s, c in zip(trajectory.tolist(), steps.tolist(), channel.tolist()):
        buf.write(f"{tid},{TIME_FORMAT % (s * dt)},{CHANNEL_NAMES[c]}\n")
    return buf.getvalue()


def write_events(table: EventTable, fh: IO[str] | str | Path) -> None:
    if isinstance(fh, (str, Path)):
        with open(fh, "w", encoding="utf-8", newline="\n") as f:
            write_events(table, f)
        return
    fh.write(format_header(table.dt, table.n_steps, table.n_traj))
    fh.write(format_lines(table.trajectory, table.steps, table.channel, table.dt))


def read_events(path: str | Path) -> EventTable:
    meta: dict[str, str] = {}
    rows: list[tuple[int, float, str]] = []
    with open(path, encoding="utf-8") as f:
        first = f.readline().rstrip("\n")
        if first != HEADER:
            raise ConfigurationError(f"{path}: not a wgqed event file")
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
                continue
            tid, t, ch = line.split(",")
            rows.append((int(tid), float(t), ch))
    try:
        dt = float(meta["dt"])
        n_steps = int(meta["n_steps"])
        n_traj = int(meta["trajectories"])
    except KeyError as exc:
        raise ConfigurationError(f"{path}: missing header field {exc}") from None
    if rows:
        tids, times, chans = zip(*rows)
    else:
        tids, times, chans = (), (), ()
    steps = np.rint(np.asarray(times, dtype=float) / dt).astype(np.int64)
    codes = np.array([channel_code(c) for c in chans], dtype=np.uint8)
    return EventTable(np.asarray(tids, dtype=np.int64), steps, codes, dt, n_steps, n_traj)


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
