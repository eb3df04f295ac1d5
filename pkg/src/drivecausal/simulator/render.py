"""Synthetic frame rendering with a fixed, documented factor-to-region layout.

The frame is tiled into 32x32 windows numbered row-major; window ``k`` is
exactly the ``k``-th spatial token of the global feature grid.  The last
window holds the ego vehicle, the windows before it hold one planted
(spurious) cue each, and the modelled factors share the remaining windows
round-robin, each in its own 12x12 block inside one quadrant of its window.

A factor with ``n`` values paints its block at intensity
``0.55 + 0.3 * k / (n - 1)`` for value index ``k`` on a background of 0.35.
A planted cue is drawn like a two-valued factor: 0.55 when off, and when on it
switches from 0.55 to 0.85 during the clip, as a brake light would.  Its
contrast is then no larger than a real factor's.  The environment
holds its start values over the first two frames, reaches its end values on
the last frame and is blended linearly in between.  The ego block (8x8,
intensity 0.7) moves right by an amount proportional to speed and sits
higher or lower in its window for left or right headings.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WINDOW = 32
BLOCK = 12
BACKGROUND = 0.35
CUE_OFF = 0.55
CUE_ON = 0.85
EGO_LEVEL = 0.7
EGO_SIZE = 8
_QUADRANTS = ((2, 2), (2, 18), (18, 2), (18, 18))
_EGO_ROW = {"straight": 12.0, "left": 4.0, "right": 20.0}
_EGO_PX_PER_FRAME = {"stopped": 0.0, "slow": 2.0, "medium": 5.0, "fast": 8.0}


class RenderError(ValueError):
    pass


def check_dims(dims) -> None:
    f, h, w = (int(d) for d in dims)
    if f < 2 or f % 2:
        raise RenderError(f"frame count must be even and >= 2, got {f}")
    if h <= 0 or w <= 0 or h % WINDOW or w % WINDOW:
        raise RenderError(f"frame height and width must be positive multiples of {WINDOW}, "
                          f"got {h}x{w}")


def factor_level(k: int, n: int) -> float:
    return 0.55 + 0.3 * k / (n - 1)


@dataclass(frozen=True)
class Region:
    window: int
    y0: int
    x0: int
    size: int

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y0 + self.size), slice(self.x0, self.x0 + self.size)


class Layout:
    """Where every factor, cue and the ego vehicle live for a given frame size."""

    def __init__(self, factors, spurious, height: int, width: int):
        check_dims((2, height, width))
        self.rows, self.cols = height // WINDOW, width // WINDOW
        self.n_windows = self.rows * self.cols
        factors, spurious = list(factors), list(spurious)
        n_factor_windows = self.n_windows - 1 - len(spurious)
        if n_factor_windows < 1 or len(factors) > 4 * n_factor_windows:
            raise RenderError(f"{height}x{width} frames cannot hold {len(factors)} factors, "
                              f"{len(spurious)} cues and the ego window")
        self.ego_window = self.n_windows - 1
        self.regions: dict[str, Region] = {}
        for i, name in enumerate(spurious):
            self.regions[name] = self._block(self.ego_window - 1 - i, 0)
        for i, name in enumerate(factors):
            self.regions[name] = self._block(i % n_factor_windows, i // n_factor_windows)

    def _block(self, window: int, quadrant: int) -> Region:
        r, c = divmod(window, self.cols)
        dy, dx = _QUADRANTS[quadrant]
        return Region(window, r * WINDOW + dy, c * WINDOW + dx, BLOCK)

    def window_of(self, name: str) -> int:
        return self.regions[name].window

    def window_origin(self, window: int) -> tuple[int, int]:
        r, c = divmod(window, self.cols)
        return r * WINDOW, c * WINDOW


def render_frames(episode, dims, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Float32 frames ``[F, H, W, 3]`` in [0, 1] for an episode."""
    from .episodes import ramp

    check_dims(dims)
    n_frames, height, width = (int(d) for d in dims)
    layout = Layout(list(episode.factor_domains), list(episode.spurious), height, width)
    w = ramp(n_frames)
    start, end = episode.start, episode.end
    gray = np.full((n_frames, height, width), BACKGROUND)

    for name, domain in episode.factor_domains.items():
        a = factor_level(domain.index(start.env.assignments[name]), len(domain))
        b = factor_level(domain.index(end.env.assignments[name]), len(domain))
        ys, xs = layout.regions[name].slices
        gray[:, ys, xs] = ((1 - w) * a + w * b)[:, None, None]
    for name, state in episode.spurious.items():
        ys, xs = layout.regions[name].slices
        top = CUE_ON if state == "on" else CUE_OFF
        gray[:, ys, xs] = ((1 - w) * CUE_OFF + w * top)[:, None, None]

    oy, ox = layout.window_origin(layout.ego_window)
    u0, u1 = start.vehicle, end.vehicle
    step = (1 - w) * _EGO_PX_PER_FRAME[u0.speed] + w * _EGO_PX_PER_FRAME[u1.speed]
    travel = np.concatenate([[0.0], np.cumsum(step[1:])])
    row = (1 - w) * _EGO_ROW[u0.heading] + w * _EGO_ROW[u1.heading]
    span = WINDOW - EGO_SIZE
    for t in range(n_frames):
        x = ox + int(round(travel[t])) % (span + 1)
        y = oy + int(round(row[t]))
        gray[t, y:y + EGO_SIZE, x:x + EGO_SIZE] = EGO_LEVEL

    frames = np.repeat(gray[..., None], 3, axis=-1)
    if sigma > 0:
        frames = frames + sigma * rng.standard_normal(frames.shape)
    return np.clip(frames, 0.0, 1.0).astype(np.float32)
