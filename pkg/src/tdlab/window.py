"""Sliding memory of per-step features, ratios and rewards keyed by absolute time."""

from __future__ import annotations

import numpy as np

from tdlab.errors import WindowError


class TransitionWindow:
    """Ring buffer of (x_t, rho_t, R_{t+1}) entries for a contiguous time range.

    Entries may carry leading batch axes (one row per independent stream);
    ``x`` then has shape ``batch + (K,)``. Capacity doubles on demand, so the
    memory footprint tracks the longest span the caller keeps alive.
    """

    def __init__(self, n_features: int, batch: tuple[int, ...] = (), capacity: int = 16) -> None:
        self.n_features = n_features
        self.batch = tuple(batch)
        self._x = np.zeros((capacity,) + self.batch + (n_features,))
        self._rho = np.zeros((capacity,) + self.batch)
        self._r = np.zeros((capacity,) + self.batch)
        self.head = 0  # oldest retained time
        self.next_time = 0  # time the next push will be stored under

    def __len__(self) -> int:
        return self.next_time - self.head

    @property
    def capacity(self) -> int:
        return self._x.shape[0]

    def _grow(self) -> None:
        cap = self.capacity
        idx = (np.arange(self.head, self.next_time)) % cap
        new_cap = 2 * cap
        for name in ("_x", "_rho", "_r"):
            old = getattr(self, name)
            new = np.zeros((new_cap,) + old.shape[1:])
            new[np.arange(self.head, self.next_time) % new_cap] = old[idx]
            setattr(self, name, new)

    def push(self, x, rho, r=0.0) -> int:
        """Append the entry for time ``next_time`` and return that time."""
        if len(self) == self.capacity:
            self._grow()
        slot = self.next_time % self.capacity
        self._x[slot] = x
        self._rho[slot] = rho
        self._r[slot] = r
        self.next_time += 1
        return self.next_time - 1

    def _slot(self, time: int) -> int:
        if time < self.head:
            raise WindowError(f"time {time} already evicted (head={self.head})")
        if time >= self.next_time:
            raise WindowError(f"time {time} not pushed yet (next={self.next_time})")
        return time % self.capacity

    def at(self, time: int) -> tuple[np.ndarray, np.ndarray]:
        """(x_time, rho_time). Returned arrays are views into the buffer."""
        slot = self._slot(time)
        return self._x[slot], self._rho[slot]

    def reward(self, time: int) -> np.ndarray:
        """R_{time+1}, the reward emitted by the step taken at ``time``."""
        return self._r[self._slot(time)]

    def evict_before(self, time: int) -> None:
        if time > self.next_time:
            raise WindowError(f"cannot evict past unseen time {time}")
        self.head = max(self.head, time)


def window_push(window: TransitionWindow, x, rho, r=0.0) -> TransitionWindow:
    window.push(x, rho, r)
    return window


def window_at(window: TransitionWindow, time: int):
    return window.at(time)
