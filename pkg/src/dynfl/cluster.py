from __future__ import annotations

import math

CRITICAL = "critical"
SATELLITE = "satellite"


class Cluster:
    """A facility with a set of clients, a kind and an integer level.

    ``clients`` maps client id to its distance from ``facility``.  A critical
    cluster pays ``opening`` (the facility's opening cost); a satellite pays
    nothing and holds a single client.
    """

    __slots__ = ("id", "facility", "kind", "level", "clients", "opening", "_cost")

    def __init__(self, id: int, facility: int, kind: str, level: int,
                 clients: dict[int, float] | None = None, opening: float = 0.0):
        if kind not in (CRITICAL, SATELLITE):
            raise ValueError(f"unknown cluster kind {kind!r}")
        self.id = id
        self.facility = int(facility)
        self.kind = kind
        self.level = int(level)
        self.clients = dict(clients or {})
        self.opening = float(opening) if kind == CRITICAL else 0.0
        self._cost = None

    @property
    def is_critical(self) -> bool:
        return self.kind == CRITICAL

    def __len__(self):
        return len(self.clients)

    def add(self, j: int, d: float):
        self.clients[j] = d
        self._cost = None

    def remove(self, j: int) -> float:
        self._cost = None
        return self.clients.pop(j)

    def cost(self) -> float:
        # fsum is exactly rounded, so the value does not depend on client order
        if self._cost is None:
            self._cost = math.fsum([self.opening, *self.clients.values()])
        return self._cost

    def cost_avg(self) -> float:
        if not self.clients:
            return math.inf
        return self.cost() / len(self.clients)

    def __repr__(self):
        return (f"Cluster(id={self.id}, facility={self.facility}, kind={self.kind}, "
                f"level={self.level}, clients={sorted(self.clients)})")
