"""Bundled example networks and measurement data."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from . import io
from .network import Network, SensorConfig, sensor_config
from .steady_state import LoadingCondition, MeasurementSet, SteadyStateSolution, solve_steady_state


def path(name: str) -> Path:
    """Filesystem path of a bundled file such as ``three_cycle.json``."""
    p = resources.files("hydrocal.data") / name
    if not p.is_file():
        raise FileNotFoundError(f"no bundled data file {name!r}")
    return Path(str(p))


def three_cycle() -> tuple[Network, SensorConfig]:
    """Five-node, eight-pipe, single-source network with sensors at nodes 2, 3 and 4."""
    net, sensors = io.read_network(path("three_cycle.json"))
    return net, sensor_config(net, sensors)


def three_cycle_loads() -> list[LoadingCondition]:
    net, _ = three_cycle()
    return io.read_loads(path("three_cycle_loads.json"), net)


def three_cycle_published_measurements() -> list[MeasurementSet]:
    """The published sensor heads (piezometric, 4 decimals), as pressure-head sets."""
    net, sensors = three_cycle()
    return io.read_measurements(path("three_cycle_reference_heads.json"), net, sensors)


def three_cycle_solutions() -> list[SteadyStateSolution]:
    net, _ = three_cycle()
    return [solve_steady_state(net, load) for load in three_cycle_loads()]


def two_loop() -> tuple[Network, SensorConfig]:
    net, sensors = io.read_network(path("two_loop.json"))
    return net, sensor_config(net, sensors)
