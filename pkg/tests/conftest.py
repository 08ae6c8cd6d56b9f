import pytest

from quickroutes.ingest import LineConfig, attach_labels, segment_climbs
from quickroutes.sensor import SensorConfig
from quickroutes.simulate import RouteProfile, RouteSpec, simulate_line


@pytest.fixture(scope="session")
def cfg():
    return SensorConfig()


@pytest.fixture(scope="session")
def small_line():
    return LineConfig(ie=8)


@pytest.fixture(scope="session")
def small_profile():
    route = RouteSpec(
        name="easy",
        clip_times=(5.0, 14.0, 24.0, 35.0, 47.0, 60.0, 74.0, 89.0),
        amplitudes=(0.8,) * 8,
        durations=(4.0,) * 8,
    )
    return RouteProfile(
        routes={"easy": route},
        climbs=["easy"] * 3,
        climb_spacing_s=220.0,
        start_s=40.0,
    )


@pytest.fixture(scope="session")
def small_sim(small_line, small_profile):
    return simulate_line(small_line, small_profile, seed=7)


@pytest.fixture(scope="session")
def small_records(small_sim, small_line):
    records = segment_climbs(small_sim.streams, small_line, gap_s=120.0)
    return attach_labels(records, [t.route for t in small_sim.truth])
