import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fieldstop import materials as mat
from fieldstop.config import default_config_path, parse_config, build_stack
from fieldstop.geometry import OpticalStack, StackElement
from fieldstop.phase import PairWavelengths

settings.register_profile(
    "fieldstop",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("fieldstop")

CUT_DEG = 28.8


@pytest.fixture(scope="session")
def bbo():
    return mat.load_crystal("bbo", "eimerl87", math.radians(CUT_DEG), 6.0)


@pytest.fixture(scope="session")
def yvo():
    return mat.load_crystal("yvo4", "vendor", math.pi / 2, 3.6)


@pytest.fixture(scope="session")
def paper_config():
    return parse_config(default_config_path())


@pytest.fixture(scope="session")
def paper_stack(paper_config):
    return build_stack(paper_config)


@pytest.fixture(scope="session")
def waves(paper_config):
    return paper_config.wavelengths()


def make_stack(
    length_mm=6.0,
    compensator_mm=3.6,
    gap_mm=0.5,
    hwp_mm=1.0,
    axis="parallel",
    e_axis="horizontal",
    cut_deg=CUT_DEG,
    scale=2.0,
):
    """Hand-built stack for tests that vary the layout."""
    cut = math.radians(cut_deg)
    axis2 = +1 if axis == "parallel" else -1
    crystal1 = mat.load_crystal("bbo", "eimerl87", cut, length_mm)
    crystal2 = mat.load_crystal("bbo", "eimerl87", cut, length_mm, axis_sign=axis2)
    compensator = mat.load_crystal("yvo4", "vendor", math.pi / 2, compensator_mm)
    elements = [StackElement("bbo", length_mm, "crystal1")]
    if gap_mm:
        elements.append(StackElement("air", gap_mm, "gap"))
    elements.append(StackElement("hwp_bulk", hwp_mm, "hwp"))
    if gap_mm:
        elements.append(StackElement("air", gap_mm, "gap"))
    elements.append(StackElement("bbo", length_mm, "crystal2"))
    if gap_mm:
        elements.append(StackElement("air", gap_mm, "gap"))
    elements.append(StackElement("yvo4", compensator_mm, "compensator"))
    return OpticalStack(
        elements=tuple(elements),
        crystal1=crystal1,
        crystal2=crystal2,
        compensator=compensator,
        hwp_bulk_index=1.5,
        axis_configuration=axis,
        angle_position_scale_mm_per_deg=scale,
        compensator_e_axis=e_axis,
    )


@pytest.fixture(scope="session")
def pair_waves():
    pump_um = 1.0 / (1.0 / 0.785 + 1.0 / 0.837)
    return PairWavelengths.from_pump_signal(pump_um, 0.785)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
