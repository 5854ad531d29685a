import numpy as np
import pytest
from hypothesis import settings

from partseg.mask import BinaryMask

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def l_polyomino(size=40):
    """Lattice points of the polygon (0,0),(30,0),(30,10),(10,10),(10,30),(0,30)."""
    g = np.zeros((size, size), dtype=bool)
    g[0:11, 0:31] = True
    g[0:31, 0:11] = True
    return BinaryMask(g)


def rect_mask(w, h, x0, y0, width, height):
    g = np.zeros((height, width), dtype=bool)
    g[y0:y0 + h, x0:x0 + w] = True
    return BinaryMask(g)


@pytest.fixture
def lshape():
    return l_polyomino()
