import math

import numpy as np
from hypothesis import assume
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

coord = st.floats(min_value=-100, max_value=100, allow_nan=False, allow_infinity=False)


@st.composite
def point_sets(draw, k_min=3, k_max=12):
    k = draw(st.integers(k_min, k_max))
    pts = draw(arrays(np.float64, (k, 2), elements=coord))
    centred = pts - pts.mean(axis=0)
    assume(np.sqrt(np.sum(centred**2)) > 1e-3)
    return pts


@st.composite
def similarity_params(draw):
    scale = draw(st.floats(0.1, 10))
    theta = draw(st.floats(0, 2 * math.pi))
    t = draw(st.tuples(st.floats(-50, 50), st.floats(-50, 50)))
    return scale, theta, t


seeds = st.integers(0, 2**31 - 1)
