import numpy as np
import pytest

from econet.volume import LabelMask, PhantomSpec, Volume3D, generate_phantom
from econet.scribbles import ScribbleSet


@pytest.fixture(scope="session")
def small_texture_phantom():
    return generate_phantom(PhantomSpec(kind="texture-ambiguous", dims=(48, 48, 48),
                                        seed=7, lesion_count=2,
                                        lesion_radius=(8, 11)))


@pytest.fixture(scope="session")
def small_separable_phantom():
    return generate_phantom(PhantomSpec(kind="intensity-separable", dims=(48, 48, 48),
                                        seed=7, lesion_count=2,
                                        lesion_radius=(8, 11)))


def balanced_scribbles(gt: LabelMask, n_fg: int, n_bg: int, seed=0) -> ScribbleSet:
    rng = np.random.default_rng(seed)
    fg = np.argwhere(gt.values > 0)
    bg = np.argwhere(gt.values == 0)
    s = ScribbleSet()
    for i in rng.choice(len(fg), size=n_fg, replace=False):
        s.add(fg[i], 1)
    for i in rng.choice(len(bg), size=n_bg, replace=False):
        s.add(bg[i], 0)
    return s


def random_volume(dims=(16, 16, 16), seed=0) -> Volume3D:
    rng = np.random.default_rng(seed)
    return Volume3D.from_array(rng.random(dims, dtype=np.float32))
