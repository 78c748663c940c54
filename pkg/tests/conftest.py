import math
import random

import pytest

from scenesel.core import (
    Box3D,
    ClassCatalog,
    DEFAULT_ANCHORS,
    DEFAULT_CATALOG,
    MixtureParams,
    RESIDUAL_DIMS,
    Scene,
    ScoredDetection,
)


@pytest.fixture
def catalog():
    return DEFAULT_CATALOG


@pytest.fixture
def anchors():
    return DEFAULT_ANCHORS


def make_box(x=1.0, y=2.0, z=0.0, w=1.6, l=3.9, h=1.56, theta=0.1):
    return Box3D(x=x, y=y, z=z, w=w, l=l, h=h, theta=theta)


def make_detection(label="car", confidence=0.9, box=None, mixture=None):
    return ScoredDetection(label, confidence, box or make_box(), mixture)


def uniform_mixture(k=1, mean=0.0, var=0.04):
    """Mixture with identical rows across all seven residual dimensions."""
    row_w = tuple([1.0 / k] * k)
    row_m = tuple([mean] * k)
    row_v = tuple([var] * k)
    n = len(RESIDUAL_DIMS)
    return MixtureParams(
        weights=tuple([row_w] * n), means=tuple([row_m] * n), variances=tuple([row_v] * n)
    )


def mixture_from_rows(weights, means, variances):
    """Same single-dimension row replicated over all seven dimensions."""
    n = len(RESIDUAL_DIMS)
    return MixtureParams(
        weights=tuple([tuple(weights)] * n),
        means=tuple([tuple(means)] * n),
        variances=tuple([tuple(variances)] * n),
    )


def random_scene(rng: random.Random, scene_id: str, catalog=DEFAULT_CATALOG, max_objects=4):
    dets = []
    for _ in range(rng.randint(0, max_objects)):
        dets.append(
            ScoredDetection(
                class_label=rng.choice(catalog.classes),
                confidence=round(rng.random(), 6),
                box=Box3D(
                    x=round(rng.uniform(-40, 40), 6),
                    y=round(rng.uniform(-40, 40), 6),
                    z=round(rng.uniform(-1, 1), 6),
                    w=round(rng.uniform(0.4, 2.5), 6),
                    l=round(rng.uniform(0.5, 5.0), 6),
                    h=round(rng.uniform(0.5, 2.5), 6),
                    theta=round(rng.uniform(-math.pi, math.pi), 6),
                ),
            )
        )
    return Scene(id=scene_id, detections=tuple(dets))
