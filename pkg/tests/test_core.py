import math

import pytest

from scenesel.core import (
    Anchor,
    AnchorTable,
    Box3D,
    ClassCatalog,
    MixtureParams,
    RESIDUAL_DIMS,
    Scene,
    ScoredDetection,
    anchor_diagonal,
)
from conftest import uniform_mixture, mixture_from_rows


class TestAnchorDiagonal:
    def test_three_four_five(self):
        assert anchor_diagonal(3.0, 4.0) == pytest.approx(5.0)

    def test_zero_dimension_rejected(self):
        with pytest.raises(ValueError):
            anchor_diagonal(1.0, 0.0)

    def test_kitti_car_anchor(self):
        # sqrt(1.6^2 + 3.9^2), computed directly
        assert anchor_diagonal(1.6, 3.9) == pytest.approx(4.215447781671598, abs=1e-12)


class TestCatalog:
    def test_reserved_labels_excluded(self):
        with pytest.raises(ValueError):
            ClassCatalog(classes=("car", "__ego__"))

    def test_duplicate_classes_rejected(self):
        with pytest.raises(ValueError):
            ClassCatalog(classes=("car", "car"))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ClassCatalog(classes=())


class TestBox3D:
    def test_positive_dims_enforced(self):
        with pytest.raises(ValueError):
            Box3D(0, 0, 0, w=-1.0, l=1.0, h=1.0, theta=0.0)

    def test_nonfinite_yaw_rejected(self):
        with pytest.raises(ValueError):
            Box3D(0, 0, 0, w=1.0, l=1.0, h=1.0, theta=math.inf)

    def test_range(self):
        assert Box3D(3, 0, 4, 1, 1, 1, 0).range_to_origin() == pytest.approx(5.0)


class TestMixtureParams:
    def test_weight_sum_tolerance(self):
        with pytest.raises(ValueError):
            mixture_from_rows((0.5, 0.5 + 1e-6), (0.0, 0.0), (1.0, 1.0))

    def test_valid_simplex_accepted(self):
        m = mixture_from_rows((0.5, 0.3, 0.2), (0.0, 1.0, 2.0), (1.0, 1.0, 1.0))
        assert m.num_components == 3

    def test_uneven_component_count_rejected(self):
        rows_w = tuple([(1.0,)] * 6 + [(0.5, 0.5)])
        rows_m = tuple([(0.0,)] * 6 + [(0.0, 0.0)])
        rows_v = tuple([(1.0,)] * 6 + [(1.0, 1.0)])
        with pytest.raises(ValueError):
            MixtureParams(weights=rows_w, means=rows_m, variances=rows_v)

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError):
            uniform_mixture(var=-0.1)

    def test_zero_variance_allowed(self):
        # Exact certainty is representable; the NLL path rejects it separately.
        assert uniform_mixture(var=0.0).num_components == 1


class TestSceneAndDetection:
    def test_confidence_bounds(self):
        box = Box3D(0, 0, 0, 1, 1, 1, 0)
        with pytest.raises(ValueError):
            ScoredDetection("car", 1.5, box)

    def test_empty_scene_id_rejected(self):
        with pytest.raises(ValueError):
            Scene(id="")


class TestAnchorTable:
    def test_coverage_check(self, anchors):
        anchors.check_covers(ClassCatalog(classes=("car", "pedestrian")))
        with pytest.raises(ValueError):
            anchors.check_covers(ClassCatalog(classes=("truck",)))

    def test_diagonal_derived(self):
        a = Anchor(length=3.9, width=1.6, height=1.56)
        assert a.diagonal == pytest.approx(math.hypot(1.6, 3.9))
