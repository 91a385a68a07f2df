import numpy as np
import pytest

from egoreach.errors import DegenerateProjection, DomainError
from egoreach.geometry import (
    CameraIntrinsics,
    NormalizedCoord,
    RigidTransform,
    WorkspaceBox,
    apply_transform,
    default_workspace,
    project,
    rotation_about_axis,
    unproject,
)


class TestProject:
    def test_optical_axis_maps_to_principal_point(self, intrinsics):
        assert np.allclose(project(np.array([0.0, 0.0, 1.0]), intrinsics), [960.0, 540.0])

    def test_unit_depth_offset(self, intrinsics):
        assert np.allclose(project(np.array([0.1, 0.0, 1.0]), intrinsics), [1060.0, 540.0])

    def test_hand_computed_point(self, intrinsics):
        # fx * 0.3/0.8 + cx = 1000 * 0.375 + 960; fy * (-0.2/0.8) + cy = -250 + 540
        px = project(np.array([0.3, -0.2, 0.8]), intrinsics)
        assert np.allclose(px, [1335.0, 290.0])

    @pytest.mark.parametrize("z", [0.0, -0.5])
    def test_nonpositive_depth_rejected(self, intrinsics, z):
        with pytest.raises(DegenerateProjection):
            project(np.array([0.1, 0.1, z]), intrinsics)


class TestUnproject:
    def test_principal_point(self, intrinsics):
        assert np.allclose(unproject(np.array([960.0, 540.0]), 1.0, intrinsics), [0.0, 0.0, 1.0])

    def test_hand_computed_point(self, intrinsics):
        assert np.allclose(unproject(np.array([1060.0, 540.0]), 2.0, intrinsics), [0.2, 0.0, 2.0])

    def test_nonpositive_depth_rejected(self, intrinsics):
        with pytest.raises(DegenerateProjection):
            unproject(np.array([100.0, 100.0]), 0.0, intrinsics)

    def test_mutual_inverse_at_fixed_depth(self, intrinsics, rng):
        for _ in range(50):
            q = np.array([rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3), rng.uniform(0.2, 2.0)])
            assert np.allclose(unproject(project(q, intrinsics), q[2], intrinsics), q, atol=1e-9)
            px = rng.uniform([0, 0], [1920, 1080])
            d = rng.uniform(0.2, 2.0)
            assert np.allclose(project(unproject(px, d, intrinsics), intrinsics), px, atol=1e-9)


class TestRigidTransform:
    def test_identity_fixed_point(self):
        tf = RigidTransform.identity()
        assert np.allclose(apply_transform(tf, np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])

    def test_pure_translation(self):
        tf = RigidTransform(rotation=np.eye(3), translation=np.array([0.1, 0.0, 0.0]))
        assert np.allclose(apply_transform(tf, np.zeros(3)), [0.1, 0.0, 0.0])

    def test_z_rotation_quarter_turn(self):
        tf = RigidTransform(rotation=rotation_about_axis(np.array([0.0, 0.0, 1.0]), np.pi / 2),
                            translation=np.zeros(3))
        assert np.allclose(apply_transform(tf, np.array([1.0, 0.0, 0.0])), [0.0, 1.0, 0.0], atol=1e-9)

    def test_preserves_pairwise_distances(self, rng):
        for _ in range(20):
            tf = RigidTransform(
                rotation=rotation_about_axis(rng.normal(size=3), rng.uniform(0, np.pi)),
                translation=rng.normal(size=3),
            )
            a, b = rng.normal(size=3), rng.normal(size=3)
            before = np.linalg.norm(a - b)
            after = np.linalg.norm(tf.apply(a) - tf.apply(b))
            assert abs(before - after) < 1e-9

    def test_compose_matches_sequential_application(self, rng):
        t1 = RigidTransform(rotation=rotation_about_axis(rng.normal(size=3), 0.3), translation=rng.normal(size=3))
        t2 = RigidTransform(rotation=rotation_about_axis(rng.normal(size=3), -0.7), translation=rng.normal(size=3))
        p = rng.normal(size=3)
        assert np.allclose(t1.compose(t2).apply(p), t1.apply(t2.apply(p)), atol=1e-12)

    def test_inverse_roundtrip(self, rng):
        tf = RigidTransform(rotation=rotation_about_axis(rng.normal(size=3), 1.1), translation=rng.normal(size=3))
        p = rng.normal(size=3)
        assert np.allclose(tf.inverse().apply(tf.apply(p)), p, atol=1e-12)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(DomainError):
            RigidTransform(rotation=np.eye(3) * 1.01, translation=np.zeros(3))

    def test_rejects_reflection(self):
        flip = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(DomainError):
            RigidTransform(rotation=flip, translation=np.zeros(3))

    def test_dict_roundtrip(self, rng):
        tf = RigidTransform(rotation=rotation_about_axis(rng.normal(size=3), 0.4), translation=rng.normal(size=3))
        back = RigidTransform.from_dict(tf.to_dict())
        assert np.allclose(back.rotation, tf.rotation)
        assert np.allclose(back.translation, tf.translation)


class TestNormalizedCoord:
    @pytest.mark.parametrize("v", [-1.0, 0.0, 1.0, 0.999999])
    def test_accepts_in_range(self, v):
        assert float(NormalizedCoord(v)) == v

    @pytest.mark.parametrize("v", [-1.0001, 1.0001, 2.0])
    def test_rejects_out_of_range(self, v):
        with pytest.raises(DomainError):
            NormalizedCoord(v)


class TestCameraIntrinsics:
    def test_rejects_bad_focal(self):
        with pytest.raises(DomainError):
            CameraIntrinsics(fx=0.0, fy=1.0, cx=1.0, cy=1.0, width=10, height=10)

    def test_rejects_principal_point_outside(self):
        with pytest.raises(DomainError):
            CameraIntrinsics(fx=1.0, fy=1.0, cx=11.0, cy=1.0, width=10, height=10)

    def test_dict_roundtrip(self, intrinsics):
        assert CameraIntrinsics.from_dict(intrinsics.to_dict()) == intrinsics


class TestWorkspaceBox:
    def test_default_maps_corners_to_unit_cube(self):
        box = default_workspace()
        assert np.allclose(box.normalize(box.lo), [-1, -1, -1])
        assert np.allclose(box.normalize(box.hi), [1, 1, 1])
        assert np.allclose(box.normalize(np.array([0.0, 0.0, 1.0])), [0, 0, 0])

    def test_normalize_denormalize_roundtrip(self, rng):
        box = default_workspace()
        for _ in range(20):
            p = rng.uniform(box.lo, box.hi)
            assert np.allclose(box.denormalize(box.normalize(p)), p, atol=1e-12)

    def test_rejects_empty_box(self):
        with pytest.raises(DomainError):
            WorkspaceBox(lo=np.array([0.0, 0.0, 0.0]), hi=np.array([1.0, 0.0, 1.0]))
