"""Mesh generation, electrodes, difference operators, rasterization, IO."""

import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eitkit import (
    assign_conductivity,
    build_difference_operators,
    generate_disk_mesh,
    load_element_values,
    load_mesh,
    lung_model,
    place_electrodes,
    raster_extent,
    rasterize,
    save_element_values,
    save_mesh,
)
from eitkit.mesh import pixel_of_point


def _signed_area(nodes, tri):
    a, b, c = nodes[tri]
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))


class TestGenerateDiskMesh:
    def test_reference_scale_counts(self):
        mesh = generate_disk_mesh(0.1, 1024)
        assert abs(mesh.n_elements - 1024) <= 0.30 * 1024
        # published discretization for this setup: 1024 elements, 545 nodes
        assert abs(mesh.n_nodes - 545) <= 0.05 * 545

    def test_total_area_unit_disk(self):
        mesh = generate_disk_mesh(1.0, 64)
        assert mesh.element_areas.sum() == pytest.approx(np.pi, rel=0.05)

    def test_invariants_4096(self):
        mesh = generate_disk_mesh(0.1, 4096)
        assert (mesh.element_areas > 0).all()
        for tri in mesh.triangles:
            assert _signed_area(mesh.nodes, tri) > 0  # CCW
        # boundary edges: single closed loop, each owned by exactly one triangle
        loop = mesh.boundary_edges
        assert (loop[:-1, 1] == loop[1:, 0]).all()
        assert loop[-1, 1] == loop[0, 0]
        edge_owner = {}
        for k, tri in enumerate(mesh.triangles):
            for a, b in ((0, 1), (1, 2), (2, 0)):
                key = frozenset((tri[a], tri[b]))
                edge_owner.setdefault(key, []).append(k)
        for a, b in loop:
            assert len(edge_owner[frozenset((a, b))]) == 1
        # neighbor symmetry
        for k, nbrs in enumerate(mesh.element_neighbors):
            for l in nbrs:
                assert k in mesh.element_neighbors[l]

    def test_boundary_nodes_on_circle(self):
        mesh = generate_disk_mesh(0.1, 1024)
        r = np.linalg.norm(mesh.nodes[mesh.boundary_nodes()], axis=1)
        assert np.max(np.abs(r - 0.1)) <= 1e-9 * 0.1
        assert np.linalg.norm(mesh.nodes, axis=1).max() <= 0.1 + 1e-12

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            generate_disk_mesh(0.0, 1024)
        with pytest.raises(ValueError):
            generate_disk_mesh(-1.0, 1024)
        with pytest.raises(ValueError):
            generate_disk_mesh(0.1, 63)

    def test_deterministic(self):
        m1 = generate_disk_mesh(0.1, 2048)
        m2 = generate_disk_mesh(0.1, 2048)
        assert np.array_equal(m1.nodes, m2.nodes)
        assert np.array_equal(m1.triangles, m2.triangles)

    def test_element_count_tracks_target(self):
        for target in (64, 256, 1024, 4096, 16384):
            mesh = generate_disk_mesh(0.1, target)
            assert abs(mesh.n_elements - target) <= 0.30 * target


class TestPlaceElectrodes:
    def test_sixteen_near_uniform(self):
        mesh = generate_disk_mesh(0.1, 1024)
        layout = place_electrodes(mesh, 16)
        assert len(set(layout.node_ids.tolist())) == 16
        bn = set(mesh.boundary_nodes().tolist())
        assert all(i in bn for i in layout.node_ids)
        # consecutive gaps within one boundary-edge length of 22.5 deg
        ang = np.sort(np.mod(layout.angles, 2 * np.pi))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
        edge_angle = 2 * np.pi / len(mesh.boundary_nodes())
        assert np.all(np.abs(gaps - 2 * np.pi / 16) <= edge_angle + 1e-12)

    def test_four_at_quadrants(self):
        mesh = generate_disk_mesh(0.1, 1024)
        layout = place_electrodes(mesh, 4)
        pts = mesh.nodes[layout.node_ids]
        want = 0.1 * np.array([[1, 0], [0, 1], [-1, 0], [0, -1]])
        edge_len = 2 * np.pi * 0.1 / len(mesh.boundary_nodes())
        for p, w in zip(pts, want):
            assert np.linalg.norm(p - w) <= edge_len

    def test_duplicate_snap_rejected(self):
        mesh = generate_disk_mesh(0.1, 64)  # boundary far coarser than 64 slots
        with pytest.raises(ValueError):
            place_electrodes(mesh, 64)

    def test_minimum_count(self):
        mesh = generate_disk_mesh(0.1, 1024)
        with pytest.raises(ValueError):
            place_electrodes(mesh, 3)

    def test_explicit_angles_snap_exactly(self):
        coarse = generate_disk_mesh(0.1, 1024)
        fine = generate_disk_mesh(0.1, 16384)
        lc = place_electrodes(coarse, 16)
        lf = place_electrodes(fine, 16, angles=lc.angles)
        # fine boundary contains every coarse boundary node, so positions match
        assert np.allclose(
            coarse.nodes[lc.node_ids], fine.nodes[lf.node_ids], atol=1e-15
        )


class TestDifferenceOperators:
    def test_constant_annihilated(self):
        mesh = generate_disk_mesh(0.1, 1024)
        ops = build_difference_operators(mesh)
        c = 3.7 * np.ones(mesh.n_elements)
        assert np.max(np.abs(ops.stacked @ c)) == 0.0

    def test_x_consistency_on_centroid_field(self):
        # sigma = x-centroid: each nonzero Dx row evaluates (x_l - x_k)/dx = 1
        mesh = generate_disk_mesh(0.1, 1024)
        ops = build_difference_operators(mesh)
        gx = ops.dx @ mesh.element_centroids[:, 0]
        nz = np.asarray((np.abs(ops.dx) @ np.ones(mesh.n_elements)) > 0)
        assert nz.sum() > 0.9 * mesh.n_elements
        assert np.allclose(gx[nz], 1.0, atol=1e-9)
        gy = ops.dy @ mesh.element_centroids[:, 1]
        nzy = np.asarray((np.abs(ops.dy) @ np.ones(mesh.n_elements)) > 0)
        assert np.allclose(gy[nzy], 1.0, atol=1e-9)

    def test_transverse_slope_bounded_by_direction_threshold(self):
        # sigma = y-centroid: |Dx sigma| = |dy/dx| of the selected neighbor;
        # rows whose neighbor is axis-aligned (|dy| < 0.2|dx|) stay below 0.2
        mesh = generate_disk_mesh(0.1, 1024)
        ops = build_difference_operators(mesh)
        dxc = ops.dx.tocoo()
        rows = {}
        for r, c, v in zip(dxc.row, dxc.col, dxc.data):
            rows.setdefault(r, {})[c] = v
        slope = ops.dx @ mesh.element_centroids[:, 1]
        checked = 0
        for r, entries in rows.items():
            nbr = [c for c in entries if c != r]
            if not nbr:
                continue
            l = nbr[0]
            d = mesh.element_centroids[l] - mesh.element_centroids[r]
            if abs(d[1]) < 0.2 * abs(d[0]):
                checked += 1
                assert abs(slope[r]) < 0.2 + 1e-12
        assert checked > 0

    def test_row_structure(self):
        mesh = generate_disk_mesh(0.1, 2048)
        ops = build_difference_operators(mesh)
        for mat in (ops.dx, ops.dy):
            row_sums = np.asarray(mat.sum(axis=1)).ravel()
            assert np.max(np.abs(row_sums)) < 1e-12
            counts = np.diff(mat.tocsr().indptr)
            assert set(counts.tolist()) <= {0, 2}  # zero rows allowed

    def test_stack_layout(self):
        mesh = generate_disk_mesh(0.1, 1024)
        ops = build_difference_operators(mesh)
        n = mesh.n_elements
        assert ops.stacked.shape == (2 * n, n)
        v = np.random.default_rng(0).normal(size=n)
        assert np.allclose(ops.stacked @ v, np.concatenate([ops.dx @ v, ops.dy @ v]))

    def test_ones_annihilated_across_random_meshes(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            radius = float(rng.uniform(0.05, 2.0))
            target = int(rng.integers(64, 3000))
            mesh = generate_disk_mesh(radius, target)
            ops = build_difference_operators(mesh)
            assert np.max(np.abs(ops.stacked @ np.ones(mesh.n_elements))) == 0.0


class TestRasterize:
    def test_constant_field(self):
        mesh = generate_disk_mesh(0.1, 1024)
        img = rasterize(mesh, np.ones(mesh.n_elements), 256)
        inside = np.isfinite(img)
        assert np.all(img[inside] == 1.0)
        # NaN fraction approximates 1 - pi/4 (disk inscribed in the square)
        assert (~inside).mean() == pytest.approx(1 - np.pi / 4, abs=0.02)

    def test_two_level_histogram(self):
        mesh = generate_disk_mesh(0.1, 1024)
        vals = assign_conductivity(mesh, lung_model(7)).values
        img = rasterize(mesh, vals, 256)
        levels = np.unique(img[np.isfinite(img)])
        assert set(levels.tolist()) == {1.0, 1.1}
        # membership oracle: sampled inclusion pixels satisfy the ellipse
        # inequality of the element that painted them only up to element
        # granularity, so check against the phantom directly at centroids
        spec = lung_model(7)
        hit = spec.inclusions[0].contains(mesh.element_centroids)
        assert np.all(vals[hit] == 1.1)

    def test_resolution_one(self):
        mesh = generate_disk_mesh(0.1, 1024)
        vals = np.arange(mesh.n_elements, dtype=float)
        img = rasterize(mesh, vals, 1)
        assert img.shape == (1, 1)
        # the single pixel center is the domain center
        containing = []
        for k, tri in enumerate(mesh.triangles):
            a, b, c = mesh.nodes[tri]
            m = np.column_stack([b - a, c - a])
            try:
                lam = np.linalg.solve(m, -a)
            except np.linalg.LinAlgError:
                continue
            if lam.min() >= -1e-9 and lam.sum() <= 1 + 1e-9:
                containing.append(k)
        assert img[0, 0] in vals[containing]

    def test_rejects_mismatched_length(self):
        mesh = generate_disk_mesh(0.1, 1024)
        with pytest.raises(ValueError):
            rasterize(mesh, np.ones(mesh.n_elements - 1), 64)

    def test_orientation_row_tracks_y(self):
        mesh = generate_disk_mesh(0.1, 1024)
        vals = (mesh.element_centroids[:, 1] > 0).astype(float)
        img = rasterize(mesh, vals, 64)
        top = img[48, 32]  # row 48 -> y > 0
        bottom = img[16, 32]
        assert top == 1.0 and bottom == 0.0

    def test_assign_rasterize_idempotent(self):
        # looking up each element's centroid pixel recovers its own value
        mesh = generate_disk_mesh(0.1, 1024)
        vals = assign_conductivity(mesh, lung_model(7)).values
        img = rasterize(mesh, vals, 256)
        for k in range(mesh.n_elements):
            r, c = pixel_of_point(mesh, mesh.element_centroids[k], 256)
            assert img[r, c] == vals[k]

    def test_extent_equals_radius(self):
        mesh = generate_disk_mesh(0.25, 1024)
        assert raster_extent(mesh) == pytest.approx(0.25, rel=1e-12)


class TestMeshIO:
    def test_roundtrip_exact(self, tmp_path):
        mesh = generate_disk_mesh(0.1, 1024)
        layout = place_electrodes(mesh, 16)
        path = tmp_path / "mesh.txt"
        save_mesh(path, mesh, layout)
        m2, l2 = load_mesh(path)
        assert np.array_equal(m2.nodes, mesh.nodes)
        assert np.array_equal(m2.triangles, mesh.triangles)
        assert np.array_equal(l2.node_ids, layout.node_ids)
        assert l2.count == 16
        # boundary loop recovered as the same edge set
        assert {frozenset(e) for e in m2.boundary_edges.tolist()} == {
            frozenset(e) for e in mesh.boundary_edges.tolist()
        }

    def test_roundtrip_without_layout(self, tmp_path):
        mesh = generate_disk_mesh(0.1, 256)
        path = tmp_path / "mesh.txt"
        save_mesh(path, mesh)
        m2, l2 = load_mesh(path)
        assert l2 is None
        assert np.array_equal(m2.nodes, mesh.nodes)

    def test_element_values_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        vals = rng.normal(scale=1e-7, size=257)
        path = tmp_path / "field.txt"
        save_element_values(path, vals)
        back = load_element_values(path)
        assert np.array_equal(back, vals)

    @settings(max_examples=25, deadline=None)
    @given(
        values=st.lists(
            st.floats(allow_nan=False, allow_infinity=False, width=64),
            min_size=1,
            max_size=64,
        )
    )
    def test_element_values_roundtrip_property(self, values):
        with tempfile.TemporaryDirectory() as d:
            path = Path(d) / "field.txt"
            save_element_values(path, np.array(values))
            assert np.array_equal(load_element_values(path), np.array(values))
