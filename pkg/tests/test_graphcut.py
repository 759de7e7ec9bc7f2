import itertools

import numpy as np
import pytest

from econet.graphcut import (FlowGraph, build_energy, cut_value, max_flow,
                             regularize)
from econet.model import LikelihoodMap
from econet.volume import LabelMask, Volume3D


def brute_force_min_cut(g: FlowGraph):
    best_val, best_labels = None, None
    for bits in itertools.product([False, True], repeat=g.num_nodes):
        labels = np.array(bits)
        val = cut_value(g, labels)
        if best_val is None or val < best_val - 1e-12:
            best_val, best_labels = val, labels
    return best_val, best_labels


def random_graph(rng):
    n = int(rng.integers(1, 9))
    edges = []
    for _ in range(int(rng.integers(0, 2 * n + 1))):
        u, v = rng.integers(0, n, size=2)
        if u != v:
            edges.append((int(u), int(v), float(rng.integers(0, 11))))
    src = rng.integers(0, 11, size=n).astype(float)
    snk = rng.integers(0, 11, size=n).astype(float)
    return FlowGraph.from_edges(n, edges, src, snk)


class TestMaxFlow:
    def test_single_node(self):
        g = FlowGraph.from_edges(1, [], [3.0], [1.0])
        flow, labels = max_flow(g)
        assert flow == 1.0
        assert labels.tolist() == [True]

    def test_two_node_chain_bottleneck(self):
        g = FlowGraph.from_edges(2, [(0, 1, 1.0)], [2.0, 0.0], [0.0, 2.0])
        flow, labels = max_flow(g)
        assert flow == 1.0
        # the middle arc is the cut
        assert labels.tolist() == [True, False]

    def test_empty_graph(self):
        g = FlowGraph.from_edges(0, [], [], [])
        flow, labels = max_flow(g)
        assert flow == 0.0 and labels.size == 0

    def test_tie_goes_to_background(self):
        g = FlowGraph.from_edges(1, [], [2.0], [2.0])
        flow, labels = max_flow(g)
        assert flow == 2.0
        assert labels.tolist() == [False]

    def test_random_graphs_match_enumeration(self):
        rng = np.random.default_rng(0)
        for _ in range(60):
            g = random_graph(rng)
            flow, labels = max_flow(g)
            best_val, _ = brute_force_min_cut(g)
            assert abs(flow - best_val) < 1e-9
            assert abs(cut_value(g, labels) - best_val) < 1e-9

    def test_rejects_negative_capacity(self):
        with pytest.raises(ValueError):
            FlowGraph.from_edges(2, [(0, 1, -1.0)], [0, 0], [0, 0])

    def test_rejects_bad_endpoint(self):
        with pytest.raises(ValueError):
            FlowGraph.from_edges(2, [(0, 5, 1.0)], [0, 0], [0, 0])


class TestBuildEnergy:
    def make_inputs(self, p, intensities):
        p = np.asarray(p, dtype=np.float32)
        lik = LikelihoodMap(dims=p.shape, data=p)
        v = Volume3D.from_array(np.asarray(intensities, dtype=np.float32))
        return lik, v

    def test_lambda_zero_no_edges(self):
        lik, v = self.make_inputs(np.full((2, 2, 2), 0.3), np.zeros((2, 2, 2)))
        g = build_energy(lik, v, lam=0.0)
        assert len(g.edge_u) == 0

    def test_equal_intensity_weight_is_lambda(self):
        lik, v = self.make_inputs(np.full((2, 1, 1), 0.5), np.full((2, 1, 1), 0.4))
        g = build_energy(lik, v, lam=5.0, sigma=0.1)
        assert len(g.edge_u) == 1
        assert abs(g.cap_uv[0] - 5.0) < 1e-12

    def test_pairwise_formula(self):
        arr = np.zeros((2, 1, 1), dtype=np.float32)
        arr[1] = 0.25
        lik, v = self.make_inputs(np.full((2, 1, 1), 0.5), arr)
        g = build_energy(lik, v, lam=2.0, sigma=0.1)
        expected = 2.0 * np.exp(-(0.25 ** 2) / (2 * 0.01))
        assert abs(g.cap_uv[0] - expected) < 1e-12

    def test_unary_terms(self):
        lik, v = self.make_inputs(np.full((1, 1, 1), 0.8), np.zeros((1, 1, 1)))
        g = build_energy(lik, v, lam=0.0)
        assert abs(g.source_cap[0] - (-np.log(0.2))) < 1e-6
        assert abs(g.sink_cap[0] - (-np.log(0.8))) < 1e-6

    def test_dim_mismatch(self):
        lik = LikelihoodMap(dims=(2, 2, 2), data=np.full((2, 2, 2), 0.5, np.float32))
        v = Volume3D.from_array(np.zeros((3, 3, 3), dtype=np.float32))
        with pytest.raises(ValueError):
            build_energy(lik, v)

    def test_bad_sigma(self):
        lik, v = self.make_inputs(np.full((2, 2, 2), 0.5), np.zeros((2, 2, 2)))
        with pytest.raises(ValueError):
            build_energy(lik, v, sigma=0.0)

    def test_edge_count_6_connectivity(self):
        lik, v = self.make_inputs(np.full((3, 4, 5), 0.5), np.zeros((3, 4, 5)))
        g = build_energy(lik, v, lam=1.0)
        expected = 2 * 4 * 5 + 3 * 3 * 5 + 3 * 4 * 4
        assert len(g.edge_u) == expected


class TestRegularize:
    def test_lambda_zero_equals_argmax(self):
        rng = np.random.default_rng(1)
        p = rng.uniform(0.01, 0.99, size=(9, 8, 7)).astype(np.float32)
        lik = LikelihoodMap(dims=p.shape, data=p)
        v = Volume3D.from_array(rng.random((9, 8, 7), dtype=np.float32))
        mask = regularize(lik, v, lam=0.0)
        assert np.array_equal(mask.values.astype(bool), p > 0.5)

    def test_confident_likelihood_unchanged(self):
        rng = np.random.default_rng(2)
        blob = np.zeros((8, 8, 8), dtype=bool)
        blob[2:6, 2:6, 2:6] = True
        p = np.where(blob, 0.99, 0.01).astype(np.float32)
        lik = LikelihoodMap(dims=p.shape, data=p)
        v = Volume3D.from_array(np.where(blob, 0.8, 0.2).astype(np.float32))
        mask = regularize(lik, v, lam=0.0)
        assert np.array_equal(mask.values.astype(bool), blob)

    def test_smoothing_removes_speckle(self):
        from scipy import ndimage
        rng = np.random.default_rng(3)
        shape = (24, 24, 24)
        center = np.array(shape) / 2 - 0.5
        grid = np.indices(shape).transpose(1, 2, 3, 0)
        sphere = ((grid - center) ** 2).sum(axis=-1) <= 8 ** 2
        p = np.where(sphere, 0.9, 0.1)
        flip = rng.random(shape) < 0.08  # salt-and-pepper corruption
        p = np.where(flip, 1.0 - p, p).astype(np.float32)
        lik = LikelihoodMap(dims=shape, data=p)
        v = Volume3D.from_array(np.full(shape, 0.5, dtype=np.float32))
        argmax_components = ndimage.label(p > 0.5)[1]
        mask = regularize(lik, v, lam=5.0, sigma=0.1)
        cut_components = ndimage.label(mask.values)[1]
        assert cut_components < argmax_components

    def test_huge_lambda_uniform_label(self):
        rng = np.random.default_rng(4)
        p = rng.uniform(0.2, 0.8, size=(6, 6, 6)).astype(np.float32)
        lik = LikelihoodMap(dims=p.shape, data=p)
        v = Volume3D.from_array(np.full((6, 6, 6), 0.5, dtype=np.float32))
        mask = regularize(lik, v, lam=1e5, sigma=0.1)
        assert mask.values.min() == mask.values.max()

    def test_relabel_symmetry(self):
        rng = np.random.default_rng(5)
        p = rng.uniform(0.05, 0.95, size=(7, 7, 7)).astype(np.float32)
        v = Volume3D.from_array(rng.random((7, 7, 7), dtype=np.float32))
        m1 = regularize(LikelihoodMap(dims=p.shape, data=p), v, lam=3.0, sigma=0.2)
        m2 = regularize(LikelihoodMap(dims=p.shape, data=(1.0 - p)), v,
                        lam=3.0, sigma=0.2)
        # swapping p <-> 1-p complements the mask, except exact-tie voxels
        ties = np.isclose(p, 0.5)
        assert np.array_equal(m1.values[~ties], 1 - m2.values[~ties])

    def test_cut_energy_not_worse_than_argmax(self):
        rng = np.random.default_rng(6)
        p = rng.uniform(0.01, 0.99, size=(6, 5, 4)).astype(np.float32)
        lik = LikelihoodMap(dims=p.shape, data=p)
        v = Volume3D.from_array(rng.random((6, 5, 4), dtype=np.float32))
        g = build_energy(lik, v, lam=2.0, sigma=0.15)
        _, labels = max_flow(g)
        assert cut_value(g, labels) <= cut_value(g, (p > 0.5).ravel()) + 1e-9

    def test_flow_value_equals_cut_capacity_on_grid(self):
        rng = np.random.default_rng(7)
        p = rng.uniform(0.1, 0.9, size=(5, 5, 5)).astype(np.float32)
        lik = LikelihoodMap(dims=p.shape, data=p)
        v = Volume3D.from_array(rng.random((5, 5, 5), dtype=np.float32))
        g = build_energy(lik, v, lam=1.5, sigma=0.2)
        flow, labels = max_flow(g)
        assert abs(flow - cut_value(g, labels)) < 1e-8
