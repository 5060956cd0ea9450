import networkx as nx
import numpy as np
import pytest

from evdeploy.network import ConfigurationError, NetworkGraph, grid_network
from oracles import as_networkx as _as_nx


def test_two_by_two_grid():
    net = grid_network(2, 2)
    assert net.n_nodes == 4
    assert net.n_links == 8
    assert np.allclose(net.length_km, 1.0)


def test_grid_too_small():
    with pytest.raises(ConfigurationError):
        grid_network(1, 5)


def test_ten_by_ten_strongly_connected():
    assert nx.is_strongly_connected(_as_nx(grid_network(10, 10)))


def test_distances_match_networkx():
    rng = np.random.default_rng(3)
    net = grid_network(6, 5, spacing_km=0.7, length_jitter=0.3, rng=rng)
    lengths = dict(nx.all_pairs_dijkstra_path_length(_as_nx(net)))
    want = np.array([[lengths[i][j] for j in range(net.n_nodes)] for i in range(net.n_nodes)])
    assert np.allclose(net.distance_matrix, want, atol=1e-9)


def test_links_never_shorter_than_straight_line():
    net = grid_network(5, 5, length_jitter=0.5, rng=np.random.default_rng(1))
    a, b = net.links[:, 0], net.links[:, 1]
    euclid = np.linalg.norm(net.xy[a] - net.xy[b], axis=1)
    assert np.all(net.length_km >= euclid - 1e-12)


def test_path_is_consistent_with_distance():
    net = grid_network(4, 4)
    path = net.path(0, 15)
    assert path[0] == 0 and path[-1] == 15
    assert len(path) - 1 == pytest.approx(net.distance_matrix[0, 15])


def test_travel_time_follows_speed():
    net = grid_network(3, 3, spacing_km=2.0, speed_kmh=60.0)
    assert net.time_matrix[0, 8] == pytest.approx(8.0 / 60.0 * 3600.0)


def test_round_trip_through_dict():
    net = grid_network(3, 4, length_jitter=0.2, rng=np.random.default_rng(0))
    back = NetworkGraph.from_dict(net.to_dict())
    assert np.array_equal(back.xy, net.xy)
    assert np.array_equal(back.links, net.links)
    assert np.allclose(back.distance_matrix, net.distance_matrix)


def test_node_lookup_by_coordinates():
    net = grid_network(3, 3, spacing_km=0.5)
    assert net.node_at(1.0, 0.5) == 5
    with pytest.raises(KeyError):
        net.node_at(0.25, 0.25)
