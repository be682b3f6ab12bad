import json

import networkx as nx
import numpy as np
import pytest

from oracles import betweenness_enum
from rsnntopo.dual_rep import betweenness, brandes, extract_layers, hop_distances
from rsnntopo.errors import DegenerateTopologyError, InputDomainError
from rsnntopo.net_graph import NetworkTopology, from_edges


def random_edges(rng, n, p):
    return [(a, b) for a in range(n) for b in range(n) if a != b and rng.random() < p]


def test_small_examples():
    assert brandes(3, [(0, 1), (1, 2)]).tolist() == [0, 1, 0]
    complete = [(a, b) for a in range(3) for b in range(3) if a != b]
    assert brandes(3, complete).tolist() == [0, 0, 0]
    star = [(leaf, 0) for leaf in (1, 2, 3)] + [(0, leaf) for leaf in (1, 2, 3)]
    assert brandes(4, star)[0] == 6


def test_brute_force_oracle():
    rng = np.random.default_rng(0)
    for _ in range(30):
        n = int(rng.integers(2, 7))
        edges = random_edges(rng, n, rng.uniform(0.2, 0.6))
        assert brandes(n, edges) == pytest.approx(betweenness_enum(n, edges), abs=1e-9)


def test_networkx_cross_check():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n = 20
        edges = random_edges(rng, n, 0.15)
        g = nx.DiGraph()
        g.add_nodes_from(range(n))
        g.add_edges_from(edges)
        ref = nx.betweenness_centrality(g, normalized=False)
        assert brandes(n, edges) == pytest.approx([ref[v] for v in range(n)], abs=1e-9)


def test_hop_distances_undirected_with_sentinel():
    d = hop_distances(5, [(0, 1), (2, 1)], [0], sentinel=5)
    assert d.tolist() == [0, 1, 2, 5, 5]


def test_chain_example():
    net = from_edges(6, [(i, i + 1) for i in range(5)], input_ids=(0,), output_ids=(5,))
    la = extract_layers(net, bottleneck_fraction=1 / 6, band_fraction=0.1)
    assert (la.L1, la.L2, la.L3, la.L4, la.L5) == ([0], [1], [2], [3], [5])
    assert la.centrality.scores.tolist() == [0, 4, 6, 6, 4, 0]
    assert la.d13[1][0] == 2
    assert la.d35[3][0] == 3 and la.d35[4][0] == 3


def test_complete_graph_uses_id_order():
    n = 10
    net = from_edges(n, [(a, b) for a in range(n) for b in range(n) if a != b],
                     input_ids=(0,), output_ids=(1,))
    la = extract_layers(net, 0.2, 0.1)
    assert la.L3 == [2, 3]


def test_boundary_fraction_empties_pool():
    net = from_edges(5, [(i, i + 1) for i in range(4)], input_ids=(0,), output_ids=(4,))
    with pytest.raises(DegenerateTopologyError) as exc:
        extract_layers(net, 1.0, 0.1)
    assert exc.value.layer == "L2"
    with pytest.raises(InputDomainError):
        extract_layers(net, 0.0, 0.1)


def _random_net(rng, n=15, p=0.25):
    edges = random_edges(rng, n, p)
    return from_edges(n, edges, input_ids=(0, 1), output_ids=(n - 2, n - 1))


def test_layers_disjoint_and_anchored():
    rng = np.random.default_rng(2)
    for _ in range(20):
        net = _random_net(rng)
        la = extract_layers(net, 0.1, 0.1)
        sets = [set(la.layer(k)) for k in ("L1", "L2", "L3", "L4", "L5")]
        assert sum(map(len, sets)) == len(set().union(*sets))
        assert la.L1 == list(net.input_ids) and la.L5 == list(net.output_ids)
        assert len(la.L3) == 2 and len(la.L2) >= 1 and len(la.L4) >= 1


def test_synapse_order_does_not_matter():
    rng = np.random.default_rng(3)
    net = _random_net(rng)
    perm = rng.permutation(len(net.synapses))
    shuffled = NetworkTopology(net.neuron_count, net.neurons, tuple(net.synapses[i] for i in perm),
                               net.input_ids, net.output_ids, net.input_synapses)
    assert extract_layers(net).to_dict() == extract_layers(shuffled).to_dict()


def test_relabelling_permutes_layers_without_ties():
    # a graph whose centralities and distances are all distinct where it matters
    edges = [(0, 2), (2, 3), (3, 4), (4, 5), (2, 6), (6, 5), (3, 7), (7, 1), (5, 1)]
    n = 8
    net = from_edges(n, edges, input_ids=(0,), output_ids=(1,))
    la = extract_layers(net, 0.125, 0.2)
    p = [0, 1, 7, 6, 5, 4, 3, 2]  # fixes the I/O ids
    relabelled = from_edges(n, [(p[a], p[b]) for a, b in edges], input_ids=(0,), output_ids=(1,))
    lb = extract_layers(relabelled, 0.125, 0.2)
    assert lb.L3 == sorted(p[v] for v in la.L3)
    assert np.allclose(lb.centrality.scores[p], la.centrality.scores)


def test_exports(tmp_path):
    net = from_edges(6, [(i, i + 1) for i in range(5)], input_ids=(0,), output_ids=(5,))
    la = extract_layers(net, 1 / 6, 0.1)
    la.save_json(tmp_path / "layers.json")
    d = json.loads((tmp_path / "layers.json").read_text())
    assert d["L3"] == [2] and len(d["centrality"]) == 6
    dot = la.to_dot(net)
    assert dot.startswith("digraph") and "0 -> 1;" in dot and "gold" in dot


def test_betweenness_of_topology():
    net = from_edges(3, [(0, 1), (1, 2)], input_ids=(0,), output_ids=(2,))
    assert betweenness(net)[1] == 1.0
