import dataclasses
import math

import numpy as np
import pytest

from rsnntopo.errors import ConfigurationError
from rsnntopo.net_graph import (
    DistSpec,
    HeterogeneityConfig,
    NetworkTopology,
    NeuronParams,
    SynapseParams,
    build_network,
    default_io_ids,
    from_edges,
    sample_params,
)


def test_constant_family_gives_identical_records():
    cfg = HeterogeneityConfig(tau_m=DistSpec.constant(20.0))
    recs = sample_params(cfg, 3, seed=5)
    assert [r.tau_m for r in recs] == [20.0, 20.0, 20.0]


def test_uniform_threshold_mean():
    cfg = HeterogeneityConfig(v_th=DistSpec("uniform", {"low": 0.9, "high": 1.1}))
    for seed in range(20):
        mean = np.mean([r.v_th for r in sample_params(cfg, 1000, seed)])
        assert 0.99 <= mean <= 1.01


def test_sampling_is_deterministic():
    cfg = HeterogeneityConfig()
    assert sample_params(cfg, 50, 3) == sample_params(cfg, 50, 3)
    assert sample_params(cfg, 50, 3) != sample_params(cfg, 50, 4)


def test_clamp_is_respected():
    cfg = HeterogeneityConfig(tau_m=DistSpec("lognormal", {"median": 20.0, "sigma": 3.0}, (5.0, 100.0)))
    tau = [r.tau_m for r in sample_params(cfg, 2000, 0)]
    assert min(tau) >= 5.0 and max(tau) <= 100.0


def test_field_streams_are_independent():
    # changing one distribution leaves every other draw untouched
    a = HeterogeneityConfig()
    b = dataclasses.replace(a, tau_m=DistSpec.constant(15.0))
    na = build_network(a, 30, [0, 1], [29])
    nb = build_network(b, 30, [0, 1], [29])
    assert [r.v_th for r in na.neurons] == [r.v_th for r in nb.neurons]
    assert na.synapses == nb.synapses


def test_constant_heterogeneous_config_equals_homogeneous():
    const = {k: DistSpec.constant(v) for k, v in
             dict(tau_m=20.0, v_th=1.0, tau_plus=20.0, tau_minus=20.0, eta_plus=0.01, eta_minus=0.01).items()}
    het = HeterogeneityConfig(seed=7, **const)
    hom = HeterogeneityConfig.homogeneous(seed=7)
    ins, outs = default_io_ids(40, 4, 4)
    assert build_network(het, 40, ins, outs) == build_network(hom, 40, ins, outs)


def test_complete_wiring():
    cfg = HeterogeneityConfig(connection_probability=1.0)
    net = build_network(cfg, 4, [0], [3])
    assert len(net.synapses) == 12
    assert sorted(net.edges) == [(i, j) for i in range(4) for j in range(4) if i != j]


def test_sparse_wiring_count_statistics():
    counts = []
    for seed in range(200):
        cfg = HeterogeneityConfig.homogeneous(seed=seed, connection_probability=0.1)
        counts.append(len(build_network(cfg, 100, [0], [99]).synapses))
    p, m = 0.1, 100 * 99
    sigma_of_mean = math.sqrt(m * p * (1 - p) / 200)
    assert abs(np.mean(counts) - p * m) <= 3 * sigma_of_mean


def test_rebuild_gives_identical_edges():
    cfg = HeterogeneityConfig(seed=11)
    a = build_network(cfg, 50, [0, 1, 2], [48, 49])
    b = build_network(cfg, 50, [0, 1, 2], [48, 49])
    assert a.edges == b.edges and a == b


def test_generated_network_invariants():
    net = build_network(HeterogeneityConfig(seed=2), 60, range(8), range(52, 60))
    assert all(s.pre != s.post for s in net.synapses)
    assert len(set(net.edges)) == len(net.edges)
    assert all(s.params.w_min <= s.params.weight <= s.params.w_max for s in net.synapses)
    assert all(p.tau_m > 0 and p.v_th > p.v_reset for p in net.neurons)
    assert len(net.input_synapses) == len(net.input_ids)


def test_overlapping_io_sets_rejected():
    with pytest.raises(ConfigurationError):
        build_network(HeterogeneityConfig(), 10, [0, 1], [1, 2])


def test_json_round_trip(tmp_path):
    net = build_network(HeterogeneityConfig(seed=4), 20, [0, 1], [18, 19])
    path = tmp_path / "net.json"
    net.save(path)
    back = NetworkTopology.load(path)
    assert back == net
    assert back.config_echo == net.config_echo
    assert np.array_equal(back.weight_matrix(), net.weight_matrix())


def test_unknown_format_version_rejected():
    d = from_edges(3, [(0, 1)]).to_dict()
    d["version"] = 99
    with pytest.raises(ConfigurationError):
        NetworkTopology.from_dict(d)


@pytest.mark.parametrize("field,spec", [
    ("tau_m", DistSpec("gamma", {"shape": 2.0, "scale": -1.0})),
    ("v_th", DistSpec("uniform", {"low": 1.2, "high": 0.8})),
    ("eta_plus", DistSpec("lognormal", {"median": 0.0, "sigma": 1.0})),
    ("tau_plus", DistSpec("weibull", {})),
])
def test_invalid_distribution_names_field(field, spec):
    with pytest.raises(ConfigurationError) as info:
        HeterogeneityConfig(**{field: spec})
    assert info.value.field == field


def test_record_invariants():
    with pytest.raises(ConfigurationError):
        NeuronParams(tau_m=0.0, v_th=1.0)
    with pytest.raises(ConfigurationError):
        NeuronParams(tau_m=10.0, v_th=0.0)
    with pytest.raises(ConfigurationError):
        SynapseParams(weight=1.5)


def test_topology_rejects_self_loops_and_duplicates():
    with pytest.raises(ConfigurationError):
        from_edges(3, [(1, 1)])
    with pytest.raises(ConfigurationError):
        from_edges(3, [(0, 1), (0, 1)])
