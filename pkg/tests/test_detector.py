import math
from dataclasses import replace

import pytest

import numpy as np
import gadguard as gg
from gadguard import detector as dt
from gadguard.nn import MlpSpec, init_mlp
from gadguard.tensor import DimensionError, TensorNode

from .utils.gradcheck import assert_gradients, offset_biases


def test_config_defaults():
    config = gg.DetectorConfig()
    assert config.embed_dim == 64 and config.hidden == 64
    assert (config.lambda1, config.lambda2) == (0.8, 0.2)
    assert config.backbone is gg.nn.BackboneKind.GAT
    assert config.cons_floor == math.e
    assert gg.DetectorConfig(backbone='SAGE').backbone is gg.nn.BackboneKind.SAGE


invalid_configs = {
    "lambda1 > 1": dict(lambda1=1.5),
    "lambda1 < 0": dict(lambda1=-0.1),
    "lambda2 < 0": dict(lambda2=-1),
    "floor": dict(cons_floor=0),
    "readout": dict(readout='sum'),
    "arch": dict(arch='twin'),
    "backbone": dict(backbone='mlp'),
    "reduction": dict(correlation_reduction='rows'),
    "dim": dict(embed_dim=0),
    "nothing left": dict(use_attr_recon=False, use_topo_recon=False, use_cons_align=False),
    "nothing left separated": dict(arch='separated', use_attr_recon=False,
                                   use_topo_recon=False),
}


@pytest.mark.parametrize("kwargs", invalid_configs.values(), ids=list(invalid_configs.keys()))
def test_config_validation(kwargs):
    with pytest.raises(gg.ConfigError):
        gg.DetectorConfig(**kwargs)


def test_ablate():
    config = gg.DetectorConfig().ablate("tr, CA")
    assert not config.use_topo_recon and not config.use_cons_align
    assert config.use_attr_recon and config.use_correlation_constraint
    assert gg.DetectorConfig().ablate(['cc']).uses_correlation is False

    with pytest.raises(gg.ConfigError) as excinfo:
        gg.DetectorConfig().ablate("xy")
    assert "ar, tr, ca, cc" in str(excinfo.value)


def test_config_dict_round_trip():
    config = gg.DetectorConfig(embed_dim=16, backbone='gin', readout='attention', arch='shared')
    d = config.to_dict()
    assert d['backbone'] == 'gin'
    assert gg.DetectorConfig.from_dict(d) == config
    with pytest.raises(gg.ConfigError):
        gg.DetectorConfig.from_dict(dict(d, dropout=0.5))


def test_variant_properties():
    assert not gg.DetectorConfig(arch='separated').uses_cons_align
    assert not gg.DetectorConfig(arch='shared').uses_correlation
    assert gg.DetectorConfig(arch='shared').uses_cons_align


def test_a_cor_properties():
    rng = np.random.default_rng(0)
    for _ in range(200):
        shape = tuple(rng.integers(2, 7, size=2))
        m = TensorNode(rng.normal(size=shape))
        other = TensorNode(rng.normal(size=shape))
        for reduction in ('flatten', 'columns'):
            assert 0 <= gg.a_cor(m, other, reduction).item() <= 1 + 1e-12
            assert gg.a_cor(m, m, reduction).item() == pytest.approx(1, abs=1e-9)
            for c in (-3, 0.5):
                assert gg.a_cor(m, c * m, reduction).item() == pytest.approx(1, abs=1e-9)

        h_a, h_t = TensorNode(rng.normal(size=shape)), TensorNode(rng.normal(size=shape))
        assert 0 <= gg.correlation_constraint(h_a, h_t, m).item() <= 3


def test_a_cor_constant_input():
    m = TensorNode(np.ones((3, 2)))
    other = TensorNode(np.random.default_rng(1).normal(size=(3, 2)))
    assert gg.a_cor(m, other).item() == 0
    assert gg.a_cor(m, other, 'columns').item() == 0


def test_a_cor_scalar_loop():
    p, q = [1.0, 2.0, 3.0, 4.0], [1.0, 1.0, 2.0, 5.0]
    mp, mq = sum(p) / 4, sum(q) / 4
    cov = sum((a - mp) * (b - mq) for a, b in zip(p, q))
    var_p = sum((a - mp)**2 for a in p)
    var_q = sum((b - mq)**2 for b in q)
    expected = abs(cov) / math.sqrt(var_p * var_q)
    assert expected == pytest.approx(6.5 / math.sqrt(53.75))

    value = gg.a_cor([[1.0, 2.0], [3.0, 4.0]], [[1.0, 1.0], [2.0, 5.0]]).item()
    assert value == pytest.approx(expected, abs=1e-12)


def test_a_cor_errors():
    with pytest.raises(DimensionError):
        gg.a_cor(np.ones((3, 2)), np.ones((2, 3)))
    with pytest.raises(DimensionError):
        gg.a_cor(np.ones((1, 1)), np.ones((1, 1)))
    with pytest.raises(gg.ConfigError):
        gg.a_cor(np.ones((3, 2)), np.ones((3, 2)), 'rows')


def test_a_cor_gradient(rng):
    p = TensorNode(rng.normal(size=(6, 3)), requires_grad=True)
    q = TensorNode(rng.normal(size=(6, 3)), requires_grad=True)
    for reduction in ('flatten', 'columns'):
        assert_gradients(lambda: gg.a_cor(p, q, reduction), [p, q])


def test_adaptive_cache(rng):
    params = gg.ModelParams()
    spec = MlpSpec.chain([8, 4, 2])
    layers = init_mlp(params, 'cache', spec, rng)
    h1, h2 = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
    z, gates = gg.adaptive_cache(h1, h2, spec, layers)
    assert gates.shape == (5, 2)
    assert np.all(np.abs(gates.values) <= 1)
    w = gates.values
    assert pytest.fuzzy_equal(z, w[:, :1] * h1 + w[:, 1:] * h2, rtol=1e-12)

    with pytest.raises(DimensionError):
        gg.adaptive_cache(h1, h2[:, :3], spec, layers)


def test_reconstruct_topology():
    z = TensorNode([[1.0, 0.0], [0.0, 1.0]])
    a_hat, loss = gg.reconstruct_topology(z, [[0.0, 1.0], [1.0, 0.0]])
    assert a_hat.values.tolist() == [[1.0, 0.0], [0.0, 1.0]]
    assert loss.item() == 4.0


def test_readouts():
    h = TensorNode([[1.0, 4.0], [3.0, 0.0], [2.0, 2.0]])
    assert gg.readout(h, 'mean').values.tolist() == [[2.0, 2.0]]
    assert gg.readout(h, 'min').values.tolist() == [[1.0, 0.0]]
    assert gg.readout(h, 'max').values.tolist() == [[3.0, 4.0]]

    with pytest.raises(gg.ConfigError):
        gg.readout(h, 'attention')
    with pytest.raises(gg.ConfigError):
        gg.readout(h, 'median')


def test_attention_readout_is_convex(rng):
    params = gg.ModelParams()
    spec = MlpSpec.chain([2, 2, 1])
    layers = init_mlp(params, 'readout', spec, rng)
    h = TensorNode(rng.normal(size=(6, 2)))
    e_g = gg.readout(h, 'attention', spec, layers).values[0]
    assert np.all(e_g >= h.values.min(axis=0)) and np.all(e_g <= h.values.max(axis=0))

    # constant scores give the mean
    for p in params:
        params[p].values = np.zeros(params[p].shape)
    e_mean = gg.readout(h, 'attention', spec, layers)
    assert pytest.fuzzy_equal(e_mean, gg.readout(h, 'mean'), rtol=1e-12)


def test_consistency_alignment_floor(rng):
    for kind in ('mean', 'min', 'max'):
        h = rng.normal(size=(7, 3))
        e_g, loss = gg.consistency_alignment(h, kind)
        spread = np.sum((h - e_g.values)**2)
        assert loss.item() == pytest.approx(np.log(np.sqrt(spread) + math.e))
        assert loss.item() >= 1 - 1e-9


def test_combine_losses():
    parts = dict(attr=2.0, topo=10.0, cons=1.5, cc=0.3)
    assert gg.combine_losses(parts, gg.DetectorConfig()) == pytest.approx(
        0.8 * 2 + 0.2 * 10 + 0.2 * 1.5 + 0.3)
    assert gg.combine_losses(parts, gg.DetectorConfig().ablate('tr,cc')) == pytest.approx(
        0.8 * 2 + 0.2 * 1.5)
    assert gg.combine_losses(parts, gg.DetectorConfig(arch='shared')) == pytest.approx(
        0.8 * 2 + 0.2 * 10 + 0.2 * 1.5)


def test_forward_artifacts(tiny_graph):
    config = gg.DetectorConfig(embed_dim=4)
    detector = gg.Detector.for_graph(tiny_graph, config, seed=1)
    loss, artifacts = detector.forward(tiny_graph)

    assert artifacts.h_a.shape == artifacts.h_t.shape == artifacts.h_c.shape == (8, 4)
    assert artifacts.x_hat.shape == (8, 5) and artifacts.a_hat.shape == (8, 8)
    assert artifacts.e_g.shape == (1, 4)
    assert set(artifacts.gates) == {'attr', 'topo'}
    assert artifacts.gates['attr'].shape == (8, 2)
    assert loss.item() == artifacts.losses['total']
    assert artifacts.losses['total'] == pytest.approx(gg.total_loss(artifacts, config))
    assert artifacts.losses['cons'] >= 1 - 1e-9
    assert 0 <= artifacts.losses['cc'] <= 3

    scores = artifacts.scores
    assert scores.shape == (8,) and np.all(np.isfinite(scores))
    attr = np.sum((tiny_graph.attributes - artifacts.x_hat)**2, axis=1)
    topo = np.sum((tiny_graph.adjacency - artifacts.a_hat)**2, axis=1)
    cons = np.log(np.linalg.norm(artifacts.h_c - artifacts.e_g, axis=1) + math.e)
    assert pytest.fuzzy_equal(scores, 0.8 * attr + 0.2 * topo + 0.2 * cons, rtol=1e-12)


def test_ablated_terms_are_computed_but_excluded(tiny_graph):
    config = gg.DetectorConfig(embed_dim=4).ablate('tr,cc')
    _, artifacts = gg.Detector.for_graph(tiny_graph, config).forward(tiny_graph)
    losses = artifacts.losses
    assert losses['topo'] > 0 and losses['cc'] > 0
    assert losses['total'] == pytest.approx(0.8 * losses['attr'] + 0.2 * losses['cons'])

    attr = np.sum((tiny_graph.attributes - artifacts.x_hat)**2, axis=1)
    cons = np.log(np.linalg.norm(artifacts.h_c - artifacts.e_g, axis=1) + math.e)
    assert pytest.fuzzy_equal(artifacts.scores, 0.8 * attr + 0.2 * cons, rtol=1e-12)


def test_shared_and_separated(tiny_graph):
    shared = gg.Detector.for_graph(tiny_graph, gg.DetectorConfig(embed_dim=4, arch='shared'))
    assert not any(name.startswith(('attr_encoder', 'topo_encoder', 'attr_cache'))
                   for name in shared.params)
    _, artifacts = shared.forward(tiny_graph)
    assert np.array_equal(artifacts.h_a, artifacts.h_c)
    assert np.array_equal(artifacts.z_t, artifacts.h_c)
    assert artifacts.losses['cc'] == 0 and artifacts.gates == {}

    separated = gg.Detector.for_graph(tiny_graph,
                                      gg.DetectorConfig(embed_dim=4, arch='separated'))
    assert separated.encoder is None
    _, artifacts = separated.forward(tiny_graph)
    assert artifacts.h_c is None and artifacts.e_g is None
    assert artifacts.losses['cons'] == 0
    assert 0 < artifacts.losses['cc'] <= 1
    assert np.array_equal(artifacts.z_a, artifacts.h_a)


detector_variants = {
    "full-gat": dict(),
    "full-gcn-attention": dict(backbone='gcn', readout='attention'),
    "full-sage-columns": dict(backbone='sage', correlation_reduction='columns'),
    "full-gin": dict(backbone='gin'),
    "shared": dict(arch='shared'),
    "separated": dict(arch='separated'),
}


@pytest.mark.parametrize("kwargs", detector_variants.values(),
                         ids=list(detector_variants.keys()))
def test_joint_loss_gradients(kwargs, tiny_graph, rng):
    detector = gg.Detector.for_graph(tiny_graph, gg.DetectorConfig(embed_dim=4, **kwargs),
                                     seed=2)
    offset_biases(detector.params, rng)
    tensors = [t for _, t in detector.params.items()]
    assert_gradients(lambda: detector.forward(tiny_graph)[0], tensors)


def test_detector_graph_mismatch(tiny_graph, small_graph):
    detector = gg.Detector.for_graph(tiny_graph, gg.DetectorConfig(embed_dim=4))
    with pytest.raises(DimensionError) as excinfo:
        detector.scores(small_graph)
    assert "n=8, d=5" in str(excinfo.value)


def test_training_reduces_loss(planted, small_config):
    g, _ = planted
    detector, artifacts, history = gg.train(g, small_config, epochs=60, seed=0)
    assert len(history) == 60
    assert history.total[-1] < history.total[0]
    assert artifacts.scores.shape == (g.n,)
    assert pytest.fuzzy_equal(detector.scores(g), artifacts.scores, rtol=1e-12)


def test_training_is_deterministic(planted, small_config):
    g, _ = planted
    _, a, history_a = gg.train(g, small_config, epochs=10, seed=5)
    _, b, history_b = gg.train(g, small_config, epochs=10, seed=5)
    _, c, _ = gg.train(g, small_config, epochs=10, seed=6)
    assert np.array_equal(a.scores, b.scores)
    assert pytest.fuzzy_equal(history_a, history_b)
    assert not np.array_equal(a.scores, c.scores)


def test_training_error_keeps_history(tiny_graph):
    detector = gg.Detector.for_graph(tiny_graph, gg.DetectorConfig(embed_dim=4))
    name = detector.params.names[0]
    detector.params[name].values = np.full(detector.params[name].shape, np.nan)
    with pytest.raises(gg.TrainingError) as excinfo:
        detector.fit(tiny_graph, epochs=5)
    assert "epoch 0" in str(excinfo.value)
    assert len(excinfo.value.history) == 1

    with pytest.raises(gg.ConfigError):
        detector.fit(tiny_graph, epochs=0)


def test_checkpoint_round_trip(planted, tmp_path):
    g, _ = planted
    config = gg.DetectorConfig(embed_dim=8, backbone='sage', readout='attention')
    detector, artifacts, _ = gg.train(g, config, epochs=5, seed=3)

    path = gg.save_checkpoint(detector, tmp_path / "model")
    assert path.endswith(".json.gz")
    loaded = gg.load_checkpoint(tmp_path / "model")
    assert loaded.config == config and loaded.seed == 3
    assert pytest.fuzzy_equal(loaded.params, detector.params, rtol=0, atol=0)
    assert pytest.fuzzy_equal(loaded.scores(g), artifacts.scores, rtol=0, atol=1e-9)


def test_checkpoint_errors(tiny_graph, tmp_path):
    bad = tmp_path / "bad.json.gz"
    bad.write_text("not gzip")
    with pytest.raises(gg.FormatError):
        gg.load_checkpoint(bad)

    from gadguard.support import checkpoint
    checkpoint.save(dict(version=dt.CHECKPOINT_VERSION + 1), tmp_path / "future.json.gz")
    with pytest.raises(gg.FormatError) as excinfo:
        gg.load_checkpoint(tmp_path / "future.json.gz")
    assert "v{}".format(dt.CHECKPOINT_VERSION + 1) in str(excinfo.value)

    checkpoint.save(dict(version=dt.CHECKPOINT_VERSION, n=8), tmp_path / "partial.json.gz")
    with pytest.raises(gg.FormatError) as excinfo:
        gg.load_checkpoint(tmp_path / "partial.json.gz")
    assert "malformed" in str(excinfo.value)


@pytest.mark.slow
def test_loss_descent_protocol():
    """Final loss is below 90% of the initial loss for each of five seeds"""
    g = gg.synth_base_graph(200, 16, 6, 4, np.random.default_rng(0))
    for seed in range(5):
        _, _, history = gg.train(g, gg.DetectorConfig(), epochs=100, learning_rate=5e-3,
                                 seed=seed)
        assert history.total[-1] < 0.9 * history.total[0]


@pytest.mark.parametrize("readout", ['mean', 'attention'])
def test_scores_follow_node_relabeling(readout, planted):
    """Relabeling nodes, with the topology encoder columns relabeled alike, permutes scores"""
    g, _ = planted
    detector, artifacts, _ = gg.train(g, gg.DetectorConfig(embed_dim=8, readout=readout),
                                      epochs=5, seed=1)
    order = np.random.default_rng(9).permutation(g.n)

    state = detector.state_dict()
    state['topo_encoder.0.weight'] = state['topo_encoder.0.weight'][:, order]
    relabeled = gg.Detector.for_graph(g, detector.config)
    relabeled.load_state_dict(state)

    scores = relabeled.scores(g.permuted(order))
    assert pytest.fuzzy_equal(scores, artifacts.scores[order], rtol=1e-9, atol=1e-9)


def test_scores_ignore_attributes_without_ar(planted):
    g, _ = planted
    config = gg.DetectorConfig(embed_dim=8).ablate('ar')
    _, artifacts, _ = gg.train(g, config, epochs=3, seed=0)
    noisy = replace(artifacts, x_hat=artifacts.x_hat + np.random.default_rng(0).normal(
        size=artifacts.x_hat.shape))
    assert np.array_equal(gg.anomaly_scores(g, noisy, config),
                          gg.anomaly_scores(g, artifacts, config))

    full = gg.DetectorConfig(embed_dim=8)
    assert not np.array_equal(gg.anomaly_scores(g, noisy, full),
                              gg.anomaly_scores(g, artifacts, full))
