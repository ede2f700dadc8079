# Copyright 2025 The dualnav Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import numpy as np
import pytest
import torch

from dualnav.envs.instruction import MASK_ID, UNK_ID
from dualnav.mapping.geometry import GridSpec, Pose
from dualnav.mapping.grid_mapper import GridMap
from dualnav.mapping.topo_mapper import STOP_NODE_ID, Candidate, TopoGraph
from dualnav.models import DualMapAgent, ModelConfig
from dualnav.models.action_heads import ActionScores, fuse_action, fused_logits, sample_action
from dualnav.models.fusion import (
    FusionHeads,
    broadcast_field,
    cell2node,
    discount_matrix,
    graph_fuse,
    node2cell,
)
from dualnav.trainer.core_algos import compute_mlm_loss, gahp_loss
from dualnav.utils.torch_functional import grad_check


D = 32
TOKENS = [5, 9, 12, 7, 30]


def _agent(**kwargs) -> DualMapAgent:
    torch.manual_seed(0)
    config = ModelConfig(**kwargs)
    config.post_init()
    return DualMapAgent(config)


def _maps(feature_dim: int = D, seed: int = 0) -> tuple[TopoGraph, GridMap]:
    rng = np.random.default_rng(seed)
    candidates = [
        Candidate((2.0, 0.0), 0, rng.normal(size=feature_dim)),
        Candidate((0.0, 3.0), 3, rng.normal(size=feature_dim)),
        Candidate((8.0, 0.0), 0, rng.normal(size=feature_dim)),
    ]
    graph = TopoGraph(feature_dim).update(Pose(0, 0), candidates, rng.normal(size=feature_dim), 0)
    spec = GridSpec()
    features = np.zeros((spec.U, spec.V, feature_dim))
    counts = np.zeros((spec.U, spec.V), dtype=np.int64)
    for cell in [(5, 5), (7, 5), (5, 8)]:
        features[cell] = rng.normal(size=feature_dim)
        counts[cell] = 2

    return graph, GridMap(spec, features, counts, Pose(0, 0), num_points=6)


def _scores(target_ids, graph_scores, grid_ids, grid_scores, gamma) -> ActionScores:
    return ActionScores(
        target_ids=target_ids,
        graph_scores=torch.tensor(graph_scores, dtype=torch.float64),
        grid_ids=grid_ids,
        grid_scores=torch.tensor(grid_scores, dtype=torch.float64),
        gamma=torch.tensor(gamma, dtype=torch.float64),
    )


def test_instruction_embedding():
    encoder = _agent().instruction_encoder
    assert encoder.embed([4]).shape == (1, D)
    torch.testing.assert_close(encoder.embed(TOKENS), encoder.embed(TOKENS), rtol=0, atol=0)

    changed = list(TOKENS)
    changed[2] = 40
    differs = (encoder.embed(TOKENS) != encoder.embed(changed)).any(dim=-1)
    assert differs.tolist() == [False, False, True, False, False]


def test_unknown_tokens_map_to_unk():
    encoder = _agent().instruction_encoder
    torch.testing.assert_close(encoder.embed([10**6, -3]), encoder.embed([UNK_ID, UNK_ID]))
    with pytest.raises(ValueError):
        encoder.embed([])

    with pytest.raises(ValueError):
        encoder.embed([4] * 25)


def test_attention_rows_are_distributions():
    agent = _agent()
    graph, grid = _maps()
    with torch.no_grad():
        encoding = agent.encode(TOKENS, graph, grid, neighborhood_radius=3.0)

    for name, weights in encoding.attention.items():
        assert len(weights) > 0, name
        for layer in weights:
            for attn in (layer.self_attn, layer.cross_attn):
                if attn is None:
                    continue

                assert torch.all(attn >= 0)
                torch.testing.assert_close(attn.sum(dim=-1), torch.ones(attn.shape[:-1]), atol=1e-6, rtol=0)

    assert torch.isfinite(encoding.aligned_graph).all()
    assert encoding.fused_grid.shape == (11, 11, D)


def test_single_stop_node_graph():
    agent = _agent()
    graph = TopoGraph(D)
    with torch.no_grad():
        instruction, _ = agent.instruction_encoder(TOKENS)
        embeddings = torch.randn(1, D)
        hops = torch.as_tensor(graph.hop_distances(max_hops=4))
        output, _ = agent.topology_encoder(embeddings, hops, instruction)

    assert len(graph) == 1
    assert output.shape == (1, D)


def test_topology_encoder_permutation_equivariance():
    agent = _agent(dtype="fp64")
    generator = torch.Generator().manual_seed(1)
    embeddings = torch.randn(5, D, generator=generator, dtype=torch.float64)
    hops = torch.randint(0, 5, (5, 5), generator=generator)
    hops = torch.minimum(hops, hops.T).fill_diagonal_(0)
    perm = torch.tensor([3, 0, 4, 1, 2])
    with torch.no_grad():
        instruction, _ = agent.instruction_encoder(TOKENS)
        output, _ = agent.topology_encoder(embeddings, hops, instruction)
        permuted, _ = agent.topology_encoder(embeddings[perm], hops[perm][:, perm], instruction)

    torch.testing.assert_close(permuted, output[perm], atol=1e-10, rtol=0)


def test_zeroed_layers_pass_embeddings_through():
    agent = _agent()
    for layer in [*agent.topology_encoder.layers, *agent.grid_encoder.layers]:
        layer.zero_residual_branches()

    graph, _ = _maps()
    with torch.no_grad():
        instruction, _ = agent.instruction_encoder(TOKENS)
        embeddings = torch.randn(len(graph), D)
        hops = torch.as_tensor(graph.hop_distances(max_hops=4))
        output, _ = agent.topology_encoder(embeddings, hops, instruction)
        cells, _ = agent.grid_encoder(torch.zeros(11, 11, D), instruction)

    torch.testing.assert_close(output, embeddings, rtol=0, atol=0)
    torch.testing.assert_close(cells.reshape(-1, D), agent.grid_encoder.cell_position, rtol=0, atol=0)


def test_grid_encoder_breaks_rotation_symmetry():
    agent = _agent()
    _, grid = _maps()
    features = torch.as_tensor(grid.features, dtype=torch.float32)
    with torch.no_grad():
        instruction, _ = agent.instruction_encoder(TOKENS)
        output, _ = agent.grid_encoder(features, instruction)
        rotated, _ = agent.grid_encoder(torch.rot90(features, 1, dims=(0, 1)), instruction)

    assert output.shape == (11, 11, D)
    assert not torch.allclose(torch.rot90(output, 1, dims=(0, 1)), rotated)
    with pytest.raises(ValueError):
        agent.grid_encoder(torch.zeros(9, 9, D), instruction)


def test_discount_matrix():
    spec = GridSpec(U=3, V=3)
    values = discount_matrix((1, 1), spec)
    edge = (np.sqrt(2) - 1) / np.sqrt(2)
    expected = np.array([[0.0, edge, 0.0], [edge, 1.0, edge], [0.0, edge, 0.0]])
    np.testing.assert_allclose(values, expected, atol=1e-12)

    values = discount_matrix((0, 0), GridSpec())
    assert values[0, 0] == 1.0
    assert values[10, 10] == 0.0
    assert values.min() >= 0 and values.max() <= 1
    assert np.count_nonzero(values == 1.0) == 1
    with pytest.raises(ValueError):
        discount_matrix((11, 0), GridSpec())


def test_cell2node():
    spec = GridSpec()
    features = np.zeros((11, 11, 2))
    counts = np.zeros((11, 11), dtype=np.int64)
    features[5, 5], counts[5, 5] = [1.0, 0.0], 3
    features[6, 4], counts[6, 4] = [0.0, 1.0], 1
    grid = GridMap(spec, features, counts, Pose(0, 0), num_points=4)
    candidates = [Candidate((1.5, -0.5), 0, np.ones(2)), Candidate((8.0, 0.0), 0, np.ones(2))]
    graph = TopoGraph(2).update(Pose(0, 0), candidates, np.ones(2), 0)

    result = cell2node(grid, graph)
    by_id = dict(zip(result.node_ids, result.features))
    near, far = graph.current_candidates
    np.testing.assert_array_equal(by_id[graph.current_id], [0.5, 0.5])
    np.testing.assert_array_equal(by_id[near], [0.0, 1.0])
    np.testing.assert_array_equal(by_id[far], [0.0, 0.0])
    np.testing.assert_array_equal(by_id[STOP_NODE_ID], [0.0, 0.0])
    assert result.num_outside == 1
    assert not result.empty_grid


def test_cell2node_empty_grid(caplog):
    graph, _ = _maps(feature_dim=3)
    result = cell2node(GridMap.empty(GridSpec(), 3, Pose(0, 0)), graph)
    assert result.empty_grid
    assert not result.features.any()
    assert "empty" in caplog.text


def test_graph_fuse():
    heads = FusionHeads(3)
    generator = torch.Generator().manual_seed(0)
    g_prime, g = torch.randn(4, 3, generator=generator), torch.randn(4, 3, generator=generator)
    eye, zero = torch.eye(3), torch.zeros(3, 3)
    with torch.no_grad():
        heads.graph_fusion.bias.zero_()
        heads.graph_fusion.weight.copy_(torch.cat([eye, zero], dim=1))
        torch.testing.assert_close(graph_fuse(g_prime, g, heads), g_prime, rtol=0, atol=0)

        heads.graph_fusion.weight.copy_(torch.cat([zero, eye], dim=1))
        assert torch.equal(graph_fuse(g_prime, g, heads), g)

        heads.graph_fusion.weight.copy_(torch.cat([eye, eye], dim=1))
        torch.testing.assert_close(graph_fuse(-g, g, heads), torch.zeros(4, 3), rtol=0, atol=0)

    with pytest.raises(ValueError):
        graph_fuse(g_prime, g, heads, prime_ids=[0, 1, 2, 3], node_ids=[0, 1, 2, 4])


def test_broadcast_field():
    spec = GridSpec(U=3, V=3)
    f = torch.tensor([[1.0, -2.0]], dtype=torch.float64)
    field, excluded = broadcast_field(f, [(1, 1)], spec)
    assert excluded == 0
    torch.testing.assert_close(field[1, 1], f[0])
    torch.testing.assert_close(field[0, 0], torch.zeros(2, dtype=torch.float64))

    field, _ = broadcast_field(torch.cat([f, -f]), [(0, 2), (0, 2)], spec)
    assert not field.any()

    field, _ = broadcast_field(torch.cat([f, 2 * f]), [(0, 0), (2, 1)], spec)
    scaled, _ = broadcast_field(3.5 * torch.cat([f, 2 * f]), [(0, 0), (2, 1)], spec)
    torch.testing.assert_close(scaled, 3.5 * field)


def test_node2cell(caplog):
    spec = GridSpec()
    heads = FusionHeads(4)
    with torch.no_grad():
        heads.map_fusion.bias.zero_()
        heads.map_fusion.weight.copy_(torch.cat([torch.zeros(4, 4), torch.eye(4)], dim=1))

    m_tilde = torch.randn(11, 11, 4)
    fused, excluded = node2cell(torch.zeros(0, 4), [], m_tilde, heads, spec)
    assert excluded == 0
    assert torch.equal(fused, m_tilde)

    _, excluded = node2cell(torch.ones(2, 4), [(5, 5), None], m_tilde, heads, spec)
    assert excluded == 1
    assert "excluded" in caplog.text


def test_map_fusion_switch():
    graph, grid = _maps()
    fused_agent = _agent()
    plain_agent = _agent(use_map_fusion=False)
    with torch.no_grad():
        encoding = fused_agent.encode(TOKENS, graph, grid, neighborhood_radius=3.0)
        plain = plain_agent.encode(TOKENS, graph, grid, neighborhood_radius=3.0)

    assert encoding.num_outside == 1
    assert plain.num_outside == 0
    assert not torch.equal(encoding.fused_grid, plain.fused_grid)

    heads = FusionHeads(D)
    with torch.no_grad():
        heads.graph_fusion.bias.zero_()
        heads.graph_fusion.weight.copy_(torch.cat([torch.zeros(D, D), torch.eye(D)], dim=1))

    node_features = torch.as_tensor(graph.features(), dtype=torch.float32)
    intermediate = torch.as_tensor(cell2node(grid, graph).features, dtype=torch.float32)
    assert torch.equal(graph_fuse(intermediate, node_features, heads), node_features)


def test_predict_actions():
    agent = _agent()
    graph, grid = _maps()
    with torch.no_grad():
        encoding = agent.encode(TOKENS, graph, grid, neighborhood_radius=3.0)
        scores = agent.actions(encoding, graph)

    near, side, far = graph.current_candidates
    assert scores.target_ids == [STOP_NODE_ID, near, side, far]
    assert scores.graph_scores.shape == (4,)
    assert scores.grid_ids == [near, side]
    assert 0.0 <= scores.gamma.item() <= 1.0

    for parameter in agent.action_heads.parameters():
        torch.nn.init.zeros_(parameter)

    with torch.no_grad():
        scores = agent.actions(encoding, graph)

    assert not scores.graph_scores.any()
    assert not scores.grid_scores.any()
    assert scores.gamma.item() == 0.5


def test_fuse_action_tie_goes_to_lower_id():
    scores = _scores([0, 1, 2], [0.0, 2.0, 0.0], [1, 2], [0.0, 2.0], 0.5)
    torch.testing.assert_close(fused_logits(scores), torch.tensor([0.0, 1.0, 1.0], dtype=torch.float64))
    assert fuse_action(scores, [1, 2]) == 1


@pytest.mark.parametrize("gamma", [0.0, 0.3, 0.5, 1.0])
def test_fuse_action_backtracks_to_historical_node(gamma: float):
    scores = _scores([0, 1, 2, 3], [0.0, 5.0, 1.0, 0.0], [2, 3], [100.0, 50.0], gamma)
    assert fuse_action(scores, [2, 3]) == 1


def test_fuse_action_gamma_extremes():
    scores = _scores([0, 1, 2], [0.0, 1.0, 3.0], [1, 2], [10.0, -10.0], 1.0)
    assert fuse_action(scores, [1, 2]) == 2
    scores.gamma = torch.tensor(0.0, dtype=torch.float64)
    assert fuse_action(scores, [1, 2]) == 1
    assert fuse_action(scores, [1, 2], expert="topo") == 2
    scores.gamma = torch.tensor(1.0, dtype=torch.float64)
    assert fuse_action(scores, [1, 2], expert="grid") == 1
    with pytest.raises(NotImplementedError):
        fused_logits(scores, expert="mixed")


def test_sample_action_frequencies():
    scores = _scores([0, 4], [0.0, float(np.log(3.0))], [], [], 0.5)
    generator = torch.Generator().manual_seed(0)
    draws = [sample_action(scores, generator) for _ in range(4000)]
    assert abs(draws.count(4) / len(draws) - 0.75) < 0.03


HEAD_PREFIXES = {
    "heatmap": ("heatmap_head.",),
    "action": ("action_heads.",),
    "mlm": ("mlm_layer.", "mlm_norm.", "mlm_head."),
}


def _head_loss(agent: DualMapAgent, head: str, graph: TopoGraph, grid: GridMap) -> torch.Tensor:
    if head == "mlm":
        masked = list(TOKENS)
        masked[2] = MASK_ID
        encoding = agent.encode(masked, graph, grid, neighborhood_radius=3.0)
        return compute_mlm_loss(agent.mlm_logits(encoding), TOKENS, [2])

    encoding = agent.encode(TOKENS, graph, grid, neighborhood_radius=3.0)
    if head == "heatmap":
        predicted = agent.heatmap(encoding)
        target = torch.linspace(0.0, 1.0, predicted.numel(), dtype=predicted.dtype).reshape_as(predicted)
        return gahp_loss([predicted], [target])

    return -torch.log_softmax(fused_logits(agent.actions(encoding, graph)), dim=-1)[1]


@pytest.mark.parametrize("head", ["heatmap", "action", "mlm"])
def test_full_pipeline_gradient_check(head: str):
    agent = _agent(dtype="fp64")
    graph, grid = _maps()
    other_heads = tuple(p for name, prefixes in HEAD_PREFIXES.items() if name != head for p in prefixes)
    pipeline = {name: p for name, p in agent.named_parameters() if not name.startswith(other_heads)}
    own = {name: p for name, p in pipeline.items() if name.startswith(HEAD_PREFIXES[head])}
    assert own

    for seed, params in enumerate([pipeline, own]):
        rng = np.random.default_rng(seed)
        result = grad_check(lambda: _head_loss(agent, head, graph, grid), params, num_samples=20, rng=rng)
        assert result.num_samples == 20
        assert result.passed(1e-4), result
