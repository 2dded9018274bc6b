# Copyright 2026 the l3sim authors
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

import math
import os
import random

import pytest

import l3sim


def gpt175b():
    m = l3sim.LlmModel()
    m.name = "gpt-175b"
    m.layers = 96
    m.heads = 96
    m.embedding = 12288
    m.precision_bytes = 2
    m.validate()
    return m


def dgx():
    t = l3sim.HwTopology()
    t.validate()
    return t


def test_config_roundtrip_from_repo_file():
    root = os.environ.get("L3SIM_ROOT", os.path.join(os.path.dirname(__file__), "..", ".."))
    cfg = l3sim.load_config(os.path.join(root, "configs", "dgx_a100_gpt175b.toml"))
    assert cfg.model.embedding == 12288
    again = l3sim.config_from_text(cfg.to_text())
    assert again.to_text() == cfg.to_text()


def test_golden_bandwidth_numbers():
    t, d = dgx(), l3sim.DdrTiming()
    pim = l3sim.pim_aggregate_bw(t, d)
    cpu = l3sim.cpu_aggregate_bw(t, d)
    assert pim == pytest.approx(13.1072e12)
    assert cpu == pytest.approx(409.6e9)
    assert pim / cpu >= 30


def test_kv_bytes():
    assert l3sim.kv_bytes_per_token(gpt175b()) == 4_718_592


def test_relayout_round_trip_and_residency():
    rng = random.Random(7)
    beats = [rng.getrandbits(64), rng.getrandbits(64)]
    fwd = l3sim.relayout_group_u64(beats, 16, 8)
    assert l3sim.inverse_relayout_u64(fwd, 16, 8) == beats
    assert l3sim.residency_violations(16, 8, relayouted=True) == 0
    assert l3sim.residency_violations(16, 8, relayouted=False) == 8


def test_score_phase_golden_latency():
    engine = l3sim.PimEngine(gpt175b(), dgx(), l3sim.DdrTiming())
    r = engine.score_phase(16)
    assert r.latency_ns == pytest.approx(33.75)
    assert engine.fused_head(4096).bubble_ns == 0.0


def test_attention_matches_numpy_reference():
    np = pytest.importorskip("numpy")
    engine = l3sim.PimEngine(gpt175b(), dgx(), l3sim.DdrTiming())
    rng = np.random.default_rng(5)
    tokens = 96
    q = rng.normal(0, 0.5, 128)
    k = rng.normal(0, 0.5, (tokens, 128))
    v = rng.normal(0, 0.5, (tokens, 128))
    scores = k @ q
    w = np.exp(scores - scores.max())
    w /= w.sum()
    ref = w @ v
    out = engine.attend(list(q), list(k.flatten()), list(v.flatten()), tokens,
                        l3sim.AccumMode.FP16)
    assert np.max(np.abs(np.asarray(out) - ref)) / np.max(np.abs(ref)) < 1e-2


def test_split_decode_example():
    a, b = l3sim.split_decode([(0, 2000), (1, 3000), (2, 4000), (3, 5000)])
    assert sum(t for _, t in a) == 7000
    assert sum(t for _, t in b) == 7000


def test_small_end_to_end_run():
    cfg = l3sim.SimConfig()
    cfg.model.layers = 8
    cfg.model.heads = 16
    cfg.model.embedding = 2048
    cfg.model.precision_bytes = 2
    cfg.topology.host_capacity = 2 << 30
    cfg.scheduler.oracle_predictors = True
    cfg.validate()
    trace = l3sim.synth_trace(12, 64, 16, 24, 8, seed=3)
    m = l3sim.run_simulation(trace, cfg, policy="l3")
    assert m.completed_requests == 12
    assert m.output_tokens == sum(r.output_len for r in trace.records)
    assert m.throughput_tokens_per_s > 0
    assert math.isfinite(m.tbt_ns.p99)


def test_policy_ordering():
    cfg = l3sim.SimConfig()
    cfg.model = gpt175b()
    cfg.validate()
    hbm = l3sim.policy_decode_mha_ns(l3sim.Policy.HBM_PIM, 16, 6000, cfg)
    gpu = l3sim.policy_decode_mha_ns(l3sim.Policy.GPU_ONLY, 16, 6000, cfg)
    cpu = l3sim.policy_decode_mha_ns(l3sim.Policy.CPU_OFFLOAD, 16, 6000, cfg)
    assert hbm < gpu < cpu
