import json
import math

import numpy as np
import pytest

from reduced_rejection import ssa
from reduced_rejection.errors import ExhaustedSystem, InvalidParams, NegativeCount
from reduced_rejection.rng import RngStream
from reduced_rejection.ssa import Reaction, ReactionNetwork, Simulator, propensity, select_reaction_partial_sum
from reduced_rejection.stats import chi_square_gof, chi_square_two_sample, value_counts, within_sigmas

BACKENDS = ("direct", "ar", "rr")


# ---------------------------------------------------------------- network


def test_propensity_forms():
    assert propensity(Reaction(0.5, ("A",)), {"A": 10}) == 5.0
    assert propensity(Reaction(2.0, ("A", "B")), {"A": 10, "B": 5}) == 100.0
    assert propensity(Reaction(1.0, ("A", "A")), {"A": 1}) == 0.0
    assert propensity(Reaction(1.0, ("A", "A")), {"A": 4}) == 6.0
    assert propensity(Reaction(3.0), {}) == 3.0


def test_reaction_kinds_and_change():
    assert Reaction(1.0).kind == "zeroth"
    assert Reaction(1.0, ("A", "A"), ("B",)).kind == "bimolecular_same"
    assert Reaction(1.0, ("A", "B"), ("A", "C")).change() == {"B": -1, "C": 1}


@pytest.mark.parametrize("r, expected", [(0.2, 0), (0.5, 2), (0.0, 0), (0.999, 2)])
def test_partial_sum_selection(r, expected):
    assert select_reaction_partial_sum([1.0, 0.0, 3.0], r) == expected


def test_partial_sum_edge_cases():
    assert select_reaction_partial_sum([5.0], 0.73) == 0
    with pytest.raises(ExhaustedSystem):
        select_reaction_partial_sum([0.0, 0.0], 0.5)


def test_dependency_graph():
    net = ReactionNetwork(
        ("A", "B", "C"),
        (1, 1, 1),
        (
            Reaction(1.0, ("A",), ("B",)),  # 0 changes A, B
            Reaction(1.0, ("B", "C"), ("C",)),  # 1 changes B
            Reaction(1.0, (), ("C",)),  # 2 changes C
            Reaction(1.0, ("C",), ("C", "C")),  # 3 changes C
        ),
    )
    assert net.dependencies() == [[0, 1], [1], [1, 3], [1, 3]]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"species": ("A", "A"), "initial": (1, 1), "reactions": ()},
        {"species": ("A",), "initial": (1, 2), "reactions": ()},
        {"species": ("A",), "initial": (-1,), "reactions": ()},
        {"species": ("A",), "initial": (1,), "reactions": (Reaction(-1.0, ("A",)),)},
        {"species": ("A",), "initial": (1,), "reactions": (Reaction(1.0, ("A", "A", "A")),)},
        {"species": ("A",), "initial": (1,), "reactions": (Reaction(1.0, ("B",)),)},
    ],
)
def test_network_validation(kwargs):
    with pytest.raises(InvalidParams):
        ReactionNetwork(**kwargs)


def test_json_round_trip(tmp_path):
    data = {
        "species": ["A", "B"],
        "initial": {"A": 5},
        "reactions": [{"rate": 2, "reactants": {"A": 2}, "products": ["B"]}, {"rate": 0.5, "products": "A"}],
    }
    path = tmp_path / "net.json"
    path.write_text(json.dumps(data))
    net = ReactionNetwork.load(path)
    assert net.initial == (5, 0)
    assert net.reactions[0].reactants == ("A", "A")
    assert net.reactions[1].kind == "zeroth"
    assert ReactionNetwork.from_dict(net.to_dict()) == net


@pytest.mark.parametrize(
    "data",
    [
        {"initial": {}},
        {"species": ["A"], "initial": {"B": 1}},
        {"species": ["A"], "reactions": [{"reactants": ["A"]}]},
        {"species": ["A"], "reactions": [{"rate": 1, "reactants": {"A": 1.5}}]},
    ],
)
def test_bad_json(data):
    with pytest.raises(InvalidParams):
        ReactionNetwork.from_dict(data)


def test_invalid_json_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(InvalidParams):
        ReactionNetwork.load(path)


# ---------------------------------------------------------------- selection


@pytest.mark.parametrize("backend", BACKENDS)
def test_selection_distribution_at_frozen_state(backend):
    a = [1.0, 0.0, 3.0, 0.25, 7.5]
    counts, _ = ssa.selection_counts(a, backend, 200_000, RngStream(3))
    assert counts[1] == 0
    assert chi_square_gof(counts, a).passes()


def test_ar_selection_proposals():
    counts, props = ssa.selection_counts([9.0, 1.0], "ar", 200_000, RngStream(4))
    assert chi_square_gof(counts, [9, 1]).passes()
    # M * max(a) / sum(a) = 2 * 9 / 10
    assert props / 200_000 == pytest.approx(1.8, rel=0.01)
    counts, props = ssa.selection_counts([2.0, 2.0], "ar", 1000, RngStream(4))
    assert props == 1000


def test_backends_agree_on_frozen_state():
    a = np.array([4.0, 1.0, 0.5, 9.0, 2.0, 0.0, 3.0])
    d, _ = ssa.selection_counts(a, "direct", 100_000, RngStream(5))
    r, _ = ssa.selection_counts(a, "rr", 100_000, RngStream(6))
    assert chi_square_two_sample(d, r).passes()


def test_rr_selection_tracks_updates():
    net = ReactionNetwork(("A", "B"), (10, 1), (Reaction(1.0, ("A",), ("B",)), Reaction(1.0, ("B",), ("A",))))
    sim = Simulator(net, "rr", RngStream(7))
    sim.step()
    counts = sim.sample_selections(50_000)
    assert chi_square_gof(counts, sim.propensities).passes()


def test_selection_rejects_bad_propensities():
    with pytest.raises(InvalidParams):
        ssa.selection_counts([1.0, -1.0], "direct", 10, RngStream(0))


def test_spread_network_efficiency():
    net = ssa.spread_network()
    out = {}
    for b in ("ar", "rr"):
        sim = Simulator(net, b, RngStream(8))
        sim.sample_selections(50_000)
        out[b] = sim.proposals_total / sim.selections
    assert out["rr"] < out["ar"]
    assert out["ar"] > 10


# ---------------------------------------------------------------- stepping


@pytest.mark.parametrize("backend", BACKENDS)
def test_steps_touch_only_dependent_reactions(backend):
    net = ReactionNetwork(
        ("A", "B", "C", "D"),
        (30, 20, 10, 5),
        (
            Reaction(1.0, ("A",), ("B",)),
            Reaction(0.1, ("A", "B"), ("C",)),
            Reaction(0.05, ("C", "C"), ("D",)),
            Reaction(2.0, ("D",), ("A",)),
            Reaction(0.5, (), ("B",)),
        ),
    )
    sim = Simulator(net, backend, RngStream(9), reinit_threshold=1)
    for _ in range(500):
        sim.step(check=True)
        assert np.all(sim.x >= 0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_absorbing_state(backend):
    net = ReactionNetwork(("A",), (1,), (Reaction(1.0, ("A",)),))
    sim = Simulator(net, backend, RngStream(1))
    j, dt = sim.step()
    assert (j, sim.counts(), sim.a_total) == (0, {"A": 0}, 0.0)
    assert dt > 0
    with pytest.raises(ExhaustedSystem):
        sim.step()


def test_exhausted_trajectory_holds_final_state():
    net = ReactionNetwork(("A",), (3,), (Reaction(1.0, ("A",)),))
    traj = Simulator(net, "rr", RngStream(2)).run_until(1e6, [1.0, 1e6])
    assert traj.exhausted
    assert traj.firings == 3
    assert traj.column("A").tolist()[-1] == 0


def test_empty_network_and_zero_duration():
    empty = ReactionNetwork(("A",), (4,), ())
    sim = Simulator(empty, "direct")
    with pytest.raises(ExhaustedSystem):
        sim.run_until(1.0)
    sim = Simulator(ssa.isomerization(), "direct")
    traj = sim.run_until(0.0)
    assert traj.times.size == 0 and traj.counts.shape == (0, 2)
    with pytest.raises(InvalidParams):
        sim.run_until(-1.0)


def test_negative_count_is_a_model_error():
    # mass action never empties a reactant, so corrupt the compiled
    # state change to consume B, which starts at zero
    net = ReactionNetwork(("A", "B"), (5, 0), (Reaction(1.0, ("A",), ("B",)),))
    sim = Simulator(net, "direct", RngStream(0))
    sim.net = sim.net._replace(nu_sp=np.array([0, 1]), nu_d=np.array([-1, -1]))
    with pytest.raises(NegativeCount):
        sim.step()


@pytest.mark.parametrize("backend", BACKENDS)
def test_run_until_records_sample_times(backend):
    sim = Simulator(ssa.isomerization(), backend, RngStream(3))
    traj = sim.run_until(2.0, [0.5, 1.0, 2.0])
    a = traj.column("A")
    assert np.all(np.diff(a) <= 0)
    assert np.all(traj.counts.sum(axis=1) == 100)
    assert sim.t >= 2.0 or traj.exhausted
    with pytest.raises(InvalidParams):
        sim.run_until(3.0, [2.5, 2.2])


@pytest.mark.parametrize("backend", BACKENDS)
def test_isomerization_mean(backend):
    res = ssa.ensemble(ssa.isomerization(), backend, 1.0, 2000, seed=5)
    xa = res.final("A")
    assert within_sigmas(xa.mean(), 100 * math.exp(-1), xa.std(ddof=1) / math.sqrt(xa.size))


def test_backends_give_equivalent_ensembles():
    runs = {b: ssa.ensemble(ssa.isomerization(), b, 1.0, 2000, seed=k).final("A") for k, b in enumerate(BACKENDS)}
    for a, b in (("direct", "ar"), ("direct", "rr"), ("ar", "rr")):
        assert chi_square_two_sample(*value_counts(runs[a], runs[b])).passes()


def test_birth_death_stationary_mean():
    res = ssa.ensemble(ssa.birth_death(10.0, 1.0), "rr", 20.0, 1000, seed=6)
    xa = res.final("A")
    assert within_sigmas(xa.mean(), 10.0, xa.std(ddof=1) / math.sqrt(xa.size))


def test_ensemble_split_is_reproducible():
    net = ssa.birth_death(5.0, 1.0)
    whole = ssa.ensemble(net, "rr", 3.0, 12, seed=7)
    parts = [ssa.ensemble(net, "rr", 3.0, 12, seed=7, replica_range=r) for r in ((0, 5), (5, 12))]
    merged = ssa.merge(parts)
    assert np.array_equal(whole.counts, merged.counts)
    assert whole.firings == merged.firings


def test_run_steps():
    sim = Simulator(ssa.birth_death(5.0, 1.0), "ar", RngStream(8))
    traj = sim.run_steps(100)
    assert traj.firings == 100 and sim.firings == 100
    with pytest.raises(InvalidParams):
        sim.run_steps(-1)


def test_unknown_backend():
    with pytest.raises(InvalidParams):
        Simulator(ssa.isomerization(), "tau-leap")
