"""Network construction, merging, serialization, and census tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msthar.model import (
    DEFAULT_BRANCH_WIDTHS,
    DEFAULT_PAIR_WIDTHS,
    Classifier,
    ClassifierSpec,
    CnnBaseSpec,
    MergedNetwork,
    BranchGroup,
    ModelFormatError,
    ResidualBlockSpec,
    allocate_widths,
    attach_classifier,
    build_base,
    count_parameters,
    default_1d_spec,
    default_2d_spec,
    deserialize_network,
    freeze_base,
    freeze_network,
    is_fully_frozen,
    merge_combined,
    merge_pair,
    serialize_network,
    strip_classifier,
    tensor_hashes,
)
from msthar.tensor import ShapeError


def _rng(seed=0):
    return np.random.default_rng(seed)


def _small_1d_spec(channels=3, length=32, filters=(4, 8)):
    return CnnBaseSpec((channels, length),
                       tuple(ResidualBlockSpec(3, f, 2, 1) for f in filters))


def _small_2d_spec(channels=2, side=16, filters=(4, 8)):
    return CnnBaseSpec((channels, side, side),
                       tuple(ResidualBlockSpec(3, f, 2, 2) for f in filters))


class TestBuildBase:
    def test_default_1d_spec_gives_256_features(self):
        base = build_base(default_1d_spec(9, 128), _rng())
        out = base.forward(np.zeros((2, 9, 128)))
        assert out.shape == (2, 256)

    def test_same_seed_builds_bit_identical_weights(self):
        a = build_base(_small_1d_spec(), _rng(5))
        b = build_base(_small_1d_spec(), _rng(5))
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb and pa.data.tobytes() == pb.data.tobytes()

    def test_dims_mismatch_reports_block_index(self):
        blocks = (ResidualBlockSpec(3, 4, 1, 1), ResidualBlockSpec(3, 8, 1, 2))
        with pytest.raises(ShapeError, match="block 1"):
            CnnBaseSpec((3, 32), blocks)

    def test_wrong_channel_count_rejected_at_forward(self):
        base = build_base(_small_1d_spec(channels=3), _rng())
        with pytest.raises(ShapeError, match="channels"):
            base.forward(np.zeros((1, 5, 32)))

    def test_empty_blocks_rejected(self):
        with pytest.raises(ValueError):
            CnnBaseSpec((3, 32), ())


@st.composite
def random_base_specs(draw):
    dims = draw(st.integers(1, 2))
    n_blocks = draw(st.integers(1, 3))
    filters = draw(st.lists(st.integers(1, 8), min_size=n_blocks, max_size=n_blocks))
    kernel = draw(st.integers(1, 5))
    stride = draw(st.integers(1, 3))
    channels = draw(st.integers(1, 3))
    if dims == 1:
        shape = (channels, draw(st.integers(8, 20)))
    else:
        shape = (channels, draw(st.integers(6, 12)), draw(st.integers(6, 12)))
    blocks = tuple(ResidualBlockSpec(kernel, f, stride, dims) for f in filters)
    return CnnBaseSpec(shape, blocks)


@given(random_base_specs())
@settings(max_examples=40, deadline=None)
def test_shape_law_forward_matches_declared_feature_dim(spec):
    base = build_base(spec, _rng(1))
    out = base.forward(np.zeros((2, *spec.input_shape)))
    assert out.shape == (2, spec.feature_dim)


class TestClassifierAttachment:
    def test_six_class_head_outputs_six_probabilities(self):
        net = attach_classifier(build_base(_small_1d_spec(), _rng()),
                                ClassifierSpec((16, 6)), _rng())
        out = net.forward(np.zeros((3, 3, 32)))
        assert out.shape == (3, 6)
        assert np.abs(out.data.sum(axis=1) - 1.0).max() <= 1e-12

    def test_untrained_network_is_near_uniform(self):
        rng = _rng(2)
        net = attach_classifier(build_base(_small_1d_spec(), rng),
                                ClassifierSpec((16, 5)), rng)
        probs = net.forward(rng.normal(size=(100, 3, 32))).data
        entropy = -(probs * np.log(probs)).sum(axis=1).mean()
        assert entropy > 0.9 * np.log(5)

    def test_strip_returns_same_base_object(self):
        base = build_base(_small_1d_spec(), _rng())
        net = attach_classifier(base, ClassifierSpec((8, 4)), _rng())
        stripped = strip_classifier(net)
        assert stripped is base
        x = _rng(3).normal(size=(2, 3, 32))
        assert np.array_equal(stripped.forward(x).data, base.forward(x).data)

    def test_strip_twice_is_an_error(self):
        net = attach_classifier(build_base(_small_1d_spec(), _rng()),
                                ClassifierSpec((8, 4)), _rng())
        base = strip_classifier(net)
        with pytest.raises(TypeError):
            strip_classifier(base)

    def test_classifier_last_width_is_class_count(self):
        spec = ClassifierSpec((32, 7))
        assert spec.n_classes == 7


class TestFreezing:
    def test_freeze_marks_everything_non_trainable(self):
        base = freeze_base(build_base(_small_1d_spec(), _rng()))
        assert is_fully_frozen(base)
        assert count_parameters(base)[0] == 0

    def test_freeze_is_required_for_merging(self):
        base = build_base(_small_1d_spec(), _rng())
        with pytest.raises(ValueError, match="frozen"):
            merge_combined([("identity", base), ("gaf", base)],
                           {"identity": 8, "gaf": 8}, ClassifierSpec((8, 4)), _rng())


def _frozen_base(spec, seed):
    return freeze_base(build_base(spec, _rng(seed)))


class TestMergeCombined:
    def test_default_width_table_concatenates_to_240(self):
        bases = [
            ("identity", _frozen_base(_small_1d_spec(), 1)),
            ("scattering", _frozen_base(_small_1d_spec(), 2)),
            ("recurrence", _frozen_base(_small_2d_spec(), 3)),
            ("gaf", _frozen_base(_small_2d_spec(), 4)),
        ]
        merged = merge_combined(bases, DEFAULT_BRANCH_WIDTHS, ClassifierSpec((128, 6)), _rng(5))
        assert merged.group.feature_dim == 240
        assert DEFAULT_BRANCH_WIDTHS == {"identity": 96, "scattering": 64,
                                         "recurrence": 48, "gaf": 32}

    def test_same_base_twice_doubles_branch_width(self):
        base = _frozen_base(_small_1d_spec(), 6)
        merged = merge_combined([("identity", base), ("identity", base)],
                                {"identity": 16}, ClassifierSpec((8, 4)), _rng(7))
        assert merged.group.feature_dim == 32

    def test_missing_width_entry_rejected(self):
        bases = [("identity", _frozen_base(_small_1d_spec(), 8)),
                 ("gaf", _frozen_base(_small_2d_spec(), 9))]
        with pytest.raises(KeyError, match="gaf"):
            merge_combined(bases, {"identity": 16}, ClassifierSpec((8, 4)), _rng())

    def test_requires_at_least_two_bases(self):
        with pytest.raises(ValueError, match="at least 2"):
            merge_combined([("identity", _frozen_base(_small_1d_spec(), 10))],
                           {"identity": 8}, ClassifierSpec((8, 4)), _rng())

    def test_forward_consumes_per_kind_inputs(self):
        bases = [("identity", _frozen_base(_small_1d_spec(), 11)),
                 ("gaf", _frozen_base(_small_2d_spec(), 12))]
        merged = merge_combined(bases, {"identity": 8, "gaf": 8},
                                ClassifierSpec((8, 4)), _rng(13))
        rng = _rng(14)
        out = merged.forward({"identity": rng.normal(size=(5, 3, 32)),
                              "gaf": rng.normal(size=(5, 2, 16, 16))})
        assert out.shape == (5, 4)
        assert np.allclose(out.data.sum(axis=1), 1.0)

    def test_order_independent_up_to_classifier_permutation(self):
        bases = {
            "identity": _frozen_base(_small_1d_spec(), 15),
            "gaf": _frozen_base(_small_2d_spec(), 16),
        }
        widths = {"identity": 8, "gaf": 16}
        merged = merge_combined([("identity", bases["identity"]), ("gaf", bases["gaf"])],
                                widths, ClassifierSpec((8, 4)), _rng(17))

        # same branches listed in the opposite order, with the classifier's
        # first dense rows permuted to match the swapped concat segments
        swapped_classifier = Classifier(24, ClassifierSpec((8, 4)), _rng(0))
        perm = np.concatenate([np.arange(8, 24), np.arange(0, 8)])
        layers = merged.classifier.layers
        swapped_classifier.layers[0].weight.data = layers[0].weight.data[perm].copy()
        swapped_classifier.layers[0].bias.data = layers[0].bias.data.copy()
        for mine, theirs in zip(swapped_classifier.layers[1:], layers[1:]):
            mine.weight.data = theirs.weight.data.copy()
            mine.bias.data = theirs.bias.data.copy()
        swapped = MergedNetwork(BranchGroup(list(reversed(merged.group.branches))),
                                swapped_classifier)

        rng = _rng(18)
        inputs = {"identity": rng.normal(size=(4, 3, 32)),
                  "gaf": rng.normal(size=(4, 2, 16, 16))}
        assert np.allclose(merged.forward(inputs).data, swapped.forward(inputs).data,
                           atol=1e-12)


class TestMergePair:
    def test_published_stage_widths_concatenate_to_256(self):
        prev = ("identity", _frozen_base(_small_1d_spec(), 20))
        new = ("scattering", _frozen_base(_small_1d_spec(), 21))
        merged = merge_pair(prev, new, *DEFAULT_PAIR_WIDTHS, ClassifierSpec((128, 6)), _rng(22))
        assert DEFAULT_PAIR_WIDTHS == (144, 112)
        assert merged.group.feature_dim == 256

    def test_merging_a_base_with_itself_is_structural(self):
        base = _frozen_base(_small_1d_spec(), 23)
        merged = merge_pair(("identity", base), ("identity", base), 8, 8,
                            ClassifierSpec((8, 4)), _rng(24))
        assert merged.group.feature_dim == 16

    def test_trainable_census_is_two_denses_plus_classifier(self):
        prev = ("identity", _frozen_base(_small_1d_spec(), 25))
        new = ("gaf", _frozen_base(_small_2d_spec(), 26))
        cspec = ClassifierSpec((8, 4))
        merged = merge_pair(prev, new, 8, 8, cspec, _rng(27))
        trainable, total = count_parameters(merged)
        f1 = prev[1].feature_dim
        f2 = new[1].feature_dim
        expected = (f1 * 8 + 8) + (f2 * 8 + 8) + (16 * 8 + 8) + (8 * 4 + 4)
        assert trainable == expected
        assert total > trainable

    def test_unfrozen_previous_merged_network_rejected(self):
        prev = merge_pair(("identity", _frozen_base(_small_1d_spec(), 28)),
                          ("scattering", _frozen_base(_small_1d_spec(), 29)),
                          8, 8, ClassifierSpec((8, 4)), _rng(30))
        new = ("gaf", _frozen_base(_small_2d_spec(), 31))
        with pytest.raises(ValueError, match="frozen"):
            merge_pair(prev, new, 8, 8, ClassifierSpec((8, 4)), _rng(32))

    def test_chained_merge_consumes_previous_extractor(self):
        prev = merge_pair(("identity", _frozen_base(_small_1d_spec(), 33)),
                          ("scattering", _frozen_base(_small_1d_spec(), 34)),
                          8, 8, ClassifierSpec((8, 4)), _rng(35))
        freeze_network(prev)
        merged = merge_pair(prev, ("gaf", _frozen_base(_small_2d_spec(), 36)),
                            12, 8, ClassifierSpec((8, 4)), _rng(37))
        assert merged.group.feature_dim == 20
        assert merged.branch_kinds() == ["identity", "scattering", "gaf"]
        rng = _rng(38)
        out = merged.forward({
            "identity": rng.normal(size=(3, 3, 32)),
            "scattering": rng.normal(size=(3, 3, 32)),
            "gaf": rng.normal(size=(3, 2, 16, 16)),
        })
        assert out.shape == (3, 4)


class TestParameterCensus:
    def _uci_bases(self):
        return {
            "identity": _frozen_base(default_1d_spec(9, 128), 40),
            "scattering": _frozen_base(default_1d_spec(9, 338), 41),
            "recurrence": _frozen_base(default_2d_spec(9, 128), 42),
            "gaf": _frozen_base(default_2d_spec(9, 128), 43),
        }

    def test_two_stage_merge_trains_a_small_fraction(self):
        bases = self._uci_bases()
        merged = merge_combined(sorted(bases.items()), DEFAULT_BRANCH_WIDTHS,
                                ClassifierSpec((128, 6)), _rng(44))
        trainable, total = count_parameters(merged)
        assert trainable / total < 0.1

    def test_every_sequential_stage_trains_a_small_fraction(self):
        bases = self._uci_bases()
        order = ["identity", "scattering", "recurrence", "gaf"]
        previous = (order[0], bases[order[0]])
        for kind in order[1:]:
            if isinstance(previous, MergedNetwork):
                freeze_network(previous)
            merged = merge_pair(previous, (kind, bases[kind]), *DEFAULT_PAIR_WIDTHS,
                                ClassifierSpec((128, 6)), _rng(45))
            trainable, total = count_parameters(merged)
            assert trainable / total < 0.1, f"stage adding {kind}: {trainable / total:.3f}"
            previous = merged


class TestWidthAllocation:
    def test_budget_is_hit_exactly_in_multiples(self):
        widths = allocate_widths({"a": 0.9, "b": 0.8, "c": 0.5, "d": 0.3},
                                 total=240, multiple=16, floor=16)
        assert sum(widths.values()) == 240
        assert all(w % 16 == 0 and w >= 16 for w in widths.values())
        assert widths["a"] >= widths["b"] >= widths["c"] >= widths["d"]

    def test_extreme_skew_respects_floor(self):
        widths = allocate_widths({"a": 1.0, "b": 1e-9}, total=64, multiple=16, floor=16)
        assert widths == {"a": 48, "b": 16}

    def test_equal_scores_split_evenly(self):
        widths = allocate_widths({"a": 0.5, "b": 0.5}, total=64, multiple=16, floor=16)
        assert widths == {"a": 32, "b": 32}

    def test_insufficient_budget_rejected(self):
        with pytest.raises(ValueError):
            allocate_widths({"a": 1.0, "b": 1.0}, total=16, multiple=16, floor=16)


class TestSerialization:
    def _trained_network(self):
        rng = _rng(50)
        net = attach_classifier(build_base(_small_1d_spec(), rng),
                                ClassifierSpec((8, 4)), rng)
        net.forward(rng.normal(size=(6, 3, 32)), tape=None, mode="train")
        return net

    def test_round_trip_is_bit_exact(self):
        net = self._trained_network()
        blob = serialize_network(net, extra={"note": 1})
        back, extra = deserialize_network(blob)
        assert extra == {"note": 1}
        originals = dict(net.named_parameters())
        for name, p in back.named_parameters():
            assert p.data.tobytes() == originals[name].data.tobytes(), name
            assert p.trainable == originals[name].trainable
        assert serialize_network(back, extra={"note": 1}) == blob

    def test_forward_identical_after_round_trip(self):
        net = self._trained_network()
        back, _ = deserialize_network(serialize_network(net))
        x = _rng(51).normal(size=(3, 3, 32))
        assert np.array_equal(net.forward(x).data, back.forward(x).data)

    def test_merged_network_round_trips(self):
        merged = merge_pair(("identity", _frozen_base(_small_1d_spec(), 52)),
                            ("gaf", _frozen_base(_small_2d_spec(), 53)),
                            8, 8, ClassifierSpec((8, 4)), _rng(54))
        back, _ = deserialize_network(serialize_network(merged))
        rng = _rng(55)
        inputs = {"identity": rng.normal(size=(2, 3, 32)),
                  "gaf": rng.normal(size=(2, 2, 16, 16))}
        assert np.array_equal(merged.forward(inputs).data, back.forward(inputs).data)
        assert is_fully_frozen(back.group.branches[0][0])

    def test_bad_magic_rejected(self):
        blob = serialize_network(self._trained_network())
        with pytest.raises(ModelFormatError, match="magic"):
            deserialize_network(b"XXXX" + blob[4:])

    def test_bad_version_rejected(self):
        blob = bytearray(serialize_network(self._trained_network()))
        blob[4] = 99
        with pytest.raises(ModelFormatError, match="version"):
            deserialize_network(bytes(blob))

    def test_truncated_payload_rejected(self):
        blob = serialize_network(self._trained_network())
        with pytest.raises(ModelFormatError, match="truncated"):
            deserialize_network(blob[:-8])

    def test_tensor_hashes_cover_all_parameters(self):
        net = self._trained_network()
        hashes = tensor_hashes(net)
        assert len(hashes) == sum(1 for _ in net.named_parameters())
        assert all(len(h) == 64 for h in hashes.values())
